import io
import subprocess
import sys

import pytest

from cghash import pipeline
from cghash.cli import main
from cghash.config import DEFAULTS, PLANTED_OVERRIDES, RunConfig, parse_value
from cghash.errors import ConfigError, InputError

SMALL = [
    "--set", "planted.n_users=300", "--set", "planted.n_items=300",
    "--set", "planted.d_user=16", "--set", "planted.d_item=16",
    "--set", "mf.r=16", "--set", "mf.iters=3",
    "--set", "train.hidden=16", "--set", "train.epochs=2",
    "--set", "eval.n_negatives=100", "--set", "eval.ks=1,10,50",
]


def run_cli(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """A small planted run taken through split, mf, train and encode from the command line."""
    root = tmp_path_factory.mktemp("runs")
    cfg = pipeline.demo_config().updated(dict(a.split("=", 1) for a in SMALL[1::2]))
    run = pipeline.RunDir(root / "s")
    run.save_config(cfg)
    pipeline.write_planted(run, cfg)
    common = ["--runs-dir", root, "--run", "s"]
    for stage in ("split", "mf", "train", "encode"):
        code, _ = run_cli(stage, *common)
        assert code == 0, stage
    return root, common


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig({"mf.r": 12, "train.hidden": (64, 32), "train.input_scaling": False})
        back = RunConfig.parse(cfg.dumps())
        assert back == cfg and back.dumps() == cfg.dumps()

    def test_every_default_listed(self):
        keys = [line.split("=")[0] for line in RunConfig().dumps().splitlines()]
        assert keys == list(DEFAULTS)

    def test_typed_values(self):
        assert parse_value("mf.r", " 7 ") == 7
        assert parse_value("train.lr", "1e-3") == 1e-3
        assert parse_value("train.hidden", "8,4") == (8, 4)
        assert parse_value("train.input_scaling", "no") is False

    @pytest.mark.parametrize("key,val", [("nope", "1"), ("mf.r", "x"), ("train.input_scaling", "maybe")])
    def test_rejects(self, key, val):
        with pytest.raises(ConfigError):
            parse_value(key, val)

    def test_comments_and_errors(self):
        cfg = RunConfig.parse("# header\nmf.r = 9  # trailing\n\n")
        assert cfg["mf.r"] == 9
        with pytest.raises(ConfigError):
            RunConfig.parse("mf.r 9")

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            RunConfig.load(tmp_path / "missing")

    def test_stage_views_validate(self):
        with pytest.raises(ConfigError):
            RunConfig({"mf.b": 5.0}).mf_config()
        with pytest.raises(ConfigError):
            RunConfig({"train.mode": "sideways"}).train_config()
        assert RunConfig({"seed": 3}).train_config().seed == 3

    def test_planted_overrides_are_valid_keys(self):
        cfg = RunConfig(PLANTED_OVERRIDES)
        assert cfg["train.hidden"] == (128,)


class TestCommands:
    def test_recommend(self, staged):
        root, common = staged
        code, out = run_cli("recommend", "--user", 7, "--k", 10, *common)
        lines = out.splitlines()
        assert code == 0 and lines[0] == "rank,item_id,distance" and len(lines) == 11
        dists = [int(line.split(",")[2]) for line in lines[1:]]
        assert dists == sorted(dists)

    def test_mine(self, staged):
        root, common = staged
        code, out = run_cli("mine", "--item", 3, "--k", 100, *common)
        assert code == 0 and len(out.splitlines()) == 101
        code, out2 = run_cli("mine", "--item", 3, "--k", 100, "--policy", "constrained", *common)
        assert code == 0 and len(out2.splitlines()) == 101

    def test_eval_threads_identical(self, staged):
        root, common = staged
        assert run_cli("eval", "--threads", 1, *common)[0] == 0
        serial = (root / "s" / "reports" / "eval.csv").read_bytes()
        assert run_cli("eval", "--threads", 4, *common)[0] == 0
        assert (root / "s" / "reports" / "eval.csv").read_bytes() == serial

    def test_eval_random_scorer(self, staged):
        root, common = staged
        code, out = run_cli("eval", "--setting", "warm", "--scorer", "random", *common)
        assert code == 0 and out.startswith("warm/random:")

    def test_config_echo_reproduces(self, staged, tmp_path):
        root, common = staged
        src = root / "s"
        cfg_path = tmp_path / "echo.cfg"
        cfg_path.write_bytes((src / "config").read_bytes())
        # same data, fresh run directory driven only by the echoed config
        other = pipeline.RunDir(tmp_path / "runs" / "t")
        pipeline.write_planted(other, RunConfig.load(cfg_path))
        for stage in ("split", "mf", "train", "encode", "eval"):
            assert run_cli(stage, "--config", cfg_path, "--runs-dir", tmp_path / "runs", "--run", "t")[0] == 0
        run_cli("eval", *common, "--config", cfg_path)
        for rel in ("factors/P.bin", "checkpoint", "codes_item.bin", "reports/eval.csv"):
            assert (src / rel).read_bytes() == (tmp_path / "runs" / "t" / rel).read_bytes(), rel

    def test_bench(self, tmp_path):
        code, out = run_cli("bench", "--sizes", "1000,2000", "--trials", 1, "--runs-dir", tmp_path)
        lines = out.splitlines()
        assert code == 0 and lines[0] == "n,backend,k,r,median_seconds" and len(lines) == 5

    def test_ingest(self, tmp_path):
        (tmp_path / "r.tsv").write_text("0 0 1\n1 2 1\n2 1 1\n")
        (tmp_path / "u.tsv").write_text("0\tred\t2\n1\tblue\t1\n2\tred\t1\n")
        (tmp_path / "i.tsv").write_text("0\tx\t1\n1\ty\t3\n2\tx\t1\n2\tz\t2\n")
        code, out = run_cli("ingest", "--ratings", tmp_path / "r.tsv", "--user-content", tmp_path / "u.tsv",
                            "--item-content", tmp_path / "i.tsv", "--item-dim", 2, "--runs-dir", tmp_path / "runs")
        assert code == 0
        info = dict(kv.split("=") for kv in out.split())
        assert info == {"ratings": "3", "n_users": "3", "n_items": "3", "user_dim": "2", "item_dim": "2"}
        first = {p.name: p.read_bytes() for p in (tmp_path / "runs" / "default" / "data").iterdir()}
        run_cli("ingest", "--ratings", tmp_path / "r.tsv", "--user-content", tmp_path / "u.tsv",
                "--item-content", tmp_path / "i.tsv", "--item-dim", 2, "--runs-dir", tmp_path / "runs")
        assert first == {p.name: p.read_bytes() for p in (tmp_path / "runs" / "default" / "data").iterdir()}

    def test_demo_small(self, tmp_path):
        code, out = run_cli("demo", *SMALL, "--runs-dir", tmp_path)
        assert code == 0 and "demo finished" in out
        reports = tmp_path / "default" / "reports"
        for mode in ("warm", "cold-item", "cold-user", "full"):
            assert (reports / f"eval_{mode}.csv").exists()
            assert (reports / f"train_curve_{mode}.csv").exists()


class TestExitCodes:
    def _err(self, capsys):
        line = capsys.readouterr().err.strip().splitlines()[-1]
        return line.split("\t")

    def test_missing_artifact(self, tmp_path, capsys):
        assert run_cli("recommend", "--user", 0, "--runs-dir", tmp_path)[0] == 3
        head, code, kind, msg = self._err(capsys)
        assert head == "error" and code == "3" and kind == "InputError" and "encode" in msg

    def test_unknown_key(self, tmp_path, capsys):
        assert run_cli("split", "--set", "bogus=1", "--runs-dir", tmp_path)[0] == 2
        assert self._err(capsys)[2] == "ConfigError"

    def test_bad_subcommand(self, capsys):
        assert run_cli("frobnicate")[0] == 2
        assert self._err(capsys)[2] == "BadArguments"

    def test_missing_required_flag(self, capsys):
        assert run_cli("recommend")[0] == 2

    def test_unknown_user(self, staged, capsys):
        root, common = staged
        assert run_cli("recommend", "--user", 10_000, *common)[0] == 2
        assert self._err(capsys)[2] == "UnknownEntity"

    def test_unreadable_input(self, tmp_path, capsys):
        code, _ = run_cli("ingest", "--ratings", tmp_path / "none", "--user-content", tmp_path / "none",
                          "--item-content", tmp_path / "none", "--runs-dir", tmp_path)
        assert code == 3

    def test_divergence(self, staged, capsys):
        root, common = staged
        # a sibling run reading the shared data, split and factors
        (root / "d").mkdir(exist_ok=True)
        (root / "d" / "inputs").write_text("../s\n")
        code, _ = run_cli("train", "--mode", "full", "--set", "train.lam_item=1e308", "--config", root / "s" / "config",
                          "--runs-dir", root, "--run", "d")
        assert code == 4
        assert self._err(capsys)[2] == "NonFiniteLoss"

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "cghash", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "recommend" in res.stdout
