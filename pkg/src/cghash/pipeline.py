"""Pipeline stages over a run directory.

Layout of ``runs/<name>/``::

    config                      resolved settings of the last command
    data/ratings.tsv            ingested ratings
    data/{user,item}_content.tsv
    split/                      four rating files plus ids.tsv
    factors/{P,Q}.bin
    checkpoint                  trained model tensors
    inputs                      optional: relative path of the run holding data/split/factors
    codes_user.bin, codes_item.bin
    reports/*.csv

Every stage reads its inputs from the run directory and writes its outputs
back, so stages can be driven one at a time from the command line or all at
once by :func:`demo`.
"""
from __future__ import annotations

import logging
import time
from pathlib import Path

from .codes import load_codes, save_codes
from .config import PLANTED_OVERRIDES, RunConfig
from .data import (
    load_content,
    load_content_counts,
    load_ratings,
    load_split,
    save_content,
    save_ratings,
    save_split,
    split_dataset,
    tfidf_select,
)
from .errors import InputError, UnknownEntity
from .evaluation import (
    SETTINGS,
    EvalProtocol,
    EvalReport,
    RandomScorer,
    eval_marketing,
    evaluate,
    evaluate_setting,
    reports_to_csv,
)
from .index import HammingIndex, bench as run_bench, top_k
from .marketing import PotentialUserQuery, mine_potential_users
from .mf import factorize, load_factors, save_factors
from .model import encode_all
from .synthetic import make_planted
from .training import curve_to_csv, load_trained, save_trained, train as run_train

_log = logging.getLogger(__name__)

DEMO_MODES = ("warm", "cold-item", "cold-user")


class RunDir:
    """Paths of one run. ``inputs`` (default: the run itself) holds data, split and factors."""

    def __init__(self, root, inputs=None):
        self.root = Path(root)
        pointer = self.root / "inputs"
        if inputs is None and pointer.is_file():
            inputs = self.root / pointer.read_text(encoding="utf-8").strip()
        self.inputs = Path(inputs) if inputs is not None else self.root

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    @property
    def config(self):
        return self.path("config")

    @property
    def data(self):
        return self.inputs / "data"

    @property
    def split(self):
        return self.inputs / "split"

    @property
    def factors(self):
        return self.inputs / "factors"

    @property
    def checkpoint(self):
        return self.path("checkpoint")

    def codes(self, side):
        return self.path(f"codes_{side}.bin")

    def report(self, name):
        d = self.path("reports")
        d.mkdir(parents=True, exist_ok=True)
        return d / name

    def require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise InputError(f"{path} not found; run `{stage}` first")
        return path

    def save_config(self, cfg: RunConfig):
        self.root.mkdir(parents=True, exist_ok=True)
        cfg.save(self.config)

    # ---- loaders shared by the later stages

    def load_content(self):
        uc = load_content(self.require(self.data / "user_content.tsv", "ingest"))
        ic = load_content(self.require(self.data / "item_content.tsv", "ingest"))
        return uc, ic

    def load_split(self):
        self.require(self.split / "ids.tsv", "split")
        return load_split(self.split)

    def load_factors(self):
        self.require(self.factors / "P.bin", "mf")
        return load_factors(self.factors)

    def load_trained(self, cfg: RunConfig):
        return load_trained(self.require(self.checkpoint, "train"), self.load_factors(), cfg.train_config())

    def load_codes(self):
        return (load_codes(self.require(self.codes("user"), "encode")),
                load_codes(self.require(self.codes("item"), "encode")))


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


# ---------------------------------------------------------------- stages


def ingest(run: RunDir, cfg: RunConfig, ratings_path, user_content_path, item_content_path) -> dict:
    """Load ratings, TF-IDF-select both content sides and align entity counts."""
    ratings = load_ratings(ratings_path)
    uc = tfidf_select(load_content_counts(user_content_path), cfg["data.user_dim"], "user")
    ic = tfidf_select(load_content_counts(item_content_path), cfg["data.item_dim"], "item")
    n_users = max(ratings.n_users, uc.n)
    n_items = max(ratings.n_items, ic.n)
    ratings = ratings.with_shape(n_users, n_items)
    run.data.mkdir(parents=True, exist_ok=True)
    save_ratings(ratings, run.data / "ratings.tsv")
    _write_dims(run, n_users, n_items)
    save_content(uc.with_rows(n_users), run.data / "user_content.tsv")
    save_content(ic.with_rows(n_items), run.data / "item_content.tsv")
    return {"ratings": len(ratings), "n_users": n_users, "n_items": n_items,
            "user_dim": uc.dim, "item_dim": ic.dim}


def _write_dims(run: RunDir, n_users, n_items):
    _write(run.data / "shape.tsv", f"n_users\t{n_users}\nn_items\t{n_items}\n")


def _load_ratings(run: RunDir):
    ratings = load_ratings(run.require(run.data / "ratings.tsv", "ingest"))
    shape = run.data / "shape.tsv"
    if shape.exists():
        try:
            dims = dict(line.split("\t") for line in shape.read_text(encoding="utf-8").splitlines())
            ratings = ratings.with_shape(int(dims["n_users"]), int(dims["n_items"]))
        except (ValueError, KeyError):
            raise InputError(f"{shape}: malformed") from None
    return ratings


def split(run: RunDir, cfg: RunConfig):
    ds = split_dataset(_load_ratings(run), cfg["data.cold_threshold"], cfg["data.warm_test_frac"], cfg["seed"])
    save_split(ds, run.split)
    return ds


def mf(run: RunDir, cfg: RunConfig):
    ds = run.load_split()
    history = []
    factors = factorize(ds.warm_train, cfg.mf_config(), threads=cfg["threads"], history=history)
    save_factors(factors, run.factors)
    _write(run.report("mf_objective.csv"),
           "sweep,objective\n" + "".join(f"{n},{v!r}\n" for n, v in enumerate(history)))
    return factors


def train(run: RunDir, cfg: RunConfig):
    ds = run.load_split()
    uc, ic = run.load_content()
    trained = run_train(ds, uc, ic, run.load_factors(), cfg.train_config())
    save_trained(trained, run.checkpoint)
    _write(run.report("train_curve.csv"), curve_to_csv(trained.curve))
    return trained


def encode(run: RunDir, cfg: RunConfig):
    trained = run.load_trained(cfg)
    uc, ic = run.load_content()
    f = trained.factors
    B = encode_all(trained.model, "user", uc, f.P, trained.cold_user_ids)
    D = encode_all(trained.model, "item", ic, f.Q, trained.cold_item_ids)
    save_codes(B, run.codes("user"))
    save_codes(D, run.codes("item"))
    return B, D


def recommend(run: RunDir, cfg: RunConfig, user: int, k: int):
    """Top-k items for ``user`` by Hamming distance between codes."""
    B, D = run.load_codes()
    if not 0 <= user < B.n:
        raise UnknownEntity(f"user {user} out of range [0, {B.n})")
    return top_k(HammingIndex(D), B.words[user], k)


def ranked_csv(ranked, id_name) -> str:
    lines = [f"rank,{id_name},distance"]
    lines += [f"{n},{i},{int(s)}" for n, (i, s) in enumerate(zip(ranked.ids.tolist(), ranked.scores.tolist()), 1)]
    return "\n".join(lines) + "\n"


def mine(run: RunDir, cfg: RunConfig, item: int, k: int):
    trained = run.load_trained(cfg)
    uc, ic = run.load_content()
    if not 0 <= item < ic.n:
        raise UnknownEntity(f"item {item} out of range [0, {ic.n})")
    user_codes = run.load_codes()[0] if cfg["mine.policy"] == "constrained" else None
    query = PotentialUserQuery(ic.dense([item])[0], k, trained.factors.Q[item],
                               policy=cfg["mine.policy"], metric=cfg["mine.metric"])
    return mine_potential_users(query, trained, uc, user_codes)


def evaluate_run(run: RunDir, cfg: RunConfig, settings=("warm", "cold-item", "cold-user"),
                 marketing=True, report_name="eval.csv") -> list[EvalReport]:
    """Accuracy@k and MRR for the requested settings; CSV written to reports/."""
    trained = run.load_trained(cfg)
    ds = run.load_split()
    uc, ic = run.load_content()
    codes = run.load_codes() if run.codes("user").exists() and run.codes("item").exists() else None
    common = dict(n_negatives=cfg["eval.n_negatives"], ks=cfg["eval.ks"], seed=cfg["seed"], threads=cfg["threads"])
    reports = []
    for setting in settings:
        if len(getattr(ds, SETTINGS[setting][0])) == 0:
            _log.warning("setting %s has no test ratings; skipped", setting)
            continue
        scorer = cfg["eval.scorer"]
        if scorer == "random":
            attr, side = SETTINGS[setting]
            protocol = EvalProtocol(getattr(ds, attr), ds.all_ratings(), side, common["n_negatives"],
                                    tuple(common["ks"]), common["seed"], setting=f"{setting}/random")
            reports.append(evaluate(protocol, RandomScorer(), common["threads"]))
        else:
            reports.append(evaluate_setting(trained, ds, uc, ic, setting, scorer,
                                            codes=codes if scorer == "hamming" else None, **common))
    if marketing:
        reports += eval_marketing(trained, ds, uc, ic, policy=cfg["mine.policy"], metric=cfg["mine.metric"],
                                  **common)
    _write(run.report(report_name), reports_to_csv(reports))
    return reports


def bench(run: RunDir, cfg: RunConfig):
    res = run_bench(cfg["bench.sizes"], cfg["bench.r"], cfg["bench.k"], cfg["bench.trials"], cfg["seed"])
    _write(run.report("bench.csv"), res.to_csv())
    return res


# ---------------------------------------------------------------- demo


def demo_config(overrides: dict | None = None) -> RunConfig:
    return RunConfig(PLANTED_OVERRIDES).updated(overrides or {})


def write_planted(run: RunDir, cfg: RunConfig):
    """Generate planted data and store it as an ingested run would."""
    pl = make_planted(**cfg.planted_kwargs())
    run.data.mkdir(parents=True, exist_ok=True)
    save_ratings(pl.ratings, run.data / "ratings.tsv")
    _write_dims(run, pl.ratings.n_users, pl.ratings.n_items)
    save_content(pl.user_content, run.data / "user_content.tsv")
    save_content(pl.item_content, run.data / "item_content.tsv")
    return pl


def demo(run: RunDir, cfg: RunConfig, modes=DEMO_MODES, marketing_mode="full", log=print) -> dict:
    """Planted data through every stage, once per training mode.

    Each mode trains its own model under ``modes/<mode>/`` and is evaluated
    on the matching setting; the potential-user (marketing) evaluation uses
    a model trained with both content sides on. Reports land in the shared
    ``reports/`` directory with the mode as suffix.
    """
    t0 = time.perf_counter()
    run.save_config(cfg)
    write_planted(run, cfg)
    ds = split(run, cfg)
    log(f"split: {', '.join(f'{k}={len(v)}' for k, v in ds.parts().items())}")
    mf(run, cfg)
    results = {}
    for mode in (*modes, marketing_mode):
        mcfg = cfg.updated({"train.mode": mode})
        sub = RunDir(run.path("modes", mode), inputs=run.root)
        sub.save_config(mcfg)
        _write(sub.path("inputs"), "../..\n")
        trained = train(sub, mcfg)
        encode(sub, mcfg)
        _write(run.report(f"train_curve_{mode}.csv"), curve_to_csv(trained.curve))
        if mode == marketing_mode:
            reports = evaluate_run(sub, mcfg, settings=(), marketing=True)
        else:
            reports = evaluate_run(sub, mcfg, settings=(mode,), marketing=False)
        _write(run.report(f"eval_{mode}.csv"), reports_to_csv(reports))
        for rep in reports:
            log(rep.summary())
        results[mode] = {"trained": trained, "reports": reports}
    log(f"demo finished in {time.perf_counter() - t0:.1f}s")
    return results

