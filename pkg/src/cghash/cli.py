"""Command-line entry point: ``cghash <subcommand> [flags]``.

Every subcommand works inside ``<runs-dir>/<run>/``. Settings come from the
defaults, then ``--config`` (or the config echoed by an earlier command in
the same run), then ``--set key=value`` pairs and the subcommand's own flags.
The resolved config is written back to the run directory before the stage
runs.

Failures print one line to stderr::

    error<TAB><exit code><TAB><error kind><TAB><message>

with exit code 2 for bad arguments, 3 for missing or corrupt inputs and 4
for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import RunConfig
from .errors import CGHError, ConfigError

SUBCOMMANDS = ("ingest", "split", "mf", "train", "encode", "recommend", "mine", "eval", "bench", "demo")


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--seed", type=int, help="seed for every random stage")
    p.add_argument("--threads", type=int, help="worker threads for ALS and evaluation")
    p.add_argument("--run", default="default", help="run name (default: %(default)s)")
    p.add_argument("--runs-dir", default="runs", help="parent of run directories (default: %(default)s)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="cghash", description="Collaborative generative hashing pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    p = add("ingest", "load ratings and raw term counts, select TF-IDF features")
    p.add_argument("--ratings", required=True, metavar="PATH")
    p.add_argument("--user-content", required=True, metavar="PATH")
    p.add_argument("--item-content", required=True, metavar="PATH")
    p.add_argument("--user-dim", type=int, dest="data.user_dim")
    p.add_argument("--item-dim", type=int, dest="data.item_dim")

    p = add("split", "partition ratings into warm train/test and cold sets")
    p.add_argument("--cold-threshold", type=int, dest="data.cold_threshold")
    p.add_argument("--test-frac", type=float, dest="data.warm_test_frac")

    p = add("mf", "pre-train latent factors by weighted ALS")
    p.add_argument("--r", type=int, dest="mf.r")
    p.add_argument("--iters", type=int, dest="mf.iters")

    p = add("train", "train encoders and codebooks")
    p.add_argument("--mode", choices=("warm", "cold-item", "cold-user", "full"), dest="train.mode")
    p.add_argument("--epochs", type=int, dest="train.epochs")
    p.add_argument("--lr", type=float, dest="train.lr")

    add("encode", "write MAP codes for every user and item")

    p = add("recommend", "top-k items for a user by Hamming distance")
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--k", type=int, default=10)

    p = add("mine", "top-k potential users for an item")
    p.add_argument("--item", type=int, required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--policy", choices=("mirror", "constrained"), dest="mine.policy")
    p.add_argument("--metric", choices=("euclidean", "cosine"), dest="mine.metric")

    p = add("eval", "Accuracy@k and MRR reports")
    p.add_argument("--setting", choices=("warm", "cold-item", "cold-user", "marketing", "all"), default="all")
    p.add_argument("--scorer", choices=("hamming", "real", "random"), dest="eval.scorer")
    p.add_argument("--negatives", type=int, dest="eval.n_negatives")
    p.add_argument("--ks", dest="eval.ks", metavar="K,K,...")

    p = add("bench", "time Hamming vs real-valued top-k ranking")
    p.add_argument("--sizes", dest="bench.sizes", metavar="N,N,...")
    p.add_argument("--k", type=int, dest="bench.k")
    p.add_argument("--r", type=int, dest="bench.r")
    p.add_argument("--trials", type=int, dest="bench.trials")

    add("demo", "planted data through the whole pipeline in every mode")
    return parser


def resolve_config(args, run: pipeline.RunDir, base: RunConfig | None = None) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    elif base is not None:
        cfg = base
    elif run.config.exists():
        cfg = RunConfig.load(run.config)
    else:
        cfg = RunConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    overrides.update({k: v for k, v in vars(args).items() if "." in k and v is not None})
    overrides["seed"] = args.seed
    overrides["threads"] = args.threads
    return cfg.updated(overrides)


def _run(args, out) -> None:
    run = pipeline.RunDir(f"{args.runs_dir}/{args.run}")
    base = pipeline.demo_config() if args.command == "demo" and not args.config else None
    cfg = resolve_config(args, run, base)
    run.save_config(cfg)
    logging.getLogger(__name__).info("resolved config:\n%s", cfg.dumps())
    cmd = args.command
    if cmd == "ingest":
        info = pipeline.ingest(run, cfg, args.ratings, args.user_content, args.item_content)
        print(" ".join(f"{k}={v}" for k, v in info.items()), file=out)
    elif cmd == "split":
        ds = pipeline.split(run, cfg)
        print(" ".join(f"{k}={len(v)}" for k, v in ds.parts().items()), file=out)
    elif cmd == "mf":
        f = pipeline.mf(run, cfg)
        print(f"factors r={f.r} users={f.P.shape[0]} items={f.Q.shape[0]}", file=out)
    elif cmd == "train":
        trained = pipeline.train(run, cfg)
        last = trained.curve[-1].total if trained.curve else float("nan")
        print(f"trained mode={cfg['train.mode']} epochs={len(trained.curve)} final_total={last:.6f}", file=out)
    elif cmd == "encode":
        B, D = pipeline.encode(run, cfg)
        print(f"codes users={B.n} items={D.n} r={B.r}", file=out)
    elif cmd == "recommend":
        out.write(pipeline.ranked_csv(pipeline.recommend(run, cfg, args.user, args.k), "item_id"))
    elif cmd == "mine":
        out.write(pipeline.mine(run, cfg, args.item, args.k).to_csv())
    elif cmd == "eval":
        if args.setting == "all":
            settings, marketing = ("warm", "cold-item", "cold-user"), True
        elif args.setting == "marketing":
            settings, marketing = (), True
        else:
            settings, marketing = (args.setting,), False
        for rep in pipeline.evaluate_run(run, cfg, settings, marketing):
            print(rep.summary(), file=out)
    elif cmd == "bench":
        out.write(pipeline.bench(run, cfg).to_csv())
    elif cmd == "demo":
        pipeline.demo(run, cfg, log=lambda s: print(s, file=out))


def _fail(code, kind, message) -> int:
    message = " ".join(str(message).split())
    print(f"error\t{code}\t{kind}\t{message}", file=sys.stderr)
    return code


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except _ArgumentError as exc:
        return _fail(2, "BadArguments", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _run(args, out)
    except CGHError as exc:
        return _fail(exc.exit_code, type(exc).__name__, exc)
    except OSError as exc:
        return _fail(3, "InputError", f"{exc.filename or ''}: {exc.strerror or exc}")
    except ValueError as exc:
        return _fail(2, "BadArguments", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
