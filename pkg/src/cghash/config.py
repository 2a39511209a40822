"""Flat ``key=value`` run configuration shared by every pipeline stage.

A config file holds one ``key = value`` per line; ``#`` starts a comment.
Keys are dotted by stage (``mf.r``, ``train.lr`` ...). Values are parsed to
the type of the key's default; tuples are comma separated. Unknown keys are
rejected.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .errors import ConfigError, InputError
from .evaluation import DEFAULT_KS
from .index import BENCH_SIZES
from .mf import MfConfig
from .training import TrainConfig

_TRAIN_KEYS = [f.name for f in fields(TrainConfig) if f.name != "seed"]


def _defaults() -> dict:
    d = {
        "seed": 0,
        "threads": 1,
        "data.cold_threshold": 5,
        "data.warm_test_frac": 0.2,
        "data.user_dim": 8000,
        "data.item_dim": 8000,
    }
    mf = MfConfig()
    for k in ("r", "a", "b", "reg", "iters"):
        d[f"mf.{k}"] = getattr(mf, k)
    tc = TrainConfig()
    for k in _TRAIN_KEYS:
        d[f"train.{k}"] = getattr(tc, k)
    d.update({
        "eval.n_negatives": 1000,
        "eval.ks": DEFAULT_KS,
        "eval.scorer": "hamming",
        "mine.policy": "mirror",
        "mine.metric": "euclidean",
        "bench.sizes": BENCH_SIZES,
        "bench.r": 50,
        "bench.k": 10,
        "bench.trials": 5,
        "planted.n_users": 1200,
        "planted.n_items": 1200,
        "planted.d_user": 64,
        "planted.d_item": 64,
        "planted.threshold": 0.7,
        "planted.noise": 0.1,
        "planted.codebook_max": 0.3,
        "planted.cold_user_frac": 0.1,
        "planted.cold_item_frac": 0.1,
    })
    return d


DEFAULTS = _defaults()

# Settings the demo applies on top of the defaults: a desk-sized encoder and
# code length for the planted data so all three modes finish in seconds.
PLANTED_OVERRIDES = {
    "mf.r": 32,
    "mf.iters": 10,
    "train.hidden": (128,),
    "train.epochs": 20,
    "train.corruption": 0.1,
    "eval.ks": (1, 5, 10, 20, 50, 100, 200),
}


def parse_value(key, text):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if not isinstance(text, str):
        return tuple(text) if isinstance(default, tuple) else text
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.split(",") if x.strip())
        return type(default)(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Resolved settings: defaults, then a config file, then overrides."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.values[k] = parse_value(k, v)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def updated(self, overrides: dict) -> RunConfig:
        merged = dict(self.values)
        for k, v in overrides.items():
            if v is not None:
                merged[k] = parse_value(k, v)
        return RunConfig(merged)

    @classmethod
    def parse(cls, text: str, origin="<config>") -> RunConfig:
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{origin}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = parse_value(key, val)
        return cls(values)

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, str(path))

    def dumps(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.values.items())

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    # ---- per-stage views

    def mf_config(self) -> MfConfig:
        cfg = MfConfig(r=self["mf.r"], a=self["mf.a"], b=self["mf.b"], reg=self["mf.reg"],
                       iters=self["mf.iters"], seed=self["seed"])
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(seed=self["seed"], **{k: self[f"train.{k}"] for k in _TRAIN_KEYS})
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def planted_kwargs(self) -> dict:
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("planted.")}
        return dict(kw, r=self["mf.r"], cold_threshold=self["data.cold_threshold"], seed=self["seed"])
