"""Joint training of encoders and codebooks on the MDL/MAP objective.

The minimized loss is the sum of

* ``sum_n C_n / 2 * (r_n - delta(b_u, d_i))^2`` over rating pairs,
* ``lam_s / 2 * sum_e |x_e - C_s b_e|^2`` per side,
* ``kl_weight * sum_e KL(q_e || rho_s)`` per side,
* ``reg_weight * sum |W|^2`` over the weight matrices being fit.

Codes are discrete in the forward pass (sampled or thresholded) and the
backward pass treats the binarization as the identity (straight-through).
``code_mode="relaxed"`` uses the probabilities themselves, which makes the
objective smooth and is what the gradient check runs on.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import ContentMatrix, DatasetSplit
from .errors import DimensionMismatch, DomainError, EmptyTrainingSet, LengthMismatch, NonFiniteLoss
from .mf import LatentFactors
from .model import SIDES, CGHModel, init_model, load_model, save_model, sigmoid

_log = logging.getLogger(__name__)

KL_EPS = 1e-7
MODES = ("warm", "cold-item", "cold-user", "full")
CODE_MODES = ("sample", "threshold", "relaxed")
LOSS_FIELDS = ("rating_loss", "recon_user", "recon_item", "kl_user", "kl_item", "regularizer")


def kl_bernoulli(q, rho) -> float:
    """KL divergence between factorized Bernoulli distributions, summed over bits."""
    q = np.asarray(q, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if q.shape[-1] != rho.shape[-1]:
        raise LengthMismatch("q and rho differ in length")
    if np.any((q <= 0) | (q >= 1)) or np.any((rho <= 0) | (rho >= 1)):
        raise DomainError(f"probabilities must lie strictly inside (0, 1); clamp with eps={KL_EPS}")
    return float(np.sum(q * np.log(q / rho) + (1 - q) * np.log((1 - q) / (1 - rho))))


@dataclass
class TrainConfig:
    mode: str = "warm"
    lam_user: float = 0.01
    lam_item: float = 0.01
    a: float = 1.0
    b: float = 0.2  # weight of each sampled zero; ~0.01 * (zeros per positive) / neg_per_pos at 1% density
    kl_weight: float = 0.01
    reg_weight: float = 1e-4
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 100
    corruption: float = 0.3
    neg_per_pos: int = 5
    code_mode: str = "threshold"
    factor_dropout: float = 0.5
    input_scaling: bool = True
    center_content: bool = True
    hidden: tuple = (512, 256)
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.code_mode not in CODE_MODES:
            raise ValueError(f"code_mode must be one of {CODE_MODES}")
        if not self.a > self.b > 0:
            raise ValueError("confidence weights need a > b > 0")
        if min(self.lam_user, self.lam_item, self.kl_weight, self.reg_weight) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 <= self.corruption < 1 or not 0 <= self.factor_dropout <= 1:
            raise ValueError("corruption must lie in [0, 1) and factor_dropout in [0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.neg_per_pos < 0:
            raise ValueError("batch_size >= 1, epochs >= 0, neg_per_pos >= 0 required")

    def content_active(self, side) -> bool:
        """Whether ``side``'s reconstruction and KL terms are on in this mode."""
        if self.mode == "warm":
            return False
        if self.mode == "cold-item":
            return side == "item"
        if self.mode == "cold-user":
            return side == "user"
        return True

    def weights(self):
        """Effective per-side loss weights after mode gating."""
        lam = {"user": self.lam_user, "item": self.lam_item}
        return {
            side: (lam[side], self.kl_weight) if self.content_active(side) else (0.0, 0.0)
            for side in SIDES
        }


@dataclass
class LossBreakdown:
    rating_loss: float = 0.0
    recon_user: float = 0.0
    recon_item: float = 0.0
    kl_user: float = 0.0
    kl_item: float = 0.0
    regularizer: float = 0.0

    @property
    def total(self) -> float:
        return sum(getattr(self, f) for f in LOSS_FIELDS)

    def __add__(self, other):
        return LossBreakdown(*(getattr(self, f) + getattr(other, f) for f in LOSS_FIELDS))

    def scaled(self, s):
        return LossBreakdown(*(getattr(self, f) * s for f in LOSS_FIELDS))


@dataclass
class Batch:
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    conf: np.ndarray

    @classmethod
    def from_pairs(cls, users, items, ratings, a, b):
        ratings = np.asarray(ratings, dtype=np.float64)
        return cls(np.asarray(users, np.int64), np.asarray(items, np.int64), ratings,
                   np.where(ratings > 0, a, b))

    @classmethod
    def full(cls, R, a, b):
        """Every (user, item) cell of a small dense 0/1 matrix."""
        R = np.asarray(R)
        u, i = np.indices(R.shape)
        return cls.from_pairs(u.ravel(), i.ravel(), R.ravel(), a, b)


class TrainingData:
    """Content rows and frozen latent factors the encoders read from."""

    def __init__(self, user_content, item_content, factors: LatentFactors):
        self.content = {"user": user_content, "item": item_content}
        self.factors = {"user": np.asarray(factors.P, np.float64), "item": np.asarray(factors.Q, np.float64)}
        for side in SIDES:
            c = self.content[side]
            n = c.n if isinstance(c, ContentMatrix) else np.shape(c)[0]
            if n != self.factors[side].shape[0]:
                raise DimensionMismatch(f"{side} content has {n} rows but factors have {self.factors[side].shape[0]}")

    def content_rows(self, side, ids):
        c = self.content[side]
        if isinstance(c, ContentMatrix):
            return c.dense(ids)
        return np.asarray(c, dtype=np.float64)[ids]

    def factor_rows(self, side, ids):
        return self.factors[side][ids].copy()


def _regularized(model: CGHModel, cfg: TrainConfig):
    """(name, array) pairs of the weight matrices under the L2 penalty."""
    out = []
    for side in SIDES:
        for n, W in enumerate(model.encoders[side].weights):
            out.append((f"encoder.{side}.W{n}", W))
    for side in SIDES:
        if cfg.content_active(side):
            out.append((f"codebook.{side}", model.codebooks[side]))
    return out


def forward_backward(batch: Batch, model: CGHModel, cfg: TrainConfig, data: TrainingData, rng=None,
                     training=False, code_mode=None, need_grad=True):
    """Loss breakdown and (optionally) gradients keyed by tensor name."""
    code_mode = code_mode or cfg.code_mode
    if code_mode == "sample" and rng is None:
        raise ValueError("sampled codes need an rng")
    r = model.r
    weights = cfg.weights()
    out = LossBreakdown()
    grads = {}
    state = {}
    for side, ids in (("user", batch.users), ("item", batch.items)):
        uniq, inv = np.unique(ids, return_inverse=True)
        X = data.content_rows(side, uniq)
        F = data.factor_rows(side, uniq)
        if X.shape[1] != model.content_dim(side) or F.shape[1] != r:
            raise DimensionMismatch(f"{side} input dims {X.shape[1]}+{F.shape[1]} do not match model")
        if training and cfg.factor_dropout and cfg.content_active(side):
            F[rng.random(len(uniq)) < cfg.factor_dropout] = 0.0
        inp = np.hstack([X, F])
        mask = rng.random(inp.shape) >= cfg.corruption if training and cfg.corruption else None
        logits, acts = model.encoders[side].forward(inp, keep=True, mask=mask)
        q = sigmoid(logits)
        if code_mode == "relaxed":
            codes = q
        elif code_mode == "threshold":
            codes = (logits >= 0).astype(np.float64)
        else:
            codes = (rng.random(q.shape) < q).astype(np.float64)
        state[side] = dict(uniq=uniq, inv=inv, X=X, acts=acts, q=q, codes=codes, g_codes=np.zeros_like(q))

    # rating term
    su, si = state["user"], state["item"]
    Bu = su["codes"][su["inv"]]
    Di = si["codes"][si["inv"]]
    delta = 1.0 - np.sum(Bu + Di - 2.0 * Bu * Di, axis=1) / r
    resid = batch.ratings - delta
    out.rating_loss = float(np.sum(0.5 * batch.conf * resid**2))
    if need_grad:
        g_delta = -batch.conf * resid
        np.add.at(su["g_codes"], su["inv"], g_delta[:, None] * (-(1.0 - 2.0 * Di) / r))
        np.add.at(si["g_codes"], si["inv"], g_delta[:, None] * (-(1.0 - 2.0 * Bu) / r))

    for side in SIDES:
        s = state[side]
        lam, klw = weights[side]
        C = model.codebooks[side]
        if lam > 0:
            rec = s["X"] - s["codes"] @ C.T - model.offsets[side]
            setattr(out, f"recon_{side}", float(0.5 * lam * np.sum(rec**2)))
            if need_grad:
                grads[f"codebook.{side}"] = -lam * rec.T @ s["codes"]
                s["g_codes"] -= lam * rec @ C
        elif need_grad:
            grads[f"codebook.{side}"] = np.zeros_like(C)
        g_q = s["g_codes"]
        if klw > 0:
            q = s["q"]
            qc = np.clip(q, KL_EPS, 1 - KL_EPS)
            rho = model.priors[side]
            setattr(out, f"kl_{side}", float(klw * np.sum(
                qc * np.log(qc / rho) + (1 - qc) * np.log((1 - qc) / (1 - rho)))))
            if need_grad:
                inside = (q > KL_EPS) & (q < 1 - KL_EPS)
                g_q = g_q + klw * inside * (np.log(qc / rho) - np.log((1 - qc) / (1 - rho)))
        if need_grad:
            q = s["q"]
            gW, gb = model.encoders[side].backward(s["acts"], g_q * q * (1.0 - q))
            for n in range(len(gW)):
                grads[f"encoder.{side}.W{n}"] = gW[n]
                grads[f"encoder.{side}.b{n}"] = gb[n]

    if cfg.reg_weight:
        reg = 0.0
        for name, W in _regularized(model, cfg):
            reg += float(np.sum(W * W))
            if need_grad:
                grads[name] = grads[name] + 2.0 * cfg.reg_weight * W
        out.regularizer = cfg.reg_weight * reg

    if not np.isfinite(out.total):
        raise NonFiniteLoss(f"non-finite loss: {asdict(out)}")
    return out, grads


def loss(batch: Batch, model: CGHModel, cfg: TrainConfig, data: TrainingData, rng=None,
         training=False, code_mode=None) -> LossBreakdown:
    return forward_backward(batch, model, cfg, data, rng, training, code_mode, need_grad=False)[0]


def gradient_check(model: CGHModel, batch: Batch, cfg: TrainConfig, data: TrainingData, eps=1e-5,
                   n_checks=60, seed=0, floor=1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in relaxed mode with no corruption. Checks ``n_checks`` randomly
    chosen scalar parameters; relative error is
    ``|g - g_fd| / max(|g|, |g_fd|, floor)``.
    """
    _, grads = forward_backward(batch, model, cfg, data, code_mode="relaxed")
    params = dict(model.named_tensors())
    names = sorted(grads)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_checks):
        name = names[rng.integers(len(names))]
        P = params[name]
        if P.size == 0:
            continue
        idx = np.unravel_index(rng.integers(P.size), P.shape)
        old = P[idx]
        P[idx] = old + eps
        fp = loss(batch, model, cfg, data, code_mode="relaxed").total
        P[idx] = old - eps
        fm = loss(batch, model, cfg, data, code_mode="relaxed").total
        P[idx] = old
        fd = (fp - fm) / (2 * eps)
        g = grads[name][idx]
        worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), floor))
    return worst


# ---------------------------------------------------------------- training loop


@dataclass
class TrainedModel:
    model: CGHModel
    factors: LatentFactors
    cfg: TrainConfig
    curve: list = field(default_factory=list)
    cold_user_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    cold_item_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def curve_csv(self) -> str:
        return curve_to_csv(self.curve)


def save_trained(trained: TrainedModel, path):
    """Checkpoint the model tensors plus the cold-entity id sets."""
    save_model(trained.model, path, extra=[
        ("cold_user_ids", trained.cold_user_ids.astype(np.float64)),
        ("cold_item_ids", trained.cold_item_ids.astype(np.float64)),
    ])


def load_trained(path, factors: LatentFactors, cfg: TrainConfig | None = None) -> TrainedModel:
    model, extra = load_model(path, with_extra=True)
    cold_u = extra.get("cold_user_ids", np.zeros(0)).astype(np.int64)
    cold_i = extra.get("cold_item_ids", np.zeros(0)).astype(np.int64)
    return TrainedModel(model, factors.zero_rows(cold_u, cold_i), cfg or TrainConfig(), [], cold_u, cold_i)


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "rating_loss", "recon_user", "recon_item", "kl_user", "kl_item", "reg", "total"])
    for e, lb in enumerate(curve, 1):
        w.writerow([e, *(repr(float(getattr(lb, f))) for f in LOSS_FIELDS), repr(float(lb.total))])
    return buf.getvalue()


def input_stats(data: TrainingData, side, ids):
    """Per-column (mean, 1 / std) of the encoder input over ``ids``; constant columns keep scale 1."""
    X = np.hstack([data.content_rows(side, ids), data.factor_rows(side, ids)])
    sd = X.std(axis=0)
    return X.mean(axis=0), np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0), 1.0)


def _trainable_names(model: CGHModel):
    names = set()
    for side in SIDES:
        for n in range(len(model.encoders[side].weights)):
            names |= {f"encoder.{side}.W{n}", f"encoder.{side}.b{n}"}
        names.add(f"codebook.{side}")
    return names


def _sample_negatives(users, n_per, candidates, pos_keys, n_items, rng):
    nu = np.repeat(users, n_per)
    ni = candidates[rng.integers(len(candidates), size=len(nu))]
    for _ in range(100):
        bad = np.flatnonzero(np.isin(nu * n_items + ni, pos_keys))
        if not len(bad):
            break
        ni[bad] = candidates[rng.integers(len(candidates), size=len(bad))]
    else:
        keep = ~np.isin(nu * n_items + ni, pos_keys)
        nu, ni = nu[keep], ni[keep]
    return nu, ni


def train(split: DatasetSplit, user_content, item_content, factors: LatentFactors,
          cfg: TrainConfig | None = None, model: CGHModel | None = None) -> TrainedModel:
    """Mini-batch SGD with momentum on the warm training ratings.

    Factors are used as given (frozen); rows of cold entities are zeroed.
    Each positive gets ``neg_per_pos`` sampled zeros drawn from items seen
    in training. The update uses the gradient summed over the batch, so
    ``lr`` is a per-rating step size.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    ratings = split.warm_train
    if len(ratings) == 0:
        raise EmptyTrainingSet("warm training set is empty")
    frozen = factors.zero_rows(split.cold_user_ids, split.cold_item_ids)
    data = TrainingData(user_content, item_content, frozen)
    r = frozen.r
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = init_model(
            data.content_rows("user", [0]).shape[1], data.content_rows("item", [0]).shape[1], r,
            hidden=tuple(cfg.hidden), seed=int(rng.integers(2**63)),
            lam_user=cfg.lam_user, lam_item=cfg.lam_item,
        )
        for side, ids in (("user", np.unique(ratings.users)), ("item", np.unique(ratings.items))):
            if cfg.input_scaling:
                enc = model.encoders[side]
                enc.input_shift, enc.input_scale = input_stats(data, side, ids)
            if cfg.center_content:
                model.offsets[side] = data.content_rows(side, ids).mean(axis=0)
    params = {n: p for n, p in model.named_tensors() if n in _trainable_names(model)}
    velocity = {name: np.zeros_like(p) for name, p in params.items()}
    n_items = ratings.n_items
    pos_keys = np.sort(ratings.users * n_items + ratings.items)
    candidates = np.unique(ratings.items)
    curve = []
    for epoch in range(cfg.epochs):
        total = LossBreakdown()
        perm = rng.permutation(len(ratings))
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            pu, pi = ratings.users[sel], ratings.items[sel]
            nu, ni = _sample_negatives(pu, cfg.neg_per_pos, candidates, pos_keys, n_items, rng)
            batch = Batch.from_pairs(
                np.concatenate([pu, nu]), np.concatenate([pi, ni]),
                np.concatenate([np.ones(len(pu)), np.zeros(len(nu))]), cfg.a, cfg.b,
            )
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported as NonFiniteLoss
                lb, grads = forward_backward(batch, model, cfg, data, rng, training=True)
            total = total + lb
            step = cfg.lr
            for name, g in grads.items():
                v = velocity[name]
                v *= cfg.momentum
                v -= step * g
                params[name] += v
        lb = total.scaled(1.0 / len(ratings))
        curve.append(lb)
        _log.info("epoch %d total %.6f (rating %.6f)", epoch + 1, lb.total, lb.rating_loss)
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            raise NonFiniteLoss(f"parameters diverged at epoch {epoch + 1}")
    return TrainedModel(model, frozen, cfg, curve,
                        np.asarray(split.cold_user_ids, np.int64), np.asarray(split.cold_item_ids, np.int64))


# ---------------------------------------------------------------- config files


def config_from_dict(d: dict, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    known = {f.name: f for f in fields(TrainConfig)}
    kw = {}
    for k, v in d.items():
        if k not in known:
            raise KeyError(f"unknown training key {k!r}")
        kw[k] = _coerce(getattr(base, k), v)
    return replace(base, **kw)


def _coerce(default, value):
    if not isinstance(value, str):
        return value
    if isinstance(default, tuple):
        return tuple(int(x) for x in value.split(",") if x.strip())
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    return type(default)(value)
