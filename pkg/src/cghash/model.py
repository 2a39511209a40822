"""Encoder, decoder, Bernoulli prior and Hamming rating model.

The encoder maps ``[content, latent factor]`` through a tanh MLP to ``r``
logits; ``sigmoid(logits)`` are per-bit Bernoulli means and the MAP code sets
bit k iff logit k >= 0. The decoder is linear: a code ``b`` generates the
content mean ``C @ b + m`` where ``m`` is a fixed per-side offset (zero
unless training centers the content).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codes import BinaryCodeMatrix, pack_bits
from .errors import CorruptArtifact, DimensionMismatch, LengthMismatch

SIDES = ("user", "item")

CKPT_MAGIC = b"CGHC"
CKPT_VERSION = 1


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class Encoder:
    """Stack of dense layers; tanh after every layer but the last.

    Inputs are standardized column-wise first, ``(X - input_shift) * input_scale``,
    with fixed statistics (identity unless training derived them from data).
    """

    weights: list
    biases: list
    input_scale: np.ndarray | None = None
    input_shift: np.ndarray | None = None

    def __post_init__(self):
        if self.input_scale is None:
            self.input_scale = np.ones(self.weights[0].shape[0])
        if self.input_shift is None:
            self.input_shift = np.zeros(self.weights[0].shape[0])

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def r(self):
        return self.weights[-1].shape[1]

    def forward(self, X, keep=False, mask=None):
        """Logits for input rows ``X``; with ``keep`` also the layer activations.

        ``mask`` (same shape as ``X``) multiplies the standardized input, so a
        dropped coordinate reads as its column mean.
        """
        h = (X - self.input_shift) * self.input_scale
        if mask is not None:
            h = h * mask
        acts = [h]
        last = len(self.weights) - 1
        for n, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if n < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, g_logits):
        """Parameter gradients given d(loss)/d(logits)."""
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        g = g_logits
        for n in range(len(self.weights) - 1, -1, -1):
            gW[n] = acts[n].T @ g
            gb[n] = g.sum(axis=0)
            if n:
                g = (g @ self.weights[n].T) * (1.0 - acts[n] ** 2)
        return gW, gb


@dataclass
class CGHModel:
    encoders: dict  # side -> Encoder
    codebooks: dict  # side -> (content_dim, r)
    precisions: dict  # side -> lambda
    priors: dict  # side -> rho (r,)
    offsets: dict | None = None  # side -> (content_dim,) decoder offset, fixed during training

    def __post_init__(self):
        if self.offsets is None:
            self.offsets = {s: np.zeros(self.codebooks[s].shape[0]) for s in SIDES}

    @property
    def r(self):
        return self.encoders["user"].r

    def content_dim(self, side):
        return self.codebooks[side].shape[0]

    def named_tensors(self):
        """Ordered (name, array) view over every parameter; arrays are live references."""
        out = []
        for side in SIDES:
            enc = self.encoders[side]
            out.append((f"encoder.{side}.input_shift", enc.input_shift))
            out.append((f"encoder.{side}.input_scale", enc.input_scale))
            for n, (W, b) in enumerate(zip(enc.weights, enc.biases)):
                out.append((f"encoder.{side}.W{n}", W))
                out.append((f"encoder.{side}.b{n}", b))
        for side in SIDES:
            out.append((f"codebook.{side}", self.codebooks[side]))
        for side in SIDES:
            out.append((f"offset.{side}", self.offsets[side]))
        for side in SIDES:
            out.append((f"prior.{side}", self.priors[side]))
        for side in SIDES:
            out.append((f"precision.{side}", np.array([self.precisions[side]], dtype=np.float64)))
        return out

    def copy(self) -> CGHModel:
        return CGHModel(
            {s: Encoder([W.copy() for W in e.weights], [b.copy() for b in e.biases],
                         e.input_scale.copy(), e.input_shift.copy())
             for s, e in self.encoders.items()},
            {s: C.copy() for s, C in self.codebooks.items()},
            dict(self.precisions),
            {s: p.copy() for s, p in self.priors.items()},
            {s: m.copy() for s, m in self.offsets.items()},
        )

    def allclose(self, other, atol=0.0) -> bool:
        a, b = self.named_tensors(), other.named_tensors()
        return [n for n, _ in a] == [n for n, _ in b] and all(
            x.shape == y.shape and np.allclose(x, y, rtol=0, atol=atol) for (_, x), (_, y) in zip(a, b)
        )


def init_model(user_dim, item_dim, r, hidden=(512, 256), seed=0, lam_user=1.0, lam_item=1.0,
               rho=0.5, codebook_scale=0.01) -> CGHModel:
    """Glorot-uniform encoder weights, zero biases, small Gaussian codebooks."""
    rng = np.random.default_rng(seed)
    encoders = {}
    for side, d in (("user", user_dim), ("item", item_dim)):
        widths = [d + r, *hidden, r]
        Ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        encoders[side] = Encoder(Ws, bs)
    codebooks = {
        "user": codebook_scale * rng.standard_normal((user_dim, r)),
        "item": codebook_scale * rng.standard_normal((item_dim, r)),
    }
    priors = {s: np.full(r, float(rho)) for s in SIDES}
    return CGHModel(encoders, codebooks, {"user": float(lam_user), "item": float(lam_item)}, priors)


# ---------------------------------------------------------------- forward ops


def _encoder_input(model, side, x, f):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    if x.shape[1] != model.content_dim(side):
        raise DimensionMismatch(f"{side} content has dim {x.shape[1]}, model expects {model.content_dim(side)}")
    if f.shape[1] != model.r:
        raise DimensionMismatch(f"latent factor has dim {f.shape[1]}, model expects r={model.r}")
    if x.shape[0] != f.shape[0]:
        raise DimensionMismatch("content and factor row counts differ")
    return np.hstack([x, f])


def encode_logits(x, f, side, model: CGHModel, corruption=0.0, rng=None):
    X = _encoder_input(model, side, x, f)
    mask = None
    if corruption:
        if rng is None:
            raise ValueError("corruption needs an rng")
        mask = rng.random(X.shape) >= corruption
    out = model.encoders[side].forward(X, mask=mask)
    return out[0] if np.ndim(x) == 1 else out


def encode_probs(x, f, side, model: CGHModel, corruption=0.0, rng=None):
    """Per-bit Bernoulli means ``sigmoid(logits([x, f]))``.

    ``x``/``f`` may be single rows or stacked rows. With ``corruption`` > 0
    each standardized input coordinate is zeroed independently with that
    probability.
    """
    return sigmoid(encode_logits(x, f, side, model, corruption, rng))


def encode_map(x, f, side, model: CGHModel):
    """MAP code: bit k is 1 iff logit k >= 0 (so sign(0) counts as +1)."""
    return (encode_logits(x, f, side, model) >= 0).astype(np.uint8)


def sample_code(probs, rng):
    probs = np.asarray(probs, dtype=np.float64)
    return (rng.random(probs.shape) < probs).astype(np.uint8)


def decode(code, side, model: CGHModel):
    """Gaussian mean ``C_side @ code + offset_side`` with bits read as 0/1 reals."""
    code = np.asarray(code, dtype=np.float64)
    C = model.codebooks[side]
    if code.shape[-1] != C.shape[1]:
        raise LengthMismatch(f"code has {code.shape[-1]} bits, codebook has {C.shape[1]}")
    return code @ C.T + model.offsets[side]


def predict_rating(b, d) -> float:
    """``1 - Hamming(b, d) / r`` for unpacked 0/1 codes."""
    b = np.asarray(b).astype(bool)
    d = np.asarray(d).astype(bool)
    if b.shape != d.shape:
        raise LengthMismatch(f"codes differ in length: {b.shape} vs {d.shape}")
    return 1.0 - np.count_nonzero(b != d) / b.shape[-1]


def log_prior(code, rho) -> float:
    code = np.asarray(code, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if code.shape != rho.shape:
        raise LengthMismatch("code and prior lengths differ")
    return float(np.sum(code * np.log(rho) + (1.0 - code) * np.log1p(-rho)))


def encode_all(model: CGHModel, side, content, factors, zero_factor_rows=(), batch=4096) -> BinaryCodeMatrix:
    """MAP codes for every entity of one side.

    ``content`` is a ContentMatrix (or dense array) and ``factors`` the
    matching P or Q; rows listed in ``zero_factor_rows`` (cold entities)
    get a zero latent slot.
    """
    F = np.array(factors, dtype=np.float64)
    F[np.asarray(zero_factor_rows, dtype=np.int64)] = 0.0
    n = F.shape[0]
    bits = np.empty((n, model.r), dtype=np.uint8)
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        X = content.dense(np.arange(lo, hi)) if hasattr(content, "dense") else np.asarray(content[lo:hi])
        bits[lo:hi] = encode_map(X, F[lo:hi], side, model)
    return BinaryCodeMatrix(pack_bits(bits), model.r)


def encode_probs_all(model: CGHModel, side, content, factors, zero_factor_rows=(), batch=4096):
    F = np.array(factors, dtype=np.float64)
    F[np.asarray(zero_factor_rows, dtype=np.int64)] = 0.0
    n = F.shape[0]
    out = np.empty((n, model.r))
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        X = content.dense(np.arange(lo, hi)) if hasattr(content, "dense") else np.asarray(content[lo:hi])
        out[lo:hi] = encode_probs(X, F[lo:hi], side, model)
    return out


# ---------------------------------------------------------------- checkpoint


def write_tensors(tensors, path):
    """Named float64 tensors: name, shape, then row-major little-endian data."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(tensors)))
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_tensors(path):
    try:
        data = open(path, "rb").read()
    except OSError as exc:
        raise CorruptArtifact(str(exc)) from None
    try:
        magic, version, count = struct.unpack_from("<4sII", data, 0)
        if magic != CKPT_MAGIC or version != CKPT_VERSION:
            raise CorruptArtifact(f"{path}: not a checkpoint")
        pos = 12
        out = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise CorruptArtifact(f"{path}: truncated tensor {name}")
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
            out.append((name, arr))
    except struct.error:
        raise CorruptArtifact(f"{path}: truncated checkpoint") from None
    if pos != len(data):
        raise CorruptArtifact(f"{path}: trailing bytes")
    return out


def save_model(model: CGHModel, path, extra=()):
    write_tensors(model.named_tensors() + list(extra), path)


def load_model(path, with_extra=False):
    tensors = dict(read_tensors(path))
    try:
        encoders = {}
        for side in SIDES:
            Ws, bs = [], []
            while f"encoder.{side}.W{len(Ws)}" in tensors:
                n = len(Ws)
                Ws.append(tensors.pop(f"encoder.{side}.W{n}"))
                bs.append(tensors.pop(f"encoder.{side}.b{n}"))
            if not Ws:
                raise KeyError(f"encoder.{side}")
            encoders[side] = Encoder(Ws, bs, tensors.pop(f"encoder.{side}.input_scale"),
                                     tensors.pop(f"encoder.{side}.input_shift"))
        model = CGHModel(
            encoders,
            {s: tensors.pop(f"codebook.{s}") for s in SIDES},
            {s: float(tensors.pop(f"precision.{s}")[0]) for s in SIDES},
            {s: tensors.pop(f"prior.{s}") for s in SIDES},
            {s: tensors.pop(f"offset.{s}") for s in SIDES},
        )
    except KeyError as exc:
        raise CorruptArtifact(f"{path}: missing tensor {exc}") from None
    return (model, tensors) if with_extra else model
