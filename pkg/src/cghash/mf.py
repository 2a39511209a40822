"""Confidence-weighted matrix factorization of implicit feedback by ALS.

Minimizes ``sum_ij C_ij (r_ij - p_i.q_j)^2 + reg (|P|^2 + |Q|^2)`` over the
full matrix, with ``C_ij = a`` on observed ones and ``b`` on implicit zeros.
"""
from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .data import SparseRatings
from .errors import CorruptArtifact, DimensionMismatch, SingularSystem

_log = logging.getLogger(__name__)

FACTOR_MAGIC = b"CGHF"
_FACTOR_HEADER = struct.Struct("<4sQQ")


@dataclass
class MfConfig:
    r: int = 50
    a: float = 1.0
    b: float = 0.01
    reg: float = 0.1
    iters: int = 15
    seed: int = 0

    def validate(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not self.a > self.b > 0:
            raise ValueError("confidence weights need a > b > 0")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")


@dataclass
class LatentFactors:
    P: np.ndarray
    Q: np.ndarray

    @property
    def r(self):
        return self.P.shape[1]

    def zero_rows(self, users=(), items=()) -> LatentFactors:
        """Copy with the given rows zero-filled (cold entities have no factors)."""
        P, Q = self.P.copy(), self.Q.copy()
        P[np.asarray(users, dtype=np.int64)] = 0.0
        Q[np.asarray(items, dtype=np.int64)] = 0.0
        return LatentFactors(P, Q)


def _check_dims(ratings, P, Q):
    if P.shape[0] != ratings.n_users or Q.shape[0] != ratings.n_items or P.shape[1] != Q.shape[1]:
        raise DimensionMismatch(
            f"factors {P.shape}/{Q.shape} do not match ratings ({ratings.n_users}, {ratings.n_items})"
        )


def mf_objective(ratings: SparseRatings, factors: LatentFactors, cfg: MfConfig) -> float:
    """Weighted squared loss over every cell plus the L2 penalty.

    Evaluated as ``b * |P Q^T|^2`` (all cells at weight b) corrected on the
    observed ones, so the cost is O(nnz * r + (m + n) r^2).
    """
    P, Q = factors.P, factors.Q
    _check_dims(ratings, P, Q)
    # sum_ij (p_i.q_j)^2 = trace((P^T P)(Q^T Q))
    all_sq = float(np.sum((P.T @ P) * (Q.T @ Q)))
    pred = np.einsum("ij,ij->i", P[ratings.users], Q[ratings.items])
    obs = cfg.a * np.sum((1.0 - pred) ** 2) - cfg.b * np.sum(pred**2)
    reg = cfg.reg * (np.sum(P * P) + np.sum(Q * Q))
    return float(cfg.b * all_sq + obs + reg)


def _solve_side(indptr, indices, other, cfg, threads=1):
    """Exact per-row minimizer given the other side held fixed."""
    n, r = len(indptr) - 1, other.shape[1]
    base = cfg.b * (other.T @ other) + cfg.reg * np.eye(r)
    out = np.empty((n, r))

    def solve(lo, hi):
        for row in range(lo, hi):
            cols = indices[indptr[row]:indptr[row + 1]]
            Y = other[cols]
            A = base + (cfg.a - cfg.b) * (Y.T @ Y)
            rhs = cfg.a * Y.sum(axis=0)
            try:
                c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                raise SingularSystem(
                    f"normal equations for row {row} are not positive definite; increase reg"
                ) from None
            out[row] = scipy.linalg.cho_solve(c, rhs, check_finite=False)

    if threads <= 1:
        solve(0, n)
    else:
        # rows read only the frozen `other`, so chunking cannot change results
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(solve, bounds[:-1], bounds[1:]))
    if not np.all(np.isfinite(out)):
        raise SingularSystem("non-finite factors; increase reg")
    return out


def init_factors(n_users, n_items, cfg: MfConfig) -> LatentFactors:
    rng = np.random.default_rng(cfg.seed)
    s = 0.5 / np.sqrt(cfg.r)
    P = rng.uniform(-s, s, size=(n_users, cfg.r))
    Q = rng.uniform(-s, s, size=(n_items, cfg.r))
    return LatentFactors(P, Q)


def factorize(ratings: SparseRatings, cfg: MfConfig | None = None, threads: int = 1,
              history: list | None = None) -> LatentFactors:
    """Weighted ALS; the objective is non-increasing sweep over sweep.

    If ``history`` is a list, the objective after initialization and after
    every sweep is appended to it.
    """
    cfg = cfg or MfConfig()
    cfg.validate()
    if len(ratings) == 0:
        raise ValueError("cannot factorize an empty rating set")
    f = init_factors(ratings.n_users, ratings.n_items, cfg)
    R = ratings.to_csr()
    Rt = R.T.tocsr()
    if history is not None:
        history.append(mf_objective(ratings, f, cfg))
    for it in range(cfg.iters):
        f.P = _solve_side(R.indptr, R.indices, f.Q, cfg, threads)
        f.Q = _solve_side(Rt.indptr, Rt.indices, f.P, cfg, threads)
        if history is not None:
            history.append(mf_objective(ratings, f, cfg))
            _log.debug("als sweep %d objective %.6g", it + 1, history[-1])
    return f


# ---------------------------------------------------------------- persistence


def write_factor_matrix(M: np.ndarray, path):
    M = np.ascontiguousarray(M, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_FACTOR_HEADER.pack(FACTOR_MAGIC, M.shape[1], M.shape[0]))
        fh.write(M.tobytes())


def read_factor_matrix(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            head = fh.read(_FACTOR_HEADER.size)
            body = fh.read()
    except OSError as exc:
        raise CorruptArtifact(str(exc)) from None
    if len(head) != _FACTOR_HEADER.size:
        raise CorruptArtifact(f"{path}: truncated header")
    magic, r, n = _FACTOR_HEADER.unpack(head)
    if magic != FACTOR_MAGIC or len(body) != 8 * r * n:
        raise CorruptArtifact(f"{path}: not a factor file or wrong size")
    return np.frombuffer(body, dtype="<f8").reshape(n, r).astype(np.float64)


def save_factors(factors: LatentFactors, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_factor_matrix(factors.P, d / "P.bin")
    write_factor_matrix(factors.Q, d / "Q.bin")


def load_factors(directory) -> LatentFactors:
    d = Path(directory)
    return LatentFactors(read_factor_matrix(d / "P.bin"), read_factor_matrix(d / "Q.bin"))
