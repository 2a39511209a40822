"""Sampled-negative ranking evaluation: Accuracy@k and MRR.

For every test positive (fixed entity, true candidate) we draw
``n_negatives`` candidates the fixed entity has not rated, rank the true
candidate among them with a scorer, and record its rank. Accuracy@k is the
fraction of test positives ranked within the top k; MRR averages 1/rank.

Scorers return one value per candidate where lower is better; equal scores
are ordered by ascending candidate id. Each test pair draws its negatives
from its own generator seeded by ``(seed, pair index)``, so serial and
threaded runs produce identical ranks.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codes import BinaryCodeMatrix, unpack_bits
from .data import SparseRatings
from .index import hamming_distances
from .marketing import content_distances, generate_user, select_user_code
from .model import encode_all, encode_probs_all

_log = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10, 20, 50, 100, 200)


# ---------------------------------------------------------------- scorers


class HammingScorer:
    """Hamming distance between the fixed entity's code and each candidate's."""

    def __init__(self, fixed_codes: BinaryCodeMatrix, candidate_codes: BinaryCodeMatrix):
        self.fixed = fixed_codes
        self.cand = candidate_codes

    def score(self, fixed_id, candidates, rng=None):
        sub = BinaryCodeMatrix(self.cand.words[candidates], self.cand.r)
        return hamming_distances(sub, self.fixed.words[fixed_id]).astype(np.float64)


class RealScorer:
    """Negated inner product of continuous embeddings (the real-valued variant)."""

    def __init__(self, fixed_vecs, candidate_vecs):
        self.fixed = np.asarray(fixed_vecs, dtype=np.float64)
        self.cand = np.asarray(candidate_vecs, dtype=np.float64)

    def score(self, fixed_id, candidates, rng=None):
        return -(self.cand[candidates] @ self.fixed[fixed_id])


class RandomScorer:
    """Uniform random scores drawn from the per-pair generator."""

    def score(self, fixed_id, candidates, rng=None):
        return rng.random(len(candidates))


class OracleScorer:
    """Scores the true candidate 0 and everything else 1; for sanity checks."""

    def __init__(self, test: SparseRatings, fixed_side="user"):
        self.pos = set(zip(test.users.tolist(), test.items.tolist()))
        self.fixed_side = fixed_side

    def score(self, fixed_id, candidates, rng=None):
        if self.fixed_side == "user":
            hit = [(fixed_id, c) in self.pos for c in candidates.tolist()]
        else:
            hit = [(c, fixed_id) in self.pos for c in candidates.tolist()]
        return 1.0 - np.asarray(hit, dtype=np.float64)


class MarketingScorer:
    """Distance between each candidate user's content and the user generated for the item."""

    def __init__(self, model, item_codes: BinaryCodeMatrix, user_content, policy="mirror",
                 user_codes: BinaryCodeMatrix | None = None, metric="euclidean"):
        self.model = getattr(model, "model", model)
        self.item_codes = item_codes
        self.user_content = user_content
        self.policy = policy
        self.user_codes = user_codes
        self.metric = metric
        self._cache = {}

    def synthetic_user(self, item_id):
        if item_id in self._cache:
            return self._cache[item_id]
        d_j = unpack_bits(self.item_codes.words[item_id], self.item_codes.r)
        b_p = select_user_code(d_j, self.policy, self.user_codes)
        u_p = self._cache[item_id] = generate_user(b_p, self.model)
        return u_p

    def score(self, fixed_id, candidates, rng=None):
        return content_distances(self.synthetic_user(fixed_id), self.user_content, candidates, self.metric)


# ---------------------------------------------------------------- protocol


@dataclass
class EvalProtocol:
    """``fixed_side="user"`` ranks items for each test user; ``"item"`` ranks users."""

    test: SparseRatings
    known: SparseRatings
    fixed_side: str = "user"
    n_negatives: int = 1000
    ks: tuple = DEFAULT_KS
    seed: int = 0
    candidate_pool: np.ndarray | None = None
    setting: str = "warm"

    def __post_init__(self):
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.fixed_side not in ("user", "item"):
            raise ValueError("fixed_side must be 'user' or 'item'")


@dataclass
class EvalReport:
    setting: str
    ks: tuple
    ranks: np.ndarray
    n_candidates: np.ndarray
    short_pairs: int = 0  # pairs that had fewer than n_negatives negatives available
    extra: dict = field(default_factory=dict)

    @property
    def n_test(self) -> int:
        return len(self.ranks)

    def hits(self, k) -> int:
        return int(np.count_nonzero(self.ranks <= k))

    def accuracy(self, k) -> float:
        return self.hits(k) / self.n_test if self.n_test else 0.0

    def accuracies(self) -> dict:
        return {k: self.accuracy(k) for k in self.ks}

    @property
    def mrr(self) -> float:
        return float(np.mean(1.0 / self.ranks)) if self.n_test else 0.0

    def rows(self):
        out = [("accuracy", self.setting, k, self.accuracy(k), self.n_test, self.hits(k)) for k in self.ks]
        out.append(("mrr", self.setting, "", self.mrr, self.n_test, ""))
        return out

    def summary(self) -> str:
        acc = ", ".join(f"@{k}={self.accuracy(k):.4f}" for k in self.ks)
        s = f"{self.setting}: n_test={self.n_test} MRR={self.mrr:.5f} accuracy {acc}"
        if self.short_pairs:
            s += f" ({self.short_pairs} pairs had fewer negatives than requested)"
        return s


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "setting", "k", "value", "n_test", "n_hits"])
    for rep in reports:
        for metric, setting, k, value, n, hits in rep.rows():
            w.writerow([metric, setting, k, repr(float(value)), n, hits])
    return buf.getvalue()


def _rank_pairs(protocol: EvalProtocol, scorer, lo, hi, fixed, true, known_csr, pool, ranks, n_cand):
    for p in range(lo, hi):
        rng = np.random.default_rng([protocol.seed, p])
        f, t = int(fixed[p]), int(true[p])
        rated = known_csr.indices[known_csr.indptr[f]:known_csr.indptr[f + 1]]
        negatives = np.setdiff1d(pool, rated, assume_unique=True)
        if len(negatives) > protocol.n_negatives:
            negatives = rng.choice(negatives, size=protocol.n_negatives, replace=False)
        cands = np.concatenate([[t], negatives]).astype(np.int64)
        s = np.asarray(scorer.score(f, cands, rng), dtype=np.float64)
        s_true = s[0]
        better = np.count_nonzero(s[1:] < s_true) + np.count_nonzero((s[1:] == s_true) & (cands[1:] < t))
        ranks[p] = 1 + better
        n_cand[p] = len(cands)


def evaluate(protocol: EvalProtocol, scorer, threads=1) -> EvalReport:
    """Rank every test positive among sampled negatives."""
    test, known = protocol.test, protocol.known
    if protocol.fixed_side == "user":
        fixed, true = test.users, test.items
        known_csr = known.to_csr()
        n_cand_side = known.n_items
    else:
        fixed, true = test.items, test.users
        known_csr = known.to_csr().T.tocsr()
        n_cand_side = known.n_users
    known_csr.sort_indices()
    pool = np.arange(n_cand_side) if protocol.candidate_pool is None else np.unique(protocol.candidate_pool)
    n = len(test)
    ranks = np.zeros(n, dtype=np.int64)
    n_cand = np.zeros(n, dtype=np.int64)
    args = (protocol, scorer)
    if threads <= 1 or n < 2:
        _rank_pairs(*args, 0, n, fixed, true, known_csr, pool, ranks, n_cand)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as ex:
            futs = [ex.submit(_rank_pairs, *args, lo, hi, fixed, true, known_csr, pool, ranks, n_cand)
                    for lo, hi in zip(bounds[:-1], bounds[1:])]
            for f in futs:
                f.result()
    short = int(np.count_nonzero(n_cand < protocol.n_negatives + 1))
    if short:
        _log.warning("%d of %d test pairs had fewer than %d negatives; used all available",
                     short, n, protocol.n_negatives)
    return EvalReport(protocol.setting, tuple(protocol.ks), ranks, n_cand, short)


def accuracy_at_k(protocol: EvalProtocol, scorer, threads=1) -> dict:
    return evaluate(protocol, scorer, threads).accuracies()


def mrr(protocol: EvalProtocol, scorer, threads=1) -> float:
    return evaluate(protocol, scorer, threads).mrr


# ---------------------------------------------------------------- drivers

SETTINGS = {
    # setting -> (split attribute holding the test ratings, fixed side)
    "warm": ("warm_test", "user"),
    "cold-item": ("cold_item", "user"),
    "cold-user": ("cold_user", "item"),
}


def model_codes(trained, user_content, item_content):
    """MAP codes of all users and items, cold rows encoded from content alone."""
    m, f = trained.model, trained.factors
    B = encode_all(m, "user", user_content, f.P, trained.cold_user_ids)
    D = encode_all(m, "item", item_content, f.Q, trained.cold_item_ids)
    return B, D


def model_embeddings(trained, user_content, item_content):
    """Continuous counterparts of the codes: ``2 * prob - 1``."""
    m, f = trained.model, trained.factors
    U = 2 * encode_probs_all(m, "user", user_content, f.P, trained.cold_user_ids) - 1
    V = 2 * encode_probs_all(m, "item", item_content, f.Q, trained.cold_item_ids) - 1
    return U, V


def make_scorer(kind, fixed_side, trained=None, user_content=None, item_content=None, codes=None):
    if kind == "random":
        return RandomScorer()
    if kind == "hamming":
        B, D = codes if codes is not None else model_codes(trained, user_content, item_content)
        return HammingScorer(B, D) if fixed_side == "user" else HammingScorer(D, B)
    if kind == "real":
        U, V = model_embeddings(trained, user_content, item_content)
        return RealScorer(U, V) if fixed_side == "user" else RealScorer(V, U)
    raise ValueError(f"unknown scorer {kind!r}")


def evaluate_setting(trained, split, user_content, item_content, setting="warm", scorer="hamming",
                     n_negatives=1000, ks=DEFAULT_KS, seed=0, threads=1, codes=None) -> EvalReport:
    attr, fixed_side = SETTINGS[setting]
    protocol = EvalProtocol(getattr(split, attr), split.all_ratings(), fixed_side, n_negatives,
                            tuple(ks), seed, setting=f"{setting}/{scorer}")
    sc = make_scorer(scorer, fixed_side, trained, user_content, item_content, codes)
    return evaluate(protocol, sc, threads)


def eval_marketing(trained, split, user_content, item_content, ks=DEFAULT_KS, n_negatives=1000,
                   seed=0, threads=1, policy="mirror", metric="euclidean") -> list:
    """Potential-user accuracy for warm test items and for cold items, as two reports."""
    _, D = model_codes(trained, user_content, item_content)
    user_codes = None
    if policy == "constrained":
        user_codes, _ = model_codes(trained, user_content, item_content)
    scorer = MarketingScorer(trained, D, user_content, policy, user_codes, metric)
    known = split.all_ratings()
    reports = []
    for name, test in (("marketing-warm", split.warm_test), ("marketing-cold", split.cold_item)):
        protocol = EvalProtocol(test, known, "item", n_negatives, tuple(ks), seed, setting=name)
        reports.append(evaluate(protocol, scorer, threads))
    return reports
