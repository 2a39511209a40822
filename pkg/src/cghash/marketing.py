"""Potential-user mining for an item through the generative step.

item content -> item code d_j -> user code b_p -> synthetic user u_p = C_u b_p
-> nearest real users by content distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import BinaryCodeMatrix, pack_bits
from .data import ContentMatrix
from .errors import KExceedsN, LengthMismatch, MissingUserCodes
from .index import hamming_distances
from .model import decode, encode_map

POLICIES = ("mirror", "constrained")
METRICS = ("euclidean", "cosine")


def select_user_code(d_j, policy="mirror", user_codes: BinaryCodeMatrix | None = None):
    """User-side code maximizing similarity with item code ``d_j`` (unpacked bits).

    ``mirror`` returns ``d_j`` itself, the unconstrained maximizer.
    ``constrained`` returns the closest existing user code (ties: lowest user id).
    """
    d_j = np.asarray(d_j, dtype=np.uint8)
    if policy == "mirror":
        return d_j.copy()
    if policy != "constrained":
        raise ValueError(f"policy must be one of {POLICIES}")
    if user_codes is None:
        raise MissingUserCodes("constrained policy needs the user code matrix")
    if user_codes.r != len(d_j):
        raise LengthMismatch("item and user codes differ in length")
    dist = hamming_distances(user_codes, pack_bits(d_j))
    return user_codes.bits([int(np.argmin(dist))])[0]


def generate_user(b_p, model):
    """Synthetic user content: the decoder mean ``C_u @ b_p``."""
    return decode(b_p, "user", model)


def content_distances(u_p, user_content, candidates, metric="euclidean", batch=8192):
    candidates = np.asarray(candidates, dtype=np.int64)
    u_p = np.asarray(u_p, dtype=np.float64)
    out = np.empty(len(candidates))
    for lo in range(0, len(candidates), batch):
        ids = candidates[lo:lo + batch]
        if isinstance(user_content, ContentMatrix):
            X = user_content.dense(ids)
        else:
            X = np.asarray(user_content, dtype=np.float64)[ids]
        if X.shape[1] != u_p.shape[0]:
            raise LengthMismatch("synthetic user and user content differ in dimension")
        if metric == "euclidean":
            out[lo:lo + len(ids)] = np.sqrt(np.sum((X - u_p) ** 2, axis=1))
        elif metric == "cosine":
            denom = np.linalg.norm(X, axis=1) * np.linalg.norm(u_p)
            cos = np.divide(X @ u_p, denom, out=np.zeros(len(ids)), where=denom > 0)
            out[lo:lo + len(ids)] = 1.0 - cos
        else:
            raise ValueError(f"metric must be one of {METRICS}")
    return out


def knn_users(u_p, user_content, candidates, k, metric="euclidean"):
    """Exact k nearest candidates to ``u_p``; returns (ids, distances) by (distance, id)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if k > len(candidates):
        raise KExceedsN(f"k={k} exceeds {len(candidates)} candidates")
    dist = content_distances(u_p, user_content, candidates, metric)
    order = np.lexsort((candidates, dist))[:k]
    return candidates[order], dist[order]


@dataclass
class PotentialUserQuery:
    item_content: np.ndarray
    k: int
    item_factor: np.ndarray | None = None  # None for cold items (zero latent slot)
    candidates: np.ndarray | None = None
    policy: str = "mirror"
    metric: str = "euclidean"


@dataclass
class PotentialUserResult:
    u_p: np.ndarray
    b_p: np.ndarray
    user_ids: np.ndarray
    distances: np.ndarray

    def to_csv(self) -> str:
        lines = ["rank,user_id,distance"]
        lines += [f"{n},{u},{d!r}" for n, (u, d) in
                  enumerate(zip(self.user_ids.tolist(), self.distances.tolist()), 1)]
        return "\n".join(lines) + "\n"


def mine_potential_users(query: PotentialUserQuery, model, user_content,
                         user_codes: BinaryCodeMatrix | None = None) -> PotentialUserResult:
    """Rank real users by closeness to the user generated for an item.

    ``model`` is a CGHModel or a TrainedModel.
    """
    model = getattr(model, "model", model)
    n_users = user_content.n if isinstance(user_content, ContentMatrix) else len(user_content)
    candidates = np.arange(n_users) if query.candidates is None else np.asarray(query.candidates)
    f = np.zeros(model.r) if query.item_factor is None else np.asarray(query.item_factor, dtype=np.float64)
    d_j = encode_map(np.asarray(query.item_content, dtype=np.float64), f, "item", model)
    b_p = select_user_code(d_j, query.policy, user_codes)
    u_p = generate_user(b_p, model)
    ids, dist = knn_users(u_p, user_content, candidates, query.k, query.metric)
    return PotentialUserResult(u_p, b_p, ids, dist)
