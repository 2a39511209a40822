"""Planted data drawn from the model's own generative process.

User and item codes are uniform random bits; content rows are
``codebook @ code + N(0, noise^2)``; user i rates item j iff
``1 - Hamming(b_i, d_j) / r >= threshold``. A chosen fraction of users and
items is thinned to fewer than ``cold_threshold`` ratings so that splitting
yields non-empty cold sets.

Codebook entries are drawn from U(0, codebook_max) so that content means
sit well above zero; any noisy weight that still lands below zero is
clipped to keep content non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import ContentMatrix, SparseRatings
from .index import hamming_distances
from .codes import BinaryCodeMatrix


@dataclass
class PlantedData:
    ratings: SparseRatings
    user_content: ContentMatrix
    item_content: ContentMatrix
    user_codes: np.ndarray
    item_codes: np.ndarray
    user_codebook: np.ndarray
    item_codebook: np.ndarray


def make_planted(n_users=1200, n_items=1200, r=32, d_user=64, d_item=64, threshold=0.7, noise=0.1,
                 codebook_max=0.3, cold_user_frac=0.1, cold_item_frac=0.1, cold_threshold=5,
                 seed=0) -> PlantedData:
    rng = np.random.default_rng(seed)
    B = rng.integers(0, 2, size=(n_users, r), dtype=np.uint8)
    D = rng.integers(0, 2, size=(n_items, r), dtype=np.uint8)
    Cu = rng.uniform(0, codebook_max, size=(d_user, r))
    Cv = rng.uniform(0, codebook_max, size=(d_item, r))
    U = np.clip(B @ Cu.T + noise * rng.standard_normal((n_users, d_user)), 0, None)
    V = np.clip(D @ Cv.T + noise * rng.standard_normal((n_items, d_item)), 0, None)

    max_dist = int(np.floor((1.0 - threshold) * r + 1e-9))
    item_index = BinaryCodeMatrix.from_bits(D)
    user_words = BinaryCodeMatrix.from_bits(B).words
    rows, cols = [], []
    for u in range(n_users):
        hit = np.flatnonzero(hamming_distances(item_index, user_words[u]) <= max_dist)
        rows.append(np.full(len(hit), u))
        cols.append(hit)
    users = np.concatenate(rows).astype(np.int64)
    items = np.concatenate(cols).astype(np.int64)

    keep = np.ones(len(users), dtype=bool)
    cold_items = rng.choice(n_items, size=int(round(cold_item_frac * n_items)), replace=False)
    cold_users = rng.choice(n_users, size=int(round(cold_user_frac * n_users)), replace=False)
    for side_ids, cold in ((items, np.sort(cold_items)), (users, np.sort(cold_users))):
        for e in cold:
            idx = np.flatnonzero((side_ids == e) & keep)
            if len(idx) >= cold_threshold:
                n_keep = int(rng.integers(1, cold_threshold))
                drop = rng.choice(idx, size=len(idx) - n_keep, replace=False)
                keep[drop] = False
    ratings = SparseRatings(users[keep], items[keep], n_users, n_items)
    return PlantedData(
        ratings,
        ContentMatrix(sp.csr_matrix(U), "user"),
        ContentMatrix(sp.csr_matrix(V), "item"),
        B, D, Cu, Cv,
    )
