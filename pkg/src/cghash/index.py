"""Linear-scan top-k ranking in Hamming space and in real space.

Both backends scan every row once and keep a bounded max-heap of the k best
candidates seen so far; nothing ever sorts all n scores. Ties are broken by
ascending id.
"""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass

import numba
import numpy as np

from .codes import BinaryCodeMatrix, pack_bits
from .errors import KExceedsN, LengthMismatch

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@numba.njit(inline="always", cache=True)
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@numba.njit(cache=True)
def _hamming_rows(db, q):
    n, w = db.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = np.uint64(0)
        for j in range(w):
            s += _popcount(db[i, j] ^ q[j])
        out[i] = np.int64(s)
    return out


@numba.njit(cache=True)
def _sift_down_int(heap, pos, size):
    # max-heap on packed int64 keys
    while True:
        left = 2 * pos + 1
        if left >= size:
            return
        big = left
        right = left + 1
        if right < size and heap[right] > heap[left]:
            big = right
        if heap[big] <= heap[pos]:
            return
        heap[pos], heap[big] = heap[big], heap[pos]
        pos = big


@numba.njit(cache=True)
def _hamming_topk_kernel(db, q, k):
    # key = (distance << 32) | id, so integer order is exactly (distance, id)
    n, w = db.shape
    heap = np.empty(k, dtype=np.int64)
    size = 0
    for i in range(n):
        s = np.uint64(0)
        for j in range(w):
            s += _popcount(db[i, j] ^ q[j])
        key = (np.int64(s) << 32) | i
        if size < k:
            heap[size] = key
            c = size
            size += 1
            while c > 0:
                p = (c - 1) // 2
                if heap[p] >= heap[c]:
                    break
                heap[p], heap[c] = heap[c], heap[p]
                c = p
        elif key < heap[0]:
            heap[0] = key
            _sift_down_int(heap, 0, size)
    heap.sort()
    return heap


@numba.njit(cache=True)
def _worse(sa, ia, sb, ib):
    # true when candidate a ranks below candidate b (lower score, or equal score and larger id)
    return sa < sb or (sa == sb and ia > ib)


@numba.njit(cache=True)
def _real_topk_kernel(vecs, q, k):
    n, r = vecs.shape
    hs = np.empty(k, dtype=np.float64)
    hi = np.empty(k, dtype=np.int64)
    size = 0
    for i in range(n):
        s = 0.0
        for j in range(r):
            s += vecs[i, j] * q[j]
        if size < k:
            hs[size] = s
            hi[size] = i
            c = size
            size += 1
            # min-heap on rank quality: root is the worst kept candidate
            while c > 0:
                p = (c - 1) // 2
                if not _worse(hs[c], hi[c], hs[p], hi[p]):
                    break
                hs[p], hs[c] = hs[c], hs[p]
                hi[p], hi[c] = hi[c], hi[p]
                c = p
        elif _worse(hs[0], hi[0], s, i):
            hs[0] = s
            hi[0] = i
            pos = 0
            while True:
                left = 2 * pos + 1
                if left >= size:
                    break
                w = left
                if left + 1 < size and _worse(hs[left + 1], hi[left + 1], hs[left], hi[left]):
                    w = left + 1
                if not _worse(hs[w], hi[w], hs[pos], hi[pos]):
                    break
                hs[pos], hs[w] = hs[w], hs[pos]
                hi[pos], hi[w] = hi[w], hi[pos]
                pos = w
    return hs, hi


@dataclass(frozen=True)
class RankedList:
    ids: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.ids)

    def pairs(self):
        return list(zip(self.ids.tolist(), self.scores.tolist()))


def hamming_distance(c1, c2) -> int:
    """Number of differing bits between two packed codes (uint64 word arrays)."""
    a = np.atleast_1d(np.asarray(c1, dtype=np.uint64))
    b = np.atleast_1d(np.asarray(c2, dtype=np.uint64))
    if a.shape != b.shape:
        raise LengthMismatch(f"code word counts differ: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a ^ b).sum())


def hamming_distances(codes: BinaryCodeMatrix, query) -> np.ndarray:
    q = np.array(query, dtype=np.uint64)
    if q.shape != (codes.words.shape[1],):
        raise LengthMismatch("query word count does not match index")
    return _hamming_rows(codes.words, q)


class HammingIndex:
    """Immutable packed-code index; ``ids[row]`` is the external id of a row."""

    def __init__(self, codes: BinaryCodeMatrix, ids=None):
        self.codes = codes
        if ids is None:
            ids = np.arange(codes.n, dtype=np.int64)
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) != codes.n:
            raise LengthMismatch("id list length differs from code count")
        if len(ids) > 1 and np.any(np.diff(ids) <= 0):
            raise ValueError("ids must be strictly ascending so row order equals id order")
        ids.setflags(write=False)
        self.ids = ids

    @classmethod
    def from_bits(cls, bits, ids=None):
        return cls(BinaryCodeMatrix.from_bits(bits), ids)

    @property
    def r(self):
        return self.codes.r

    def __len__(self):
        return self.codes.n

    def top_k(self, query, k: int) -> RankedList:
        return top_k(self, query, k)


def top_k(index: HammingIndex, query, k: int) -> RankedList:
    """The k codes nearest to ``query`` (packed words) by (distance, id)."""
    n = len(index)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KExceedsN(f"k={k} exceeds index size {n}")
    q = np.array(query, dtype=np.uint64)  # fresh writable copy: one compiled kernel signature
    if q.shape != (index.codes.words.shape[1],):
        raise LengthMismatch("query word count does not match index")
    keys = _hamming_topk_kernel(index.codes.words, q, k)
    rows = keys & 0xFFFFFFFF
    return RankedList(index.ids[rows], keys >> 32)


def real_top_k(vectors, query, k: int) -> RankedList:
    """The k rows with the largest inner product with ``query``; ties by row id."""
    vectors = np.asarray(vectors)
    if vectors.dtype not in (np.float32, np.float64):
        vectors = vectors.astype(np.float64)
    n = vectors.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KExceedsN(f"k={k} exceeds row count {n}")
    q = np.array(query, dtype=vectors.dtype)
    if q.shape != (vectors.shape[1],):
        raise LengthMismatch("query dimension does not match vectors")
    hs, hi = _real_topk_kernel(np.ascontiguousarray(vectors), q, k)
    order = np.lexsort((hi, -hs))
    return RankedList(hi[order], hs[order])


# ---------------------------------------------------------------- benchmark


@dataclass
class BenchResult:
    rows: list  # (n, backend, k, r, median_seconds)
    rankings: dict  # (n, backend) -> ids of the benchmark query

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "backend", "k", "r", "median_seconds"])
        for n, backend, k, r, t in self.rows:
            w.writerow([n, backend, k, r, f"{t:.6e}"])
        return buf.getvalue()

    def wide(self):
        """One row per size: (n, hamming_seconds, real_seconds)."""
        by = {(n, b): t for n, b, _, _, t in self.rows}
        sizes = sorted({n for n, *_ in self.rows})
        return [(n, by[(n, "hamming")], by[(n, "real")]) for n in sizes]


def _warmup():
    idx = HammingIndex.from_bits(np.zeros((4, 3), dtype=np.uint8))
    top_k(idx, idx.codes.code(0), 2)
    real_top_k(np.zeros((4, 3)), np.zeros(3), 2)
    real_top_k(np.zeros((4, 3), np.float32), np.zeros(3, np.float32), 2)


BENCH_SIZES = (80_000, 160_000, 320_000, 640_000, 1_280_000)


def bench(sizes=BENCH_SIZES, r=50, k=10, trials=5, seed=0,
          dtype=np.float64) -> BenchResult:
    """Time single-threaded top-k recommendation for one query per size.

    Item vectors are standard Gaussian; item codes are their signs. The user
    query is drawn the same way. Each backend is timed ``trials`` times on
    the same query and the median wall time is reported.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    _warmup()
    rows, rankings = [], {}
    for n in sizes:
        rng = np.random.default_rng([seed, n])
        vecs = rng.standard_normal((n, r)).astype(dtype, copy=False)
        query = rng.standard_normal(r).astype(dtype)
        index = HammingIndex(BinaryCodeMatrix(pack_bits(vecs >= 0), r))
        qcode = pack_bits(query >= 0)
        for backend, fn in (
            ("hamming", lambda: top_k(index, qcode, k)),
            ("real", lambda: real_top_k(vecs, query, k)),
        ):
            times = []
            for _ in range(trials):
                t0 = time.perf_counter()
                res = fn()
                times.append(time.perf_counter() - t0)
            rankings[(n, backend)] = res.ids
            rows.append((n, backend, k, r, statistics.median(times)))
        del vecs, index
    return BenchResult(rows, rankings)
