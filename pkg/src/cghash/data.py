"""Rating and content ingestion, TF-IDF vocabulary selection, dataset splits."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    CorruptArtifact,
    DegenerateSplit,
    DimensionMismatch,
    DuplicateEntry,
    EmptyVocabulary,
    ParseError,
)

SIDES = ("user", "item")


def _frozen(a, dtype=np.int64):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseRatings:
    """Positive implicit-feedback entries, sorted by (user, item).

    Only ones are stored; every absent pair is an implicit zero.
    """

    users: np.ndarray
    items: np.ndarray
    n_users: int
    n_items: int

    def __post_init__(self):
        u = np.asarray(self.users, dtype=np.int64)
        i = np.asarray(self.items, dtype=np.int64)
        if u.shape != i.shape or u.ndim != 1:
            raise DimensionMismatch("users and items must be 1-d arrays of equal length")
        if len(u) and (u.min() < 0 or i.min() < 0 or u.max() >= self.n_users or i.max() >= self.n_items):
            raise DimensionMismatch("rating index out of range")
        order = np.lexsort((i, u))
        u, i = u[order], i[order]
        if len(u) > 1:
            dup = (u[1:] == u[:-1]) & (i[1:] == i[:-1])
            if dup.any():
                k = int(np.argmax(dup))
                raise DuplicateEntry(f"duplicate pair ({u[k]}, {i[k]})")
        object.__setattr__(self, "users", _frozen(u))
        object.__setattr__(self, "items", _frozen(i))
        object.__setattr__(self, "n_users", int(self.n_users))
        object.__setattr__(self, "n_items", int(self.n_items))

    @classmethod
    def empty(cls, n_users=0, n_items=0):
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), n_users, n_items)

    def __len__(self):
        return len(self.users)

    def __eq__(self, other):
        if not isinstance(other, SparseRatings):
            return NotImplemented
        return (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
        )

    def pairs(self):
        return np.column_stack([self.users, self.items])

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self), dtype=np.float64)
        return sp.csr_matrix((data, (self.users, self.items)), shape=(self.n_users, self.n_items))

    def subset(self, mask) -> SparseRatings:
        return SparseRatings(self.users[mask], self.items[mask], self.n_users, self.n_items)

    def with_shape(self, n_users, n_items) -> SparseRatings:
        return SparseRatings(self.users, self.items, n_users, n_items)

    def user_counts(self):
        return np.bincount(self.users, minlength=self.n_users)

    def item_counts(self):
        return np.bincount(self.items, minlength=self.n_items)


def load_ratings(path) -> SparseRatings:
    """Read ``user<TAB>item<TAB>value`` lines.

    Any whitespace separates fields. Values must lie in [0, 1]; positive
    values become 1, zeros are dropped (implicit). Identical repeated pairs
    collapse, a pair given both a zero and a positive value is a
    ``DuplicateEntry``. Dimensions are one past the largest index seen.
    """
    path = Path(path)
    seen: dict[tuple[int, int], int] = {}
    max_u = max_i = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(parts)}")
            try:
                u, i, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if u < 0 or i < 0:
                raise ParseError(path, lineno, "negative index")
            if not 0.0 <= v <= 1.0:
                raise ParseError(path, lineno, f"value {v} outside [0, 1]")
            b = 1 if v > 0 else 0
            prev = seen.setdefault((u, i), b)
            if prev != b:
                raise DuplicateEntry(f"{path}:{lineno}: pair ({u}, {i}) given conflicting values")
            max_u, max_i = max(max_u, u), max(max_i, i)
    pos = [k for k, b in seen.items() if b]
    users = np.array([k[0] for k in pos], dtype=np.int64)
    items = np.array([k[1] for k in pos], dtype=np.int64)
    return SparseRatings(users, items, max_u + 1, max_i + 1)


def save_ratings(ratings: SparseRatings, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in zip(ratings.users.tolist(), ratings.items.tolist()):
            fh.write(f"{u}\t{i}\t1\n")


# ---------------------------------------------------------------- content


@dataclass(frozen=True, eq=False)
class ContentMatrix:
    """Sparse non-negative feature rows for one side (users or items)."""

    matrix: sp.csr_matrix
    side: str = "item"
    vocabulary: tuple = field(default=())

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        m.sort_indices()
        if m.nnz and m.data.min() < 0:
            raise ValueError("content weights must be non-negative")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self, rows=None) -> np.ndarray:
        m = self.matrix if rows is None else self.matrix[np.asarray(rows)]
        return m.toarray()

    def with_rows(self, n) -> ContentMatrix:
        """Pad with empty rows (or truncate) to exactly ``n`` entities."""
        m = self.matrix
        if n > m.shape[0]:
            m = sp.vstack([m, sp.csr_matrix((n - m.shape[0], m.shape[1]))], format="csr")
        else:
            m = m[:n]
        return ContentMatrix(m, self.side, self.vocabulary)


def load_content_counts(path) -> list[Counter]:
    """Read ``entity<TAB>term<TAB>count`` lines into one term counter per entity."""
    path = Path(path)
    rows: dict[int, Counter] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            try:
                e, term, c = int(parts[0]), parts[1], float(parts[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if e < 0 or c < 0:
                raise ParseError(path, lineno, "negative entity or count")
            rows.setdefault(e, Counter())[term] += c
    n = 1 + max(rows) if rows else 0
    return [rows.get(e, Counter()) for e in range(n)]


def tfidf_scores(raw_counts: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Corpus-level score per term: total count times ln(N / document frequency)."""
    n_docs = len(raw_counts)
    tf: Counter = Counter()
    df: Counter = Counter()
    for doc in raw_counts:
        for term, c in doc.items():
            if c > 0:
                tf[term] += c
                df[term] += 1
    return {t: tf[t] * math.log(n_docs / df[t]) for t in tf}


def tfidf_select(raw_counts: Sequence[Mapping[str, float]], d: int, side: str = "item") -> ContentMatrix:
    """Keep the ``d`` terms with the highest corpus TF-IDF score.

    Kept terms are indexed by descending score (ties by term), so column 0
    is the top-scoring term. If the vocabulary has fewer than ``d`` terms all
    of them are kept. Row weights are ``count * ln(N / df)``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not raw_counts:
        raise EmptyVocabulary("no documents")
    scores = tfidf_scores(raw_counts)
    if not scores:
        raise EmptyVocabulary("corpus contains no terms")
    kept = sorted(scores, key=lambda t: (-scores[t], t))[:d]
    col = {t: k for k, t in enumerate(kept)}
    n_docs = len(raw_counts)
    df: Counter = Counter(t for doc in raw_counts for t, c in doc.items() if c > 0)
    idf = {t: math.log(n_docs / df[t]) for t in kept}
    rows, cols, vals = [], [], []
    for e, doc in enumerate(raw_counts):
        for t, c in doc.items():
            k = col.get(t)
            if k is not None and c > 0:
                rows.append(e)
                cols.append(k)
                vals.append(c * idf[t])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n_docs, len(kept)), dtype=np.float64)
    return ContentMatrix(m, side, tuple(kept))


def save_content(content: ContentMatrix, path):
    """Text form: a header line then ``entity<TAB>feature<TAB>weight`` rows."""
    m = content.matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# side={content.side} n={content.n} dim={content.dim}\n")
        for r, c, v in zip(m.row[order].tolist(), m.col[order].tolist(), m.data[order].tolist()):
            fh.write(f"{r}\t{c}\t{v!r}\n")
    if content.vocabulary:
        with open(str(path) + ".vocab", "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(t + "\n" for t in content.vocabulary)


def load_content(path) -> ContentMatrix:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise CorruptArtifact(f"{path}: missing content header")
        try:
            meta = dict(kv.split("=") for kv in header[2:].split())
            side, n, dim = meta["side"], int(meta["n"]), int(meta["dim"])
        except (ValueError, KeyError):
            raise CorruptArtifact(f"{path}: bad content header {header!r}") from None
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, "expected 3 fields")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    vocab_path = Path(str(path) + ".vocab")
    vocab = ()
    if vocab_path.exists():
        vocab = tuple(vocab_path.read_text(encoding="utf-8").splitlines())
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, dim), dtype=np.float64)
    return ContentMatrix(m, side, vocab)


# ---------------------------------------------------------------- splits


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    warm_train: SparseRatings
    warm_test: SparseRatings
    cold_user: SparseRatings
    cold_item: SparseRatings
    cold_user_ids: np.ndarray
    cold_item_ids: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cold_user_ids", _frozen(self.cold_user_ids))
        object.__setattr__(self, "cold_item_ids", _frozen(self.cold_item_ids))

    @property
    def n_users(self):
        return self.warm_train.n_users

    @property
    def n_items(self):
        return self.warm_train.n_items

    def parts(self):
        return {
            "warm_train": self.warm_train,
            "warm_test": self.warm_test,
            "cold_user": self.cold_user,
            "cold_item": self.cold_item,
        }

    def all_ratings(self) -> SparseRatings:
        ps = list(self.parts().values())
        return SparseRatings(
            np.concatenate([p.users for p in ps]),
            np.concatenate([p.items for p in ps]),
            self.n_users,
            self.n_items,
        )

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            all(a == b for a, b in zip(self.parts().values(), other.parts().values()))
            and np.array_equal(self.cold_user_ids, other.cold_user_ids)
            and np.array_equal(self.cold_item_ids, other.cold_item_ids)
        )


def split_dataset(ratings: SparseRatings, cold_threshold: int = 5, warm_test_frac: float = 0.2,
                  seed: int = 0) -> DatasetSplit:
    """Partition ratings into warm train/test and cold-user/cold-item sets.

    Entities with fewer than ``cold_threshold`` ratings (but at least one)
    are cold. A rating touching a cold item goes to the cold-item set even
    when its user is also cold.
    """
    if cold_threshold < 1:
        raise ValueError("cold_threshold must be >= 1")
    if not 0.0 < warm_test_frac < 1.0:
        raise ValueError("warm_test_frac must lie in (0, 1)")
    ic = ratings.item_counts()
    uc = ratings.user_counts()
    cold_items = np.flatnonzero((ic > 0) & (ic < cold_threshold))
    cold_users = np.flatnonzero((uc > 0) & (uc < cold_threshold))
    in_ci = np.isin(ratings.items, cold_items)
    in_cu = np.isin(ratings.users, cold_users) & ~in_ci
    warm = np.flatnonzero(~in_ci & ~in_cu)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(warm))
    n_test = int(round(warm_test_frac * len(warm)))
    if len(warm) - n_test <= 0:
        raise DegenerateSplit("warm training set would be empty")
    test_mask = np.zeros(len(ratings), dtype=bool)
    test_mask[warm[perm[:n_test]]] = True
    train_mask = np.zeros(len(ratings), dtype=bool)
    train_mask[warm[perm[n_test:]]] = True
    return DatasetSplit(
        warm_train=ratings.subset(train_mask),
        warm_test=ratings.subset(test_mask),
        cold_user=ratings.subset(in_cu),
        cold_item=ratings.subset(in_ci),
        cold_user_ids=cold_users,
        cold_item_ids=cold_items,
    )


def save_split(split: DatasetSplit, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, part in split.parts().items():
        save_ratings(part, d / f"{name}.tsv")
    with open(d / "ids.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n_users\t{split.n_users}\n")
        fh.write(f"n_items\t{split.n_items}\n")
        for u in split.cold_user_ids.tolist():
            fh.write(f"cold_user\t{u}\n")
        for i in split.cold_item_ids.tolist():
            fh.write(f"cold_item\t{i}\n")


def load_split(directory) -> DatasetSplit:
    d = Path(directory)
    meta: dict[str, list[int]] = {"n_users": [], "n_items": [], "cold_user": [], "cold_item": []}
    try:
        for line in (d / "ids.tsv").read_text(encoding="utf-8").splitlines():
            key, val = line.split("\t")
            meta[key].append(int(val))
        n_users, n_items = meta["n_users"][0], meta["n_items"][0]
    except (OSError, ValueError, KeyError, IndexError) as exc:
        raise CorruptArtifact(f"{d}/ids.tsv: {exc}") from None
    parts = {}
    for name in ("warm_train", "warm_test", "cold_user", "cold_item"):
        p = d / f"{name}.tsv"
        if not p.exists():
            raise CorruptArtifact(f"missing split file {p}")
        parts[name] = load_ratings(p).with_shape(n_users, n_items)
    return DatasetSplit(cold_user_ids=meta["cold_user"], cold_item_ids=meta["cold_item"], **parts)
