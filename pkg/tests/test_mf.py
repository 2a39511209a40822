import numpy as np
import pytest

from cghash.data import SparseRatings
from cghash.errors import CorruptArtifact, DimensionMismatch
from cghash.mf import (
    LatentFactors,
    MfConfig,
    factorize,
    load_factors,
    mf_objective,
    read_factor_matrix,
    save_factors,
    write_factor_matrix,
)


def _objective_loop(R, P, Q, cfg):
    """Every (i, j) cell visited explicitly, implicit zeros included."""
    total = 0.0
    for i in range(R.shape[0]):
        for j in range(R.shape[1]):
            c = cfg.a if R[i, j] else cfg.b
            pred = sum(P[i, k] * Q[j, k] for k in range(P.shape[1]))
            total += c * (R[i, j] - pred) ** 2
    return total + cfg.reg * (np.sum(P**2) + np.sum(Q**2))


class TestObjective:
    def test_zero_factors_one_positive(self):
        r = SparseRatings([0], [0], 2, 2)
        f = LatentFactors(np.zeros((2, 3)), np.zeros((2, 3)))
        assert mf_objective(r, f, MfConfig(r=3, a=1.0, reg=0.0)) == 1.0

    def test_exact_factorization(self):
        # rank-1 block: users {0, 1} x items {1, 2}, no implicit cell predicts nonzero
        r = SparseRatings([0, 0, 1, 1], [1, 2, 1, 2], 3, 3)
        P = np.array([[1.0], [1.0], [0.0]])
        Q = np.array([[0.0], [1.0], [1.0]])
        assert mf_objective(r, LatentFactors(P, Q), MfConfig(r=1, reg=0.0)) == 0.0

    def test_matches_double_loop(self, rng, small_ratings):
        cfg = MfConfig(r=4, a=1.0, b=0.05, reg=0.3)
        P = rng.standard_normal((small_ratings.n_users, 4))
        Q = rng.standard_normal((small_ratings.n_items, 4))
        R = small_ratings.to_csr().toarray()
        got = mf_objective(small_ratings, LatentFactors(P, Q), cfg)
        assert got == pytest.approx(_objective_loop(R, P, Q, cfg), rel=1e-12)

    def test_dimension_check(self, small_ratings):
        f = LatentFactors(np.zeros((3, 2)), np.zeros((small_ratings.n_items, 2)))
        with pytest.raises(DimensionMismatch):
            mf_objective(small_ratings, f, MfConfig(r=2))


class TestFactorize:
    def test_rank_one_recovery(self):
        g = np.random.default_rng(0)
        p, q = g.random(30) < 0.5, g.random(25) < 0.5
        u, i = np.nonzero(np.outer(p, q))
        r = SparseRatings(u, i, 30, 25)
        f = factorize(r, MfConfig(r=1, a=1.0, b=1e-3, reg=1e-9, iters=30))
        pred = np.einsum("ij,ij->i", f.P[u], f.Q[i])
        assert np.max(np.abs(1 - pred)) < 1e-3

    def test_monotone_objective(self, small_ratings):
        hist = []
        factorize(small_ratings, MfConfig(r=6, iters=12), history=hist)
        assert len(hist) == 13
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))

    def test_shape(self, small_ratings):
        f = factorize(small_ratings, MfConfig(r=50, iters=2))
        assert f.P.shape == (40, 50) and f.Q.shape == (30, 50)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            factorize(SparseRatings.empty(3, 3), MfConfig(r=2))

    def test_seed_and_thread_determinism(self, small_ratings):
        cfg = MfConfig(r=5, iters=4, seed=11)
        a = factorize(small_ratings, cfg)
        b = factorize(small_ratings, cfg, threads=4)
        assert a.P.tobytes() == b.P.tobytes() and a.Q.tobytes() == b.Q.tobytes()

    @pytest.mark.parametrize("kw", [dict(r=0), dict(a=0.01, b=0.1), dict(reg=-1.0), dict(iters=-1)])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            MfConfig(**kw).validate()

    def test_zero_rows(self, toy_factors):
        z = toy_factors.zero_rows(users=[1, 2], items=[0])
        assert not z.P[[1, 2]].any() and not z.Q[0].any()
        assert toy_factors.P[1].any()  # original untouched


class TestFactorFiles:
    def test_round_trip_bytes(self, tmp_path, toy_factors):
        save_factors(toy_factors, tmp_path / "a")
        back = load_factors(tmp_path / "a")
        np.testing.assert_array_equal(back.P, toy_factors.P)
        save_factors(back, tmp_path / "b")
        for name in ("P.bin", "Q.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_corrupt(self, tmp_path):
        p = tmp_path / "P.bin"
        write_factor_matrix(np.ones((3, 2)), p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(CorruptArtifact):
            read_factor_matrix(p)
        p.write_bytes(b"nope")
        with pytest.raises(CorruptArtifact):
            read_factor_matrix(p)
