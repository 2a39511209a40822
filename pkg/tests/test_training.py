import math

import numpy as np
import pytest

from cghash.data import ContentMatrix
from cghash.errors import DimensionMismatch, DomainError, EmptyTrainingSet, LengthMismatch
from cghash.mf import LatentFactors
from cghash.model import init_model
from cghash.training import (
    Batch,
    TrainConfig,
    TrainingData,
    forward_backward,
    gradient_check,
    input_stats,
    kl_bernoulli,
    load_trained,
    loss,
    save_trained,
    train,
)

import oracles


def _toy(seed, n_users=4, n_items=4, d_user=3, d_item=2, r=3, hidden=(4,)):
    g = np.random.default_rng(seed)
    R = (g.random((n_users, n_items)) < 0.5).astype(float)
    X = {"user": g.random((n_users, d_user)), "item": g.random((n_items, d_item))}
    F = {"user": g.standard_normal((n_users, r)), "item": g.standard_normal((n_items, r))}
    m = init_model(d_user, d_item, r, hidden=hidden, seed=seed)
    for side in ("user", "item"):
        m.codebooks[side] = g.standard_normal(m.codebooks[side].shape)
        m.offsets[side] = g.random(m.codebooks[side].shape[0])
        m.priors[side] = g.uniform(0.2, 0.8, r)
        enc = m.encoders[side]
        enc.input_shift = g.random(enc.in_dim)
        enc.input_scale = g.uniform(0.5, 2.0, enc.in_dim)
        for b in enc.biases:
            b[:] = g.standard_normal(b.shape)
    data = TrainingData(X["user"], X["item"], LatentFactors(F["user"], F["item"]))
    return R, X, F, m, data


class TestKL:
    def test_identical(self):
        assert kl_bernoulli([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert kl_bernoulli([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_scalar(self):
        expected = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
        assert kl_bernoulli([0.8], [0.5]) == pytest.approx(expected, rel=1e-14)
        assert kl_bernoulli([0.8], [0.5]) == pytest.approx(0.19274, abs=1e-5)

    def test_non_negative(self, rng):
        for _ in range(50):
            q, rho = rng.uniform(0.01, 0.99, 6), rng.uniform(0.01, 0.99, 6)
            assert kl_bernoulli(q, rho) >= 0

    def test_domain(self):
        with pytest.raises(DomainError):
            kl_bernoulli([1.0], [0.5])
        with pytest.raises(LengthMismatch):
            kl_bernoulli([0.5, 0.5], [0.5])


class TestLoss:
    @pytest.mark.parametrize("mode", ["warm", "cold-item", "cold-user", "full"])
    @pytest.mark.parametrize("code_mode", ["threshold", "relaxed"])
    def test_matches_brute_force(self, mode, code_mode):
        R, X, F, m, data = _toy(5)
        cfg = TrainConfig(mode=mode, lam_user=0.7, lam_item=1.3, kl_weight=0.4, reg_weight=0.05,
                          a=1.0, b=0.1, code_mode=code_mode)
        got = loss(Batch.full(R, cfg.a, cfg.b), m, cfg, data).total
        want = oracles.objective(R, X, F, m, mode, {"user": 0.7, "item": 1.3}, 0.4, 0.05, 1.0, 0.1, code_mode)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))

    def test_two_by_two(self):
        R, X, F, m, data = _toy(8, n_users=2, n_items=2, hidden=())
        cfg = TrainConfig(mode="full", lam_user=1.0, lam_item=1.0, kl_weight=1.0, reg_weight=0.0)
        got = loss(Batch.full(R, cfg.a, cfg.b), m, cfg, data).total
        want = oracles.objective(R, X, F, m, "full", {"user": 1.0, "item": 1.0}, 1.0, 0.0, cfg.a, cfg.b, "threshold")
        assert got == pytest.approx(want, abs=1e-12)

    def test_perfect_fit_is_zero(self):
        # zero encoder -> q = 0.5 = rho, threshold codes all ones, so delta = 1 everywhere
        m = init_model(3, 2, 4, hidden=(), seed=0)
        for side, enc in m.encoders.items():
            enc.weights[0][:] = 0.0
            m.codebooks[side] = np.arange(m.codebooks[side].size, dtype=float).reshape(-1, 4)
        R = np.ones((2, 2))
        Xu = np.tile(m.codebooks["user"] @ np.ones(4), (2, 1))
        Xi = np.tile(m.codebooks["item"] @ np.ones(4), (2, 1))
        data = TrainingData(Xu, Xi, LatentFactors(np.ones((2, 4)), np.ones((2, 4))))
        cfg = TrainConfig(mode="full", lam_user=1.0, lam_item=1.0, kl_weight=1.0, reg_weight=0.0)
        lb = loss(Batch.full(R, cfg.a, cfg.b), m, cfg, data)
        assert lb.total == 0.0

    def test_warm_gates_content_terms(self):
        R, X, F, m, data = _toy(2)
        lb = loss(Batch.full(R, 1.0, 0.1), m, TrainConfig(mode="warm", lam_user=5.0, lam_item=5.0), data)
        assert lb.recon_user == lb.recon_item == lb.kl_user == lb.kl_item == 0.0
        assert lb.rating_loss > 0

    def test_cold_item_gates_user_side(self):
        R, X, F, m, data = _toy(2)
        lb = loss(Batch.full(R, 1.0, 0.1), m, TrainConfig(mode="cold-item"), data)
        assert lb.recon_user == lb.kl_user == 0.0
        assert lb.recon_item > 0 and lb.kl_item > 0

    def test_duplicate_entities_counted_once(self):
        R, X, F, m, data = _toy(3)
        cfg = TrainConfig(mode="full", reg_weight=0.0)
        b = Batch.from_pairs([0, 0, 0], [1, 2, 3], [1, 0, 1], cfg.a, cfg.b)
        lb = loss(b, m, cfg, data)
        b1 = Batch.from_pairs([0], [1], [1], cfg.a, cfg.b)
        assert lb.recon_user == pytest.approx(loss(b1, m, cfg, data).recon_user, rel=1e-14)

    def test_dimension_check(self):
        R, X, F, m, data = _toy(3)
        bad = TrainingData(np.zeros((4, 5)), X["item"], LatentFactors(F["user"], F["item"]))
        with pytest.raises(DimensionMismatch):
            loss(Batch.full(R, 1.0, 0.1), m, TrainConfig(), bad)


class TestGradients:
    @pytest.mark.parametrize("mode", ["warm", "cold-item", "cold-user", "full"])
    @pytest.mark.parametrize("hidden", [(), (5,), (6, 4)])
    def test_finite_differences(self, mode, hidden):
        R, X, F, m, data = _toy(11, hidden=hidden)
        cfg = TrainConfig(mode=mode, lam_user=0.5, lam_item=0.8, kl_weight=0.3, reg_weight=0.01, b=0.2)
        err = gradient_check(m, Batch.full(R, cfg.a, cfg.b), cfg, data, eps=1e-5, n_checks=80, seed=1)
        assert err < 1e-4

    def test_inactive_codebooks_get_zero_gradient(self):
        R, X, F, m, data = _toy(4)
        cfg = TrainConfig(mode="warm", reg_weight=0.1)
        _, grads = forward_backward(Batch.full(R, 1.0, 0.1), m, cfg, data, code_mode="relaxed")
        assert not grads["codebook.user"].any() and not grads["codebook.item"].any()

    def test_all_weights_zero(self):
        R, X, F, m, data = _toy(4)
        cfg = TrainConfig(mode="full", lam_user=0.0, lam_item=0.0, kl_weight=0.0, reg_weight=0.0)
        _, grads = forward_backward(Batch.full(R, 1.0, 0.1), m, cfg, data, code_mode="relaxed")
        assert not grads["codebook.user"].any() and not grads["codebook.item"].any()

    def test_codebook_gradient_linear_in_precision(self):
        R, X, F, m, data = _toy(6)
        batch = Batch.full(R, 1.0, 0.1)
        grads = []
        for lam in (0.4, 0.8):
            cfg = TrainConfig(mode="full", lam_item=lam, reg_weight=0.0)
            grads.append(forward_backward(batch, m, cfg, data, code_mode="relaxed")[1]["codebook.item"])
        np.testing.assert_allclose(grads[1], 2 * grads[0], rtol=1e-14)

    def test_sampled_codes_need_rng(self):
        R, X, F, m, data = _toy(4)
        with pytest.raises(ValueError):
            forward_backward(Batch.full(R, 1.0, 0.1), m, TrainConfig(), data, code_mode="sample")


def _dense(rows):
    return ContentMatrix(np.asarray(rows, dtype=float))


class TestTrain:
    def _setup(self, small_split, toy_factors):
        g = np.random.default_rng(9)
        uc = _dense(g.random((small_split.n_users, 6)))
        ic = _dense(g.random((small_split.n_items, 5)))
        return uc, ic

    def test_zero_epochs_keeps_model(self, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        m0 = init_model(6, 5, 8, hidden=(7,), seed=2)
        out = train(small_split, uc, ic, toy_factors, TrainConfig(epochs=0), model=m0.copy())
        assert out.curve == [] and out.model.allclose(m0)

    def test_seed_determinism(self, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        cfg = TrainConfig(mode="full", epochs=3, hidden=(7,), batch_size=32, seed=4)
        a = train(small_split, uc, ic, toy_factors, cfg)
        b = train(small_split, uc, ic, toy_factors, cfg)
        for (n, x), (_, y) in zip(a.model.named_tensors(), b.model.named_tensors()):
            assert x.tobytes() == y.tobytes(), n
        assert [c.total for c in a.curve] == [c.total for c in b.curve]

    def test_inactive_codebook_untouched(self, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        m0 = init_model(6, 5, 8, hidden=(7,), seed=2)
        out = train(small_split, uc, ic, toy_factors, TrainConfig(mode="cold-item", epochs=2, batch_size=32),
                    model=m0.copy())
        np.testing.assert_array_equal(out.model.codebooks["user"], m0.codebooks["user"])
        assert not np.array_equal(out.model.codebooks["item"], m0.codebooks["item"])

    def test_cold_rows_zeroed(self, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        out = train(small_split, uc, ic, toy_factors, TrainConfig(epochs=1, hidden=(4,)))
        assert not out.factors.P[small_split.cold_user_ids].any()
        assert not out.factors.Q[small_split.cold_item_ids].any()
        assert toy_factors.P[small_split.cold_user_ids].any()

    def test_input_stats_standardize(self, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        data = TrainingData(uc, ic, toy_factors)
        ids = np.arange(10)
        shift, scale = input_stats(data, "user", ids)
        Z = (np.hstack([uc.dense(ids), toy_factors.P[ids]]) - shift) * scale
        np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1, rtol=1e-12)

    def test_empty_training_set(self, small_split, toy_factors):
        from dataclasses import replace

        uc, ic = self._setup(small_split, toy_factors)
        empty = replace(small_split, warm_train=small_split.warm_train.subset(np.zeros(len(small_split.warm_train), bool)))
        with pytest.raises(EmptyTrainingSet):
            train(empty, uc, ic, toy_factors, TrainConfig(epochs=1))

    @pytest.mark.parametrize("kw", [dict(mode="bogus"), dict(code_mode="x"), dict(a=0.1, b=0.2),
                                    dict(corruption=1.0), dict(batch_size=0), dict(kl_weight=-1)])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw).validate()

    def test_checkpoint_round_trip(self, tmp_path, small_split, toy_factors):
        uc, ic = self._setup(small_split, toy_factors)
        out = train(small_split, uc, ic, toy_factors, TrainConfig(epochs=1, hidden=(4,)))
        save_trained(out, tmp_path / "ckpt")
        back = load_trained(tmp_path / "ckpt", toy_factors)
        assert back.model.allclose(out.model)
        np.testing.assert_array_equal(back.cold_user_ids, small_split.cold_user_ids)
        np.testing.assert_array_equal(back.factors.P, out.factors.P)
        save_trained(back, tmp_path / "ckpt2")
        assert (tmp_path / "ckpt").read_bytes() == (tmp_path / "ckpt2").read_bytes()
