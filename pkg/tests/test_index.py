import numpy as np
import pytest

from cghash.codes import BinaryCodeMatrix, pack_bits
from cghash.errors import KExceedsN, LengthMismatch
from cghash.index import HammingIndex, bench, hamming_distance, hamming_distances, real_top_k, top_k

import oracles


class TestHammingDistance:
    def test_identical(self, rng):
        c = pack_bits(rng.integers(0, 2, 50))
        assert hamming_distance(c, c) == 0

    def test_four_bits(self):
        assert hamming_distance(pack_bits([1, 0, 1, 0]), pack_bits([0, 1, 1, 0])) == 2

    def test_random_pairs_match_bit_loop(self, rng):
        a = rng.integers(0, 2, size=(1000, 50))
        b = rng.integers(0, 2, size=(1000, 50))
        pa, pb = pack_bits(a), pack_bits(b)
        for n in range(1000):
            loop = sum(1 for k in range(50) if a[n, k] != b[n, k])
            assert hamming_distance(pa[n], pb[n]) == loop

    def test_vectorized_matches_scalar(self, rng):
        codes = BinaryCodeMatrix.from_bits(rng.integers(0, 2, size=(200, 130)))
        q = codes.code(17)
        d = hamming_distances(codes, q)
        assert d.tolist() == [hamming_distance(codes.code(i), q) for i in range(200)]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            hamming_distance(np.zeros(1, np.uint64), np.zeros(2, np.uint64))


class TestTopK:
    def test_query_in_index_ranks_first(self, rng):
        bits = rng.integers(0, 2, size=(300, 16))
        bits[250] = bits[40]  # duplicate: the lower id must win
        idx = HammingIndex.from_bits(bits)
        res = top_k(idx, idx.codes.code(250), 3)
        assert res.ids[0] == 40 and res.scores[0] == 0 and res.ids[1] == 250

    @pytest.mark.parametrize("r", [8, 50, 70])
    def test_matches_brute_force(self, rng, r):
        bits = rng.integers(0, 2, size=(2000, r))
        idx = HammingIndex.from_bits(bits)
        for _ in range(20):
            qb = rng.integers(0, 2, r)
            got = top_k(idx, pack_bits(qb), 25).pairs()
            want = [(i, d) for d, i in oracles.brute_hamming_rank(bits, qb, 25)]
            assert got == want

    def test_k_equals_n_is_permutation(self, rng):
        bits = rng.integers(0, 2, size=(64, 6))
        res = top_k(HammingIndex.from_bits(bits), pack_bits(bits[3]), 64)
        assert sorted(res.ids.tolist()) == list(range(64))
        assert np.all(np.diff(res.scores) >= 0)

    def test_external_ids(self, rng):
        bits = rng.integers(0, 2, size=(10, 8))
        idx = HammingIndex.from_bits(bits, ids=np.arange(100, 110))
        assert top_k(idx, pack_bits(bits[4]), 1).ids.tolist() == [104]

    def test_errors(self, rng):
        idx = HammingIndex.from_bits(rng.integers(0, 2, size=(5, 8)))
        with pytest.raises(KExceedsN):
            top_k(idx, idx.codes.code(0), 6)
        with pytest.raises(ValueError):
            top_k(idx, idx.codes.code(0), 0)
        with pytest.raises(LengthMismatch):
            top_k(idx, np.zeros(2, np.uint64), 1)

    def test_read_only_query(self, rng):
        idx = HammingIndex.from_bits(rng.integers(0, 2, size=(5, 8)))
        q = idx.codes.code(2)
        assert not q.flags.writeable
        assert top_k(idx, q, 1).ids.tolist() == [2]


class TestRealTopK:
    def test_self_ranks_first(self, rng):
        V = rng.standard_normal((500, 8))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        assert real_top_k(V, V[123], 1).ids.tolist() == [123]

    def test_matches_brute_force(self, rng):
        V = rng.standard_normal((1000, 8))
        for _ in range(10):
            q = rng.standard_normal(8)
            res = real_top_k(V, q, 20)
            want = oracles.brute_inner_rank(V, q, 20)
            assert res.ids.tolist() == [i for i, _ in want]
            np.testing.assert_allclose(res.scores, [s for _, s in want], rtol=1e-12)

    def test_k_one_is_argmax(self, rng):
        V = rng.standard_normal((300, 5))
        q = rng.standard_normal(5)
        assert real_top_k(V, q, 1).ids[0] == np.argmax(V @ q)

    def test_ties_by_id(self):
        V = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
        assert real_top_k(V, np.array([1.0, 0.0]), 3).ids.tolist() == [0, 2, 3]

    def test_float32(self, rng):
        V = rng.standard_normal((100, 4)).astype(np.float32)
        q = V[7].copy()
        assert real_top_k(V, q, 1).ids.tolist() == [int(np.argmax(V @ q))]


class TestBench:
    def test_small_run(self):
        res = bench(sizes=(1000, 4000), r=50, k=10, trials=2)
        assert [row[:2] for row in res.rows] == [(1000, "hamming"), (1000, "real"), (4000, "hamming"), (4000, "real")]
        lines = res.to_csv().splitlines()
        assert lines[0] == "n,backend,k,r,median_seconds" and len(lines) == 5
        assert all(t > 0 for *_, t in res.rows)

    def test_default_has_five_sizes(self):
        from cghash.index import BENCH_SIZES

        assert BENCH_SIZES == (80_000, 160_000, 320_000, 640_000, 1_280_000)

    def test_rankings_independent_of_trials(self):
        a = bench(sizes=(2000,), trials=1)
        b = bench(sizes=(2000,), trials=9)
        for key in a.rankings:
            assert a.rankings[key].tolist() == b.rankings[key].tolist()

    def test_sizes_must_ascend(self):
        with pytest.raises(ValueError):
            bench(sizes=(10, 5))
