"""Top-k retrieval cost: packed codes with popcount against float inner products.

Run: python demos/05_hamming_vs_real.py
"""
# %%
import numpy as np

from cghash.index import HammingIndex, bench, real_top_k, top_k

# %% [markdown]
# Both rankings break ties by ascending id, so the outputs are exact and
# reproducible.

# %%
g = np.random.default_rng(0)
vecs = g.standard_normal((10_000, 50))
index = HammingIndex.from_bits(vecs >= 0)
q = g.standard_normal(50)
print("hamming top-5:", top_k(index, index.codes.code(0), 5).pairs())
print("real top-5 ids:", real_top_k(vecs, q, 5).ids.tolist())

# %%
res = bench(sizes=(80_000, 320_000, 1_280_000), r=50, k=10, trials=5)
print(f"{'n':>10} {'hamming ms':>11} {'real ms':>9} {'speedup':>8}")
for n, h, r in res.wide():
    print(f"{n:>10} {h * 1e3:11.2f} {r * 1e3:9.2f} {r / h:8.1f}")
