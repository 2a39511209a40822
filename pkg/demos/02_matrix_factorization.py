"""Weighted ALS on implicit feedback; the objective falls every sweep.

Run: python demos/02_matrix_factorization.py
"""
# %%
import numpy as np

from cghash.data import split_dataset
from cghash.mf import MfConfig, factorize
from cghash.synthetic import make_planted

pl = make_planted(n_users=800, n_items=800, r=16, seed=1)
split = split_dataset(pl.ratings, seed=1)

# %%
history = []
cfg = MfConfig(r=16, a=1.0, b=0.01, reg=0.1, iters=8, seed=1)
factors = factorize(split.warm_train, cfg, history=history)
for sweep, obj in enumerate(history):
    print(f"sweep {sweep}: objective {obj:12.4f}")
assert all(b <= a for a, b in zip(history, history[1:]))

# %% [markdown]
# Observed positives should score higher than random unobserved cells.

# %%
tr = split.warm_train
pos = np.einsum("ij,ij->i", factors.P[tr.users], factors.Q[tr.items])
g = np.random.default_rng(0)
rand = np.einsum("ij,ij->i", factors.P[g.integers(0, tr.n_users, 5000)], factors.Q[g.integers(0, tr.n_items, 5000)])
print(f"mean score: positives {pos.mean():.3f}, random cells {rand.mean():.3f}")
