"""Accuracy@k and MRR under sampled negatives, checked against chance.

Run: python demos/07_evaluation.py
"""
# %%
import math

import numpy as np

from cghash.data import SparseRatings
from cghash.evaluation import EvalProtocol, OracleScorer, RandomScorer, evaluate

g = np.random.default_rng(0)
n_users, n_items = 5000, 1500
test = SparseRatings(np.arange(n_users), g.integers(0, n_items, n_users), n_users, n_items)
protocol = EvalProtocol(test, test, n_negatives=1000, ks=(1, 10, 50, 100))

# %% [markdown]
# A random scorer places the true item uniformly among 1001 candidates:
# Accuracy@k is k / 1001 and MRR is H(1001) / 1001.

# %%
rep = evaluate(protocol, RandomScorer(), threads=4)
for k in rep.ks:
    print(f"Accuracy@{k:<3} {rep.accuracy(k):.4f}   expected {k / 1001:.4f}")
harmonic = math.fsum(1 / k for k in range(1, 1002))
print(f"MRR {rep.mrr:.5f}   expected {harmonic / 1001:.5f}")

# %%
print("oracle scorer MRR:", evaluate(protocol, OracleScorer(test)).mrr)
