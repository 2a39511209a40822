"""Ratings, content features and the warm/cold split.

Run: python demos/01_data_and_split.py
"""
# %%
from collections import Counter

import numpy as np

from cghash.data import SparseRatings, split_dataset, tfidf_select
from cghash.synthetic import make_planted

# %% [markdown]
# Content arrives as raw term counts per entity. TF-IDF keeps the top-d terms
# by corpus score (total count times ln(N / document frequency)).

# %%
docs = [
    Counter(hashing=3, binary=2, codes=1),
    Counter(hashing=1, matrix=4, factorization=2),
    Counter(cold=2, start=2, items=1, codes=1),
]
content = tfidf_select(docs, d=4)
print("kept terms:", content.vocabulary)
print(np.round(content.dense(), 3))

# %% [markdown]
# Planted data follows the generative story: random codes, content drawn
# around codebook @ code, a rating wherever two codes are similar enough.

# %%
pl = make_planted(n_users=600, n_items=600, r=16, d_user=32, d_item=32, seed=0)
R = pl.ratings
print(f"{R.n_users} users x {R.n_items} items, {len(R)} ratings, density {len(R) / (R.n_users * R.n_items):.3%}")

# %%
split = split_dataset(R, cold_threshold=5, warm_test_frac=0.2, seed=0)
for name, part in split.parts().items():
    print(f"{name:>10}: {len(part):6d} ratings")
print("cold users:", len(split.cold_user_ids), " cold items:", len(split.cold_item_ids))

# a cold item never shows up in warm training
assert not np.isin(split.warm_train.items, split.cold_item_ids).any()

# %%
tiny = SparseRatings([0, 1, 1], [2, 0, 2], 2, 3)
print(tiny.to_csr().toarray())
