"""Mining potential users for an item, including one nobody has rated.

Run: python demos/06_potential_users.py   (about half a minute)
"""
# %%
import numpy as np

from cghash.data import split_dataset
from cghash.evaluation import eval_marketing, model_codes
from cghash.marketing import PotentialUserQuery, mine_potential_users
from cghash.mf import MfConfig, factorize
from cghash.synthetic import make_planted
from cghash.training import TrainConfig, train

pl = make_planted(seed=0)
split = split_dataset(pl.ratings, seed=0)
factors = factorize(split.warm_train, MfConfig(r=32, iters=10))
trained = train(split, pl.user_content, pl.item_content, factors,
                TrainConfig(mode="full", hidden=(128,), epochs=20, corruption=0.1))

# %% [markdown]
# item content -> item code -> matching user code -> synthetic user -> nearest real users

# %%
item = int(split.cold_item_ids[0])
query = PotentialUserQuery(pl.item_content.dense([item])[0], k=10, item_factor=None)
res = mine_potential_users(query, trained, pl.user_content)
print(f"cold item {item}: potential users {res.user_ids.tolist()}")
raters = set(pl.ratings.users[pl.ratings.items == item].tolist())
print("of which actually rated it:", sorted(raters & set(res.user_ids.tolist())))

# %% [markdown]
# The constrained policy picks the closest code an existing user holds.

# %%
B, _ = model_codes(trained, pl.user_content, pl.item_content)
query.policy = "constrained"
print("constrained:", mine_potential_users(query, trained, pl.user_content, B).user_ids.tolist())

# %%
for rep in eval_marketing(trained, split, pl.user_content, pl.item_content, ks=(10, 50, 100, 200)):
    print(rep.summary())
