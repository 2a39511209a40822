"""Training in the warm and cold-start modes on planted data.

Run: python demos/04_training.py   (about half a minute)
"""
# %%
import numpy as np

from cghash.data import split_dataset
from cghash.evaluation import evaluate_setting
from cghash.mf import MfConfig, factorize
from cghash.synthetic import make_planted
from cghash.training import TrainConfig, train

pl = make_planted(seed=0)
split = split_dataset(pl.ratings, seed=0)
factors = factorize(split.warm_train, MfConfig(r=32, iters=10))

# %% [markdown]
# Warm mode learns from ratings alone; cold-item mode also asks item codes
# to explain item content, so items without ratings still get useful codes.

# %%
for mode, setting in (("warm", "warm"), ("cold-item", "cold-item")):
    cfg = TrainConfig(mode=mode, hidden=(128,), epochs=20, corruption=0.1)
    trained = train(split, pl.user_content, pl.item_content, factors, cfg)
    curve = [round(lb.total, 4) for lb in trained.curve]
    print(f"{mode}: loss by epoch {curve[0]} -> {curve[-1]}")
    rep = evaluate_setting(trained, split, pl.user_content, pl.item_content, setting, ks=(10, 50))
    print("   ", rep.summary(), f"(chance @10 = {10 / 1001:.4f})")

# %% [markdown]
# The gradient check compares analytic and finite-difference gradients on
# a toy instance in the relaxed (continuous-code) setting.

# %%
from cghash.mf import LatentFactors
from cghash.model import init_model
from cghash.training import Batch, TrainingData, gradient_check

g = np.random.default_rng(0)
toy = init_model(3, 2, 4, hidden=(5,), seed=0)
data = TrainingData(g.random((4, 3)), g.random((4, 2)), LatentFactors(g.standard_normal((4, 4)), g.standard_normal((4, 4))))
R = (g.random((4, 4)) < 0.5).astype(float)
cfg = TrainConfig(mode="full", b=0.2)
print("max relative gradient error:", gradient_check(toy, Batch.full(R, cfg.a, cfg.b), cfg, data))
