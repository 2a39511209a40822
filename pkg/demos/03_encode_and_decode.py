"""The two directions of the model: content to code, code to content.

Run: python demos/03_encode_and_decode.py
"""
# %%
import numpy as np

from cghash.model import decode, encode_map, encode_probs, init_model, log_prior, predict_rating

model = init_model(user_dim=6, item_dim=5, r=8, hidden=(16,), seed=0)
g = np.random.default_rng(0)

# %% [markdown]
# The encoder reads content concatenated with the latent factor. A cold
# entity has no factor, so that slot is zero.

# %%
x_item = g.random(5)
q = g.standard_normal(8)
print("bit probabilities:", np.round(encode_probs(x_item, q, "item", model), 3))
d_warm = encode_map(x_item, q, "item", model)
d_cold = encode_map(x_item, np.zeros(8), "item", model)
print("warm code:", d_warm, " cold code:", d_cold)

# %% [markdown]
# Similarity between codes is 1 - Hamming / r.

# %%
b = encode_map(g.random(6), g.standard_normal(8), "user", model)
print("delta(user, item) =", predict_rating(b, d_warm))
print("log prior of the item code under rho=0.5:", round(log_prior(d_warm, model.priors["item"]), 4))

# %% [markdown]
# Decoding sums the codebook columns of the active bits.

# %%
print("decoded user content:", np.round(decode(b, "user", model), 4))
