"""Walk through one tensorial attention layer on a toy (time, city, feature) tensor.

Run:  python3 demos/01_tensorial_attention.py
"""

import numpy as np

from tent.model import ModelConfig, init_params, multi_head, positional_encoding

np.set_printoptions(precision=3, suppress=True)

# Four hours of data for three cities, two features each.
cfg = ModelConfig(T=4, C=3, F=2, H=2, d_k=4, ffn_hidden=4)
rng = np.random.default_rng(0)
X = rng.random((cfg.T, cfg.C, cfg.F))
params = init_params(cfg, seed=0)

# Positions are encoded over (time, city) and repeated across features.
pe = positional_encoding(cfg.T, cfg.C, cfg.F)
print("positional encoding, feature 0:\n", pe[:, :, 0])

Y, heads = multi_head(X + pe, params, cfg)
print("\noutput shape", Y.shape, "(same as the input)")

for rec in heads:
    # S[t, t', c]: how much query time t attends to city c at key time t'.
    print(f"\nhead {rec.head}: S has shape {rec.S.shape}")
    print("  sums over cities (all ones):", rec.S.sum(axis=-1).ravel()[:6], "...")
    print("  attention mass per city:", rec.S.sum(axis=(0, 1)))

# Softmax over key time instead gives the conventional reading.
alt = ModelConfig(T=4, C=3, F=2, H=2, d_k=4, ffn_hidden=4, softmax_axis="key_time")
_, heads = multi_head(X + pe, params, alt)
print("\nkey_time mode, sums over t' for head 0:\n", heads[0].S.sum(axis=1))
