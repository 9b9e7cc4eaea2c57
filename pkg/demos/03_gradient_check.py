"""Compare tape gradients against central differences, and see where that fails.

With only two features, layer normalisation sends every (time, city) pair to
(+1, -1) or (-1, +1) regardless of its inputs. Gradients reaching the attention
weights then shrink to about eps / gap**3, often below 1e-8, which a 1e-5
difference step cannot resolve. Raising the epsilon restores a smooth map.

Run:  python3 demos/03_gradient_check.py
"""

import numpy as np

from tent.model import ModelConfig, init_params
from tent.training import loss_and_grads


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        g[i] = (up - f()) / (2 * h)
        x[i] = old
    return g


def report(cfg, label):
    params = init_params(cfg, seed=0)
    rng = np.random.default_rng(0)
    X, y = rng.random((3, cfg.T, cfg.C, cfg.F)), rng.random(3)
    _, grads = loss_and_grads(params, X, y, cfg)
    print(label)
    for name in ("layer0.head.1.wk", "layer0.wo", "layer0.ffn.w1", "out.w"):
        num = central_diff(lambda: loss_and_grads(params, X, y, cfg)[0], params[name])
        a = grads[name]
        rel = np.linalg.norm(a - num) / max(np.linalg.norm(a), np.linalg.norm(num))
        print(f"  {name:18s} |grad| {np.linalg.norm(a):9.2e}   rel err {rel:9.2e}")


report(ModelConfig(T=4, C=3, F=2, H=2, d_k=4, ffn_hidden=4), "F=2, eps=1e-6")
report(ModelConfig(T=4, C=3, F=2, H=2, d_k=4, ffn_hidden=4, norm_eps=1.0), "F=2, eps=1")
report(ModelConfig(T=4, C=3, F=3, H=2, d_k=4, ffn_hidden=4), "F=3, eps=1e-6")
