"""Tensorized Encoder Transformer forward pass.

Inputs are weather tensors ``X`` of shape ``(T, C, F)`` (time steps, stations,
features), optionally with one leading batch axis.  Every operation below
works on plain numpy arrays and on :class:`tent.autodiff.Var` operands, so the
training engine differentiates exactly the code used for inference.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import record, value
from .tensor import DimensionError

SOFTMAX_AXES = ("city", "key_time")


@dataclass(frozen=True)
class ModelConfig:
    T: int = 16
    C: int = 30
    F: int = 11
    H: int = 8
    d_k: int = 16
    ffn_hidden: int = 32
    n_layers: int = 1
    softmax_axis: str = "city"
    n_out: int = 1
    ffn_relu_both: bool = False
    norm_eps: float = 1e-6

    def __post_init__(self):
        for name in ("T", "C", "F", "H", "d_k", "ffn_hidden", "n_layers", "n_out"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.d_k % self.H:
            raise ValueError(f"d_k={self.d_k} is not divisible by H={self.H}")
        if self.softmax_axis not in SOFTMAX_AXES:
            raise ValueError(f"softmax_axis must be one of {SOFTMAX_AXES}")

    @property
    def D(self) -> int:
        return self.d_k // self.H

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class HeadActivations:
    """Intermediate tensors of one attention head (batch axis kept if present)."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    R: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    layer: int = 0
    head: int = 0

    @property
    def R_tilde(self) -> np.ndarray:
        return score_tensor(self.Q, self.K)


# ---------------------------------------------------------------------------
# parameters


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    T, C, F, D = cfg.T, cfg.C, cfg.F, cfg.D
    for layer in range(cfg.n_layers):
        p = f"layer{layer}."
        for h in range(cfg.H):
            for w in ("wq", "wk", "wv"):
                shapes[f"{p}head.{h}.{w}"] = (C, F, D)
        shapes[p + "wo"] = (T, cfg.H * D, F)
        shapes[p + "norm1.gain"] = (F,)
        shapes[p + "norm1.bias"] = (F,)
        shapes[p + "ffn.w1"] = (F, cfg.ffn_hidden)
        shapes[p + "ffn.b1"] = (cfg.ffn_hidden,)
        shapes[p + "ffn.w2"] = (cfg.ffn_hidden, F)
        shapes[p + "ffn.b2"] = (F,)
        shapes[p + "norm2.gain"] = (F,)
        shapes[p + "norm2.bias"] = (F,)
    shapes["out.w"] = (T * C * F, cfg.n_out)
    shapes["out.b"] = (cfg.n_out,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform weights (per matrix slice), unit gains, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            params[name] = np.ones(shape)
        elif leaf in ("bias", "b1", "b2", "b"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape[-2], shape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def check_params(params: dict, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    missing = expected.keys() - params.keys()
    extra = params.keys() - expected.keys()
    if missing or extra:
        raise DimensionError(
            f"parameter names mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
        )
    for name, shape in expected.items():
        arr = np.asarray(value(params[name]))
        if arr.shape != shape:
            raise DimensionError(f"{name}: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")


# ---------------------------------------------------------------------------
# tensorial attention primitives


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out leading batch axes so ``g`` matches a parameter's shape."""
    if g.shape == shape:
        return g
    return g.reshape((-1,) + shape).sum(axis=0)


def positional_encoding(T: int, C: int, F: int) -> np.ndarray:
    """Sinusoidal encoding over (time, city), repeated along features.

    City index ``c`` uses ``i = c // 2``; even cities take the sine, odd
    cities the cosine of ``pos / 10000**(2i/C)``.
    """
    if min(T, C, F) < 1:
        raise ValueError(f"extents must be >= 1, got {(T, C, F)}")
    pos = np.arange(T, dtype=np.float64)[:, None]
    c = np.arange(C)
    i = c // 2
    angle = pos / np.power(10000.0, 2.0 * i / C)[None, :]
    pe = np.where(c % 2 == 0, np.sin(angle), np.cos(angle))
    return np.repeat(pe[:, :, None], F, axis=2)


def qkv_projection(X, W):
    """``out[t, c, :] = X[t, c, :] @ W[c]`` for every time step and city."""
    xv, wv = value(X), value(W)
    if wv.ndim != 3 or xv.shape[-2:] != wv.shape[:2]:
        raise DimensionError(f"cannot project input {xv.shape} with weights {wv.shape}")
    out = np.einsum("...tcf,cfd->...tcd", xv, wv)

    def vjp(g):
        gx = np.einsum("...tcd,cfd->...tcf", g, wv)
        gw = _sum_to(np.einsum("...tcf,...tcd->...cfd", xv, g), wv.shape)
        return gx, gw

    return record(out, (X, W), vjp)


def score_tensor(Q, K) -> np.ndarray:
    """Full score tensor ``R~[t, t', c, c'] = Q[t, c] . K[t', c']``."""
    Q, K = np.asarray(value(Q)), np.asarray(value(K))
    if Q.shape[-1] != K.shape[-1]:
        raise DimensionError(f"query {Q.shape} and key {K.shape} differ in last extent")
    return np.einsum("...tcd,...sed->...tsce", Q, K)


def reduce_scores(R_tilde, D: int) -> np.ndarray:
    """Sum over the key-city axis and divide by ``sqrt(D)``."""
    if D < 1:
        raise ValueError("D must be >= 1")
    R_tilde = np.asarray(value(R_tilde))
    if R_tilde.ndim < 4:
        raise DimensionError(f"expected a rank >= 4 score tensor, got {R_tilde.shape}")
    return R_tilde.sum(axis=-1) / math.sqrt(D)


def attention_scores(Q, K):
    """``reduce_scores(score_tensor(Q, K), D)`` without materialising R~.

    Summing over key cities commutes with the dot product, so the key tensor
    is collapsed first; memory drops from T*T*C*C to T*T*C per head.
    """
    qv, kv = value(Q), value(K)
    if qv.shape[-1] != kv.shape[-1]:
        raise DimensionError(f"query {qv.shape} and key {kv.shape} differ in last extent")
    D = qv.shape[-1]
    s = 1.0 / math.sqrt(D)
    ksum = kv.sum(axis=-2)
    out = np.einsum("...tcd,...sd->...tsc", qv, ksum) * s

    def vjp(g):
        gq = np.einsum("...tsc,...sd->...tcd", g, ksum) * s
        gks = np.einsum("...tsc,...tcd->...sd", g, qv) * s
        gk = np.broadcast_to(gks[..., :, None, :], kv.shape).copy()
        return gq, gk

    return record(out, (Q, K), vjp)


def _axis_index(axis: str) -> int:
    if axis == "city":
        return -1
    if axis == "key_time":
        return -2
    raise ValueError(f"softmax axis must be one of {SOFTMAX_AXES}, got {axis!r}")


def attention_weights(R, axis: str = "city"):
    """Softmax of ``R[t, t', c]`` over cities (default) or over key time."""
    return ad.softmax(R, _axis_index(axis))


def attention_output(S, V):
    """``Z[t, c, d] = sum_t' S[t, t', c] * V[t', c, d]``."""
    sv, vv = value(S), value(V)
    if sv.shape[-2:] != vv.shape[-3:-1]:
        raise DimensionError(f"attention {sv.shape} does not match values {vv.shape}")
    out = np.einsum("...tsc,...scd->...tcd", sv, vv)

    def vjp(g):
        gs = np.einsum("...tcd,...scd->...tsc", g, vv)
        gv = np.einsum("...tsc,...tcd->...scd", sv, g)
        return gs, gv

    return record(out, (S, V), vjp)


def output_projection(Zcat, Wo):
    """``Y[t] = Zcat[t] @ Wo[t]``: one weight slice per absolute time step."""
    zv, wv = value(Zcat), value(Wo)
    if wv.ndim != 3 or zv.shape[-3] != wv.shape[0] or zv.shape[-1] != wv.shape[1]:
        raise DimensionError(f"cannot project {zv.shape} with W^o {wv.shape}")
    out = np.einsum("...tck,tkf->...tcf", zv, wv)

    def vjp(g):
        gz = np.einsum("...tcf,tkf->...tck", g, wv)
        gw = _sum_to(np.einsum("...tck,...tcf->...tkf", zv, g), wv.shape)
        return gz, gw

    return record(out, (Zcat, Wo), vjp)


# ---------------------------------------------------------------------------
# layers


def _check_input(X, cfg: ModelConfig):
    shape = value(X).shape
    if len(shape) not in (3, 4) or shape[-3:] != (cfg.T, cfg.C, cfg.F):
        raise DimensionError(
            f"expected input (..., {cfg.T}, {cfg.C}, {cfg.F}), got {shape}"
        )


def multi_head(X, params: dict, cfg: ModelConfig, layer: int = 0):
    """Tensorial multi-head attention; returns ``(Y, [HeadActivations])``."""
    _check_input(X, cfg)
    p = f"layer{layer}."
    heads, records = [], []
    for h in range(cfg.H):
        q = qkv_projection(X, params[f"{p}head.{h}.wq"])
        k = qkv_projection(X, params[f"{p}head.{h}.wk"])
        v = qkv_projection(X, params[f"{p}head.{h}.wv"])
        r = attention_scores(q, k)
        s = attention_weights(r, cfg.softmax_axis)
        z = attention_output(s, v)
        heads.append(z)
        records.append(HeadActivations(
            value(q), value(k), value(v), value(r), value(s), value(z), layer, h
        ))
    concat = heads[0] if cfg.H == 1 else ad.concat_last(heads)
    return output_projection(concat, params[p + "wo"]), records


def feed_forward(x, params: dict, cfg: ModelConfig, layer: int = 0):
    p = f"layer{layer}.ffn."
    hidden = ad.relu(ad.dense(x, params[p + "w1"], params[p + "b1"]))
    out = ad.dense(hidden, params[p + "w2"], params[p + "b2"])
    return ad.relu(out) if cfg.ffn_relu_both else out


def encoder_block(X, params: dict, cfg: ModelConfig, layer: int = 0):
    """Attention and feed-forward sublayers, each with residual + layer norm."""
    p = f"layer{layer}."
    y, records = multi_head(X, params, cfg, layer)
    u = ad.layer_norm(ad.add(X, y), params[p + "norm1.gain"], params[p + "norm1.bias"],
                      cfg.norm_eps)
    f = feed_forward(u, params, cfg, layer)
    out = ad.layer_norm(ad.add(u, f), params[p + "norm2.gain"], params[p + "norm2.bias"],
                        cfg.norm_eps)
    return out, records


def forward(X, params: dict, cfg: ModelConfig):
    """Full model: positional encoding, encoder stack, linear output head.

    Returns ``(prediction, records)``; prediction has shape ``(n_out,)`` or
    ``(batch, n_out)``.
    """
    _check_input(X, cfg)
    h = ad.add(X, positional_encoding(cfg.T, cfg.C, cfg.F))
    records = []
    for layer in range(cfg.n_layers):
        h, recs = encoder_block(h, params, cfg, layer)
        records.extend(recs)
    lead = value(h).shape[:-3]
    flat = ad.reshape(h, lead + (cfg.T * cfg.C * cfg.F,))
    return ad.dense(flat, params["out.w"], params["out.b"]), records


def predict(X, params: dict, cfg: ModelConfig, batch_size: int = 256) -> np.ndarray:
    """Batched inference returning an ``(n, n_out)`` array."""
    X = np.asarray(X, dtype=np.float64)
    out = [forward(X[i:i + batch_size], params, cfg)[0] for i in range(0, len(X), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, cfg.n_out))
