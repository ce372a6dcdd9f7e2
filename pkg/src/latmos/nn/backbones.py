"""Sequence backbones sharing one interface.

``forward(X) -> (H, cache)`` maps a batch (B, T, d_in) to per-position latent
vectors (B, T, d); ``backward(cache, dH) -> dX``. ``init_memory``/``step``
run the same computation one position at a time for planning, and
``empty_latent`` is the trainable latent reported for an empty prefix.
"""
from __future__ import annotations

import numpy as np

from .layers import CausalAttentionBlock, GRULayer, LayerNorm, Linear, SSMLayer
from .params import ParamSet

BACKBONES = ("gru", "attention", "ssm")


def sinusoidal_positions(T: int, d: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(d)[None, :]
    rate = 1.0 / np.power(10000.0, (2 * (i // 2)) / max(d, 1))
    ang = pos * rate
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


class GRUBackbone:
    kind = "gru"

    def __init__(self, params: ParamSet, name: str, d_in: int, d: int,
                 rng: np.random.Generator, layers: int = 2):
        self.p, self.name, self.d = params, name, d
        self.layers = [GRULayer(params, f"{name}.l{i}", d_in if i == 0 else d, d, rng)
                       for i in range(layers)]

    def empty_latent(self):
        return self.p[f"{self.layers[-1].name}.h0"]

    def forward(self, X):
        caches = []
        for layer in self.layers:
            X, c = layer.forward(X)
            caches.append(c)
        return X, caches

    def backward(self, caches, dH):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dH = layer.backward(c, dH)
        return dH

    def init_memory(self, batch: int):
        return [layer.initial(batch) for layer in self.layers]

    def step(self, memory, x):
        new = []
        for layer, h in zip(self.layers, memory):
            x = layer.step(x, h)
            new.append(x)
        return x, new


class SSMBackbone:
    kind = "ssm"

    def __init__(self, params: ParamSet, name: str, d_in: int, d: int,
                 rng: np.random.Generator, layers: int = 4):
        self.p, self.name, self.d = params, name, d
        self.proj = Linear(params, f"{name}.in", d_in, d, rng)
        self.layers = [SSMLayer(params, f"{name}.l{i}", d, rng) for i in range(layers)]
        params.add(f"{name}.h_empty", np.zeros(d))

    def empty_latent(self):
        return self.p[f"{self.name}.h_empty"]

    def forward(self, X):
        U, c0 = self.proj.forward(X)
        caches = [c0]
        for layer in self.layers:
            U, c = layer.forward(U)
            caches.append(c)
        return U, caches

    def backward(self, caches, dH):
        for layer, c in zip(reversed(self.layers), reversed(caches[1:])):
            dH = layer.backward(c, dH)
        return self.proj.backward(caches[0], dH)

    def init_memory(self, batch: int):
        return [layer.initial(batch) for layer in self.layers]

    def step(self, memory, x):
        u, _ = self.proj.forward(x)
        new = []
        for layer, s in zip(self.layers, memory):
            u, s = layer.step(u, s)
            new.append(s)
        return u, new


class AttentionBackbone:
    """Input projection + sinusoidal positions + causal blocks + final norm.

    The step-wise memory is ``(t, [(K, V) per block])``: cached keys and values
    of every earlier position, so one ``step`` costs one new position.
    """
    kind = "attention"

    def __init__(self, params: ParamSet, name: str, d_in: int, d: int,
                 rng: np.random.Generator, blocks: int = 2, heads: int = 2, ffn: int | None = None):
        self.p, self.name, self.d = params, name, d
        heads = max(h for h in range(1, heads + 1) if d % h == 0)
        self.heads = heads
        ffn = ffn if ffn is not None else max(1, d // 4)
        self.ffn = ffn
        self.proj = Linear(params, f"{name}.in", d_in, d, rng)
        self.blocks = [CausalAttentionBlock(params, f"{name}.b{i}", d, heads, ffn, rng)
                       for i in range(blocks)]
        self.norm = LayerNorm(params, f"{name}.ln_f", d)
        params.add(f"{name}.h_empty", np.zeros(d))

    def empty_latent(self):
        return self.p[f"{self.name}.h_empty"]

    def forward(self, X):
        T = X.shape[1]
        U, c0 = self.proj.forward(X)
        U = U + sinusoidal_positions(T, self.d)
        caches = [c0]
        for block in self.blocks:
            U, c = block.forward(U)
            caches.append(c)
        H, cn = self.norm.forward(U)
        caches.append(cn)
        return H, caches

    def backward(self, caches, dH):
        dU = self.norm.backward(caches[-1], dH)
        for block, c in zip(reversed(self.blocks), reversed(caches[1:-1])):
            dU = block.backward(c, dU)
        return self.proj.backward(caches[0], dU)

    def init_memory(self, batch: int):
        return (0, [None] * len(self.blocks))

    def step(self, memory, x):
        t, kvs = memory
        u, _ = self.proj.forward(x)
        u = u + sinusoidal_positions(t + 1, self.d)[t]
        new = []
        for block, kv in zip(self.blocks, kvs):
            u, kv = block.step(u, kv)
            new.append(kv)
        h, _ = self.norm.forward(u)
        return h, (t + 1, new)


def gru_param_count(d_in: int, d: int, layers: int = 2) -> int:
    total = 0
    for i in range(layers):
        n_in = d_in if i == 0 else d
        total += 3 * d * n_in + 3 * d * d + 6 * d + d
    return total


def attention_param_count(d_in: int, d: int, blocks: int, ffn: int) -> int:
    per_block = 4 * d + 3 * d * d + 3 * d + d * d + d + ffn * d + ffn + d * ffn + d
    return d_in * d + d + blocks * per_block + 2 * d + d


def ssm_param_count(d_in: int, d: int, layers: int) -> int:
    return d_in * d + d + layers * (2 * d * d + 4 * d) + d


def matched_sizes(d_in: int, d: int, gru_layers: int = 2, attention_blocks: int = 2) -> dict:
    """Attention FFN width and SSM depth whose parameter counts best match the GRU."""
    target = gru_param_count(d_in, d, gru_layers)
    ffn = min(range(1, 8 * d + 2),
              key=lambda f: abs(attention_param_count(d_in, d, attention_blocks, f) - target))
    ssm_layers = min(range(1, 16), key=lambda n: abs(ssm_param_count(d_in, d, n) - target))
    return {"gru_layers": gru_layers, "attention_blocks": attention_blocks,
            "attention_ffn": ffn, "ssm_layers": ssm_layers, "target": target}


def build_backbone(kind: str, params: ParamSet, name: str, d_in: int, d: int,
                   rng: np.random.Generator, **kw):
    if kind == "gru":
        return GRUBackbone(params, name, d_in, d, rng, layers=kw.get("gru_layers", 2))
    if kind == "ssm":
        return SSMBackbone(params, name, d_in, d, rng, layers=kw.get("ssm_layers", 4))
    if kind == "attention":
        return AttentionBackbone(params, name, d_in, d, rng, blocks=kw.get("attention_blocks", 2),
                                 heads=kw.get("heads", 2), ffn=kw.get("attention_ffn"))
    raise ValueError(f"unknown backbone {kind!r}; choose from {BACKBONES}")
