"""Differentiable building blocks with explicit backward passes.

Every layer registers its parameters in a shared :class:`ParamSet` at
construction. ``forward`` returns ``(output, cache)`` and ``backward(cache,
d_output)`` accumulates parameter gradients into ``ParamSet.grads`` and
returns the gradient with respect to the input. Caches are plain tuples so a
layer can be applied many times (e.g. once per time step) before backward.
"""
from __future__ import annotations

import numpy as np

from .params import ParamSet, glorot

LEAK = 0.01
LOG_EPS = 1e-12


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def leaky_relu(x):
    return np.where(x > 0, x, LEAK * x)


def leaky_relu_grad(x):
    return np.where(x > 0, 1.0, LEAK)


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(p, dp, axis=-1):
    return p * (dp - (dp * p).sum(axis=axis, keepdims=True))


def cross_entropy(pred, target):
    """Per-item ``-sum(y * log(clamp(p)))`` over the last axis."""
    return -(target * np.log(np.clip(pred, LOG_EPS, 1.0))).sum(axis=-1)


def cross_entropy_backward(pred, target, dloss=1.0):
    safe = np.clip(pred, LOG_EPS, 1.0)
    grad = -target / safe
    grad = np.where(pred > LOG_EPS, grad, 0.0)
    return grad * np.asarray(dloss)[..., None]


def _acc(params: ParamSet, name: str, g):
    if name not in params.frozen:
        params.grads[name] += g


class Linear:
    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, bias: bool = True, frozen: bool = False):
        self.p, self.name = params, name
        self.n_in, self.n_out = n_in, n_out
        params.add(f"{name}.W", glorot(rng, n_out, n_in), frozen=frozen)
        self.bias = bias
        if bias:
            params.add(f"{name}.b", np.zeros(n_out), frozen=frozen)

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: expected input dim {self.n_in}, got {x.shape[-1]}")
        y = x @ self.p[f"{self.name}.W"].T
        if self.bias:
            y = y + self.p[f"{self.name}.b"]
        return y, x

    def backward(self, x, dy):
        _acc(self.p, f"{self.name}.W", dy.reshape(-1, self.n_out).T @ x.reshape(-1, self.n_in))
        if self.bias:
            _acc(self.p, f"{self.name}.b", dy.reshape(-1, self.n_out).sum(axis=0))
        return dy @ self.p[f"{self.name}.W"]


class LayerNorm:
    def __init__(self, params: ParamSet, name: str, dim: int, eps: float = 1e-5):
        self.p, self.name, self.eps = params, name, eps
        params.add(f"{name}.g", np.ones(dim))
        params.add(f"{name}.b", np.zeros(dim))

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + self.eps)
        xhat = xc * inv
        return xhat * self.p[f"{self.name}.g"] + self.p[f"{self.name}.b"], (xhat, inv)

    def backward(self, cache, dy):
        xhat, inv = cache
        d = xhat.shape[-1]
        _acc(self.p, f"{self.name}.g", (dy * xhat).reshape(-1, d).sum(axis=0))
        _acc(self.p, f"{self.name}.b", dy.reshape(-1, d).sum(axis=0))
        dxhat = dy * self.p[f"{self.name}.g"]
        return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


class MLPDecoder:
    """One hidden leaky-ReLU layer of width ``round((d_in + n_out) / 2)``, softmax output."""

    def __init__(self, params: ParamSet, name: str, d_in: int, n_out: int,
                 rng: np.random.Generator):
        self.hidden = max(1, int(round((d_in + n_out) / 2)))
        self.fc1 = Linear(params, f"{name}.fc1", d_in, self.hidden, rng)
        self.fc2 = Linear(params, f"{name}.fc2", self.hidden, n_out, rng)

    def forward(self, h):
        z1, c1 = self.fc1.forward(h)
        a1 = leaky_relu(z1)
        z2, c2 = self.fc2.forward(a1)
        p = softmax(z2)
        return p, (c1, z1, c2, p)

    def backward(self, cache, dp):
        c1, z1, c2, p = cache
        dz2 = softmax_backward(p, dp)
        da1 = self.fc2.backward(c2, dz2)
        return self.fc1.backward(c1, da1 * leaky_relu_grad(z1))


class GRULayer:
    """GRU over a batch of sequences; gate order (reset, update, candidate).

    ``h' = (1 - z) * h + z * n`` so a saturated update gate copies the candidate.
    """

    def __init__(self, params: ParamSet, name: str, d_in: int, d: int, rng: np.random.Generator):
        self.p, self.name, self.d_in, self.d = params, name, d_in, d
        params.add(f"{name}.Wx", np.concatenate([glorot(rng, d, d_in) for _ in range(3)]))
        params.add(f"{name}.Wh", np.concatenate([glorot(rng, d, d) for _ in range(3)]))
        params.add(f"{name}.bx", np.zeros(3 * d))
        params.add(f"{name}.bh", np.zeros(3 * d))
        params.add(f"{name}.h0", np.zeros(d))

    def initial(self, batch: int):
        return np.broadcast_to(self.p[f"{self.name}.h0"], (batch, self.d)).copy()

    def _cell(self, gx, h):
        d = self.d
        gh = h @ self.p[f"{self.name}.Wh"].T + self.p[f"{self.name}.bh"]
        r = sigmoid(gx[:, :d] + gh[:, :d])
        z = sigmoid(gx[:, d:2 * d] + gh[:, d:2 * d])
        n = np.tanh(gx[:, 2 * d:] + r * gh[:, 2 * d:])
        return (1.0 - z) * h + z * n, (h, gh, r, z, n)

    def step(self, x, h):
        gx = x @ self.p[f"{self.name}.Wx"].T + self.p[f"{self.name}.bx"]
        return self._cell(gx, h)[0]

    def forward(self, X):
        B, T, _ = X.shape
        if X.shape[-1] != self.d_in:
            raise ValueError(f"{self.name}: expected input dim {self.d_in}, got {X.shape[-1]}")
        GX = X @ self.p[f"{self.name}.Wx"].T + self.p[f"{self.name}.bx"]
        h = self.initial(B)
        H = np.empty((B, T, self.d))
        steps = []
        for t in range(T):
            h, c = self._cell(GX[:, t], h)
            H[:, t] = h
            steps.append(c)
        return H, (X, steps)

    def backward(self, cache, dH):
        X, steps = cache
        B, T, _ = X.shape
        d = self.d
        Wh = self.p[f"{self.name}.Wh"]
        dGX = np.empty((B, T, 3 * d))
        dWh = np.zeros_like(Wh)
        dbh = np.zeros(3 * d)
        dh_next = np.zeros((B, d))
        for t in range(T - 1, -1, -1):
            h, gh, r, z, n = steps[t]
            dhp = dH[:, t] + dh_next
            dz = dhp * (n - h)
            dn_pre = dhp * z * (1.0 - n * n)
            dr_pre = dn_pre * gh[:, 2 * d:] * r * (1.0 - r)
            dz_pre = dz * z * (1.0 - z)
            dgx = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
            dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
            dGX[:, t] = dgx
            dWh += dgh.T @ h
            dbh += dgh.sum(axis=0)
            dh_next = dhp * (1.0 - z) + dgh @ Wh
        _acc(self.p, f"{self.name}.Wh", dWh)
        _acc(self.p, f"{self.name}.bh", dbh)
        _acc(self.p, f"{self.name}.h0", dh_next.sum(axis=0))
        _acc(self.p, f"{self.name}.Wx", dGX.reshape(-1, 3 * d).T @ X.reshape(-1, self.d_in))
        _acc(self.p, f"{self.name}.bx", dGX.reshape(-1, 3 * d).sum(axis=0))
        return dGX @ self.p[f"{self.name}.Wx"]


class SSMLayer:
    """Residual diagonal linear state-space layer.

    ``s_t = a * s_{t-1} + B u_t + b_s`` with ``a = tanh(a_raw)`` so ``|a| < 1``,
    followed by ``y_t = u_t + W tanh(s_t) + b_o``.
    """

    def __init__(self, params: ParamSet, name: str, d: int, rng: np.random.Generator):
        self.p, self.name, self.d = params, name, d
        decay = rng.uniform(0.5, 0.95, size=d)
        params.add(f"{name}.a_raw", np.arctanh(decay))
        params.add(f"{name}.B", glorot(rng, d, d))
        params.add(f"{name}.b_s", np.zeros(d))
        params.add(f"{name}.W", glorot(rng, d, d))
        params.add(f"{name}.b_o", np.zeros(d))
        params.add(f"{name}.s0", np.zeros(d))

    @property
    def a(self):
        return np.tanh(self.p[f"{self.name}.a_raw"])

    def initial(self, batch: int):
        return np.broadcast_to(self.p[f"{self.name}.s0"], (batch, self.d)).copy()

    def step(self, u, s):
        s = self.a * s + u @ self.p[f"{self.name}.B"].T + self.p[f"{self.name}.b_s"]
        y = u + np.tanh(s) @ self.p[f"{self.name}.W"].T + self.p[f"{self.name}.b_o"]
        return y, s

    def forward(self, U):
        B, T, d = U.shape
        if d != self.d:
            raise ValueError(f"{self.name}: expected dim {self.d}, got {d}")
        a = self.a
        BU = U @ self.p[f"{self.name}.B"].T + self.p[f"{self.name}.b_s"]
        S = np.empty((B, T, d))
        s = self.initial(B)
        for t in range(T):
            s = a * s + BU[:, t]
            S[:, t] = s
        G = np.tanh(S)
        Y = U + G @ self.p[f"{self.name}.W"].T + self.p[f"{self.name}.b_o"]
        return Y, (U, S, G)

    def backward(self, cache, dY):
        U, S, G = cache
        B, T, d = U.shape
        a = self.a
        W = self.p[f"{self.name}.W"]
        _acc(self.p, f"{self.name}.W", dY.reshape(-1, d).T @ G.reshape(-1, d))
        _acc(self.p, f"{self.name}.b_o", dY.reshape(-1, d).sum(axis=0))
        dS_direct = (dY @ W) * (1.0 - G * G)
        dS = np.empty_like(dS_direct)
        carry = np.zeros((B, d))
        for t in range(T - 1, -1, -1):
            carry = dS_direct[:, t] + a * carry
            dS[:, t] = carry
        s_prev = np.concatenate([self.initial(B)[:, None], S[:, :-1]], axis=1)
        da = (dS * s_prev).reshape(-1, d).sum(axis=0)
        _acc(self.p, f"{self.name}.a_raw", da * (1.0 - a * a))
        _acc(self.p, f"{self.name}.s0", (a * dS[:, 0]).sum(axis=0))
        _acc(self.p, f"{self.name}.b_s", dS.reshape(-1, d).sum(axis=0))
        _acc(self.p, f"{self.name}.B", dS.reshape(-1, d).T @ U.reshape(-1, d))
        return dY + dS @ self.p[f"{self.name}.B"]


class CausalAttentionBlock:
    """Pre-norm transformer block: causal multi-head attention + leaky-ReLU FFN."""

    def __init__(self, params: ParamSet, name: str, d: int, heads: int, ffn: int,
                 rng: np.random.Generator):
        if d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        self.name, self.d, self.heads, self.dh = name, d, heads, d // heads
        self.ln1 = LayerNorm(params, f"{name}.ln1", d)
        self.qkv = Linear(params, f"{name}.qkv", d, 3 * d, rng)
        self.out = Linear(params, f"{name}.out", d, d, rng)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d)
        self.ff1 = Linear(params, f"{name}.ff1", d, ffn, rng)
        self.ff2 = Linear(params, f"{name}.ff2", ffn, d, rng)

    def _split(self, x):  # (B,T,d) -> (B,H,T,dh)
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.dh).transpose(0, 2, 1, 3)

    def _merge(self, x):
        B, H, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)

    def forward(self, X):
        B, T, d = X.shape
        if d != self.d:
            raise ValueError(f"{self.name}: expected dim {self.d}, got {d}")
        a1, c_ln1 = self.ln1.forward(X)
        qkv, c_qkv = self.qkv.forward(a1)
        q, k, v = (self._split(qkv[..., i * d:(i + 1) * d]) for i in range(3))
        scale = 1.0 / np.sqrt(self.dh)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        mask = np.triu(np.ones((T, T), dtype=bool), k=1)
        scores = np.where(mask, -np.inf, scores)
        P = softmax(scores)
        att = self._merge(P @ v)
        o, c_out = self.out.forward(att)
        X2 = X + o
        a2, c_ln2 = self.ln2.forward(X2)
        f1, c_ff1 = self.ff1.forward(a2)
        f2, c_ff2 = self.ff2.forward(leaky_relu(f1))
        Y = X2 + f2
        return Y, (c_ln1, c_qkv, q, k, v, P, c_out, c_ln2, c_ff1, f1, c_ff2)

    def backward(self, cache, dY):
        c_ln1, c_qkv, q, k, v, P, c_out, c_ln2, c_ff1, f1, c_ff2 = cache
        scale = 1.0 / np.sqrt(self.dh)
        dX2 = dY.copy()
        df1 = self.ff2.backward(c_ff2, dY) * leaky_relu_grad(f1)
        dX2 += self.ln2.backward(c_ln2, self.ff1.backward(c_ff1, df1))
        datt = self._split(self.out.backward(c_out, dX2))
        dP = datt @ v.transpose(0, 1, 3, 2)
        dv = P.transpose(0, 1, 3, 2) @ datt
        dscores = softmax_backward(P, dP) * scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dqkv = np.concatenate([self._merge(dq), self._merge(dk), self._merge(dv)], axis=-1)
        return dX2 + self.ln1.backward(c_ln1, self.qkv.backward(c_qkv, dqkv))

    def step(self, x, kv):
        """Incremental forward for one new position. ``kv`` holds the cached
        keys/values ``(K, V)`` of shape (B,H,t,dh) or ``None``."""
        d = self.d
        a1, _ = self.ln1.forward(x[:, None])
        qkv, _ = self.qkv.forward(a1)
        q, k, v = (self._split(qkv[..., i * d:(i + 1) * d]) for i in range(3))
        if kv is not None:
            k = np.concatenate([kv[0], k], axis=2)
            v = np.concatenate([kv[1], v], axis=2)
        P = softmax((q @ k.transpose(0, 1, 3, 2)) / np.sqrt(self.dh))
        o, _ = self.out.forward(self._merge(P @ v))
        x2 = x[:, None] + o
        a2, _ = self.ln2.forward(x2)
        f1, _ = self.ff1.forward(a2)
        f2, _ = self.ff2.forward(leaky_relu(f1))
        return (x2 + f2)[:, 0], (k, v)


class Conv2d:
    """'Same'-padded 2-D convolution on (B, C, H, W) inputs, odd kernel size."""

    def __init__(self, params: ParamSet, name: str, c_in: int, c_out: int, kernel: int,
                 rng: np.random.Generator):
        if kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        self.p, self.name = params, name
        self.c_in, self.c_out, self.k = c_in, c_out, kernel
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        params.add(f"{name}.W", glorot(rng, fan_out, fan_in, shape=(c_out, c_in, kernel, kernel)))
        params.add(f"{name}.b", np.zeros(c_out))

    def _cols(self, x):
        B, C, H, W = x.shape
        r = self.k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        # (B, C, H, W, k, k) -> (B, H, W, C*k*k)
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(B, H, W, C * self.k * self.k)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"{self.name}: expected (B,{self.c_in},H,W) input, got {x.shape}")
        cols = self._cols(x)
        Wm = self.p[f"{self.name}.W"].reshape(self.c_out, -1)
        y = cols @ Wm.T + self.p[f"{self.name}.b"]
        return y.transpose(0, 3, 1, 2), (x.shape, cols)

    def backward(self, cache, dy):
        shape, cols = cache
        B, C, H, W = shape
        dyt = dy.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        _acc(self.p, f"{self.name}.W", (dyt.T @ cols.reshape(-1, cols.shape[-1])).reshape(self.p[f"{self.name}.W"].shape))
        _acc(self.p, f"{self.name}.b", dyt.sum(axis=0))
        dcols = (dyt @ self.p[f"{self.name}.W"].reshape(self.c_out, -1)).reshape(B, H, W, C, self.k, self.k)
        r = self.k // 2
        dxp = np.zeros((B, C, H + 2 * r, W + 2 * r))
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, :, i:i + H, j:j + W] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, r:r + H, r:r + W]
