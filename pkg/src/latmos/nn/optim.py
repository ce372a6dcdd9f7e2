from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


class NonFiniteGradient(FloatingPointError):
    """Raised when a gradient holds NaN/Inf; the step is not applied."""


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: ParamSet) -> None:
        names = params.trainable()
        for k in names:
            if not np.all(np.isfinite(params.grads[k])):
                params.zero_grad()
                raise NonFiniteGradient(f"non-finite gradient in {k!r} at step {self.t + 1}")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k in names:
            g = params.grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.values[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        params.zero_grad()
