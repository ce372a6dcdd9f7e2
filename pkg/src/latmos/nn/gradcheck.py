"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import ParamSet

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    entries: int

    @property
    def ok(self) -> bool:
        return self.rel_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(num / den)


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = STEP,
                 index=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the array ``x`` (modified in place and restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in (range(flat.size) if index is None else index):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * step)
    return g


def check_params(loss_and_backward: Callable[[], float], loss: Callable[[], float],
                 params: ParamSet, names=None, step: float = STEP, max_entries: int | None = None,
                 rng: np.random.Generator | None = None) -> list[GradCheckResult]:
    """Compare accumulated analytic gradients against central differences.

    ``loss_and_backward`` must run forward + backward (accumulating into
    ``params.grads``); ``loss`` runs forward only. With ``max_entries`` each
    tensor is checked on a random subset of coordinates.
    """
    params.zero_grad()
    loss_and_backward()
    analytic = {k: g.copy() for k, g in params.grads.items()}
    params.zero_grad()
    rng = rng or np.random.default_rng(0)
    out = []
    for name in names or params.trainable():
        x = params.values[name]
        idx = None
        if max_entries is not None and x.size > max_entries:
            idx = np.sort(rng.choice(x.size, size=max_entries, replace=False))
        num = numeric_grad(loss, x, step, idx)
        a = analytic[name]
        if idx is not None:
            a, num = a.reshape(-1)[idx], num.reshape(-1)[idx]
        out.append(GradCheckResult(name, relative_error(a, num), a.size))
    return out


def check_input(forward: Callable[[np.ndarray], float], analytic: np.ndarray, x: np.ndarray,
                step: float = STEP, name: str = "input") -> GradCheckResult:
    num = numeric_grad(lambda: forward(x), x, step)
    return GradCheckResult(name, relative_error(analytic, num), x.size)
