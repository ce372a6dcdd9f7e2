"""Decoding observation vectors into the discrete alphabet seen during training."""
from __future__ import annotations

import numpy as np


class SymbolTable:
    """Maps observation vectors to symbol ids by nearest neighbour among the
    training vectors, accepting only matches within ``tolerance`` (Euclidean).

    With ``tolerance=0`` a vector decodes only if it equals a training vector
    exactly; anything else decodes to ``None`` and callers abstain.
    """

    def __init__(self, vectors, tolerance: float = 0.0):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a (n, N) array")
        self.vectors = np.unique(vectors, axis=0)
        self.tolerance = float(tolerance)
        self._exact = {v.tobytes(): i for i, v in enumerate(self.vectors)}

    def __len__(self):
        return len(self.vectors)

    def decode(self, vec) -> int | None:
        v = np.asarray(vec, dtype=float)
        hit = self._exact.get(v.tobytes())
        if hit is not None or self.tolerance <= 0:
            return hit
        d = np.linalg.norm(self.vectors - v, axis=1)
        i = int(np.argmin(d))
        return i if d[i] <= self.tolerance else None

    def decode_sequence(self, steps) -> tuple | None:
        out = []
        for o in np.asarray(steps, dtype=float).reshape(len(steps), -1):
            s = self.decode(o)
            if s is None:
                return None
            out.append(s)
        return tuple(out)

    @classmethod
    def from_sequences(cls, sequences, tolerance: float = 0.0):
        return cls(np.concatenate([np.asarray(s, dtype=float) for s in sequences if len(s)]), tolerance)
