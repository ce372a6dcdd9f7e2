"""Spectral learning of a weighted automaton from a Hankel matrix of positive strings."""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .symbols import SymbolTable

HANKEL_KINDS = ("indicator", "frequency", "prefix")


@dataclass
class WeightedAutomaton:
    alpha: np.ndarray            # (r,)
    beta: np.ndarray             # (r,)
    A: dict                      # symbol -> (r, r)

    @property
    def rank(self) -> int:
        return len(self.alpha)

    def score(self, string) -> float | None:
        """alpha^T A_{s1} ... A_{sn} beta, or None if a symbol has no operator."""
        v = self.alpha
        for a in string:
            M = self.A.get(a)
            if M is None:
                return None
            v = v @ M
        return float(v @ self.beta)

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(),
                "A": {str(a): M.tolist() for a, M in self.A.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["alpha"]), np.array(d["beta"]),
                   {int(a): np.array(M) for a, M in d["A"].items()})


class HankelFunction:
    """Empirical string function estimated from a positive corpus.

    ``indicator``: 1 if the string occurs as a whole positive, else 0.
    ``frequency``: relative frequency of the string as a whole positive.
    ``prefix``: fraction of positives having the string as a prefix.
    """

    def __init__(self, strings, kind: str = "indicator"):
        if kind not in HANKEL_KINDS:
            raise ValueError(f"unknown Hankel kind {kind!r}")
        self.kind = kind
        self.n = len(strings)
        self.full = Counter(strings)
        if kind == "prefix":
            self.prefixes = Counter(s[:i] for s in strings for i in range(len(s) + 1))

    def __call__(self, x) -> float:
        if self.kind == "indicator":
            return 1.0 if x in self.full else 0.0
        if self.kind == "frequency":
            return self.full.get(x, 0) / self.n
        return self.prefixes.get(x, 0) / self.n


def hankel_basis(strings, basis_len: int = 3, min_count: int = 2):
    """Prefixes and suffixes (up to ``basis_len``) seen at least ``min_count`` times.

    The empty string is always included and listed first.
    """
    pre, suf = Counter(), Counter()
    for s in strings:
        for i in range(1, min(basis_len, len(s)) + 1):
            pre[s[:i]] += 1
            suf[s[-i:]] += 1
    P = [()] + sorted((p for p, c in pre.items() if c >= min_count), key=lambda t: (len(t), t))
    S = [()] + sorted((p for p, c in suf.items() if c >= min_count), key=lambda t: (len(t), t))
    return P, S


def hankel_blocks(f, P, S, symbols):
    H = np.array([[f(p + s) for s in S] for p in P])
    Hs = {a: np.array([[f(p + (a,) + s) for s in S] for p in P]) for a in symbols}
    return H, Hs


def numerical_rank(H: np.ndarray, rtol: float = 1e-10) -> int:
    sv = np.linalg.svd(H, compute_uv=False)
    return int((sv > rtol * max(sv[0], 1e-300)).sum()) if sv.size else 0


def spectral_learn(strings, rank: int, basis_len: int = 3, kind: str = "indicator",
                   min_count: int = 2, symbols=None) -> WeightedAutomaton:
    """Truncated-SVD recovery of (alpha, beta, A_sigma) from the Hankel blocks.

    With H ~ U D V^T truncated to ``rank`` and F = H V:
    alpha^T = H[eps, :] V, beta = F^+ H[:, eps], A_sigma = F^+ H_sigma V.
    A rank above the numerical rank of H is clamped with a warning.
    """
    strings = [tuple(s) for s in strings]
    if not strings:
        raise ValueError("empty corpus")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if symbols is None:
        symbols = sorted({a for s in strings for a in s})
    f = HankelFunction(strings, kind)
    P, S = hankel_basis(strings, basis_len, min_count)
    H, Hs = hankel_blocks(f, P, S, symbols)
    nr = max(numerical_rank(H), 1)
    if rank > nr:
        warnings.warn(f"rank {rank} exceeds numerical Hankel rank {nr}; clamped")
        rank = nr
    _, _, Vt = np.linalg.svd(H, full_matrices=False)
    V = Vt[:rank].T
    Fp = np.linalg.pinv(H @ V)
    alpha = H[0] @ V
    beta = Fp @ H[:, 0]
    A = {a: Fp @ Hs[a] @ V for a in symbols}
    return WeightedAutomaton(alpha, beta, A)


def best_threshold(pos_scores, neg_scores) -> float:
    """Threshold maximizing balanced accuracy of ``score >= t`` (midpoints between scores)."""
    pos = np.sort(np.asarray(pos_scores, dtype=float))
    neg = np.sort(np.asarray(neg_scores, dtype=float))
    cand = np.unique(np.concatenate([pos, neg]))
    mids = np.concatenate([[cand[0] - 1.0], (cand[1:] + cand[:-1]) / 2, [cand[-1] + 1.0]])
    tpr = 1 - np.searchsorted(pos, mids, side="left") / max(len(pos), 1)
    tnr = np.searchsorted(neg, mids, side="left") / max(len(neg), 1)
    bal = (tpr + tnr) / 2
    return float(mids[int(np.argmax(bal))])


class SpectralClassifier:
    """Spectral weighted automaton over exactly matched symbols, thresholded.

    The acceptance threshold is calibrated on a held-out slice of the training
    positives against synthetic negatives built from them (random suffixes
    over the training alphabet).
    """

    def __init__(self, rank: int, basis_len: int = 3, kind: str = "indicator",
                 min_count: int = 2, match_tolerance: float = 0.0,
                 calib_fraction: float = 0.2, seed: int = 0):
        self.rank = rank
        self.basis_len = basis_len
        self.kind = kind
        self.min_count = min_count
        self.match_tolerance = match_tolerance
        self.calib_fraction = calib_fraction
        self.seed = seed
        self.table: SymbolTable | None = None
        self.wa: WeightedAutomaton | None = None
        self.threshold = 0.5

    def fit(self, positives):
        self.table = SymbolTable.from_sequences(positives, self.match_tolerance)
        strings = [self.table.decode_sequence(s) if len(s) else () for s in positives]
        rng = np.random.default_rng(self.seed)
        n_cal = int(round(self.calib_fraction * len(strings)))
        perm = rng.permutation(len(strings))
        cal = [strings[i] for i in perm[:n_cal]]
        fit = [strings[i] for i in perm[n_cal:]] or strings
        symbols = list(range(len(self.table)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            wa = spectral_learn(fit, self.rank, self.basis_len, self.kind, self.min_count, symbols)
        if cal:
            negs = []
            for s in cal:
                c = int(rng.integers(len(s))) if len(s) else 0
                tail = tuple(int(a) for a in rng.integers(len(self.table), size=len(s) - c))
                negs.append(s[:c] + tail)
            self.threshold = best_threshold([wa.score(s) for s in cal], [wa.score(s) for s in negs])
        self.wa = wa
        return self

    def score(self, steps) -> float | None:
        string = self.table.decode_sequence(steps) if len(steps) else ()
        return None if string is None else self.wa.score(string)

    def predict(self, steps) -> bool | None:
        s = self.score(steps)
        return None if s is None else bool(s >= self.threshold)


def spectral_accepts(wa: WeightedAutomaton, table: SymbolTable, steps, score_threshold: float) -> bool | None:
    string = table.decode_sequence(steps) if len(steps) else ()
    if string is None:
        return None
    s = wa.score(string)
    return None if s is None else bool(s >= score_threshold)
