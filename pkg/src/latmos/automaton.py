"""Ground-truth task automata for the symbolic experiments.

A :class:`Dfa` is stored as a dense ``(num_states, num_symbols)`` transition
table. Generation, walk sampling and transition hold-out all take explicit
seeds so every artifact can be regenerated bit-for-bit.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GenerationError(RuntimeError):
    """No admissible automaton / walk was found within the attempt budget."""


class InfeasibleError(ValueError):
    """The requested walks cannot exist for this automaton."""


@dataclass(frozen=True)
class Dfa:
    num_states: int
    num_symbols: int
    transition: np.ndarray  # (num_states, num_symbols) int
    initial: int
    accepting: frozenset

    def __post_init__(self):
        table = np.asarray(self.transition, dtype=np.int64)
        if table.shape != (self.num_states, self.num_symbols):
            raise ValueError(f"transition table has shape {table.shape}, "
                             f"expected {(self.num_states, self.num_symbols)}")
        if table.size and (table.min() < 0 or table.max() >= self.num_states):
            raise ValueError("transition targets out of range")
        if not 0 <= self.initial < self.num_states:
            raise ValueError("initial state out of range")
        acc = frozenset(int(s) for s in self.accepting)
        if not acc:
            raise ValueError("accepting set must be non-empty")
        if min(acc) < 0 or max(acc) >= self.num_states:
            raise ValueError("accepting state out of range")
        table.setflags(write=False)
        object.__setattr__(self, "transition", table)
        object.__setattr__(self, "accepting", acc)

    @property
    def accepting_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        mask[list(self.accepting)] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_symbols": self.num_symbols,
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dfa":
        return cls(int(d["num_states"]), int(d["num_symbols"]),
                   np.array(d["transition"], dtype=np.int64),
                   int(d["initial"]), frozenset(d["accepting"]))

    def __eq__(self, other):
        if not isinstance(other, Dfa):
            return NotImplemented
        return (self.num_states == other.num_states
                and self.num_symbols == other.num_symbols
                and self.initial == other.initial
                and self.accepting == other.accepting
                and np.array_equal(self.transition, other.transition))

    def __hash__(self):
        return hash((self.num_states, self.num_symbols, self.initial,
                     self.accepting, self.transition.tobytes()))


@dataclass(frozen=True)
class SymbolWalk:
    symbols: tuple
    states: tuple
    accepted: bool

    def __len__(self):
        return len(self.symbols)


def save_dfa(dfa: Dfa, path) -> None:
    Path(path).write_text(json.dumps(dfa.to_dict(), indent=1))


def load_dfa(path) -> Dfa:
    return Dfa.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# semantics

def step(dfa: Dfa, state: int, symbol: int) -> int:
    if not 0 <= state < dfa.num_states:
        raise IndexError(f"state {state} out of range")
    if not 0 <= symbol < dfa.num_symbols:
        raise IndexError(f"symbol {symbol} out of range")
    return int(dfa.transition[state, symbol])


def run(dfa: Dfa, symbols: Iterable[int]) -> SymbolWalk:
    states = [dfa.initial]
    syms = []
    for sym in symbols:
        states.append(step(dfa, states[-1], int(sym)))
        syms.append(int(sym))
    return SymbolWalk(tuple(syms), tuple(states), states[-1] in dfa.accepting)


def accepts(dfa: Dfa, symbols: Iterable[int]) -> bool:
    s = dfa.initial
    for sym in symbols:
        s = step(dfa, s, int(sym))
    return s in dfa.accepting


def prefix_labels(dfa: Dfa, symbols: Sequence[int]) -> np.ndarray:
    """Acceptance of every non-empty prefix: ``out[k] = accepts(symbols[:k+1])``."""
    out = np.zeros(len(symbols), dtype=np.int8)
    s = dfa.initial
    for k, sym in enumerate(symbols):
        s = step(dfa, s, int(sym))
        out[k] = s in dfa.accepting
    return out


# --------------------------------------------------------------------------
# graph analysis

def reachable_states(dfa: Dfa, allowed: np.ndarray | None = None) -> set:
    seen = {dfa.initial}
    queue = deque([dfa.initial])
    while queue:
        s = queue.popleft()
        for sym in range(dfa.num_symbols):
            if allowed is not None and not allowed[s, sym]:
                continue
            t = int(dfa.transition[s, sym])
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return seen


def coreachable_states(dfa: Dfa, allowed: np.ndarray | None = None) -> set:
    """States from which some accepting state can be reached."""
    good = set(dfa.accepting)
    changed = True
    while changed:
        changed = False
        for s in range(dfa.num_states):
            if s in good:
                continue
            for sym in range(dfa.num_symbols):
                if allowed is not None and not allowed[s, sym]:
                    continue
                if int(dfa.transition[s, sym]) in good:
                    good.add(s)
                    changed = True
                    break
    return good


def walk_count_table(dfa: Dfa, max_len: int, accepting_end: bool = True,
                     allowed: np.ndarray | None = None) -> np.ndarray:
    """``table[r, s]`` = number of length-``r`` symbol strings from ``s`` ending
    in an accepting (or, with ``accepting_end=False``, rejecting) state."""
    n = dfa.num_states
    table = np.zeros((max_len + 1, n), dtype=float)
    end = dfa.accepting_mask if accepting_end else ~dfa.accepting_mask
    table[0] = end
    for r in range(1, max_len + 1):
        for s in range(n):
            tot = 0.0
            for sym in range(dfa.num_symbols):
                if allowed is not None and not allowed[s, sym]:
                    continue
                tot += table[r - 1, dfa.transition[s, sym]]
            table[r, s] = tot
    return table


def feasible_lengths(dfa: Dfa, max_len: int, accepting_end: bool = True,
                     allowed: np.ndarray | None = None) -> list:
    table = walk_count_table(dfa, max_len, accepting_end, allowed)
    return [r for r in range(1, max_len + 1) if table[r, dfa.initial] > 0]


def is_minimal(dfa: Dfa) -> bool:
    """All states reachable and pairwise distinguishable (Moore refinement)."""
    if len(reachable_states(dfa)) != dfa.num_states:
        return False
    block = dfa.accepting_mask.astype(np.int64)
    while True:
        signature = [(block[s], *block[dfa.transition[s]]) for s in range(dfa.num_states)]
        ids = {}
        new = np.array([ids.setdefault(sig, len(ids)) for sig in signature])
        if len(ids) == len(set(block.tolist())):
            return len(ids) == dfa.num_states
        block = new


def transition_support(dfa: Dfa, max_len: int, allowed: np.ndarray | None = None) -> np.ndarray:
    """``support[s, a]`` is True when transition ``(s, a)`` lies on some accepting
    walk of length <= ``max_len`` starting at the initial state."""
    n, m = dfa.num_states, dfa.num_symbols
    # earliest[t] = shortest distance from the initial state
    earliest = np.full(n, np.inf)
    earliest[dfa.initial] = 0
    queue = deque([dfa.initial])
    while queue:
        s = queue.popleft()
        for a in range(m):
            if allowed is not None and not allowed[s, a]:
                continue
            t = dfa.transition[s, a]
            if earliest[t] == np.inf:
                earliest[t] = earliest[s] + 1
                queue.append(t)
    counts = walk_count_table(dfa, max_len, True, allowed)
    support = np.zeros((n, m), dtype=bool)
    for s in range(n):
        if earliest[s] == np.inf:
            continue
        d = int(earliest[s])
        for a in range(m):
            if allowed is not None and not allowed[s, a]:
                continue
            t = dfa.transition[s, a]
            rem = max_len - d - 1
            if rem >= 0 and counts[:rem + 1, t].any():
                support[s, a] = True
    return support


# --------------------------------------------------------------------------
# generation

def generate_random_dfa(num_states: int, num_symbols: int, seed: int,
                        max_len: int | None = None, max_accepting: int | None = None,
                        max_attempts: int = 5000) -> Dfa:
    """Sample a minimal DFA whose states are all reachable and co-reachable.

    Every transition is additionally required to lie on an accepting walk of
    length <= ``max_len`` (default ``num_states``), so a corpus of positive
    demonstrations at that horizon can exercise the whole table.
    """
    if num_states < 2 or num_symbols < 2:
        raise ValueError("need num_states >= 2 and num_symbols >= 2")
    max_len = num_states if max_len is None else max_len
    if max_accepting is None:
        max_accepting = max(1, num_states // 4)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        table = rng.integers(0, num_states, size=(num_states, num_symbols))
        k = int(rng.integers(1, max_accepting + 1))
        accepting = frozenset(int(s) for s in rng.choice(np.arange(1, num_states), size=k, replace=False))
        dfa = Dfa(num_states, num_symbols, table, 0, accepting)
        if len(reachable_states(dfa)) != num_states:
            continue
        if len(coreachable_states(dfa)) != num_states:
            continue
        if not is_minimal(dfa):
            continue
        if not transition_support(dfa, max_len).all():
            continue
        return dfa
    raise GenerationError(f"no admissible DFA with |S|={num_states}, |Σ|={num_symbols} "
                          f"after {max_attempts} attempts")


def _guided_walk(dfa, length, rng, accepting_end, allowed):
    counts = walk_count_table(dfa, length, accepting_end, allowed)
    s = dfa.initial
    syms = []
    for r in range(length, 0, -1):
        options = [a for a in range(dfa.num_symbols)
                   if (allowed is None or allowed[s, a]) and counts[r - 1, dfa.transition[s, a]] > 0]
        a = int(options[rng.integers(len(options))])
        syms.append(a)
        s = int(dfa.transition[s, a])
    return syms


def _sample_walks(dfa, count, max_len, seed, accepting_end, allowed):
    if count < 1 or max_len < 1:
        raise ValueError("count and max_len must be >= 1")
    lengths = feasible_lengths(dfa, max_len, accepting_end, allowed)
    if not lengths:
        kind = "accepting" if accepting_end else "rejecting"
        raise InfeasibleError(f"no {kind} walk of length <= {max_len}")
    rng = np.random.default_rng(seed)
    walks = []
    failures = 0
    budget = 100 * count
    while len(walks) < count:
        length = int(lengths[rng.integers(len(lengths))])
        if failures < budget:
            s = dfa.initial
            syms = []
            for _ in range(length):
                if allowed is None:
                    a = int(rng.integers(dfa.num_symbols))
                else:
                    opts = np.flatnonzero(allowed[s])
                    if len(opts) == 0:
                        break
                    a = int(opts[rng.integers(len(opts))])
                syms.append(a)
                s = int(dfa.transition[s, a])
            if len(syms) != length or (s in dfa.accepting) != accepting_end:
                failures += 1
                continue
        else:
            syms = _guided_walk(dfa, length, rng, accepting_end, allowed)
        walks.append(run(dfa, syms))
    return walks


def sample_positive_walks(dfa: Dfa, count: int, max_len: int, seed: int,
                          allowed: np.ndarray | None = None) -> list:
    """Random walks that end in an accepting state.

    The length is drawn uniformly over the feasible lengths ``1..max_len``;
    successors are drawn uniformly and the walk restarts if it ends rejecting.
    After ``100 * count`` failed restarts the remaining walks are completed by
    sampling only among successors that can still accept in time.
    ``allowed`` restricts the usable ``(state, symbol)`` pairs.
    """
    return _sample_walks(dfa, count, max_len, seed, True, allowed)


def sample_rejected_walks(dfa: Dfa, count: int, max_len: int, seed: int,
                          allowed: np.ndarray | None = None) -> list:
    return _sample_walks(dfa, count, max_len, seed, False, allowed)


def sample_random_walks(dfa: Dfa, count: int, max_len: int, seed: int,
                        allowed: np.ndarray | None = None) -> list:
    """Unconditioned walks, lengths uniform over ``1..max_len``."""
    rng = np.random.default_rng(seed)
    walks = []
    for _ in range(count):
        length = int(rng.integers(1, max_len + 1))
        s = dfa.initial
        syms = []
        for _ in range(length):
            opts = np.arange(dfa.num_symbols) if allowed is None else np.flatnonzero(allowed[s])
            if len(opts) == 0:
                break
            a = int(opts[rng.integers(len(opts))])
            syms.append(a)
            s = int(dfa.transition[s, a])
        walks.append(run(dfa, syms))
    return walks


def completion_budget(dfa: Dfa, max_len: int) -> np.ndarray:
    """``ok[r, s]``: some accepting state is reachable from ``s`` in 1..r steps."""
    counts = walk_count_table(dfa, max_len, True)
    ok = np.zeros((max_len + 1, dfa.num_states), dtype=bool)
    for r in range(1, max_len + 1):
        ok[r] = ok[r - 1] | (counts[r] > 0)
    return ok


def _incomplete_targets(dfa, k, max_len, ok):
    return ~dfa.accepting_mask & ok[max_len - k]


def _count_into(dfa, length, target, allowed):
    table = np.zeros((length + 1, dfa.num_states))
    table[0] = target
    for r in range(1, length + 1):
        for s in range(dfa.num_states):
            table[r, s] = sum(table[r - 1, dfa.transition[s, a]] for a in range(dfa.num_symbols)
                              if allowed is None or allowed[s, a])
    return table


def sample_incomplete_walks(dfa: Dfa, count: int, max_len: int, seed: int,
                            allowed: np.ndarray | None = None) -> list:
    """Rejected walks that are unfinished executions: the walk of length ``k``
    ends outside the accepting set, but acceptance is still reachable within
    the remaining ``max_len - k`` steps.

    Lengths are uniform over the feasible ones; successors are uniform with
    restarts, switching to count-guided completion after ``100 * count`` failures.
    """
    if count < 1 or max_len < 2:
        raise ValueError("count must be >= 1 and max_len >= 2")
    ok = completion_budget(dfa, max_len)
    tables = {k: _count_into(dfa, k, _incomplete_targets(dfa, k, max_len, ok), allowed)
              for k in range(1, max_len)}
    lengths = [k for k, t in tables.items() if t[k, dfa.initial] > 0]
    if not lengths:
        raise InfeasibleError(f"no unfinished rejected walk of length < {max_len}")
    rng = np.random.default_rng(seed)
    walks, failures = [], 0
    while len(walks) < count:
        k = int(lengths[rng.integers(len(lengths))])
        target = _incomplete_targets(dfa, k, max_len, ok)
        s, syms = dfa.initial, []
        if failures < 100 * count:
            for _ in range(k):
                opts = np.arange(dfa.num_symbols) if allowed is None else np.flatnonzero(allowed[s])
                if len(opts) == 0:
                    break
                a = int(opts[rng.integers(len(opts))])
                syms.append(a)
                s = int(dfa.transition[s, a])
            if len(syms) != k or not target[s]:
                failures += 1
                continue
        else:
            t = tables[k]
            for r in range(k, 0, -1):
                opts = [a for a in range(dfa.num_symbols)
                        if (allowed is None or allowed[s, a]) and t[r - 1, dfa.transition[s, a]] > 0]
                a = int(opts[rng.integers(len(opts))])
                syms.append(a)
                s = int(dfa.transition[s, a])
        walks.append(run(dfa, syms))
    return walks


def is_incomplete(dfa: Dfa, symbols, max_len: int) -> bool:
    """True for a rejected walk from which acceptance is reachable in time."""
    w = run(dfa, symbols)
    k = len(w.symbols)
    return (not w.accepted) and 0 < k < max_len and bool(completion_budget(dfa, max_len)[max_len - k, w.states[-1]])


# --------------------------------------------------------------------------
# observations

def symbol_to_ap_vector(symbol: int, P: int, mode: str = "one_hot") -> np.ndarray:
    vec = np.zeros(P)
    if mode == "one_hot":
        if not 0 <= symbol < P:
            raise ValueError(f"symbol {symbol} not encodable one-hot with P={P}")
        vec[symbol] = 1.0
    elif mode == "binary":
        if not 0 <= symbol < 2 ** P:
            raise ValueError(f"symbol {symbol} not encodable in {P} bits")
        for i in range(P):
            vec[P - 1 - i] = (symbol >> i) & 1
    else:
        raise ValueError(f"unknown AP encoding {mode!r}")
    return vec


def ap_vector_to_symbol(vec, mode: str = "one_hot") -> int:
    vec = np.asarray(vec)
    if mode == "one_hot":
        return int(np.argmax(vec))
    bits = (vec > 0.5).astype(int)
    return int(sum(b << (len(bits) - 1 - i) for i, b in enumerate(bits)))


def walk_observations(symbols: Sequence[int], P: int, mode: str = "one_hot") -> np.ndarray:
    if len(symbols) == 0:
        return np.zeros((0, P))
    return np.stack([symbol_to_ap_vector(s, P, mode) for s in symbols])


def add_ap_noise(vec, variance: float, seed=None) -> np.ndarray:
    """Additive zero-mean Gaussian noise with covariance ``variance * I``.

    ``seed`` may be an int or an existing ``np.random.Generator``.
    """
    if variance < 0:
        raise ValueError("variance must be non-negative")
    vec = np.asarray(vec, dtype=float)
    if variance == 0:
        return vec.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return vec + rng.normal(0.0, np.sqrt(variance), size=vec.shape)


# --------------------------------------------------------------------------
# novel-transition hold-out

@dataclass(frozen=True)
class Holdout:
    train_mask: np.ndarray  # (S, Σ) bool, True = usable during training
    test_only: tuple = field(default_factory=tuple)  # masked (state, symbol) pairs

    def crosses(self, walk: SymbolWalk) -> bool:
        return any(not self.train_mask[s, a] for s, a in zip(walk.states[:-1], walk.symbols))


def holdout_transitions(dfa: Dfa, fraction: float, seed: int, max_len: int | None = None,
                        max_attempts: int = 1000) -> Holdout:
    """Mask ``floor(fraction * |S||Σ|)`` transitions for novel-transition tests.

    The masked automaton must still admit accepting walks of length <= ``max_len``
    and keep every state reachable, so training positives exist and every held-out
    transition can be crossed by a test walk.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    max_len = dfa.num_states if max_len is None else max_len
    n, m = dfa.num_states, dfa.num_symbols
    k = int(np.floor(fraction * n * m))
    full = np.ones((n, m), dtype=bool)
    if k == 0:
        return Holdout(full, ())
    rng = np.random.default_rng(seed)
    pairs = [(s, a) for s in range(n) for a in range(m)]
    for _ in range(max_attempts):
        chosen = rng.choice(len(pairs), size=k, replace=False)
        mask = full.copy()
        for idx in chosen:
            mask[pairs[idx]] = False
        if len(reachable_states(dfa, mask)) != n:
            continue
        if not feasible_lengths(dfa, max_len, True, mask):
            continue
        test_only = tuple(sorted(pairs[i] for i in chosen))
        mask.setflags(write=False)
        return Holdout(mask, test_only)
    raise GenerationError("masking disconnected the automaton on every attempt")


def sample_novel_walks(dfa: Dfa, holdout: Holdout, count: int, max_len: int, seed: int,
                       accepting_end: bool, max_attempts: int = 200_000,
                       unfinished_only: bool = False) -> list:
    """Uniform random walks that cross at least one held-out transition and end
    accepting (or rejecting; with ``unfinished_only`` only rejected walks that
    can still accept within ``max_len``)."""
    rng = np.random.default_rng(seed)
    ok = completion_budget(dfa, max_len)
    walks = []
    for _ in range(max_attempts):
        if len(walks) == count:
            return walks
        length = int(rng.integers(1, max_len + 1))
        syms = rng.integers(dfa.num_symbols, size=length).tolist()
        w = run(dfa, syms)
        if w.accepted != accepting_end or not holdout.crosses(w):
            continue
        if unfinished_only and not accepting_end and (length >= max_len or not ok[max_len - length, w.states[-1]]):
            continue
        walks.append(w)
    raise GenerationError(f"found only {len(walks)}/{count} novel walks")
