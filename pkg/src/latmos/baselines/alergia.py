"""ALERGIA: state merging on a frequency prefix tree built from positive strings."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .symbols import SymbolTable


class FreqPrefixTree:
    """Prefix tree with per-node visit and termination counts.

    ``visits[n]`` counts strings passing through node ``n`` and ``terminal[n]``
    those ending there, so ``visits = terminal + sum(child visits)``.
    """

    def __init__(self):
        self.children: list[dict] = [{}]
        self.visits = [0]
        self.terminal = [0]

    def add(self, string) -> None:
        n = 0
        self.visits[0] += 1
        for a in string:
            nxt = self.children[n].get(a)
            if nxt is None:
                nxt = len(self.visits)
                self.children[n][a] = nxt
                self.children.append({})
                self.visits.append(0)
                self.terminal.append(0)
            n = nxt
            self.visits[n] += 1
        self.terminal[n] += 1

    def __len__(self):
        return len(self.visits)

    @classmethod
    def build(cls, strings):
        t = cls()
        for s in strings:
            t.add(tuple(s))
        return t


def hoeffding_different(f1: int, n1: int, f2: int, n2: int, alpha: float) -> bool:
    if n1 == 0 or n2 == 0:
        return False
    bound = math.sqrt(0.5 * math.log(2.0 / alpha)) * (1 / math.sqrt(n1) + 1 / math.sqrt(n2))
    return abs(f1 / n1 - f2 / n2) > bound


@dataclass
class StochasticAutomaton:
    """Merged automaton: ``transitions[q][a] -> q'`` with visit/termination counts."""
    transitions: list
    visits: list
    terminal: list
    initial: int = 0
    accept_threshold: float = 0.0

    @property
    def num_states(self) -> int:
        return len(self.visits)

    def termination_frequency(self, q: int) -> float:
        return self.terminal[q] / self.visits[q] if self.visits[q] else 0.0

    def is_accepting(self, q: int) -> bool:
        return self.termination_frequency(q) > self.accept_threshold

    def run(self, string) -> int | None:
        q = self.initial
        for a in string:
            q = self.transitions[q].get(a)
            if q is None:
                return None
        return q

    def accepts(self, string) -> bool | None:
        """True/False, or None (abstain) when the traversal leaves the table."""
        q = self.run(string)
        return None if q is None else self.is_accepting(q)

    def to_dict(self):
        return {"initial": self.initial, "accept_threshold": self.accept_threshold,
                "visits": list(self.visits), "terminal": list(self.terminal),
                "transitions": [{str(a): q for a, q in t.items()} for t in self.transitions]}

    @classmethod
    def from_dict(cls, d):
        return cls([{int(a): q for a, q in t.items()} for t in d["transitions"]],
                    d["visits"], d["terminal"], d["initial"], d["accept_threshold"])


def alergia_learn(strings, alpha: float = 0.05, accept_threshold: float = 0.0) -> StochasticAutomaton:
    """Red-blue ALERGIA over symbol strings.

    Blue nodes are visited in shortlex order of their prefixes and merged into
    the first compatible red node; incompatible ones turn red.
    """
    strings = [tuple(s) for s in strings]
    if not strings:
        raise ValueError("ALERGIA needs a non-empty corpus")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    tree = FreqPrefixTree.build(strings)
    ch = [dict(c) for c in tree.children]
    visits = list(tree.visits)
    term = list(tree.terminal)

    def compatible(r, b):
        stack = [(r, b)]
        while stack:
            x, y = stack.pop()
            if hoeffding_different(term[x], visits[x], term[y], visits[y], alpha):
                return False
            for a in set(ch[x]) | set(ch[y]):
                cx, cy = ch[x].get(a), ch[y].get(a)
                fx = visits[cx] if cx is not None else 0
                fy = visits[cy] if cy is not None else 0
                if hoeffding_different(fx, visits[x], fy, visits[y], alpha):
                    return False
                if cx is not None and cy is not None:
                    stack.append((cx, cy))
        return True

    def fold(r, b):
        stack = [(r, b)]
        while stack:
            x, y = stack.pop()
            visits[x] += visits[y]
            term[x] += term[y]
            for a, cy in ch[y].items():
                cx = ch[x].get(a)
                if cx is None:
                    ch[x][a] = cy
                else:
                    stack.append((cx, cy))

    # shortlex rank of every prefix-tree node: blue nodes are taken shortest-first
    rank = {0: 0}
    queue = deque([0])
    while queue:
        q = queue.popleft()
        for a in sorted(tree.children[q]):
            c = tree.children[q][a]
            rank[c] = len(rank)
            queue.append(c)
    red = [0]
    red_set = {0}
    while True:
        blue = sorted({(rank[c], c, q, a) for q in red for a, c in ch[q].items() if c not in red_set})
        if not blue:
            break
        _, b, parent, sym = blue[0]
        for r in red:
            if compatible(r, b):
                ch[parent][sym] = r
                fold(r, b)
                break
        else:
            red.append(b)
            red_set.add(b)
    # renumber red states in BFS order from the root
    index = {0: 0}
    order = [0]
    queue = deque([0])
    while queue:
        q = queue.popleft()
        for a in sorted(ch[q]):
            c = ch[q][a]
            if c not in index:
                index[c] = len(order)
                order.append(c)
                queue.append(c)
    transitions = [{a: index[c] for a, c in sorted(ch[q].items())} for q in order]
    return StochasticAutomaton(transitions, [visits[q] for q in order], [term[q] for q in order],
                               0, accept_threshold)


class AlergiaClassifier:
    """ALERGIA over observation vectors decoded through an exact symbol table."""

    def __init__(self, alpha: float = 0.05, match_tolerance: float = 0.0,
                 accept_threshold: float = 0.0):
        self.alpha = alpha
        self.match_tolerance = match_tolerance
        self.accept_threshold = accept_threshold
        self.table: SymbolTable | None = None
        self.automaton: StochasticAutomaton | None = None

    def fit(self, positives):
        self.table = SymbolTable.from_sequences(positives, self.match_tolerance)
        strings = [self.table.decode_sequence(s) if len(s) else () for s in positives]
        self.automaton = alergia_learn(strings, self.alpha, self.accept_threshold)
        return self

    def predict(self, steps) -> bool | None:
        string = self.table.decode_sequence(steps) if len(steps) else ()
        if string is None:
            return None
        return self.automaton.accepts(string)


def alergia_accepts(automaton: StochasticAutomaton, table: SymbolTable, steps) -> bool | None:
    string = table.decode_sequence(steps) if len(steps) else ()
    return None if string is None else automaton.accepts(string)
