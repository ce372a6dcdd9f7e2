"""ALERGIA and spectral learning on hand-checkable fixtures."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latmos import automaton as am
from latmos.baselines import (AlergiaClassifier, FreqPrefixTree, SpectralClassifier,
                              StochasticAutomaton, SymbolTable, WeightedAutomaton, alergia_learn,
                              best_threshold, hankel_basis, hoeffding_different,
                              spectral_learn)
from latmos.baselines.spectral import HankelFunction, numerical_rank


def test_prefix_tree_counts_hand_fixture():
    t = FreqPrefixTree.build([(0,), (0, 1), (0, 1), ()])
    # nodes: root, 0, 01
    assert t.visits == [4, 3, 2]
    assert t.terminal == [1, 1, 2]
    assert t.children[0] == {0: 1} and t.children[1] == {1: 2}


@given(st.lists(st.lists(st.integers(0, 2), max_size=5), min_size=1, max_size=30))
def test_prefix_tree_flow_conservation(strings):
    t = FreqPrefixTree.build(strings)
    for n in range(len(t)):
        assert t.visits[n] == t.terminal[n] + sum(t.visits[c] for c in t.children[n].values())


def test_hoeffding_bound():
    assert not hoeffding_different(50, 100, 50, 100, 0.05)
    assert hoeffding_different(100, 100, 0, 100, 0.05)
    # threshold: sqrt(0.5 ln(2/alpha)) * 2/sqrt(n)
    bound = math.sqrt(0.5 * math.log(2 / 0.05)) * 2 / 10
    assert not hoeffding_different(50 + int(100 * bound) - 1, 100, 50, 100, 0.05)
    assert not hoeffding_different(0, 0, 5, 10, 0.05)


def test_alergia_merges_a_plus_into_a_loop():
    # geometric lengths: every non-root node stops with frequency 1/2
    strings = [(0,) * n for n in range(1, 8) for _ in range(2 ** (8 - n))]
    sa = alergia_learn(strings, alpha=0.05)
    assert sa.num_states == 2
    assert sa.transitions == [{0: 1}, {0: 1}]
    assert sa.accepts((0,) * 9)
    assert sa.accepts((1,)) is None


def test_alergia_recovers_small_dfa_language():
    dfa = am.generate_random_dfa(4, 4, 0)
    walks = am.sample_positive_walks(dfa, 1000, 4, 0)
    sa = alergia_learn([w.symbols for w in walks], alpha=0.5)
    wrong = 0
    for L in range(1, 5):
        for word in itertools.product(range(4), repeat=L):
            got = sa.accepts(word)
            if got is not None and got != am.accepts(dfa, word):
                wrong += 1
    assert wrong == 0


def test_alergia_validates_inputs():
    with pytest.raises(ValueError):
        alergia_learn([])
    with pytest.raises(ValueError):
        alergia_learn([(0,)], alpha=1.5)


def test_stochastic_automaton_dict_round_trip():
    sa = alergia_learn([(0, 1), (0,), (1,)] * 10, alpha=0.3)
    again = StochasticAutomaton.from_dict(sa.to_dict())
    for w in [(), (0,), (0, 1), (1, 1)]:
        assert again.accepts(w) == sa.accepts(w)


def test_symbol_table_exact_and_tolerant():
    table = SymbolTable(np.eye(3))
    assert table.decode([0, 1, 0]) is not None
    assert table.decode([0, 1.01, 0]) is None
    loose = SymbolTable(np.eye(3), tolerance=0.1)
    assert loose.decode([0, 1.01, 0]) == table.decode([0, 1, 0])
    assert table.decode_sequence(np.array([[1, 0, 0], [0.5, 0, 0]])) is None


def test_classifiers_abstain_on_noisy_vectors():
    dfa = am.generate_random_dfa(4, 4, 0)
    walks = am.sample_positive_walks(dfa, 200, 4, 0)
    pos = [am.walk_observations(w.symbols, 4) for w in walks]
    al = AlergiaClassifier(alpha=0.5).fit(pos)
    sp = SpectralClassifier(rank=4, basis_len=2).fit(pos)
    noisy = pos[0] + 0.01
    assert al.predict(noisy) is None
    assert sp.predict(noisy) is None
    assert al.predict(pos[0]) is True


def test_hankel_basis_lists_empty_string_first():
    P, S = hankel_basis([(0, 1), (0, 1), (1,)], basis_len=2, min_count=2)
    assert P[0] == () and S[0] == ()
    assert (0,) in P and (0, 1) in P and (1,) in S
    assert (1,) not in P  # seen once as a prefix


def test_hankel_function_kinds():
    f = HankelFunction([(0,), (0,), (1, 0)], "frequency")
    assert f((0,)) == pytest.approx(2 / 3)
    assert HankelFunction([(0,), (1, 0)], "indicator")((1, 0)) == 1.0
    assert HankelFunction([(0,), (0, 1)], "prefix")((0,)) == 1.0
    with pytest.raises(ValueError):
        HankelFunction([], "cosine")


def test_spectral_recovers_parity():
    # all binary strings with an even number of ones, up to length 6
    corpus = [w for L in range(7) for w in itertools.product((0, 1), repeat=L) if sum(w) % 2 == 0]
    wa = spectral_learn(corpus, rank=2, basis_len=2, kind="indicator", min_count=1)
    for L in range(9):
        for w in itertools.product((0, 1), repeat=L):
            assert abs(wa.score(w) - (sum(w) % 2 == 0)) < 1e-8


def test_spectral_clamps_rank():
    corpus = [(0,) * n for n in range(1, 5)] * 3
    with pytest.warns(UserWarning):
        wa = spectral_learn(corpus, rank=50, basis_len=2)
    assert wa.rank <= 10


def test_weighted_automaton_round_trip_and_unknown_symbol():
    wa = WeightedAutomaton(np.array([1.0, 0.0]), np.array([0.0, 1.0]), {0: np.array([[0, 1], [1, 0.0]])})
    assert wa.score((0,)) == 1.0 and wa.score((0, 0)) == 0.0
    assert wa.score((1,)) is None
    again = WeightedAutomaton.from_dict(wa.to_dict())
    assert again.score((0, 0, 0)) == 1.0


def test_best_threshold_separates_perfectly():
    t = best_threshold([0.9, 0.8, 0.7], [0.1, 0.2, 0.3])
    assert 0.3 < t < 0.7


def test_numerical_rank():
    assert numerical_rank(np.outer([1, 2, 3], [1, 1])) == 1
    assert numerical_rank(np.eye(4)) == 4
