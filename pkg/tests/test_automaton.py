"""DFA core: semantics against a brute-force simulator, generation, sampling."""
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latmos import automaton as am


def brute_accepts(table, accepting, initial, word):
    """Independent simulator over a plain list-of-lists table."""
    q = initial
    for a in word:
        q = table[q][a]
    return q in accepting


@st.composite
def dfas(draw, max_states=6, max_symbols=4):
    n = draw(st.integers(2, max_states))
    m = draw(st.integers(2, max_symbols))
    table = draw(st.lists(st.lists(st.integers(0, n - 1), min_size=m, max_size=m), min_size=n, max_size=n))
    acc = draw(st.sets(st.integers(0, n - 1), min_size=1))
    return am.Dfa(n, m, np.array(table), 0, frozenset(acc))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_accepts_matches_brute_force_exhaustively(seed):
    dfa = am.generate_random_dfa(4, 4, seed)
    table = dfa.transition.tolist()
    for length in range(7):
        for word in itertools.product(range(4), repeat=length):
            assert am.accepts(dfa, word) == brute_accepts(table, dfa.accepting, dfa.initial, word)


@given(dfas(), st.lists(st.integers(0, 1), max_size=12))
def test_prefix_labels_agree_with_accepts(dfa, word):
    labels = am.prefix_labels(dfa, word)
    assert labels.tolist() == [int(am.accepts(dfa, word[:k + 1])) for k in range(len(word))]


@given(dfas(), st.lists(st.integers(0, 1), max_size=10))
def test_run_traces_states(dfa, word):
    w = am.run(dfa, word)
    assert len(w.states) == len(word) + 1
    assert w.accepted == am.accepts(dfa, word)
    for s, a, t in zip(w.states, w.symbols, w.states[1:]):
        assert dfa.transition[s, a] == t


def test_empty_word_acceptance():
    dfa = am.Dfa(2, 2, np.array([[1, 0], [1, 1]]), 0, frozenset({1}))
    assert not am.accepts(dfa, [])
    dfa0 = am.Dfa(2, 2, np.array([[1, 0], [1, 1]]), 0, frozenset({0}))
    assert am.accepts(dfa0, [])


def test_step_rejects_out_of_range():
    dfa = am.generate_random_dfa(4, 4, 0)
    with pytest.raises(IndexError):
        am.step(dfa, 0, 4)
    with pytest.raises(IndexError):
        am.step(dfa, 7, 0)


def test_dfa_validation():
    with pytest.raises(ValueError):
        am.Dfa(2, 2, np.array([[0, 1]]), 0, frozenset({1}))
    with pytest.raises(ValueError):
        am.Dfa(2, 2, np.array([[0, 2], [1, 1]]), 0, frozenset({1}))
    with pytest.raises(ValueError):
        am.Dfa(2, 2, np.array([[0, 1], [1, 1]]), 0, frozenset())


@pytest.mark.parametrize("n", [4, 6, 8])
def test_generated_dfa_is_minimal_and_trim(n):
    dfa = am.generate_random_dfa(n, 4, 0)
    assert am.is_minimal(dfa)
    assert am.reachable_states(dfa) == set(range(n))
    assert am.coreachable_states(dfa) == set(range(n))
    assert am.transition_support(dfa, n).all()
    assert dfa.initial not in dfa.accepting


def test_generation_is_deterministic():
    assert am.generate_random_dfa(6, 4, 11) == am.generate_random_dfa(6, 4, 11)
    assert am.generate_random_dfa(6, 4, 11) != am.generate_random_dfa(6, 4, 12)


def test_generation_rejects_tiny_alphabet():
    with pytest.raises(ValueError):
        am.generate_random_dfa(4, 1, 0)


def test_is_minimal_detects_equivalent_states():
    # states 1 and 2 are both accepting sinks: equivalent
    dfa = am.Dfa(3, 2, np.array([[1, 2], [1, 1], [2, 2]]), 0, frozenset({1, 2}))
    assert not am.is_minimal(dfa)


def test_walk_count_table_small_fixture():
    # accepts words ending in 1 over {0, 1}
    dfa = am.Dfa(2, 2, np.array([[0, 1], [0, 1]]), 0, frozenset({1}))
    counts = am.walk_count_table(dfa, 3)
    # from any state, words of length r ending in 1: 2^(r-1)
    assert counts[1].tolist() == [1, 1]
    assert counts[2].tolist() == [2, 2]
    assert counts[3].tolist() == [4, 4]


@pytest.mark.parametrize("seed", [0, 1])
def test_positive_walks_accept_and_respect_length(seed):
    dfa = am.generate_random_dfa(6, 4, seed)
    walks = am.sample_positive_walks(dfa, 300, 6, seed)
    assert len(walks) == 300
    assert all(w.accepted and 1 <= len(w) <= 6 for w in walks)
    assert all(am.accepts(dfa, w.symbols) for w in walks)


def test_rejected_and_incomplete_walks():
    dfa = am.generate_random_dfa(6, 4, 3)
    rej = am.sample_rejected_walks(dfa, 200, 6, 0)
    assert all(not am.accepts(dfa, w.symbols) for w in rej)
    inc = am.sample_incomplete_walks(dfa, 200, 6, 0)
    assert all(am.is_incomplete(dfa, w.symbols, 6) for w in inc)


def test_completion_budget_matches_enumeration():
    dfa = am.generate_random_dfa(4, 4, 2)
    ok = am.completion_budget(dfa, 4)
    for r in range(1, 5):
        for s in range(4):
            expect = False
            for L in range(1, r + 1):
                for word in itertools.product(range(4), repeat=L):
                    q = s
                    for a in word:
                        q = dfa.transition[q, a]
                    if q in dfa.accepting:
                        expect = True
                        break
                if expect:
                    break
            assert bool(ok[r, s]) == expect


def test_sampling_is_seed_deterministic():
    dfa = am.generate_random_dfa(6, 4, 0)
    a = am.sample_positive_walks(dfa, 50, 6, 9)
    b = am.sample_positive_walks(dfa, 50, 6, 9)
    assert [w.symbols for w in a] == [w.symbols for w in b]


def test_infeasible_positive_request():
    # acceptance needs at least 3 steps
    dfa = am.Dfa(4, 2, np.array([[1, 1], [2, 2], [3, 3], [3, 3]]), 0, frozenset({3}))
    with pytest.raises(am.InfeasibleError):
        am.sample_positive_walks(dfa, 5, 2, 0)


@given(st.integers(0, 3))
def test_one_hot_round_trip(sym):
    v = am.symbol_to_ap_vector(sym, 4)
    assert v.sum() == 1 and am.ap_vector_to_symbol(v) == sym


@given(st.integers(0, 15))
def test_binary_round_trip(sym):
    v = am.symbol_to_ap_vector(sym, 4, "binary")
    assert am.ap_vector_to_symbol(v, "binary") == sym


def test_encoding_errors():
    with pytest.raises(ValueError):
        am.symbol_to_ap_vector(4, 4)
    with pytest.raises(ValueError):
        am.symbol_to_ap_vector(0, 4, "gray")


def test_noise_statistics():
    x = np.zeros((20000, 4))
    y = am.add_ap_noise(x, 0.2, seed=0)
    assert abs(y.mean()) < 0.01
    assert abs(y.var() - 0.2) < 0.01
    assert np.array_equal(am.add_ap_noise(x, 0.0), x)
    with pytest.raises(ValueError):
        am.add_ap_noise(x, -1.0)


@pytest.mark.parametrize("n", [4, 6, 8])
def test_holdout_keeps_training_feasible(n):
    dfa = am.generate_random_dfa(n, 4, 0)
    h = am.holdout_transitions(dfa, 0.1, 0, max_len=n)
    assert len(h.test_only) == int(np.floor(0.1 * n * 4))
    assert (~h.train_mask).sum() == len(h.test_only)
    train = am.sample_positive_walks(dfa, 100, n, 0, h.train_mask)
    assert not any(h.crosses(w) for w in train)
    novel = am.sample_novel_walks(dfa, h, 50, n, 1, True)
    assert all(h.crosses(w) and w.accepted for w in novel)
    novel_neg = am.sample_novel_walks(dfa, h, 50, n, 2, False, unfinished_only=True)
    assert all(h.crosses(w) and am.is_incomplete(dfa, w.symbols, n) for w in novel_neg)


def test_holdout_fraction_bounds():
    dfa = am.generate_random_dfa(4, 4, 0)
    with pytest.raises(ValueError):
        am.holdout_transitions(dfa, 0.0, 0)


def test_dfa_json_round_trip(tmp_path):
    dfa = am.generate_random_dfa(6, 4, 5)
    p = tmp_path / "d.json"
    am.save_dfa(dfa, p)
    assert am.load_dfa(p) == dfa
    assert am.Dfa.from_dict(json.loads(json.dumps(dfa.to_dict()))) == dfa
