"""Synthetic negatives, provenance, splits and the dataset file format."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from latmos.dataset import (DatasetFormatError, LabeledDataset, ObservationSequence, alphabet_sampler,
                            augment_with_negatives, export_json, import_json, load_dataset,
                            save_dataset, split_train_test)

ALPHABET = np.eye(4)


def positives_from(lengths, seed=0):
    rng = np.random.default_rng(seed)
    return [ObservationSequence(ALPHABET[rng.integers(4, size=K)], np.ones(K), "positive", j)
            for j, K in enumerate(lengths)]


def is_one_star_zero_plus(labels):
    s = "".join(map(str, labels.tolist()))
    return s.rstrip("0") == s[: len(s.rstrip("0"))] and "0" in s and "01" not in s


@given(st.lists(st.integers(1, 12), min_size=1, max_size=20), st.integers(0, 2**31 - 1))
def test_negative_structure_and_provenance(lengths, seed):
    pos = positives_from(lengths, seed)
    ds = augment_with_negatives(pos, alphabet_sampler(ALPHABET), seed=seed, balance_tol=1.0)
    for s in ds.sequences:
        if s.source == "synthetic_negative":
            assert is_one_star_zero_plus(s.labels)
            src = pos[s.source_id]
            assert len(s) == len(src)
            assert np.array_equal(s.steps[: s.cut], src.steps[: s.cut])
            assert s.labels[: s.cut].all() and not s.labels[s.cut:].any()
        else:
            assert s.labels.all()


@given(st.lists(st.integers(1, 15), min_size=1, max_size=30), st.integers(0, 1000))
def test_all_cuts_balance_exactly(lengths, seed):
    ds = augment_with_negatives(positives_from(lengths), alphabet_sampler(ALPHABET), seed=seed)
    ones, zeros = ds.label_counts()
    assert ones == zeros


@pytest.mark.filterwarnings("ignore:negatives_per_positive clamped")
@given(st.lists(st.integers(2, 12), min_size=10, max_size=40), st.integers(1, 3), st.integers(0, 1000))
def test_partial_cuts_rebalanced_within_tolerance(lengths, n, seed):
    ds = augment_with_negatives(positives_from(lengths), alphabet_sampler(ALPHABET),
                                negatives_per_positive=n, seed=seed, balance_tol=0.1)
    assert sum(1 for s in ds.sequences if s.source == "positive") >= 1
    assert ds.imbalance() <= 0.1


def test_augmentation_is_seed_deterministic():
    pos = positives_from([5, 7, 3])
    a = augment_with_negatives(pos, alphabet_sampler(ALPHABET), seed=4)
    b = augment_with_negatives(pos, alphabet_sampler(ALPHABET), seed=4)
    assert a == b


def test_zero_negatives_returns_positives_only():
    pos = positives_from([4, 4])
    ds = augment_with_negatives(pos, alphabet_sampler(ALPHABET), negatives_per_positive=0)
    assert [s.source for s in ds.sequences] == ["positive", "positive"]


def test_requesting_more_cuts_than_steps_warns():
    with pytest.warns(UserWarning):
        augment_with_negatives(positives_from([2]), alphabet_sampler(ALPHABET), negatives_per_positive=5)


def test_empty_positive_list_rejected():
    with pytest.raises(ValueError):
        augment_with_negatives([], alphabet_sampler(ALPHABET))


def test_sequence_validation():
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros((3, 2)), [1, 0, 1], "positive")
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros((3, 2)), [1, 0, 1], "synthetic_negative")
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros((3, 2)), [1, 1], "oracle")
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros(3), None)
    ObservationSequence(np.zeros((3, 2)), [0, 1, 0], "oracle")


def test_split_keeps_provenance_groups_together():
    ds = augment_with_negatives(positives_from([4] * 20), alphabet_sampler(ALPHABET), seed=0)
    tr, te = split_train_test(ds, 0.25, 3)
    assert {s.source_id for s in tr.sequences}.isdisjoint({s.source_id for s in te.sequences})
    assert len(tr) + len(te) == len(ds)
    with pytest.raises(ValueError):
        split_train_test(ds, 0.001, 0)


def test_binary_round_trip(tmp_path):
    ds = augment_with_negatives(positives_from([3, 5, 1]), alphabet_sampler(ALPHABET), seed=1,
                                meta={"note": "x"})
    p = tmp_path / "d.bin"
    save_dataset(ds, p)
    assert load_dataset(p) == ds
    assert import_json(export_json(ds)) == ds


def test_corrupt_files_report_offsets(tmp_path):
    ds = augment_with_negatives(positives_from([3, 5]), alphabet_sampler(ALPHABET), seed=1)
    p = tmp_path / "d.bin"
    save_dataset(ds, p)
    raw = p.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(tmp_path / "magic.bin")
    assert e.value.offset == 0
    (tmp_path / "trunc.bin").write_bytes(raw[:-5])
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(tmp_path / "trunc.bin")
    assert e.value.offset > 16
    (tmp_path / "extra.bin").write_bytes(raw + b"\0\0")
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path / "extra.bin")


def test_dataset_rejects_mixed_dims():
    with pytest.raises(ValueError):
        LabeledDataset([ObservationSequence(np.zeros((2, 3)), [1, 1])], obs_dim=4)


def test_rebalance_tops_up_instead_of_dropping_demos():
    # found by hypothesis: dropping alone stalled at 1/9 imbalance
    ds = augment_with_negatives(positives_from([2, 8, 11, 2, 2, 11, 2, 2, 2, 2]), alphabet_sampler(ALPHABET),
                                negatives_per_positive=1, seed=45, balance_tol=0.1)
    assert ds.imbalance() <= 0.1
    assert ds.meta["topped_up"] > 0
    assert sum(s.source == "positive" for s in ds.sequences) == 10
