"""Task model: incremental latent API, training loop, persistence."""
import math

import numpy as np
import pytest

from latmos import automaton as am
from latmos.dataset import LabeledDataset, ObservationSequence, alphabet_sampler, augment_with_negatives
from latmos.model import (LatmosModel, ModelConfig, TrainConfig, TrainingDiverged, batch_loss, evaluate,
                          load_model, save_model, train)
from latmos.nn.params import CheckpointError

BACKBONES = ["gru", "attention", "ssm"]


def tiny_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    pos = [ObservationSequence(np.eye(4)[rng.integers(4, size=int(rng.integers(1, 6)))],
                               None, "positive", j) for j in range(n)]
    pos = [ObservationSequence(p.steps, np.ones(len(p)), "positive", j) for j, p in enumerate(pos)]
    return augment_with_negatives(pos, alphabet_sampler(np.eye(4)), seed=seed)


@pytest.mark.parametrize("kind", BACKBONES)
def test_initial_loss_is_chance_with_symmetric_output(kind):
    ds = tiny_dataset()
    model = LatmosModel(ModelConfig(obs_dim=4, backbone=kind, hidden_dim=8, zero_output_init=True))
    from latmos.model import _pad
    X, Y, M = _pad(ds.sequences, 4)
    loss, P = batch_loss(model, X, Y, M, backward=False)
    assert abs(loss - math.log(2)) < 1e-9
    assert np.allclose(P[M], 0.5)


@pytest.mark.parametrize("kind", BACKBONES)
def test_advance_matches_batched_forward(kind):
    rng = np.random.default_rng(1)
    model = LatmosModel(ModelConfig(obs_dim=4, backbone=kind, hidden_dim=8, seed=2))
    steps = rng.normal(size=(5, 4))
    P = model.forward_sequence(steps)
    states = model.rollout(steps)
    for t, s in enumerate(states):
        assert s.k == t + 1
        assert np.allclose(model.acceptance_prob(s), P[t], atol=1e-10)


@pytest.mark.parametrize("kind", BACKBONES)
def test_advance_many_equals_repeated_advance(kind):
    rng = np.random.default_rng(2)
    model = LatmosModel(ModelConfig(obs_dim=4, backbone=kind, hidden_dim=8, seed=3))
    parent = model.rollout(rng.normal(size=(3, 4)))[-1]
    cands = rng.normal(size=(4, 4))
    many = model.advance_many(model.encode(cands), parent)
    for c, m in zip(cands, many):
        one = model.advance(model.encode(c), parent)
        assert np.allclose(one.h, m.h, atol=1e-12)


def test_empty_sequence_uses_empty_latent():
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6))
    P = model.forward_sequence(np.zeros((0, 4)))
    assert P.shape == (1, 2)
    assert np.isclose(P.sum(), 1.0)


def test_model_check_extreme_thresholds():
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6))
    seq = np.eye(4)[[0, 1, 2]]
    assert model.model_check(seq, 0.0)
    assert not model.model_check(seq, 1.0 + 1e-12)


def test_final_accept_probs_batches_consistently():
    rng = np.random.default_rng(5)
    model = LatmosModel(ModelConfig(obs_dim=4, backbone="attention", hidden_dim=8))
    seqs = [rng.normal(size=(int(L), 4)) for L in rng.integers(0, 7, size=12)]
    batched = model.final_accept_probs(seqs)
    single = [model.forward_sequence(s)[-1, 0] for s in seqs]
    assert np.allclose(batched, single, atol=1e-10)


def test_single_class_fit_drives_accept_to_one():
    rng = np.random.default_rng(0)
    seqs = [ObservationSequence(np.eye(4)[rng.integers(4, size=3)], np.ones(3), "positive", j)
            for j in range(30)]
    ds = LabeledDataset(seqs, 4)
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6))
    train(model, ds, TrainConfig(epochs=60, lr=1e-2, val_fraction=0.0))
    assert model.final_accept_probs(seqs).min() > 0.95


def test_training_learns_a_small_automaton():
    dfa = am.generate_random_dfa(4, 4, 0)
    walks = am.sample_positive_walks(dfa, 300, 4, 0) + am.sample_random_walks(dfa, 300, 4, 1)
    seqs = [ObservationSequence(am.walk_observations(w.symbols, 4), am.prefix_labels(dfa, w.symbols),
                                "oracle", i) for i, w in enumerate(walks)]
    ds = LabeledDataset(seqs, 4)
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=16, seed=1))
    rep = train(model, ds, TrainConfig(epochs=40, lr=1e-2, patience=40, seed=0))
    assert rep.epochs[-1]["train_loss"] < rep.epochs[0]["train_loss"]
    assert evaluate(model, seqs)["step_acc"] > 0.9


def test_training_is_deterministic():
    ds = tiny_dataset(20)
    runs = []
    for _ in range(2):
        m = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6, seed=4))
        train(m, ds, TrainConfig(epochs=3, seed=9))
        runs.append(m.params.snapshot())
    assert all(np.array_equal(runs[0][k], runs[1][k]) for k in runs[0])


def test_divergence_is_reported(monkeypatch):
    ds = tiny_dataset(20)
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6))
    model.params["dec.fc2.W"][...] = np.nan
    with pytest.raises(TrainingDiverged):
        train(model, ds, TrainConfig(epochs=2))


def test_save_load_round_trip(tmp_path):
    cfg = ModelConfig(obs_dim=4, backbone="ssm", hidden_dim=6, seed=2)
    model = LatmosModel(cfg)
    save_model(model, tmp_path / "m.ckpt")
    again = load_model(tmp_path / "m.ckpt", expect=cfg)
    x = np.eye(4)[[1, 2, 3]]
    assert np.array_equal(model.forward_sequence(x), again.forward_sequence(x))
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "m.ckpt", expect=ModelConfig(obs_dim=4, backbone="gru", hidden_dim=6))


def test_frozen_encoder_is_not_trained():
    cfg = ModelConfig(obs_dim=4, hidden_dim=6, frozen_encoder={"kind": "projection", "out": 3},
                      task_encoder={"kind": "projection", "out": 3})
    model = LatmosModel(cfg)
    frozen_before = {k: v.copy() for k, v in model.params.values.items() if k.startswith("enc_frozen")}
    train(model, tiny_dataset(20), TrainConfig(epochs=2, val_fraction=0.0))
    for k, v in frozen_before.items():
        assert np.array_equal(model.params[k], v)
    assert model.embed_dim == 6


def test_observation_dim_is_checked():
    model = LatmosModel(ModelConfig(obs_dim=4, hidden_dim=6))
    with pytest.raises(ValueError):
        model.encode(np.zeros(5))
