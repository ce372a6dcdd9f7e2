"""The LATMOS task model: encoder -> sequence backbone -> acceptance decoder."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .dataset import LabeledDataset, ObservationSequence, split_train_test
from .nn.backbones import build_backbone, matched_sizes
from .nn.layers import Linear, MLPDecoder, cross_entropy, cross_entropy_backward
from .nn.optim import Adam, NonFiniteGradient
from .nn.params import CheckpointError, ParamSet, load_params_into, read_checkpoint, save_params

log = logging.getLogger(__name__)

ACCEPT, FAIL = 0, 1


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, msg: str = "loss became non-finite"):
        super().__init__(f"{msg} in epoch {epoch}")
        self.epoch = epoch


@dataclass
class ModelConfig:
    obs_dim: int
    backbone: str = "gru"
    hidden_dim: int = 16
    frozen_encoder: dict | None = None  # {"kind": "projection", "out": 16}
    task_encoder: dict | None = None    # {"kind": "conv", "channels": 6, "size": 8, ...}
    sizes: dict | None = None           # backbone depth/width; default: parameter-matched
    heads: int = 2
    seed: int = 0
    zero_output_init: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LatentState:
    """Decoder-facing latent ``h`` after ``k`` observations plus the backbone's
    carried memory (recurrent states, or cached keys/values for attention)."""
    h: np.ndarray
    k: int
    memory: Any = None


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 32
    val_fraction: float = 0.1
    patience: int = 10
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    hyper: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    checkpoint: str | None = None

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# encoders

class FrozenProjection:
    """Fixed random feature map ``tanh(R x)``; stands in for a pre-trained encoder."""

    def __init__(self, params: ParamSet, name: str, d_in: int, d_out: int, rng):
        self.fc = Linear(params, name, d_in, d_out, rng, frozen=True)
        self.out_dim = d_out

    def forward(self, x):
        y, _ = self.fc.forward(x)
        return np.tanh(y), None

    def backward(self, cache, dy):
        return None


def _build_encoder(spec: dict, params: ParamSet, name: str, obs_dim: int, rng, frozen: bool):
    kind = spec.get("kind")
    if kind == "projection":
        return FrozenProjection(params, name, obs_dim, spec["out"], rng) if frozen else \
            ProjectionEncoder(params, name, obs_dim, spec["out"], rng)
    if kind == "conv":
        from .doorkey import ConvEncoder
        enc = ConvEncoder(params, name, spec["channels"], spec["size"], spec.get("filters", 5),
                          spec.get("kernel", 3), spec["out"], rng)
        if frozen:
            for k in list(params.values):
                if k.startswith(name + "."):
                    params.frozen.add(k)
        return enc
    raise ValueError(f"unknown encoder kind {kind!r}")


class ProjectionEncoder:
    """Trainable ``tanh(W x + b)``."""

    def __init__(self, params, name, d_in, d_out, rng):
        self.fc = Linear(params, name, d_in, d_out, rng)
        self.out_dim = d_out

    def forward(self, x):
        y, c = self.fc.forward(x)
        t = np.tanh(y)
        return t, (c, t)

    def backward(self, cache, dy):
        c, t = cache
        return self.fc.backward(c, dy * (1 - t * t))


# --------------------------------------------------------------------------
# nested memory helpers (arrays carry a leading batch axis)

def _tile(mem, n):
    if isinstance(mem, np.ndarray):
        return np.repeat(mem, n, axis=0)
    if isinstance(mem, (list, tuple)):
        return type(mem)(_tile(m, n) for m in mem)
    return mem


def _row(mem, i):
    if isinstance(mem, np.ndarray):
        return mem[i:i + 1]
    if isinstance(mem, (list, tuple)):
        return type(mem)(_row(m, i) for m in mem)
    return mem


class LatmosModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params = ParamSet()
        self.frozen_encoder = None
        self.task_encoder = None
        embed = 0
        if config.frozen_encoder:
            self.frozen_encoder = _build_encoder(config.frozen_encoder, self.params, "enc_frozen",
                                                 config.obs_dim, rng, frozen=True)
            embed += self.frozen_encoder.out_dim
        if config.task_encoder:
            self.task_encoder = _build_encoder(config.task_encoder, self.params, "enc_task",
                                               config.obs_dim, rng, frozen=False)
            embed += self.task_encoder.out_dim
        self.embed_dim = embed or config.obs_dim
        sizes = config.sizes or matched_sizes(self.embed_dim, config.hidden_dim)
        self.sizes = sizes
        self.backbone = build_backbone(config.backbone, self.params, "seq", self.embed_dim,
                                       config.hidden_dim, rng, heads=config.heads, **sizes)
        self.decoder = MLPDecoder(self.params, "dec", config.hidden_dim, 2, rng)
        if config.zero_output_init:
            self.params["dec.fc2.W"][...] = 0.0

    # ------------------------------------------------------------------ encoding
    @property
    def hidden_dim(self):
        return self.config.hidden_dim

    def _encode_fwd(self, X):
        if not (self.frozen_encoder or self.task_encoder):
            return X, None
        parts, caches = [], []
        for enc in (self.frozen_encoder, self.task_encoder):
            if enc is None:
                caches.append(None)
                continue
            y, c = enc.forward(X)
            parts.append(y)
            caches.append(c)
        return np.concatenate(parts, axis=-1), caches

    def _encode_bwd(self, caches, dE):
        if caches is None or self.task_encoder is None:
            return
        a = self.frozen_encoder.out_dim if self.frozen_encoder else 0
        self.task_encoder.backward(caches[1], dE[..., a:])

    def encode(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.config.obs_dim:
            raise ValueError(f"observation dim {obs.shape[-1]} != model obs_dim {self.config.obs_dim}")
        return self._encode_fwd(obs)[0]

    # ------------------------------------------------------------------ batched
    def forward_batch(self, X):
        """(B, T, N) observations -> (B, T, 2) per-step [accept, fail] probabilities."""
        E, ce = self._encode_fwd(X)
        H, cb = self.backbone.forward(E)
        P, cd = self.decoder.forward(H)
        return P, (ce, cb, cd)

    def backward_batch(self, cache, dP):
        ce, cb, cd = cache
        dH = self.decoder.backward(cd, dP)
        dE = self.backbone.backward(cb, dH)
        self._encode_bwd(ce, dE)

    def latents_batch(self, X):
        E, _ = self._encode_fwd(X)
        return self.backbone.forward(E)[0]

    # ------------------------------------------------------------------ step-wise
    def initial_state(self) -> LatentState:
        return LatentState(self.backbone.empty_latent().copy(), 0, self.backbone.init_memory(1))

    def advance(self, obs_embedding, state: LatentState) -> LatentState:
        e = np.asarray(obs_embedding, dtype=float).reshape(1, -1)
        if e.shape[1] != self.embed_dim:
            raise ValueError(f"embedding dim {e.shape[1]} != {self.embed_dim}")
        h, mem = self.backbone.step(state.memory, e)
        return LatentState(h[0], state.k + 1, mem)

    def advance_many(self, embeddings, state: LatentState) -> list[LatentState]:
        """Advance one parent state by several candidate observations at once."""
        E = np.asarray(embeddings, dtype=float)
        n = len(E)
        h, mem = self.backbone.step(_tile(state.memory, n), E)
        return [LatentState(h[i], state.k + 1, _row(mem, i)) for i in range(n)]

    def acceptance_prob(self, state: LatentState) -> tuple[float, float]:
        p, _ = self.decoder.forward(np.asarray(state.h)[None])
        return float(p[0, ACCEPT]), float(p[0, FAIL])

    def accept_probs(self, H):
        return self.decoder.forward(H)[0][..., ACCEPT]

    def forward_sequence(self, seq: ObservationSequence | np.ndarray) -> np.ndarray:
        steps = seq.steps if isinstance(seq, ObservationSequence) else np.asarray(seq, dtype=float)
        if len(steps) == 0:
            return np.array([self.acceptance_prob(self.initial_state())])
        P, _ = self.forward_batch(steps[None])
        return P[0]

    def rollout(self, steps) -> list[LatentState]:
        """Step-wise latent states after each observation (planner semantics)."""
        state = self.initial_state()
        out = []
        for o in np.asarray(steps, dtype=float):
            state = self.advance(self.encode(o), state)
            out.append(state)
        return out

    def model_check(self, seq, threshold: float = 0.5) -> bool:
        return bool(self.forward_sequence(seq)[-1, ACCEPT] >= threshold)

    def final_accept_probs(self, sequences, batch_size: int = 512) -> np.ndarray:
        """Final-step acceptance probability of each sequence, batched by length."""
        steps = [s.steps if isinstance(s, ObservationSequence) else np.asarray(s, dtype=float)
                 for s in sequences]
        out = np.empty(len(steps))
        by_len: dict[int, list] = {}
        for i, s in enumerate(steps):
            by_len.setdefault(len(s), []).append(i)
        for T, idx in by_len.items():
            if T == 0:
                out[idx] = self.acceptance_prob(self.initial_state())[0]
                continue
            for j in range(0, len(idx), batch_size):
                chunk = idx[j:j + batch_size]
                P, _ = self.forward_batch(np.stack([steps[i] for i in chunk]))
                out[chunk] = P[:, -1, ACCEPT]
        return out

    def parameter_count(self, prefix: str = "seq") -> int:
        return self.params.count(prefix)


# --------------------------------------------------------------------------
# training

def _pad(seqs, obs_dim):
    T = max(len(s) for s in seqs)
    X = np.zeros((len(seqs), T, obs_dim))
    Y = np.zeros((len(seqs), T), dtype=np.int8)
    M = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        X[i, :len(s)] = s.steps
        Y[i, :len(s)] = s.labels
        M[i, :len(s)] = True
    return X, Y, M


def batch_loss(model: LatmosModel, X, Y, M, backward: bool = True):
    """Mean over sequences of the mean per-step cross-entropy; returns (loss, P)."""
    P, cache = model.forward_batch(X)
    target = np.stack([Y == 1, Y == 0], axis=-1).astype(float)
    lengths = M.sum(axis=1, keepdims=True)
    w = M / (lengths * len(X))
    loss = float((cross_entropy(P, target) * w).sum())
    if backward:
        model.backward_batch(cache, cross_entropy_backward(P, target, w))
    return loss, P


def evaluate(model: LatmosModel, seqs, batch_size: int = 256) -> dict:
    """Per-step loss/accuracy and final-step accuracy on labeled sequences."""
    if not seqs:
        return {"loss": float("nan"), "step_acc": float("nan"), "final_acc": float("nan")}
    total_loss = correct = steps = final = 0.0
    for i in range(0, len(seqs), batch_size):
        chunk = seqs[i:i + batch_size]
        X, Y, M = _pad(chunk, model.config.obs_dim)
        loss, P = batch_loss(model, X, Y, M, backward=False)
        total_loss += loss * len(chunk)
        pred = P[..., ACCEPT] >= 0.5
        correct += ((pred == (Y == 1)) & M).sum()
        steps += M.sum()
        last = M.sum(axis=1) - 1
        final += (pred[np.arange(len(chunk)), last] == (Y[np.arange(len(chunk)), last] == 1)).sum()
    return {"loss": total_loss / len(seqs), "step_acc": float(correct / steps),
            "final_acc": float(final / len(seqs))}


def train(model: LatmosModel, dataset: LabeledDataset, hyper: TrainConfig | None = None,
          seed: int | None = None, on_epoch=None) -> TrainReport:
    """Adam on the mean per-step cross-entropy with plateau early stopping.

    Frozen-encoder parameters are excluded from the optimizer. The parameters
    with the best validation step accuracy (ties: lower loss) are restored at
    the end.
    """
    hyper = hyper or TrainConfig()
    if seed is not None:
        hyper = TrainConfig(**{**hyper.to_dict(), "seed": seed})
    if dataset.obs_dim != model.config.obs_dim:
        raise ValueError("dataset and model observation dims differ")
    rng = np.random.default_rng(hyper.seed)
    seqs = [s for s in dataset.sequences if len(s) > 0]
    val = []
    if hyper.val_fraction > 0 and len({s.source_id for s in seqs}) >= 10:
        tr, va = split_train_test(LabeledDataset(seqs, dataset.obs_dim), hyper.val_fraction, hyper.seed)
        seqs, val = tr.sequences, va.sequences
    opt = Adam(lr=hyper.lr)
    report = TrainReport(hyper=hyper.to_dict(), model=model.config.to_dict())
    best = (-1.0, math.inf)
    best_snap = model.params.snapshot()
    stale = 0
    order_by_len = np.argsort([len(s) for s in seqs], kind="stable")
    for epoch in range(1, hyper.epochs + 1):
        perm = _bucketed(order_by_len, hyper.batch_size, rng)
        total = 0.0
        for idx in perm:
            chunk = [seqs[i] for i in idx]
            X, Y, M = _pad(chunk, model.config.obs_dim)
            loss, _ = batch_loss(model, X, Y, M)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            try:
                opt.step(model.params)
            except NonFiniteGradient as exc:
                raise TrainingDiverged(epoch, str(exc)) from exc
            total += loss * len(idx)
        rec = {"epoch": epoch, "train_loss": total / len(seqs)}
        if val:
            ev = evaluate(model, val)
            rec.update(val_loss=ev["loss"], val_acc=ev["step_acc"])
            key = (ev["step_acc"], -ev["loss"])
            if key > (best[0], -best[1]):
                best = (ev["step_acc"], ev["loss"])
                best_snap = model.params.snapshot()
                report.best_epoch = epoch
                stale = 0
            else:
                stale += 1
        else:
            best_snap = model.params.snapshot()
            report.best_epoch = epoch
        report.epochs.append(rec)
        if on_epoch:
            on_epoch(rec)
        log.debug("epoch %d %s", epoch, rec)
        if val and stale >= hyper.patience:
            break
    model.params.load_snapshot(best_snap)
    return report


def _bucketed(order_by_len, batch_size, rng):
    """Batches of similar length: length-sorted indices are cut into pools of
    four batches, each pool is shuffled and re-dealt, then batch order is shuffled."""
    n = len(order_by_len)
    pool_size = 4 * batch_size
    out = []
    for g in range(0, n, pool_size):
        pool = order_by_len[g:g + pool_size]
        pool = pool[rng.permutation(len(pool))]
        out.extend(pool[i:i + batch_size] for i in range(0, len(pool), batch_size))
    return [out[i] for i in rng.permutation(len(out))]


# --------------------------------------------------------------------------
# persistence

def save_model(model: LatmosModel, path) -> None:
    save_params(model.params, path, meta={"config": model.config.to_dict(), "sizes": model.sizes})


def load_model(path, expect: ModelConfig | None = None) -> LatmosModel:
    meta, values, frozen = read_checkpoint(path)
    if "config" not in meta:
        raise CheckpointError("checkpoint carries no model config")
    cfg = ModelConfig(**meta["config"])
    if expect is not None:
        for key in ("obs_dim", "backbone", "hidden_dim", "frozen_encoder", "task_encoder"):
            if getattr(expect, key) != getattr(cfg, key):
                raise CheckpointError(f"architecture mismatch on {key}: checkpoint has "
                                      f"{getattr(cfg, key)!r}, expected {getattr(expect, key)!r}")
    cfg.sizes = meta.get("sizes", cfg.sizes)
    model = LatmosModel(cfg)
    load_params_into(model.params, values)
    return model


def config_from_json(text: str) -> ModelConfig:
    return ModelConfig(**json.loads(text))
