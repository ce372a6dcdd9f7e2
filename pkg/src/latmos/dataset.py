"""Labeled observation sequences, synthetic negatives and the dataset file format.

Binary layout (all integers little-endian)::

    b"LATMOSDS"  u32 version  u32 header_len  header (UTF-8 JSON)
    repeated per sequence:
        u32 record_len                      bytes that follow in this record
        u32 T  u8 source  u8 has_labels  i64 source_id  i32 cut
        T bytes of labels (only when has_labels)
        T * obs_dim float64 observations (row-major)

The header JSON holds ``obs_dim``, ``count``, per-source counts and ``meta``.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAGIC = b"LATMOSDS"
VERSION = 1
SOURCES = ("positive", "synthetic_negative", "oracle")
_REC = struct.Struct("<IBBqi")


class DatasetFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ObservationSequence:
    """Per-step observations with optional per-step binary labels.

    ``source_id``/``cut`` record provenance: a synthetic negative copies the
    first ``cut`` steps of positive ``source_id``. Sequences labeled by a
    ground-truth automaton use source ``"oracle"`` and carry arbitrary labels.
    """
    steps: np.ndarray
    labels: np.ndarray | None = None
    source: str = "positive"
    source_id: int = -1
    cut: int = -1

    def __post_init__(self):
        steps = np.array(self.steps, dtype=np.float64)
        if steps.ndim != 2:
            raise ValueError("steps must be a (T, N) array")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int8)
            if labels.shape != (len(steps),):
                raise ValueError("labels must have one entry per step")
            if not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be binary")
            if self.source == "positive" and not labels.all():
                raise ValueError("positive sequences carry only 1 labels")
            if self.source == "synthetic_negative" and not _is_negative_pattern(labels):
                raise ValueError("synthetic negatives must be labeled 1*0+")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.steps)

    @property
    def obs_dim(self) -> int:
        return self.steps.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ObservationSequence):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return (same_labels and self.source == other.source and self.source_id == other.source_id
                and self.cut == other.cut and self.steps.shape == other.steps.shape
                and np.array_equal(self.steps, other.steps))

    __hash__ = None


def _is_negative_pattern(labels: np.ndarray) -> bool:
    if len(labels) == 0 or labels[-1] != 0:
        return False
    zeros = np.flatnonzero(labels == 0)
    return bool(labels[:zeros[0]].all() and not labels[zeros[0]:].any())


@dataclass
class LabeledDataset:
    sequences: list
    obs_dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.sequences:
            if s.labels is None:
                raise ValueError("every sequence in a LabeledDataset needs labels")
            if s.obs_dim != self.obs_dim:
                raise ValueError(f"sequence obs_dim {s.obs_dim} != dataset obs_dim {self.obs_dim}")

    def __len__(self):
        return len(self.sequences)

    def label_counts(self) -> tuple[int, int]:
        ones = sum(int(s.labels.sum()) for s in self.sequences)
        total = sum(len(s) for s in self.sequences)
        return ones, total - ones

    def imbalance(self) -> float:
        ones, zeros = self.label_counts()
        return abs(ones - zeros) / max(ones + zeros, 1)

    def __eq__(self, other):
        return (isinstance(other, LabeledDataset) and self.obs_dim == other.obs_dim
                and self.meta == other.meta and len(self) == len(other)
                and all(a == b for a, b in zip(self.sequences, other.sequences)))


Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def alphabet_sampler(alphabet: np.ndarray) -> Sampler:
    """Uniform, independent draws from a finite set of observation vectors."""
    alphabet = np.asarray(alphabet, dtype=float)

    def sample(rng, n, source_id):
        return alphabet[rng.integers(len(alphabet), size=n)]
    return sample


def augment_with_negatives(positives: Sequence[ObservationSequence], sampler: Sampler,
                           negatives_per_positive: int | None = None, seed: int = 0,
                           balance_tol: float = 0.1, meta: dict | None = None) -> LabeledDataset:
    """Add synthetic negatives to positive demonstrations.

    For a positive of length K each negative keeps the first ``c`` observations
    (labels 1) and replaces steps ``c..K-1`` with fresh draws from ``sampler``
    (labels 0), with ``c`` drawn without replacement from ``0..K-1``. The
    default (``None``) uses every cut, which balances step labels exactly:
    both classes then count ``K(K+1)/2`` steps.

    If the result is more than ``balance_tol`` out of balance, negatives at
    unused cuts are added while 1-labels dominate; any remaining excess is
    removed by dropping sequences.
    """
    if not positives:
        raise ValueError("need at least one positive sequence")
    obs_dim = positives[0].obs_dim
    rng = np.random.default_rng(seed)
    out = []
    clamped = 0
    spare = []   # unused cuts, kept for topping up
    for j, pos in enumerate(positives):
        K = len(pos)
        out.append(ObservationSequence(pos.steps, np.ones(K, dtype=np.int8), "positive", j, K))
        n = K if negatives_per_positive is None else negatives_per_positive
        if n > K:
            clamped += 1
            n = K
        if n <= 0:
            continue
        perm = rng.choice(K, size=K, replace=False)
        for c in np.sort(perm[:n]):
            out.append(_negative(pos, j, int(c), sampler, rng, obs_dim))
        spare += [(j, int(c)) for c in perm[n:]]
    if clamped:
        warnings.warn(f"negatives_per_positive clamped to sequence length for {clamped} positives")
    meta = dict(meta or {})
    meta.update({"augment_seed": seed, "negatives_per_positive": negatives_per_positive,
                 "clamped": clamped})
    ds = LabeledDataset(out, obs_dim, meta)
    if negatives_per_positive != 0:
        _top_up(ds, positives, spare, sampler, rng, balance_tol)
        rebalance(ds, rng, balance_tol)
    return ds


def _negative(pos, j, c, sampler, rng, obs_dim):
    K = len(pos)
    suffix = np.asarray(sampler(rng, K - c, j), dtype=float).reshape(K - c, obs_dim)
    labels = np.concatenate([np.ones(c, dtype=np.int8), np.zeros(K - c, dtype=np.int8)])
    return ObservationSequence(np.concatenate([pos.steps[:c], suffix]), labels, "synthetic_negative", j, c)


def _top_up(ds, positives, spare, sampler, rng, tol):
    """While 1-labels dominate, add negatives from unused cuts, best cut first.

    Using every cut balances exactly, so adding cuts moves toward balance
    without discarding demonstrations.
    """
    ones, zeros = ds.label_counts()
    imb = lambda o, z: abs(o - z) / max(o + z, 1)
    added = 0
    while spare and ones > zeros and imb(ones, zeros) > tol:
        scores = [imb(ones + c, zeros + len(positives[j]) - c) for j, c in spare]
        j, c = spare.pop(int(np.argmin(scores)))
        ds.sequences.append(_negative(positives[j], j, c, sampler, rng, ds.obs_dim))
        ones += c
        zeros += len(positives[j]) - c
        added += 1
    ds.meta["topped_up"] = added


def rebalance(ds: LabeledDataset, rng: np.random.Generator, tol: float = 0.1) -> None:
    ones, zeros = ds.label_counts()
    dropped = 0
    imb = lambda o, z: abs(o - z) / max(o + z, 1)
    while imb(ones, zeros) > tol:
        # drop the sequence that most reduces the imbalance (random among ties)
        best, cand = imb(ones, zeros), []
        for i, s in enumerate(ds.sequences):
            if s.source == "positive" and _only_positive(ds, s):
                continue
            o = int(s.labels.sum())
            v = imb(ones - o, zeros - (len(s) - o))
            if v < best - 1e-12:
                best, cand = v, [i]
            elif cand and abs(v - best) <= 1e-12:
                cand.append(i)
        if not cand:
            break
        i = cand[rng.integers(len(cand))]
        s = ds.sequences.pop(i)
        ones -= int(s.labels.sum())
        zeros -= len(s) - int(s.labels.sum())
        dropped += 1
    ds.meta["rebalance_dropped"] = dropped


def _only_positive(ds, seq):
    return sum(1 for s in ds.sequences if s.source == "positive") <= 1


def split_train_test(ds: LabeledDataset, test_fraction: float, seed: int):
    """Sequence-level split grouped by provenance: every sequence derived from a
    positive lands on the same side as that positive."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    groups = sorted({s.source_id for s in ds.sequences})
    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * len(groups)))
    if n_test == 0 or n_test == len(groups):
        raise ValueError(f"test_fraction={test_fraction} leaves one side empty "
                         f"({len(groups)} provenance groups)")
    test_groups = set(rng.permutation(groups)[:n_test].tolist())
    meta = dict(ds.meta, split_seed=seed, test_fraction=test_fraction)
    train = [s for s in ds.sequences if s.source_id not in test_groups]
    test = [s for s in ds.sequences if s.source_id in test_groups]
    return LabeledDataset(train, ds.obs_dim, dict(meta, side="train")), \
        LabeledDataset(test, ds.obs_dim, dict(meta, side="test"))


# --------------------------------------------------------------------------
# persistence

def save_dataset(ds: LabeledDataset, path) -> None:
    header = {
        "obs_dim": ds.obs_dim,
        "count": len(ds),
        "sources": {src: sum(1 for s in ds.sequences if s.source == src) for src in SOURCES},
        "meta": ds.meta,
    }
    hbytes = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hbytes)))
        fh.write(hbytes)
        for s in ds.sequences:
            body = _REC.pack(len(s), SOURCES.index(s.source), 1, s.source_id, s.cut)
            body += s.labels.astype(np.uint8).tobytes() + s.steps.astype("<f8").tobytes()
            fh.write(struct.pack("<I", len(body)))
            fh.write(body)


def load_dataset(path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DatasetFormatError("bad magic", 0)
    if len(raw) < 16:
        raise DatasetFormatError("truncated header", len(raw))
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 8)
    if 16 + hlen > len(raw):
        raise DatasetFormatError("truncated header", len(raw))
    try:
        header = json.loads(raw[16:16 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DatasetFormatError(f"corrupt header JSON: {exc}", 16) from exc
    N = int(header["obs_dim"])
    off = 16 + hlen
    seqs = []
    for _ in range(int(header["count"])):
        if off + 4 > len(raw):
            raise DatasetFormatError("truncated record length", off)
        (rlen,) = struct.unpack_from("<I", raw, off)
        start = off + 4
        if start + rlen > len(raw):
            raise DatasetFormatError(f"record of {rlen} bytes runs past end of file", off)
        if rlen < _REC.size:
            raise DatasetFormatError("record too short", off)
        T, src, has_labels, sid, cut = _REC.unpack_from(raw, start)
        need = _REC.size + (T if has_labels else 0) + 8 * T * N
        if need != rlen or src >= len(SOURCES):
            raise DatasetFormatError("inconsistent record", off)
        p = start + _REC.size
        labels = None
        if has_labels:
            labels = np.frombuffer(raw, dtype=np.uint8, count=T, offset=p).astype(np.int8)
            p += T
        steps = np.frombuffer(raw, dtype="<f8", count=T * N, offset=p).reshape(T, N)
        seqs.append(ObservationSequence(steps, labels, SOURCES[src], sid, cut))
        off = start + rlen
    if off != len(raw):
        raise DatasetFormatError(f"{len(raw) - off} unexpected trailing bytes", off)
    return LabeledDataset(seqs, N, header.get("meta", {}))


def export_json(ds: LabeledDataset) -> str:
    """Plain-text export for small fixtures (floats round-trip via repr)."""
    return json.dumps({
        "obs_dim": ds.obs_dim,
        "meta": ds.meta,
        "sequences": [{"steps": s.steps.tolist(), "labels": s.labels.tolist(), "source": s.source,
                       "source_id": s.source_id, "cut": s.cut} for s in ds.sequences],
    })


def import_json(text: str) -> LabeledDataset:
    d = json.loads(text)
    seqs = [ObservationSequence(np.array(s["steps"], dtype=float).reshape(-1, d["obs_dim"]),
                                s["labels"], s["source"], s["source_id"], s["cut"])
            for s in d["sequences"]]
    return LabeledDataset(seqs, d["obs_dim"], d["meta"])


def with_labels(seq: ObservationSequence, labels) -> ObservationSequence:
    return replace(seq, labels=np.asarray(labels, dtype=np.int8))
