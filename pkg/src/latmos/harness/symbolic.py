"""Symbolic-task experiments: base, noisy and novel-transition configurations.

Each ground-truth DFA yields one task. Every method is scored on the same
balanced test set of ground-truth accepted and rejected walks with exact
observations. A run is a list of independent cells (method x factor x DFA);
failures are recorded per cell and the remaining cells proceed.
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import automaton as am
from ..baselines import AlergiaClassifier, SpectralClassifier
from ..dataset import LabeledDataset, ObservationSequence
from ..model import LatmosModel, ModelConfig, train
from .config import ExperimentConfig, SymbolicConfig
from .metrics import compute_accuracy

log = logging.getLogger(__name__)


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from a tuple of ints/strings."""
    words = [p if isinstance(p, int) and p >= 0 else
             int.from_bytes(hashlib.sha256(repr(p).encode()).digest()[:4], "little") for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass
class SymbolicTask:
    index: int
    dfa: am.Dfa
    variant: str
    variance: float
    positives: list            # observation arrays used by the baselines
    train_set: LabeledDataset  # automaton-labeled sequences for the neural models
    tests: list                # (observation array, accepted)
    meta: dict


def _observe(symbols, cfg: SymbolicConfig, variance: float, rng):
    obs = am.walk_observations(symbols, cfg.num_symbols if cfg.encoding == "one_hot"
                               else int(math.ceil(math.log2(cfg.num_symbols))), cfg.encoding)
    if variance > 0:
        obs = obs + rng.normal(0.0, math.sqrt(variance), size=obs.shape)
    return obs


def build_task(cfg: SymbolicConfig, index: int, variant: str, variance: float = 0.0) -> SymbolicTask:
    n = cfg.sizes[index]
    dfa = am.generate_random_dfa(n, cfg.num_symbols, cfg.dfa_seeds[index])
    s = lambda tag: derive_seed(cfg.data_seed, cfg.dfa_seeds[index], n, tag)
    holdout = None
    allowed = None
    if variant == "novel":
        holdout = am.holdout_transitions(dfa, cfg.holdout_fraction, s("holdout"), max_len=n)
        allowed = holdout.train_mask
    pos_walks = am.sample_positive_walks(dfa, cfg.num_walks, n, s("positives"), allowed)
    extra = am.sample_random_walks(dfa, cfg.num_random_walks, n, s("random"), allowed) \
        if cfg.num_random_walks else []
    noise = np.random.default_rng(s(f"noise-{variance}"))
    pos_obs = [_observe(w.symbols, cfg, variance, noise) for w in pos_walks]
    seqs = [ObservationSequence(o, am.prefix_labels(dfa, w.symbols), "oracle", i)
            for i, (o, w) in enumerate(zip(pos_obs, pos_walks))]
    seqs += [ObservationSequence(_observe(w.symbols, cfg, variance, noise),
                                 am.prefix_labels(dfa, w.symbols), "oracle", len(seqs) + i)
             for i, w in enumerate(extra) if len(w.symbols)]
    obs_dim = pos_obs[0].shape[1]
    train_set = LabeledDataset(seqs, obs_dim, {"dfa_seed": cfg.dfa_seeds[index], "variance": variance,
                                               "variant": variant, "data_seed": cfg.data_seed})
    k = cfg.test_per_class
    if variant == "novel":
        acc = am.sample_novel_walks(dfa, holdout, k, n, s("test-pos"), True)
        rej = am.sample_novel_walks(dfa, holdout, k, n, s("test-neg"), False,
                                    unfinished_only=cfg.test_negatives == "unfinished")
    else:
        acc = am.sample_positive_walks(dfa, k, n, s("test-pos"))
        rej = am.sample_incomplete_walks(dfa, k, n, s("test-neg")) if cfg.test_negatives == "unfinished" \
            else am.sample_rejected_walks(dfa, k, n, s("test-neg"))
    exact = np.random.default_rng(0)
    tests = [(_observe(w.symbols, cfg, 0.0, exact), w.accepted) for w in acc + rej]
    ones, zeros = train_set.label_counts()
    meta = {"dfa": dfa.to_dict(), "size": n, "holdout": list(holdout.test_only) if holdout else [],
            "train_label_ones": ones, "train_label_zeros": zeros}
    return SymbolicTask(index, dfa, variant, variance, pos_obs, train_set, tests, meta)


def hidden_dim_for(factor: float, n: int) -> int:
    return max(1, int(round(factor * n)))


def run_cell(task: SymbolicTask, method: str, factor, cfg: SymbolicConfig) -> dict:
    """Train/fit one method on one task and score it on the task's test set."""
    n = task.dfa.num_states
    labels = [a for _, a in task.tests]
    cell = {"dfa": task.index, "size": n, "variant": task.variant, "variance": task.variance,
            "method": method, "factor": factor}
    t0 = time.perf_counter()
    try:
        if method == "alergia":
            clf = AlergiaClassifier(alpha=cfg.alergia_alpha).fit(task.positives)
            preds = [clf.predict(o) for o, _ in task.tests]
            cell["states"] = clf.automaton.num_states
        elif method == "sp_learn":
            rank = hidden_dim_for(factor, n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                clf = SpectralClassifier(rank, cfg.spectral_basis_len, cfg.spectral_kind,
                                         cfg.spectral_min_count,
                                         seed=derive_seed(cfg.model_seed, task.index, "sp")).fit(task.positives)
            preds = [clf.predict(o) for o, _ in task.tests]
            cell["rank"] = clf.wa.rank
        else:
            backbone = method.split("_", 1)[1]
            d = hidden_dim_for(factor, n)
            model = LatmosModel(ModelConfig(obs_dim=task.train_set.obs_dim, backbone=backbone, hidden_dim=d,
                                            seed=derive_seed(cfg.model_seed, task.index, backbone, d)))
            report = train(model, task.train_set, cfg.train,
                           seed=derive_seed(cfg.model_seed, task.index, backbone, d, "train"))
            p = model.final_accept_probs([o for o, _ in task.tests])
            preds = [bool(x >= cfg.threshold) for x in p]
            cell.update(hidden_dim=d, params=model.parameter_count(), epochs=len(report.epochs),
                        best_epoch=report.best_epoch,
                        best_val_acc=max((e.get("val_acc", float("nan")) for e in report.epochs), default=None))
        acc = compute_accuracy(preds, labels)
        cell.update(acc.to_dict())
        cell["error"] = None
    except Exception as exc:  # recorded per cell, the run continues
        log.exception("cell %s/%s on DFA %d failed", method, factor, task.index)
        cell.update(accuracy=None, error=f"{type(exc).__name__}: {exc}")
    cell["seconds"] = time.perf_counter() - t0
    return cell


def _cells_for(cfg: SymbolicConfig, variant: str):
    variances = cfg.noise_variances if variant == "noisy" else [0.0]
    plan = []
    for v in variances:
        for i in range(len(cfg.sizes)):
            plan.append((i, v, "alergia", None))
            plan += [(i, v, "sp_learn", f) for f in cfg.rank_factors]
            plan += [(i, v, f"latmos_{b}", f) for b in cfg.backbones for f in cfg.hidden_factors]
    return plan


def _run_group(args):
    cfg, variant, i, v, jobs = args
    task = build_task(cfg, i, variant, v)
    return [run_cell(task, m, f, cfg) for m, f in jobs], {"dfa": i, "variance": v, **task.meta}


def run_symbolic_experiment(exp: ExperimentConfig, write: bool = True) -> dict:
    """Run every cell of a symbolic experiment and assemble the metrics report."""
    cfg = exp.symbolic
    variant = exp.kind.split("_", 1)[1]
    if len(cfg.sizes) != len(cfg.dfa_seeds):
        raise ValueError("sizes and dfa_seeds must pair up")
    groups = {}
    for i, v, m, f in _cells_for(cfg, variant):
        groups.setdefault((i, v), []).append((m, f))
    work = [(cfg, variant, i, v, jobs) for (i, v), jobs in groups.items()]
    if exp.workers > 1:
        with ProcessPoolExecutor(exp.workers) as pool:
            results = list(pool.map(_run_group, work))
    else:
        results = [_run_group(w) for w in work]
    cells = [c for r, _ in results for c in r]
    tasks = [t for _, t in results]
    report = {"kind": exp.kind, "config_hash": exp.config_hash(), "config": exp.experiment_dict(),
              "tasks": tasks, "cells": [_strip_timing(c) for c in cells],
              "summary": summarize(cells)}
    flags = []
    if any(t["train_label_zeros"] == 0 or t["train_label_ones"] == 0 for t in tasks):
        flags.append("degenerate task: single-class training labels")
    if variant in ("noisy", "novel"):
        flags.append("baseline abstentions are scored as wrong answers")
    report["flags"] = flags
    timing = {"cells": [{k: c[k] for k in ("dfa", "variance", "method", "factor", "seconds")} for c in cells]}
    if write:
        from .io import write_report
        write_report(exp, report, timing, cells)
    return report


def _strip_timing(c):
    return {k: v for k, v in c.items() if k != "seconds"}


def summarize(cells) -> list:
    """Mean/std accuracy over DFAs per (method, factor, variance)."""
    groups = {}
    for c in cells:
        groups.setdefault((c["method"], c["factor"], c["variance"]), []).append(c)
    out = []
    for (m, f, v), cs in groups.items():
        accs = [c["accuracy"] for c in cs if c.get("accuracy") is not None]
        out.append({"method": m, "factor": f, "variance": v, "n": len(accs),
                    "failed": len(cs) - len(accs),
                    "mean": float(np.mean(accs)) if accs else None,
                    "std": float(np.std(accs)) if accs else None})
    return out


def summary_lookup(report: dict, method: str, factor=None, variance: float = 0.0):
    for row in report["summary"]:
        if row["method"] == method and row["factor"] == factor and row["variance"] == variance:
            return row["mean"]
    raise KeyError((method, factor, variance))
