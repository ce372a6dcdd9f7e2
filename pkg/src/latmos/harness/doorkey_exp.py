"""Door-Key planning experiment: train LATMOS-x and LATMOS-v on expert demos,
then plan from held-out starts with every heuristic and compare efficiency."""
from __future__ import annotations

import logging
import time

import numpy as np

from .. import doorkey as dk
from ..dataset import ObservationSequence, augment_with_negatives
from ..model import LatmosModel, ModelConfig, train
from ..planner import astar_plan, latent_trajectory, search_efficiency, verify_plan
from .config import DoorKeyConfig, ExperimentConfig
from .metrics import pca
from .symbolic import derive_seed

log = logging.getLogger(__name__)


def choose_starts(config: dk.GridConfig, count: int, seed: int, exclude=()) -> list:
    """Distinct start cells on the key side, avoiding the key and ``exclude``."""
    cells = [c for c in dk.left_cells(config) if c != config.key and c not in set(exclude)]
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cells), size=min(count, len(cells)), replace=False)
    return [cells[int(i)] for i in idx]


def build_splits(cfg: DoorKeyConfig):
    """Layouts, demo starts (layout start first) and held-out test starts."""
    envs = dk.generate_envs(cfg.num_envs, cfg.env_seed, cfg.size)
    demos, tests = [], []
    for i, env in enumerate(envs):
        extra = choose_starts(env, cfg.demos_per_env - 1, derive_seed(cfg.data_seed, i, "demo"),
                              exclude=[env.agent_start]) if cfg.demos_per_env > 1 else []
        starts = [env.agent_start] + extra
        demos.append(starts)
        tests.append(choose_starts(env, cfg.test_starts_per_env, derive_seed(cfg.data_seed, i, "test"),
                                   exclude=starts))
    return envs, demos, tests


def model_config(cfg: DoorKeyConfig, mode: str, seed: int) -> ModelConfig:
    if mode == "x":
        return ModelConfig(obs_dim=dk.X_DIM, backbone=cfg.backbone, hidden_dim=cfg.hidden_dim, seed=seed)
    return ModelConfig(obs_dim=dk.obs_dim("v", cfg.size), backbone=cfg.backbone, hidden_dim=cfg.hidden_dim,
                       frozen_encoder={"kind": "projection", "out": cfg.frozen_dim},
                       task_encoder={"kind": "conv", "channels": len(dk.CHANNELS), "size": cfg.size,
                                     "filters": cfg.conv_filters, "kernel": 3, "out": cfg.task_dim},
                       seed=seed)


def build_dataset(cfg: DoorKeyConfig, envs, demo_starts, mode: str):
    positives, layouts = [], []
    for env, starts in zip(envs, demo_starts):
        for s in starts:
            demo = dk.expert_solve(env, s)
            steps = demo.obs_x if mode == "x" else demo.obs_v
            positives.append(ObservationSequence(steps, np.ones(len(steps), dtype=np.int8),
                                                 "positive", len(positives)))
            layouts.append(env)
    return augment_with_negatives(positives, dk.observation_sampler(layouts, mode),
                                  seed=derive_seed(cfg.data_seed, mode, "augment"),
                                  meta={"mode": mode, "num_envs": len(envs)})


def train_planner_model(cfg: DoorKeyConfig, envs, demo_starts, mode: str):
    ds = build_dataset(cfg, envs, demo_starts, mode)
    model = LatmosModel(model_config(cfg, mode, derive_seed(cfg.model_seed, mode)))
    report = train(model, ds, cfg.train, seed=derive_seed(cfg.model_seed, mode, "train"))
    return model, report, ds


def _plan_cell(env, i, start, heuristic, lam, model, budget):
    rec = {"env": i, "start": list(start), "heuristic": heuristic, "lam": lam}
    t0 = time.perf_counter()
    try:
        res = astar_plan(env, model, heuristic, lam, start, budget)
        rec.update(res.to_dict())
        rec["optimal_length"] = len(dk.expert_actions(env, start))
        if res.success and model is not None:
            rec["verified"] = verify_plan(env, model, res, 0.5, start)
        rec["error"] = None
    except Exception as exc:  # recorded, the run continues
        log.exception("planning failed on env %d", i)
        rec.update(success=False, error=f"{type(exc).__name__}: {exc}")
    rec["seconds"] = time.perf_counter() - t0
    return rec


def efficiency_summary(records) -> list:
    groups = {}
    for r in records:
        groups.setdefault((r["heuristic"], r["lam"]), []).append(r)
    out = []
    for (h, lam), rs in groups.items():
        effs = [r["efficiency"] for r in rs if r.get("success") and r.get("efficiency") is not None]
        out.append({"heuristic": h, "lam": lam, "runs": len(rs), "successes": len(effs),
                    "mean": float(np.mean(effs)) if effs else None,
                    "median": float(np.median(effs)) if effs else None,
                    "std": float(np.std(effs)) if effs else None})
    return out


def run_doorkey_experiment(exp: ExperimentConfig, write: bool = True) -> dict:
    cfg = exp.doorkey
    envs, demo_starts, test_starts = build_splits(cfg)
    t_train = time.perf_counter()
    models, train_info = {}, {}
    needed = {h.split("_")[1] for h in cfg.heuristics if h.startswith("latmos")}
    for mode in sorted(needed):
        model, rep, ds = train_planner_model(cfg, envs, demo_starts, mode)
        models[mode] = model
        ones, zeros = ds.label_counts()
        train_info[mode] = {"epochs": len(rep.epochs), "best_epoch": rep.best_epoch,
                            "params": model.parameter_count(prefix=""), "sequences": len(ds.sequences),
                            "label_ones": ones, "label_zeros": zeros,
                            "final": rep.epochs[rep.best_epoch - 1] if rep.epochs else None}
    t_train = time.perf_counter() - t_train

    records = []
    lams = {h: ([cfg.lam] + [l for l in cfg.lambda_sweep if l != cfg.lam]) if h.startswith("latmos")
            else [cfg.lam] for h in cfg.heuristics}
    for i, env in enumerate(envs):
        for start in test_starts[i]:
            for h in cfg.heuristics:
                model = models.get(h.split("_")[1]) if h.startswith("latmos") else None
                for lam in lams[h]:
                    records.append(_plan_cell(env, i, start, h, lam, model, cfg.budget))

    # expert plans checked by the trained models
    expert_checks = {}
    for mode, model in models.items():
        ok = []
        for i, env in enumerate(envs):
            for start in test_starts[i]:
                demo = dk.expert_solve(env, start)
                ok.append(bool(model.model_check(demo.obs_x if mode == "x" else demo.obs_v, 0.5)))
        expert_checks[mode] = float(np.mean(ok)) if ok else None

    pca_rows = []
    if "v" in models:
        trajs = []
        for i, env in enumerate(envs):
            for start in test_starts[i]:
                H = latent_trajectory(models["v"], dk.expert_solve(env, start).obs_v)
                trajs.append((i, H))
        allH = np.concatenate([H for _, H in trajs])
        proj, _, _, ratio = pca(allH, 2)
        row = 0
        for i, H in trajs:
            for t in range(len(H)):
                pca_rows.append({"env": i, "step": t, "pc1": float(proj[row, 0]), "pc2": float(proj[row, 1])})
                row += 1

    dijkstra = [r for r in records if r["heuristic"] == "dijkstra" and r.get("success")]
    report = {"kind": exp.kind, "config_hash": exp.config_hash(), "config": exp.experiment_dict(),
              "envs": [e.to_dict() for e in envs],
              "test_starts": [[list(s) for s in ss] for ss in test_starts],
              "training": train_info, "expert_model_check": expert_checks,
              "plans": [{k: v for k, v in r.items() if k != "seconds"} for r in records],
              "summary": efficiency_summary(records),
              "dijkstra_optimal": all(r["plan_length"] == r["optimal_length"] for r in dijkstra)
              and len(dijkstra) == sum(r["heuristic"] == "dijkstra" for r in records)}
    timing = {"training_seconds": t_train,
              "plans": [{k: r[k] for k in ("env", "heuristic", "lam", "seconds")} for r in records]}
    if write:
        from .io import write_doorkey_report
        write_doorkey_report(exp, report, timing, records, pca_rows)
    return report


def summary_mean(report: dict, heuristic: str, lam: float | None = None):
    lam = report["config"]["doorkey"]["lam"] if lam is None else lam
    for row in report["summary"]:
        if row["heuristic"] == heuristic and row["lam"] == lam:
            return row["mean"]
    raise KeyError((heuristic, lam))
