"""Command-line interface: ``python -m latmos <command> ...``.

Commands::

    gen-dfa     random minimal DFA to JSON
    gen-data    labeled dataset file (symbolic walks or Door-Key demos)
    train       fit a task model on a dataset file
    eval        score a model on a dataset, or replay a plan trace
    plan        plan in a Door-Key layout and write a trace
    experiment  run a configured experiment and write its report
    gradcheck   finite-difference gradient suite
    export      dataset file to JSON
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("latmos")


def _cmd_gen_dfa(args):
    from .. import automaton as am
    dfa = am.generate_random_dfa(args.states, args.symbols, args.seed)
    text = json.dumps(dfa.to_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_gen_data(args):
    from .. import automaton as am
    from ..dataset import (LabeledDataset, ObservationSequence, alphabet_sampler,
                           augment_with_negatives, save_dataset)
    if args.doorkey:
        from .. import doorkey as dk
        envs = dk.generate_envs(args.num_envs, args.seed, args.size)
        pos, layouts = [], []
        for env in envs:
            d = dk.expert_solve(env)
            steps = d.obs_x if args.mode == "x" else d.obs_v
            pos.append(ObservationSequence(steps, np.ones(len(steps), dtype=np.int8), "positive", len(pos)))
            layouts.append(env)
        ds = augment_with_negatives(pos, dk.observation_sampler(layouts, args.mode), seed=args.seed,
                                    meta={"doorkey_mode": args.mode, "num_envs": args.num_envs})
    else:
        if not args.dfa:
            raise SystemExit("gen-data: --dfa is required unless --doorkey is given")
        dfa = am.load_dfa(args.dfa)
        n = args.max_len or dfa.num_states
        walks = am.sample_positive_walks(dfa, args.num_walks, n, args.seed)
        rng = np.random.default_rng(args.seed)

        def obs(w):
            o = am.walk_observations(w.symbols, dfa.num_symbols)
            return o + rng.normal(0, np.sqrt(args.noise), o.shape) if args.noise > 0 else o
        if args.labels == "oracle":
            walks += am.sample_random_walks(dfa, args.random_walks, n, args.seed + 1) if args.random_walks else []
            seqs = [ObservationSequence(obs(w), am.prefix_labels(dfa, w.symbols), "oracle", i)
                    for i, w in enumerate(walks) if len(w.symbols)]
            ds = LabeledDataset(seqs, dfa.num_symbols, {"labels": "oracle", "noise": args.noise})
        else:
            pos = [ObservationSequence(obs(w), np.ones(len(w.symbols), dtype=np.int8), "positive", i)
                   for i, w in enumerate(walks) if len(w.symbols)]
            ds = augment_with_negatives(pos, alphabet_sampler(np.eye(dfa.num_symbols)), seed=args.seed,
                                        meta={"labels": "augment", "noise": args.noise})
    save_dataset(ds, args.out)
    ones, zeros = ds.label_counts()
    print(f"wrote {len(ds.sequences)} sequences ({ones} accept / {zeros} fail steps) to {args.out}")
    return 0


def _model_config_from_args(args, obs_dim):
    from ..model import ModelConfig
    frozen = task = None
    if args.encoder == "doorkey-v":
        from .. import doorkey as dk
        size = int(round((obs_dim / len(dk.CHANNELS)) ** 0.5))
        frozen = {"kind": "projection", "out": 16}
        task = {"kind": "conv", "channels": len(dk.CHANNELS), "size": size, "filters": 5,
                "kernel": 3, "out": 16}
    return ModelConfig(obs_dim=obs_dim, backbone=args.backbone, hidden_dim=args.hidden_dim,
                       frozen_encoder=frozen, task_encoder=task, seed=args.seed)


def _cmd_train(args):
    from ..dataset import load_dataset
    from ..model import LatmosModel, TrainConfig, save_model, train
    ds = load_dataset(args.data)
    model = LatmosModel(_model_config_from_args(args, ds.obs_dim))
    hyper = TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                        patience=args.patience, seed=args.seed)
    rep = train(model, ds, hyper, on_epoch=lambda r: log.info("%s", r))
    save_model(model, args.out)
    last = rep.epochs[rep.best_epoch - 1] if rep.epochs else {}
    print(json.dumps({"epochs": len(rep.epochs), "best_epoch": rep.best_epoch, **last}))
    return 0


def _cmd_eval(args):
    if args.trace:
        from .. import doorkey as dk
        trace = json.loads(Path(args.trace).read_text())
        env = dk.GridConfig.from_dict(trace["env"])
        states = dk.replay(env, trace["actions"], trace.get("start"))
        ok = dk.is_goal(env, states[-1]) and len(trace["actions"]) == trace["plan_length"]
        print(json.dumps({"replay_reaches_goal": bool(ok), "plan_length": len(trace["actions"])}))
        return 0 if ok else 1
    if not (args.model and args.data):
        raise SystemExit("eval: give --trace, or both --model and --data")
    from ..dataset import load_dataset
    from ..model import evaluate, load_model
    model = load_model(args.model)
    ds = load_dataset(args.data)
    print(json.dumps(evaluate(model, ds.sequences)))
    return 0


def _cmd_plan(args):
    from .. import doorkey as dk
    from ..model import load_model
    from ..planner import astar_plan, verify_plan
    env = dk.generate_env(args.env_seed, args.size)
    model = load_model(args.model) if args.model else None
    start = tuple(int(v) for v in args.start.split(",")) if args.start else None
    res = astar_plan(env, model, args.heuristic, args.lam, start, args.budget)
    trace = {"env_seed": args.env_seed, "env": env.to_dict(),
             "start": list(start or env.agent_start), **res.to_dict()}
    if res.success and model is not None:
        trace["verified"] = verify_plan(env, model, res, 0.5, start)
    text = json.dumps(trace, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text if not args.out else f"wrote {args.out} (success={res.success}, E={res.explored}, "
                                    f"K={res.plan_length})")
    if args.show and res.success:
        for s in dk.replay(env, res.actions, start)[:: max(1, res.plan_length // 4)]:
            print(dk.render(env, s), end="\n\n")
    return 0 if res.success else 1


def _cmd_experiment(args):
    from .config import ExperimentConfig, apply_overrides, load_config
    cfg = load_config(args.config) if args.config else ExperimentConfig(kind=args.kind or "symbolic_base")
    if args.kind and args.config and args.kind != cfg.kind:
        cfg = apply_overrides(cfg, [f"kind={json.dumps(args.kind)}"])
    cfg = apply_overrides(cfg, args.set)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.workers:
        cfg.workers = args.workers
    if cfg.kind == "gradcheck":
        return _cmd_gradcheck(args)
    if cfg.kind == "doorkey_plan":
        from .doorkey_exp import run_doorkey_experiment
        report = run_doorkey_experiment(cfg)
        rows = report["summary"]
    else:
        from .symbolic import run_symbolic_experiment
        report = run_symbolic_experiment(cfg)
        rows = report["summary"]
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    print(f"report written to {cfg.run_dir()}")
    return 0


def _cmd_gradcheck(args):
    from ..nn.gradcheck import TOLERANCE
    from ..nn.suite import run_suite
    results = run_suite(seed=getattr(args, "seed", 0) or 0)
    bad = [r for r in results if not r.ok]
    for r in results if getattr(args, "verbose", False) else bad:
        print(f"{'ok ' if r.ok else 'BAD'} {r.name:50s} {r.rel_error:.2e}")
    worst = max(r.rel_error for r in results)
    print(f"{len(results)} checks, {len(bad)} above {TOLERANCE:g}, worst {worst:.2e}")
    return 1 if bad else 0


def _cmd_export(args):
    from ..dataset import export_json, load_dataset
    text = export_json(load_dataset(args.data))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latmos", description="Latent task models from positive demonstrations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dfa", help="random minimal DFA")
    g.add_argument("--states", type=int, default=4)
    g.add_argument("--symbols", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(fn=_cmd_gen_dfa)

    d = sub.add_parser("gen-data", help="labeled dataset file")
    d.add_argument("--dfa", help="DFA JSON from gen-dfa")
    d.add_argument("--num-walks", type=int, default=1000)
    d.add_argument("--random-walks", type=int, default=1000)
    d.add_argument("--max-len", type=int)
    d.add_argument("--noise", type=float, default=0.0, help="Gaussian noise variance")
    d.add_argument("--labels", choices=("oracle", "augment"), default="oracle")
    d.add_argument("--doorkey", action="store_true", help="Door-Key expert demos instead of DFA walks")
    d.add_argument("--num-envs", type=int, default=36)
    d.add_argument("--size", type=int, default=8)
    d.add_argument("--mode", choices=("x", "v"), default="x")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train a task model")
    t.add_argument("--data", required=True)
    t.add_argument("--backbone", choices=("gru", "attention", "ssm"), default="gru")
    t.add_argument("--hidden-dim", type=int, default=16)
    t.add_argument("--encoder", choices=("none", "doorkey-v"), default="none")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="score a model or replay a plan trace")
    e.add_argument("--model")
    e.add_argument("--data")
    e.add_argument("--trace")
    e.set_defaults(fn=_cmd_eval)

    pl = sub.add_parser("plan", help="plan in a generated Door-Key layout")
    pl.add_argument("--env-seed", type=int, required=True)
    pl.add_argument("--size", type=int, default=8)
    pl.add_argument("--heuristic", choices=("latmos_x", "latmos_v", "dijkstra", "o_l2"), default="dijkstra")
    pl.add_argument("--model", help="checkpoint for latmos_* heuristics")
    pl.add_argument("--lam", type=float, default=0.05)
    pl.add_argument("--budget", type=int, default=5000)
    pl.add_argument("--start", help="x,y start cell (default: layout start)")
    pl.add_argument("--show", action="store_true", help="print a few grid snapshots along the plan")
    pl.add_argument("--out")
    pl.set_defaults(fn=_cmd_plan)

    x = sub.add_parser("experiment", help="run a configured experiment")
    x.add_argument("--config", help="JSON experiment config")
    x.add_argument("--kind", help="experiment kind when no config is given")
    x.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. symbolic.train.epochs=20")
    x.add_argument("--output-dir")
    x.add_argument("--workers", type=int)
    x.set_defaults(fn=_cmd_experiment)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(fn=_cmd_gradcheck)

    ex = sub.add_parser("export", help="dataset file to JSON")
    ex.add_argument("--data", required=True)
    ex.add_argument("--out")
    ex.set_defaults(fn=_cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"latmos {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
