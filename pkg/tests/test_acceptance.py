"""Acceptance criteria, one test each; every test reports a PASS/FAIL line.

Criteria 3-6 train the full experiment configs and take minutes each.
"""
import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from latmos import automaton as am
from latmos import doorkey as dk
from latmos.dataset import ObservationSequence, alphabet_sampler, augment_with_negatives
from latmos.harness.config import apply_overrides, load_config
from latmos.harness.doorkey_exp import run_doorkey_experiment, summary_mean
from latmos.harness.symbolic import build_task, run_cell, run_symbolic_experiment, summary_lookup
from latmos.nn.gradcheck import TOLERANCE
from latmos.nn.suite import run_suite

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BACKBONES = ("gru", "attention", "ssm")


def _preset(name, out, *overrides):
    cfg = apply_overrides(load_config(CONFIGS / f"{name}.json"), list(overrides))
    cfg.output_dir = str(out)
    cfg.workers = 1
    return cfg


def _fmt(d):
    return ", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())


def _simulate(transition, accepting, initial, word):
    # independent trace simulator over the raw table
    q = initial
    for a in word:
        q = int(transition[q][a])
    return q in accepting


def test_criterion_1_gradient_suite(report_criterion):
    t0 = time.perf_counter()
    results = run_suite(seed=0)
    secs = time.perf_counter() - t0
    covered = {r.name.split(":")[0] for r in results}
    need = {"linear", "gru", "ssm", "attention", "decoder", "conv_encoder", "loss",
            "model[gru]", "model[attention]", "model[ssm]"}
    worst = max(r.rel_error for r in results)
    ok = worst < TOLERANCE and need <= covered and secs < 60
    report_criterion(1, ok, _fmt({"checks": len(results), "worst_rel_error": float(worst), "seconds": secs}))
    assert ok


def test_criterion_2_oracle_equivalence_and_alergia(report_criterion):
    t0 = time.perf_counter()
    mismatches = 0
    for n, seed in ((4, 0), (6, 1), (8, 2)):
        dfa = am.generate_random_dfa(n, 4, seed)
        table = dfa.transition.tolist()
        for L in range(7):
            for word in itertools.product(range(4), repeat=L):
                mismatches += am.accepts(dfa, word) != _simulate(table, dfa.accepting, dfa.initial, word)
    cfg = load_config(CONFIGS / "base.json").symbolic
    cell = run_cell(build_task(cfg, 0, "base"), "alergia", None, cfg)
    secs = time.perf_counter() - t0
    ok = mismatches == 0 and cell["accuracy"] >= 0.99 and secs < 120
    report_criterion(2, ok, _fmt({"mismatches": mismatches, "alergia_base": cell["accuracy"], "seconds": secs}))
    assert ok


@pytest.mark.slow
def test_criterion_3_base_trend(report_criterion, tmp_path):
    exp = _preset("base", tmp_path, "symbolic.hidden_factors=[0.5, 12]", "symbolic.rank_factors=[1]")
    t0 = time.perf_counter()
    r = run_symbolic_experiment(exp)
    secs = time.perf_counter() - t0
    got = {"sp_learn@1": summary_lookup(r, "sp_learn", 1)}
    got.update({f"{b}@12": summary_lookup(r, f"latmos_{b}", 12) for b in BACKBONES})
    got.update({f"{b}@0.5": summary_lookup(r, f"latmos_{b}", 0.5) for b in BACKBONES})
    checks = {"sp_learn@1": got["sp_learn@1"] >= 0.90, "gru@12": got["gru@12"] >= 0.90,
              "ssm@12": got["ssm@12"] >= 0.90, "attention@12": got["attention@12"] >= 0.95}
    checks.update({f"{b}@0.5": got[f"{b}@0.5"] <= 0.6 for b in BACKBONES})
    checks["runtime"] = secs < 1800
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    report_criterion(3, ok, _fmt(got) + f", seconds={secs:.0f}" + (f"; failing: {failed}" if failed else ""))
    assert ok, failed


@pytest.mark.slow
def test_criterion_4_noisy_trend(report_criterion, tmp_path):
    exp = _preset("noisy", tmp_path)
    t0 = time.perf_counter()
    r = run_symbolic_experiment(exp)
    secs = time.perf_counter() - t0
    got, checks = {}, {}
    for var, floor in ((0.1, 0.60), (0.2, 0.55)):
        for b in BACKBONES:
            got[f"{b}@{var}"] = v = summary_lookup(r, f"latmos_{b}", 12, var)
            checks[f"{b}@{var}"] = v >= floor
        got[f"alergia@{var}"] = a = summary_lookup(r, "alergia", None, var)
        got[f"sp_learn@{var}"] = s = summary_lookup(r, "sp_learn", 1, var)
        checks[f"baselines@{var}"] = a == 0 and s == 0
    checks["runtime"] = secs < 1800
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    report_criterion(4, ok, _fmt(got) + f", seconds={secs:.0f}" + (f"; failing: {failed}" if failed else ""))
    assert ok, failed


@pytest.mark.slow
def test_criterion_5_novel_trend(report_criterion, tmp_path):
    exp = _preset("novel", tmp_path)
    t0 = time.perf_counter()
    r = run_symbolic_experiment(exp)
    secs = time.perf_counter() - t0
    att = summary_lookup(r, "latmos_attention", 12)
    sp = summary_lookup(r, "sp_learn", 1)
    al = summary_lookup(r, "alergia", None)
    got = {"attention@12": att, "sp_learn@1": sp, "alergia": al,
           "gru@12": summary_lookup(r, "latmos_gru", 12), "ssm@12": summary_lookup(r, "latmos_ssm", 12)}
    checks = {"ordering": att >= sp >= al, "attention": att >= 0.70, "sp_learn": 0.4 <= sp <= 0.8,
              "alergia": al == 0, "runtime": secs < 900}
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    report_criterion(5, ok, _fmt(got) + f", seconds={secs:.0f}" + (f"; failing: {failed}" if failed else ""))
    assert ok, failed


@pytest.mark.slow
def test_criterion_6_doorkey_planning(report_criterion, tmp_path):
    exp = _preset("doorkey", tmp_path)
    t0 = time.perf_counter()
    r = run_doorkey_experiment(exp)
    secs = time.perf_counter() - t0
    eff = {h: summary_mean(r, h) for h in ("latmos_v", "latmos_x", "o_l2", "dijkstra")}
    starts = sum(len(s) for s in r["test_starts"])
    runs = [p for p in r["plans"] if p["lam"] == exp.doorkey.lam]
    checks = {"starts>=20": starts >= 20,
              "all_succeeded": all(p["success"] for p in runs),
              "v<=x": eff["latmos_v"] <= eff["latmos_x"],
              "x<o_l2": eff["latmos_x"] < eff["o_l2"],
              "v<=dijkstra/2": eff["latmos_v"] <= 0.5 * eff["dijkstra"],
              "v<=3": eff["latmos_v"] <= 3,
              "dijkstra_optimal": r["dijkstra_optimal"],
              "runtime": secs < 1800}
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    report_criterion(6, ok, _fmt(eff) + f", starts={starts}, seconds={secs:.0f}"
                     + (f"; failing: {failed}" if failed else ""))
    assert ok, failed


def _check_dataset(ds, positives, tol=0.1):
    bad_shape = bad_prov = 0
    pos = dict(enumerate(positives))
    for s in ds.sequences:
        if s.source != "synthetic_negative":
            continue
        zeros = np.flatnonzero(s.labels == 0)
        bad_shape += not (len(zeros) and s.labels[-1] == 0 and s.labels[:zeros[0]].all()
                          and not s.labels[zeros[0]:].any() and zeros[0] == s.cut)
        src = pos[s.source_id]
        bad_prov += not (np.array_equal(s.steps[:s.cut], src.steps[:s.cut]) and len(s) == len(src))
    return bad_shape, bad_prov, ds.imbalance() <= tol


@pytest.mark.filterwarnings("ignore:negatives_per_positive clamped")
def test_criterion_7_dataset_invariants(report_criterion):
    t0 = time.perf_counter()
    total = negs = bad_shape = bad_prov = unbalanced = 0
    # symbolic: positive walks from several DFAs, every cut and a partial-cut setting
    for seed, n in itertools.product(range(3), (4, 6, 8)):
        dfa = am.generate_random_dfa(n, 4, seed)
        walks = am.sample_positive_walks(dfa, 300, n, seed)
        pos = [ObservationSequence(am.walk_observations(w.symbols, 4), np.ones(len(w)), "positive", i)
               for i, w in enumerate(walks)]
        for k in (None, 2):
            ds = augment_with_negatives(pos, alphabet_sampler(np.eye(4)), k, seed=seed)
            b1, b2, bal = _check_dataset(ds, pos)
            total += len(ds)
            negs += sum(s.source == "synthetic_negative" for s in ds.sequences)
            bad_shape, bad_prov, unbalanced = bad_shape + b1, bad_prov + b2, unbalanced + (not bal)
    # Door-Key expert demos with environment-sampled negatives
    envs = dk.generate_envs(36, seed=0)
    pos = [ObservationSequence(dk.expert_solve(e).obs_x, np.ones(len(dk.expert_solve(e).obs_x)), "positive", i)
           for i, e in enumerate(envs)]
    ds = augment_with_negatives(pos, dk.observation_sampler(envs, "x"), seed=0)
    b1, b2, bal = _check_dataset(ds, pos)
    total += len(ds)
    negs += sum(s.source == "synthetic_negative" for s in ds.sequences)
    bad_shape, bad_prov, unbalanced = bad_shape + b1, bad_prov + b2, unbalanced + (not bal)
    secs = time.perf_counter() - t0
    ok = total >= 10_000 and bad_shape == bad_prov == unbalanced == 0 and secs < 60
    report_criterion(7, ok, _fmt({"sequences": total, "negatives": negs, "bad_labels": bad_shape,
                                  "bad_provenance": bad_prov, "unbalanced_sets": unbalanced, "seconds": secs}))
    assert ok


def test_criterion_8_reproducibility(report_criterion, tmp_path):
    sym = ["symbolic.sizes=[4, 6]", "symbolic.dfa_seeds=[0, 1]", "symbolic.num_walks=200",
           "symbolic.num_random_walks=100", "symbolic.test_per_class=50", "symbolic.hidden_factors=[1]",
           "symbolic.rank_factors=[1]", "symbolic.train.epochs=3"]
    door = ["doorkey.num_envs=4", "doorkey.demos_per_env=2", "doorkey.train.epochs=3",
            "doorkey.lambda_sweep=[0.05]"]
    identical = {}
    for name, preset, over in (("symbolic", "base", sym), ("noisy", "noisy", sym + ["symbolic.noise_variances=[0.1]"]),
                               ("novel", "novel", sym), ("doorkey", "doorkey", door)):
        texts = []
        for rep in ("a", "b"):
            exp = _preset(preset, tmp_path / rep, *over)
            (run_doorkey_experiment if preset == "doorkey" else run_symbolic_experiment)(exp)
            texts.append((exp.run_dir() / "report.json").read_bytes())
        identical[name] = texts[0] == texts[1] and bool(json.loads(texts[0]))
    ok = all(identical.values())
    report_criterion(8, ok, _fmt(identical))
    assert ok
