"""Writing run artifacts: JSON report, CSV tables, timing and the config."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .config import ExperimentConfig, save_config


def write_csv(path, rows, columns=None) -> None:
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_report(exp: ExperimentConfig, report: dict, timing: dict, cells=None) -> Path:
    """Deterministic content goes to report.json/cells.csv/summary.csv;
    wall-clock measurements are kept apart in timing.json."""
    out = exp.run_dir()
    out.mkdir(parents=True, exist_ok=True)
    save_config(exp, out / "config.json")
    dump_json(out / "report.json", report)
    dump_json(out / "timing.json", timing)
    if "cells" in report:
        write_csv(out / "cells.csv", report["cells"])
    if "summary" in report:
        write_csv(out / "summary.csv", report["summary"])
    return out


def write_doorkey_report(exp: ExperimentConfig, report: dict, timing: dict, records, pca_rows) -> Path:
    """Report plus plan traces (JSON lines), efficiency table and PCA points."""
    out = write_report(exp, report, timing)
    with open(out / "plans.jsonl", "w") as fh:
        for r in report["plans"]:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    write_csv(out / "efficiency.csv",
              [r for r in report["plans"] if r.get("success")],
              ["env", "heuristic", "lam", "explored", "plan_length", "efficiency", "optimal_length"])
    if pca_rows:
        write_csv(out / "latent_pca.csv", pca_rows, ["env", "step", "pc1", "pc2"])
    return out
