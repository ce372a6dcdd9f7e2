"""Run the preset experiments in configs/ and print a summary table for each.

    python scripts/run_experiments.py                # all presets
    python scripts/run_experiments.py base doorkey   # a subset
    python scripts/run_experiments.py --output-dir runs --workers 3 novel
"""
import argparse
from pathlib import Path

from latmos.harness.cli import main as cli_main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PRESETS = ("base", "noisy", "novel", "doorkey")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("presets", nargs="*", help=f"any of {', '.join(PRESETS)} (default: all)")
    ap.add_argument("--output-dir", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    unknown = set(args.presets) - set(PRESETS)
    if unknown:
        ap.error(f"unknown presets: {sorted(unknown)}")
    for name in args.presets or PRESETS:
        print(f"== {name}")
        code = cli_main(["experiment", "--config", str(CONFIGS / f"{name}.json"),
                         "--output-dir", args.output_dir, "--workers", str(args.workers)])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
