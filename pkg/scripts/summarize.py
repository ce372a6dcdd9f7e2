"""Print a run directory's summary.csv as an aligned text table.

    python scripts/summarize.py runs/symbolic_base-<hash>
"""
import argparse
import csv
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run_dir", type=Path)
    args = ap.parse_args()
    with open(args.run_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("(empty summary)")
        return
    cols = list(rows[0])
    for r in rows:
        for c in ("mean", "std", "median"):
            if r.get(c):
                r[c] = f"{float(r[c]):.3f}"
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(r[c].ljust(widths[c]) for c in cols))


if __name__ == "__main__":
    main()
