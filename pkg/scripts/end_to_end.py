"""Synthesize a dataset and run the full GAM vs RF comparison through the CLI."""
import argparse
import sys
import tempfile
from pathlib import Path

from denguecast.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trees", type=int, default=500)
    ap.add_argument("--work-dir", type=Path, default=None)
    args = ap.parse_args()

    work = args.work_dir or Path(tempfile.mkdtemp(prefix="denguecast-"))
    data, out = work / "data", work / "out"
    steps = [
        ["synth", "--seed", str(args.seed), "--out-dir", str(data)],
        ["validate", "--data-dir", str(data)],
        ["fit-predict", "--data-dir", str(data), "--model", "both", "--trees", str(args.trees),
         "--seed", str(args.seed), "--out-dir", str(out)],
    ]
    for argv in steps:
        code = cli(argv)
        if code:
            sys.exit(code)
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
