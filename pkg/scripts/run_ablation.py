"""Component grid and Dirichlet sweep with five seeds per cell.

Thin wrapper over ``dcinject ablate``; extra arguments are passed through.

    python3 scripts/run_ablation.py --out runs/ablation --set fed.rounds=50
"""
import sys

from dcinject.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("ablate.repeats") for a in argv):
        argv += ["--set", "ablate.repeats=5"]
    if "--out" not in argv:
        argv += ["--out", "runs/ablation"]
    sys.exit(main(["ablate", *argv]))
