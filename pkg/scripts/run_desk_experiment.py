"""Attack vs. clean-control runs at the desk-scale defaults over several seeds.

    python3 scripts/run_desk_experiment.py --seeds 0 1 2 --set fed.rounds=50

Prints final-round clean accuracy and ASR (mean over clients) for both arms,
plus the global model's ASR on the triggered test set, and writes a CSV.
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from dcinject.cli import load_data, run_experiment
from dcinject.config import load_config
from dcinject.metrics import asr_on, mean_psnr, triggered_test_set


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--csv", default="runs/desk_experiment.csv")
    args = ap.parse_args(argv)

    rows = []
    for seed in args.seeds:
        rc = load_config(args.config, args.set, seed=seed)
        control_rc = rc.with_overrides({"fed.malicious_fraction": "0"}).validate()
        _, test = load_data(rc)
        timg, idx = triggered_test_set(test, rc.trigger_config())
        attacked, _ = run_experiment(rc)
        control, _ = run_experiment(control_rc)
        a, c = attacked.reports[-1], control.reports[-1]
        row = {
            "seed": seed, "psnr_db": mean_psnr(test.images[idx], timg),
            "attack_acc": a.clean_acc, "attack_asr": a.asr,
            "global_asr": asr_on(attacked.global_params, timg, rc.trigger.target_label),
            "control_acc": c.clean_acc, "control_asr": c.asr,
        }
        rows.append(row)
        print("  ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()),
              flush=True)

    keys = [k for k in rows[0] if k != "seed"]
    print("mean  " + "  ".join(f"{k}={np.mean([r[k] for r in rows]):.3f}" for k in keys))
    out = Path(args.csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
