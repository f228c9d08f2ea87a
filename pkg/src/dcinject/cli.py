"""Command-line entry point: ``dcinject {synth,poison,train,ablate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical fault.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dataio import FormatError, load_dataset, save_checkpoint, save_dataset, synth_dataset
from .flsim import FederationResult, run_federation
from .metrics import mean_psnr, triggered_test_set
from .partition import PartitionError, dirichlet_partition
from .tensorimg import LabeledDataset, NumericalFault
from .trigger import trigger_batch

log = logging.getLogger("dcinject")

POISON_STREAM = 2
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# rows ordered by how many components are on: none, M, W, S, MW, MS, WS, MWS
COMPONENT_CELLS = sorted(itertools.product((False, True), repeat=3), key=lambda t: (sum(t), [not x for x in t]))


def synth_pair(rc: RunConfig) -> tuple[LabeledDataset, LabeledDataset]:
    d = rc.data
    common = dict(n_classes=d.n_classes, h=d.height, w=d.width, c=d.channels,
                  pattern_seed=rc.seed, noise_std=d.noise_std, contrast=d.contrast)
    train = synth_dataset(d.n_per_class, seed=rc.seed, **common)
    test = synth_dataset(d.n_test_per_class, seed=rc.seed + 1, **common)
    return train, test


def load_data(rc: RunConfig) -> tuple[LabeledDataset, LabeledDataset]:
    if not rc.data.path:
        return synth_pair(rc)
    train = load_dataset(rc.data.path)
    if rc.data.test_path:
        test = load_dataset(rc.data.test_path)
    else:
        # seeded 80/20 hold-out
        order = np.random.default_rng([rc.seed, 0x7E57]).permutation(len(train))
        cut = max(1, len(train) // 5)
        test, train = train.subset(np.sort(order[:cut])), train.subset(np.sort(order[cut:]))
    if test.image_shape != train.image_shape or test.num_classes != train.num_classes:
        raise ConfigError("train and test datasets disagree on shape or class count")
    if rc.trigger.target_label >= train.num_classes:
        raise ConfigError("trigger.target_label must be below the dataset's class count")
    return train, test


def run_experiment(rc: RunConfig, on_round=None) -> tuple[FederationResult, dict]:
    train, test = load_data(rc)
    fed = rc.federation_config()
    plan = dirichlet_partition(train.labels, fed.n_clients, rc.partition.alpha, rc.seed)
    timg, _ = triggered_test_set(test, fed.trigger)
    result = run_federation(fed, train, plan, test, timg, on_round=on_round, max_workers=rc.fed.workers)
    return result, plan.to_json()


def _write_config(rc: RunConfig, out: Path) -> None:
    text = rc.to_text()
    sys.stdout.write("# effective configuration\n" + text)
    sys.stdout.flush()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(text)


def cmd_synth(rc: RunConfig) -> int:
    out = Path(rc.out)
    _write_config(rc, out)
    train, test = synth_pair(rc)
    for name, ds in (("train.bin", train), ("test.bin", test)):
        save_dataset(ds, out / name)
        c, h, w = ds.image_shape
        print(f"{out / name}: magic=DCINJDS1 n_samples={len(ds)} height={h} width={w} "
              f"channels={c} n_classes={ds.num_classes}")
    return 0


def cmd_poison(rc: RunConfig, src: str, dst: str | None) -> int:
    out = Path(rc.out)
    _write_config(rc, out)
    ds = load_dataset(src)
    cfg = rc.trigger_config()
    if cfg.target_label >= ds.num_classes:
        raise ConfigError("trigger.target_label must be below the dataset's class count")
    n_poison = int(round(cfg.poison_ratio * len(ds)))
    order = np.random.default_rng([rc.seed, 0x9015]).permutation(len(ds))
    chosen = np.sort(order[:n_poison])
    images = np.array(ds.images)
    labels = np.array(ds.labels)
    psnr_db = float("nan")
    if n_poison:
        trig, _ = trigger_batch(images[chosen], cfg, chosen, stream=POISON_STREAM)
        trig = trig.astype(np.float32).astype(np.float64)
        psnr_db = mean_psnr(images[chosen], trig)
        images[chosen] = trig
        labels[chosen] = cfg.target_label
    target = Path(dst) if dst else out / "poisoned.bin"
    save_dataset(LabeledDataset(images, labels, ds.num_classes), target)
    report = {"input": str(src), "output": str(target), "n_samples": len(ds),
              "n_poisoned": int(n_poison), "target_label": cfg.target_label,
              "mean_psnr_db": None if np.isnan(psnr_db) else psnr_db}
    (out / "poison_report.json").write_text(json.dumps(report, indent=2) + "\n")
    shown = "n/a" if np.isnan(psnr_db) else f"{psnr_db:.2f} dB"
    print(f"poisoned {n_poison}/{len(ds)} samples -> {target}; mean PSNR {shown}")
    return 0


def _train_into(rc: RunConfig, out: Path, echo: bool = True) -> FederationResult:
    out.mkdir(parents=True, exist_ok=True)
    wall = rc.report.wall_time
    with open(out / "results.jsonl", "w") as res_f, open(out / "timing.jsonl", "w") as time_f:
        def on_round(rep):
            res_f.write(json.dumps(rep.to_json(include_time=wall)) + "\n")
            res_f.flush()
            time_f.write(json.dumps({"round": rep.round, "secs": rep.secs}) + "\n")
            if echo:
                print(f"round {rep.round:4d}  acc={rep.clean_acc:.4f}  asr={rep.asr:.4f}", flush=True)

        result, plan_json = run_experiment(rc, on_round)
    (out / "partition.json").write_text(json.dumps(plan_json) + "\n")
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    save_checkpoint(result.global_params, ckpt / "global.ckpt")
    for cl, params in zip(result.clients, result.client_params):
        save_checkpoint(params, ckpt / f"client_{cl.id:03d}.ckpt")
    return result


def cmd_train(rc: RunConfig) -> int:
    out = Path(rc.out)
    _write_config(rc, out)
    result = _train_into(rc, out)
    if result.reports:
        last = result.reports[-1]
        print(f"final round {last.round}: clean_acc={last.clean_acc:.4f} asr={last.asr:.4f}")
    return 0


def ablation_cells(rc: RunConfig) -> list[tuple[str, str, dict[str, str]]]:
    """(grid, cell name, config overrides) for every requested cell."""
    cells = []
    grids = [g for g in rc.ablate.grid.split(",") if g]
    if "components" in grids:
        for m, w, s in COMPONENT_CELLS:
            name = "comp_" + ("".join(tag for tag, on in zip("MWS", (m, w, s)) if on) or "none")
            cells.append(("components", name, {
                "trigger.use_mfreq": str(m).lower(),
                "trigger.use_whvs": str(w).lower(),
                "trigger.use_scale": str(s).lower(),
            }))
    if "alpha" in grids:
        for a in rc.sweep_alphas():
            cells.append(("alpha", f"alpha_{a:g}", {"partition.alpha": repr(a)}))
    return cells


SUMMARY_FIELDS = ["grid", "cell", "use_mfreq", "use_whvs", "use_scale", "alpha", "config_hash",
                  "n_seeds", "clean_acc", "clean_acc_std", "asr", "asr_std"]


def cmd_ablate(rc: RunConfig) -> int:
    out = Path(rc.out)
    _write_config(rc, out)
    rows = []
    for grid, name, overrides in ablation_cells(rc):
        cell_rc = rc.with_overrides(overrides).validate()
        accs, asrs = [], []
        for rep in range(rc.ablate.repeats):
            seed_rc = cell_rc.with_overrides({"seed": str(rc.seed + rep)}).validate()
            cell_dir = out / "cells" / name / f"seed_{seed_rc.seed}"
            (cell_dir).mkdir(parents=True, exist_ok=True)
            (cell_dir / "config.cfg").write_text(seed_rc.to_text())
            result = _train_into(seed_rc, cell_dir, echo=False)
            last = result.reports[-1] if result.reports else None
            accs.append(last.clean_acc if last else float("nan"))
            asrs.append(last.asr if last else float("nan"))
        row = {
            "grid": grid, "cell": name,
            "use_mfreq": cell_rc.trigger.use_mfreq, "use_whvs": cell_rc.trigger.use_whvs,
            "use_scale": cell_rc.trigger.use_scale, "alpha": cell_rc.partition.alpha,
            "config_hash": cell_rc.config_hash(), "n_seeds": len(accs),
            "clean_acc": float(np.mean(accs)), "clean_acc_std": float(np.std(accs)),
            "asr": float(np.mean(asrs)), "asr_std": float(np.std(asrs)),
        }
        rows.append(row)
        print(f"{grid:10s} {name:12s} acc={row['clean_acc']:.4f}±{row['clean_acc_std']:.4f} "
              f"asr={row['asr']:.4f}±{row['asr_std']:.4f}", flush=True)
    with open(out / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    variance_check(rows)
    return 0


def variance_check(rows) -> bool | None:
    """Soft check: all-components ASR spread should not exceed the no-component one."""
    by_cell = {r["cell"]: r for r in rows}
    if "comp_MWS" not in by_cell or "comp_none" not in by_cell:
        return None
    on, off = by_cell["comp_MWS"]["asr_std"], by_cell["comp_none"]["asr_std"]
    ok = on <= off
    msg = f"variance check: asr_std all-on={on:.4f} vs none={off:.4f} -> {'ok' if ok else 'VIOLATED'}"
    (log.info if ok else log.warning)(msg)
    print(msg)
    return ok


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dcinject", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write synthetic train/test datasets")
    p = sub.add_parser("poison", parents=[common], help="trigger a fraction of a dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    sub.add_parser("train", parents=[common], help="run one federation")
    sub.add_parser("ablate", parents=[common], help="component grid and Dirichlet sweep")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config, args.set, seed=args.seed, out=args.out)
        if args.command == "synth":
            return cmd_synth(rc)
        if args.command == "poison":
            return cmd_poison(rc, args.input, args.output)
        if args.command == "train":
            return cmd_train(rc)
        return cmd_ablate(rc)
    except (ConfigError, PartitionError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
