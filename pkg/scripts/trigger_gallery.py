"""Stealth of the trigger across delta and band size on the synthetic data.

Prints a table of mean PSNR (dB) so the trade-off behind the defaults is
visible at a glance.
"""
from dataclasses import replace

import numpy as np

from dcinject.cli import synth_pair
from dcinject.config import RunConfig
from dcinject.metrics import mean_psnr
from dcinject.spectral import FrequencyBand
from dcinject.trigger import trigger_batch

DELTAS = (0.25, 0.5, 0.75, 1.0)
RHOS = (0.125, 0.25, 0.375, 0.5, 1.0)


def main():
    rc = RunConfig()
    train, _ = synth_pair(rc)
    images = train.images[:200]
    ids = np.arange(len(images))
    base = rc.trigger_config()
    print("rho \\ delta " + "".join(f"{d:>8}" for d in DELTAS))
    for rho in RHOS:
        cells = []
        for d in DELTAS:
            cfg = replace(base, delta=d, band=FrequencyBand(rho))
            trig, _ = trigger_batch(images, cfg, ids, stream=2)
            cells.append(mean_psnr(images, trig))
        print(f"{rho:<12}" + "".join(f"{v:8.2f}" for v in cells))


if __name__ == "__main__":
    main()
