"""Clean accuracy, attack success rate and PSNR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ModelParams, predict
from .tensorimg import Image, LabeledDataset, ShapeError
from .trigger import TriggerConfig, trigger_batch

# stream id used for evaluation-time trigger noise
EVAL_STREAM = 1


@dataclass(frozen=True)
class EvalResult:
    clean_acc: float
    asr: float
    n_clean: int
    n_triggered: int
    psnr_db: float


def accuracy(model: ModelParams, dataset: LabeledDataset) -> float:
    if len(dataset) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, dataset.images) == dataset.labels))


def eligible_indices(labels, target_label: int) -> np.ndarray:
    return np.flatnonzero(np.asarray(labels) != target_label)


def triggered_test_set(clean_test: LabeledDataset, cfg: TriggerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triggered copies of every test image whose label differs from the target.

    Returns ``(images, source_indices)``. Image ``i`` of the test set always
    gets the same noise draw.
    """
    idx = eligible_indices(clean_test.labels, cfg.target_label)
    if idx.size == 0:
        raise ValueError("no test sample has a label different from the target")
    images, _ = trigger_batch(clean_test.images[idx], cfg, idx, stream=EVAL_STREAM)
    return images, idx


def asr_on(model: ModelParams, triggered_images: np.ndarray, target_label: int) -> float:
    if len(triggered_images) == 0:
        raise ValueError("no triggered samples")
    return float(np.mean(predict(model, triggered_images) == target_label))


def asr(model: ModelParams, clean_test: LabeledDataset, trigger_cfg: TriggerConfig) -> float:
    images, _ = triggered_test_set(clean_test, trigger_cfg)
    return asr_on(model, images, trigger_cfg.target_label)


def psnr(a, b) -> float:
    """PSNR in dB for unit-range signals; ``inf`` for identical inputs."""
    x = np.asarray(a.data if isinstance(a, Image) else a, dtype=np.float64)
    y = np.asarray(b.data if isinstance(b, Image) else b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def mean_psnr(originals: np.ndarray, triggered: np.ndarray) -> float:
    """Mean of per-image PSNR; identical pairs are skipped."""
    vals = [psnr(a, b) for a, b in zip(originals, triggered)]
    finite = [v for v in vals if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("inf")


def evaluate(model: ModelParams, clean_test: LabeledDataset, cfg: TriggerConfig) -> EvalResult:
    images, idx = triggered_test_set(clean_test, cfg)
    return EvalResult(
        clean_acc=accuracy(model, clean_test),
        asr=asr_on(model, images, cfg.target_label),
        n_clean=len(clean_test),
        n_triggered=len(idx),
        psnr_db=mean_psnr(clean_test.images[idx], images),
    )
