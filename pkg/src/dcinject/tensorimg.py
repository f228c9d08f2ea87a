"""Dense image and spectrum grids.

Grids are stored channel-major, then row-major: shape ``(C, H, W)``.
Values are float64 (complex128 for spectra) and the backing arrays are
marked read-only, so instances can be shared between workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


class NumericalFault(FloatingPointError):
    """Raised when a NaN reaches a place that must be finite."""


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Image:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"image data must be (C, H, W) with positive dims, got {data.shape}")
        if data.shape[0] not in (1, 3):
            raise ShapeError(f"channels must be 1 or 3, got {data.shape[0]}")
        if np.isnan(data).any():
            raise NumericalFault("image contains NaN")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(data, np.float64))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class Spectrum:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"spectrum data must be (C, H, W) with positive dims, got {data.shape}")
        object.__setattr__(self, "data", _frozen(data, np.complex128))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """A stack of equally shaped images with integer class labels.

    ``images`` has shape ``(N, C, H, W)``; ``labels`` has shape ``(N,)``.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels)
        if images.ndim != 4:
            raise ShapeError(f"images must be (N, C, H, W), got {images.shape}")
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise ShapeError("images and labels must have equal length")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        if images.size and (np.isnan(images).any() or images.min() < 0.0 or images.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "images", _frozen(images, np.float64))
        object.__setattr__(self, "labels", _frozen(labels, np.int64))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def image(self, i: int) -> Image:
        return Image(self.images[i])

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.images.shape == other.images.shape
            and bool(np.array_equal(self.images, other.images))
            and bool(np.array_equal(self.labels, other.labels))
        )


def image_new(h: int, w: int, c: int, fill: float) -> Image:
    if min(h, w, c) < 1:
        raise ShapeError(f"dimensions must be positive, got {(h, w, c)}")
    if not 0.0 <= fill <= 1.0:
        raise ValueError(f"fill must lie in [0, 1], got {fill}")
    return Image(np.full((c, h, w), float(fill)))


def clip_unit(x) -> Image:
    """Clamp a real grid to [0, 1]. NaN is treated as an upstream fault."""
    arr = np.asarray(x.data if isinstance(x, Image) else x, dtype=np.float64)
    if np.isnan(arr).any():
        raise NumericalFault("NaN encountered before clipping")
    return Image(np.clip(arr, 0.0, 1.0))
