"""Synthetic data and the on-disk binary formats.

Dataset file (``DCINJDS1``), all little-endian::

    offset 0   8 bytes   magic b"DCINJDS1"
    offset 8   u32 x 5   n_samples, height, width, channels, n_classes
    offset 28  u32 x N   labels
    then       f32 x N*C*H*W   pixels, sample-major then (C, H, W), in [0, 1]

Checkpoint file (``DCINJCK1``)::

    8 bytes magic b"DCINJCK1", u32 tensor count, then per tensor:
    u32 name length, utf-8 name, u32 ndim, u32 dims[ndim], f64 data
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import PARAM_KEYS, ModelParams
from .tensorimg import LabeledDataset

DATASET_MAGIC = b"DCINJDS1"
CHECKPOINT_MAGIC = b"DCINJCK1"
HEADER = struct.Struct("<8s5I")


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def synth_dataset(
    n_per_class: int,
    n_classes: int,
    h: int,
    w: int,
    c: int,
    seed: int,
    pattern_seed: int | None = None,
    noise_std: float = 0.1,
    contrast: float = 1.0,
) -> LabeledDataset:
    """Smooth per-class base patterns plus pixel noise.

    The base patterns depend only on ``pattern_seed`` (default ``seed``) so a
    train and a test split can share classes but not noise. Pixel values are
    rounded to float32 so that saving to disk is lossless.
    """
    if min(n_per_class, n_classes, h, w, c) < 1:
        raise ValueError("all dataset dimensions must be positive")
    prng = np.random.default_rng(seed if pattern_seed is None else pattern_seed)
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    bases = np.empty((n_classes, c, h, w))
    for k in range(n_classes):
        for ch in range(c):
            pattern = np.zeros((h, w))
            for _ in range(3):
                fy, fx = prng.integers(0, 3, size=2)
                phase = prng.uniform(0, 2 * np.pi)
                amp = contrast * prng.uniform(0.1, 0.25)
                pattern += amp * np.cos(2 * np.pi * (fy * yy + fx * xx) + phase)
            bases[k, ch] = 0.5 + pattern

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    rng.shuffle(labels)
    images = bases[labels] + rng.normal(0.0, noise_std, size=(labels.size, c, h, w))
    images = np.clip(images, 0.0, 1.0).astype(np.float32).astype(np.float64)
    return LabeledDataset(images, labels, n_classes)


def dataset_to_bytes(ds: LabeledDataset) -> bytes:
    n = len(ds)
    c, h, w = ds.image_shape
    head = HEADER.pack(DATASET_MAGIC, n, h, w, c, ds.num_classes)
    labels = ds.labels.astype("<u4").tobytes()
    pixels = ds.images.astype("<f4").tobytes()
    return head + labels + pixels


def dataset_from_bytes(buf: bytes) -> LabeledDataset:
    size = len(buf)
    if size < HEADER.size:
        raise FormatError(f"file too short for header: {size} < {HEADER.size} bytes", size)
    magic, n, h, w, c, k = HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    for name, value, off in (("height", h, 12), ("width", w, 16), ("n_classes", k, 24)):
        if value < 1:
            raise FormatError(f"{name} must be positive", off)
    if c not in (1, 3):
        raise FormatError(f"channels must be 1 or 3, got {c}", 20)
    per_image = c * h * w
    expected = HEADER.size + 4 * n + 4 * n * per_image
    if size != expected:
        raise FormatError(f"size mismatch: header declares {expected} bytes, file has {size}", min(size, expected))

    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=HEADER.size)
    bad = np.flatnonzero(labels >= k)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"label {int(labels[i])} of sample {i} not below n_classes={k}", HEADER.size + 4 * i)

    pix_off = HEADER.size + 4 * n
    pixels = np.frombuffer(buf, dtype="<f4", count=n * per_image, offset=pix_off)
    bad = np.flatnonzero(~((pixels >= 0.0) & (pixels <= 1.0)))
    if bad.size:
        j = int(bad[0])
        raise FormatError(f"pixel value {float(pixels[j])} outside [0, 1]", pix_off + 4 * j)
    images = pixels.astype(np.float64).reshape(n, c, h, w)
    return LabeledDataset(images, labels.astype(np.int64), int(k))


def save_dataset(ds: LabeledDataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> LabeledDataset:
    return dataset_from_bytes(Path(path).read_bytes())


def checkpoint_to_bytes(params: ModelParams) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(PARAM_KEYS))]
    for name in PARAM_KEYS:
        arr = getattr(params, name)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<{1 + arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf: bytes) -> ModelParams:
    def need(off: int, nbytes: int):
        if off + nbytes > len(buf):
            raise FormatError("checkpoint truncated", len(buf))

    need(0, 12)
    if buf[:8] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    (count,) = struct.unpack_from("<I", buf, 8)
    off = 12
    tensors = {}
    for _ in range(count):
        need(off, 4)
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        need(off, name_len)
        try:
            name = buf[off:off + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not utf-8", off) from None
        if name not in PARAM_KEYS or name in tensors:
            raise FormatError(f"unexpected tensor {name!r}", off)
        off += name_len
        need(off, 4)
        (ndim,) = struct.unpack_from("<I", buf, off)
        if ndim > 2:
            raise FormatError(f"tensor {name} has ndim {ndim}", off)
        off += 4
        need(off, 4 * ndim)
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        need(off, nbytes)
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape)
        off += nbytes
    if off != len(buf):
        raise FormatError("trailing bytes after last tensor", off)
    if set(tensors) != set(PARAM_KEYS):
        raise FormatError(f"missing tensors {sorted(set(PARAM_KEYS) - set(tensors))}", off)
    try:
        return ModelParams(**{k: tensors[k].astype(np.float64) for k in PARAM_KEYS})
    except ValueError as exc:
        raise FormatError(f"inconsistent tensor shapes: {exc}", off) from None


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(params))


def load_checkpoint(path) -> ModelParams:
    return checkpoint_from_bytes(Path(path).read_bytes())
