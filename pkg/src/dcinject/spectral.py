"""Per-channel 2D DFT and low-frequency band geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensorimg import Image, Spectrum


@dataclass(frozen=True)
class FrequencyBand:
    """Square band of half-side ``floor(rho * min(H, W) / 2)`` around DC.

    Distances are measured in the centered (shifted) spectrum with the
    Chebyshev metric, so the band always contains the DC coefficient.
    """

    rho: float = 0.125

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")

    def radius(self, h: int, w: int) -> int:
        # small epsilon so that e.g. 0.25 * 8 / 2 == 1 is not floored to 0
        return int(math.floor(self.rho * min(h, w) / 2 + 1e-12))


class InverseResult(NamedTuple):
    real: np.ndarray
    imag_residual: float


def centered_frequencies(n: int) -> np.ndarray:
    """Signed integer frequency of each unshifted index: 0, 1, ..., -1."""
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)


def radial_frequency(h: int, w: int) -> np.ndarray:
    u = centered_frequencies(h)[:, None]
    v = centered_frequencies(w)[None, :]
    return np.sqrt(u.astype(np.float64) ** 2 + v.astype(np.float64) ** 2)


def fft2d(img: Image | np.ndarray) -> Spectrum | np.ndarray:
    """Unnormalized forward DFT over the two trailing axes.

    Accepts an ``Image`` (returns a ``Spectrum``) or a raw array whose last
    two axes are (H, W) (returns a complex array).
    """
    if isinstance(img, Image):
        return Spectrum(np.fft.fft2(img.data, axes=(-2, -1)))
    return np.fft.fft2(np.asarray(img, dtype=np.float64), axes=(-2, -1))


def ifft2d(spec: Spectrum | np.ndarray) -> InverseResult:
    """Inverse DFT with 1/(H*W) normalization, keeping only the real part.

    ``imag_residual`` is the largest absolute imaginary component that was
    discarded; it is zero (up to rounding) for conjugate-symmetric input.
    """
    data = spec.data if isinstance(spec, Spectrum) else np.asarray(spec, dtype=np.complex128)
    out = np.fft.ifft2(data, axes=(-2, -1))
    resid = float(np.abs(out.imag).max()) if out.size else 0.0
    return InverseResult(np.ascontiguousarray(out.real), resid)


def band_mask(h: int, w: int, band: FrequencyBand) -> np.ndarray:
    """Boolean (H, W) indicator of the band in unshifted coordinates."""
    r = band.radius(h, w)
    u = np.abs(centered_frequencies(h))[:, None]
    v = np.abs(centered_frequencies(w))[None, :]
    return np.maximum(u, v) <= r


def band_indices(h: int, w: int, band: FrequencyBand) -> list[tuple[int, int]]:
    if h < 1 or w < 1:
        raise ValueError("h and w must be positive")
    mask = band_mask(h, w, band)
    return [(int(u), int(v)) for u, v in zip(*np.nonzero(mask))]
