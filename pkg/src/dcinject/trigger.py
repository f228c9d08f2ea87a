"""DCInject trigger synthesis and a BadNet-style patch baseline.

Pipeline per image: FFT -> subtract a fraction of the mean spectral
magnitude from the low-frequency band -> add modulated complex Gaussian
noise -> inverse FFT -> keep the real part -> clip to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import FrequencyBand, band_mask, fft2d, ifft2d, radial_frequency
from .tensorimg import Image, NumericalFault, Spectrum, clip_unit

TRIGGER_KINDS = ("dcinject", "badnet")


@dataclass(frozen=True)
class TriggerConfig:
    delta: float = 0.75
    # None -> 0.05 * sqrt(H * W), i.e. ~0.05 spatial std for an unmasked draw
    epsilon: float | None = None
    band: FrequencyBand = field(default_factory=lambda: FrequencyBand(0.5))
    use_mfreq: bool = True
    use_whvs: bool = True
    use_scale: bool = True
    target_label: int = 0
    poison_ratio: float = 0.5
    seed: int = 0
    kind: str = "dcinject"
    patch_side: int = 3
    patch_value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise ValueError(f"poison_ratio must lie in [0, 1], got {self.poison_ratio}")
        if self.target_label < 0:
            raise ValueError("target_label must be a class index")
        if self.kind not in TRIGGER_KINDS:
            raise ValueError(f"kind must be one of {TRIGGER_KINDS}, got {self.kind!r}")
        if self.patch_side < 1:
            raise ValueError("patch_side must be positive")
        if not 0.0 <= self.patch_value <= 1.0:
            raise ValueError("patch_value must lie in [0, 1]")

    def resolved_epsilon(self, h: int, w: int) -> float:
        if self.epsilon is None:
            return 0.05 * float(np.sqrt(h * w))
        return float(self.epsilon)


@dataclass(frozen=True)
class NoiseComponents:
    m_freq: np.ndarray
    w_hvs: np.ndarray
    s: float

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s > 0):
            raise ValueError(f"texture scale must be finite and positive, got {self.s}")


def trigger_rng(seed: int, counter: int, stream: int = 0) -> np.random.Generator:
    """Independent generator per (seed, stream, image counter)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream), int(counter)])


def spectral_mean_mu(spec: Spectrum | np.ndarray) -> np.ndarray:
    """Mean coefficient magnitude, one value per channel (shape ``(..., C)``)."""
    data = spec.data if isinstance(spec, Spectrum) else np.asarray(spec)
    return np.abs(data).mean(axis=(-2, -1))


def remove_dc(spec: Spectrum | np.ndarray, delta: float, band: FrequencyBand):
    """Subtract ``delta * mu`` from the real part of every in-band coefficient."""
    data = spec.data if isinstance(spec, Spectrum) else np.asarray(spec)
    out = np.array(data, dtype=np.complex128, copy=True)
    if delta != 0.0:
        mask = band_mask(out.shape[-2], out.shape[-1], band)
        mu = spectral_mean_mu(out)
        out.real[..., mask] -= delta * mu[..., None]
    return Spectrum(out) if isinstance(spec, Spectrum) else out


def hvs_weights(h: int, w: int) -> np.ndarray:
    r0 = min(h, w) / 8.0
    return 1.0 / (1.0 + radial_frequency(h, w) / r0)


def _laplacian_energy(images: np.ndarray) -> np.ndarray:
    """RMS of the 5-point Laplacian over interior pixels, per image."""
    x = np.asarray(images, dtype=np.float64)
    if x.shape[-2] < 3 or x.shape[-1] < 3:
        return np.zeros(x.shape[:-3])
    lap = (
        x[..., :-2, 1:-1] + x[..., 2:, 1:-1] + x[..., 1:-1, :-2] + x[..., 1:-1, 2:]
        - 4.0 * x[..., 1:-1, 1:-1]
    )
    return np.sqrt(np.mean(lap**2, axis=(-3, -2, -1)))


def _scale_from_energy(s):
    return s / (s + 0.1) + 0.5


def texture_scale(img: Image | np.ndarray):
    """Texture-aware scalar in [0.5, 1.5): 0.5 for flat images."""
    data = img.data if isinstance(img, Image) else img
    out = _scale_from_energy(_laplacian_energy(data))
    return float(out) if np.ndim(out) == 0 else out


def noise_components(img: Image, cfg: TriggerConfig) -> NoiseComponents:
    h, w = img.height, img.width
    return NoiseComponents(
        m_freq=band_mask(h, w, cfg.band).astype(np.float64),
        w_hvs=hvs_weights(h, w),
        s=texture_scale(img),
    )


def noise_gain(comps: NoiseComponents, cfg: TriggerConfig) -> np.ndarray:
    """Elementwise product of the active modulating components."""
    gain = np.ones_like(comps.w_hvs)
    if cfg.use_mfreq:
        gain = gain * comps.m_freq
    if cfg.use_whvs:
        gain = gain * comps.w_hvs
    if cfg.use_scale:
        gain = gain * comps.s
    return gain


def adaptive_noise(
    h: int, w: int, cfg: TriggerConfig, comps: NoiseComponents, rng: np.random.Generator,
    channels: int = 1,
) -> Spectrum:
    eps = cfg.resolved_epsilon(h, w)
    n_re = rng.normal(0.0, eps, size=(channels, h, w))
    n_im = rng.normal(0.0, eps, size=(channels, h, w))
    return Spectrum((n_re + 1j * n_im) * noise_gain(comps, cfg))


def _dcinject(img: Image, cfg: TriggerConfig, rng: np.random.Generator) -> tuple[Image, float]:
    spec = remove_dc(fft2d(img), cfg.delta, cfg.band)
    comps = noise_components(img, cfg)
    noise = adaptive_noise(img.height, img.width, cfg, comps, rng, channels=img.channels)
    real, resid = ifft2d(spec.data + noise.data)
    return clip_unit(real), resid


def apply_trigger(img: Image, cfg: TriggerConfig, rng: np.random.Generator) -> Image:
    if cfg.kind == "badnet":
        return badnet_patch(img, cfg.patch_side, cfg.patch_value)
    return _dcinject(img, cfg, rng)[0]


def apply_trigger_with_residual(img: Image, cfg: TriggerConfig, rng) -> tuple[Image, float]:
    if cfg.kind == "badnet":
        return badnet_patch(img, cfg.patch_side, cfg.patch_value), 0.0
    return _dcinject(img, cfg, rng)


def trigger_batch(
    images: np.ndarray, cfg: TriggerConfig, counters, stream: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Trigger a stack ``(N, C, H, W)``; image i draws noise from ``counters[i]``.

    Returns the triggered stack and the per-image imaginary residual.
    Equivalent to calling ``apply_trigger`` per image with ``trigger_rng``.
    """
    x = np.asarray(images, dtype=np.float64)
    n, c, h, w = x.shape
    counters = np.asarray(counters)
    if counters.shape != (n,):
        raise ValueError("need one counter per image")
    if cfg.kind == "badnet":
        return _patch_array(x, cfg.patch_side, cfg.patch_value), np.zeros(n)

    spec = remove_dc(fft2d(x), cfg.delta, cfg.band)
    mask = band_mask(h, w, cfg.band).astype(np.float64)
    whvs = hvs_weights(h, w)
    scales = _scale_from_energy(_laplacian_energy(x))
    eps = cfg.resolved_epsilon(h, w)
    for i in range(n):
        comps = NoiseComponents(mask, whvs, float(scales[i]))
        rng = trigger_rng(cfg.seed, int(counters[i]), stream)
        n_re = rng.normal(0.0, eps, size=(c, h, w))
        n_im = rng.normal(0.0, eps, size=(c, h, w))
        spec[i] += (n_re + 1j * n_im) * noise_gain(comps, cfg)
    out = np.fft.ifft2(spec, axes=(-2, -1))
    resid = np.abs(out.imag).max(axis=(1, 2, 3))
    real = out.real
    if np.isnan(real).any():
        raise NumericalFault("NaN encountered before clipping")
    return np.clip(real, 0.0, 1.0), resid


def _patch_array(x: np.ndarray, side: int, value: float) -> np.ndarray:
    h, w = x.shape[-2:]
    if side > min(h, w):
        raise ValueError(f"patch_side {side} exceeds image size {h}x{w}")
    out = np.array(x, dtype=np.float64, copy=True)
    out[..., h - side:, w - side:] = value
    return out


def badnet_patch(img: Image, patch_side: int, value: float) -> Image:
    """Overwrite the bottom-right ``patch_side`` square of every channel."""
    return Image(_patch_array(img.data, patch_side, value))
