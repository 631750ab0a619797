"""Spectrogram-level data augmentations as deterministic, seedable array
transforms: mixup, frequency-bin statistics mixing, random piecewise-linear
gain curves over frequency, and center-anchored frequency warping.

All transforms preserve the (bins, frames) shape and are pure functions of
their inputs and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ValidationError
from .timeline import _freeze

_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Log-mel magnitudes, shape (bins, frames)."""

    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.ndim != 2:
            raise ContractError(f"spectrogram must be 2-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise NumericError("spectrogram contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AugmentConfig:
    """Parameters for the four transforms plus per-transform enable flags."""

    mixup_alpha: float = 0.2
    fms_alpha: float = 0.3
    fms_prob: float = 0.4
    filter_bands: tuple[int, int] = (2, 5)
    filter_db: tuple[float, float] = (-6.0, 6.0)
    warp_range: tuple[float, float] = (0.9, 1.1)
    enable_mixup: bool = True
    enable_fms: bool = True
    enable_filter: bool = True
    enable_warp: bool = True
    rng_seed: int | None = None

    def __post_init__(self):
        if not self.mixup_alpha > 0 or not self.fms_alpha > 0:
            raise ValidationError("Beta parameters must be positive")
        if not 0.0 <= self.fms_prob <= 1.0:
            raise ValidationError(f"fms_prob must be in [0, 1]: {self.fms_prob}")
        lo, hi = self.filter_bands
        if not (1 <= lo <= hi):
            raise ValidationError(f"invalid filter band range: {self.filter_bands}")
        if self.filter_db[0] > self.filter_db[1]:
            raise ValidationError(f"invalid filter gain range: {self.filter_db}")
        if not (0.0 < self.warp_range[0] <= self.warp_range[1]):
            raise ValidationError(f"invalid warp range: {self.warp_range}")


def _rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def mixup(a: Spectrogram, b: Spectrogram, lam: float) -> Spectrogram:
    """Elementwise convex combination lam*a + (1-lam)*b."""
    if a.values.shape != b.values.shape:
        raise ContractError(
            f"shape mismatch: {a.values.shape} vs {b.values.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lam must be in [0, 1]: {lam}")
    return Spectrogram(lam * a.values + (1.0 - lam) * b.values)


def freq_mixstyle(a: Spectrogram, b: Spectrogram, lam: float,
                  eps: float = 1e-5) -> Spectrogram:
    """Renormalize each frequency bin of ``a`` with mixed per-bin time
    statistics: sigma_mix * (a - mu_a)/(sigma_a + eps) + mu_mix, where the
    mixed mean/std interpolate between the two inputs' statistics."""
    if a.values.shape != b.values.shape:
        raise ContractError(
            f"shape mismatch: {a.values.shape} vs {b.values.shape}"
        )
    va, vb = a.values, b.values
    mu_a = va.mean(axis=1, keepdims=True)
    mu_b = vb.mean(axis=1, keepdims=True)
    sd_a = va.std(axis=1, keepdims=True)
    sd_b = vb.std(axis=1, keepdims=True)
    mu_mix = lam * mu_a + (1.0 - lam) * mu_b
    sd_mix = lam * sd_a + (1.0 - lam) * sd_b
    return Spectrogram(sd_mix * (va - mu_a) / (sd_a + eps) + mu_mix)


def filter_augment(a: Spectrogram, cfg: AugmentConfig, rng_seed) -> Spectrogram:
    """Add a random piecewise-linear gain curve over frequency (dB-domain
    addition on log-mel values), constant over time.

    Draws a band-boundary count from ``filter_bands``, that many distinct bin
    indices, and one gain per boundary from ``filter_db``; gains interpolate
    linearly between boundaries and hold constant beyond the outermost ones.
    """
    if a.bins < 2:
        raise ContractError("filter_augment needs at least 2 frequency bins")
    rng = _rng(rng_seed)
    lo, hi = cfg.filter_bands
    k = int(rng.integers(lo, hi + 1))
    k = min(k, a.bins)
    boundaries = np.sort(rng.choice(a.bins, size=k, replace=False))
    gains = rng.uniform(cfg.filter_db[0], cfg.filter_db[1], size=k)
    curve = np.interp(np.arange(a.bins), boundaries, gains)
    return Spectrogram(a.values + curve[:, None])


def freq_warp(a: Spectrogram, scale: float | None = None, rng_seed=None,
              warp_range: tuple[float, float] = (0.9, 1.1)) -> Spectrogram:
    """Stretch/compress the frequency axis about its center by ``scale``.

    Bin f reads source coordinate f*scale + (1-scale)*(F-1)/2 clamped to the
    valid range, with linear interpolation between bracketing bins; the center
    bin is a fixed point. When ``scale`` is None it is drawn uniformly from
    ``warp_range`` with the seeded generator.
    """
    if a.bins < 2:
        raise ContractError("freq_warp needs at least 2 frequency bins")
    if scale is None:
        scale = float(_rng(rng_seed).uniform(warp_range[0], warp_range[1]))
    if not scale > 0:
        raise ContractError(f"scale must be positive: {scale}")
    f = a.bins
    center = (f - 1) / 2.0
    src = np.arange(f) * scale + (1.0 - scale) * center
    # Snap near-integer coordinates so fixed points stay exact.
    near = np.round(src)
    src = np.where(np.abs(src - near) < _SNAP, near, src)
    src = np.clip(src, 0.0, f - 1)
    lo_idx = np.floor(src).astype(np.intp)
    hi_idx = np.minimum(lo_idx + 1, f - 1)
    w = (src - lo_idx)[:, None]
    v = a.values
    return Spectrogram(v[lo_idx] + w * (v[hi_idx] - v[lo_idx]))
