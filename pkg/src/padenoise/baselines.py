"""Comparison denoisers: frame averaging and per-frame db4 wavelet shrinkage.

The wavelet path is the classic VisuShrink recipe (Donoho & Johnstone
1994): an orthogonal multilevel DWT along each A-line, noise scale from
the median absolute deviation of detail coefficients, and soft
thresholding at the universal level ``sigma * sqrt(2 ln n)``. The
transform uses periodic boundary extension, which keeps it exactly
orthogonal (energy preserving), and the db4 filter pair is derived at
import time by spectral factorization rather than hard-coded, so the
coefficients are exact to machine precision.
"""

from __future__ import annotations

import warnings
from math import comb

import numpy as np

from .errors import ValidationError
from .framestack import FrameStack

FILTER_LENGTH = 8
MAD_SCALE = 0.6745  # Phi^{-1}(0.75): MAD of a standard normal


def _daubechies_scaling(n_moments: int = 4) -> np.ndarray:
    """Minimum-phase Daubechies scaling filter with ``n_moments`` vanishing
    moments, via spectral factorization of the binomial half-band polynomial."""
    p = np.array([comb(n_moments - 1 + k, k) for k in range(n_moments)], dtype=float)
    zroots = []
    for y in np.roots(p[::-1]):
        # y = (2 - z - 1/z)/4  =>  z^2 - (2 - 4y) z + 1 = 0; keep |z| < 1
        b = 2.0 - 4.0 * y
        disc = np.sqrt(b * b - 4.0 + 0j)
        for z in ((b + disc) / 2.0, (b - disc) / 2.0):
            if abs(z) < 1.0:
                zroots.append(z)
    poly = np.array([1.0 + 0j])
    for _ in range(n_moments):
        poly = np.convolve(poly, [0.5, 0.5])
    for z in zroots:
        poly = np.convolve(poly, [-z, 1.0]) / (1.0 - z)
    h = np.real(poly)[::-1]
    return h * (np.sqrt(2.0) / h.sum())


DB4_LO = _daubechies_scaling(4)
DB4_HI = ((-1.0) ** np.arange(FILTER_LENGTH)) * DB4_LO[::-1]


def average_frames(fs: FrameStack) -> FrameStack:
    """Per-pixel arithmetic mean over time, as a single-frame stack."""
    return fs.with_samples(fs.samples.mean(axis=0, keepdims=True))


def sliding_average(fs: FrameStack, w: int) -> FrameStack:
    """Causal moving average: frame t = mean of frames [max(0, t-w+1), t].

    Output keeps all n_t frames; the warm-up uses the available history.
    """
    if not 1 <= w <= fs.n_t:
        raise ValidationError(f"window must lie in [1, {fs.n_t}], got {w}")
    if w == 1:
        return fs.with_samples(fs.samples.copy())
    cum = np.cumsum(fs.samples, axis=0)
    out = np.empty_like(fs.samples)
    out[:w] = cum[:w] / np.arange(1, w + 1)[:, None, None]
    if w < fs.n_t:
        out[w:] = (cum[w:] - cum[:-w]) / w
    return fs.with_samples(out)


def max_dwt_levels(n: int) -> int:
    """Deepest admissible decomposition depth for a length-n signal.

    Requires n divisible by 2^levels (periodic decimation) and
    n >= 2^levels * filter length.
    """
    levels = 0
    while n % 2 == 0 and n >= 2 * FILTER_LENGTH:
        levels += 1
        n //= 2
    return levels


def _check_levels(n: int, levels: int) -> None:
    if levels < 1:
        raise ValidationError(f"levels must be >= 1, got {levels}")
    if levels > max_dwt_levels(n):
        raise ValidationError(
            f"signal of length {n} admits at most {max_dwt_levels(n)} levels, got {levels}"
        )


def _analyze(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[-1]
    base = 2 * np.arange(n // 2)
    a = np.zeros(x.shape[:-1] + (n // 2,))
    d = np.zeros_like(a)
    for m in range(FILTER_LENGTH):
        xs = x[..., (base + m) % n]
        a += xs * DB4_LO[m]
        d += xs * DB4_HI[m]
    return a, d


def _synthesize(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    n = 2 * a.shape[-1]
    x = np.zeros(a.shape[:-1] + (n,))
    base = 2 * np.arange(a.shape[-1])
    for m in range(FILTER_LENGTH):
        # indices are distinct for fixed m (stride 2), so plain += is safe
        x[..., (base + m) % n] += a * DB4_LO[m] + d * DB4_HI[m]
    return x


def dwt_forward(signal: np.ndarray, levels: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Multilevel periodized db4 analysis along the last axis.

    Returns (approximation, details) with details ordered finest first.
    """
    _check_levels(signal.shape[-1], levels)
    details = []
    a = np.asarray(signal, dtype=float)
    for _ in range(levels):
        a, d = _analyze(a)
        details.append(d)
    return a, details


def dwt_inverse(approx: np.ndarray, details: list[np.ndarray]) -> np.ndarray:
    """Inverse of :func:`dwt_forward`."""
    a = approx
    for d in reversed(details):
        a = _synthesize(a, d)
    return a


def universal_threshold(sigma: float, n: int) -> float:
    """Donoho-Johnstone universal level ``sigma * sqrt(2 ln n)``."""
    if sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return float(sigma * np.sqrt(2.0 * np.log(n)))


def soft_threshold(x: np.ndarray, lam: float) -> np.ndarray:
    """Shrink toward zero: sign(x) * max(|x| - lam, 0)."""
    if lam < 0:
        raise ValidationError(f"threshold must be >= 0, got {lam}")
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def mad_sigma(coeffs: np.ndarray) -> np.ndarray:
    """Noise scale estimate median(|coeffs|) / 0.6745 along the last axis."""
    return np.median(np.abs(coeffs), axis=-1) / MAD_SCALE


def dwt_denoise_frame(frame: np.ndarray, levels: int = 4) -> np.ndarray:
    """VisuShrink a single (n_x, n_z) frame, channel by channel along z.

    Each detail band gets its own MAD noise scale per channel; the
    approximation band is left untouched. If the axial length does not
    admit the requested depth, the depth is reduced to the deepest
    admissible value (with a warning); zero admissible levels return the
    frame unchanged.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2:
        raise ValidationError("frame must be 2-D (n_x, n_z)")
    n_z = frame.shape[1]
    admissible = max_dwt_levels(n_z)
    if levels > admissible:
        warnings.warn(
            f"reducing DWT depth from {levels} to {admissible} for n_z={n_z}",
            stacklevel=2,
        )
        levels = admissible
    if levels < 1:
        return frame.copy()
    approx, details = dwt_forward(frame, levels)
    out_details = []
    for d in details:
        lam = mad_sigma(d) * np.sqrt(2.0 * np.log(n_z))
        out_details.append(np.sign(d) * np.maximum(np.abs(d) - lam[:, None], 0.0))
    return dwt_inverse(approx, out_details)


def dwt_denoise_stack(fs: FrameStack, levels: int = 4) -> FrameStack:
    """Apply :func:`dwt_denoise_frame` to every frame independently."""
    out = np.empty_like(fs.samples)
    with warnings.catch_warnings():
        warnings.simplefilter("once")
        for t in range(fs.n_t):
            out[t] = dwt_denoise_frame(fs.samples[t], levels=levels)
    return fs.with_samples(out)
