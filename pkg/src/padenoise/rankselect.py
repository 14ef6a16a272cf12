"""Automatic tissue-subspace rank estimation from singular vectors.

Two non-parametric estimators, in the spirit of adaptive clutter-filter
threshold selection for ultrafast Doppler (Baranger et al. 2018):

* temporal: quasi-static tissue occupies a narrow band around DC, noise is
  wideband. For each temporal singular vector we compute the double-sided
  power spectral density and the fraction of the band holding 99% of the
  energy; the rank is placed just before the curve reaches the full-band
  noise floor.

* spatial: magnitude images of spatial singular vectors are mutually
  correlated inside the tissue subspace and uncorrelated in the noise
  subspace. The Pearson correlation matrix of the magnitudes shows a
  leading high-correlation square whose boundary marks the rank.

Both estimators consume only ``|u|`` and ``|DFT(v)|^2``, so they are
invariant to singular-vector sign flips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_N_EVAL = 75
DEFAULT_TAU = 0.3

# a singular vector whose 99%-energy bandwidth reaches this fraction of the
# full band is considered part of the wideband noise floor
NOISE_BAND_FRACTION = 0.9

# if no bandwidth ever exceeds this fraction the input has no detectable
# noise floor and the estimators cannot place a boundary
NO_FLOOR_FRACTION = 0.5

MIN_FRAMES = 8


@dataclass(frozen=True)
class PsdTable:
    """Per-vector double-sided power spectral densities, rows normalized."""

    rows: np.ndarray = field(repr=False)  # (n_eval, n_t)
    freq_resolution_hz: float | None = None


@dataclass(frozen=True)
class SimilarityMatrix:
    """Pearson correlations of spatial singular-vector magnitudes."""

    c: np.ndarray = field(repr=False)  # (n_eval, n_eval)
    zero_variance_orders: tuple[int, ...] = ()


@dataclass(frozen=True)
class RankEstimate:
    k_hat: int
    method: str                      # "temporal" or "spatial"
    diagnostics: np.ndarray = field(repr=False)  # bandwidth curve or C
    no_noise_floor: bool = False


def _resolve_n_eval(available: int, n_eval: int | None) -> int:
    if n_eval is None:
        n_eval = min(DEFAULT_N_EVAL, available)
    if not 1 <= n_eval <= available:
        raise ValidationError(f"n_eval must lie in [1, {available}], got {n_eval}")
    return n_eval


def temporal_psd(v: np.ndarray, n_eval: int | None = None, dt_s: float | None = None) -> PsdTable:
    """Normalized |DFT|^2 of the first ``n_eval`` temporal vectors.

    No windowing or zero padding: singular vectors are full length and a
    taper would blur the narrowband/wideband distinction the estimator
    relies on.
    """
    if v.ndim != 2:
        raise ValidationError("temporal vectors must form a 2-D (n_t, r) array")
    n_t = v.shape[0]
    if n_t < MIN_FRAMES:
        raise ValidationError(f"need at least {MIN_FRAMES} frames for PSD estimation, got {n_t}")
    n_eval = _resolve_n_eval(v.shape[1], n_eval)
    rows = np.abs(np.fft.fft(v[:, :n_eval], axis=0).T) ** 2
    totals = rows.sum(axis=1, keepdims=True)
    if np.any(totals == 0.0):
        raise ValidationError("zero temporal vector has no spectrum")
    rows /= totals
    freq_res = None if dt_s is None else 1.0 / (n_t * dt_s)
    return PsdTable(rows=rows, freq_resolution_hz=freq_res)


def bandwidth99(row: np.ndarray, energy: float = 0.99) -> float:
    """Fraction of the band in the smallest symmetric interval about DC
    holding ``energy`` of the row's total.

    The interval grows one bin per side, positive side first on ties; for
    even lengths the Nyquist bin counts as the last positive bin.
    """
    row = np.asarray(row, dtype=float)
    n = row.size
    target = energy * row.sum()
    cum = row[0]
    count = 1
    if cum >= target:
        return count / n
    max_neg = (n - 1) // 2
    for s in range(1, n // 2 + 1):
        cum += row[s]
        count += 1
        if cum >= target:
            return count / n
        if s <= max_neg:
            cum += row[n - s]
            count += 1
            if cum >= target:
                return count / n
    return count / n


def bandwidth_curve(v: np.ndarray, n_eval: int | None = None) -> np.ndarray:
    """99%-bandwidth fraction per singular-vector order 1..n_eval."""
    table = temporal_psd(v, n_eval)
    return np.array([bandwidth99(row) for row in table.rows])


def rank_from_bandwidth_curve(
    curve: np.ndarray,
    noise_band: float = NOISE_BAND_FRACTION,
) -> RankEstimate:
    """Place the rank just before the curve reaches the noise floor.

    The boundary order is the first whose bandwidth has expanded to
    ``noise_band`` of the full band; the rank is one less, clamped to
    >= 1. If the curve never rises above half the band there is no
    detectable noise floor and the full evaluation depth is returned with
    a flag.
    """
    curve = np.asarray(curve, dtype=float)
    crossings = np.nonzero(curve >= noise_band)[0]
    if curve.max() <= NO_FLOOR_FRACTION or crossings.size == 0:
        return RankEstimate(
            k_hat=curve.size, method="temporal", diagnostics=curve, no_noise_floor=True
        )
    k_hat = max(1, int(crossings[0]))  # first crossing order minus one, 1-based
    return RankEstimate(k_hat=k_hat, method="temporal", diagnostics=curve)


def estimate_rank_temporal(
    v: np.ndarray,
    n_eval: int | None = None,
    noise_band: float = NOISE_BAND_FRACTION,
) -> RankEstimate:
    """Rank from the inflexion of the temporal 99%-bandwidth curve."""
    return rank_from_bandwidth_curve(bandwidth_curve(v, n_eval), noise_band)


def spatial_similarity_matrix(u: np.ndarray, n_eval: int | None = None) -> SimilarityMatrix:
    """Pearson correlation of |u_n| and |u_m| over all pixels.

    Pairs involving a zero-variance magnitude image get correlation 0 and
    the offending orders are flagged.
    """
    if u.ndim != 2:
        raise ValidationError("spatial vectors must form a 2-D (n_pixels, r) array")
    n_eval = _resolve_n_eval(u.shape[1], n_eval)
    mag = np.abs(u[:, :n_eval])
    centered = mag - mag.mean(axis=0, keepdims=True)
    sd = np.sqrt((centered**2).mean(axis=0))
    zero = sd == 0.0
    denom = np.where(zero, 1.0, sd)
    c = (centered.T @ centered) / mag.shape[0]
    c /= np.outer(denom, denom)
    if zero.any():
        c[zero, :] = 0.0
        c[:, zero] = 0.0
    np.fill_diagonal(c, np.where(zero, 0.0, 1.0))
    c = np.clip(c, -1.0, 1.0)
    c = (c + c.T) / 2.0
    flagged = tuple(int(i) + 1 for i in np.nonzero(zero)[0])
    return SimilarityMatrix(c=c, zero_variance_orders=flagged)


def estimate_rank_spatial(
    sim: SimilarityMatrix | np.ndarray,
    tau: float = DEFAULT_TAU,
) -> RankEstimate:
    """Rank from the boundary of the leading correlation square.

    Scans k = 2..n_eval and stops at the first order whose mean correlation
    with all lower orders falls below ``tau``; the rank is the order before
    it. An identity-like matrix yields rank 1.
    """
    c = sim.c if isinstance(sim, SimilarityMatrix) else np.asarray(sim)
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    n_eval = c.shape[0]
    k_hat = n_eval
    for k in range(2, n_eval + 1):
        if c[k - 1, : k - 1].mean() < tau:
            k_hat = k - 1
            break
    return RankEstimate(k_hat=max(1, k_hat), method="spatial", diagnostics=c)


def choose_rank(temporal: RankEstimate, spatial: RankEstimate, policy: str) -> int:
    """Combine the two estimates under a configured policy."""
    if policy == "min":
        return min(temporal.k_hat, spatial.k_hat)
    if policy == "max":
        return max(temporal.k_hat, spatial.k_hat)
    if policy == "temporal":
        return temporal.k_hat
    if policy == "spatial":
        return spatial.k_hat
    raise ValidationError(f"unknown rank policy {policy!r}")
