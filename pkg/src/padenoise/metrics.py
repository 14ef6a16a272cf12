"""Image-quality metrics for denoising comparisons.

Reference metrics (PSNR, global SSIM, edge preservation index) require a
noise-free image; ROI-based SNR/CNR and the FWHM axial-resolution proxy do
not. Conventions that matter for reproducibility:

* PSNR defaults to the standard squared-peak form
  ``10 log10(max(X)^2 / MSE)``; ``form="paper"`` selects the unsquared
  variant some papers print. Identical images return ``inf``.
* SSIM is the global single-window formula with C1 = (0.01*255)^2 and
  C2 = (0.03*255)^2 after a shared affine rescale of the pair onto
  [0, 255].
* EPI high-passes both images with the 4-connected 3x3 Laplacian evaluated
  on the fully supported interior (constants are annihilated exactly, so
  EPI is invariant to adding a constant to either image), then returns the
  normalized correlation of the mean-centered responses.
* ROI amplitudes are |pixel value|; noise spread is the sample standard
  deviation (N-1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

CSV_COLUMNS = ("frame_index", "psnr_db", "ssim", "epi", "snr_db", "cnr", "fwhm_mm")


@dataclass(frozen=True)
class RoiSet:
    """Signal and noise rectangles (x0, z0, width, height) in pixels.

    All rectangles must have the same pixel count.
    """

    signal_rois: tuple[tuple[int, int, int, int], ...]
    noise_rois: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if not self.signal_rois or not self.noise_rois:
            raise ValidationError("need at least one signal ROI and one noise ROI")
        areas = {w * h for (_, _, w, h) in self.signal_rois + self.noise_rois}
        if len(areas) != 1:
            raise ValidationError(f"ROIs must have equal pixel counts, got areas {sorted(areas)}")
        area = areas.pop()
        if area < 2:
            raise ValidationError("ROIs need at least 2 pixels for a standard deviation")
        for x0, z0, w, h in self.signal_rois + self.noise_rois:
            if w < 1 or h < 1 or x0 < 0 or z0 < 0:
                raise ValidationError(f"malformed ROI rectangle ({x0}, {z0}, {w}, {h})")

    def check_bounds(self, shape: tuple[int, int]) -> None:
        n_x, n_z = shape
        for x0, z0, w, h in self.signal_rois + self.noise_rois:
            if x0 + w > n_x or z0 + h > n_z:
                raise ValidationError(
                    f"ROI ({x0}, {z0}, {w}, {h}) exceeds image bounds {shape}"
                )


@dataclass(frozen=True)
class MetricsReport:
    """Metrics for one frame; absent measurements are None."""

    frame_index: int
    psnr_db: float | None = None
    ssim: float | None = None
    epi: float | None = None
    snr_db: float | None = None
    cnr: float | None = None
    fwhm_mm: float | None = None

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if np.isinf(v):
                return "inf" if v > 0 else "-inf"
            return repr(float(v))

        return [str(self.frame_index)] + [
            fmt(getattr(self, name)) for name in CSV_COLUMNS[1:]
        ]


def write_reports_csv(reports: list[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.csv_row())


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def psnr(x: np.ndarray, y: np.ndarray, form: str = "standard") -> float:
    """Peak signal-to-noise ratio of x against reference y, in dB."""
    x, y = _check_pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    peak = float(x.max())
    if form == "standard":
        num = peak * peak
    elif form == "paper":
        num = peak
    else:
        raise ValidationError(f"unknown PSNR form {form!r}")
    if num <= 0.0:
        return float("-inf")
    return float(10.0 * np.log10(num / mse))


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Global single-window SSIM after a shared rescale onto [0, 255]."""
    x, y = _check_pair(x, y)
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi > lo:
        scale = 255.0 / (hi - lo)
        x = (x - lo) * scale
        y = (y - lo) * scale
    else:
        x = np.zeros_like(x)
        y = np.zeros_like(y)
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cxy = float(np.mean((x - mx) * (y - my)))
    return float(
        ((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
    )


def _laplacian_interior(a: np.ndarray) -> np.ndarray:
    return (
        4.0 * a[1:-1, 1:-1]
        - a[:-2, 1:-1]
        - a[2:, 1:-1]
        - a[1:-1, :-2]
        - a[1:-1, 2:]
    )


def epi(x: np.ndarray, y: np.ndarray) -> float | None:
    """Edge preservation index: correlation of Laplacian-filtered images.

    Returns None when either filtered image has zero variance (no edges to
    correlate).
    """
    x, y = _check_pair(x, y)
    if x.shape[0] < 3 or x.shape[1] < 3:
        raise ValidationError(f"EPI needs at least a 3x3 image, got {x.shape}")
    hx = _laplacian_interior(x)
    hy = _laplacian_interior(y)
    hx = hx - hx.mean()
    hy = hy - hy.mean()
    den = float(np.sqrt(np.sum(hx * hx) * np.sum(hy * hy)))
    if den == 0.0:
        return None
    return float(np.sum(hx * hy) / den)


def _roi_stats(img: np.ndarray, rois) -> tuple[np.ndarray, np.ndarray]:
    means, stds = [], []
    for x0, z0, w, h in rois:
        values = np.abs(img[x0 : x0 + w, z0 : z0 + h])
        means.append(values.mean())
        stds.append(values.std(ddof=1))
    return np.array(means), np.array(stds)


def roi_snr(img: np.ndarray, rois: RoiSet) -> float:
    """20 log10 of mean signal-ROI amplitude over mean noise-ROI deviation."""
    rois.check_bounds(img.shape)
    sig_means, _ = _roi_stats(img, rois.signal_rois)
    _, noise_stds = _roi_stats(img, rois.noise_rois)
    noise = float(noise_stds.mean())
    if noise == 0.0:
        return float("inf")
    return float(20.0 * np.log10(sig_means.mean() / noise))


def roi_cnr(img: np.ndarray, rois: RoiSet) -> float:
    """|mean signal amplitude - mean noise amplitude| / mean noise deviation."""
    rois.check_bounds(img.shape)
    sig_means, _ = _roi_stats(img, rois.signal_rois)
    noise_means, noise_stds = _roi_stats(img, rois.noise_rois)
    noise = float(noise_stds.mean())
    if noise == 0.0:
        return float("inf")
    return float(abs(sig_means.mean() - noise_means.mean()) / noise)


def fwhm(profile: np.ndarray, dz_mm: float) -> float | None:
    """Full width at half maximum of a non-negative 1-D profile, in mm.

    Crossings nearest the peak are located by linear interpolation between
    bracketing samples; a flat-topped peak is measured from the plateau
    edges. Returns None when a crossing is missing on either side.
    """
    profile = np.asarray(profile, dtype=float)
    if profile.ndim != 1 or profile.size < 3:
        raise ValidationError("profile must be 1-D with at least 3 samples")
    if np.any(profile < 0):
        raise ValidationError("profile values must be >= 0")
    if dz_mm <= 0:
        raise ValidationError(f"dz_mm must be > 0, got {dz_mm}")
    vmax = profile.max()
    if vmax == 0.0:
        return None
    half = vmax / 2.0
    peak_idx = np.nonzero(profile == vmax)[0]
    i_lo, i_hi = int(peak_idx[0]), int(peak_idx[-1])

    left = None
    for i in range(i_lo - 1, -1, -1):
        if profile[i] < half:
            left = i + (half - profile[i]) / (profile[i + 1] - profile[i])
            break
    right = None
    for i in range(i_hi + 1, profile.size):
        if profile[i] < half:
            right = i - (half - profile[i]) / (profile[i - 1] - profile[i])
            break
    if left is None or right is None:
        return None
    return float((right - left) * dz_mm)
