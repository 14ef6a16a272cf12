"""Full-SVD subspace filter and the randomized projection pipeline.

The reference path factorizes the Casorati matrix ``S = U diag(sigma) V^T``
and reconstructs from a chosen set of singular components. The fast path
follows the randomized range finder of Halko, Martinsson & Tropp (2011):
a Gaussian sketch ``S' = S R``, a column-pivoted QR for an orthonormal
basis, optional power iterations to sharpen the basis against slowly
decaying spectra, and a small SVD of ``Q^T S`` that rotates the basis onto
the leading singular directions before truncation. Denoising projects the
data onto the retained subspace: ``P = Q (Q^T S)``.

All operations are pure and deterministic: the sketch uses a counter-based
Philox generator so that a fixed seed reproduces results bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.linalg import qr as _pivoted_qr

from .errors import ValidationError
from .framestack import FrameStack, from_casorati, to_casorati

DEFAULT_SEED = 0x5EED
DEFAULT_OVERSAMPLE = 10
DEFAULT_POWER_ITERS = 2

# relative magnitude below which pivoted-QR diagonal entries are treated
# as numerically rank deficient
RANK_CUTOFF = 1e-12


@dataclass(frozen=True)
class SvdFactors:
    """Factors ``S = u @ diag(sigma) @ v.T`` with sigma non-increasing."""

    u: np.ndarray = field(repr=False)      # (n_x*n_z, r) spatial vectors
    sigma: np.ndarray = field(repr=False)  # (r,)
    v: np.ndarray = field(repr=False)      # (n_t, r) temporal vectors

    @property
    def rank(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of the retained signal subspace plus provenance."""

    q: np.ndarray = field(repr=False)  # (n_x*n_z, k), orthonormal columns
    k: int
    seed: int
    q_iters: int
    p_oversample: int

    def __post_init__(self):
        if self.q.ndim != 2 or self.q.shape[1] != self.k or self.k < 1:
            raise ValidationError(f"basis must have k >= 1 columns, got shape {self.q.shape}")
        gram = self.q.T @ self.q
        if np.abs(gram - np.eye(self.k)).max() > 1e-10:
            raise ValidationError("basis columns are not orthonormal within 1e-10")


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    """Make the largest-magnitude entry of each u column positive, in place."""
    for j in range(u.shape[1]):
        col = u[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]


def full_svd(mat: np.ndarray) -> SvdFactors:
    """Full SVD of a Casorati matrix with a fixed column-sign convention."""
    if not np.isfinite(mat).all():
        raise ValidationError("matrix contains non-finite values")
    u, sigma, vt = np.linalg.svd(mat, full_matrices=False)
    v = vt.T.copy()
    u = u.copy()
    _fix_signs(u, v)
    return SvdFactors(u=u, sigma=sigma, v=v)


def svd_filter(factors: SvdFactors, keep: Iterable[int]) -> np.ndarray:
    """Reconstruct keeping only the singular components in ``keep``.

    Component orders are 1-based (order 1 is the largest singular value).
    An empty set yields the zero matrix.
    """
    keep = sorted(set(int(i) for i in keep))
    r = factors.rank
    if keep and (keep[0] < 1 or keep[-1] > r):
        raise ValidationError(f"component orders must lie in [1, {r}], got {keep}")
    sigma_f = np.zeros_like(factors.sigma)
    for order in keep:
        sigma_f[order - 1] = factors.sigma[order - 1]
    return (factors.u * sigma_f) @ factors.v.T


def gaussian_sketch(mat: np.ndarray, k: int, p: int, seed: int) -> np.ndarray:
    """Sketch ``S' = S R`` with an (n_t, k+p) standard-normal R from Philox."""
    n_t = mat.shape[1]
    if k < 1:
        raise ValidationError(f"rank must be >= 1, got {k}")
    if p < 0:
        raise ValidationError(f"oversampling must be >= 0, got {p}")
    if k + p > n_t:
        raise ValidationError(f"sketch width k+p = {k + p} exceeds n_t = {n_t}")
    rng = np.random.Generator(np.random.Philox(seed))
    return mat @ rng.standard_normal((n_t, k + p))


def orthonormal_basis(sketch: np.ndarray) -> np.ndarray:
    """Orthonormal basis of range(sketch) via column-pivoted QR.

    Columns whose pivoted R diagonal falls below ``RANK_CUTOFF`` times the
    largest diagonal are dropped, so rank-deficient sketches yield a basis
    of the numerical rank. A zero sketch yields an empty (rows, 0) basis.
    """
    if not np.isfinite(sketch).all():
        raise ValidationError("sketch contains non-finite values")
    q, r, _ = _pivoted_qr(sketch, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.empty((sketch.shape[0], 0))
    return np.ascontiguousarray(q[:, diag >= RANK_CUTOFF * diag[0]])


def power_iteration_refine(mat: np.ndarray, basis: np.ndarray, n_iters: int) -> np.ndarray:
    """Run ``n_iters`` passes of Q <- orth(S @ orth(S^T @ Q)).

    Re-orthonormalization after every half step keeps the basis numerically
    orthonormal; ``n_iters == 0`` returns the input unchanged.
    """
    if n_iters < 0:
        raise ValidationError(f"iteration count must be >= 0, got {n_iters}")
    q = basis
    for _ in range(n_iters):
        z, _ = np.linalg.qr(mat.T @ q)
        q, _ = np.linalg.qr(mat @ z)
    return q


def project_signal(mat: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Project onto span(basis): ``P = Q (Q^T S)``."""
    if basis.shape[0] != mat.shape[0]:
        raise ValidationError(
            f"basis rows {basis.shape[0]} do not match matrix rows {mat.shape[0]}"
        )
    return basis @ (basis.T @ mat)


def _rsvd_core(mat, k, p, q, seed):
    """Shared pipeline: sketch, basis, refine, rotate onto singular directions.

    Returns (q_rot, sigma, v) of width min(k+p, numerical rank), ordered by
    decreasing singular value of the projected matrix.
    """
    n_t = mat.shape[1]
    if k > n_t:
        raise ValidationError(f"rank {k} exceeds frame count {n_t}")
    p_eff = min(p, n_t - k)
    sketch = gaussian_sketch(mat, k, p_eff, seed)
    basis = orthonormal_basis(sketch)
    if basis.shape[1] == 0:
        raise ValidationError("no signal subspace: sketch has numerical rank zero")
    basis = power_iteration_refine(mat, basis, q)
    b_small = basis.T @ mat
    u_small, sigma, vt = np.linalg.svd(b_small, full_matrices=False)
    q_rot = basis @ u_small
    v = vt.T.copy()
    _fix_signs(q_rot, v)
    return q_rot, sigma, v


def rsvd_factors(
    mat: np.ndarray,
    n_components: int,
    p: int = DEFAULT_OVERSAMPLE,
    q: int = DEFAULT_POWER_ITERS,
    seed: int = DEFAULT_SEED,
) -> SvdFactors:
    """Randomized truncated SVD with ``n_components`` retained components."""
    q_rot, sigma, v = _rsvd_core(mat, n_components, p, q, seed)
    w = min(n_components, q_rot.shape[1])
    return SvdFactors(u=q_rot[:, :w], sigma=sigma[:w], v=v[:, :w])


def rsvd_basis(
    mat: np.ndarray,
    k: int,
    p: int = DEFAULT_OVERSAMPLE,
    q: int = DEFAULT_POWER_ITERS,
    seed: int = DEFAULT_SEED,
) -> SubspaceBasis:
    """Estimated rank-k signal-subspace basis of a Casorati matrix."""
    q_rot, _, _ = _rsvd_core(mat, k, p, q, seed)
    k_eff = min(k, q_rot.shape[1])
    return SubspaceBasis(
        q=np.ascontiguousarray(q_rot[:, :k_eff]),
        k=k_eff,
        seed=seed,
        q_iters=q,
        p_oversample=p,
    )


def rsvd_denoise(
    fs: FrameStack,
    k: int,
    p: int = DEFAULT_OVERSAMPLE,
    q: int = DEFAULT_POWER_ITERS,
    seed: int = DEFAULT_SEED,
) -> FrameStack:
    """Denoise a stack by projection onto its estimated rank-k subspace.

    The composition is: Casorati reshape, Gaussian sketch (oversampled by
    ``p``, clamped to the frame count), pivoted-QR basis, ``q`` power
    iterations, truncation to ``k`` components, projection, inverse
    reshape. Metadata is preserved; a fixed seed gives bit-identical output
    across runs on the same platform.
    """
    mat = to_casorati(fs)
    basis = rsvd_basis(mat, k, p=p, q=q, seed=seed)
    return from_casorati(project_signal(mat, basis.q), fs)
