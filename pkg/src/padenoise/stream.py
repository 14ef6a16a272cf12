"""Sliding-window streaming denoiser and throughput benchmark.

The stream engine buffers frames until a full window is available,
denoises the window as one Casorati block, and emits the newest
``stride`` frames of each window so that every input frame is denoised by
exactly one window and emitted exactly once, in order. The first full
window also emits its older frames retroactively (warm-up), and a source
that ends mid-window is flushed through a final, shorter window.

At most ``window`` frames are buffered at any instant. The per-window
transform is injectable so the plumbing can be exercised independently of
the numerics; the default transform is the randomized subspace projection
with a fixed or per-window auto-estimated rank.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from statistics import median
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import ValidationError
from .framestack import FrameStack
from .rankselect import (
    choose_rank,
    estimate_rank_spatial,
    estimate_rank_temporal,
    spatial_similarity_matrix,
)
from .svdcore import (
    DEFAULT_OVERSAMPLE,
    DEFAULT_POWER_ITERS,
    DEFAULT_SEED,
    project_signal,
    rsvd_basis,
    rsvd_factors,
)

RANK_POLICIES = ("fixed", "auto-temporal", "auto-spatial", "auto-min")


@dataclass(frozen=True)
class StreamConfig:
    window: int = 200
    stride: int | None = None  # default window // 4
    rank_policy: str = "fixed"
    k: int = 1
    p: int = DEFAULT_OVERSAMPLE
    q: int = DEFAULT_POWER_ITERS
    seed: int = DEFAULT_SEED
    n_eval: int | None = None
    tau: float = 0.3

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")
        if self.stride is None:
            object.__setattr__(self, "stride", max(1, self.window // 4))
        if not 1 <= self.stride <= self.window:
            raise ValidationError(
                f"stride must lie in [1, {self.window}], got {self.stride}"
            )
        if self.rank_policy not in RANK_POLICIES:
            raise ValidationError(f"rank policy must be one of {RANK_POLICIES}")
        if self.rank_policy == "fixed" and not 1 <= self.k <= self.window:
            raise ValidationError(f"fixed rank must lie in [1, {self.window}], got {self.k}")


def make_window_transform(
    cfg: StreamConfig,
    rank_log: list[int] | None = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Per-window Casorati transform implementing cfg's rank policy.

    The auto policies re-estimate the rank on every window from the same
    randomized factorization that supplies the projection basis.
    """

    def transform(cas: np.ndarray) -> np.ndarray:
        width = cas.shape[1]
        if cfg.rank_policy == "fixed":
            k = min(cfg.k, width)
            basis = rsvd_basis(cas, k, p=cfg.p, q=cfg.q, seed=cfg.seed)
            if rank_log is not None:
                rank_log.append(basis.k)
            return project_signal(cas, basis.q)
        n_eval = min(cfg.n_eval or min(75, width), width)
        factors = rsvd_factors(cas, n_eval, p=cfg.p, q=cfg.q, seed=cfg.seed)
        temporal = estimate_rank_temporal(factors.v, n_eval=factors.rank)
        spatial = estimate_rank_spatial(
            spatial_similarity_matrix(factors.u, n_eval=factors.rank), tau=cfg.tau
        )
        k = choose_rank(temporal, spatial, cfg.rank_policy.removeprefix("auto-"))
        if rank_log is not None:
            rank_log.append(k)
        return project_signal(cas, np.ascontiguousarray(factors.u[:, :k]))

    return transform


def _as_frame_iter(source) -> Iterator[np.ndarray]:
    if isinstance(source, FrameStack):
        return iter(source.samples)
    return iter(source)


def _process_block(
    frames: list[np.ndarray],
    transform: Callable[[np.ndarray], np.ndarray],
) -> list[np.ndarray]:
    shape = frames[0].shape
    block = np.stack(frames)
    cas = np.ascontiguousarray(block.reshape(len(frames), -1).T)
    out = transform(cas)
    return [np.ascontiguousarray(out[:, j]).reshape(shape) for j in range(len(frames))]


def stream_denoise(
    source: FrameStack | Iterable[np.ndarray],
    cfg: StreamConfig,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
    buffer_probe: Callable[[int], None] | None = None,
) -> Iterator[np.ndarray]:
    """Yield denoised frames in arrival order, each emitted exactly once.

    ``buffer_probe``, when given, is called with the buffered frame count
    after every arrival (instrumentation for the bounded-memory contract).
    """
    transform = transform or make_window_transform(cfg)
    window, stride = cfg.window, cfg.stride
    buf: list[np.ndarray] = []
    started = False
    for frame in _as_frame_iter(source):
        buf.append(np.asarray(frame, dtype=float))
        if buffer_probe is not None:
            buffer_probe(len(buf))
        if len(buf) == window:
            block = _process_block(buf, transform)
            if started:
                yield from block[window - stride :]
            else:
                yield from block  # warm-up: first window emits everything
                started = True
            del buf[:stride]

    if not started:
        if buf:
            warnings.warn(
                f"source ended after {len(buf)} frames, short of one {window}-frame "
                "window; denoising the partial block",
                stacklevel=2,
            )
            yield from _process_block(buf, transform)
        return
    # frames beyond the already-emitted overlap get a final, shorter window
    pending = len(buf) - (window - stride)
    if pending > 0:
        block = _process_block(buf, transform)
        yield from block[-pending:]


def stream_denoise_stack(
    fs: FrameStack,
    cfg: StreamConfig,
    rank_log: list[int] | None = None,
) -> FrameStack:
    """Run the stream over a stack and collect the output as a stack."""
    transform = make_window_transform(cfg, rank_log=rank_log)
    frames = list(stream_denoise(fs, cfg, transform=transform))
    return fs.with_samples(np.stack(frames))


@dataclass(frozen=True)
class BenchReport:
    n_x: int
    n_z: int
    n_t: int
    rank: int
    reps: int
    stride: int
    seconds_per_window: float
    seconds_per_frame: float


def bench(
    n_x: int,
    n_z: int,
    n_t: int,
    k: int = 1,
    reps: int = 5,
    stride: int | None = None,
    p: int = DEFAULT_OVERSAMPLE,
    q: int = DEFAULT_POWER_ITERS,
    seed: int = DEFAULT_SEED,
) -> BenchReport:
    """Median wall time to denoise one (n_x*n_z, n_t) window at rank k.

    The first repetition is discarded as warm-up; the amortized per-frame
    figure is per-window time divided by the stride.
    """
    if reps < 3:
        raise ValidationError(f"need at least 3 repetitions, got {reps}")
    if stride is None:
        stride = max(1, n_t // 4)
    if not 1 <= stride <= n_t:
        raise ValidationError(f"stride must lie in [1, {n_t}], got {stride}")
    rng = np.random.Generator(np.random.Philox(seed))
    cas = rng.standard_normal((n_x * n_z, n_t))
    cfg = StreamConfig(window=n_t, stride=stride, rank_policy="fixed", k=k, p=p, q=q, seed=seed)
    transform = make_window_transform(cfg)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        transform(cas)
        times.append(time.perf_counter() - t0)
    per_window = float(median(times[1:]))
    return BenchReport(
        n_x=n_x,
        n_z=n_z,
        n_t=n_t,
        rank=k,
        reps=reps,
        stride=stride,
        seconds_per_window=per_window,
        seconds_per_frame=per_window / stride,
    )
