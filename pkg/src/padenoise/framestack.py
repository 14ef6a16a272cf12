"""Frame-stack data model, Casorati reshaping, and file I/O.

A frame stack is an ordered sequence of ``n_t`` real-valued RF frames of
shape ``(n_x, n_z)`` (transducer channels by axial samples) with physical
pitch metadata. Samples are kept in 64-bit floats internally and stored as
32-bit on disk.

The single authoritative memory layout is

    flat_index(t, x, z) = t * (n_x * n_z) + x * n_z + z      (z fastest)

i.e. a C-ordered array of shape ``(n_t, n_x, n_z)``. The Casorati matrix
is the ``(n_x * n_z, n_t)`` view of the same data in which column ``t`` is
frame ``t`` vectorized with spatial index ``p = x * n_z + z``.

On-disk format: a JSON header ``<name>.json`` with keys exactly
``{n_x, n_z, n_t, dx_mm, dz_mm, dt_s, data_file}`` next to a raw binary
file of ``n_x * n_z * n_t`` little-endian IEEE-754 float32 values in
``(t, x, z)`` order, z fastest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

HEADER_KEYS = ("n_x", "n_z", "n_t", "dx_mm", "dz_mm", "dt_s", "data_file")


@dataclass(frozen=True)
class FrameStack:
    """Immutable stack of frames with acquisition metadata.

    ``samples`` has shape ``(n_t, n_x, n_z)`` and dtype float64. The array
    is not copied on construction; callers must not mutate it afterwards.
    """

    samples: np.ndarray = field(repr=False)
    dx_mm: float
    dz_mm: float
    dt_s: float

    def __post_init__(self):
        s = self.samples
        if not isinstance(s, np.ndarray) or s.ndim != 3:
            raise ValidationError("samples must be a 3-D array (n_t, n_x, n_z)")
        if s.dtype != np.float64:
            object.__setattr__(self, "samples", s.astype(np.float64))
            s = self.samples
        if min(s.shape) < 1:
            raise ValidationError(f"all dimensions must be >= 1, got {s.shape}")
        if not np.isfinite(s).all():
            raise ValidationError("samples contain non-finite values")
        for name in ("dx_mm", "dz_mm", "dt_s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def n_t(self) -> int:
        return self.samples.shape[0]

    @property
    def n_x(self) -> int:
        return self.samples.shape[1]

    @property
    def n_z(self) -> int:
        return self.samples.shape[2]

    def frame(self, t: int) -> np.ndarray:
        """Frame ``t`` as an (n_x, n_z) array."""
        if not 0 <= t < self.n_t:
            raise ValidationError(f"frame index {t} out of range [0, {self.n_t})")
        return self.samples[t]

    def with_samples(self, samples: np.ndarray) -> "FrameStack":
        """New stack with the same pitches and different sample data."""
        return replace(self, samples=samples)


def to_casorati(fs: FrameStack) -> np.ndarray:
    """Reshape a stack into its (n_x*n_z, n_t) Casorati matrix."""
    n_t = fs.n_t
    return np.ascontiguousarray(fs.samples.reshape(n_t, -1).T)


def from_casorati(mat: np.ndarray, like: FrameStack) -> FrameStack:
    """Inverse of :func:`to_casorati`; metadata is taken from ``like``."""
    expected = (like.n_x * like.n_z, like.n_t)
    if mat.ndim != 2 or mat.shape != expected:
        raise ValidationError(f"matrix shape {mat.shape} does not match expected {expected}")
    samples = np.ascontiguousarray(mat.T).reshape(like.n_t, like.n_x, like.n_z)
    return like.with_samples(samples)


def slice_window(fs: FrameStack, start: int, length: int) -> FrameStack:
    """Copy frames [start, start+length) with metadata preserved."""
    if length < 1:
        raise ValidationError(f"window length must be >= 1, got {length}")
    if start < 0 or start + length > fs.n_t:
        raise ValidationError(
            f"window [{start}, {start + length}) out of range for {fs.n_t} frames"
        )
    return fs.with_samples(fs.samples[start : start + length].copy())


def _require_header_field(header: dict, key: str, kind, path):
    if key not in header:
        raise ValidationError(f"{path}: header missing field '{key}'")
    value = header[key]
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ValidationError(f"{path}: header field '{key}' must be a positive integer")
    elif kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
            raise ValidationError(f"{path}: header field '{key}' must be a positive number")
    elif kind is str:
        if not isinstance(value, str) or not value:
            raise ValidationError(f"{path}: header field '{key}' must be a non-empty string")
    return value


def load_framestack(path: str | Path) -> FrameStack:
    """Load a stack from its JSON header, widening samples to float64.

    Raises :class:`ValidationError` for malformed headers, short or long
    data files, and non-finite sample values.
    """
    path = Path(path)
    try:
        header = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise ValidationError(f"{path}: header must be a JSON object")

    n_x = _require_header_field(header, "n_x", int, path)
    n_z = _require_header_field(header, "n_z", int, path)
    n_t = _require_header_field(header, "n_t", int, path)
    dx_mm = float(_require_header_field(header, "dx_mm", float, path))
    dz_mm = float(_require_header_field(header, "dz_mm", float, path))
    dt_s = float(_require_header_field(header, "dt_s", float, path))
    data_file = _require_header_field(header, "data_file", str, path)

    data_path = path.parent / data_file
    raw = np.fromfile(data_path, dtype="<f4")
    expected = n_x * n_z * n_t
    if raw.size != expected:
        raise ValidationError(
            f"{data_path}: expected {expected} float32 values, found {raw.size}"
        )
    if not np.isfinite(raw).all():
        raise ValidationError(f"{data_path}: data contains non-finite values")
    samples = raw.astype(np.float64).reshape(n_t, n_x, n_z)
    return FrameStack(samples=samples, dx_mm=dx_mm, dz_mm=dz_mm, dt_s=dt_s)


def save_framestack(fs: FrameStack, path: str | Path) -> None:
    """Write the header/raw-binary file pair readable by :func:`load_framestack`.

    Narrowing to float32 uses IEEE round-to-nearest-even.
    """
    path = Path(path)
    data_name = path.stem + ".f32"
    header = {
        "n_x": fs.n_x,
        "n_z": fs.n_z,
        "n_t": fs.n_t,
        "dx_mm": fs.dx_mm,
        "dz_mm": fs.dz_mm,
        "dt_s": fs.dt_s,
        "data_file": data_name,
    }
    (path.parent / data_name).write_bytes(fs.samples.astype("<f4").tobytes())
    path.write_text(json.dumps(header, indent=2) + "\n")
