import numpy as np
import pytest

from padenoise.framestack import FrameStack
from padenoise.phantom import add_gaussian_noise, make_framestack, make_vessel_pattern

# paper-style 4-group motion schedule: absolute z offsets in mm
MOVING_SCHEDULE = [(25, 0.0), (25, 1.0), (25, 2.0), (25, -1.0)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_stack(rng, n_t=10, n_x=4, n_z=6) -> FrameStack:
    return FrameStack(
        samples=rng.standard_normal((n_t, n_x, n_z)),
        dx_mm=0.3,
        dz_mm=0.1,
        dt_s=0.01,
    )


def phantom_stack(schedule, snr_db=None, seed=0, n_x=128, n_z=400):
    """Clean (and optionally noisy) desk-scale vascular stack."""
    if (n_x, n_z) == (128, 400):
        vessels = None  # stock layout fits the full grid
    else:
        from padenoise.phantom import Vessel

        x_max, z_max = (n_x - 1) * 0.3, (n_z - 1) * 0.1
        vessels = (
            Vessel(0.30 * x_max, 0.35 * z_max, 0.30, 1.0),
            Vessel(0.60 * x_max, 0.50 * z_max, 0.45, 0.85),
            Vessel(0.45 * x_max, 0.28 * z_max, 0.25, 0.70),
        )
    pattern = make_vessel_pattern(vessels, n_x=n_x, n_z=n_z)
    clean = make_framestack(pattern, schedule)
    if snr_db is None:
        return clean
    return clean, add_gaussian_noise(clean, snr_db, seed)
