"""Spatiotemporal SVD denoising for low-fluence photoacoustic frame stacks.

The toolkit operates on stacks of 2-D RF frames (channels x axial samples
over time), reshapes them into a Casorati matrix, and separates the
quasi-static tissue subspace from spatiotemporally incoherent noise with a
randomized low-rank factorization. Frame averaging and per-frame wavelet
shrinkage are included as baselines, together with the image-quality
metrics and synthetic phantoms used to compare them.
"""

__version__ = "0.1.0"

from .errors import ValidationError
from .framestack import FrameStack, load_framestack, save_framestack
from .svdcore import full_svd, rsvd_denoise, rsvd_factors
from .rankselect import estimate_rank_spatial, estimate_rank_temporal

__all__ = [
    "FrameStack",
    "ValidationError",
    "__version__",
    "estimate_rank_spatial",
    "estimate_rank_temporal",
    "full_svd",
    "load_framestack",
    "rsvd_denoise",
    "rsvd_factors",
    "save_framestack",
]
