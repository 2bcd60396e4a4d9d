"""Multi-channel pixel super-resolution for fluorescence lifetime imaging.

Six-channel FLIM rasters (three lifetime + three intensity bands) are
degraded by k x k block averaging and reconstructed by either a conditional
GAN or a Brownian-bridge diffusion baseline.  The package covers the whole
desk-scale loop: synthetic phantoms, the FLIMB container format, the
preprocessing contract, both models, and the quantitative evaluation
protocol (MSE / PSNR / SSIM, radial power spectra, paired t-tests).
"""

from .flimb import ChannelDesc, FlimImage, FlimbError, read_flimb, write_flimb
from .phantom import DatasetSplit, PatientRecord, PhantomSpec, generate_phantom, split_patients
from .preprocess import (
    ClipStats,
    NormStats,
    PairedPatch,
    Patch,
    bilinear_resize,
    block_average,
    clip_percentile,
    minmax_normalize,
    tile_patches,
)

__all__ = [
    "ChannelDesc",
    "FlimImage",
    "FlimbError",
    "read_flimb",
    "write_flimb",
    "PatientRecord",
    "DatasetSplit",
    "PhantomSpec",
    "generate_phantom",
    "split_patients",
    "ClipStats",
    "NormStats",
    "Patch",
    "PairedPatch",
    "block_average",
    "clip_percentile",
    "minmax_normalize",
    "tile_patches",
    "bilinear_resize",
]

__version__ = "0.1.0"
