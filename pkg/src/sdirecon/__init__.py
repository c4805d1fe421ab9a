"""Spectral deconvolution imaging: forward models, a closed-form HQS solver,
dense oracles and a toy spectral transformer denoiser."""

from .cube import (
    CubeError,
    FilterStack,
    FormatError,
    HsiCube,
    Measurement,
    NonFiniteError,
    OtfStack,
    PayloadLengthError,
    PsfStack,
    ShapeError,
    export_band_image,
    load_cube,
    save_cube,
)
from .denoisers import Denoiser, DenoiserKind
from .forward import (
    ApeSystem,
    CassiSystem,
    Encoding,
    NoiseSpec,
    SdiSystem,
    sdi_adjoint,
    sdi_forward,
)
from .metrics import psnr, sam, ssim
from .solver import (
    ParameterError,
    SolverParams,
    SolverState,
    estimate_params,
    initialize,
    run,
)
from .spectral import Conversion, FreqCube, psf_to_otf

__all__ = [
    "ApeSystem",
    "CassiSystem",
    "Conversion",
    "CubeError",
    "Denoiser",
    "DenoiserKind",
    "Encoding",
    "FilterStack",
    "FormatError",
    "FreqCube",
    "HsiCube",
    "Measurement",
    "NoiseSpec",
    "NonFiniteError",
    "OtfStack",
    "ParameterError",
    "PayloadLengthError",
    "PsfStack",
    "SdiSystem",
    "ShapeError",
    "SolverParams",
    "SolverState",
    "estimate_params",
    "export_band_image",
    "initialize",
    "load_cube",
    "psf_to_otf",
    "psnr",
    "run",
    "sam",
    "save_cube",
    "sdi_adjoint",
    "sdi_forward",
    "ssim",
]
