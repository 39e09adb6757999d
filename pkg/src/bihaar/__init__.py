"""Poisson count denoising by Haar-calibrated hypothesis tests on Bi-Haar wavelet coefficients."""

from .analysis import bound_A, bound_B, p_bihaar_exact, p_haar, verify_prop1
from .denoise import DenoiseConfig, DenoiseReport, denoise
from .errors import DomainError, ParseError, SizeError, StructureError
from .thresholds import ThresholdSpec, cltb_threshold, fab_threshold
from .transforms import (bihaar_bank, forward_1d, forward_2d, forward_2d1d, forward_ti,
                         haar_bank, inverse_1d, inverse_2d, inverse_2d1d, inverse_ti)

__version__ = "0.1.0"
