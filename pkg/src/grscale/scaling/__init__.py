"""Scaling-law evaluators and Huber/L-BFGS fitting."""

from .equations import FORMS, SIZE_NAMES, ScalingError, ScalingParams, eval_eq, huber
from .fit import (
    FitOptions,
    FitResult,
    ScalingPoint,
    fit,
    heldout_error,
    r_square,
    read_fit,
    read_points,
    write_fit,
    write_points,
)
from .fixtures import EQ4_FITS, HELDOUT_ERRORS, SID_FITS, sid_params
from .lbfgs import LbfgsResult, minimize, two_loop

__all__ = [name for name in dir() if not name.startswith("_")]
