"""Preconditioned locally minimal residual solvers for nonlinear Hermitian eigenproblems."""

from . import baselines, block, extraction, gallery, kernel, model, oracle
from .block import BplmrConfig, DeflationWindow, solve_block, sweep
from .errors import PlmrError
from .model import (
    NonlinearEigenproblem,
    rayleigh_functional,
    relative_residual,
    verify_definite_type,
)
from .precond import StabilizedPreconditioner
from .single import PlmrConfig, estimate_order, solve

__version__ = "0.1.0"

__all__ = [
    "BplmrConfig",
    "DeflationWindow",
    "NonlinearEigenproblem",
    "PlmrConfig",
    "PlmrError",
    "StabilizedPreconditioner",
    "baselines",
    "block",
    "estimate_order",
    "extraction",
    "gallery",
    "kernel",
    "model",
    "oracle",
    "rayleigh_functional",
    "relative_residual",
    "solve",
    "solve_block",
    "sweep",
    "verify_definite_type",
]
