"""
Exception hierarchy for the AtomicLift toolkit.

Numerical modules raise these; the experiment agents catch per-trial failures,
log them and record them instead of aborting a sweep.
"""

from typing import Any, Dict, List, Optional


class AtomicLiftError(Exception):
    """Base class for all toolkit errors."""


class DomainError(AtomicLiftError, ValueError):
    """Argument outside the mathematical domain of an operation (range, shape, length)."""


class ConfigurationError(AtomicLiftError, ValueError):
    """Invalid or infeasible configuration (unknown subspace kind, infeasible separation)."""


class ConventionError(DomainError):
    """Invalid (N, indexing) pair, or an object that needs N = 4M+1 symmetric indexing."""


class DegenerateInputError(DomainError):
    """Input is (numerically) zero where a nonzero object is required."""


class SolverConvergenceError(AtomicLiftError):
    """
    The ADMM solver hit its iteration cap before meeting its stopping rule.

    Attributes:
        residuals: final residuals (primal, dual, constraint, gap)
        history: per-iteration records (iter, primal_res, dual_res, gap, rho)
    """

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None,
                 history: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.residuals = residuals or {}
        self.history = history or []


class InfeasibleInstanceError(SolverConvergenceError):
    """The residual plateaued: the data constraint looks unreachable."""
