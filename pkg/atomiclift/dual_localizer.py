"""
Dual localizer

Spike localization from the dual polynomial Q(tau) = X*(p)^H c(tau), rank-one
factorization of the lifted estimate, amplitude fitting and recovery scoring.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from atomiclift import trig_poly
from atomiclift.config import LocalizerOptions
from atomiclift.errors import DegenerateInputError, DomainError
from atomiclift.signal_model import (
    SHIFTED,
    IndexingConvention,
    ProblemInstance,
    SubspaceModel,
    complex_to_json,
    sample_indices,
    steering_matrix,
    wrap_distance,
)

# Cost for assignments outside the matching radius
_UNMATCHED_COST = 1e6


def dual_polynomial_coeffs(p: Sequence[complex], subspace: SubspaceModel) -> np.ndarray:
    """Rows conj(p_n) b_n, so that Q(tau) = (1/sqrt(N)) sum_n e^{-j2pi tau n} conj(p_n) b_n."""
    p = np.asarray(p, dtype=complex).reshape(-1)
    if p.size != subspace.N:
        raise DomainError(f"Dual vector length {p.size} != N={subspace.N}")
    return p.conj()[:, None] * subspace.B


def dual_polynomial_eval(p, subspace: SubspaceModel, tau, order: int = 0,
                         indexing: Union[str, IndexingConvention] = SHIFTED) -> np.ndarray:
    """
    Q(tau) or its order-th tau derivative (order 0..2).

    Returns a length-L vector for scalar tau, else an array of shape (len(tau), L).
    """
    if order < 0 or order > 2:
        raise DomainError(f"Derivative order must be in 0..2, got {order}")
    coeffs = dual_polynomial_coeffs(p, subspace)
    values = trig_poly.evaluate(coeffs, sample_indices(subspace.N, indexing), tau, order)[order]
    return values[0] if np.ndim(tau) == 0 else values


def dual_norm_profile(p, subspace: SubspaceModel, grid_size: int,
                      indexing: Union[str, IndexingConvention] = SHIFTED) -> Tuple[np.ndarray, np.ndarray]:
    """(tau, ||Q(tau)||_2) on a uniform grid."""
    coeffs = dual_polynomial_coeffs(p, subspace)
    return trig_poly.grid_norms(coeffs, int(sample_indices(subspace.N, indexing)[0]), grid_size)


@dataclass
class PeakSet:
    """Refined maxima of ||Q|| at or above the unit-level threshold."""

    delays: np.ndarray
    norms: np.ndarray
    max_norm: float
    warnings: List[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.delays.size == 0


def _merge_clusters(delays: np.ndarray, norms: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(delays)
    delays, norms = delays[order], norms[order]
    groups: List[List[int]] = []
    for i in range(delays.size):
        if groups and delays[i] - delays[groups[-1][-1]] < radius:
            groups[-1].append(i)
        else:
            groups.append([i])
    if len(groups) > 1 and delays[groups[0][0]] + 1.0 - delays[groups[-1][-1]] < radius:
        groups[0] = groups.pop() + groups[0]

    merged_delays, merged_norms = [], []
    for group in groups:
        anchor = delays[group[0]]
        offsets = np.mod(delays[group] - anchor + 0.5, 1.0) - 0.5
        weights = norms[group]
        merged_delays.append(np.mod(anchor + np.sum(weights * offsets) / np.sum(weights), 1.0))
        merged_norms.append(np.max(weights))
    order = np.argsort(merged_delays)
    return np.asarray(merged_delays)[order], np.asarray(merged_norms)[order]


def localize_peaks(p, subspace: SubspaceModel, options: Optional[LocalizerOptions] = None,
                   noisy: bool = False, indexing: Union[str, IndexingConvention] = SHIFTED) -> PeakSet:
    """
    Delays where ||Q(tau)||_2 reaches the unit level.

    Grid of grid_factor * N points, Newton refinement of each local maximum,
    threshold 1 - peak_tol, then maxima closer than cluster_radius_factor / N are
    merged to their norm-weighted centroid. An empty set is a valid outcome.
    """
    options = options or LocalizerOptions()
    N = subspace.N
    coeffs = dual_polynomial_coeffs(p, subspace)
    indices = sample_indices(N, indexing)
    taus, norms = trig_poly.grid_norms(coeffs, int(indices[0]), options.grid_factor * N)

    candidates = trig_poly.local_maxima(norms)
    if candidates.size == 0 or not np.any(coeffs):
        return PeakSet(np.empty(0), np.empty(0), float(norms.max(initial=0.0)))

    refined, refined_norms = trig_poly.refine_maxima(
        coeffs, indices, taus[candidates], options.newton_steps,
        max_step=1.0 / taus.size, tol=options.newton_tol)
    max_norm = float(max(refined_norms.max(), norms.max()))

    peaks = PeakSet(np.empty(0), np.empty(0), max_norm)
    if max_norm > 1.0 + 10.0 * options.tol_dual:
        message = f"Dual polynomial exceeds the unit level: max ||Q|| = {max_norm:.6f}"
        logging.warning(message)
        peaks.warnings.append(message)

    keep = refined_norms >= 1.0 - options.resolved_peak_tol(noisy)
    if np.any(keep):
        peaks.delays, peaks.norms = _merge_clusters(refined[keep], refined_norms[keep],
                                                    options.cluster_radius_factor / N)
    return peaks


def _rank1_with_gauge(Z_hat) -> Tuple[np.ndarray, np.ndarray, float, complex]:
    Z_hat = np.asarray(Z_hat, dtype=complex)
    if Z_hat.ndim != 2:
        raise DomainError(f"Expected a matrix, got shape {Z_hat.shape}")
    U, s, Vh = np.linalg.svd(Z_hat, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-14:
        raise DegenerateInputError("Cannot factorize a zero matrix")
    h = Vh[0]
    phase = np.exp(-1j * np.angle(h[np.argmax(np.abs(h))]))
    x_hat = s[0] * U[:, 0] / phase
    residual = float(s[1] / s[0]) if s.size > 1 else 0.0
    return x_hat, h * phase, residual, complex(phase)


def factorize_rank1(Z_hat) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Best rank-one factorization Z ~ x h^T.

    h is unit norm with its largest-modulus entry real positive; the complex
    scale is carried by x.

    Returns:
        (x_hat, h_hat, sigma_2 / sigma_1)

    Raises:
        DegenerateInputError: Z is (numerically) zero
    """
    x_hat, h_hat, residual, _ = _rank1_with_gauge(Z_hat)
    return x_hat, h_hat, residual


def _least_squares(A: np.ndarray, b: np.ndarray, cond_limit: float, what: str):
    cond = float(np.linalg.cond(A)) if A.size else 1.0
    coef, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    residual = float(np.linalg.norm(A @ coef - b) / max(np.linalg.norm(b), 1e-300))
    info = {"condition": cond, "residual": residual}
    if cond > cond_limit:
        message = f"{what} is ill-conditioned (condition number {cond:.3e})"
        logging.warning(message)
        info["warning"] = message
    return coef, info


def recover_amplitudes(x_hat, delays, indexing: Union[str, IndexingConvention] = SHIFTED,
                       cond_limit: float = 1e8) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Least-squares amplitudes for x_hat ~ sqrt(N) [c(tau_1) ... c(tau_K)] a.

    Returns:
        (amplitudes, info) with info holding the condition number and relative fit residual
    """
    x_hat = np.asarray(x_hat, dtype=complex).reshape(-1)
    delays = np.asarray(delays, dtype=float).reshape(-1)
    N = x_hat.size
    if delays.size > N:
        raise DomainError(f"Cannot fit {delays.size} amplitudes from {N} samples")
    if delays.size == 0:
        return np.empty(0, dtype=complex), {"condition": 1.0, "residual": 1.0}
    A = np.sqrt(N) * steering_matrix(delays, N, indexing)
    return _least_squares(A, x_hat, cond_limit, "Amplitude fit")


def refit_amplitudes_joint(y, subspace: SubspaceModel, h_hat, delays,
                           indexing: Union[str, IndexingConvention] = SHIFTED,
                           cond_limit: float = 1e8) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Amplitudes fitted directly to y ~ diag(B h_hat) sqrt(N) C a."""
    y = np.asarray(y, dtype=complex).reshape(-1)
    delays = np.asarray(delays, dtype=float).reshape(-1)
    N = subspace.N
    if delays.size == 0:
        return np.empty(0, dtype=complex), {"condition": 1.0, "residual": 1.0}
    g = subspace.B @ np.asarray(h_hat, dtype=complex)
    A = g[:, None] * np.sqrt(N) * steering_matrix(delays, N, indexing)
    return _least_squares(A, y, cond_limit, "Joint amplitude refit")


@dataclass
class LocalizationResult:
    """
    Localized spikes and the factorized lifted estimate.

    ``beta`` is the unit-modulus gauge factor applied to the leading right
    singular vector so that h_hat has a real positive dominant entry.
    """

    delays: np.ndarray
    peak_norms: np.ndarray
    amplitudes: np.ndarray
    h_hat: Optional[np.ndarray]
    beta: complex = 1.0 + 0.0j
    x_hat: Optional[np.ndarray] = None
    spectral_residual: Optional[float] = None
    max_dual_norm: float = 0.0
    fit: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.delays.size == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delays": self.delays.tolist(),
            "peak_norms": self.peak_norms.tolist(),
            "amplitudes": complex_to_json(self.amplitudes),
            "h_hat": complex_to_json(self.h_hat) if self.h_hat is not None else None,
            "beta": [float(np.real(self.beta)), float(np.imag(self.beta))],
            "spectral_residual": self.spectral_residual,
            "max_dual_norm": self.max_dual_norm,
            "empty": self.empty,
            "fit": {k: v for k, v in self.fit.items()},
            "warnings": list(self.warnings),
        }


def localize_solution(solution, instance: ProblemInstance,
                      options: Optional[LocalizerOptions] = None) -> LocalizationResult:
    """
    Full localization: peaks of Q, rank-one factorization, amplitude fit.

    Args:
        solution: LiftedSolution from solve_noiseless / solve_noisy
        instance: the solved instance
        options: localizer options; joint_refit switches the amplitude fit to y
    """
    options = options or LocalizerOptions()
    peaks = localize_peaks(solution.p, instance.subspace, options, noisy=instance.noisy,
                           indexing=instance.indexing)
    warnings = list(peaks.warnings)
    if solution.dual_feasible is False:
        warnings.append("Localization from a dual vector outside the unit dual ball")
    if peaks.empty:
        logging.info("No dual polynomial peaks reached the unit level")

    try:
        x_hat, h_hat, residual, beta = _rank1_with_gauge(solution.Z_hat)
    except DegenerateInputError:
        return LocalizationResult(peaks.delays, peaks.norms, np.zeros(peaks.delays.size, dtype=complex),
                                  None, max_dual_norm=peaks.max_norm,
                                  warnings=warnings + ["Lifted estimate is zero"])

    if options.joint_refit:
        amplitudes, fit = refit_amplitudes_joint(instance.y, instance.subspace, h_hat, peaks.delays,
                                                 instance.indexing, options.cond_limit)
    else:
        amplitudes, fit = recover_amplitudes(x_hat, peaks.delays, instance.indexing, options.cond_limit)
    if "warning" in fit:
        warnings.append(fit["warning"])
    return LocalizationResult(
        delays=peaks.delays, peak_norms=peaks.norms, amplitudes=amplitudes, h_hat=h_hat,
        beta=beta, x_hat=x_hat, spectral_residual=residual, max_dual_norm=peaks.max_norm,
        fit=fit, warnings=warnings)


@dataclass
class MatchReport:
    """One-to-one matching of true and estimated spikes within a radius."""

    pairs: List[Tuple[int, int]]
    delay_errors: np.ndarray
    amplitude_errors: np.ndarray
    beta: complex
    misses: List[int]
    false_alarms: List[int]

    @property
    def matched(self) -> int:
        return len(self.pairs)

    @property
    def max_delay_error(self) -> float:
        return float(self.delay_errors.max()) if self.delay_errors.size else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pairs": [list(pair) for pair in self.pairs],
            "delay_errors": self.delay_errors.tolist(),
            "amplitude_errors": self.amplitude_errors.tolist(),
            "beta": [float(np.real(self.beta)), float(np.imag(self.beta))],
            "misses": list(self.misses),
            "false_alarms": list(self.false_alarms),
        }


def _amplitudes_of(spikes) -> np.ndarray:
    amplitudes = getattr(spikes, "amplitudes", None)
    delays = np.asarray(spikes.delays)
    if amplitudes is None or np.size(amplitudes) != delays.size:
        return np.full(delays.size, np.nan + 0j)
    return np.asarray(amplitudes, dtype=complex)


def match_spikes(truth, estimate, radius: float) -> MatchReport:
    """
    Optimal assignment of estimated to true delays by wrap-around distance.

    Pairs farther apart than ``radius`` are unmatched. Amplitude errors are
    |beta a_hat - a| after the global complex scale beta = <a_hat, a> / ||a_hat||^2
    over matched pairs.

    Args:
        truth: SpikeSignal (or anything with delays / amplitudes)
        estimate: LocalizationResult or SpikeSignal
        radius: matching radius, typically 0.5 / N
    """
    if radius <= 0:
        raise DomainError(f"Matching radius must be positive, got {radius}")
    t_delays = np.asarray(truth.delays, dtype=float)
    e_delays = np.asarray(estimate.delays, dtype=float)
    pairs: List[Tuple[int, int]] = []
    if t_delays.size and e_delays.size:
        cost = wrap_distance(t_delays[:, None], e_delays[None, :])
        rows, cols = linear_sum_assignment(np.where(cost <= radius, cost, _UNMATCHED_COST))
        pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] <= radius]

    t_idx = np.array([r for r, _ in pairs], dtype=int)
    e_idx = np.array([c for _, c in pairs], dtype=int)
    delay_errors = wrap_distance(t_delays[t_idx], e_delays[e_idx]) if pairs else np.empty(0)

    a_true = _amplitudes_of(truth)[t_idx]
    a_est = _amplitudes_of(estimate)[e_idx]
    beta = 1.0 + 0.0j
    amplitude_errors = np.full(len(pairs), np.nan)
    if pairs and np.all(np.isfinite(a_est)) and np.all(np.isfinite(a_true)):
        energy = np.vdot(a_est, a_est).real
        if energy > 0:
            beta = complex(np.vdot(a_est, a_true) / energy)
        amplitude_errors = np.abs(beta * a_est - a_true)

    return MatchReport(
        pairs=pairs,
        delay_errors=delay_errors,
        amplitude_errors=amplitude_errors,
        beta=beta,
        misses=sorted(set(range(t_delays.size)) - set(t_idx.tolist())),
        false_alarms=sorted(set(range(e_delays.size)) - set(e_idx.tolist())),
    )


def normalized_error(Z_hat, Z_star) -> float:
    """||Z_hat - Z_star||_F / ||Z_star||_F."""
    Z_hat = np.asarray(Z_hat, dtype=complex)
    Z_star = np.asarray(Z_star, dtype=complex)
    if Z_hat.shape != Z_star.shape:
        raise DomainError(f"Shape mismatch {Z_hat.shape} vs {Z_star.shape}")
    reference = np.linalg.norm(Z_star)
    if reference == 0:
        raise DomainError("Normalized error is undefined for a zero reference")
    return float(np.linalg.norm(Z_hat - Z_star) / reference)
