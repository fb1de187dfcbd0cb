"""
Certificate lab

Numerical construction of the vector-valued dual certificate

    Q(tau) = sum_k K(tau - tau_k) alpha_k + sum_k K'(tau - tau_k) beta_k

built from the squared Fejer kernel weighted by the subspace rows,
K(tau) = (1/M) sum_n s_n b_n b_n^H e^{-j 2 pi tau n}, on the symmetric grid
n = -2M..2M (N = 4M + 1). Coefficients come from the interpolation system
Q(tau_k) = conj(sign(a_k) h), Q'(tau_k) = 0; the result is then validated on a
dense grid. With L = 1 and b_n = 1 everything reduces to the scalar kernel and
the scalar certificate.

Failures under violated assumptions are reported, not raised.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from atomiclift import trig_poly
from atomiclift.config import CertificateOptions
from atomiclift.errors import ConventionError, DomainError
from atomiclift.signal_model import SubspaceModel, as_rng, sample_subspace, wrap_distance


@dataclass(frozen=True, eq=False)
class FejerTable:
    """Squared Fejer coefficients s_n, n = -2M..2M, and kappa = 1/sqrt(|K''(0)|)."""

    M: int
    n: np.ndarray
    s: np.ndarray
    kappa: float

    @property
    def N(self) -> int:
        return 4 * self.M + 1


def fejer_coeffs(M: int) -> FejerTable:
    """s_n = (1/M) sum_i (1 - |i/M|)(1 - |(n - i)/M|), a self-convolution of the triangle."""
    if M < 1:
        raise DomainError(f"Fejer kernel needs M >= 1, got {M}")
    triangle = 1.0 - np.abs(np.arange(-M, M + 1)) / M
    s = np.convolve(triangle, triangle) / M
    n = np.arange(-2 * M, 2 * M + 1)
    second = np.sum(s * (-2j * np.pi * n) ** 2).real / M
    table = FejerTable(M=M, n=n, s=s, kappa=float(1.0 / np.sqrt(abs(second))))
    table.n.setflags(write=False)
    table.s.setflags(write=False)
    return table


def _check_order(m: int, highest: int = 3) -> None:
    if m < 0 or m > highest:
        raise DomainError(f"Derivative order must be in 0..{highest}, got {m}")


def _kernel_weights(table: FejerTable, m: int) -> np.ndarray:
    return table.s * (-2j * np.pi * table.n) ** m / table.M


def kernel_eval(table: FejerTable, m: int, tau):
    """K^(m)(tau) = (1/M) sum_n s_n (-j 2 pi n)^m e^{-j 2 pi tau n}."""
    _check_order(m)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    values = np.exp(-2j * np.pi * np.outer(tau_arr, table.n)) @ _kernel_weights(table, m)
    return complex(values[0]) if np.ndim(tau) == 0 else values


def _check_subspace(table: FejerTable, subspace: SubspaceModel) -> None:
    if subspace.N != table.N:
        raise ConventionError(f"Certificate objects need N = 4M + 1 = {table.N} rows, got {subspace.N}")


def matrix_kernel_eval(table: FejerTable, subspace: SubspaceModel, m: int, tau) -> np.ndarray:
    """(1/M) sum_n s_n (-j 2 pi n)^m e^{-j 2 pi tau n} b_n b_n^H, an L x L matrix (or stack)."""
    _check_order(m)
    _check_subspace(table, subspace)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    weights = np.exp(-2j * np.pi * np.outer(tau_arr, table.n)) * _kernel_weights(table, m)
    B = subspace.B
    values = np.einsum("tn,ni,nl->til", weights, B, B.conj())
    return values[0] if np.ndim(tau) == 0 else values


def ones_subspace(M: int) -> SubspaceModel:
    """L = 1 subspace with b_n = 1; reduces every object to its scalar counterpart."""
    return SubspaceModel(np.ones((4 * M + 1, 1), dtype=complex), kind="explicit",
                         coherence=1.0, coherence_is_deterministic=True)


def _nu_vectors(table: FejerTable, support: np.ndarray) -> np.ndarray:
    """Rows nu_n = [e^{-j2pi tau_k n}]_k ++ [(j 2 pi n kappa) e^{-j2pi tau_k n}]_k."""
    phases = np.exp(-2j * np.pi * np.outer(table.n, support))
    return np.hstack([phases, (2j * np.pi * table.kappa * table.n)[:, None] * phases])


def _block_matrix(kernels: List[np.ndarray], kappa: float) -> np.ndarray:
    """Assemble [[K, kappa K'], [-kappa K', -kappa^2 K'']] from (K, K, d, d) kernel tables."""
    K0, K1, K2 = kernels
    K, _, d, _ = K0.shape

    def flat(block):
        return block.transpose(0, 2, 1, 3).reshape(K * d, K * d)

    return np.block([[flat(K0), kappa * flat(K1)], [-kappa * flat(K1), -kappa ** 2 * flat(K2)]])


def build_phi(table: FejerTable, support: Sequence[float], route: str = "blocks") -> np.ndarray:
    """
    2K x 2K matrix Phi of the scalar interpolation system.

    route 'blocks' assembles kernel values; route 'outer' sums (1/M) s_n nu_n nu_n^H.
    """
    support = _check_support(support)
    if route == "outer":
        nu = _nu_vectors(table, support)
        return (nu.T * (table.s / table.M)) @ nu.conj()
    diffs = np.subtract.outer(support, support)
    kernels = [kernel_eval(table, m, diffs.reshape(-1)).reshape(diffs.shape)[:, :, None, None]
               for m in range(3)]
    return _block_matrix(kernels, table.kappa)


def build_gamma(table: FejerTable, subspace: SubspaceModel, support: Sequence[float],
                route: str = "blocks") -> np.ndarray:
    """
    2LK x 2LK matrix Gamma, ordered nu-major then subspace coordinate.

    route 'blocks' assembles matrix kernels; route 'outer' sums
    (1/M) s_n (nu_n kron b_n)(nu_n kron b_n)^H.
    """
    _check_subspace(table, subspace)
    support = _check_support(support)
    if route == "outer":
        nu = _nu_vectors(table, support)
        V = (nu[:, :, None] * subspace.B[:, None, :]).reshape(table.N, -1)
        return (V.T * (table.s / table.M)) @ V.conj()
    diffs = np.subtract.outer(support, support)
    K = support.size
    kernels = [matrix_kernel_eval(table, subspace, m, diffs.reshape(-1)).reshape(K, K, subspace.L, subspace.L)
               for m in range(3)]
    return _block_matrix(kernels, table.kappa)


def phi_bound_report(table: FejerTable, support: Sequence[float]) -> Dict[str, float]:
    """Spectral norms ||I - Phi||, ||Phi||, ||Phi^-1||."""
    phi = build_phi(table, support)
    eigvals = scipy.linalg.eigvalsh(phi)
    return {
        "identity_gap": float(np.max(np.abs(1.0 - eigvals))),
        "norm": float(np.max(np.abs(eigvals))),
        "inverse_norm": float(1.0 / np.min(np.abs(eigvals))),
    }


def _check_support(support: Sequence[float]) -> np.ndarray:
    support = np.asarray(support, dtype=float).reshape(-1)
    if support.size == 0:
        raise DomainError("Certificate needs at least one spike")
    if np.unique(support).size != support.size:
        raise DomainError("Support delays must be distinct")
    return support


@dataclass
class CoefficientSolution:
    alpha: np.ndarray
    beta: np.ndarray
    condition: float
    residual: float
    well_conditioned: bool


def interpolation_targets(signs: Sequence[complex], h: Sequence[complex]) -> np.ndarray:
    """K x L targets conj(sign_k h) for Q(tau_k)."""
    signs = np.asarray(signs, dtype=complex).reshape(-1)
    h = np.asarray(h, dtype=complex).reshape(-1)
    return np.conj(np.outer(signs, h))


def solve_coefficients(gamma: np.ndarray, signs: Sequence[complex], h: Sequence[complex],
                       kappa: float, cond_limit: float = 1e10) -> CoefficientSolution:
    """
    Solve Gamma [alpha; beta / kappa] = [conj(sign h); 0].

    Returned beta is unscaled, i.e. the coefficient of K'(tau - tau_k) in Q.
    An ill-conditioned Gamma is flagged, not raised.
    """
    targets = interpolation_targets(signs, h)
    K, L = targets.shape
    if gamma.shape != (2 * K * L, 2 * K * L):
        raise DomainError(f"Gamma shape {gamma.shape} does not match K={K}, L={L}")
    rhs = np.concatenate([targets.reshape(-1), np.zeros(K * L, dtype=complex)])
    condition = float(np.linalg.cond(gamma))
    well_conditioned = condition < cond_limit
    if well_conditioned:
        v = scipy.linalg.solve(gamma, rhs, assume_a="her")
    else:
        logging.warning(f"Gamma is ill-conditioned (condition number {condition:.3e})")
        v = np.linalg.lstsq(gamma, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(gamma @ v - rhs) / np.linalg.norm(rhs))
    alpha = v[:K * L].reshape(K, L)
    beta = kappa * v[K * L:].reshape(K, L)
    return CoefficientSolution(alpha, beta, condition, residual, well_conditioned)


@dataclass
class CertificateWorkspace:
    """Everything needed to evaluate and validate one certificate."""

    table: FejerTable
    subspace: SubspaceModel
    support: np.ndarray
    signs: np.ndarray
    h: np.ndarray
    h_norm: float
    gamma: np.ndarray
    phi: np.ndarray
    coefficients: CoefficientSolution

    @property
    def alpha(self) -> np.ndarray:
        return self.coefficients.alpha

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients.beta

    @property
    def targets(self) -> np.ndarray:
        return interpolation_targets(self.signs, self.h)


def build_workspace(M: int, support: Sequence[float], signs: Optional[Sequence[complex]] = None,
                    h: Optional[Sequence[complex]] = None, subspace: Optional[SubspaceModel] = None,
                    options: Optional[CertificateOptions] = None) -> CertificateWorkspace:
    """
    Construct and solve a certificate.

    Args:
        M: kernel half-degree; the grid has N = 4M + 1 samples
        support: spike delays
        signs: sign(a_k), unit modulus; all ones by default
        h: PSF coefficients, normalized to unit norm here; [1] by default
        subspace: N x L subspace; the L = 1 all-ones subspace by default
    """
    options = options or CertificateOptions()
    table = fejer_coeffs(M)
    subspace = subspace or ones_subspace(M)
    _check_subspace(table, subspace)
    support = _check_support(support)
    K = support.size
    signs = np.ones(K, dtype=complex) if signs is None else np.asarray(signs, dtype=complex).reshape(-1)
    if signs.size != K:
        raise DomainError(f"{signs.size} signs for {K} spikes")
    signs = signs / np.abs(signs)
    h = np.ones(subspace.L, dtype=complex) if h is None else np.asarray(h, dtype=complex).reshape(-1)
    if h.size != subspace.L:
        raise DomainError(f"h has length {h.size}, subspace has L={subspace.L}")
    h_norm = float(np.linalg.norm(h))
    if h_norm == 0:
        raise DomainError("h must be nonzero")

    gamma = build_gamma(table, subspace, support)
    coefficients = solve_coefficients(gamma, signs, h / h_norm, table.kappa, options.cond_limit)
    return CertificateWorkspace(table=table, subspace=subspace, support=support, signs=signs,
                                h=h / h_norm, h_norm=h_norm, gamma=gamma,
                                phi=build_phi(table, support), coefficients=coefficients)


def _certificate_weights(ws: CertificateWorkspace, m: int) -> np.ndarray:
    """Per-sample scalars w_n so that Q^(m)(tau) = sum_n w_n e^{-j2pi tau n} b_n."""
    table = ws.table
    B_conj = ws.subspace.B.conj()
    shift = np.exp(2j * np.pi * np.outer(table.n, ws.support))
    alpha_proj = np.sum(shift * (B_conj @ ws.alpha.T), axis=1)
    beta_proj = np.sum(shift * (B_conj @ ws.beta.T), axis=1)
    factor = -2j * np.pi * table.n
    return table.s / table.M * (factor ** m * alpha_proj + factor ** (m + 1) * beta_proj)


def certificate_eval(ws: CertificateWorkspace, m: int, tau) -> np.ndarray:
    """
    Q^(m)(tau) = sum_k K^(m)(tau - tau_k) alpha_k + K^(m+1)(tau - tau_k) beta_k, m in 0..2.

    Length-L vector for scalar tau, else shape (len(tau), L).
    """
    _check_order(m, highest=2)
    weights = _certificate_weights(ws, m)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    values = (np.exp(-2j * np.pi * np.outer(tau_arr, ws.table.n)) * weights) @ ws.subspace.B
    return values[0] if np.ndim(tau) == 0 else values


def implied_dual_vector(ws: CertificateWorkspace) -> np.ndarray:
    """
    q with Q(tau) = X*(q)^H c(tau) on the symmetric grid.

    conj(q_n) = sqrt(N) (s_n / M) sum_k e^{j2pi tau_k n} b_n^H (alpha_k - j 2 pi n beta_k).
    """
    return np.conj(np.sqrt(ws.table.N) * _certificate_weights(ws, 0))


@dataclass
class ValidationReport:
    """Outcome of checking a certificate on a dense grid."""

    passed: bool
    interpolation_residual: float
    solve_residual: float
    condition: float
    off_support_max: float
    off_support_argmax: float
    far_region_max: float
    near_decay_constants: List[float]
    near_concavity_max: List[float]
    spike_curvature: List[float]
    grid_size: int
    reason: str = ""
    profile: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "interpolation_residual": self.interpolation_residual,
            "solve_residual": self.solve_residual,
            "condition": self.condition,
            "off_support_max": self.off_support_max,
            "off_support_argmax": self.off_support_argmax,
            "far_region_max": self.far_region_max,
            "near_decay_constants": list(self.near_decay_constants),
            "near_concavity_max": list(self.near_concavity_max),
            "spike_curvature": list(self.spike_curvature),
            "grid_size": self.grid_size,
            "reason": self.reason,
        }


def validate_certificate(ws: CertificateWorkspace, options: Optional[CertificateOptions] = None,
                         keep_profile: bool = False) -> ValidationReport:
    """
    Check the interpolation conditions and ||Q|| < 1 away from the support.

    The grid is uniform (grid_size points) plus near_points points across each
    near region |tau - tau_k| <= near_radius / M. Points within
    spike_exclusion / M of a spike are not counted as off-support; there the
    certificate must instead have negative curvature of ||Q||^2 at the spike
    itself. Grid local maxima are refined by Newton steps on ||Q||^2. Decay constants C_b are fitted
    by least squares of 1 - ||Q|| against M^2 (tau - tau_k)^2 in each near region.
    """
    options = options or CertificateOptions()
    table, M = ws.table, ws.table.M
    coeffs = np.conj(implied_dual_vector(ws))[:, None] * ws.subspace.B

    values = certificate_eval(ws, 0, ws.support)
    slopes = certificate_eval(ws, 1, ws.support)
    interpolation_residual = float(max(np.max(np.linalg.norm(values - ws.targets, axis=1)),
                                       table.kappa * np.max(np.linalg.norm(slopes, axis=1))))
    bends = certificate_eval(ws, 2, ws.support)
    # d^2/dtau^2 ||Q||^2 at each spike, in units of M^2
    curvature = ((2.0 * np.real(np.sum(bends.conj() * values, axis=1))
                  + 2.0 * np.sum(np.abs(slopes) ** 2, axis=1)) / M ** 2).tolist()

    taus, norms = trig_poly.grid_norms(coeffs, int(table.n[0]), options.grid_size)
    near_radius = options.near_radius / M
    exclusion = options.spike_exclusion / M

    offsets = np.linspace(-near_radius, near_radius, options.near_points)
    near_taus = np.mod(ws.support[:, None] + offsets[None, :], 1.0)
    near_derivs = trig_poly.evaluate(coeffs, table.n, near_taus.reshape(-1), order=2)
    near_norms = np.linalg.norm(near_derivs[0], axis=1).reshape(near_taus.shape)

    candidates = trig_poly.local_maxima(norms)
    refined, refined_norms = trig_poly.refine_maxima(coeffs, table.n, taus[candidates],
                                                     options.newton_steps, max_step=1.0 / taus.size)

    def distance_to_support(points):
        return np.min(wrap_distance(np.asarray(points)[:, None], ws.support[None, :]), axis=1)

    pool_taus = np.concatenate([taus, near_taus.reshape(-1), refined])
    pool_norms = np.concatenate([norms, near_norms.reshape(-1), refined_norms])
    distance = distance_to_support(pool_taus)
    off = distance > exclusion
    far = distance >= near_radius
    off_idx = int(np.argmax(np.where(off, pool_norms, -np.inf)))
    off_support_max = float(pool_norms[off_idx]) if np.any(off) else 0.0
    far_region_max = float(np.max(pool_norms[far])) if np.any(far) else 0.0

    x = (M * offsets) ** 2
    keep = np.abs(offsets) > exclusion
    decay = [float(np.sum(x[keep] * (1.0 - row[keep])) / np.sum(x[keep] ** 2)) for row in near_norms]
    second = 2.0 * np.real(np.sum(near_derivs[2].conj() * near_derivs[0], axis=1)) \
        + 2.0 * np.sum(np.abs(near_derivs[1]) ** 2, axis=1)
    concavity = second.reshape(near_taus.shape).max(axis=1).tolist()

    reasons = []
    if not ws.coefficients.well_conditioned:
        reasons.append(f"ill-conditioned Gamma ({ws.coefficients.condition:.2e})")
    if off_support_max >= 1.0:
        reasons.append(f"off-support max {off_support_max:.6f} >= 1")
    if interpolation_residual >= options.residual_tol:
        reasons.append(f"interpolation residual {interpolation_residual:.2e}")
    if max(curvature) >= 0.0:
        reasons.append(f"||Q||^2 not concave at spike {int(np.argmax(curvature))}")
    passed = not reasons

    report = ValidationReport(
        passed=passed,
        interpolation_residual=interpolation_residual,
        solve_residual=ws.coefficients.residual,
        condition=ws.coefficients.condition,
        off_support_max=off_support_max,
        off_support_argmax=float(pool_taus[off_idx]),
        far_region_max=far_region_max,
        near_decay_constants=decay,
        near_concavity_max=concavity,
        spike_curvature=curvature,
        grid_size=int(taus.size),
        reason="; ".join(reasons),
        profile=(taus, norms) if keep_profile else None,
    )
    if not passed:
        logging.warning(f"Certificate failed: {report.reason}")
    return report


def gamma_concentration_stats(table: FejerTable, subspace_kind: str, support: Sequence[float], L: int,
                              trials: int, seed=None) -> Dict[str, Any]:
    """
    Spectral-norm deviations ||Gamma - Phi kron I_L|| over random subspace draws.

    Returns:
        dict with per-trial deviations and their median / 95th percentile / max
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    support = _check_support(support)
    if subspace_kind == "ones" and L != 1:
        raise DomainError("The all-ones subspace is only defined for L = 1")
    mean_gamma = np.kron(build_phi(table, support), np.eye(L))
    rng = as_rng(seed)
    deviations = []
    for _ in range(trials):
        if subspace_kind == "ones":
            subspace = ones_subspace(table.M)
        else:
            subspace = sample_subspace(subspace_kind, table.N, L, rng)
        gamma = build_gamma(table, subspace, support)
        deviations.append(float(np.linalg.norm(gamma - mean_gamma, 2)))
    deviations = np.asarray(deviations)
    return {
        "M": table.M,
        "L": L,
        "K": int(support.size),
        "trials": trials,
        "deviations": deviations.tolist(),
        "median": float(np.median(deviations)),
        "p95": float(np.quantile(deviations, 0.95)),
        "max": float(deviations.max()),
    }
