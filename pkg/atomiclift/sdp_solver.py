"""
Atomic norm SDP solver

Solves

    minimize    1/2 Tr(Toep(u)) + 1/2 Tr(W)
    subject to  [[Toep(u), Z], [Z^H, W]] >= 0

with Z either fixed (atomic norm of a given matrix), constrained to the data
X(Z) = y (noiseless recovery) or to the ball ||y - X(Z)|| <= eps (noisy
recovery).

The solver is ADMM on the splitting {structured block Psi(u, W, Z)} = {PSD
matrix S}. The structure step is closed form: Toeplitz diagonal averaging for
u, a shift for W, and a row-separable projection for Z because each
measurement touches one row of Z. The PSD step is a Hermitian
eigendecomposition with clipped eigenvalues.

At a fixed point the off-diagonal block of the multiplier equals -X*(p)/2,
which gives the dual vector p of the data constraint.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from atomiclift import trig_poly
from atomiclift.config import SolverOptions
from atomiclift.errors import DomainError, InfeasibleInstanceError, SolverConvergenceError
from atomiclift.lifting import lift_adjoint, lift_forward
from atomiclift.signal_model import SHIFTED, ProblemInstance, sample_indices

def toeplitz_hermitian(u: np.ndarray) -> np.ndarray:
    """Toep(u) with entry (i, j) = u_{i-j} and u_{-k} = conj(u_k)."""
    u = np.asarray(u, dtype=complex).copy()
    u[0] = u[0].real
    return scipy.linalg.toeplitz(u, u.conj())


class _ToeplitzAverager:
    """Least-squares fit of a Hermitian Toeplitz matrix to an N x N block."""

    def __init__(self, N: int):
        self.N = N
        offsets = np.subtract.outer(np.arange(N), np.arange(N)).reshape(-1)
        self.lower = np.flatnonzero(offsets >= 0)
        self.lower_k = offsets[self.lower]
        self.upper = np.flatnonzero(offsets < 0)
        self.upper_k = -offsets[self.upper]
        self.counts = (N - np.arange(N)).astype(float)

    def _diagonal_sums(self, flat: np.ndarray, positions: np.ndarray, k: np.ndarray) -> np.ndarray:
        re = np.bincount(k, weights=flat.real[positions], minlength=self.N)
        im = np.bincount(k, weights=flat.imag[positions], minlength=self.N)
        return re + 1j * im

    def __call__(self, G: np.ndarray) -> np.ndarray:
        flat = G.reshape(-1)
        low = self._diagonal_sums(flat, self.lower, self.lower_k)
        up = self._diagonal_sums(flat, self.upper, self.upper_k)
        u = (low + up.conj()) / (2.0 * self.counts)
        u[0] = low[0].real / self.N
        return u


def toeplitz_adjoint_average(G: np.ndarray, N: Optional[int] = None) -> np.ndarray:
    """
    First column u of the Hermitian Toeplitz matrix closest to G in Frobenius norm.

    u_k averages the k-th subdiagonal of G and the conjugated k-th superdiagonal.
    """
    G = np.asarray(G, dtype=complex)
    N = N or G.shape[0]
    if G.shape != (N, N):
        raise DomainError(f"Expected a {N}x{N} block, got {G.shape}")
    return _ToeplitzAverager(N)(G)


@dataclass
class SdpBlock:
    """Variables of the atomic norm SDP."""

    u: np.ndarray
    W: np.ndarray
    Z: np.ndarray

    def toeplitz(self) -> np.ndarray:
        return toeplitz_hermitian(self.u)

    def matrix(self) -> np.ndarray:
        return np.block([[self.toeplitz(), self.Z], [self.Z.conj().T, self.W]])

    def objective(self) -> float:
        return 0.5 * self.u.size * float(self.u[0].real) + 0.5 * float(np.trace(self.W).real)

    def min_eigenvalue(self) -> float:
        return float(scipy.linalg.eigvalsh(self.matrix())[0])


@dataclass
class LiftedSolution:
    """
    Result of an atomic norm solve.

    ``p`` is the dual vector of the data constraint (zeros for a fixed-Z solve),
    ``dual_matrix`` the matching norming functional Y, X*(p) for lifted solves.
    """

    Z_hat: np.ndarray
    objective: float
    p: np.ndarray
    block: Optional[SdpBlock]
    dual_matrix: np.ndarray
    dual_objective: float
    residuals: Dict[str, float]
    iterations: int
    converged: bool
    rho: float = 1.0
    history: List[Tuple[int, float, float, float, float]] = field(default_factory=list, repr=False)
    dual_norm: Optional[float] = None
    dual_feasible: Optional[bool] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    def summary(self) -> Dict[str, Any]:
        return {
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "rho": self.rho,
            "residuals": dict(self.residuals),
            "dual_norm": self.dual_norm,
            "dual_feasible": self.dual_feasible,
            "warnings": list(self.warnings),
        }


class AdmmSolver:
    """
    ADMM for the atomic norm SDP of an N x L matrix.

    One instance owns its workspace and is not shared between threads.
    """

    def __init__(self, N: int, L: int, options: Optional[SolverOptions] = None):
        self.N = N
        self.L = L
        self.options = options or SolverOptions()
        self._averager = _ToeplitzAverager(N)
        self._eye_L = np.eye(L)

    # structure step ------------------------------------------------------

    def _structure(self, G: np.ndarray, rho: float, project_z):
        N = self.N
        G = 0.5 * (G + G.conj().T)
        u = self._averager(G[:N, :N])
        u[0] -= 1.0 / (2.0 * rho)
        W = G[N:, N:] - self._eye_L / (2.0 * rho)
        Z0 = 0.5 * (G[:N, N:] + G[N:, :N].conj().T)
        Z, d = project_z(Z0, rho)
        return SdpBlock(u, 0.5 * (W + W.conj().T), Z), d

    @staticmethod
    def _assemble(block: SdpBlock, out: np.ndarray) -> np.ndarray:
        N = block.u.size
        out[:N, :N] = toeplitz_hermitian(block.u)
        out[:N, N:] = block.Z
        out[N:, :N] = block.Z.conj().T
        out[N:, N:] = block.W
        return out

    @staticmethod
    def _project_psd(A: np.ndarray) -> np.ndarray:
        eigvals, eigvecs = scipy.linalg.eigh(A)
        positive = np.maximum(eigvals, 0.0)
        return (eigvecs * positive) @ eigvecs.conj().T

    # main loop -----------------------------------------------------------

    def run(self, project_z, dual_objective, Z_start: np.ndarray) -> Dict[str, Any]:
        """
        Iterate until the stopping rule or the iteration cap.

        Args:
            project_z: (Z0, rho) -> (Z, d), Euclidean projection onto the Z constraint
                and the row multipliers d (None when Z is fixed)
            dual_objective: (Lambda, d, rho, block) -> (dual value, dual variable)
            Z_start: starting Z used to build a feasible PSD starting point

        Returns:
            raw state: block, Lambda, p, residuals, iterations, converged, plateau, history
        """
        opts = self.options
        N, L = self.N, self.L
        dim = N + L
        scale = max(np.linalg.norm(Z_start), 1.0)
        u_start = np.zeros(N, dtype=complex)
        u_start[0] = scale
        start = SdpBlock(u_start, scale * self._eye_L.astype(complex), Z_start)
        S = self._assemble(start, np.empty((dim, dim), dtype=complex))
        Psi = S.copy()
        Psi_prev = S.copy()
        Lam = np.zeros((dim, dim), dtype=complex)
        rho = opts.rho_init
        history: List[Tuple[int, float, float, float, float]] = []
        block = start
        p = np.zeros(N, dtype=complex)
        primal = dual = gap = np.inf
        converged = False
        iteration = 0

        for iteration in range(1, opts.max_iterations + 1):
            block, d = self._structure(S + Lam / rho, rho, project_z)
            self._assemble(block, Psi)
            S = self._project_psd(Psi - Lam / rho)
            Lam += rho * (S - Psi)
            Lam = 0.5 * (Lam + Lam.conj().T)

            objective = block.objective()
            dual_value, p = dual_objective(Lam, d, rho, block)
            primal = np.linalg.norm(S - Psi) / max(np.linalg.norm(S), np.linalg.norm(Psi), 1e-300)
            dual = rho * np.linalg.norm(Psi - Psi_prev) / max(np.linalg.norm(Lam), 1e-300)
            gap = abs(objective - dual_value) / (1.0 + abs(objective))
            history.append((iteration, float(primal), float(dual), float(gap), float(rho)))
            Psi_prev[...] = Psi

            if primal < opts.tol_primal and dual < opts.tol_dual_residual and gap < opts.tol_gap_stop:
                converged = True
                break

            if iteration % opts.rho_update_interval == 0:
                if primal > opts.rho_balance_ratio * dual:
                    rho *= opts.rho_scale
                elif dual > opts.rho_balance_ratio * primal:
                    rho /= opts.rho_scale

            if iteration % 1000 == 0:
                logging.debug(f"ADMM iter {iteration}: primal={primal:.2e} dual={dual:.2e} "
                              f"gap={gap:.2e} rho={rho:.3g}")

        plateau = False
        if not converged and len(history) > opts.plateau_window:
            recent = min(h[1] for h in history[-opts.plateau_window:])
            earlier = min(h[1] for h in history[:-opts.plateau_window])
            plateau = primal > 100.0 * opts.tol_primal and recent > 0.9 * earlier

        return {
            "block": block,
            "Lambda": Lam,
            "p": p,
            "residuals": {"primal": float(primal), "dual": float(dual), "gap": float(gap)},
            "iterations": iteration,
            "converged": converged,
            "plateau": plateau,
            "rho": rho,
            "history": history,
        }


def _finish(state: Dict[str, Any], options: SolverOptions, scale: float, Z: np.ndarray,
            p: np.ndarray, dual_matrix: np.ndarray, dual_value: float, what: str) -> LiftedSolution:
    block: SdpBlock = state["block"]
    block = SdpBlock(block.u * scale, block.W * scale, Z)
    residuals = dict(state["residuals"])
    trace = float(np.trace(block.toeplitz()).real + np.trace(block.W).real)
    residuals["psd"] = max(0.0, -block.min_eigenvalue()) / (1.0 + trace)

    solution = LiftedSolution(
        Z_hat=Z,
        objective=block.objective(),
        p=p,
        block=block,
        dual_matrix=dual_matrix,
        dual_objective=dual_value * scale,
        residuals=residuals,
        iterations=state["iterations"],
        converged=state["converged"],
        rho=state["rho"],
        history=state["history"],
    )
    if residuals["psd"] > options.tol_psd:
        solution.warnings.append(f"PSD residual {residuals['psd']:.2e} above tolerance")

    if options.trace_path:
        write_iteration_trace(state["history"], options.trace_path)

    if not solution.converged:
        message = (f"{what} did not converge in {solution.iterations} iterations "
                   f"(primal={residuals['primal']:.2e}, dual={residuals['dual']:.2e}, "
                   f"gap={residuals['gap']:.2e})")
        if state["plateau"]:
            message += "; residual plateau suggests an infeasible instance"
        if options.raise_on_nonconvergence:
            error = InfeasibleInstanceError if state["plateau"] else SolverConvergenceError
            raise error(message, residuals=residuals, history=state["history"])
        logging.warning(message)
        solution.warnings.append(message)
    else:
        logging.debug(f"{what} converged in {solution.iterations} iterations, "
                      f"objective {solution.objective:.6g}")
    return solution


def _zero_solution(N: int, L: int, what: str) -> LiftedSolution:
    logging.debug(f"{what}: zero data, returning the zero solution")
    zeros = np.zeros((N, L), dtype=complex)
    return LiftedSolution(
        Z_hat=zeros, objective=0.0, p=np.zeros(N, dtype=complex),
        block=SdpBlock(np.zeros(N, dtype=complex), np.zeros((L, L), dtype=complex), zeros),
        dual_matrix=zeros.copy(), dual_objective=0.0,
        residuals={"primal": 0.0, "dual": 0.0, "gap": 0.0, "psd": 0.0},
        iterations=0, converged=True,
    )


def atomic_norm_solution(Z, options: Optional[SolverOptions] = None) -> LiftedSolution:
    """
    Atomic norm of a fixed matrix with its SDP block and norming functional.

    ``dual_matrix`` is Y with Re<Y, Z> equal to the norm and dual norm of Y at most 1
    up to solver tolerance.
    """
    options = options or SolverOptions()
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim != 2 or not np.all(np.isfinite(Z)):
        raise DomainError("Atomic norm needs a finite 2-D matrix")
    N, L = Z.shape
    scale = float(np.linalg.norm(Z))
    if scale == 0:
        return _zero_solution(N, L, "atomic_norm")
    Zs = Z / scale

    def project_z(Z0, rho):
        return Zs, None

    def dual_objective(Lam, d, rho, block):
        Y = -2.0 * Lam[:N, N:]
        return float(np.vdot(Y, Zs).real), Y

    state = AdmmSolver(N, L, options).run(project_z, dual_objective, Zs)
    Y = -2.0 * state["Lambda"][:N, N:]
    dual_value = float(np.vdot(Y, Zs).real)
    return _finish(state, options, scale, Z, np.zeros(N, dtype=complex), Y, dual_value, "atomic_norm")


def atomic_norm(Z, options: Optional[SolverOptions] = None) -> float:
    """||Z||_A via the SDP characterization."""
    return atomic_norm_solution(Z, options).objective


def dual_atomic_norm(Y, grid_size: Optional[int] = None, newton_steps: Optional[int] = None,
                     indexing=SHIFTED, options: Optional[SolverOptions] = None) -> Tuple[float, float]:
    """
    sup over tau of ||Y^H c(tau)||_2 and the maximizing delay.

    Grid of max(4096, 32 N) points by default, then Newton refinement of every
    grid local maximum.
    """
    Y = np.asarray(Y, dtype=complex)
    options = options or SolverOptions()
    N = Y.shape[0]
    grid_size = grid_size or options.dual_grid_size(N)
    newton_steps = options.dual_newton_steps if newton_steps is None else newton_steps
    return trig_poly.supremum(Y.conj(), sample_indices(N, indexing), grid_size, newton_steps)


def _check_zero_rows(instance: ProblemInstance) -> np.ndarray:
    weights = instance.subspace.row_energy
    dead = weights == 0
    if np.any(dead):
        stranded = float(np.linalg.norm(instance.y[dead]))
        if stranded > instance.epsilon:
            raise InfeasibleInstanceError(
                f"{int(dead.sum())} measurement rows have b_n = 0 but carry data "
                f"(norm {stranded:.3e} > eps {instance.epsilon:.3e})",
                residuals={"stranded": stranded})
    return weights


def _lifted_solve(instance: ProblemInstance, options: SolverOptions, ball: bool) -> LiftedSolution:
    N, L = instance.N, instance.L
    what = "solve_noisy" if ball else "solve_noiseless"
    y_norm = float(np.linalg.norm(instance.y))
    if y_norm == 0 or (ball and instance.epsilon >= y_norm):
        return _zero_solution(N, L, what)

    weights = _check_zero_rows(instance)
    live = weights > 0
    safe_w = np.where(live, weights, 1.0)
    B = instance.subspace.B
    y = instance.y / y_norm
    eps = instance.epsilon / y_norm

    def residual_multipliers(e0: np.ndarray) -> np.ndarray:
        if not ball:
            return np.where(live, e0 / safe_w, 0.0)
        if np.linalg.norm(e0) <= eps:
            return np.zeros_like(e0)

        def excess(lam):
            return np.linalg.norm(e0 / (1.0 + lam * weights)) - eps

        hi = max((np.linalg.norm(e0) / eps - 1.0) / weights[live].min(), 1e-12)
        for _ in range(200):
            if excess(hi) <= 0:
                break
            hi *= 2.0
        lam = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-12)
        return np.where(live, lam * e0 / (1.0 + lam * weights), 0.0)

    def project_z(Z0, rho):
        r0 = np.einsum("ni,ni->n", Z0, B)
        d = residual_multipliers(y - r0)
        return Z0 + d[:, None] * B.conj(), d

    def dual_objective(Lam, d, rho, block):
        p = 2.0 * rho * d
        value = float(np.vdot(y, p).real)
        if ball:
            value -= eps * float(np.linalg.norm(p))
        return value, p

    Z_start = np.where(live, y / safe_w, 0.0)[:, None] * B.conj()
    state = AdmmSolver(N, L, options).run(project_z, dual_objective, Z_start)
    Z_hat = state["block"].Z * y_norm
    p = state["p"]
    dual_value = float(np.vdot(y, p).real) - (eps * float(np.linalg.norm(p)) if ball else 0.0)
    return _finish(state, options, y_norm, Z_hat, p, lift_adjoint(p, instance.subspace),
                   dual_value, what)


def solve_noiseless(instance: ProblemInstance, options: Optional[SolverOptions] = None) -> LiftedSolution:
    """
    Minimize ||Z||_A subject to X(Z) = y.

    Raises:
        DomainError: the instance is noisy
        SolverConvergenceError: iteration cap reached (when raise_on_nonconvergence)
        InfeasibleInstanceError: data on rows with b_n = 0, or a residual plateau
    """
    if instance.noisy:
        raise DomainError("solve_noiseless needs an instance with eps = 0")
    options = options or SolverOptions()
    solution = _lifted_solve(instance, options, ball=False)
    extract_dual(solution, instance, options)
    return solution


def solve_noisy(instance: ProblemInstance, options: Optional[SolverOptions] = None) -> LiftedSolution:
    """
    Minimize ||Z||_A subject to ||y - X(Z)||_2 <= eps.

    The dual objective is Re<p, y> - eps ||p||_2.
    """
    if not instance.noisy:
        raise DomainError("solve_noisy needs an instance with eps > 0")
    options = options or SolverOptions()
    solution = _lifted_solve(instance, options, ball=True)
    extract_dual(solution, instance, options)
    return solution


def extract_dual(solution: LiftedSolution, instance: ProblemInstance,
                 options: Optional[SolverOptions] = None) -> np.ndarray:
    """
    Dual vector p of the data constraint, with its certificate quality recorded.

    Sets ``dual_norm`` (dual atomic norm of X*(p)) and ``dual_feasible`` on the
    solution and appends a warning when p is infeasible beyond tol_dual or the
    duality gap exceeds tol_gap.
    """
    options = options or SolverOptions()
    p = solution.p
    if not np.any(p):
        solution.dual_norm = 0.0
        solution.dual_feasible = True
        return p

    solution.dual_norm, _ = dual_atomic_norm(lift_adjoint(p, instance.subspace),
                                             indexing=instance.indexing, options=options)
    solution.dual_feasible = solution.dual_norm <= 1.0 + options.tol_dual
    if not solution.dual_feasible:
        message = f"Dual vector infeasible: ||X*(p)||* = {solution.dual_norm:.6f}"
        logging.warning(message)
        solution.warnings.append(message)

    gap = solution.duality_gap
    if gap > options.tol_gap * (1.0 + abs(solution.objective)):
        message = f"Duality gap {gap:.2e} above tolerance"
        logging.warning(message)
        solution.warnings.append(message)
    return p


@dataclass
class DualSdpResult:
    p: np.ndarray
    objective: float
    status: str


def solve_dual_sdp(instance: ProblemInstance, solver: Optional[str] = None,
                   verbose: bool = False) -> DualSdpResult:
    """
    Direct dual solve: maximize Re<p, y> - eps ||p|| s.t. ||X*(p)||*_A <= 1.

    The dual norm constraint is written as a PSD condition: a Hermitian H with
    [[H, X*(p)], [X*(p)^H, I_L]] >= 0 and the k-th diagonal sums of H equal to
    N delta_k0 (unit-norm steering vectors). Cross-check path for small N.
    """
    import cvxpy as cp

    N, L = instance.N, instance.L
    B = instance.subspace.B
    p = cp.Variable(N, complex=True)
    P = cp.Variable((N + L, N + L), hermitian=True)
    H = P[:N, :N]
    constraints = [
        P >> 0,
        P[:N, N:] == cp.diag(p) @ B.conj(),
        P[N:, N:] == np.eye(L),
    ]
    for k in range(N):
        shift = np.eye(N, k=k)
        constraints.append(cp.real(cp.trace(shift @ H)) == (N if k == 0 else 0))
        if k:
            constraints.append(cp.imag(cp.trace(shift @ H)) == 0)

    objective = cp.real(cp.sum(cp.multiply(np.conj(instance.y), p)))
    if instance.noisy:
        objective = objective - instance.epsilon * cp.norm(p, 2)
    problem = cp.Problem(cp.Maximize(objective), constraints)
    problem.solve(solver=solver, verbose=verbose)

    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverConvergenceError(f"Dual SDP solve ended with status {problem.status}",
                                     residuals={"status": problem.status})
    if problem.status == cp.OPTIMAL_INACCURATE:
        logging.warning("Dual SDP solve returned an inaccurate optimum")
    return DualSdpResult(p=np.asarray(p.value, dtype=complex), objective=float(problem.value),
                         status=problem.status)


def write_iteration_trace(history, path: str) -> None:
    """CSV with columns iter, primal_res, dual_res, gap, rho."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "primal_res", "dual_res", "gap", "rho"])
        for row in history:
            writer.writerow([row[0]] + [f"{value:.6e}" for value in row[1:]])
    logging.info(f"Wrote solver trace with {len(history)} iterations to {path}")


def primal_feasibility(Z: np.ndarray, instance: ProblemInstance) -> float:
    """||X(Z) - y||_2."""
    return float(np.linalg.norm(lift_forward(Z, instance.subspace) - instance.y))
