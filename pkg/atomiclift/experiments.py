"""
Experiment driver

Single-instance runs, Monte Carlo phase-transition sweeps, noisy localization
experiments and certificate campaigns. Trials are independent: each one gets a
seed derived from (master seed, cell, trial), runs in a worker process and comes
back as a flat record; aggregation sorts records first so statistics never
depend on scheduling.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from atomiclift.certificate_lab import (build_workspace, fejer_coeffs, gamma_concentration_stats,
                                        ones_subspace, validate_certificate)
from atomiclift.config import ExperimentConfig, SolverOptions
from atomiclift.dual_localizer import (LocalizationResult, MatchReport, dual_norm_profile,
                                       localize_solution, match_spikes, normalized_error)
from atomiclift.errors import AtomicLiftError, DomainError, SolverConvergenceError
from atomiclift.sdp_solver import LiftedSolution, solve_noiseless, solve_noisy
from atomiclift.signal_model import (ProblemInstance, as_rng, calibrate_with_known_psf,
                                     draw_coefficients, draw_separated_spikes, sample_subspace,
                                     synth_psf, synthesize_instance, time_domain_rendering)
from utils.parallel import derive_seed, map_tasks

SWEEP_COLUMNS = ("N", "K", "L", "trials", "successes", "success_rate", "mean_err", "median_err",
                 "mean_time", "seed_base", "KL")
TRIAL_COLUMNS = ("cell", "trial", "seed", "N", "K", "L", "error", "success", "iterations",
                 "converged", "time", "failure")
NOISY_COLUMNS = ("snr_db", "N", "K", "L", "trials", "all_matched", "match_rate", "mean_matched",
                 "mean_false_alarms", "median_delay_error", "median_amplitude_error", "seed_base")
NOISY_TRIAL_COLUMNS = ("cell", "trial", "seed", "snr_db", "sigma", "matched", "misses",
                       "false_alarms", "max_delay_error", "mean_amplitude_error", "converged",
                       "time", "failure")
CERTIFY_COLUMNS = ("M", "K", "L", "delta_factor", "trials", "passed", "pass_rate",
                   "median_off_support_max", "max_far_region_max", "median_condition",
                   "gamma_dev_median", "gamma_dev_p95", "seed_base")
CERTIFY_TRIAL_COLUMNS = ("cell", "trial", "seed", "M", "K", "L", "delta_factor", "passed",
                         "off_support_max", "far_region_max", "interpolation_residual",
                         "condition", "reason")


def _nanmedian(values: Sequence[float]) -> float:
    values = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    return float(np.median(values)) if values.size else float("nan")


def _nanmean(values: Sequence[float]) -> float:
    values = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    return float(np.mean(values)) if values.size else float("nan")


def _solve(instance: ProblemInstance, options: SolverOptions) -> LiftedSolution:
    return solve_noisy(instance, options) if instance.noisy else solve_noiseless(instance, options)


def synthesize(config: ExperimentConfig, seed: Optional[int] = None,
               N: Optional[int] = None, K: Optional[int] = None, L: Optional[int] = None,
               snr_db: Optional[float] = None) -> ProblemInstance:
    """
    Instance for one (N, K, L) cell of the configuration.

    Cell values default to the first entry of each grid axis and the seed to the
    master seed, so `run --seed <derived>` reproduces any recorded trial.
    """
    N = N if N is not None else config.N_values[0]
    K = K if K is not None else config.K_values[0]
    L = L if L is not None else config.L_values[0]
    snr_db = snr_db if snr_db is not None else config.snr_db
    sigma = None if snr_db is not None else config.sigma
    instance = synthesize_instance(
        N, K, L, seed=config.master_seed if seed is None else seed,
        subspace_kind=config.subspace_kind, h_law=config.h_law,
        delta_min=config.delta_min(N), amplitude=config.amplitude,
        sigma=sigma, snr_db=snr_db, indexing=config.indexing)
    logging.info(f"Synthesized instance N={N} K={K} L={L} eps={instance.epsilon:.4g}")
    return instance


@dataclass
class RunOutcome:
    """Everything one pipeline pass produced."""

    seed: int
    instance: ProblemInstance
    solution: LiftedSolution
    localization: LocalizationResult
    match: MatchReport
    error: Optional[float]
    solve_time: float


def run_instance(config: ExperimentConfig, seed: Optional[int] = None,
                 instance: Optional[ProblemInstance] = None) -> RunOutcome:
    """
    Generate (unless given), solve, localize and score one instance.

    The normalized error is None for an empty spike train.

    Raises:
        SolverConvergenceError: propagated with residuals and iteration history
    """
    seed = config.master_seed if seed is None else int(seed)
    instance = instance or synthesize(config, seed)
    start = time.perf_counter()
    solution = _solve(instance, config.solver)
    solve_time = time.perf_counter() - start
    localization = localize_solution(solution, instance, config.localizer)

    error = None
    truth = instance.spikes
    if instance.has_ground_truth() and truth.count > 0:
        error = normalized_error(solution.Z_hat, instance.ground_truth_lift())
    match = match_spikes(truth, localization, config.match_radius_factor / instance.N) \
        if truth is not None else None
    logging.info(f"Run finished: {localization.delays.size} peaks, error={error}, "
                 f"iterations={solution.iterations}")
    return RunOutcome(seed, instance, solution, localization, match, error, solve_time)


def run_report(outcome: RunOutcome, config: ExperimentConfig) -> Dict[str, Any]:
    """JSON report of one run; timing only when record_timing is set."""
    instance = outcome.instance
    success = outcome.error is not None and outcome.error < config.success_threshold
    report: Dict[str, Any] = {
        "seed": outcome.seed,
        "N": instance.N,
        "K": instance.spikes.count if instance.spikes is not None else None,
        "L": instance.L,
        "epsilon": instance.epsilon,
        "sigma": instance.sigma,
        "normalized_error": outcome.error,
        "error_defined": outcome.error is not None,
        "success": success,
        "solver": outcome.solution.summary(),
        "localization": outcome.localization.to_dict(),
        "match": outcome.match.to_dict() if outcome.match is not None else None,
        "truth": instance.spikes.to_dict() if instance.spikes is not None else None,
    }
    if config.record_timing:
        report["solve_time"] = outcome.solve_time
    if config.dump_dual:
        taus, norms = dual_norm_profile(outcome.solution.p, instance.subspace,
                                        config.localizer.grid_factor * instance.N, instance.indexing)
        report["dual_profile"] = {"tau": taus.tolist(), "norm": norms.tolist()}
    return report


def instance_series(instance: ProblemInstance, oversample: int = 8) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Time-domain curves of one instance: PSF, convolution, and known-PSF deconvolution.

    Magnitudes are returned; keys name the plot-data files.
    """
    series = {}
    if instance.h is not None:
        g = synth_psf(instance.subspace, instance.h)
        t, psf = time_domain_rendering(g, instance.indexing, oversample)
        series["psf"] = (t, np.abs(psf))
        x, _ = calibrate_with_known_psf(instance.y, g)
        t, deconvolved = time_domain_rendering(x, instance.indexing, oversample)
        series["deconvolution_known_psf"] = (t, np.abs(deconvolved))
    t, convolved = time_domain_rendering(instance.y, instance.indexing, oversample)
    series["convolution"] = (t, np.abs(convolved))
    if instance.spikes is not None:
        series["true_spikes"] = (instance.spikes.delays, np.abs(instance.spikes.amplitudes))
    return series


def run_series(outcome: RunOutcome, config: ExperimentConfig) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Plot-data series for a run: instance curves, dual-norm profile, recovered magnitudes."""
    series = instance_series(outcome.instance)
    taus, norms = dual_norm_profile(outcome.solution.p, outcome.instance.subspace,
                                    config.localizer.grid_factor * outcome.instance.N,
                                    outcome.instance.indexing)
    series["dual_norm_profile"] = (taus, norms)
    series["recovered_spikes"] = (outcome.localization.delays, np.abs(outcome.localization.amplitudes))
    return series


@dataclass(frozen=True)
class TrialTask:
    config: ExperimentConfig
    cell: int
    trial: int
    seed: int
    N: int
    K: int
    L: int
    snr_db: Optional[float] = None
    M: Optional[int] = None
    delta_factor: Optional[float] = None


@dataclass
class TrialRecord:
    """One Monte Carlo trial of a noiseless sweep."""

    cell: int
    trial: int
    seed: int
    N: int
    K: int
    L: int
    error: Optional[float] = None
    success: bool = False
    iterations: int = 0
    converged: bool = False
    time: Optional[float] = None
    failure: str = ""

    def row(self) -> List[Any]:
        return [getattr(self, column) for column in TRIAL_COLUMNS]


def sweep_trial(task: TrialTask) -> TrialRecord:
    """Worker: solve one sweep trial; failures are recorded, never raised."""
    config = task.config
    record = TrialRecord(task.cell, task.trial, task.seed, task.N, task.K, task.L)
    try:
        instance = synthesize_instance(
            task.N, task.K, task.L, seed=task.seed, subspace_kind=config.subspace_kind,
            h_law=config.h_law, delta_min=config.delta_min(task.N), amplitude=config.amplitude,
            indexing=config.indexing)
        start = time.perf_counter()
        solution = solve_noiseless(instance, config.solver)
        elapsed = time.perf_counter() - start
        record.iterations = solution.iterations
        record.converged = solution.converged
        if config.record_timing:
            record.time = elapsed
        if task.K > 0:
            record.error = normalized_error(solution.Z_hat, instance.ground_truth_lift())
            record.success = record.error < config.success_threshold
    except SolverConvergenceError as e:
        logging.error(f"Trial cell={task.cell} trial={task.trial} seed={task.seed} did not converge: {e}")
        record.iterations = len(e.history) if e.history else 0
        record.failure = type(e).__name__
    except (AtomicLiftError, np.linalg.LinAlgError) as e:
        logging.error(f"Trial cell={task.cell} trial={task.trial} seed={task.seed} failed: {e}")
        record.failure = type(e).__name__
    return record


@dataclass
class CellSummary:
    N: int
    K: int
    L: int
    trials: int
    successes: int
    mean_err: float
    median_err: float
    mean_time: Optional[float]
    seed_base: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def row(self) -> List[Any]:
        return [self.N, self.K, self.L, self.trials, self.successes, self.success_rate,
                self.mean_err, self.median_err, self.mean_time, self.seed_base, self.K * self.L]


@dataclass
class SweepResult:
    """Per-cell success statistics plus the per-trial records they came from."""

    cells: List[CellSummary]
    records: List[TrialRecord] = field(repr=False)

    def rows(self) -> List[List[Any]]:
        return [cell.row() for cell in self.cells]

    def trial_rows(self) -> List[List[Any]]:
        return [record.row() for record in self.records]

    def success_rate(self, **cell) -> float:
        """Success rate of the first cell matching the given N / K / L values."""
        for summary in self.cells:
            if all(getattr(summary, key) == value for key, value in cell.items()):
                return summary.success_rate
        raise KeyError(f"No sweep cell {cell}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cells": [dict(asdict(cell), success_rate=cell.success_rate) for cell in self.cells],
            "records": [asdict(record) for record in self.records],
        }


def sweep_cells(config: ExperimentConfig) -> List[Tuple[int, int, int]]:
    """Grid cells in enumeration order (N outer, then K, then L)."""
    return [(n, k, l_dim) for n in config.N_values for k in config.K_values for l_dim in config.L_values]


def aggregate_sweep(config: ExperimentConfig, records: Sequence[TrialRecord]) -> SweepResult:
    """Per-cell statistics; independent of the order records arrive in."""
    records = sorted(records, key=lambda r: (r.cell, r.trial))
    by_cell: Dict[int, List[TrialRecord]] = {}
    for record in records:
        by_cell.setdefault(record.cell, []).append(record)

    cells = []
    for index, (n, k, l_dim) in enumerate(sweep_cells(config)):
        group = by_cell.get(index, [])
        times = [r.time for r in group if r.time is not None]
        cells.append(CellSummary(
            N=n, K=k, L=l_dim,
            trials=len(group),
            successes=sum(r.success for r in group),
            mean_err=_nanmean([r.error for r in group]),
            median_err=_nanmedian([r.error for r in group]),
            mean_time=float(np.mean(times)) if times else None,
            seed_base=derive_seed(config.master_seed, index, 0),
        ))
    return SweepResult(cells, records)


def phase_transition_sweep(config: ExperimentConfig, jobs: Optional[int] = None) -> SweepResult:
    """
    Monte Carlo success rates over the (N, K, L) grid.

    Success means normalized error below config.success_threshold; trials that
    fail to converge count as failures.
    """
    tasks = [TrialTask(config, cell, trial, derive_seed(config.master_seed, cell, trial), n, k, l_dim)
             for cell, (n, k, l_dim) in enumerate(sweep_cells(config))
             for trial in range(config.trials)]
    logging.info(f"Sweep: {len(sweep_cells(config))} cells x {config.trials} trials "
                 f"({config.separation} separation)")
    records = map_tasks(sweep_trial, tasks, jobs or config.jobs)
    result = aggregate_sweep(config, records)
    for cell in result.cells:
        logging.info(f"Cell N={cell.N} K={cell.K} L={cell.L}: {cell.successes}/{cell.trials} successes")
    return result


@dataclass
class NoisyTrialRecord:
    cell: int
    trial: int
    seed: int
    snr_db: Optional[float]
    sigma: float = 0.0
    matched: int = 0
    misses: int = 0
    false_alarms: int = 0
    max_delay_error: Optional[float] = None
    mean_amplitude_error: Optional[float] = None
    converged: bool = False
    time: Optional[float] = None
    failure: str = ""
    K: int = 0

    @property
    def all_matched(self) -> bool:
        return not self.failure and self.matched == self.K

    def row(self) -> List[Any]:
        return [getattr(self, column) for column in NOISY_TRIAL_COLUMNS]


def noisy_trial(task: TrialTask) -> NoisyTrialRecord:
    """Worker: noisy pipeline for one trial; spurious peaks are counted, not penalized."""
    config = task.config
    record = NoisyTrialRecord(task.cell, task.trial, task.seed, task.snr_db, K=task.K)
    try:
        instance = synthesize(config, task.seed, task.N, task.K, task.L, snr_db=task.snr_db)
        outcome = run_instance(config, task.seed, instance)
        record.sigma = instance.sigma
        record.converged = outcome.solution.converged
        if config.record_timing:
            record.time = outcome.solve_time
        match = outcome.match
        record.matched = match.matched
        record.misses = len(match.misses)
        record.false_alarms = len(match.false_alarms)
        if match.matched:
            record.max_delay_error = match.max_delay_error
            record.mean_amplitude_error = _nanmean(match.amplitude_errors.tolist())
    except (AtomicLiftError, np.linalg.LinAlgError) as e:
        logging.error(f"Noisy trial cell={task.cell} trial={task.trial} seed={task.seed} failed: {e}")
        record.failure = type(e).__name__
        record.misses = task.K
    return record


def noise_levels(config: ExperimentConfig) -> List[Optional[float]]:
    """SNR points in dB; [None] means the configured sigma is used as is."""
    if config.snr_sweep:
        return list(config.snr_sweep)
    return [config.snr_db]


def noisy_localization_experiment(config: ExperimentConfig, jobs: Optional[int] = None) -> Dict[str, Any]:
    """
    Noisy localization over one or more SNR points.

    Each point runs config.trials trials of synthesize -> solve_noisy -> localize ->
    match within match_radius_factor / N, and reports matched / missed / spurious
    counts with median delay and amplitude errors.
    """
    N, K, L = config.N_values[0], config.K_values[0], config.L_values[0]
    levels = noise_levels(config)
    tasks = [TrialTask(config, cell, trial, derive_seed(config.master_seed, cell, trial), N, K, L,
                       snr_db=snr)
             for cell, snr in enumerate(levels) for trial in range(config.trials)]
    records = sorted(map_tasks(noisy_trial, tasks, jobs or config.jobs), key=lambda r: (r.cell, r.trial))

    points = []
    for cell, snr in enumerate(levels):
        group = [r for r in records if r.cell == cell]
        all_matched = sum(r.all_matched for r in group)
        points.append({
            "snr_db": snr,
            "N": N, "K": K, "L": L,
            "trials": len(group),
            "all_matched": all_matched,
            "match_rate": all_matched / len(group) if group else 0.0,
            "mean_matched": _nanmean([r.matched for r in group]),
            "mean_false_alarms": _nanmean([r.false_alarms for r in group]),
            "median_delay_error": _nanmedian([r.max_delay_error for r in group]),
            "median_amplitude_error": _nanmedian([r.mean_amplitude_error for r in group]),
            "seed_base": derive_seed(config.master_seed, cell, 0),
        })
        logging.info(f"Noisy point snr={snr}: all spikes matched in {all_matched}/{len(group)} trials")
    return {"points": points, "records": records}


def noisy_example_series(config: ExperimentConfig, cell: int = 0) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Plot-data series of trial 0 at one SNR point, true and recovered spikes side by side.

    Recovered magnitudes are |beta a_hat| with the global scale from matching, so
    both spike series share one scale.
    """
    levels = noise_levels(config)
    if not 0 <= cell < len(levels):
        raise DomainError(f"No SNR point {cell}; the experiment has {len(levels)}")
    seed = derive_seed(config.master_seed, cell, 0)
    outcome = run_instance(config, seed, synthesize(config, seed, snr_db=levels[cell]))
    series = run_series(outcome, config)
    beta = outcome.match.beta if outcome.match is not None else 1.0
    series["recovered_spikes"] = (outcome.localization.delays, np.abs(beta * outcome.localization.amplitudes))
    return series


@dataclass
class CertificateTrialRecord:
    cell: int
    trial: int
    seed: int
    M: int
    K: int
    L: int
    delta_factor: float
    passed: bool = False
    off_support_max: Optional[float] = None
    far_region_max: Optional[float] = None
    interpolation_residual: Optional[float] = None
    condition: Optional[float] = None
    reason: str = ""

    def row(self) -> List[Any]:
        return [getattr(self, column) for column in CERTIFY_TRIAL_COLUMNS]


def certificate_cells(config: ExperimentConfig) -> List[Tuple[int, int, int, float]]:
    """(M, K, L, delta_factor) cells in enumeration order."""
    return [(m, k, l_dim, factor) for m in config.M_values for k in config.K_values
            for l_dim in config.L_values for factor in config.delta_factors]


def _certificate_subspace(config: ExperimentConfig, M: int, L: int, rng: np.random.Generator):
    # L = 1 cells use the deterministic all-ones subspace
    if L == 1:
        return ones_subspace(M)
    return sample_subspace(config.subspace_kind, 4 * M + 1, L, rng)


def certificate_trial(task: TrialTask) -> CertificateTrialRecord:
    """Worker: draw a support, signs, h and subspace, then build and validate the certificate."""
    config = task.config
    record = CertificateTrialRecord(task.cell, task.trial, task.seed, task.M, task.K, task.L,
                                    task.delta_factor)
    try:
        rng = as_rng(task.seed)
        spikes = draw_separated_spikes(task.K, task.delta_factor / task.M, config.amplitude, rng)
        signs = spikes.amplitudes / np.abs(spikes.amplitudes)
        subspace = _certificate_subspace(config, task.M, task.L, rng)
        h = None if task.L == 1 else draw_coefficients(config.h_law, task.L, rng)
        workspace = build_workspace(task.M, spikes.delays, signs, h, subspace, config.certificate)
        report = validate_certificate(workspace, config.certificate)
        record.passed = report.passed
        record.off_support_max = report.off_support_max
        record.far_region_max = report.far_region_max
        record.interpolation_residual = report.interpolation_residual
        record.condition = report.condition
        record.reason = report.reason
    except (AtomicLiftError, np.linalg.LinAlgError) as e:
        logging.error(f"Certificate trial cell={task.cell} trial={task.trial} seed={task.seed} failed: {e}")
        record.reason = f"{type(e).__name__}: {e}"
    return record


def _deviation_stats(config: ExperimentConfig, cell: int, M: int, K: int, L: int,
                     delta_factor: float) -> Dict[str, Any]:
    # separate stream: trial index config.trials is never used by a certificate trial
    rng = as_rng(derive_seed(config.master_seed, cell, config.trials))
    support = draw_separated_spikes(K, delta_factor / M, config.amplitude, rng).delays
    if L == 1:
        return gamma_concentration_stats(fejer_coeffs(M), "ones", support, 1, 1)
    return gamma_concentration_stats(fejer_coeffs(M), config.subspace_kind, support, L,
                                     config.trials, rng)


def certificate_campaign(config: ExperimentConfig, jobs: Optional[int] = None) -> Dict[str, Any]:
    """
    Certificate construction and validation pass rates over (M, K, L, delta) cells.

    Ill-conditioned Gamma counts as a failed certificate. Each cell also reports
    the spectral deviation of Gamma from its mean Phi kron I_L.
    """
    cells = certificate_cells(config)
    tasks = [TrialTask(config, cell, trial, derive_seed(config.master_seed, cell, trial),
                       N=4 * m + 1, K=k, L=l_dim, M=m, delta_factor=factor)
             for cell, (m, k, l_dim, factor) in enumerate(cells) for trial in range(config.trials)]
    records = sorted(map_tasks(certificate_trial, tasks, jobs or config.jobs),
                     key=lambda r: (r.cell, r.trial))

    summaries = []
    for cell, (m, k, l_dim, factor) in enumerate(cells):
        group = [r for r in records if r.cell == cell]
        passed = sum(r.passed for r in group)
        stats = _deviation_stats(config, cell, m, k, l_dim, factor) if k > 0 else None
        summaries.append({
            "M": m, "K": k, "L": l_dim, "delta_factor": factor,
            "trials": len(group),
            "passed": passed,
            "pass_rate": passed / len(group) if group else 0.0,
            "median_off_support_max": _nanmedian([r.off_support_max for r in group]),
            "max_far_region_max": max([r.far_region_max for r in group if r.far_region_max is not None],
                                      default=float("nan")),
            "median_condition": _nanmedian([r.condition for r in group]),
            "gamma_dev_median": stats["median"] if stats else float("nan"),
            "gamma_dev_p95": stats["p95"] if stats else float("nan"),
            "seed_base": derive_seed(config.master_seed, cell, 0),
        })
        logging.info(f"Certificate cell M={m} K={k} L={l_dim} delta={factor}/M: {passed}/{len(group)} passed")
    return {"cells": summaries, "records": records}
