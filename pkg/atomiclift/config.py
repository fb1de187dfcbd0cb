"""
Configuration models

Validated settings for the solver, the localizer, the certificate lab and the
experiment driver. Experiment configurations are JSON workflow files; a named
preset is applied first, then the file's own values, then CLI overrides.
"""

import json
import logging
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from atomiclift.errors import ConfigurationError

SUBSPACE_KINDS = ("fourier-row", "complex-gaussian", "real-gaussian", "explicit")
H_LAWS = ("gaussian", "complex-gaussian", "ones")
MODES = ("synth", "run", "sweep", "noisy", "certify")

# Half-width of the near region around each spike, in units of 1/M
NEAR_REGION_RHO = 0.08245


class SolverOptions(BaseModel):
    """ADMM options for the atomic norm SDP."""

    rho_init: float = Field(1.0, gt=0)
    rho_scale: float = Field(2.0, gt=1)
    rho_balance_ratio: float = Field(10.0, gt=1)
    rho_update_interval: int = Field(10, ge=1)
    tol_primal: float = Field(1e-7, gt=0)
    tol_dual_residual: float = Field(1e-7, gt=0)
    tol_gap_stop: float = Field(1e-6, gt=0)
    max_iterations: int = Field(50_000, ge=1)
    plateau_window: int = Field(2_000, ge=10)
    tol_psd: float = Field(1e-7, gt=0)
    tol_feas: float = Field(1e-8, gt=0)
    tol_dual: float = Field(1e-4, gt=0)
    tol_gap: float = Field(1e-4, gt=0)
    dual_grid_min: int = Field(4096, ge=64)
    dual_grid_factor: int = Field(32, ge=1)
    dual_newton_steps: int = Field(3, ge=0)
    raise_on_nonconvergence: bool = True
    trace_path: Optional[str] = None

    def dual_grid_size(self, n: int) -> int:
        return max(self.dual_grid_min, self.dual_grid_factor * n)


class LocalizerOptions(BaseModel):
    """Peak search on the dual polynomial."""

    grid_factor: int = Field(16, ge=2)
    newton_steps: int = Field(5, ge=0)
    newton_tol: float = Field(1e-12, gt=0)
    peak_tol: Optional[float] = Field(None, gt=0)
    peak_tol_noiseless: float = Field(1e-4, gt=0)
    peak_tol_noisy: float = Field(1e-2, gt=0)
    cluster_radius_factor: float = Field(0.25, gt=0)
    tol_dual: float = Field(1e-4, gt=0)
    joint_refit: bool = False
    cond_limit: float = Field(1e8, gt=1)

    def resolved_peak_tol(self, noisy: bool) -> float:
        if self.peak_tol is not None:
            return self.peak_tol
        return self.peak_tol_noisy if noisy else self.peak_tol_noiseless


class CertificateOptions(BaseModel):
    """Validation grid and acceptance rule for the dual certificate lab."""

    grid_size: int = Field(2 ** 16, ge=256)
    near_points: int = Field(64, ge=4)
    near_radius: float = Field(NEAR_REGION_RHO, gt=0)
    spike_exclusion: float = Field(1e-3, gt=0)
    newton_steps: int = Field(5, ge=0)
    residual_tol: float = Field(1e-8, gt=0)
    cond_limit: float = Field(1e10, gt=1)


class AmplitudeSpec(BaseModel):
    """Amplitude law: modulus 10^(d/20) with d ~ U[0, dynamic_range_db], uniform phase."""

    dynamic_range_db: float = Field(10.0, ge=0)


PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1": {
        "N_values": [64],
        "K_values": [6],
        "L_values": [3],
        "subspace_kind": "fourier-row",
        "h_law": "ones",
        "separation": "enforced",
        "indexing": "shifted",
    },
    "fig2": {
        "N_values": [64],
        "K_values": list(range(1, 13)),
        "L_values": list(range(1, 9)),
        "subspace_kind": "real-gaussian",
        "h_law": "gaussian",
        "separation": "enforced",
        "indexing": "shifted",
    },
    "fig4": {
        "mode": "noisy",
        "N_values": [64],
        "K_values": [6],
        "L_values": [3],
        "subspace_kind": "real-gaussian",
        "h_law": "gaussian",
        "snr_db": 15.0,
        "indexing": "shifted",
    },
}


class ExperimentConfig(BaseModel):
    """One experiment: mode, grid, randomness, solver settings and outputs."""

    mode: str = "run"
    preset: Optional[str] = None
    N_values: List[int] = [64]
    K_values: List[int] = [4]
    L_values: List[int] = [3]
    M_values: List[int] = [64]
    delta_factors: List[float] = [1.5]
    trials: int = Field(20, ge=1)
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    subspace_kind: str = "real-gaussian"
    h_law: str = "gaussian"
    amplitude: AmplitudeSpec = AmplitudeSpec()
    separation: str = "enforced"
    separation_factor: float = Field(1.0, gt=0)
    indexing: str = "shifted"
    sigma: Optional[float] = Field(None, ge=0)
    snr_db: Optional[float] = None
    snr_sweep: List[float] = []
    success_threshold: float = Field(1e-3, gt=0)
    match_radius_factor: float = Field(0.5, gt=0)
    solver: SolverOptions = SolverOptions()
    localizer: LocalizerOptions = LocalizerOptions()
    certificate: CertificateOptions = CertificateOptions()
    jobs: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    record_timing: bool = True
    plot_data: bool = False
    dump_dual: bool = False

    @validator("mode")
    def _known_mode(cls, value):
        if value not in MODES:
            raise ValueError(f"unknown mode '{value}', expected one of {MODES}")
        return value

    @validator("subspace_kind")
    def _known_subspace(cls, value):
        if value not in SUBSPACE_KINDS or value == "explicit":
            raise ValueError(f"subspace_kind must be a sampled kind, got '{value}'")
        return value

    @validator("h_law")
    def _known_h_law(cls, value):
        if value not in H_LAWS:
            raise ValueError(f"h_law must be one of {H_LAWS}, got '{value}'")
        return value

    @validator("separation")
    def _known_separation(cls, value):
        if value not in ("enforced", "unconstrained"):
            raise ValueError("separation must be 'enforced' or 'unconstrained'")
        return value

    @validator("indexing")
    def _known_indexing(cls, value):
        if value not in ("symmetric", "shifted"):
            raise ValueError("indexing must be 'symmetric' or 'shifted'")
        return value

    @validator("N_values", "K_values", "L_values", "M_values", "delta_factors")
    def _non_empty(cls, value):
        if not value:
            raise ValueError("grid axes must not be empty")
        return value

    @root_validator(skip_on_failure=True)
    def _feasible_cells(cls, values):
        if values["separation"] == "enforced":
            for n in values["N_values"]:
                delta_min = values["separation_factor"] / n
                for k in values["K_values"]:
                    if k >= 2 and k * delta_min >= 1:
                        raise ValueError(
                            f"infeasible cell N={n}, K={k}: K*delta_min={k * delta_min:.3f} >= 1")
        for n in values["N_values"]:
            for l_dim in values["L_values"]:
                if l_dim > n or l_dim < 1:
                    raise ValueError(f"need 1 <= L <= N, got N={n}, L={l_dim}")
        if values["mode"] == "certify":
            for m in values["M_values"]:
                if m < 1:
                    raise ValueError(f"M must be >= 1, got {m}")
                for factor in values["delta_factors"]:
                    for k in values["K_values"]:
                        if k >= 2 and k * factor / m >= 1:
                            raise ValueError(f"infeasible certificate cell M={m}, K={k}, "
                                             f"delta={factor}/M")
        return values

    def delta_min(self, n: int) -> float:
        """Minimum separation enforced when drawing delays for N samples."""
        return self.separation_factor / n if self.separation == "enforced" else 0.0

    @classmethod
    def load(cls, path: Optional[str] = None,
             overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """
        Build a configuration from preset, JSON file and overrides (in that order).

        Args:
            path: JSON workflow file, or None for defaults only
            overrides: values that win over the file (CLI flags); None entries are ignored

        Raises:
            ConfigurationError: unreadable file or invalid values
        """
        data: Dict[str, Any] = {}
        if path:
            try:
                with open(path, "r") as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigurationError(f"Cannot read config {path}: {e}") from e
            data.pop("description", None)
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        preset = overrides.get("preset", data.get("preset"))
        merged: Dict[str, Any] = {}
        if preset:
            if preset not in PRESETS:
                raise ConfigurationError(f"Unknown preset '{preset}', expected one of {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        merged.update(data)
        merged.update(overrides)
        try:
            config = cls(**merged)
        except ValidationError as e:
            raise ConfigurationError(str(e)) from e
        logging.debug(f"Loaded experiment config from {path or 'defaults'} (preset={preset})")
        return config

    def resolved_output_dir(self) -> str:
        from utils.environment import get_output_dir
        return self.output_dir or get_output_dir()

    def to_json_dict(self) -> Dict[str, Any]:
        return json.loads(self.json())
