"""
Signal model

Spike trains, subspace point spread functions and the Fourier-domain
measurement synthesis y_n = g_n x_n + w_n with g = B h.

Delays are normalized to [0, 1). Two sample index conventions are supported:
``symmetric`` (n = -2M..2M, N = 4M + 1) and ``shifted`` (n = 0..N-1).
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from atomiclift.config import AmplitudeSpec, H_LAWS, SUBSPACE_KINDS
from atomiclift.errors import ConfigurationError, ConventionError, DomainError

Seed = Union[int, np.integer, np.random.Generator, None]

SYMMETRIC = "symmetric"
SHIFTED = "shifted"

# Attempts before the separated sampler falls back to the spacing construction
MAX_REJECTION_ATTEMPTS = 100_000
_REJECTION_BATCH = 1000


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def as_rng(seed: Seed) -> np.random.Generator:
    """Generator from an integer seed, or the generator itself."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class IndexingConvention:
    """Sample index set of the N Fourier measurements."""

    kind: str
    N: int

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, SHIFTED):
            raise ConventionError(f"Unknown indexing kind '{self.kind}'")
        if self.kind == SYMMETRIC and (self.N < 1 or self.N % 4 != 1):
            raise ConventionError(f"Symmetric indexing needs N = 4M + 1, got N={self.N}")
        if self.kind == SHIFTED and self.N < 2:
            raise ConventionError(f"Shifted indexing needs N >= 2, got N={self.N}")

    @classmethod
    def symmetric(cls, M: int) -> "IndexingConvention":
        return cls(SYMMETRIC, 4 * M + 1)

    @classmethod
    def shifted(cls, N: int) -> "IndexingConvention":
        return cls(SHIFTED, N)

    @property
    def M(self) -> int:
        """M with N = 4M + 1 (the normalization 2M = B_max T_max); floor for shifted grids."""
        return (self.N - 1) // 4

    @property
    def first_index(self) -> int:
        return -(self.N - 1) // 2 if self.kind == SYMMETRIC else 0

    def indices(self) -> np.ndarray:
        return np.arange(self.N) + self.first_index


def resolve_indexing(N: int, indexing: Union[str, IndexingConvention]) -> IndexingConvention:
    if isinstance(indexing, IndexingConvention):
        if indexing.N != N:
            raise ConventionError(f"Indexing built for N={indexing.N}, used with N={N}")
        return indexing
    return IndexingConvention(indexing, N)


def sample_indices(N: int, indexing: Union[str, IndexingConvention] = SHIFTED) -> np.ndarray:
    return resolve_indexing(N, indexing).indices()


@dataclass(frozen=True, eq=False)
class SpikeSignal:
    """
    Ground-truth spike train.

    Attributes:
        delays: normalized delays in [0, 1), pairwise distinct
        amplitudes: complex time-domain amplitudes
    """

    delays: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float).reshape(-1)
        amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if delays.shape != amplitudes.shape:
            raise DomainError(f"{delays.size} delays but {amplitudes.size} amplitudes")
        if np.any(~np.isfinite(delays)) or np.any((delays < 0) | (delays >= 1)):
            raise DomainError("Delays must lie in [0, 1)")
        if np.unique(delays).size != delays.size:
            raise DomainError("Delays must be pairwise distinct")
        object.__setattr__(self, "delays", _frozen(delays))
        object.__setattr__(self, "amplitudes", _frozen(amplitudes))

    @property
    def count(self) -> int:
        return int(self.delays.size)

    def atomic_amplitudes(self, N: int) -> np.ndarray:
        """Atomic-scale amplitudes a_k = sqrt(N) * amplitude_k."""
        return np.sqrt(N) * self.amplitudes

    def concatenate(self, other: "SpikeSignal") -> "SpikeSignal":
        return SpikeSignal(np.concatenate([self.delays, other.delays]),
                           np.concatenate([self.amplitudes, other.amplitudes]))

    def to_dict(self) -> Dict[str, Any]:
        return {"delays": self.delays.tolist(), "amplitudes": complex_to_json(self.amplitudes)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpikeSignal":
        return cls(np.asarray(data["delays"], dtype=float), complex_from_json(data["amplitudes"]))


@dataclass(frozen=True, eq=False)
class SubspaceModel:
    """
    N x L subspace matrix B whose rows b_n span the PSF: g = B h.

    ``coherence`` is max |B_ni|^2. It is exact (1) for fourier-row draws and an
    empirical maximum for Gaussian draws, where no deterministic bound exists.
    """

    B: np.ndarray
    kind: str = "explicit"
    coherence: float = field(default=float("nan"))
    coherence_is_deterministic: bool = False

    def __post_init__(self):
        B = np.asarray(self.B, dtype=complex)
        if B.ndim != 2:
            raise DomainError(f"Subspace matrix must be 2-D, got shape {B.shape}")
        N, L = B.shape
        if L < 1 or L > N:
            raise DomainError(f"Subspace needs 1 <= L <= N, got N={N}, L={L}")
        if self.kind not in SUBSPACE_KINDS:
            raise ConfigurationError(f"Unknown subspace kind '{self.kind}'")
        object.__setattr__(self, "B", _frozen(B))
        if np.isnan(self.coherence):
            object.__setattr__(self, "coherence", float(np.max(np.abs(B) ** 2)))

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def L(self) -> int:
        return self.B.shape[1]

    @property
    def row_energy(self) -> np.ndarray:
        """||b_n||^2 per row."""
        return np.sum(np.abs(self.B) ** 2, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "coherence": self.coherence,
            "coherence_is_deterministic": self.coherence_is_deterministic,
            "B": [complex_to_json(row) for row in self.B],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SubspaceModel":
        B = np.array([complex_from_json(row) for row in data["B"]])
        return cls(B, kind=data.get("kind", "explicit"),
                   coherence=data.get("coherence", float("nan")),
                   coherence_is_deterministic=data.get("coherence_is_deterministic", False))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """
    Measurements and everything needed to solve and score them.

    ``epsilon == 0`` marks a noiseless instance. Ground truth (spikes, h, w) is
    optional; when present, y - diag(B h) x equals w.
    """

    y: np.ndarray
    subspace: SubspaceModel
    indexing: IndexingConvention
    epsilon: float = 0.0
    spikes: Optional[SpikeSignal] = None
    h: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    sigma: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).reshape(-1)
        if y.size != self.subspace.N:
            raise DomainError(f"y has length {y.size}, subspace has N={self.subspace.N}")
        if self.indexing.N != y.size:
            raise ConventionError(f"Indexing N={self.indexing.N} does not match y length {y.size}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise DomainError(f"Noise level must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "y", _frozen(y))
        if self.h is not None:
            h = np.asarray(self.h, dtype=complex).reshape(-1)
            if h.size != self.subspace.L:
                raise DomainError(f"h has length {h.size}, subspace has L={self.subspace.L}")
            object.__setattr__(self, "h", _frozen(h))
        if self.w is not None:
            object.__setattr__(self, "w", _frozen(np.asarray(self.w, dtype=complex).reshape(-1)))

    @property
    def N(self) -> int:
        return self.subspace.N

    @property
    def L(self) -> int:
        return self.subspace.L

    @property
    def noisy(self) -> bool:
        return self.epsilon > 0

    def has_ground_truth(self) -> bool:
        return self.spikes is not None and self.h is not None

    def ground_truth_spectrum(self) -> np.ndarray:
        if self.spikes is None:
            raise DomainError("Instance carries no ground-truth spikes")
        return synth_spike_spectrum(self.spikes, self.N, self.indexing)

    def ground_truth_lift(self) -> np.ndarray:
        """Z* = x h^T."""
        if not self.has_ground_truth():
            raise DomainError("Instance carries no ground truth")
        return np.outer(self.ground_truth_spectrum(), self.h)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "N": self.N,
            "L": self.L,
            "indexing": self.indexing.kind,
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "y": complex_to_json(self.y),
            "subspace": self.subspace.to_dict(),
        }
        if self.spikes is not None:
            data["spikes"] = self.spikes.to_dict()
        if self.h is not None:
            data["h"] = complex_to_json(self.h)
        if self.w is not None:
            data["w"] = complex_to_json(self.w)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProblemInstance":
        subspace = SubspaceModel.from_dict(data["subspace"])
        return cls(
            y=complex_from_json(data["y"]),
            subspace=subspace,
            indexing=IndexingConvention(data.get("indexing", SHIFTED), subspace.N),
            epsilon=float(data.get("epsilon", 0.0)),
            spikes=SpikeSignal.from_dict(data["spikes"]) if "spikes" in data else None,
            h=complex_from_json(data["h"]) if "h" in data else None,
            w=complex_from_json(data["w"]) if "w" in data else None,
            sigma=float(data.get("sigma", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))


def complex_to_json(values: Sequence[complex]) -> list:
    """Complex vector as a list of [re, im] pairs."""
    values = np.asarray(values, dtype=complex).reshape(-1)
    return [[float(v.real), float(v.imag)] for v in values]


def complex_from_json(pairs: Sequence[Sequence[float]]) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return pairs[:, 0] + 1j * pairs[:, 1]


def _check_delay(tau: float) -> float:
    if not np.isfinite(tau) or tau < 0 or tau >= 1:
        raise DomainError(f"Delay must lie in [0, 1), got {tau}")
    return float(tau)


def steering_vector(tau: float, N: int,
                    indexing: Union[str, IndexingConvention] = SHIFTED) -> np.ndarray:
    """c(tau) with entries e^{-j 2 pi n tau} / sqrt(N); unit Euclidean norm."""
    tau = _check_delay(tau)
    n = sample_indices(N, indexing)
    return np.exp(-2j * np.pi * n * tau) / np.sqrt(N)


def steering_matrix(delays: Sequence[float], N: int,
                    indexing: Union[str, IndexingConvention] = SHIFTED) -> np.ndarray:
    """N x K matrix whose columns are c(tau_k)."""
    delays = np.asarray(delays, dtype=float).reshape(-1)
    for tau in delays:
        _check_delay(tau)
    n = sample_indices(N, indexing)
    return np.exp(-2j * np.pi * np.outer(n, delays)) / np.sqrt(N)


def steering_derivatives(tau: float, N: int, indexing: Union[str, IndexingConvention] = SHIFTED,
                         order: int = 2) -> np.ndarray:
    """
    Rows are d^m c / d tau^m for m = 0..order.

    Each derivative multiplies entry n by (-j 2 pi n).
    """
    if order < 0 or order > 3:
        raise DomainError(f"Derivative order must be in 0..3, got {order}")
    c = steering_vector(tau, N, indexing)
    factor = -2j * np.pi * sample_indices(N, indexing)
    return np.stack([factor ** m * c for m in range(order + 1)])


def synth_spike_spectrum(spikes: SpikeSignal, N: int,
                         indexing: Union[str, IndexingConvention] = SHIFTED) -> np.ndarray:
    """x_n = sum_k amplitude_k e^{-j 2 pi n tau_k}."""
    if spikes.count == 0:
        resolve_indexing(N, indexing)
        return np.zeros(N, dtype=complex)
    return np.sqrt(N) * steering_matrix(spikes.delays, N, indexing) @ spikes.amplitudes


def sample_subspace(kind: str, N: int, L: int, seed: Seed = None) -> SubspaceModel:
    """
    Draw a random subspace with E b b^H = I_L.

    Args:
        kind: 'fourier-row' (rows [1, e^{j2pi f}, ..., e^{j2pi(L-1)f}], f uniform),
            'complex-gaussian' (CN(0, 1) entries) or 'real-gaussian' (N(0, 1) entries)
        N: number of rows
        L: subspace dimension, L <= N
        seed: integer seed or Generator

    Raises:
        ConfigurationError: unknown kind
        DomainError: L outside 1..N
    """
    if kind not in SUBSPACE_KINDS or kind == "explicit":
        raise ConfigurationError(f"Cannot sample subspace kind '{kind}'")
    if L < 1 or L > N:
        raise DomainError(f"Subspace needs 1 <= L <= N, got N={N}, L={L}")
    rng = as_rng(seed)

    if kind == "fourier-row":
        f = rng.uniform(0.0, 1.0, size=N)
        B = np.exp(2j * np.pi * np.outer(f, np.arange(L)))
        return SubspaceModel(B, kind=kind, coherence=1.0, coherence_is_deterministic=True)

    if kind == "complex-gaussian":
        B = (rng.standard_normal((N, L)) + 1j * rng.standard_normal((N, L))) / np.sqrt(2)
    else:
        B = rng.standard_normal((N, L)).astype(complex)
    subspace = SubspaceModel(B, kind=kind)
    logging.debug(f"Sampled {kind} subspace N={N} L={L}, empirical coherence {subspace.coherence:.3f}")
    return subspace


def synth_psf(subspace: SubspaceModel, h: Sequence[complex]) -> np.ndarray:
    """g = B h."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    if h.size != subspace.L:
        raise DomainError(f"h has length {h.size}, subspace has L={subspace.L}")
    return subspace.B @ h


def measure(g: Sequence[complex], x: Sequence[complex],
            w: Optional[Sequence[complex]] = None) -> np.ndarray:
    """y_n = g_n x_n + w_n."""
    g = np.asarray(g, dtype=complex).reshape(-1)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if g.size != x.size:
        raise DomainError(f"PSF length {g.size} != spectrum length {x.size}")
    y = g * x
    if w is not None:
        w = np.asarray(w, dtype=complex).reshape(-1)
        if w.size != y.size:
            raise DomainError(f"Noise length {w.size} != measurement length {y.size}")
        y = y + w
    return y


def wrap_distance(a, b) -> np.ndarray:
    """Distance on the unit circle: min(|a - b|, 1 - |a - b|)."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0))
    return np.minimum(d, 1.0 - d)


def min_separation(delays: Sequence[float]) -> float:
    """Minimum pairwise wrap-around distance; +inf for fewer than two delays."""
    delays = np.sort(np.asarray(delays, dtype=float).reshape(-1))
    if delays.size < 2:
        return float("inf")
    gaps = np.diff(np.append(delays, delays[0] + 1.0))
    return float(np.min(gaps))


def _sample_amplitudes(K: int, dynamic_range_db: float, rng: np.random.Generator) -> np.ndarray:
    modulus = 10.0 ** (rng.uniform(0.0, dynamic_range_db, size=K) / 20.0)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=K)
    return modulus * np.exp(1j * phase)


def _separated_delays(K: int, delta_min: float, rng: np.random.Generator) -> np.ndarray:
    if K <= 1 or delta_min <= 0:
        return np.sort(rng.uniform(0.0, 1.0, size=K))

    attempts = 0
    while attempts < MAX_REJECTION_ATTEMPTS:
        batch = np.sort(rng.uniform(0.0, 1.0, size=(_REJECTION_BATCH, K)), axis=1)
        gaps = np.diff(np.concatenate([batch, batch[:, :1] + 1.0], axis=1), axis=1)
        ok = np.flatnonzero(gaps.min(axis=1) >= delta_min)
        if ok.size:
            return batch[ok[0]]
        attempts += _REJECTION_BATCH

    logging.info(f"Rejection sampling exhausted for K={K}, delta_min={delta_min:.4g}; "
                 f"using spacing construction")
    gaps = delta_min + (1.0 - K * delta_min) * rng.dirichlet(np.ones(K))
    delays = np.mod(rng.uniform(0.0, 1.0) + np.concatenate([[0.0], np.cumsum(gaps[:-1])]), 1.0)
    return np.sort(np.minimum(delays, np.nextafter(1.0, 0.0)))


def draw_separated_spikes(K: int, delta_min: float,
                          amplitude: Union[AmplitudeSpec, float, None] = None,
                          seed: Seed = None) -> SpikeSignal:
    """
    Draw K spikes with wrap-around separation >= delta_min.

    Delays are uniform subject to the separation; amplitude moduli are
    10^(d/20) with d ~ U[0, dynamic range] and phases are uniform.

    Raises:
        ConfigurationError: K * delta_min >= 1 (no separated configuration exists)
    """
    if K < 0:
        raise ConfigurationError(f"Spike count must be >= 0, got {K}")
    if K >= 2 and K * delta_min >= 1:
        raise ConfigurationError(f"Cannot separate K={K} spikes by {delta_min}: K * delta_min >= 1")
    if amplitude is None:
        amplitude = AmplitudeSpec()
    dynamic_range_db = amplitude.dynamic_range_db if isinstance(amplitude, AmplitudeSpec) else float(amplitude)
    rng = as_rng(seed)
    delays = _separated_delays(K, delta_min, rng)
    return SpikeSignal(delays, _sample_amplitudes(K, dynamic_range_db, rng))


def draw_coefficients(h_law: str, L: int, rng: np.random.Generator) -> np.ndarray:
    """PSF coefficient vector h drawn by the configured law."""
    if h_law == "ones":
        return np.ones(L, dtype=complex)
    if h_law == "gaussian":
        return rng.standard_normal(L).astype(complex)
    if h_law == "complex-gaussian":
        return (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2)
    raise ConfigurationError(f"Unknown h law '{h_law}', expected one of {H_LAWS}")


def noise_for_snr(y_clean: Sequence[complex], snr_db: float,
                  seed: Seed = None) -> Tuple[np.ndarray, float]:
    """
    Complex white noise CN(0, sigma^2) at the requested SNR.

    SNR = 10 log10(||y_clean||^2 / (N sigma^2)).

    Returns:
        (w, sigma)
    """
    y_clean = np.asarray(y_clean, dtype=complex).reshape(-1)
    N = y_clean.size
    power = np.vdot(y_clean, y_clean).real
    if power == 0:
        raise DomainError("SNR is undefined for an all-zero clean signal")
    sigma = float(np.sqrt(power / (N * 10.0 ** (snr_db / 10.0))))
    return complex_noise(N, sigma, seed), sigma


def complex_noise(N: int, sigma: float, seed: Seed = None) -> np.ndarray:
    rng = as_rng(seed)
    return sigma * (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)


def epsilon_rule(sigma: float, N: int) -> float:
    """Noise ball radius sigma * sqrt(N + 2 sqrt(N log N))."""
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    return float(sigma * np.sqrt(N + 2.0 * np.sqrt(N * np.log(N))))


def synthesize_instance(N: int, K: int, L: int, seed: Seed = None,
                        subspace_kind: str = "real-gaussian", h_law: str = "gaussian",
                        delta_min: Optional[float] = None,
                        amplitude: Union[AmplitudeSpec, float, None] = None,
                        sigma: Optional[float] = None, snr_db: Optional[float] = None,
                        epsilon: Optional[float] = None,
                        indexing: Union[str, IndexingConvention] = SHIFTED) -> ProblemInstance:
    """
    Generate a complete instance: spikes, subspace, h and (optionally) noise.

    Randomness is consumed in a fixed order (spikes, subspace, h, noise) from one
    generator, so a seed pins the whole instance.

    Args:
        delta_min: separation to enforce; defaults to 1/N, pass 0 for unconstrained
        sigma: noise standard deviation (mutually exclusive with snr_db)
        snr_db: target SNR; sigma is derived from the clean measurements
        epsilon: explicit noise ball radius; defaults to epsilon_rule(sigma, N)
    """
    if sigma is not None and snr_db is not None:
        raise ConfigurationError("Give either sigma or snr_db, not both")
    convention = resolve_indexing(N, indexing)
    rng = as_rng(seed)
    if delta_min is None:
        delta_min = 1.0 / N

    spikes = draw_separated_spikes(K, delta_min, amplitude, rng)
    subspace = sample_subspace(subspace_kind, N, L, rng)
    h = draw_coefficients(h_law, L, rng)
    clean = measure(synth_psf(subspace, h), synth_spike_spectrum(spikes, N, convention))

    w = None
    noise_sigma = 0.0
    if snr_db is not None:
        w, noise_sigma = noise_for_snr(clean, snr_db, rng)
    elif sigma is not None and sigma > 0:
        noise_sigma = float(sigma)
        w = complex_noise(N, noise_sigma, rng)

    if epsilon is None:
        epsilon = epsilon_rule(noise_sigma, N) if noise_sigma > 0 else 0.0
    y = clean if w is None else clean + w
    return ProblemInstance(y=y, subspace=subspace, indexing=convention, epsilon=float(epsilon),
                           spikes=spikes, h=h, w=w, sigma=noise_sigma)


def calibrate_with_known_psf(y: Sequence[complex], g: Sequence[complex],
                             floor: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """
    Deconvolution with a known PSF: x = y / g entrywise.

    Entries with |g_n| <= floor * max|g| are set to zero.

    Returns:
        (x, mask) where mask marks the zeroed entries
    """
    y = np.asarray(y, dtype=complex).reshape(-1)
    g = np.asarray(g, dtype=complex).reshape(-1)
    if y.size != g.size:
        raise DomainError(f"Length mismatch: y={y.size}, g={g.size}")
    scale = np.max(np.abs(g)) if g.size else 0.0
    mask = np.abs(g) <= floor * scale
    x = np.zeros_like(y)
    x[~mask] = y[~mask] / g[~mask]
    if np.any(mask):
        logging.warning(f"Known-PSF deconvolution zeroed {int(mask.sum())} samples with negligible PSF")
    return x, mask


def time_domain_rendering(v: Sequence[complex], indexing: Union[str, IndexingConvention] = SHIFTED,
                          oversample: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverse DFT of Fourier samples on a fine grid t in [0, 1).

    value(t) = (1/N) sum_n v_n e^{j 2 pi n t}; a spike spectrum renders as
    Dirichlet kernels centred on its delays with height equal to the amplitude.
    """
    v = np.asarray(v, dtype=complex).reshape(-1)
    N = v.size
    convention = resolve_indexing(N, indexing)
    G = max(int(oversample), 1) * N
    t = np.arange(G) / G
    values = np.fft.ifft(v, G) * G / N
    values *= np.exp(2j * np.pi * convention.first_index * t)
    return t, values
