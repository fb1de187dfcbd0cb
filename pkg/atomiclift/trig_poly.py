"""
Vector-valued trigonometric polynomials

P(tau) = (1/sqrt(N)) sum_n e^{-j 2 pi tau n} c_n with c_n in C^L, the shape of
both Y^H c(tau) (dual atomic norm) and the dual polynomial Q(tau). Shared by the
solver and the localizer.
"""

from typing import Tuple

import numpy as np

# Points per batch when evaluating at many delays
_CHUNK = 4096


def evaluate(coeffs: np.ndarray, indices: np.ndarray, taus, order: int = 0) -> np.ndarray:
    """
    Derivatives P^(m)(tau) for m = 0..order.

    Returns:
        array of shape (order + 1, len(taus), L)
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    N = coeffs.shape[0]
    factor = -2j * np.pi * indices.astype(float)
    weighted = [(factor ** m)[:, None] * coeffs for m in range(order + 1)]
    out = np.empty((order + 1, taus.size, coeffs.shape[1]), dtype=complex)
    for start in range(0, taus.size, _CHUNK):
        chunk = taus[start:start + _CHUNK]
        phases = np.exp(-2j * np.pi * np.outer(chunk, indices)) / np.sqrt(N)
        for m in range(order + 1):
            out[m, start:start + chunk.size] = phases @ weighted[m]
    return out


def grid_values(coeffs: np.ndarray, first_index: int, grid_size: int) -> np.ndarray:
    """P(g / G) for g = 0..G-1 by zero-padded FFT; shape (G, L)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    N = coeffs.shape[0]
    G = max(int(grid_size), N)
    values = np.fft.fft(coeffs, n=G, axis=0) / np.sqrt(N)
    if first_index:
        values *= np.exp(-2j * np.pi * first_index * np.arange(G) / G)[:, None]
    return values


def grid_norms(coeffs: np.ndarray, first_index: int, grid_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """(tau grid, ||P(tau)||_2) on a uniform grid."""
    values = grid_values(coeffs, first_index, grid_size)
    G = values.shape[0]
    return np.arange(G) / G, np.linalg.norm(values, axis=1)


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of circular local maxima (plateaus report their first point)."""
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    return np.flatnonzero((values >= left) & (values > right))


def refine_maxima(coeffs: np.ndarray, indices: np.ndarray, taus, steps: int,
                  max_step: float, tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """
    Newton ascent on f(tau) = ||P(tau)||^2 from each starting delay.

    f' = 2 Re(P'^H P) and f'' = 2 Re(P''^H P) + 2 ||P'||^2. A step is taken only
    where f'' < 0, |step| < max_step and f does not decrease.

    Returns:
        (refined delays in [0, 1), ||P|| at the refined delays)
    """
    taus = np.mod(np.atleast_1d(np.asarray(taus, dtype=float)), 1.0)
    derivs = evaluate(coeffs, indices, taus, order=2)
    value = np.sum(np.abs(derivs[0]) ** 2, axis=1)
    for _ in range(steps):
        d1 = 2.0 * np.real(np.sum(derivs[1].conj() * derivs[0], axis=1))
        d2 = 2.0 * np.real(np.sum(derivs[2].conj() * derivs[0], axis=1)) \
            + 2.0 * np.sum(np.abs(derivs[1]) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d2 < 0, -d1 / d2, 0.0)
        step = np.where(np.abs(step) < max_step, step, 0.0)
        if not np.any(np.abs(step) > tol):
            break
        trial = np.mod(taus + step, 1.0)
        trial_derivs = evaluate(coeffs, indices, trial, order=2)
        trial_value = np.sum(np.abs(trial_derivs[0]) ** 2, axis=1)
        accept = (trial_value >= value) & (step != 0)
        taus = np.where(accept, trial, taus)
        value = np.where(accept, trial_value, value)
        derivs[:, accept] = trial_derivs[:, accept]
    return taus, np.sqrt(value)


def supremum(coeffs: np.ndarray, indices: np.ndarray, grid_size: int,
             newton_steps: int = 3) -> Tuple[float, float]:
    """
    sup over tau of ||P(tau)||_2 and its location.

    P has trigonometric degree D = N - 1 after factoring out the index offset, so
    by Bernstein's inequality |d||P||/dtau| <= 2 pi D sup||P||. With spacing 1/G
    the grid maximum is within a factor 1 - pi D / G of the supremum before
    refinement; Newton steps then close the remaining gap at each local maximum.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if not np.any(coeffs):
        return 0.0, 0.0
    taus, norms = grid_norms(coeffs, int(indices[0]), grid_size)
    candidates = local_maxima(norms)
    if candidates.size == 0:
        candidates = np.array([int(np.argmax(norms))])
    refined, refined_norms = refine_maxima(coeffs, indices, taus[candidates], newton_steps,
                                           max_step=1.0 / taus.size)
    best = int(np.argmax(refined_norms))
    if refined_norms[best] < norms.max():
        g = int(np.argmax(norms))
        return float(norms[g]), float(taus[g])
    return float(refined_norms[best]), float(refined[best])
