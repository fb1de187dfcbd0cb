"""
Lifting operator

X(Z)_n = e_n^T Z b_n (unconjugated) and its adjoint X*(p) = sum_n p_n e_n b_n^H
under the pairing <A, C> = Tr(C^H A). Every duality computation in the package
uses ``inner`` so the conjugation convention lives in one place.
"""

from typing import Sequence

import numpy as np
import scipy.sparse as sp

from atomiclift.errors import DomainError
from atomiclift.signal_model import SubspaceModel


def inner(A, C) -> complex:
    """<A, C> = Tr(C^H A); conjugates the second argument."""
    return complex(np.vdot(C, A))


def _check_lift(Z: np.ndarray, subspace: SubspaceModel) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    if Z.shape != subspace.B.shape:
        raise DomainError(f"Lifted matrix shape {Z.shape} != subspace shape {subspace.B.shape}")
    return Z


def lift_forward(Z, subspace: SubspaceModel) -> np.ndarray:
    """Entry n is sum_i Z_ni B_ni."""
    Z = _check_lift(Z, subspace)
    return np.einsum("ni,ni->n", Z, subspace.B)


def lift_adjoint(p: Sequence[complex], subspace: SubspaceModel) -> np.ndarray:
    """Entry (n, i) is p_n conj(B_ni)."""
    p = np.asarray(p, dtype=complex).reshape(-1)
    if p.size != subspace.N:
        raise DomainError(f"Dual vector length {p.size} != N={subspace.N}")
    return p[:, None] * subspace.B.conj()


def lift_matrix(subspace: SubspaceModel) -> sp.csr_matrix:
    """
    Materialized N x (N L) operator acting on row-major vec(Z).

    Small-N debugging only; row n holds b_n in columns n L .. n L + L - 1.
    """
    N, L = subspace.B.shape
    rows = np.repeat(np.arange(N), L)
    cols = np.arange(N * L)
    return sp.csr_matrix((subspace.B.reshape(-1), (rows, cols)), shape=(N, N * L))


def outer_lift(x: Sequence[complex], h: Sequence[complex]) -> np.ndarray:
    """Z = x h^T (no conjugation)."""
    return np.outer(np.asarray(x, dtype=complex), np.asarray(h, dtype=complex))
