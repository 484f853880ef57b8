"""Dense real linear algebra: covariance, symmetric eigendecomposition,
projection, and L2 normalization.

Matrices are row-major float64 numpy arrays; vectors are 1-D float64 arrays.
All functions are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, InsufficientSamplesError, InvalidInputError

JACOBI_TOL_FACTOR = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class EigenResult:
    """Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.

    Column i of `eigenvectors` pairs with `eigenvalues[i]`; each column's
    largest-magnitude component is made positive (ties to the lowest index).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def as_vector(a, name: str = "vector") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def covariance(features) -> np.ndarray:
    """Sample covariance (1/(M-1)) * sum (z - mean)(z - mean)^T of row features."""
    Z = as_matrix(features, "features")
    m = Z.shape[0]
    if m < 2:
        raise InsufficientSamplesError(f"covariance needs at least 2 rows, got {m}")
    centered = Z - Z.mean(axis=0)
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)  # kill asymmetric rounding noise
    d = np.diag(cov).copy()
    d[(d < 0) & (d >= -1e-12)] = 0.0
    np.fill_diagonal(cov, d)
    return cov


def eig_sym(A) -> EigenResult:
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations."""
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m or n < 1:
        raise InvalidInputError(f"expected a square matrix, got {n}x{m}")
    norm = np.abs(A).max()
    if np.abs(A - A.T).max() > SYMMETRY_RTOL * max(norm, 1.0):
        raise InvalidInputError("matrix is not symmetric within tolerance")
    w, V, converged = kernels.jacobi_eigh(A, JACOBI_TOL_FACTOR * norm, JACOBI_MAX_SWEEPS)
    if not converged:
        raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")

    for i in range(n):
        lead = int(np.argmax(np.abs(V[:, i])))  # argmax ties -> lowest index
        if V[lead, i] < 0:
            V[:, i] = -V[:, i]
    # descending eigenvalues; exact ties ordered by eigenvector lex order
    order = sorted(range(n), key=lambda i: (-w[i], tuple(V[:, i])))
    return EigenResult(eigenvalues=w[order], eigenvectors=V[:, order])


def project(P, z) -> np.ndarray:
    """P @ z for a k x D projection matrix and a D-vector."""
    P = as_matrix(P, "P")
    z = as_vector(z, "z")
    if P.shape[1] != z.shape[0]:
        raise InvalidInputError(
            f"projection expects {P.shape[1]} components, got {z.shape[0]}"
        )
    return P @ z


def l2_normalize(z) -> np.ndarray:
    """z / ||z||_2; zero vectors pass through unchanged."""
    z = as_vector(z, "z")
    norm = float(np.linalg.norm(z))
    if norm <= 1e-12:
        return np.zeros_like(z)
    return z / norm
