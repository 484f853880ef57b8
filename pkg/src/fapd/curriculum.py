"""Server-side knowledge hierarchy and pacing.

`build_rotation` fits a PCA basis over calibration teacher features; its rows
order directions by explained variance. The curriculum controller widens the
projected dimension k only when recent global accuracies have plateaued.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, as_vector, covariance, eig_sym


@dataclass(frozen=True)
class RotationMatrix:
    """Orthogonal basis R (rows = principal directions, descending variance)
    plus the calibration mean used for centering."""

    R: np.ndarray  # (D, D)
    eigenvalues: np.ndarray  # (D,), non-increasing, clamped at 0
    mean: np.ndarray  # (D,)

    @property
    def dim(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class CurriculumState:
    k: int
    k0: int
    delta_k: int
    epsilon: float
    window: int
    max_dim: int
    history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 1 <= self.k0 <= self.k <= self.max_dim:
            raise InvalidInputError(
                f"need 1 <= k0 <= k <= D, got k0={self.k0}, k={self.k}, D={self.max_dim}"
            )
        if self.delta_k < 1:
            raise InvalidInputError("delta_k must be >= 1")
        if self.window < 2:
            raise InvalidInputError("consensus window must be >= 2")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")


def initial_state(k0, delta_k, epsilon, window, max_dim) -> CurriculumState:
    return CurriculumState(k=k0, k0=k0, delta_k=delta_k, epsilon=epsilon,
                           window=window, max_dim=max_dim)


def build_rotation(calib) -> RotationMatrix:
    """PCA of calibration features: covariance, symmetric eigensolve, rows of
    R are eigenvectors in descending-eigenvalue order."""
    calib = as_matrix(calib, "calibration features")
    cov = covariance(calib)
    res = eig_sym(cov)
    eigenvalues = np.maximum(res.eigenvalues, 0.0)
    return RotationMatrix(
        R=res.eigenvectors.T.copy(),
        eigenvalues=eigenvalues,
        mean=calib.mean(axis=0),
    )


def projection_for(rot: RotationMatrix, k: int) -> np.ndarray:
    """First k rows of R (the top-variance directions)."""
    if not 1 <= k <= rot.dim:
        raise InvalidInputError(f"k={k} out of range [1, {rot.dim}]")
    return rot.R[:k]


def project_features(rot: RotationMatrix, P, z) -> np.ndarray:
    """P @ (z - calibration mean); centering keeps the variance ordering honest."""
    P = as_matrix(P, "P")
    z = as_vector(z, "z")
    if P.shape[1] != rot.dim or z.shape[0] != rot.dim:
        raise InvalidInputError("projection dimensions inconsistent with rotation")
    return P @ (z - rot.mean)


def project_features_batch(rot: RotationMatrix, P, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    return (Z - rot.mean) @ np.asarray(P).T


def stability(state: CurriculumState) -> bool:
    """True iff the window is full and every recent accuracy is within epsilon
    of the latest one. Before `window` entries exist the answer is False."""
    h = state.history
    if len(h) < state.window:
        return False
    latest = h[-1]
    return all(abs(latest - h[-i]) < state.epsilon for i in range(2, state.window + 1))


def advance(state: CurriculumState) -> CurriculumState:
    """Widen k by delta_k (clamped at D) when the plateau condition holds."""
    if stability(state):
        return replace(state, k=min(state.k + state.delta_k, state.max_dim))
    return state


def record_accuracy(state: CurriculumState, acc: float) -> CurriculumState:
    if not 0.0 <= acc <= 1.0:
        raise InvalidInputError(f"accuracy {acc} outside [0, 1]")
    return replace(state, history=state.history + (float(acc),))
