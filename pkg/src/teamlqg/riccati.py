"""Discrete-time Riccati machinery and stabilizability/detectability tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, numerical_rank, psd_sqrt, spectral_radius, sym

# Eigenvalues this close to (or outside) the unit circle count as modes that
# must be controlled/observed.
UNIT_CIRCLE_MARGIN = 1e-10


class RiccatiError(RuntimeError):
    pass


class ConvergenceError(RiccatiError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def riccati_step(A, B, Q, R, P_next):
    """One backward step of the value recursion.

    Returns (P, K) with K = -(R + B^T P' B)^{-1} B^T P' A and
    P = Q + A^T P' A - A^T P' B (R + B^T P' B)^{-1} B^T P' A, symmetrized.
    """
    A, B = as_matrix(A), as_matrix(B)
    Q, R, P_next = as_matrix(Q), as_matrix(R), as_matrix(P_next)
    G = R + B.T @ P_next @ B
    try:
        K = -np.linalg.solve(G, B.T @ P_next @ A)
    except np.linalg.LinAlgError as exc:
        raise RiccatiError("R + B^T P B is not invertible") from exc
    P = Q + A.T @ P_next @ A + A.T @ P_next @ B @ K
    return sym(P), K


def is_stabilizable(A, B):
    """PBH test: rank [A - lam I, B] = n for every eigenvalue with |lam| >= 1."""
    A, B = as_matrix(A), as_matrix(B)
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - UNIT_CIRCLE_MARGIN:
            M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if numerical_rank(M) < n:
                return False
    return True


def is_detectable(A, C):
    A, C = as_matrix(A), as_matrix(C)
    return is_stabilizable(A.T, C.T)


@dataclass(frozen=True)
class DareSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int


def dare_solve(A, B, Q, R, tol=1e-10, max_iter=10000) -> DareSolution:
    """Stationary value matrix as the fixed point of the backward recursion.

    Iterates from P = 0, mirroring the horizon limit of the finite recursion;
    stabilizability of (A, B) and detectability of (A, Q^{1/2}) are checked
    up front.
    """
    A, B, Q, R = as_matrix(A), as_matrix(B), as_matrix(Q), as_matrix(R)
    if not is_stabilizable(A, B):
        raise RiccatiError("(A, B) is not stabilizable")
    if not is_detectable(A, psd_sqrt(Q)):
        raise RiccatiError("(A, Q^(1/2)) is not detectable")
    P = np.zeros_like(Q)
    K = np.zeros((B.shape[1], A.shape[0]))
    diff = np.inf
    for it in range(1, max_iter + 1):
        P_new, K = riccati_step(A, B, Q, R, P)
        diff = float(np.linalg.norm(P_new - P))
        P = P_new
        if diff < tol:
            defect, _ = riccati_step(A, B, Q, R, P)
            residual = float(np.linalg.norm(defect - P))
            return DareSolution(P=P, K=K, residual=residual, iterations=it)
    raise ConvergenceError(
        f"DARE iteration did not converge in {max_iter} steps "
        f"(last successive-iterate norm {diff:.3e})",
        residual=diff,
    )


__all__ = [
    "DareSolution",
    "RiccatiError",
    "ConvergenceError",
    "riccati_step",
    "dare_solve",
    "is_stabilizable",
    "is_detectable",
    "spectral_radius",
]
