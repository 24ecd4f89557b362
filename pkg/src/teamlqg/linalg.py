"""Small shared numerical helpers (symmetrization, PSD tests, ranks)."""

import numpy as np

# Relative eigenvalue slack for PSD tests: min eig >= -PSD_REL_TOL * (1 + max eig).
PSD_REL_TOL = 1e-9
# Allowed relative asymmetry before a matrix is rejected as non-symmetric.
SYM_TOL = 1e-10


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    return M


def sym(M):
    """(M + M^T)/2 — tolerates serialization rounding before PSD checks."""
    return 0.5 * (M + M.T)


def asymmetry(M):
    return np.linalg.norm(M - M.T) / (1.0 + np.linalg.norm(M))


def min_max_eig(M):
    w = np.linalg.eigvalsh(sym(M))
    return w[0], w[-1]


def is_psd(M):
    lo, hi = min_max_eig(M)
    return lo >= -PSD_REL_TOL * (1.0 + abs(hi))


def is_pd(M):
    lo, hi = min_max_eig(M)
    return lo > 1e-12 * (1.0 + abs(hi))


def psd_sqrt(M):
    """Symmetric PSD square root (eigenvalues clamped at zero)."""
    w, V = np.linalg.eigh(sym(M))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def psd_factor(M):
    """Factor F with F @ F.T = M for PSD M (eigen-based, rank-revealing)."""
    w, V = np.linalg.eigh(sym(M))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def numerical_rank(M):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0:
        return 0
    thresh = max(M.shape) * s[0] * 1e-12
    return int(np.sum(s > thresh))


def spectral_radius(M):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))
