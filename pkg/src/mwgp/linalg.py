"""Dense Cholesky helpers used by the GP core.

Everything works on float64 numpy arrays. Lower-triangular factors are plain
2-D arrays with zeros above the diagonal.
"""
import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, FactorizationFailure

NUM_JITTER_LEVELS = 9


def jitter_schedule(M, base_jitter):
    """Jitter values tried in order: 0, then base * mean(diag) * 10**k for k = 0..8."""
    dim = M.shape[0]
    scale = base_jitter * np.trace(M) / dim
    return [0.0] + [scale * 10.0**k for k in range(NUM_JITTER_LEVELS)]


def cholesky_with_jitter(M, base_jitter=1e-6, return_jitter=False):
    """Lower Cholesky factor of ``M + eps*I`` for the smallest working eps.

    Raises FactorizationFailure when no level in ``jitter_schedule`` succeeds.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise FactorizationFailure("matrix has non-finite entries")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(scale, 1.0):
        raise DimensionMismatch("matrix is not symmetric")

    eye = np.eye(M.shape[0])
    for eps in jitter_schedule(M, base_jitter):
        try:
            L = sla.cholesky(M + eps * eye, lower=True, check_finite=False)
        except sla.LinAlgError:
            continue
        # LAPACK can "succeed" with a zero/negative pivot squeezed through rounding
        if np.all(np.diag(L) > 0) and np.all(np.isfinite(L)):
            return (L, eps) if return_jitter else L
    raise FactorizationFailure(
        f"Cholesky failed for all jitter levels up to {eps:.3e} (dim={M.shape[0]})"
    )


def tri_solve(L, B, transpose=False):
    """Solve ``L X = B`` (or ``L^T X = B`` when ``transpose``) for lower-triangular L."""
    L = np.asarray(L, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or B.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"cannot solve {L.shape} against {B.shape}")
    return sla.solve_triangular(L, B, lower=True, trans=1 if transpose else 0, check_finite=False)


def chol_solve(L, B):
    """Solve ``(L L^T) X = B``."""
    return tri_solve(L, tri_solve(L, B), transpose=True)


def log_det_from_chol(L):
    """log det(L L^T)."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))
