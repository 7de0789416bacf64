"""RBF kernels on latent vectors and the paired (user x item) product kernel.

A training triple (i, j, y) is represented by its latent pair (a_i, b_j); an
inducing point is a coupled pair (z^A_l, z^B_l). The similarity between two
pairs is ``k_A(a, a') * k_B(b, b')``, so K_mm and K_nm are elementwise products
of two ordinary RBF Gram matrices.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch
from .transforms import inv_softplus, softplus


@dataclass
class RbfParams:
    """Isotropic RBF kernel in unconstrained coordinates.

    ``lengthscale = softplus(raw_lengthscale)`` and likewise for the variance.
    """

    raw_lengthscale: float = float(inv_softplus(1.0))
    raw_variance: float = float(inv_softplus(1.0))
    fixed_variance: bool = False

    @property
    def lengthscale(self):
        return float(softplus(self.raw_lengthscale))

    @property
    def variance(self):
        if self.fixed_variance:
            return 1.0
        return float(softplus(self.raw_variance))

    @classmethod
    def from_values(cls, lengthscale=1.0, variance=1.0, fixed_variance=False):
        return cls(
            raw_lengthscale=float(inv_softplus(lengthscale)),
            raw_variance=float(inv_softplus(variance if not fixed_variance else 1.0)),
            fixed_variance=fixed_variance,
        )


@dataclass
class PairedKernelParams:
    """k_A on user latents and k_B on item latents; k_B variance is pinned to 1."""

    user_kernel: RbfParams = field(default_factory=RbfParams)
    item_kernel: RbfParams = field(default_factory=lambda: RbfParams(fixed_variance=True))

    @classmethod
    def from_values(cls, user_lengthscale=1.0, user_variance=1.0, item_lengthscale=1.0):
        return cls(
            RbfParams.from_values(user_lengthscale, user_variance),
            RbfParams.from_values(item_lengthscale, fixed_variance=True),
        )

    @property
    def amplitude(self):
        """Prior variance of a single pair, sigma_A^2 * sigma_B^2."""
        return self.user_kernel.variance * self.item_kernel.variance


def rbf(x, x2, p):
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise DimensionMismatch(f"latent vectors differ in shape: {x.shape} vs {x2.shape}")
    d2 = float(np.sum((x - x2) ** 2))
    return p.variance * float(np.exp(-0.5 * d2 / p.lengthscale**2))


def paired_kernel(a, b, a2, b2, p):
    return rbf(a, a2, p.user_kernel) * rbf(b, b2, p.item_kernel)


def sq_dist(X, Y):
    """Pairwise squared Euclidean distances.

    Computed from explicit differences so that ``sq_dist(X, X)`` is exactly
    symmetric with a zero diagonal.
    """
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"latent dims differ: {X.shape[1]} vs {Y.shape[1]}")
    return cdist(X, Y, "sqeuclidean")


def rbf_gram(X, Y, p, d2=None):
    """RBF Gram matrix between the rows of X and Y."""
    if d2 is None:
        d2 = sq_dist(X, Y)
    return p.variance * np.exp(-0.5 * d2 / p.lengthscale**2)


def _check_pairs(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"paired inputs must have equal rows: {A.shape} vs {B.shape}")
    return A, B


def build_kmm(ZA, ZB, p):
    ZA, ZB = _check_pairs(ZA, ZB)
    KA = rbf_gram(ZA, ZA, p.user_kernel)
    KB = rbf_gram(ZB, ZB, p.item_kernel)
    return KA * KB


def build_knm(batch_a, batch_b, ZA, ZB, p):
    batch_a, batch_b = _check_pairs(batch_a, batch_b)
    ZA, ZB = _check_pairs(ZA, ZB)
    return rbf_gram(batch_a, ZA, p.user_kernel) * rbf_gram(batch_b, ZB, p.item_kernel)


def diag_knn(batch_a, batch_b, p):
    batch_a, batch_b = _check_pairs(batch_a, batch_b)
    return np.full(batch_a.shape[0], p.amplitude)


def rbf_gram_backward(X, Y, K, d2, G, p):
    """Adjoint of ``K = rbf_gram(X, Y, p)`` given upstream gradient G = dF/dK.

    Returns (dF/dX, dF/dY, dF/dlengthscale, dF/dvariance).
    """
    W = G * K
    ell2 = p.lengthscale**2
    gX = (W @ Y - W.sum(axis=1)[:, None] * X) / ell2
    gY = (W.T @ X - W.sum(axis=0)[:, None] * Y) / ell2
    g_ell = float(np.sum(W * d2)) / (ell2 * p.lengthscale)
    g_var = float(np.sum(W)) / p.variance
    return gX, gY, g_ell, g_var
