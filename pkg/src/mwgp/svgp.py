"""Sparse variational objective, Gaussian KL and predictive distribution.

With paired inducing points Z = (Z^A, Z^B), inducing values u = f(Z) and
q(u) = N(mu, Sigma), the minibatch bound is

    scale * [ sum_q log N(y_q | alpha_q^T mu, s2)
              - 1/(2 s2) sum_q alpha_q^T Sigma alpha_q
              - 1/(2 s2) sum_q (k_qq - k_q^T Kmm^-1 k_q) ] - KL(q(u) || N(0, Kmm))

where alpha_q = Kmm^-1 k_q and scale = N_total / n_batch. Kmm is only ever
touched through its Cholesky factor.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .evaluation import PredictionSet
from .kernels import rbf_gram, sq_dist
from .linalg import cholesky_with_jitter, log_det_from_chol, tri_solve

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
PREDICT_CHUNK = 65536


@dataclass
class BatchKernelBlocks:
    kmm_chol: np.ndarray  # (m, m) factor of Kmm + jitter * I
    knm: np.ndarray  # (n, m)
    knn_diag: np.ndarray  # (n,)
    jitter: float = 0.0


@dataclass
class ElboBreakdown:
    data_fit: float
    trace_sigma: float
    trace_knn_qnn: float
    kl: float
    scale_factor: float

    @property
    def total(self):
        return self.scale_factor * (self.data_fit - self.trace_sigma - self.trace_knn_qnn) - self.kl

    def as_dict(self):
        return {
            "total": self.total,
            "data_fit": self.data_fit,
            "trace_sigma": self.trace_sigma,
            "trace_knn_qnn": self.trace_knn_qnn,
            "kl": self.kl,
            "scale_factor": self.scale_factor,
        }


def unpack_batch(batch):
    """Return (users, items, ratings) arrays from a dataset-like object or triple list."""
    if hasattr(batch, "users") and hasattr(batch, "items"):
        users, items, y = batch.users, batch.items, batch.ratings
    elif isinstance(batch, tuple) and len(batch) == 3 and np.ndim(batch[0]) == 1:
        users, items, y = batch
    else:
        rows = list(batch)
        users = [t[0] for t in rows]
        items = [t[1] for t in rows]
        y = [t[2] for t in rows]
    return (
        np.asarray(users, dtype=np.int64),
        np.asarray(items, dtype=np.int64),
        np.asarray(y, dtype=np.float64),
    )


def check_indices(state, users, items):
    I, J = state.config.num_users, state.config.num_items
    if users.size and (users.min() < 0 or users.max() >= I):
        raise IndexOutOfRange(f"user index outside [0, {I})")
    if items.size and (items.min() < 0 or items.max() >= J):
        raise IndexOutOfRange(f"item index outside [0, {J})")


def kmm_factor(state):
    """Kernel Gram blocks of the inducing pairs and the jittered Cholesky factor."""
    p = state.kernel
    ZA, ZB = state.inducing.ZA, state.inducing.ZB
    d2A = sq_dist(ZA, ZA)
    d2B = sq_dist(ZB, ZB)
    KA = rbf_gram(ZA, ZA, p.user_kernel, d2A)
    KB = rbf_gram(ZB, ZB, p.item_kernel, d2B)
    L, eps = cholesky_with_jitter(KA * KB, state.config.base_jitter, return_jitter=True)
    return dict(d2A=d2A, d2B=d2B, KA=KA, KB=KB, L=L, jitter=eps)


def cross_blocks(state, users, items):
    p = state.kernel
    a = state.factors.A[users]
    b = state.factors.B[items]
    d2A = sq_dist(a, state.inducing.ZA)
    d2B = sq_dist(b, state.inducing.ZB)
    KA = rbf_gram(a, state.inducing.ZA, p.user_kernel, d2A)
    KB = rbf_gram(b, state.inducing.ZB, p.item_kernel, d2B)
    return dict(a=a, b=b, d2A=d2A, d2B=d2B, KA=KA, KB=KB, knm=KA * KB)


def batch_blocks(state, batch):
    users, items, _ = unpack_batch(batch)
    check_indices(state, users, items)
    mm = kmm_factor(state)
    nm = cross_blocks(state, users, items)
    return BatchKernelBlocks(
        mm["L"], nm["knm"], np.full(users.size, state.kernel.amplitude), mm["jitter"]
    )


def kl_gaussian(q, kmm_chol):
    """KL( N(mu, S S^T) || N(0, L L^T) )."""
    L = np.asarray(kmm_chol, dtype=np.float64)
    S = q.scale
    mu = q.mu
    m = mu.shape[0]
    if L.shape != (m, m) or S.shape != (m, m):
        raise DimensionMismatch(f"KL dims: mu {mu.shape}, scale {S.shape}, chol {L.shape}")
    LiS = tri_solve(L, S)
    Limu = tri_solve(L, mu)
    trace = float(np.sum(LiS**2))
    maha = float(Limu @ Limu)
    logdet_ratio = log_det_from_chol(L) - 2.0 * float(np.sum(np.log(np.diag(S))))
    return 0.5 * (trace + maha - m + logdet_ratio)


def forward(state, users, items, y, n_total):
    """Evaluate the minibatch bound, keeping the intermediates the adjoint needs."""
    if users.size == 0:
        raise ValueError("empty batch")
    check_indices(state, users, items)
    n = users.size
    mm = kmm_factor(state)
    nm = cross_blocks(state, users, items)
    L = mm["L"]
    mu = state.variational.mu
    S = state.variational.scale
    s2 = state.noise.variance
    amp = state.kernel.amplitude

    V = tri_solve(L, nm["knm"].T)  # (m, n) = L^-1 Kmn
    alpha = tri_solve(L, V, transpose=True)  # (m, n) = Kmm^-1 Kmn
    resid = y - alpha.T @ mu
    StA = S.T @ alpha
    resid_knn = amp - np.sum(V**2, axis=0)
    worst = resid_knn.min()
    if worst < -1e-6 * amp:
        log.warning("K_nn - Q_nn diagonal went negative (%.3e); clamping", worst)
    knn_mask = resid_knn > 0.0

    data_fit = -0.5 * n * (LOG_2PI + np.log(s2)) - 0.5 * float(resid @ resid) / s2
    trace_sigma = 0.5 * float(np.sum(StA**2)) / s2
    trace_knn = 0.5 * float(np.sum(resid_knn[knn_mask])) / s2
    kl = kl_gaussian(state.variational, L)
    elbo = ElboBreakdown(data_fit, trace_sigma, trace_knn, kl, float(n_total) / n)
    cache = dict(mm=mm, nm=nm, V=V, alpha=alpha, resid=resid, S=S, knn_mask=knn_mask,
                 users=users, items=items, s2=s2, n=n)
    return elbo, cache


def elbo_minibatch(state, batch, n_total):
    users, items, y = unpack_batch(batch)
    elbo, _ = forward(state, users, items, y, n_total)
    return elbo


def full_elbo(state, data):
    """Bound over the whole dataset (scale factor 1), ratings centered by ``state.y_mean``."""
    users, items, y = unpack_batch(data)
    return elbo_minibatch(state, (users, items, y - state.y_mean), users.size)


def predict(state, pairs, chunk_size=PREDICT_CHUNK):
    """Predictive mean and standard deviation (noise included) for (user, item) pairs."""
    if hasattr(pairs, "users"):
        users, items = np.asarray(pairs.users), np.asarray(pairs.items)
    else:
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        users, items = arr[:, 0], arr[:, 1]
    users = users.astype(np.int64)
    items = items.astype(np.int64)
    check_indices(state, users, items)

    L = kmm_factor(state)["L"]
    mu = state.variational.mu
    S = state.variational.scale
    s2 = state.noise.variance
    amp = state.kernel.amplitude
    n = users.size
    mean = np.empty(n)
    var = np.empty(n)
    for start in range(0, n, chunk_size):
        sl = slice(start, start + chunk_size)
        knm = cross_blocks(state, users[sl], items[sl])["knm"]
        V = tri_solve(L, knm.T)
        alpha = tri_solve(L, V, transpose=True)
        mean[sl] = alpha.T @ mu
        resid_knn = np.maximum(amp - np.sum(V**2, axis=0), 0.0)
        var[sl] = resid_knn + np.sum((S.T @ alpha) ** 2, axis=0) + s2
    return PredictionSet(mean=mean + state.y_mean, std=np.sqrt(var))
