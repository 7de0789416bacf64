"""Reverse-mode gradient of the minibatch bound, derived by hand.

The adjoint walks back through the same intermediates ``svgp.forward``
produces: alpha = Kmm^-1 Kmn, the jittered Cholesky factor of Kmm, and the
paired RBF Gram blocks. Gradients come out in the unconstrained coordinates
of ``model.flatten_params``.
"""
import numpy as np

from .kernels import rbf_gram_backward
from .linalg import chol_solve
from .model import flatten_params, make_layout, unflatten_params
from .svgp import forward, unpack_batch
from .transforms import softplus_grad


def elbo_grad(state, batch, n_total):
    """Return ``(ElboBreakdown, gradient)``; the gradient is aligned with ``flatten_params``."""
    users, items, y = unpack_batch(batch)
    elbo, c = forward(state, users, items, y, n_total)
    scale = elbo.scale_factor
    mm, nm = c["mm"], c["nm"]
    L, alpha, resid, S = mm["L"], c["alpha"], c["resid"], c["S"]
    s2, n = c["s2"], c["n"]
    mask = c["knn_mask"].astype(np.float64)
    mu = state.variational.mu
    m = mu.shape[0]

    # data terms, all functions of alpha = Kmm^-1 Kmn, Kmn itself and the noise
    StA = S.T @ alpha
    g_alpha = (np.outer(mu, resid) - S @ StA) / s2
    H = chol_solve(L, g_alpha)
    alpha_m = alpha * mask
    g_kmn = scale * (H + alpha_m / s2)
    g_kmm = -scale * ((H + 0.5 * alpha_m / s2) @ alpha.T)
    g_amp = -scale * 0.5 * mask.sum() / s2
    fit_quad = 0.5 * float(resid @ resid) / s2
    g_s2 = scale * (-0.5 * n / s2 + (fit_quad + elbo.trace_sigma + elbo.trace_knn_qnn) / s2)
    g_mu = scale * (alpha @ resid) / s2
    g_S = -scale * (alpha @ StA.T) / s2

    # minus KL(N(mu, S S^T) || N(0, Kmm)); the logdet adjoint needs Kmm^-1 itself
    K_inv = chol_solve(L, np.eye(m))
    w = chol_solve(L, mu)
    K_inv_S = chol_solve(L, S)
    g_kmm += 0.5 * (K_inv_S @ K_inv_S.T + np.outer(w, w) - K_inv)
    g_mu -= w
    g_S -= K_inv_S
    g_S[np.diag_indices(m)] += 1.0 / np.diag(S)

    # Kmm = KA_mm * KB_mm on the inducing pairs
    pA, pB = state.kernel.user_kernel, state.kernel.item_kernel
    ZA, ZB = state.inducing.ZA, state.inducing.ZB
    gx, gy, g_ellA, g_varA = rbf_gram_backward(ZA, ZA, mm["KA"], mm["d2A"], g_kmm * mm["KB"], pA)
    g_ZA = gx + gy
    gx, gy, g_ellB, _ = rbf_gram_backward(ZB, ZB, mm["KB"], mm["d2B"], g_kmm * mm["KA"], pB)
    g_ZB = gx + gy

    # Knm = KA_nm * KB_nm on the batch latent pairs
    g_knm = g_kmn.T
    ga, gz, ge, gv = rbf_gram_backward(nm["a"], ZA, nm["KA"], nm["d2A"], g_knm * nm["KB"], pA)
    g_ZA += gz
    g_ellA += ge
    g_varA += gv
    gb, gz, ge, _ = rbf_gram_backward(nm["b"], ZB, nm["KB"], nm["d2B"], g_knm * nm["KA"], pB)
    g_ZB += gz
    g_ellB += ge
    # k_nn diagonal = var_A * var_B with var_B pinned to 1
    g_varA += g_amp * pB.variance

    g_A = np.zeros_like(state.factors.A)
    g_B = np.zeros_like(state.factors.B)
    np.add.at(g_A, users, ga)
    np.add.at(g_B, items, gb)

    # chain through softplus into raw coordinates
    raw_S = state.variational.scale_raw
    diag = np.diag_indices(m)
    g_S[diag] *= softplus_grad(raw_S[diag])

    layout = make_layout(state.config)
    grad = np.empty(layout.size)
    grad[layout.slices["A"]] = g_A.ravel()
    grad[layout.slices["B"]] = g_B.ravel()
    grad[layout.slices["ZA"]] = g_ZA.ravel()
    grad[layout.slices["ZB"]] = g_ZB.ravel()
    grad[layout.slices["mu"]] = g_mu
    grad[layout.slices["scale"]] = g_S[np.tril_indices(m)]
    grad[layout.slices["kernel"]] = [
        g_ellA * softplus_grad(pA.raw_lengthscale),
        g_varA * softplus_grad(pA.raw_variance),
        g_ellB * softplus_grad(pB.raw_lengthscale),
    ]
    grad[layout.slices["noise"]] = g_s2 * softplus_grad(state.noise.raw_noise)
    return elbo, grad


def fd_check_function(f, grad, x, step=1e-5):
    """Max over coordinates of |grad_k - central difference_k| / max(1, |grad_k|)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    worst = 0.0
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        fd = (f(xp) - f(xm)) / (2.0 * step)
        worst = max(worst, abs(fd - grad[k]) / max(1.0, abs(grad[k])))
    return worst


def fd_check(state, batch, n_total, step=1e-5):
    """Compare ``elbo_grad`` against central finite differences of the bound."""
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    batch = unpack_batch(batch)
    theta, _ = flatten_params(state)
    _, grad = elbo_grad(state, batch, n_total)

    def objective(t):
        return forward(unflatten_params(t, state), *batch, n_total)[0].total

    return fd_check_function(objective, grad, theta, step)
