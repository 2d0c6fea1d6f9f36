"""Batch-capable Gibbs update kernels shared by the optimizer, the
error-corrected updates and the split probes of the annealer.

Every kernel takes ``psi`` of shape ``(..., n, m)``; leading axes index
independent problems on the same chain.
"""
import numpy as np

from .aggregation import LN2, _joint_weights, _marginals, _row_energy, _xlogy_ratio
from .errors import EmptyGroupError, NumericUnderflowError


def _double_factorial(k):
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gauss_moment(var, g):
    """``E[x^g]`` for a zero-mean Gaussian with variance ``var``."""
    var = np.asarray(var, dtype=float)
    if g % 2:
        return np.zeros_like(var)
    return _double_factorial(g - 1) * np.power(var, g // 2)


def gauss_cross_moment(cov, var, g):
    """``E[x * y^(g-1)]`` for zero-mean jointly Gaussian ``x, y`` (Stein)."""
    return (g - 1) * cov * gauss_moment(var, g - 2)


def _safe_div(num, den):
    ok = den > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def init_shift(gamma, psi, alpha, gamma_cov, g_max):
    """Per-(state, group) correction offset of the first update.

    ``sum_g (-1)^g [E[abar_j^g] / (g alpha_j^g)
                    - E[gbar_i abar_j^(g-1)] / ((g-1) gamma_i alpha_j^(g-1))]``
    where ``abar_j = sum_s gbar_s psi_sj`` is the marginal's estimation error.
    """
    var_a = np.einsum("...ij,ik,...kj->...j", psi, gamma_cov, psi)
    cov_ga = np.einsum("ik,...kj->...ij", gamma_cov, psi)
    out = np.zeros(psi.shape)
    for g in range(2, g_max + 1):
        first = _safe_div(gauss_moment(var_a, g), g * alpha ** g)[..., None, :]
        cross = gauss_cross_moment(cov_ga, var_a[..., None, :], g)
        second = _safe_div(cross, (g - 1) * gamma[:, None] * alpha[..., None, :] ** (g - 1))
        out += (-1) ** g * (first - second)
    return out


def ib_shift(pi, tau, kappa, eta_var, g_max):
    """Per-(state, group) correction offset of the bottleneck update.

    ``sum_g (-1)^g sum_q [eta_qi E[kbar_qj^g] / (g kappa_qj^g)
                          - E[ebar_qi kbar_qj^(g-1)] / ((g-1) kappa_qj^g)]``
    with ``kbar_qj = sum_i ebar_qi tau_ij``; row errors of different states
    are independent. ``eta_var[i, q]`` is the variance of the estimate of
    ``pi[i, q]``. Cells with ``kappa_qj = 0`` contribute nothing.
    """
    var_k = np.einsum("...sj,sq->...qj", tau ** 2, eta_var)
    # Stein: E[ebar_qi kbar_qj^(g-1)] = (g-1) tau_ij var(ebar_qi) E[kbar_qj^(g-2)]
    out = np.zeros(tau.shape)
    for g in range(2, g_max + 1):
        kg = kappa ** g
        first = _safe_div(gauss_moment(var_k, g), g * kg)  # (..., q, j)
        second = tau * (eta_var @ _safe_div(gauss_moment(var_k, g - 2), kg))
        out += (-1) ** g * (pi @ first - second)
    return out


def gibbs(log_prior, energy, beta, offset=None):
    """Normalized ``alpha_j exp(-beta * energy_ij + offset_ij)`` rows."""
    with np.errstate(invalid="ignore"):
        logits = log_prior[..., None, :] - beta * energy if beta > 0 \
            else np.broadcast_to(log_prior[..., None, :], energy.shape).copy()
    if offset is not None:
        logits = logits + offset
    infinite = np.isposinf(energy)
    if infinite.any():
        # an infinite energy means zero weight even at beta == 0
        logits = np.where(infinite, -np.inf, logits)
    top = logits.max(axis=-1, keepdims=True)
    if not np.isfinite(top).all():
        rows = np.argwhere(~np.isfinite(top[..., 0]))
        raise NumericUnderflowError(int(rows[0][-1]))
    w = np.exp(logits - top)
    return w / w.sum(axis=-1, keepdims=True)


def consistent(pi, gamma, psi):
    """Marginals and joint weights implied by ``psi``."""
    alpha = _marginals(gamma, psi)
    if np.any(alpha <= 0):
        idx = np.argwhere(alpha <= 0)[0]
        raise EmptyGroupError(int(idx[-1]))
    return alpha, _joint_weights(pi, gamma, psi, alpha)


def log_alpha(alpha):
    with np.errstate(divide="ignore"):
        return np.log(alpha)


def step(pi, gamma, psi, beta, *, first, floor=0.0, corr=None):
    """One Gibbs reassignment from ``psi``.

    ``first`` selects the divergence-driven opening update; otherwise the
    bottleneck update. ``corr`` is ``None`` or a mapping with the error
    model arrays (``gamma_cov``, ``eta_var``), ``g_max`` and
    ``init_scale`` ("beta" or "unit").
    """
    alpha, theta = consistent(pi, gamma, psi)
    energy = _row_energy(pi, theta, floor)
    offset = None
    if corr is not None:
        if first:
            shift = init_shift(gamma, psi, alpha, corr["gamma_cov"], corr["g_max"])
            offset = beta * shift if corr["init_scale"] == "beta" else shift
        else:
            tau = gamma[:, None] * psi / alpha[..., None, :]
            kappa = np.swapaxes(theta, -1, -2)
            offset = -beta * ib_shift(pi, tau, kappa, corr["eta_var"], corr["g_max"])
    return gibbs(log_alpha(alpha), energy, beta, offset)


def objective_terms(pi, gamma, psi, floor=0.0):
    """(divergence, partition information) in bits for a batch of partitions."""
    alpha, theta = consistent(pi, gamma, psi)
    energy = _row_energy(pi, theta, floor)
    weight = gamma[:, None] * psi
    with np.errstate(invalid="ignore"):
        div = np.where(weight > 0, weight * energy, 0.0).sum(axis=(-2, -1)) / LN2
    info = (gamma[:, None] * _xlogy_ratio(psi, psi, alpha[..., None, :])).sum(axis=(-2, -1)) / LN2
    return div, info


def lagrangian(div, info, beta):
    """Divergence plus information weighted by ``1/beta`` (divergence alone at 0)."""
    return div + info / beta if beta > 0 else div


def _raw_iterations(pi, gamma, psi, beta, max_iters, tol, it):
    """Fast loop of plain bottleneck updates for finite energies.

    Returns ``(psi, it, done)``, or ``None`` for the caller to fall back
    to :func:`step` when a group empties or a support gap appears.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_entropy = np.sum(np.where(pi > 0, pi * np.log(pi), 0.0), axis=1)[:, None]
        g = gamma[:, None]
        pit = pi.T
        while it < max_iters:
            w = g * psi
            alpha = w.sum(axis=-2)
            if not (alpha > 0).all():
                return None
            log_theta = np.log(np.swapaxes(w, -1, -2) @ pi) - np.log(alpha)[..., None]
            cross = log_theta @ pit
            if not np.isfinite(cross).all():
                return None
            logits = np.swapaxes(cross, -1, -2) * beta + (
                np.log(alpha)[..., None, :] - beta * neg_entropy)
            logits -= logits.max(axis=-1, keepdims=True)
            nxt = np.exp(logits)
            nxt /= nxt.sum(axis=-1, keepdims=True)
            delta = np.max(np.abs(nxt - psi))
            psi = nxt
            it += 1
            if delta < tol:
                return psi, it, True
    return psi, it, False


def converge_batch(pi, gamma, psi, beta, *, max_iters, tol, floor=0.0, corr=None):
    """Run the update schedule on a batch until every member settles.

    Returns the final batch, the number of updates used and whether the
    tolerance was met.
    """
    psi = step(pi, gamma, psi, beta, first=True, floor=floor, corr=corr)
    it = 1
    if corr is None and floor == 0 and beta > 0:
        fast = _raw_iterations(pi, gamma, psi, beta, max_iters, tol, it)
        if fast is not None:
            return fast
    while it < max_iters:
        nxt = step(pi, gamma, psi, beta, first=False, floor=floor, corr=corr)
        delta = np.max(np.abs(nxt - psi))
        psi = nxt
        it += 1
        if delta < tol:
            return psi, it, True
    return psi, max_iters, False
