"""Partition, joint-weight and reduced-model construction, plus the
divergence and information functionals evaluated on them.

Conventions
-----------
``psi`` is an ``n x m`` row-stochastic soft assignment of original states to
groups, ``theta`` an ``m x n`` matrix whose rows are distributions over the
original states, and ``phi`` the ``m x m`` aggregated chain. All reported
quantities are in bits.

The relevance variable of the bottleneck step is the chain's next state, so
``eta[q, i] = pi[i, q]`` and the group-conditional relevance law ``kappa``
is simply ``theta.T``.

The underscore-prefixed kernels accept ``psi`` with arbitrary leading batch
dimensions and perform no validation; the public functions validate.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyGroupError,
    InfiniteDivergenceError,
    InvalidDistributionError,
)

LN2 = np.log(2.0)


def _marginals(gamma, psi):
    return gamma @ psi


def _joint_weights(pi, gamma, psi, alpha):
    # theta[j, p] = sum_i gamma_i psi_ij pi_ip / alpha_j
    weighted = np.swapaxes(gamma[:, None] * psi, -1, -2) @ pi
    with np.errstate(divide="ignore", invalid="ignore"):
        return weighted / alpha[..., :, None]


def _safe_log(x, floor=0.0):
    """``log x`` with ``-inf`` at exact zeros; tiny positives clamped to ``floor``."""
    with np.errstate(divide="ignore"):
        if floor > 0:
            x = np.where(x > 0, np.maximum(x, floor), 0.0)
        return np.log(x)


def _row_energy(pi, theta, floor=0.0):
    """``KL(pi[i] || theta[j])`` in nats, shape ``(..., n, m)``.

    Entries are ``+inf`` where ``pi[i]`` charges a column that ``theta[j]``
    does not.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_entropy = np.sum(np.where(pi > 0, pi * np.log(pi), 0.0), axis=1)
        log_theta = _safe_log(theta, floor)  # (..., m, n)
    if np.isfinite(log_theta).all():
        cross = np.swapaxes(log_theta @ pi.T, -1, -2)
    else:
        with np.errstate(invalid="ignore"):
            terms = pi[:, None, :] * log_theta[..., None, :, :]
        cross = np.where(pi[:, None, :] > 0, terms, 0.0).sum(axis=-1)
    return neg_entropy[:, None] - cross


def _xlogy_ratio(x, num, den):
    """Elementwise ``x * log(num / den)`` in nats, zero wherever ``x`` is."""
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(x > 0, x * np.log(num / den), 0.0)
    return val


def _check_partition(psi, n=None, tol=1e-9):
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise DimensionMismatchError(f"partition must be 2-D, got shape {psi.shape}")
    if n is not None and psi.shape[0] != n:
        raise DimensionMismatchError(
            f"partition has {psi.shape[0]} rows, chain has {n} states")
    if np.any(psi < -tol) or np.any(np.abs(psi.sum(axis=1) - 1.0) > tol):
        raise InvalidDistributionError("partition rows must be distributions")
    return psi


def _nonempty_marginals(gamma, psi):
    alpha = _marginals(gamma, psi)
    empty = np.flatnonzero(alpha <= 0)
    if len(empty):
        raise EmptyGroupError(int(empty[0]))
    return alpha


def group_marginals(gamma, psi):
    """``alpha_j = sum_i gamma_i psi_ij``; raises on an empty group."""
    return _nonempty_marginals(np.asarray(gamma, float), _check_partition(psi, len(gamma)))


def harden(psi):
    """One-hot partition from the per-row argmax (ties go to the lowest index)."""
    psi = np.asarray(psi, dtype=float)
    hard = np.zeros_like(psi)
    hard[np.arange(psi.shape[0]), np.argmax(psi, axis=1)] = 1.0
    return hard


def hard_partition(labels, m=None):
    """One-hot ``n x m`` partition from integer group labels."""
    labels = np.asarray(labels, dtype=int)
    m = labels.max() + 1 if m is None else m
    psi = np.zeros((len(labels), m))
    psi[np.arange(len(labels)), labels] = 1.0
    return psi


def build_joint_weights(model, psi):
    """Joint weights ``theta = U.T @ pi`` with ``U_ij = gamma_i psi_ij / alpha_j``.

    Each row of ``theta`` is a stationary-weighted average of the rows of
    ``pi`` belonging to the group, hence a distribution.
    """
    psi = _check_partition(psi, model.n)
    alpha = _nonempty_marginals(model.gamma, psi)
    return _joint_weights(model.pi, model.gamma, psi, alpha)


@dataclass(frozen=True)
class ReducedModel:
    phi: np.ndarray
    alpha: np.ndarray

    @property
    def m(self):
        return self.phi.shape[0]


def build_reduced(theta, psi, gamma):
    """Aggregated chain ``phi[a, b] = sum_k theta[a, k] psi[k, b]``.

    ``alpha`` (the group marginals) is invariant under ``phi``.
    """
    theta = np.asarray(theta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if theta.ndim != 2 or psi.ndim != 2 or theta.shape[1] != psi.shape[0] \
            or theta.shape[0] != psi.shape[1]:
        raise DimensionMismatchError(
            f"theta {theta.shape} and psi {psi.shape} are incompatible")
    if len(gamma) != psi.shape[0]:
        raise DimensionMismatchError("gamma length does not match psi")
    return ReducedModel(theta @ psi, _marginals(np.asarray(gamma, float), psi))


def expected_divergence(model, psi, theta):
    """``sum_ij gamma_i psi_ij KL(pi[i] || theta[j])`` in bits."""
    psi = _check_partition(psi, model.n)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (psi.shape[1], model.n):
        raise DimensionMismatchError(f"theta has shape {theta.shape}")
    energy = _row_energy(model.pi, theta)
    weight = model.gamma[:, None] * psi
    live = weight > 0
    if np.any(np.isinf(energy[live])):
        raise InfiniteDivergenceError("a group row misses support of a member row")
    with np.errstate(invalid="ignore"):
        return float(np.sum(np.where(live, weight * energy, 0.0)) / LN2)


def partition_information(gamma, psi):
    """Mutual information between original state and group, in bits."""
    gamma = np.asarray(gamma, dtype=float)
    psi = _check_partition(psi, len(gamma))
    _nonempty_marginals(gamma, psi)
    # exact column sums: one group of a uniform law must give alpha == 1
    alpha = np.array([math.fsum(col) for col in (gamma[:, None] * psi).T])
    info = np.sum(gamma[:, None] * _xlogy_ratio(psi, psi, alpha[None, :])) / LN2
    return max(float(info), 0.0)  # rounding can dip below zero


def constraint_information(gamma, psi):
    """``sum_j alpha_j sum_i psi_ij log2(psi_ij / gamma_i)``.

    This is the rate functional exactly as it appears in the constrained
    form of the criterion; it differs from :func:`partition_information`
    except in special cases and is reported for reference only.
    """
    gamma = np.asarray(gamma, dtype=float)
    psi = _check_partition(psi, len(gamma))
    alpha = _nonempty_marginals(gamma, psi)
    inner = _xlogy_ratio(psi, psi, gamma[:, None]).sum(axis=0)
    return float(np.dot(alpha, inner) / LN2)


@dataclass(frozen=True)
class RelevanceModel:
    """Bottleneck quantities for the next-state relevance variable ``q``.

    eta[q, i]   p(q | original state i)   (= pi.T)
    omega[q]    p(q)                      (= gamma for a stationary chain)
    kappa[q, j] p(q | group j)
    rho[q, j]   p(q, group j)
    tau[i, j]   p(original state i | group j)
    """

    eta: np.ndarray
    omega: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray


def _relevance(pi, gamma, psi, alpha):
    eta = pi.T
    omega = gamma @ pi
    tau = gamma[:, None] * psi / alpha[None, :]
    kappa = eta @ tau
    return RelevanceModel(eta, omega, kappa, kappa * alpha[None, :], tau, alpha)


def build_relevance(model, psi):
    psi = _check_partition(psi, model.n)
    alpha = _nonempty_marginals(model.gamma, psi)
    return _relevance(model.pi, model.gamma, psi, alpha)


def relevance_information(relevance):
    """``I(group; next state)`` in bits."""
    r = relevance
    return float(np.sum(_xlogy_ratio(r.rho, r.kappa, r.omega[:, None])) / LN2)


def predictive_information(model):
    """``I(state; next state)`` in bits, the ceiling of the relevance information."""
    omega = model.gamma @ model.pi
    terms = _xlogy_ratio(model.pi, model.pi, omega[None, :])
    return float(np.dot(model.gamma, terms.sum(axis=1)) / LN2)


def relevance_loss(model, relevance):
    """Information about the next state lost by grouping, in bits.

    Computed as ``I(state; next) - I(group; next)``; for a consistent
    (psi, theta) pair it equals :func:`expected_divergence`.
    """
    return predictive_information(model) - relevance_information(relevance)
