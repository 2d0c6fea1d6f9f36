"""Finite-sample error correction of the aggregation criterion.

The chain's probabilities are treated as estimates from ``N`` observed
transitions. Their estimation errors are modelled as multinomial
(zero mean, closed-form covariances); moments of order ``g >= 3`` come from
a Gaussian closure of the second-order covariances. From these moments we
form

* the additive correction of the opening (divergence) step, driven by the
  error in the group marginals ``alpha``;
* the subtractive correction of the bottleneck step, driven by the error in
  the group-conditional next-state laws ``kappa``;

and the matching corrected Gibbs updates. All reported terms are in bits.
"""
from dataclasses import dataclass

import numpy as np

from . import _updates
from .aggregation import (
    LN2,
    _check_partition,
    _nonempty_marginals,
    relevance_information,
)
from .errors import EmptyGroupError
from .optimizer import _advance, evaluate_objective


@dataclass(frozen=True)
class CorrectionConfig:
    """Series truncation and sample size behind the probability estimates.

    ``init_scale`` says whether the opening-step correction is multiplied by
    ``beta`` ("beta") or enters the exponent unscaled ("unit").
    ``rho_as_tau`` selects the weights of the bottleneck error sum:
    ``p(state | group)`` when true, the joint ``p(state, group)`` otherwise.
    """

    g_max: int = 2
    sample_count: int = None
    init_scale: str = "beta"
    rho_as_tau: bool = True

    def __post_init__(self):
        if self.g_max < 2:
            raise ValueError("g_max must be at least 2")
        if self.sample_count is not None and self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        if self.init_scale not in ("beta", "unit"):
            raise ValueError("init_scale must be 'beta' or 'unit'")

    def resolved_count(self, n):
        """Sample count, defaulting to ``50 n^2``."""
        return 50 * n * n if self.sample_count is None else self.sample_count


@dataclass(frozen=True)
class ErrorModel:
    """Zero-mean estimation-error law of ``gamma`` and of each row of ``pi``.

    ``gamma_cov`` is ``n x n``; ``eta_cov[i]`` is the ``n x n`` covariance of
    the error in row ``i`` of ``pi``. Rows are independent of one another and
    of the ``gamma`` error.
    """

    gamma_cov: np.ndarray
    eta_cov: np.ndarray
    sample_count: float

    @property
    def eta_var(self):
        return np.einsum("iqq->iq", self.eta_cov)

    def eta_cov_for(self, i):
        return self.eta_cov[i]


def multinomial_error_model(model, sample_count, visits=None):
    """Covariances of plug-in estimates from ``sample_count`` transitions.

    ``gamma`` is estimated from ``N`` multinomial draws; row ``i`` of ``pi``
    from ``visits[i]`` draws, ``N * gamma_i`` by default.
    """
    gamma, pi = model.gamma, model.pi
    n = model.n
    gamma_cov = (np.diag(gamma) - np.outer(gamma, gamma)) / sample_count
    if visits is None:
        visits = sample_count * gamma
    visits = np.asarray(visits, dtype=float)
    eta_cov = np.zeros((n, n, n))
    for i in range(n):
        if visits[i] > 0:
            eta_cov[i] = (np.diag(pi[i]) - np.outer(pi[i], pi[i])) / visits[i]
    return ErrorModel(gamma_cov, eta_cov, float(sample_count))


def _series_coefficient(g):
    return (-1) ** g / (LN2 * (g * g - g))


def gamma_correction_term(psi, alpha, error_model, g_max=2):
    """``sum_g c_g sum_j E[abar_j^g] / alpha_j^(g-1)`` with
    ``abar_j = sum_i gbar_i psi_ij`` and ``c_g = (-1)^g / (ln2 (g^2 - g))``.

    For ``g = 2`` this is ``sum_j Var(abar_j) / (2 ln2 alpha_j)``, the
    plug-in bias of the group entropy.
    """
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise EmptyGroupError(int(np.flatnonzero(alpha <= 0)[0]))
    var_a = np.einsum("ij,ik,kj->j", psi, error_model.gamma_cov, psi)
    total = 0.0
    for g in range(2, g_max + 1):
        moment = _updates.gauss_moment(var_a, g)
        total += _series_coefficient(g) * np.sum(moment / alpha ** (g - 1))
    return float(total)


def kappa_correction_term(relevance, psi, error_model, g_max=2, rho_as_tau=True):
    """Error series subtracted from the bottleneck (relevance) term.

    ``sum_g c_g sum_{q,j} [E[X_qj^g] / rho_qj^(g-1) - E[W_q^g] / omega_q^(g-1)]``
    where ``W_q = sum_i gamma_i ebar_qi`` is the error of the next-state
    marginal and ``X_qj = sum_i ebar_qi w_ij`` with ``w = tau`` (the
    ``kappa`` error) or ``w_ij = gamma_i psi_ij`` (the ``rho`` error).
    Cells with ``rho_qj = 0`` are skipped.
    """
    r = relevance
    if r.rho.shape[1] == 1:
        return 0.0  # one group: X equals W and rho equals omega, the sums cancel
    gamma = r.tau @ r.alpha  # sum_j p(i|j) p(j)
    eta_var = error_model.eta_var  # (i, q)
    weights = r.tau if rho_as_tau else gamma[:, None] * np.asarray(psi, dtype=float)
    var_x = np.einsum("ij,iq->qj", weights ** 2, eta_var)
    var_w = np.einsum("i,iq->q", gamma ** 2, eta_var)
    live = r.rho > 0
    total = 0.0
    for g in range(2, g_max + 1):
        mx = _updates.gauss_moment(var_x, g)
        mw = _updates.gauss_moment(var_w, g)
        joint = _updates._safe_div(mx, r.rho ** (g - 1))
        marg = _updates._safe_div(mw, r.omega ** (g - 1))[:, None]
        total += _series_coefficient(g) * np.sum(np.where(live, joint - marg, 0.0))
    return float(total)


def correction_terms(model, state, error_model, correction):
    """(gamma term, kappa term) in bits for a consistent state."""
    g_max = correction.g_max
    gterm = gamma_correction_term(state.psi, state.alpha, error_model, g_max)
    kterm = kappa_correction_term(state.relevance, state.psi, error_model, g_max,
                                  correction.rho_as_tau)
    return gterm, kterm


def corrected_objective(model, state, beta, correction, error_model):
    """Uncorrected objective plus the opening-step term (iteration 0) or
    minus the bottleneck term (later iterations)."""
    base = evaluate_objective(model, state, beta)
    gterm, kterm = correction_terms(model, state, error_model, correction)
    return base + gterm if state.iteration == 0 else base - kterm


def corrected_information(state, error_model, correction):
    """Relevance information minus its bottleneck error series, in bits."""
    kterm = kappa_correction_term(state.relevance, state.psi, error_model,
                                  correction.g_max, correction.rho_as_tau)
    return relevance_information(state.relevance) - kterm


def _corr_arrays(error_model, correction):
    return {
        "gamma_cov": error_model.gamma_cov,
        "eta_var": error_model.eta_var,
        "g_max": correction.g_max,
        "init_scale": correction.init_scale,
    }


def corrected_init_update(model, psi0, config, error_model, correction=None):
    """Opening reassignment with the marginal-error offset in the exponent."""
    correction = correction or CorrectionConfig()
    psi0 = _check_partition(psi0, model.n)
    _nonempty_marginals(model.gamma, psi0)
    return _updates.step(model.pi, model.gamma, psi0, config.beta, first=True,
                         floor=config.support_floor,
                         corr=_corr_arrays(error_model, correction))


def corrected_ib_update(model, state, config, error_model, correction=None):
    """Bottleneck reassignment with the ``kappa``-error offset subtracted
    (``beta``-scaled) from the exponent; recomputes every moment from the
    current partition."""
    correction = correction or CorrectionConfig()
    psi = _updates.step(model.pi, model.gamma, state.psi, config.beta, first=False,
                        floor=config.support_floor,
                        corr=_corr_arrays(error_model, correction))
    return _advance(model, state, psi, config.beta)
