"""Fixed-point solver for the aggregation criterion at a fixed ``beta``.

The schedule is one divergence-driven Gibbs reassignment (``init_update``)
followed by bottleneck reassignments (``ib_update``) until the partition
stops moving. Every iterate is kept consistent: marginals, joint weights and
relevance tables are recomputed from ``psi`` and never carried over.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _updates
from .aggregation import (
    LN2,
    RelevanceModel,
    _check_partition,
    _nonempty_marginals,
    _relevance,
    _row_energy,
    _xlogy_ratio,
    predictive_information,
    relevance_information,
)


@dataclass(frozen=True)
class OptimizerConfig:
    beta: float
    max_iters: int = 10_000
    psi_tol: float = 1e-9
    support_floor: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.psi_tol < 1:
            raise ValueError("psi_tol must lie in (0, 1)")
        if not 0 <= self.support_floor <= 1e-12:
            raise ValueError("support_floor must lie in [0, 1e-12]")


@dataclass
class OptimizerState:
    psi: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    relevance: RelevanceModel
    iteration: int = 0
    objective_trace: list = field(default_factory=list)
    delta_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def m(self):
        return self.psi.shape[1]


def make_state(model, psi, iteration=0):
    """Consistent state (marginals, joint weights, relevance) for ``psi``."""
    psi = np.asarray(psi, dtype=float)
    alpha = _nonempty_marginals(model.gamma, psi)
    relevance = _relevance(model.pi, model.gamma, psi, alpha)
    theta = relevance.kappa.T.copy()
    return OptimizerState(psi, theta, alpha, relevance, iteration)


def init_update(model, psi0, config):
    """Opening reassignment: Gibbs weights over groups with energy
    ``KL(pi[i] || theta0[j])`` at inverse temperature ``beta``."""
    psi0 = _check_partition(psi0, model.n)
    return _updates.step(model.pi, model.gamma, psi0, config.beta,
                         first=True, floor=config.support_floor)


def ib_update(model, state, config):
    """Bottleneck reassignment with energy ``KL(eta[:, i] || kappa[:, j])``.

    Returns a new state whose trace has the new objective appended.
    """
    psi = _updates.step(model.pi, model.gamma, state.psi, config.beta,
                        first=False, floor=config.support_floor)
    return _advance(model, state, psi, config.beta)


def _advance(model, state, psi, beta):
    new = make_state(model, psi, state.iteration + 1)
    new.objective_trace = state.objective_trace + [evaluate_objective(model, new, beta)]
    new.delta_trace = state.delta_trace + [float(np.max(np.abs(psi - state.psi)))]
    return new


def divergence_term(model, state):
    """``sum gamma_i psi_ij KL(pi[i] || theta[j])`` in bits."""
    energy = _row_energy(model.pi, state.theta)
    weight = model.gamma[:, None] * state.psi
    with np.errstate(invalid="ignore"):
        return float(np.where(weight > 0, weight * energy, 0.0).sum() / LN2)


def relevance_term(model, state):
    """Next-state information lost by grouping, ``I(X;Q) - I(T;Q)``, in bits."""
    return predictive_information(model) - relevance_information(state.relevance)


def information_term(model, state):
    return float(np.sum(model.gamma[:, None] * _xlogy_ratio(
        state.psi, state.psi, state.alpha[None, :])) / LN2)


def evaluate_objective(model, state, beta):
    """Lagrangian value in bits: the distortion term of the current branch
    plus ``1/beta`` times the partition information.

    Iteration 0 uses the expected row divergence, later iterations the
    relevance loss; the two agree for consistent states.
    """
    first = divergence_term(model, state) if state.iteration == 0 \
        else relevance_term(model, state)
    return _updates.lagrangian(first, information_term(model, state), beta)


def run_fixed_point(model, psi0, config, correction=None, error_model=None):
    """Iterate the update schedule from ``psi0`` until
    ``max |delta psi| < psi_tol`` or ``max_iters`` updates.

    With ``correction`` (a :class:`~markov_voi.correction.CorrectionConfig`)
    and ``error_model`` the error-corrected updates are used instead. The
    returned state has ``converged=False`` if the iteration cap was hit.
    """
    from .correction import corrected_ib_update, corrected_init_update

    psi0 = _check_partition(psi0, model.n)
    if correction is None:
        psi = init_update(model, psi0, config)
    else:
        psi = corrected_init_update(model, psi0, config, error_model, correction)
    state = make_state(model, psi, iteration=1)
    state.objective_trace = [evaluate_objective(model, state, config.beta)]
    state.delta_trace = [float(np.max(np.abs(psi - psi0)))]

    while state.iteration < config.max_iters:
        if correction is None:
            state = ib_update(model, state, config)
        else:
            state = corrected_ib_update(model, state, config, error_model, correction)
        if state.delta_trace[-1] < config.psi_tol:
            state.converged = True
            break
    return state
