"""Annealing driver: sweep ``beta`` upward, detect the values at which a
group becomes unstable and splits, and collect the resulting hierarchy of
partitions and reduced chains.

Instability is tested operationally. Each group's column is duplicated, the
two copies are nudged apart along a random zero-sum direction and the
update schedule is re-run; if the copies drift apart instead of merging
back (and the objective drops), the group is past its critical ``beta``.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import _updates
from .aggregation import (
    ReducedModel,
    _check_partition,
    _nonempty_marginals,
    build_reduced,
    constraint_information,
    partition_information,
    relevance_information,
)
from .correction import (
    CorrectionConfig,
    _corr_arrays,
    gamma_correction_term,
    kappa_correction_term,
    multinomial_error_model,
)
from .errors import EmptyGroupError, EmptyHierarchyError, GroupCapReachedError
from .optimizer import OptimizerConfig, divergence_term, make_state


@dataclass(frozen=True)
class AnnealConfig:
    """Settings of the ``beta`` sweep.

    ``beta_min``/``beta_max`` default to ``1/(2n)`` and ``10 n``;
    ``max_groups`` defaults to ``n``.
    """

    beta_min: float = None
    beta_max: float = None
    beta_factor: float = 1.05
    split_perturbation: float = 1e-3
    split_persistence_tol: float = 1e-2
    max_groups: int = None
    trials_per_split: int = 5
    probe_max_iters: int = 250
    probe_tol: float = 1e-6
    seed: int = 0

    def resolved(self, n):
        cfg = replace(
            self,
            beta_min=1.0 / (2 * n) if self.beta_min is None else self.beta_min,
            beta_max=10.0 * n if self.beta_max is None else self.beta_max,
            max_groups=n if self.max_groups is None else self.max_groups,
        )
        if not 0 <= cfg.beta_min < cfg.beta_max:
            raise ValueError("need 0 <= beta_min < beta_max")
        if cfg.beta_factor <= 1:
            raise ValueError("beta_factor must exceed 1")
        if not 1 <= cfg.max_groups <= n:
            raise ValueError("max_groups must lie in [1, n]")
        if cfg.trials_per_split < 1:
            raise ValueError("trials_per_split must be positive")
        return cfg

    def grid(self, n):
        cfg = self.resolved(n)
        start = cfg.beta_min if cfg.beta_min > 0 else 1.0 / (2 * n)
        count = int(np.floor(np.log(cfg.beta_max / start) / np.log(cfg.beta_factor) + 1e-9))
        return start * cfg.beta_factor ** np.arange(count + 1)


@dataclass
class HierarchyLevel:
    """One stage of the hierarchy: the ``m``-group solution recorded at the
    last grid point before the next split (``beta``), together with the
    critical value at which the stage began (``beta_critical``)."""

    beta_critical: float
    beta: float
    m: int
    psi: np.ndarray
    theta: np.ndarray
    phi: ReducedModel
    divergence_bits: float
    information_bits: float
    corrected_information_bits: float
    beta_star: float
    partition_information_bits: float = 0.0
    constraint_information_bits: float = 0.0
    gamma_term_bits: float = 0.0
    kappa_term_bits: float = 0.0
    converged: bool = True


@dataclass
class Selection:
    m_star: int
    level: HierarchyLevel
    beta_star_crossing_m: int
    flags: list = field(default_factory=list)


def compute_beta_star(gamma, psi):
    """``2**I / (2n)`` with ``I`` the state/group mutual information in bits."""
    gamma = np.asarray(gamma, dtype=float)
    return 2.0 ** partition_information(gamma, psi) / (2 * len(gamma))


def split_bootstrap(psi, j, rng, max_groups=None):
    """Append a column that takes a uniformly random share of column ``j``
    in every row."""
    psi = np.asarray(psi, dtype=float)
    n, m = psi.shape
    cap = n if max_groups is None else max_groups
    if m >= cap:
        raise GroupCapReachedError(f"already at {m} groups (cap {cap})")
    frac = rng.uniform(size=n)
    out = np.empty((n, m + 1))
    out[:, :m] = psi
    out[:, j] = psi[:, j] * frac
    out[:, m] = psi[:, j] * (1.0 - frac)
    return out


def _probe_batch(psi, rng, trials, scale):
    """Every group duplicated ``trials`` times with zero-sum nudges.

    Returns shape ``(m * trials, n, m + 1)`` and the group index of each
    batch member.
    """
    n, m = psi.shape
    batch = np.empty((m * trials, n, m + 1))
    owner = np.repeat(np.arange(m), trials)
    z = rng.standard_normal((m * trials, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    for b, j in enumerate(owner):
        batch[b, :, :m] = psi
        half = 0.5 * psi[:, j]
        # relative nudge keeps zero responsibilities at zero
        shift = np.clip(scale * z[b], -0.5, 0.5) * psi[:, j]
        batch[b, :, j] = half + shift
        batch[b, :, m] = half - shift
    return batch, owner


def _batch_objective(model, psi, beta):
    div, info = _updates.objective_terms(model.pi, model.gamma, psi)
    return _updates.lagrangian(div, info, beta)


def _separation(psi, owner):
    cols = psi[np.arange(len(owner)), :, owner]
    return np.max(np.abs(cols - psi[:, :, -1]), axis=-1)


def detect_phase_change(model, state, beta, config, rng, optimizer_config=None,
                        corr=None):
    """Probe each group of a converged ``state`` for instability at ``beta``.

    Returns ``(split, group)``; ``group`` is the unstable group whose probe
    lowered the objective most (ties to the lowest index), or ``None``.
    """
    if beta <= 0:
        return False, None
    opt = optimizer_config or OptimizerConfig(beta)
    batch, owner = _probe_batch(state.psi, rng, config.trials_per_split,
                                config.split_perturbation)
    settled, _, _ = _updates.converge_batch(
        model.pi, model.gamma, batch, beta, max_iters=config.probe_max_iters,
        tol=config.probe_tol, floor=opt.support_floor, corr=corr)
    base = _batch_objective(model, state.psi[None], beta)[0]
    gain = base - _batch_objective(model, settled, beta)
    split = (_separation(settled, owner) > config.split_persistence_tol) & (gain > 1e-9)
    if not split.any():
        return False, None
    best = np.full(state.m, -np.inf)
    np.maximum.at(best, owner[split], gain[split])
    return True, int(np.argmax(best))


def _drop_group(psi, j):
    out = np.delete(psi, j, axis=1)
    total = out.sum(axis=1, keepdims=True)
    return np.where(total > 0, out / np.where(total > 0, total, 1.0), 1.0 / out.shape[1])


def _make_level(model, state, beta_critical, beta, error_model, correction):
    psi = state.psi
    info = relevance_information(state.relevance)
    gterm = kterm = 0.0
    if error_model is not None:
        gterm = gamma_correction_term(psi, state.alpha, error_model, correction.g_max)
        kterm = kappa_correction_term(state.relevance, psi, error_model,
                                      correction.g_max, correction.rho_as_tau)
    return HierarchyLevel(
        beta_critical=float(beta_critical),
        beta=float(beta),
        m=state.m,
        psi=psi.copy(),
        theta=state.theta.copy(),
        phi=build_reduced(state.theta, psi, model.gamma),
        divergence_bits=divergence_term(model, state),
        information_bits=info,
        corrected_information_bits=info - kterm,
        beta_star=compute_beta_star(model.gamma, psi),
        partition_information_bits=partition_information(model.gamma, psi),
        constraint_information_bits=constraint_information(model.gamma, psi),
        gamma_term_bits=gterm,
        kappa_term_bits=kterm,
        converged=state.converged,
    )


def run_hierarchy(model, anneal_config=None, optimizer_config=None, correction=None,
                  error_model=None, report=None):
    """Anneal from the single-group solution and return the list of levels.

    ``optimizer_config.beta`` is ignored (the sweep sets it). With a
    ``correction`` config the error-corrected updates drive every fixed
    point; otherwise the plain updates do. The corrected curve is always
    reported, using ``report`` (default: ``correction``, else the default
    config). The error model defaults to the multinomial one with that
    config's sample count.
    """
    n = model.n
    cfg = (anneal_config or AnnealConfig()).resolved(n)
    opt = optimizer_config or OptimizerConfig(0.0)
    rng = np.random.default_rng(cfg.seed)
    report = report or correction or CorrectionConfig()
    if error_model is None:
        error_model = multinomial_error_model(model, report.resolved_count(n))
    corr = None if correction is None else _corr_arrays(error_model, correction)

    psi = np.ones((n, 1))
    state = make_state(model, psi)
    state.converged = True
    stage_start, stage_beta = 0.0, 0.0
    levels = []

    def fixed_point(start, beta):
        # the sweep needs only the settled partition, not the traces
        start = _check_partition(start, n)
        out, iters, done = _updates.converge_batch(
            model.pi, model.gamma, start, float(beta), max_iters=opt.max_iters,
            tol=opt.psi_tol, floor=opt.support_floor, corr=corr)
        state = make_state(model, out, iteration=iters)
        state.converged = done
        return state

    for beta in cfg.grid(n):
        try:
            state = fixed_point(psi, beta)
        except EmptyGroupError as err:
            # the corrected criterion no longer supports this group
            levels.append(_make_level(model, state, stage_start, stage_beta,
                                      error_model, report))
            psi = _drop_group(psi, err.j)
            state = fixed_point(psi, beta)
            stage_start = beta
        psi, stage_beta = state.psi, beta
        if state.m >= cfg.max_groups:
            continue
        found, j = detect_phase_change(model, state, beta, cfg, rng, opt, corr)
        if not found:
            continue
        try:
            trial = fixed_point(split_bootstrap(psi, j, rng, cfg.max_groups), beta)
        except EmptyGroupError:
            continue
        base = _batch_objective(model, psi[None], beta)[0]
        gain = base - _batch_objective(model, trial.psi[None], beta)[0]
        if gain <= 1e-9:
            continue
        levels.append(_make_level(model, state, stage_start, stage_beta,
                                  error_model, report))
        state, psi = trial, trial.psi
        stage_start = stage_beta = beta
    levels.append(_make_level(model, state, stage_start, stage_beta, error_model, report))
    return levels


def select_group_count(hierarchy):
    """Level with the largest corrected information (ties to fewer groups).

    Also reports the first level whose critical ``beta`` reaches its own
    ``beta_star``, as a diagnostic.
    """
    if not hierarchy:
        raise EmptyHierarchyError("hierarchy has no levels")
    curve = np.array([lv.corrected_information_bits for lv in hierarchy])
    best = int(np.argmax(curve))
    flags = []
    if len(hierarchy) == 1:
        flags.append("single-level")
    elif best == len(hierarchy) - 1:
        flags.append("no-interior-max")
    crossing = next((lv.m for lv in hierarchy if lv.beta_critical >= lv.beta_star), None)
    return Selection(hierarchy[best].m, hierarchy[best], crossing, flags)
