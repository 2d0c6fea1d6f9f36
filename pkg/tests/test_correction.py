import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from markov_voi import _updates
from markov_voi.aggregation import LN2, build_relevance, hard_partition
from markov_voi.annealing import AnnealConfig, run_hierarchy
from markov_voi.correction import (
    CorrectionConfig,
    corrected_ib_update,
    corrected_init_update,
    corrected_objective,
    gamma_correction_term,
    kappa_correction_term,
    multinomial_error_model,
)
from markov_voi.markov import NcdSpec, TransitionModel, generate_ncd
from markov_voi.optimizer import (
    OptimizerConfig,
    evaluate_objective,
    ib_update,
    init_update,
    make_state,
    run_fixed_point,
)

from conftest import random_chain, random_partition

seeds = st.integers(0, 2**31)
HUGE = 10**12


def test_config_validation():
    with pytest.raises(ValueError):
        CorrectionConfig(g_max=1)
    with pytest.raises(ValueError):
        CorrectionConfig(sample_count=0)
    with pytest.raises(ValueError):
        CorrectionConfig(init_scale="half")
    assert CorrectionConfig().resolved_count(9) == 50 * 81


def test_gamma_cov_two_state():
    model = TransitionModel.from_matrix([[0.5, 0.5], [0.5, 0.5]])
    em = multinomial_error_model(model, 100)
    np.testing.assert_allclose(em.gamma_cov, [[0.0025, -0.0025], [-0.0025, 0.0025]], atol=1e-18)


def test_covariances_match_sampling(rng):
    model = random_chain(rng, 4)
    n_samples = 500
    em = multinomial_error_model(model, n_samples, visits=np.full(4, 200))
    draws = rng.multinomial(n_samples, model.gamma, size=200_000) / n_samples
    np.testing.assert_allclose(np.cov(draws.T), em.gamma_cov, atol=7e-6)  # ~5 SE
    rows = rng.multinomial(200, model.pi[1], size=200_000) / 200
    np.testing.assert_allclose(np.cov(rows.T), em.eta_cov_for(1), atol=2e-5)  # ~5 SE


@given(seed=seeds, n=st.integers(2, 7))
def test_covariances_are_centred_psd(seed, n):
    rng = np.random.default_rng(seed)
    model = random_chain(rng, n)
    em = multinomial_error_model(model, 1000)
    for cov in [em.gamma_cov, *em.eta_cov]:
        np.testing.assert_allclose(cov.sum(axis=1), 0, atol=1e-15)
        np.testing.assert_allclose(cov, cov.T, atol=0)
        assert np.linalg.eigvalsh(cov).min() > -1e-15


def test_gaussian_closure_moments(rng):
    x = rng.standard_normal(2_000_000) * 0.3
    y = 0.5 * x + rng.standard_normal(x.size) * 0.2
    assert _updates.gauss_moment(0.09, 4) == pytest.approx(3 * 0.09 ** 2)
    assert _updates.gauss_moment(0.09, 3) == 0.0
    assert np.mean(x ** 4) == pytest.approx(_updates.gauss_moment(0.09, 4), rel=1e-2)
    cov, var = np.cov(x, y)[0, 1], np.var(y)
    assert np.mean(x * y ** 3) == pytest.approx(_updates.gauss_cross_moment(cov, var, 4),
                                                rel=2e-2)


def test_gamma_term_limits(rng):
    model = random_chain(rng, 5)
    em = multinomial_error_model(model, 1000)
    assert gamma_correction_term(np.ones((5, 1)), [1.0], em) == pytest.approx(0, abs=1e-18)
    psi = hard_partition([0, 0, 1, 1, 2])
    alpha = model.gamma @ psi
    closed = np.sum((1 - alpha) / (2 * 1000 * LN2))
    assert gamma_correction_term(psi, alpha, em) == pytest.approx(closed, rel=1e-12)
    huge = multinomial_error_model(model, HUGE)
    assert abs(gamma_correction_term(psi, alpha, huge, g_max=4)) < 1e-11


def test_kappa_term_limits(rng):
    model = random_chain(rng, 5)
    em = multinomial_error_model(model, 1000)
    one = np.ones((5, 1))
    # a single group: the group law is the next-state marginal itself
    assert kappa_correction_term(build_relevance(model, one), one, em) == \
        pytest.approx(0, abs=1e-15)
    psi = random_partition(rng, 5, 2)
    huge = multinomial_error_model(model, HUGE)
    assert abs(kappa_correction_term(build_relevance(model, psi), psi, huge, g_max=4)) < 1e-9
    assert kappa_correction_term(build_relevance(model, psi), psi, em) > 0


def _mc_terms(model, psi, n_samples, visits, draws, rng):
    """Monte Carlo estimates (mean, standard error) of both g=2 terms."""
    gamma, pi = model.gamma, model.pi
    alpha = gamma @ psi
    gbar = rng.multinomial(n_samples, gamma, size=draws) / n_samples - gamma
    abar = gbar @ psi
    g_samples = (abar ** 2 / alpha).sum(axis=1) / (2 * LN2)
    tau = gamma[:, None] * psi / alpha
    rho = (pi.T @ (gamma[:, None] * psi))
    omega = gamma @ pi
    x = np.zeros((draws, len(gamma), psi.shape[1]))
    w = np.zeros((draws, len(gamma)))
    for i in range(len(gamma)):
        ebar = rng.multinomial(visits[i], pi[i], size=draws) / visits[i] - pi[i]  # (d, q)
        x += ebar[:, :, None] * tau[i][None, None, :]
        w += gamma[i] * ebar
    k_samples = ((x ** 2 / rho).sum(axis=(1, 2))
                 - psi.shape[1] * (w ** 2 / omega).sum(axis=1)) / (2 * LN2)
    sem = lambda s: s.std(ddof=1) / np.sqrt(draws)
    return (g_samples.mean(), sem(g_samples)), (k_samples.mean(), sem(k_samples))


def test_g2_terms_match_monte_carlo(rng):
    model = random_chain(rng, 4)
    psi = random_partition(rng, 4, 2)
    visits = np.array([300, 250, 400, 350])
    em = multinomial_error_model(model, 1000, visits=visits)
    (gm, gs), (km, ks) = _mc_terms(model, psi, 1000, visits, 40_000, rng)
    assert abs(gamma_correction_term(psi, model.gamma @ psi, em) - gm) < 4 * gs
    k = kappa_correction_term(build_relevance(model, psi), psi, em)
    assert abs(k - km) < 4 * ks


def test_objective_sign_structure_and_limits(rng):
    model = random_chain(rng, 5)
    psi = random_partition(rng, 5, 3)
    em = multinomial_error_model(model, 500)
    cfg = CorrectionConfig()
    first = make_state(model, psi, iteration=0)
    later = make_state(model, psi, iteration=2)
    g = gamma_correction_term(psi, first.alpha, em)
    k = kappa_correction_term(later.relevance, psi, em)
    assert corrected_objective(model, first, 2.0, cfg, em) == pytest.approx(
        evaluate_objective(model, first, 2.0) + g, abs=1e-14)
    assert corrected_objective(model, later, 2.0, cfg, em) == pytest.approx(
        evaluate_objective(model, later, 2.0) - k, abs=1e-14)
    huge = multinomial_error_model(model, HUGE)
    for st_ in (first, later):
        assert corrected_objective(model, st_, 2.0, cfg, huge) == pytest.approx(
            evaluate_objective(model, st_, 2.0), abs=1e-9)
    one = make_state(model, np.ones((5, 1)), iteration=2)
    assert corrected_objective(model, one, 2.0, cfg, em) == pytest.approx(
        evaluate_objective(model, one, 2.0), abs=1e-14)


def _eq6_oracle(model, psi, beta, em):
    n, m = psi.shape
    g, pi, cov = model.gamma, model.pi, em.gamma_cov
    alpha = [sum(g[i] * psi[i, j] for i in range(n)) for j in range(m)]
    theta = [[sum(g[i] * psi[i, j] * pi[i, p] for i in range(n)) / alpha[j] for p in range(n)]
             for j in range(m)]
    out = np.zeros((n, m))
    for i in range(n):
        logits = []
        for j in range(m):
            kl = sum(pi[i, p] * math.log(pi[i, p] / theta[j][p]) for p in range(n))
            var_a = sum(psi[s, j] * cov[s, t] * psi[t, j] for s in range(n) for t in range(n))
            cov_ia = sum(cov[i, s] * psi[s, j] for s in range(n))
            shift = var_a / (2 * alpha[j] ** 2) - cov_ia / (g[i] * alpha[j])
            logits.append(math.log(alpha[j]) - beta * kl + beta * shift)
        top = max(logits)
        w = [math.exp(v - top) for v in logits]
        out[i] = [v / sum(w) for v in w]
    return out


def _eq7_oracle(model, psi, beta, em):
    n, m = psi.shape
    g, pi = model.gamma, model.pi
    var = em.eta_var  # var[i, q]
    alpha = [sum(g[i] * psi[i, j] for i in range(n)) for j in range(m)]
    tau = [[g[i] * psi[i, j] / alpha[j] for j in range(m)] for i in range(n)]
    kappa = [[sum(pi[i, q] * tau[i][j] for i in range(n)) for j in range(m)] for q in range(n)]
    out = np.zeros((n, m))
    for i in range(n):
        logits = []
        for j in range(m):
            kl = sum(pi[i, q] * math.log(pi[i, q] / kappa[q][j]) for q in range(n))
            s = 0.0
            for q in range(n):
                e_k2 = sum(tau[r][j] ** 2 * var[r, q] for r in range(n))
                e_ek = tau[i][j] * var[i, q]
                s += pi[i, q] * e_k2 / (2 * kappa[q][j] ** 2) - e_ek / kappa[q][j] ** 2
            logits.append(math.log(alpha[j]) - beta * kl - beta * s)
        top = max(logits)
        w = [math.exp(v - top) for v in logits]
        out[i] = [v / sum(w) for v in w]
    return out


def test_corrected_init_matches_transcription(rng):
    model = random_chain(rng, 3)
    psi = random_partition(rng, 3, 2)
    em = multinomial_error_model(model, 60)
    out = corrected_init_update(model, psi, OptimizerConfig(2.5), em)
    np.testing.assert_allclose(out, _eq6_oracle(model, psi, 2.5, em), atol=1e-13)


def test_corrected_ib_matches_transcription(rng):
    model = random_chain(rng, 4)
    psi = random_partition(rng, 4, 2)
    em = multinomial_error_model(model, 80)
    state = make_state(model, psi, iteration=1)
    out = corrected_ib_update(model, state, OptimizerConfig(3.0), em).psi
    np.testing.assert_allclose(out, _eq7_oracle(model, psi, 3.0, em), atol=1e-13)


def test_corrected_updates_vanish_at_large_n(rng):
    model = random_chain(rng, 5)
    psi = random_partition(rng, 5, 3)
    huge = multinomial_error_model(model, HUGE)
    config = OptimizerConfig(4.0)
    np.testing.assert_allclose(corrected_init_update(model, psi, config, huge),
                               init_update(model, psi, config), atol=1e-9)
    state = make_state(model, psi, iteration=1)
    np.testing.assert_allclose(corrected_ib_update(model, state, config, huge).psi,
                               ib_update(model, state, config).psi, atol=1e-9)


def test_corrected_init_beta_zero_is_prior(rng):
    model = random_chain(rng, 4)
    psi = random_partition(rng, 4, 3)
    em = multinomial_error_model(model, 50)
    out = corrected_init_update(model, psi, OptimizerConfig(0.0), em)
    np.testing.assert_allclose(out, np.tile(model.gamma @ psi, (4, 1)), atol=1e-15)


def test_unit_scale_keeps_rows_stochastic(rng):
    model = random_chain(rng, 4)
    psi = random_partition(rng, 4, 3)
    em = multinomial_error_model(model, 50)
    out = corrected_init_update(model, psi, OptimizerConfig(0.0), em,
                                CorrectionConfig(init_scale="unit"))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-15)


def test_corrected_block_fixed_point_is_stable():
    model = generate_ncd(NcdSpec([2, 3], 0.0, 3))
    psi = hard_partition([0, 0, 1, 1, 1])
    em = multinomial_error_model(model, 10**8)
    res = run_fixed_point(model, psi, OptimizerConfig(20.0), CorrectionConfig(), em)
    assert res.converged
    np.testing.assert_allclose(res.psi, psi, atol=1e-9)


@given(seed=seeds, beta=st.floats(0.1, 30.0))
def test_corrected_rows_stochastic(seed, beta):
    rng = np.random.default_rng(seed)
    model = random_chain(rng, 5)
    em = multinomial_error_model(model, 2000)
    state = make_state(model, random_partition(rng, 5, 3), iteration=1)
    out = corrected_ib_update(model, state, OptimizerConfig(beta), em).psi
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_corrected_curve_below_raw(seed):
    model = generate_ncd(NcdSpec([2, 2, 2, 3], 0.05, seed))
    levels = run_hierarchy(model, AnnealConfig(seed=seed),
                           report=CorrectionConfig(sample_count=10**4))
    for lv in levels:
        assert lv.corrected_information_bits <= lv.information_bits + 1e-15
