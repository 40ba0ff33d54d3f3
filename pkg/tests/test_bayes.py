import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bayesian_outage_rates.bayes import (
    ALPHA_LOC_MAX,
    SIGMA_SQ_SCALE_MIN,
    ModelSpec,
    ParameterState,
    PriorSpec,
    dense_log_intercept_layer,
    grad_log_target_z,
    lambda_conditional,
    log_intercept_layer,
    log_likelihood,
    log_marginal_likelihood,
    log_posterior,
    log_prior,
    log_rate_layer,
    log_target,
)
from bayesian_outage_rates.empirical import EmpiricalFit
from bayesian_outage_rates.exceptions import ConfigError, DomainError, ValidationError
from bayesian_outage_rates.kernels import KernelSet, simdiag


def independent_spec(counts, exposure, x_l=None, x_v=None):
    n = len(counts)
    ids = [f"L{k}" for k in range(n)]
    zeros = np.zeros(n)
    return ModelSpec(
        line_ids=ids,
        counts=counts,
        exposure=exposure,
        x_l=zeros if x_l is None else x_l,
        x_v=zeros if x_v is None else x_v,
        diag=simdiag(np.eye(n), np.eye(n)),
        kernels=KernelSet(ids, np.eye(n), np.eye(n)),
    )


def start(spec, **values):
    state = ParameterState(
        alpha=1.0,
        beta_l=0.0,
        beta_v=0.0,
        m=0.0,
        sigma_sq=0.5,
        w=0.5,
        z=np.zeros(spec.n),
        lam=np.ones(spec.n),
    )
    return state.with_values(**values)


@pytest.fixture
def state(rng, spec):
    return ParameterState(
        alpha=1.7,
        beta_l=0.2,
        beta_v=-0.1,
        m=-1.2,
        sigma_sq=0.4,
        w=0.3,
        z=rng.standard_normal(spec.n),
        lam=rng.gamma(2.0, 0.2, size=spec.n),
    )


def test_poisson_log_likelihood():
    none = independent_spec([0], [1.0])
    assert log_likelihood(start(none), none) == pytest.approx(-1.0)
    one = independent_spec([2], [1.0])
    assert log_likelihood(start(one, lam=np.array([2.0])), one) == pytest.approx(np.log(2) - 2)
    both = independent_spec([0, 2], [1.0, 1.0])
    assert log_likelihood(start(both, lam=np.array([1.0, 2.0])), both) == pytest.approx(-1.0 + np.log(2) - 2)


def test_log_likelihood_rejects_zero_expectation():
    spec = independent_spec([1], [0.0])
    with pytest.raises(DomainError):
        log_likelihood(start(spec), spec)


def test_rate_layer_matches_gamma_density(spec, state):
    mu = spec.mu(state)
    expected = stats.gamma.logpdf(state.lam, a=state.alpha, scale=mu / state.alpha).sum()
    assert log_rate_layer(state, spec) == pytest.approx(expected)
    exponential = state.with_values(alpha=1.0)
    assert log_rate_layer(exponential, spec) == pytest.approx(stats.expon.logpdf(state.lam, scale=mu).sum())
    with pytest.raises(DomainError):
        log_rate_layer(state.with_values(alpha=0.0), spec)


def test_rate_layer_moments(rng):
    spec = independent_spec([0], [0.0])
    state = start(spec, alpha=2.5, m=np.log(0.3))
    layer = lambda_conditional(state, spec, 0).distribution()
    draws = layer.rvs(size=10**6, random_state=rng)
    assert draws.mean() == pytest.approx(0.3, rel=0.005)
    assert draws.var() == pytest.approx(0.3**2 / 2.5, rel=0.02)


def test_intercept_layer_matches_dense(spec, state):
    assert log_intercept_layer(state, spec) == pytest.approx(dense_log_intercept_layer(state, spec), rel=1e-9, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_intercept_layer_matches_dense_on_random_kernels(n, seed):
    rng = np.random.default_rng(seed)
    kernels = []
    for _ in range(2):
        a = rng.standard_normal((n, n))
        s = a @ a.T + n * np.eye(n)
        kernels.append(s / np.sqrt(np.outer(np.diag(s), np.diag(s))))
    ids = [f"L{k}" for k in range(n)]
    spec = ModelSpec(
        line_ids=ids,
        counts=np.zeros(n),
        exposure=np.ones(n),
        x_l=np.zeros(n),
        x_v=np.zeros(n),
        diag=simdiag(*kernels),
        kernels=KernelSet(ids, *kernels),
    )
    state = start(spec, m=rng.normal(), sigma_sq=rng.uniform(0.1, 2.0), w=rng.uniform(0.05, 0.95),
                  z=rng.standard_normal(n))
    assert log_intercept_layer(state, spec) == pytest.approx(dense_log_intercept_layer(state, spec), rel=1e-8, abs=1e-8)


def test_intercept_layer_reduces_to_independent_normals(rng):
    spec = independent_spec([0, 0, 0, 0], [1.0] * 4)
    state = start(spec, m=0.4, sigma_sq=0.7, w=0.5, z=rng.standard_normal(4))
    beta0 = spec.intercepts(state)
    expected = stats.norm.logpdf(beta0, loc=0.4, scale=np.sqrt(0.7)).sum()
    assert log_intercept_layer(state, spec) == pytest.approx(expected)


def test_intercept_layer_domain(spec, state):
    for values in (dict(sigma_sq=0.0), dict(w=0.0), dict(w=1.0)):
        with pytest.raises(DomainError):
            log_intercept_layer(state.with_values(**values), spec)


def test_whiten_inverts_intercepts(spec, state):
    beta0 = spec.intercepts(state)
    assert np.allclose(spec.whiten(beta0, state.m, state.sigma_sq, state.w), state.z)


def test_log_prior(state):
    priors = PriorSpec()
    assert log_prior(state.with_values(w=0.2), priors) == pytest.approx(log_prior(state.with_values(w=0.7), priors))
    ratio = log_prior(state.with_values(beta_l=5.13), priors) - log_prior(state.with_values(beta_l=0.13), priors)
    assert ratio == pytest.approx(-0.5)
    ratio = log_prior(state.with_values(m=-1.5 + 10), priors) - log_prior(state.with_values(m=-1.5), priors)
    assert ratio == pytest.approx(-2.0)
    for values in (dict(alpha=0.0), dict(alpha=-1.0), dict(sigma_sq=0.0), dict(w=0.0), dict(w=1.0)):
        assert log_prior(state.with_values(**values), priors) == -np.inf


def test_zero_location_alpha_prior(state):
    priors = PriorSpec(alpha_zero_location=True)
    expected = log_prior(state, PriorSpec()) - PriorSpec().alpha_distribution().logpdf(state.alpha)
    expected += stats.halfnorm(scale=8.0).logpdf(state.alpha)
    assert log_prior(state, priors) == pytest.approx(expected)


def test_posterior_is_sum_of_layers(spec, state):
    total = (
        log_prior(state, spec.priors)
        + log_intercept_layer(state, spec)
        + log_rate_layer(state, spec)
        + log_likelihood(state, spec)
    )
    assert log_posterior(state, spec) == pytest.approx(total)
    assert log_posterior(state.copy(), spec) == log_posterior(state, spec)


def test_posterior_on_support_boundary_is_never_nan(spec, state):
    for values in (dict(alpha=0.0), dict(w=0.0), dict(w=1.0), dict(sigma_sq=0.0)):
        assert log_posterior(state.with_values(**values), spec) == -np.inf
        assert log_target(state.with_values(**values), spec) == -np.inf


def test_lambda_conditional():
    spec = independent_spec([3], [2.0])
    conditional = lambda_conditional(start(spec, alpha=1.0), spec, 0)
    assert (conditional.shape, conditional.rate) == (4.0, 3.0)
    assert conditional.mean == pytest.approx(4 / 3)

    empty = independent_spec([0], [0.0])
    state = start(empty, alpha=2.0, m=np.log(0.5))
    prior = lambda_conditional(state, empty, 0)
    assert prior.shape == 2.0 and prior.rate == pytest.approx(4.0)


def test_lambda_conditional_limits():
    for t in (1.0, 10.0, 1e6):
        spec = independent_spec([5 * t], [t])
        assert lambda_conditional(start(spec), spec, 0).mean > 0
    assert lambda_conditional(start(spec), spec, 0).mean == pytest.approx(5.0, rel=1e-5)


def test_lambda_conditional_mode_grows_with_counts():
    modes = []
    for count in (1, 2, 5):
        spec = independent_spec([count], [3.0])
        conditional = lambda_conditional(start(spec, alpha=1.5), spec, 0)
        modes.append((conditional.shape - 1) / conditional.rate)
    assert modes == sorted(modes) and len(set(modes)) == 3


def test_lambda_conditional_agrees_with_posterior(spec, state):
    i = 3
    conditional = lambda_conditional(state, spec, i).distribution()
    a, b = 0.1, 0.9
    low = state.lam.copy()
    high = state.lam.copy()
    low[i], high[i] = a, b
    posterior_ratio = log_posterior(state.with_values(lam=high), spec) - log_posterior(state.with_values(lam=low), spec)
    assert posterior_ratio == pytest.approx(conditional.logpdf(b) - conditional.logpdf(a), abs=1e-10)


def test_marginal_likelihood_integrates_out_rates():
    spec = independent_spec([0, 3, 7], [2.0, 2.0, 5.0], x_l=np.array([0.0, 0.5, -1.0]))
    state = start(spec, alpha=1.8, m=-0.3, beta_l=0.4)
    mu = spec.mu(state)
    total = 0.0
    for i in range(spec.n):
        def integrand(lam):
            return stats.poisson.pmf(spec.counts[i], lam * spec.exposure[i]) * stats.gamma.pdf(
                lam, a=state.alpha, scale=mu[i] / state.alpha
            )

        value, _ = integrate.quad(integrand, 0, np.inf, limit=200)
        total += np.log(value)
    assert log_marginal_likelihood(state, spec) == pytest.approx(total, rel=1e-7)


@pytest.mark.parametrize("collapsed", [True, False])
def test_gradient_matches_finite_differences(spec, state, collapsed):
    gradient = grad_log_target_z(state, spec, collapsed=collapsed)
    step = 1e-6
    numeric = np.empty(spec.n)
    for k in range(spec.n):
        up, down = state.z.copy(), state.z.copy()
        up[k] += step
        down[k] -= step
        numeric[k] = (
            log_target(state.with_values(z=up), spec, collapsed=collapsed)
            - log_target(state.with_values(z=down), spec, collapsed=collapsed)
        ) / (2 * step)
    assert np.allclose(gradient, numeric, rtol=1e-5, atol=1e-5)


def test_model_spec_dimensions(spec, tmp_path):
    assert spec.n_parameters == 2 * spec.n + 6
    with pytest.raises(ValidationError):
        ModelSpec(spec.line_ids, spec.counts[:-1], spec.exposure, spec.x_l, spec.x_v, spec.diag)
    spec.to_json(tmp_path / "model.json")
    assert spec.to_dict()["n_parameters"] == 2 * spec.n + 6


def test_prior_spec():
    informative = PriorSpec.informative(sd=0.5)
    assert (informative.beta_l_sd, informative.beta_v_sd, informative.m_sd) == (0.5, 0.5, 0.5)
    assert PriorSpec.from_dict(informative.to_dict()) == informative
    with pytest.raises(ConfigError):
        PriorSpec.from_dict({"alpha_loc": 1.0, "gamma_rate": 2.0})
    with pytest.raises(ConfigError):
        PriorSpec(sigma_sq_scale=0.0)


def empirical_fit(**values):
    parameters = dict(m=-0.4, beta_l=0.3, beta_v=-0.2, sigma1_sq=0.45, sigma2_sq=0.42, log_likelihood=-10.0)
    parameters.update(values)
    return EmpiricalFit(**parameters)


def test_priors_from_fit():
    priors = PriorSpec.from_fit(empirical_fit())
    assert (priors.m_mean, priors.beta_l_mean, priors.beta_v_mean) == (-0.4, 0.3, -0.2)
    assert (priors.m_sd, priors.beta_l_sd, priors.beta_v_sd) == (5.0, 5.0, 5.0)
    assert priors.sigma_sq_scale == pytest.approx(0.45)
    # a fitted intercept variance of 0.87 puts the alpha location near 0.7
    assert priors.alpha_loc == pytest.approx(1 / np.expm1(0.87))
    assert priors.alpha_loc == pytest.approx(0.72, abs=0.01)
    assert PriorSpec.from_fit(empirical_fit(), sd=1.0).m_sd == 1.0


def test_calibration_keeps_prior_widths():
    priors = PriorSpec(m_sd=2.0, alpha_scale=3.0).calibrated(empirical_fit())
    assert priors.m_mean == -0.4
    assert (priors.m_sd, priors.alpha_scale) == (2.0, 3.0)
    tight = priors.tightened()
    assert (tight.m_sd, tight.m_mean) == (1.0, -0.4)


def test_calibration_can_be_switched_off():
    priors = PriorSpec(calibrate_from_fit=False)
    assert priors.calibrated(empirical_fit()) == priors
    assert PriorSpec().calibrated(None) == PriorSpec()
    assert PriorSpec.from_dict({"calibrate_from_fit": False}) == priors


def test_calibration_without_intercept_variance():
    priors = PriorSpec.from_fit(empirical_fit(sigma1_sq=0.0, sigma2_sq=0.0))
    assert priors.alpha_loc == ALPHA_LOC_MAX
    assert priors.sigma_sq_scale == SIGMA_SQ_SCALE_MIN
