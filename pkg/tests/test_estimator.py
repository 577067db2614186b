import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbef.errors import ConfigurationError, DegeneratePredictorError
from pbef.estimator import (LagSums, PredictorSpec, SolverOptions, assemble_multi, gamma_limit, gfun_onelag,
                            gfun_simple, moment_condition_residual, predictor_from_config, predictor_to_config,
                            projection_coefficients, solve_onelag, solve_simple, theta_jacobian, w_limit)
from pbef.functions import SmoothFunction
from pbef.model import CoxIngersollRoss, OrnsteinUhlenbeck
from pbef.simulate import SamplePath, SamplingScheme, simulate_path, simulate_paths

x = SmoothFunction.identity()
x2 = SmoothFunction.monomial(2)
onelag = PredictorSpec(x, 1)


def _path(values, delta=0.1):
    values = np.asarray(values, dtype=float)
    return SamplePath(SamplingScheme(values.size - 1, delta), values)


@pytest.fixture
def ou_path(ou_two):
    return simulate_path(ou_two, [1.0, 2.0], SamplingScheme(50_000, 0.02, seed=21))


def test_ou_exact_coefficients(ou_full):
    k, e, d = 1.3, 0.4, 0.2
    c = projection_coefficients(ou_full, [k, e, 0.9], onelag, d)
    assert c.method == "exact_moments"
    assert c.a[1] == pytest.approx(math.exp(-k * d), rel=1e-12)
    assert c.a[0] == pytest.approx(e * (1 - math.exp(-k * d)), rel=1e-10)
    assert np.max(np.abs(moment_condition_residual(ou_full, [k, e, 0.9], onelag, c))) < 1e-12


def test_expansion_coefficients(ou_full):
    k, e, d = 1.3, 0.4, 0.2
    c = projection_coefficients(ou_full, [k, e, 0.9], onelag, d, "expansion_order1")
    assert c.a[1] == pytest.approx(1 - k * d)
    assert c.a[0] == pytest.approx(e * k * d)


def test_q0_coefficients(cir_full):
    c = projection_coefficients(cir_full, [1.0, 2.0, 0.5], PredictorSpec(x, 0), 0.1)
    assert c.a.tolist() == [pytest.approx(2.0)]


def test_q2_yule_walker(ou_full):
    th = [1.0, 0.5, 1.0]
    spec = PredictorSpec(x, 2)
    c = projection_coefficients(ou_full, th, spec, 0.1)
    # AR(1): the second lag carries no extra information
    assert c.a[2] == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(moment_condition_residual(ou_full, th, spec, c))) < 1e-12
    spec2 = PredictorSpec(x2, 2)
    c2 = projection_coefficients(ou_full, th, spec2, 0.1)
    assert np.max(np.abs(moment_condition_residual(ou_full, th, spec2, c2))) < 1e-10


def test_expansion_order_remainder(ou_full):
    th = [1.0, 0.0, 1.0]
    for d in (0.2, 0.1, 0.05):
        r = [abs(projection_coefficients(ou_full, th, onelag, h).a[1] - (1 - h)) for h in (d, d / 2)]
        assert r[0] / r[1] == pytest.approx(4.0, rel=0.25)


def test_gfun_simple_examples(ou_mean):
    p = _path([2.0, 2.0, 2.0])
    g = gfun_simple(ou_mean, [2.0], p, PredictorSpec(x, 0))
    assert g.value[0] == pytest.approx(0.0)
    p1 = _path([0.3, 1.7])
    assert gfun_simple(ou_mean, [0.5], p1, PredictorSpec(x, 0)).value[0] == pytest.approx(1.7 - 0.5)


def test_solve_simple_sample_mean(ou_mean):
    p = simulate_path(ou_mean, [1.0], SamplingScheme(2000, 0.05, seed=3))
    r = solve_simple(ou_mean, p, PredictorSpec(x, 0), [0.0])
    assert r.theta_hat.values[0] == pytest.approx(p.values[1:].mean(), abs=1e-12)
    assert not r.fallback_used


def test_solve_simple_fallback():
    m = OrnsteinUhlenbeck(free=("eta",), fixed={"kappa": 1.0, "xi": 1.0}, bounds={"eta": (-1.0, 1.0)})
    r = solve_simple(m, _path([5.0, 5.0, 5.0]), PredictorSpec(x, 0), [0.0], theta_star=[0.25])
    assert r.fallback_used and r.theta_hat.values[0] == 0.25


def test_solve_simple_nonlinear_link():
    # theta = kappa with f(x) = x^2: mu(f) = eta^2 + xi^2/(2 kappa)
    m = OrnsteinUhlenbeck(free=("kappa",), fixed={"eta": 0.0, "xi": 1.0})
    c = 0.8
    r = solve_simple(m, _path([c, c, c, c]), PredictorSpec(x2, 0), [1.0])
    assert r.theta_hat.values[0] == pytest.approx(1 / (2 * c**2), rel=1e-12)


def test_gfun_onelag_two_terms(ou_two):
    vals = [0.4, 1.1, 0.7]
    p = _path(vals, 0.1)
    th = [0.5, 1.5]
    a = projection_coefficients(ou_two, th, onelag, 0.1).a
    manual = np.zeros(2)
    for i in (1, 2):
        resid = vals[i] - a[0] - a[1] * vals[i - 1]
        manual += np.array([1.0, vals[i - 1]]) * resid
    assert np.allclose(gfun_onelag(ou_two, th, p, onelag).value, manual, rtol=1e-13)


def test_jacobian_matches_finite_differences(ou_two, ou_path):
    th = [0.9, 1.7]
    g = gfun_onelag(ou_two, th, ou_path, onelag, normalization="per_nDelta")
    fd = theta_jacobian(lambda t: gfun_onelag(ou_two, t, ou_path, onelag, normalization="per_nDelta").value,
                        th, ou_two.bounds, rel=1e-4)
    assert np.allclose(g.jacobian, fd, rtol=1e-5, atol=1e-8)


def test_solve_onelag_matches_ar1_regression(ou_two, ou_path):
    r = solve_onelag(ou_two, ou_path, onelag, [1.0, 2.0])
    x0, x1 = ou_path.values[:-1], ou_path.values[1:]
    b, a = np.polyfit(x0, x1, 1)
    assert r.theta_hat.values[1] == pytest.approx(-math.log(b) / 0.02, rel=1e-7)
    assert r.theta_hat.values[0] == pytest.approx(a / (1 - b), rel=1e-7)
    assert r.converged and r.n_iterations <= 5


def test_equivalent_estimating_functions(ou_two, ou_path):
    base = solve_onelag(ou_two, ou_path, onelag, [0.7, 1.2]).theta_hat.values
    M = np.array([[2.0, 1.0], [-0.5, 3.0]])
    other = solve_onelag(ou_two, ou_path, onelag, [0.7, 1.2], SolverOptions(transform=M)).theta_hat.values
    assert np.allclose(base, other, rtol=1e-7)


def test_multistart(ou_two, ou_path):
    r = solve_onelag(ou_two, ou_path, onelag, [0.7, 1.2],
                     SolverOptions(multistart=[[1.5, 3.0], [0.2, 0.8]]))
    assert r.diagnostics["n_starts"] == 3
    assert r.theta_hat.values[1] == pytest.approx(2.0, rel=0.2)


def test_degenerate_predictor(ou_two):
    with pytest.raises(DegeneratePredictorError):
        solve_onelag(ou_two, _path([1.0] * 20), PredictorSpec(SmoothFunction.constant(2.0), 1), [1.0, 1.0])


def test_unbiased_at_truth(ou_two):
    th = [1.0, 2.0]
    s = SamplingScheme(500, 0.05, seed=8)
    paths = simulate_paths(ou_two, th, s, stream_ids=range(400))
    vals = np.array([gfun_onelag(ou_two, th, SamplePath(s, p), onelag).value / 500 for p in paths])
    m, se = vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
    assert np.all(np.abs(m) < 4 * se)


def test_gamma_limit_closed_form(ou_two):
    th0 = [1.0, 2.0]
    assert np.allclose(gamma_limit(ou_two, th0, th0, onelag), 0.0, atol=1e-13)
    for eta, kap in [(0.5, 1.0), (1.5, 3.0), (-0.2, 0.7)]:
        expect = [-kap * (eta - 1.0), -0.5 + kap * (1.0 + 1 / 4 - eta)]
        assert np.allclose(gamma_limit(ou_two, th0, [eta, kap], onelag), expect, rtol=1e-10)


def test_w_limit_closed_form(ou_two):
    th = [1.0, 2.0]
    W = w_limit(ou_two, th, th, onelag)
    assert np.allclose(W, [[-2.0, 0.0], [-2.0, 0.25]], atol=1e-8)
    assert np.linalg.det(W) == pytest.approx(-2 * 0.25, rel=1e-8)


def test_w_limit_from_data(ou_two, ou_path):
    th = [1.0, 2.0]
    J = gfun_onelag(ou_two, th, ou_path, onelag, normalization="per_nDelta").jacobian
    W = w_limit(ou_two, th, th, onelag)
    big = np.abs(W) > 1e-6
    assert np.allclose(J[big], W[big], rtol=0.1)


def test_cir_onelag_default_exact(cir_full):
    m = CoxIngersollRoss(free=("kappa", "eta"), fixed={"xi": 0.5})
    p = simulate_path(m, [1.0, 1.0], SamplingScheme(20_000, 0.05, substeps=10, seed=1))
    r = solve_onelag(m, p, onelag, [1.0, 1.0])
    assert r.theta_hat.values == pytest.approx([1.0, 1.0], rel=0.35)


def test_assemble_multi(ou_two, ou_path):
    th = [0.9, 1.8]
    single = assemble_multi(ou_two, th, ou_path, [onelag], np.eye(2))
    assert np.allclose(single.value, gfun_onelag(ou_two, th, ou_path, onelag).value)
    assert not single.diagnostics["scaffold_only"]
    stacked = assemble_multi(ou_two, th, ou_path, [PredictorSpec(x, 0), PredictorSpec(x2, 0)], np.eye(2))
    mu = [0.9, 0.9**2 + 1 / 3.6]
    v = ou_path.values[1:]
    assert np.allclose(stacked.value, [np.sum(v - mu[0]), np.sum(v**2 - mu[1])], rtol=1e-10)
    assert stacked.diagnostics["scaffold_only"]


def test_assemble_q2_by_hand(ou_full):
    th = [1.0, 0.0, 1.0]
    vals = [0.1, -0.4, 0.3]
    spec = PredictorSpec(x, 2)
    a = projection_coefficients(ou_full, th, spec, 0.1).a
    A = np.hstack([np.eye(3)])
    g = assemble_multi(ou_full, th, _path(vals), [spec], A)
    z = np.array([1.0, vals[1], vals[0]])
    assert np.allclose(g.value, z * (vals[2] - z @ a))
    assert g.diagnostics["scaffold_only"] and g.diagnostics["d_bar"] == 3
    with pytest.raises(ConfigurationError):
        assemble_multi(ou_full, th, _path(vals), [spec], np.eye(2))


def test_lag_sums_index_convention():
    s = LagSums.from_path(_path([1.0, 2.0, 3.0, 4.0]), x, 1)
    assert s.n_terms == 3
    assert np.allclose(s.S, [2 + 3 + 4, 1 * 2 + 2 * 3 + 3 * 4])


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=6))
def test_predictor_config_round_trip(coefs):
    spec = PredictorSpec(SmoothFunction.polynomial(coefs), 1)
    back = predictor_from_config(predictor_to_config(spec))
    grid = np.linspace(-1, 1, 7)
    assert np.allclose(back.f(grid), spec.f(grid))
