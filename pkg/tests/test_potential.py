import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbef.errors import ConfigurationError, IdentifiabilityError, NotAvailableError
from pbef.estimator import PredictorSpec
from pbef.functions import SmoothFunction
from pbef.model import CoxIngersollRoss, OrnsteinUhlenbeck, invariant_moment
from pbef.potential import (AvarReport, PotentialMCConfig, avar_onelag, avar_simple, boundary_check,
                            clt_variance, dx_potential_term, ibp_weight, onelag_functions, ou_pairing_truncated,
                            poisson_residual, potential_closed_form_ou, potential_norm_check,
                            potential_pairing_exact, potential_pairing_mc, potential_polynomial,
                            transition_norms_mc)

x = SmoothFunction.identity()
zero = SmoothFunction.constant(0.0)
OU = OrnsteinUhlenbeck()
SMALL = PotentialMCConfig(K=4000, t_max=8.0, seed=5)


def test_closed_form_ou_examples():
    u = potential_closed_form_ou(OU, [2.0, 1.0, 1.0])
    assert u(3.0) == pytest.approx(1.0)
    assert u.d1(np.array([-4.0, 7.0])).tolist() == [0.5, 0.5]
    probes = np.linspace(-3, 5, 101)
    assert poisson_residual(OU, [2.0, 1.0, 1.0], u, x - 1.0, probes) < 1e-12
    with pytest.raises(NotAvailableError):
        potential_closed_form_ou(CoxIngersollRoss(), [1.0, 1.0, 0.5])
    with pytest.raises(NotAvailableError):
        potential_closed_form_ou(OU, [2.0, 1.0, 1.0], "quadratic")


@pytest.mark.parametrize("model,theta", [(OU, [1.3, 0.4, 0.8]), (CoxIngersollRoss(), [1.5, 1.0, 0.6])])
@pytest.mark.parametrize("deg", [1, 2, 3])
def test_polynomial_potential_solves_poisson(model, theta, deg):
    f = SmoothFunction.monomial(deg)
    fc = f - invariant_moment(model, theta, f)
    u = potential_polynomial(model, theta, f)
    probes = np.linspace(0.1, 3.0, 101)
    assert poisson_residual(model, theta, u, fc, probes) < 1e-10
    assert abs(invariant_moment(model, theta, u)) < 1e-12
    chk = potential_norm_check(model, theta, f)
    assert chk["ok"]


def test_polynomial_potential_matches_ou_closed_form():
    th = [2.0, 1.0, 0.7]
    u = potential_polynomial(OU, th, x)
    v = potential_closed_form_ou(OU, th)
    grid = np.linspace(-2, 4, 9)
    assert np.allclose(u(grid), v(grid), atol=1e-14)


def test_pairing_exact_ou():
    th = [1.0, 0.0, 1.0]
    assert potential_pairing_exact(OU, th, x, x).value == pytest.approx(0.5)
    k, e, s = 2.0, 1.0, 1.5
    assert potential_pairing_exact(OU, [k, e, s], x - e, x - e).value == pytest.approx(s**2 / (2 * k**2))


def test_pairing_mc_ou():
    est = potential_pairing_mc(OU, [1.0, 0.0, 1.0], x, x, PotentialMCConfig(K=4000, t_max=12.0, seed=1))
    assert abs(est.value - 0.5) < 4 * est.stderr + 1e-3
    assert est.bias_bound is not None and est.bias_bound < 1e-4


def test_pairing_mc_zero_g1():
    assert potential_pairing_mc(OU, [1.0, 0.0, 1.0], zero, x, SMALL).value == 0.0


def test_grid_matches_truncated_integral():
    th = [1.0, 0.5, 1.0]
    t_max = 2.0
    est = potential_pairing_mc(OU, th, x - 0.5, x - 0.5, PotentialMCConfig(K=4000, t_max=t_max, seed=2))
    assert abs(est.value - ou_pairing_truncated(OU, th, t_max)) < 3 * est.stderr + 1e-4


def test_estimators_agree():
    th = [1.0, 0.0, 1.0]
    g = PotentialMCConfig(K=4000, t_max=10.0, seed=3)
    e = PotentialMCConfig(K=200_000, t_max=10.0, gamma=0.1, estimator="exp_time", seed=3)
    a, b = potential_pairing_mc(OU, th, x, x, g), potential_pairing_mc(OU, th, x, x, e)
    assert not b.stderr_reliable
    assert abs(a.value - b.value) < 3 * math.hypot(a.stderr, b.stderr)


def test_autocentering_warns():
    with pytest.warns(RuntimeWarning, match="not centred"):
        est = potential_pairing_mc(OU, [1.0, 2.0, 1.0], x - 2.0, x, SMALL)
    assert est.diagnostics["g2_mean_removed"] == pytest.approx(2.0)


def test_small_k_is_diagnostic_only():
    est = potential_pairing_mc(OU, [1.0, 0.0, 1.0], x, x, PotentialMCConfig(K=5, t_max=4.0))
    assert est.diagnostics["diagnostics_only"] and math.isnan(est.stderr)


def test_config_validation():
    for bad in (dict(gamma=0.0), dict(K=0), dict(t_max=-1.0), dict(estimator="spline")):
        with pytest.raises(ConfigurationError):
            PotentialMCConfig(**bad)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.1, 5.0))
def test_scale_equivariance(c):
    cfg = PotentialMCConfig(K=200, t_max=3.0, seed=4)
    a = potential_pairing_mc(OU, [1.0, 0.0, 1.0], x * c, x, cfg).value
    b = potential_pairing_mc(OU, [1.0, 0.0, 1.0], x, x, cfg).value
    assert a == pytest.approx(c * b, rel=1e-12)


def test_dx_term_against_closed_form():
    k, e, s = 1.5, 0.5, 0.8
    th = [k, e, s]
    f1 = x * (0.5 * s**2)  # half b^2 times f f' with f(x) = x
    exact = invariant_moment(OU, th, f1) / k
    cf = dx_potential_term(OU, th, f1, x - e, method="closed_form")
    assert cf.value == pytest.approx(exact, rel=1e-12)
    mc = dx_potential_term(OU, th, f1, x - e, PotentialMCConfig(K=4000, t_max=8.0, seed=6))
    assert abs(mc.value - exact) < 4 * mc.stderr
    assert mc.diagnostics["boundary"]["ok"]
    assert dx_potential_term(OU, th, zero, x - e).value == 0.0


def test_ibp_weight_gaussian_score():
    k, e, s = 1.5, 0.5, 0.8
    h = ibp_weight(OU, [k, e, s], SmoothFunction.constant(1.0))
    pts = np.array([-1.0, 0.3, 2.0])
    assert np.allclose(h(pts), -(pts - e) / (s**2 / (2 * k)))


def test_boundary_check_flags_heavy_weight():
    bc = boundary_check(OU, [1.0, 0.0, 1.0], SmoothFunction.from_callable(lambda u: np.exp(u**2)))
    assert not bc["ok"]


def test_avar_simple_examples():
    m = OrnsteinUhlenbeck(free=("eta",), fixed={"kappa": 2.0, "xi": 1.5})
    r = avar_simple(m, [1.0], PredictorSpec(x, 0))
    assert r.avar == pytest.approx((1.5 / 2.0) ** 2, rel=1e-10)
    assert r.bound == pytest.approx(r.avar, rel=1e-10)
    r2 = avar_simple(m, [1.0], PredictorSpec(x * 2.0, 0))
    assert r2.avar == pytest.approx(r.avar, rel=1e-10)
    mc = avar_simple(m, [1.0], PredictorSpec(x, 0), PotentialMCConfig(K=4000, t_max=6.0, seed=7), "mc")
    assert abs(mc.avar - 0.5625) < 4 * mc.stderr
    assert mc.diagnostics["bound_ok"]


def test_avar_simple_unidentified():
    m = OrnsteinUhlenbeck(free=("xi",), fixed={"kappa": 1.0, "eta": 0.0})
    with pytest.raises(IdentifiabilityError):
        avar_simple(m, [1.0], PredictorSpec(x, 0))


def test_onelag_functions_ou():
    k, e, s = 2.0, 1.0, 1.0
    f1, f2, g, info = onelag_functions(OU, [k, e, s], x)
    pts = np.linspace(-1, 3, 5)
    assert np.allclose(f1(pts), k * (pts - e))
    assert np.allclose(f2(pts), 0.0)
    assert info["f2_mean_removed"] == pytest.approx(0.0, abs=1e-14)


def test_avar_onelag_ou_sandwich():
    m = OrnsteinUhlenbeck(free=("eta", "kappa"), fixed={"xi": 1.3})
    k, e = 2.0, 1.0
    r = avar_onelag(m, [e, k], PredictorSpec(x, 1))
    assert np.allclose(r.avar, np.diag([1.3**2 / k**2, 2 * k]), atol=1e-8)
    V = np.asarray(r.diagnostics["V0"])
    sig2 = 1.3**2 / (2 * k)
    assert np.allclose(V, 1.3**2 * np.array([[1, e], [e, e**2 + sig2]]), atol=1e-9)
    assert V[0, 0] == pytest.approx(1.3**2)


def test_avar_onelag_mc_matches_closed_form():
    m = CoxIngersollRoss(free=("kappa", "eta"), fixed={"xi": 0.5})
    th = [1.0, 1.0]
    exact = avar_onelag(m, th, PredictorSpec(x, 1))
    mc = avar_onelag(m, th, PredictorSpec(x, 1), PotentialMCConfig(K=3000, t_max=6.0, seed=8), "mc")
    se = np.asarray(mc.stderr)
    assert np.all(np.abs(np.asarray(mc.avar) - np.asarray(exact.avar)) < 4 * se + 0.02)
    d = mc.diagnostics
    assert abs(d["cross_pairing_asymmetry"]) <= 3 * d["cross_pairing_asymmetry_stderr"] + 1e-12


def test_avar_report_serialization():
    m = OrnsteinUhlenbeck(free=("eta", "kappa"), fixed={"xi": 1.0})
    r = avar_onelag(m, [1.0, 2.0], PredictorSpec(x, 1))
    d = json.loads(r.to_json())
    assert np.allclose(d["avar"], r.avar)
    rows = r.to_csv().strip().splitlines()
    assert rows[0] == "component,value,stderr,method"
    assert len(rows) == 1 + len(r.components)


def test_avar_report_rejects_indefinite():
    with pytest.raises(Exception):
        AvarReport(np.array([[1.0, 2.0], [2.0, 1.0]]), {})


def test_clt_variance_forms():
    th = [1.5, 0.5, 1.2]
    est = clt_variance(OU, th, x - 0.5, PotentialMCConfig(K=4000, t_max=8.0, seed=9))
    d = est.diagnostics
    target = 1.2**2 / 1.5**2
    assert d["form_pairing_exact"] == pytest.approx(target, rel=1e-12)
    assert d["form_dx_exact"] == pytest.approx(target, rel=1e-12)
    assert d["discrepancy"] < 1e-12
    assert abs(est.value - d["form_dx_mc"]) < 3 * math.hypot(est.stderr, d["form_dx_mc_stderr"])
    assert est.value > 0
    assert clt_variance(OU, th, zero, SMALL).value == 0.0


def test_transition_decay():
    th = [1.0, 0.0, 1.0]
    times = [0.0, 0.5, 1.0, 2.0]
    sq, se = transition_norms_mc(OU, th, x, times, n=20_000, seed=3)
    assert np.all(np.diff(sq) < 0)
    for t, v, e in zip(times, sq, se):
        assert v <= math.exp(-2 * t) * 0.5 + 3 * e
