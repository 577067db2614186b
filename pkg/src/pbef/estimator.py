"""Prediction-based estimating functions for discretely observed diffusions.

The predictor of f(X_i) is the L2(mu_theta) projection of f(X_i) onto
span{1, f(X_{i-1}), ..., f(X_{i-q})}. Its coefficients solve the normal
equations, which only involve the stationary autocovariances of f(X).

For q = 0 the estimating function is sum_i [f(X_i) - mu_theta(f)]; for
q = 1 it is sum_i (1, f(X_{i-1}))^T [f(X_i) - a_0 - a_1 f(X_{i-1})]. Both
are linear in the data through a few sufficient sums, which the solvers
precompute once per path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import (ConfigurationError, DegeneratePredictorError, DomainError, IdentifiabilityError,
                     ModelError, NonConvergenceError, SingularJacobianError)
from .functions import SmoothFunction
from .model import (DiffusionModel, ParamVector, generator_function, invariant_moment,
                    invariant_variance, kf_coefficient, lagged_moment)
from .simulate import SamplePath, SamplingScheme, simulate_paths

COEFF_METHODS = ("auto", "exact_moments", "expansion_order1")


@dataclass(frozen=True)
class PredictorSpec:
    """Predictor function f and lag order q of the predictor space."""

    f: SmoothFunction
    q: int = 1
    label: str = ""

    def __post_init__(self):
        if self.q < 0:
            raise ConfigurationError("lag order q must be non-negative")
        if not self.label:
            object.__setattr__(self, "label", self.f.label)

    @property
    def scaffold_only(self) -> bool:
        return self.q >= 2


@dataclass(frozen=True)
class MomentMC:
    """Monte Carlo settings for lagged moments of models without closed forms."""

    n_pairs: int = 200_000
    seed: int = 12345
    substeps: int = 20


@dataclass
class ProjectionCoefficients:
    """Coefficients (a_0, a_1, ..., a_q) of the best linear predictor."""

    a: np.ndarray
    method: str
    delta: float
    mean: float = float("nan")
    autocov: np.ndarray | None = None


@dataclass
class EstimatingFunctionValue:
    value: np.ndarray
    jacobian: np.ndarray
    n_terms: int
    normalization: str = "raw"
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EstimateResult:
    theta_hat: ParamVector
    converged: bool
    n_iterations: int
    fallback_used: bool = False
    residual_norm: float = float("nan")
    condition_number: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat.values],
            "names": list(self.theta_hat.names),
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
            "fallback_used": bool(self.fallback_used),
            "residual": float(self.residual_norm),
            "condition_number": float(self.condition_number),
        }


# -- projection coefficients ---------------------------------------------

def _lag_moments_mc(model, theta, f, delta, q, mc: MomentMC):
    scheme = SamplingScheme(q, delta, mc.substeps, mc.seed)
    paths = simulate_paths(model, theta, scheme, stream_ids=range(mc.n_pairs))
    fx = f(paths)
    return np.array([np.mean(fx[:, 0] * fx[:, k]) for k in range(1, q + 1)])


def _autocovariances(model, theta, f, delta, q, mc: MomentMC | None):
    """Mean and c(k) = Cov(f(X_0), f(X_{k delta})), k = 0..q, plus the method used."""
    m = invariant_moment(model, theta, f)
    c = np.empty(q + 1)
    c[0] = invariant_moment(model, theta, f * f) - m * m
    if q == 0:
        return m, c, "exact_moments"
    lags = [lagged_moment(model, theta, f, f, k * delta) for k in range(1, q + 1)]
    if all(v is not None for v in lags):
        c[1:] = np.array(lags) - m * m
        return m, c, "exact_moments"
    if mc is None:
        mc = MomentMC()
    c[1:] = _lag_moments_mc(model, theta, f, delta, q, mc) - m * m
    return m, c, "exact_moments_mc"


def has_closed_form_lag_moment(model: DiffusionModel, spec: PredictorSpec) -> bool:
    return model.is_polynomial and spec.f.poly is not None


def projection_coefficients(model: DiffusionModel, theta, spec: PredictorSpec, delta: float,
                            method: str = "auto", mc: MomentMC | None = None) -> ProjectionCoefficients:
    """Solve the normal equations for the predictor coefficients.

    ``auto`` picks exact moments when the lag-delta moment is available in
    closed form and the first-order expansion otherwise.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if method not in COEFF_METHODS:
        raise ValueError(f"unknown coefficient method {method!r}")
    if method == "auto":
        method = "exact_moments" if (spec.q == 0 or has_closed_form_lag_moment(model, spec)) \
            else "expansion_order1"
    f, q = spec.f, spec.q
    if method == "expansion_order1":
        if q != 1:
            raise ConfigurationError("the first-order expansion is defined for q = 1 only")
        K = kf_coefficient(model, theta, f)
        m = invariant_moment(model, theta, f)
        return ProjectionCoefficients(np.array([-delta * K * m, 1 + delta * K]), method, delta, m)
    m, c, used = _autocovariances(model, theta, f, delta, q, mc)
    if q == 0:
        return ProjectionCoefficients(np.array([m]), used, delta, m, c)
    if not c[0] > 1e-12 * max(1.0, m * m):
        raise DegeneratePredictorError(f"predictor {spec.label!r} has zero variance under mu_theta")
    # Z = (1, f(X_{i-1}), ..., f(X_{i-q})): regress the centred target on centred lags
    b = linalg.solve_toeplitz(c[:q], c[1:q + 1])
    a = np.concatenate([[m * (1 - b.sum())], b])
    return ProjectionCoefficients(a, used, delta, m, c)


def moment_condition_residual(model: DiffusionModel, theta, spec: PredictorSpec,
                              coeffs: ProjectionCoefficients) -> np.ndarray:
    """E[Z f(X_q)] - E[Z Z^T] a, built directly from raw lagged moments."""
    f, q, delta = spec.f, spec.q, coeffs.delta
    m = invariant_moment(model, theta, f)
    mom = np.empty(q + 1)  # E[f(X_0) f(X_{k delta})]
    mom[0] = invariant_moment(model, theta, f * f)
    for k in range(1, q + 1):
        v = lagged_moment(model, theta, f, f, k * delta)
        if v is None:
            raise ValueError("moment residual check needs closed-form lagged moments")
        mom[k] = v
    # Z_{q-1} = (1, f(X_{q-1}), ..., f(X_0)); target f(X_q)
    ezf = np.concatenate([[m], [mom[k] for k in range(1, q + 1)]])
    ezz = np.empty((q + 1, q + 1))
    ezz[0, 0] = 1.0
    ezz[0, 1:] = ezz[1:, 0] = m
    for i in range(1, q + 1):
        for j in range(1, q + 1):
            ezz[i, j] = mom[abs(i - j)]
    return ezf - ezz @ coeffs.a


def _steps(theta, bounds, rel=1e-5):
    theta = np.asarray(theta, dtype=float)
    h = rel * (1 + np.abs(theta))
    for k, (lo, hi) in enumerate(bounds):
        room = min(theta[k] - lo, hi - theta[k])
        if room <= h[k]:
            h[k] = 0.5 * room
    return h


def theta_jacobian(fun: Callable, theta, bounds, rel: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a vector function of theta, steps rel * (1 + |theta|)."""
    theta = np.asarray(theta, dtype=float)
    h = _steps(theta, bounds, rel)
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h[k]
        cols.append((np.atleast_1d(fun(theta + e)) - np.atleast_1d(fun(theta - e))) / (2 * h[k]))
    return np.column_stack(cols)


def coefficient_jacobian(model, theta, spec, delta, method="auto", mc=None) -> np.ndarray:
    """d a / d theta^T by central differences of :func:`projection_coefficients`."""
    return theta_jacobian(lambda t: projection_coefficients(model, t, spec, delta, method, mc).a,
                          theta, model.bounds)


# -- simple predictor (q = 0) --------------------------------------------

def gfun_simple(model: DiffusionModel, theta, path: SamplePath, spec: PredictorSpec) -> EstimatingFunctionValue:
    """G_n(theta) = sum_{i=1}^n [f(X_i) - mu_theta(f)] with its derivative in theta."""
    if model.dim_theta != 1:
        raise ConfigurationError("the simple estimating function identifies one parameter")
    n = path.n
    value = float(np.sum(spec.f(path.values[1:]))) - n * invariant_moment(model, theta, spec.f)
    dmu = theta_jacobian(lambda t: invariant_moment(model, t, spec.f), theta, model.bounds)
    return EstimatingFunctionValue(np.array([value]), -n * dmu, n, "raw")


def _bracket_search(fun, lo_b, hi_b, start, spread, max_expand=60):
    """Probe outward from ``start`` for a sign change of fun inside (lo_b, hi_b)."""
    def inward(x, bound):
        return 0.5 * (x + bound) if np.isfinite(bound) else None

    left, right = start - spread, start + spread
    left = max(left, inward(start, lo_b)) if np.isfinite(lo_b) else left
    right = min(right, inward(start, hi_b)) if np.isfinite(hi_b) else right
    fl, fr = fun(left), fun(right)
    for _ in range(max_expand):
        if fl * fr <= 0:
            return left, right
        # expand towards the side where the root must lie for a monotone fun
        if abs(fl) < abs(fr):
            left = inward(left, lo_b) if np.isfinite(lo_b) else left - 2 * (right - left)
            if not left > lo_b:
                return None
            fl = fun(left)
        else:
            right = inward(right, hi_b) if np.isfinite(hi_b) else right + 2 * (right - left)
            if not right < hi_b:
                return None
            fr = fun(right)
    return None


def solve_simple(model: DiffusionModel, path: SamplePath, spec: PredictorSpec, theta_init=None,
                 theta_star=None, n_probe: int = 21) -> EstimateResult:
    """theta_hat = kappa^{-1}(mean of f(X_1..X_n)) with kappa(theta) = mu_theta(f).

    Returns ``theta_star`` (flagging ``fallback_used``) when the sample mean
    lies outside kappa(Theta).
    """
    if model.dim_theta != 1:
        raise ConfigurationError("the simple estimator identifies one parameter")
    lo_b, hi_b = model.bounds[0]
    if theta_init is None:
        theta_init = [0.5 * (lo_b + hi_b)] if np.isfinite(lo_b + hi_b) else [
            lo_b + 1.0 if np.isfinite(lo_b) else (hi_b - 1.0 if np.isfinite(hi_b) else 0.0)]
    t0 = float(np.atleast_1d(np.asarray(theta_init, dtype=float))[0])
    theta_star = model.theta(np.atleast_1d(theta_star if theta_star is not None else t0))
    kappa = lambda t: invariant_moment(model, [t], spec.f)  # noqa: E731
    spread = 0.5 * (1 + abs(t0))
    lo_p = max(t0 - spread, 0.5 * (t0 + lo_b)) if np.isfinite(lo_b) else t0 - spread
    hi_p = min(t0 + spread, 0.5 * (t0 + hi_b)) if np.isfinite(hi_b) else t0 + spread
    grid = np.linspace(lo_p, hi_p, n_probe)
    kv = np.array([kappa(t) for t in grid])
    d = np.diff(kv)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise IdentifiabilityError("theta -> mu_theta(f) is not strictly monotone on the probe grid")
    target = float(np.mean(spec.f(path.values[1:])))
    diag = {"sample_mean": target, "probe": (float(lo_p), float(hi_p))}
    bracket = _bracket_search(lambda t: kappa(t) - target, lo_b, hi_b, t0, spread)
    if bracket is None:
        return EstimateResult(theta_star, False, 0, True, float("nan"), float("nan"), diag)
    root, info = optimize.brentq(lambda t: kappa(t) - target, *bracket, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                                 full_output=True)
    residual = abs(kappa(root) - target)
    dmu = theta_jacobian(lambda t: invariant_moment(model, t, spec.f), [root], model.bounds)[0, 0]
    return EstimateResult(model.theta([root]), bool(info.converged), int(info.iterations), False,
                          residual, 1.0, {**diag, "dmu_dtheta": float(dmu)})


# -- 1-lag predictor (q = 1) ---------------------------------------------

@dataclass(frozen=True)
class LagSums:
    """Sufficient sums of a path: S = sum Z_{i-1} f(X_i), M = sum Z_{i-1} Z_{i-1}^T."""

    S: np.ndarray
    M: np.ndarray
    n_terms: int
    n: int
    delta: float

    @classmethod
    def from_path(cls, path: SamplePath, f: SmoothFunction, q: int = 1) -> LagSums:
        fx = f(path.values)
        start = max(q, 1)
        n = path.n
        if n < start + 1 and q >= 1:
            raise ConfigurationError(f"need at least {start + 1} observations for q = {q}")
        target = fx[start:]
        cols = [np.ones(n + 1 - start)] + [fx[start - k:n + 1 - k] for k in range(1, q + 1)]
        Z = np.column_stack(cols)
        return cls(Z.T @ target, Z.T @ Z, int(target.size), n, path.delta)

    def value(self, a: np.ndarray) -> np.ndarray:
        return self.S - self.M @ a

    @property
    def norm_factor(self) -> float:
        return self.n * self.delta


def gfun_onelag(model: DiffusionModel, theta, path: SamplePath, spec: PredictorSpec,
                coeff_method: str = "auto", normalization: str = "raw",
                mc: MomentMC | None = None) -> EstimatingFunctionValue:
    """G_n(theta) = sum_{i=1}^n Z_{i-1} [f(X_i) - a_0 - a_1 f(X_{i-1})] and its Jacobian."""
    if spec.q != 1:
        raise ConfigurationError("gfun_onelag needs a predictor with q = 1")
    if model.dim_theta != 2:
        raise ConfigurationError("the 1-lag estimating function identifies two parameters")
    if path.n < 2:
        raise ConfigurationError("need n >= 2")
    sums = LagSums.from_path(path, spec.f, 1)
    coeffs = projection_coefficients(model, theta, spec, path.delta, coeff_method, mc)
    dA = coefficient_jacobian(model, theta, spec, path.delta, coeff_method, mc)
    value, jac = sums.value(coeffs.a), -sums.M @ dA
    if normalization == "per_nDelta":
        value, jac = value / sums.norm_factor, jac / sums.norm_factor
    elif normalization != "raw":
        raise ValueError(f"unknown normalization {normalization!r}")
    return EstimatingFunctionValue(value, jac, sums.n_terms, normalization, {"coeff_method": coeffs.method})


@dataclass
class SolverOptions:
    coeff_method: str = "auto"
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_iter: int = 50
    cond_max: float = 1e12
    margin: float = 1e-8
    multistart: Sequence[Sequence[float]] | None = None
    transform: np.ndarray | None = None
    mc: MomentMC | None = None


def _project(theta, bounds, margin):
    out = np.array(theta, dtype=float)
    for k, (lo, hi) in enumerate(bounds):
        if np.isfinite(lo):
            out[k] = max(out[k], lo + margin * max(1.0, abs(lo)))
        if np.isfinite(hi):
            out[k] = min(out[k], hi - margin * max(1.0, abs(hi)))
    return out


def damped_newton(fun: Callable, jac: Callable, theta_init, bounds, tol: float, step_tol: float = 1e-12,
                  max_iter: int = 50, cond_max: float = 1e12, margin: float = 1e-8):
    """Newton iteration with step halving inside the open box ``bounds``.

    Returns ``(theta, n_iter, residual_norm, condition_number)``. Evaluation
    failures at a trial point count as an increase of the residual.
    """
    x = _project(theta_init, bounds, margin)
    r = np.atleast_1d(fun(x))
    norm = float(np.linalg.norm(r))
    cond = float("nan")
    for it in range(max_iter + 1):
        if norm < tol:
            return x, it, norm, cond
        if it == max_iter:
            break
        J = np.atleast_2d(jac(x))
        cond = float(np.linalg.cond(J))
        if not cond < cond_max:
            raise SingularJacobianError(f"Jacobian condition number {cond:.3g} exceeds {cond_max:g}")
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            trial = _project(x + lam * step, bounds, margin)
            try:
                r_trial = np.atleast_1d(fun(trial))
                n_trial = float(np.linalg.norm(r_trial))
            except (DomainError, ModelError, DegeneratePredictorError):
                n_trial = float("inf")
            if n_trial < (1 - 1e-4 * lam) * norm or lam < 1e-10:
                break
            lam *= 0.5
        if not np.isfinite(n_trial):
            break
        moved = float(np.linalg.norm(trial - x))
        x, r, norm = trial, r_trial, n_trial
        if moved < step_tol * (1 + float(np.linalg.norm(x))):
            return x, it + 1, norm, cond
    raise NonConvergenceError("damped Newton did not converge",
                              {"theta": x.tolist(), "residual": norm, "iterations": max_iter,
                               "condition_number": cond})


def solve_onelag(model: DiffusionModel, path: SamplePath, spec: PredictorSpec, theta_init,
                 options: SolverOptions | None = None) -> EstimateResult:
    """Root of the normalised 1-lag estimating function (nDelta)^{-1} G_n by damped Newton."""
    opts = options or SolverOptions()
    if spec.q != 1 or model.dim_theta != 2:
        raise ConfigurationError("solve_onelag needs q = 1 and a two-dimensional parameter")
    var = float(np.var(spec.f(path.values)))
    if not var > 0:
        raise DegeneratePredictorError(f"predictor {spec.label!r} is constant on the data")
    sums = LagSums.from_path(path, spec.f, 1)
    nd = sums.norm_factor
    T = np.eye(2) if opts.transform is None else np.asarray(opts.transform, dtype=float)

    def fun(t):
        a = projection_coefficients(model, t, spec, path.delta, opts.coeff_method, opts.mc).a
        return T @ sums.value(a) / nd

    def jac(t):
        dA = coefficient_jacobian(model, t, spec, path.delta, opts.coeff_method, opts.mc)
        return -T @ sums.M @ dA / nd

    scale = 1.0 + float(np.abs(T @ sums.M).max()) / nd
    starts = [theta_init] if opts.multistart is None else [theta_init, *opts.multistart]
    best, failures = None, []
    for start in starts:
        try:
            x, it, res, cond = damped_newton(fun, jac, start, model.bounds, opts.tol * scale, opts.step_tol,
                                             opts.max_iter, opts.cond_max, opts.margin)
        except (NonConvergenceError, SingularJacobianError) as exc:
            if len(starts) == 1:
                raise
            failures.append(str(exc))
            continue
        if best is None or res < best[2]:
            best = (x, it, res, cond)
    if best is None:
        raise NonConvergenceError("no start converged", {"failures": failures})
    x, it, res, cond = best
    return EstimateResult(model.theta(x), True, it, False, res, cond,
                          {"scale": scale, "n_starts": len(starts), "failed_starts": len(failures)})


# -- limit objects -------------------------------------------------------

def gamma_limit(model: DiffusionModel, theta0, theta, spec: PredictorSpec) -> np.ndarray:
    """Probability limit of (nDelta)^{-1} G_n(theta) under theta0 (q = 1)."""
    if spec.q != 1:
        raise ConfigurationError("gamma_limit is defined for q = 1")
    f = spec.f
    K = kf_coefficient(model, theta, f)
    mu_t = invariant_moment(model, theta, f)
    mu_0 = invariant_moment(model, theta0, f)
    mu0_f2 = invariant_moment(model, theta0, f * f)
    mu0_fLf = invariant_moment(model, theta0, f * generator_function(model, theta0, f))
    return np.array([K * (mu_t - mu_0), mu0_fLf - K * (mu0_f2 - mu_0 * mu_t)])


def z_matrix(model: DiffusionModel, theta0, f: SmoothFunction) -> np.ndarray:
    m1 = invariant_moment(model, theta0, f)
    return np.array([[1.0, m1], [m1, invariant_moment(model, theta0, f * f)]])


def a_matrix(model: DiffusionModel, theta, f: SmoothFunction) -> np.ndarray:
    """d/dtheta^T of (K_f mu_theta(f), -K_f) by central differences."""
    def vec(t):
        K = kf_coefficient(model, t, f)
        return np.array([K * invariant_moment(model, t, f), -K])

    return theta_jacobian(vec, theta, model.bounds)


def w_limit(model: DiffusionModel, theta0, theta, spec: PredictorSpec) -> np.ndarray:
    """Limit W(theta) = Z(f) A(theta) of the normalised Jacobian (q = 1)."""
    if spec.q != 1:
        raise ConfigurationError("w_limit is defined for q = 1")
    return z_matrix(model, theta0, spec.f) @ a_matrix(model, theta, spec.f)


# -- multiple predictors (assembly only) ---------------------------------

def assemble_multi(model: DiffusionModel, theta, path: SamplePath, specs: Sequence[PredictorSpec],
                   A, coeff_method: str = "auto", mc: MomentMC | None = None) -> EstimatingFunctionValue:
    """G_n(theta) = A sum_i Z_{i-1} [F(X_i) - Pi_{i-1}(theta)] with block-diagonal Z_{i-1}.

    No asymptotic theory backs this beyond N = 1 and q <= 1; the result is
    flagged ``scaffold_only`` in the diagnostics in that case.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    dbar = sum(s.q + 1 for s in specs)
    if A.shape != (model.dim_theta, dbar):
        raise ConfigurationError(f"A must have shape ({model.dim_theta}, {dbar}), got {A.shape}")
    qmax = max(s.q for s in specs)
    start = max(qmax, 1)
    blocks, jblocks = [], []
    for s in specs:
        fx = s.f(path.values)
        n = path.n
        target = fx[start:]
        Z = np.column_stack([np.ones(n + 1 - start)] + [fx[start - k:n + 1 - k] for k in range(1, s.q + 1)])
        a = projection_coefficients(model, theta, s, path.delta, coeff_method, mc).a
        dA = coefficient_jacobian(model, theta, s, path.delta, coeff_method, mc)
        M = Z.T @ Z
        blocks.append(Z.T @ target - M @ a)
        jblocks.append(-M @ dA)
    value = A @ np.concatenate(blocks)
    jac = A @ np.vstack(jblocks)
    scaffold = len(specs) > 1 or qmax >= 2
    return EstimatingFunctionValue(value, jac, path.n + 1 - start, "raw",
                                   {"scaffold_only": scaffold, "d_bar": dbar})


def standard_predictor(name: str) -> SmoothFunction:
    """Named predictor functions accepted in configuration files."""
    names = {"x": SmoothFunction.identity(), "x2": SmoothFunction.monomial(2),
             "x3": SmoothFunction.monomial(3)}
    try:
        return names[name]
    except KeyError:
        raise ConfigurationError(f"unknown predictor {name!r}; use one of {sorted(names)} "
                                 "or polynomial coefficients") from None


def predictor_from_config(cfg) -> PredictorSpec:
    """``{"name": "x"}`` or ``{"poly": [c0, c1, ...]}``, plus ``q``."""
    if "poly" in cfg:
        f = SmoothFunction.polynomial([float(c) for c in cfg["poly"]])
    else:
        f = standard_predictor(str(cfg.get("name", "x")))
    return PredictorSpec(f, int(cfg.get("q", 1)), str(cfg.get("label", "")))


def predictor_to_config(spec: PredictorSpec) -> dict:
    if spec.f.poly is None:
        raise ConfigurationError("only polynomial predictors serialise")
    return {"poly": [float(c) for c in spec.f.poly.coef], "q": spec.q, "label": spec.label}


__all__ = [
    "PredictorSpec", "MomentMC", "ProjectionCoefficients", "EstimatingFunctionValue", "EstimateResult",
    "projection_coefficients", "moment_condition_residual", "coefficient_jacobian", "theta_jacobian",
    "gfun_simple", "solve_simple", "LagSums", "gfun_onelag", "SolverOptions", "damped_newton",
    "solve_onelag", "gamma_limit", "w_limit", "z_matrix", "a_matrix", "assemble_multi",
    "predictor_from_config", "predictor_to_config", "standard_predictor", "invariant_variance",
]

