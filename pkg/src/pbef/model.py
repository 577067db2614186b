"""Parametric scalar diffusions dX = a(X; theta) dt + b(X; theta) dB.

Built-in families are the Ornstein-Uhlenbeck and Cox-Ingersoll-Ross
processes; :class:`UserModel` wraps arbitrary drift/diffusion callables. A
model is parametrised by a full set of named parameters, of which a subset is
*free* (the statistical parameter theta) and the rest are held fixed.

Both built-ins are polynomial diffusions (linear drift, squared diffusion of
degree <= 2). For those the generator maps polynomials of degree k to
polynomials of degree k, which gives exact invariant moments, exact
conditional moments through a matrix exponential and exact potentials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, linalg, optimize, special

from .errors import DegeneratePredictorError, DomainError, ModelError, NumericalError
from .functions import SmoothFunction

# log(1e16): tail truncation where the density falls below 1e-16 of its mode
_LOG_TAIL = math.log(1e16)


@dataclass(frozen=True)
class ParamVector:
    """A point of the open parameter box Theta."""

    values: np.ndarray
    bounds: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if values.size < 1:
            raise DomainError("parameter vector must have at least one coordinate")
        if len(self.bounds) != values.size:
            raise DomainError("one bound interval is required per coordinate")
        for k, (v, (lo, hi)) in enumerate(zip(values, self.bounds)):
            if not (lo < v < hi):
                name = self.names[k] if self.names else k
                raise DomainError(f"parameter {name}={v!r} outside open interval ({lo}, {hi})")

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values.astype(dtype) if dtype else self.values

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


@dataclass(frozen=True)
class ClosedForm:
    """Analytic facts about the invariant law and the dynamics at one theta."""

    mean: float
    variance: float
    spectral_gap: float
    autocorrelation: Callable[[float], float]

    def autocovariance(self, t):
        """Cov(X_0, X_t) under stationarity."""
        return self.variance * self.autocorrelation(t)


class DiffusionModel:
    """Base class: subclasses implement the ``_a*``, ``_b*`` and ``_log*`` hooks.

    Hooks receive ``x`` and the full parameter mapping ``p``.
    """

    family = "generic"
    param_names: tuple[str, ...] = ()
    default_bounds: Mapping[str, tuple[float, float]] = {}
    state_space: tuple[float, float] = (-np.inf, np.inf)
    # recorded, not verified: rho-mixing and linear growth of a and b
    assumptions: tuple[str, ...] = ("rho-mixing", "linear growth of drift and diffusion")

    def __init__(self, free: Sequence[str] | None = None, fixed: Mapping[str, float] | None = None,
                 bounds: Mapping[str, tuple[float, float]] | None = None):
        free = tuple(free) if free is not None else tuple(self.param_names)
        fixed = dict(fixed or {})
        unknown = (set(free) | set(fixed)) - set(self.param_names)
        if unknown:
            raise ModelError(f"unknown parameters {sorted(unknown)} for {self.family}")
        missing = set(self.param_names) - set(free) - set(fixed)
        if missing:
            raise ModelError(f"parameters {sorted(missing)} are neither free nor fixed")
        if set(free) & set(fixed):
            raise ModelError("a parameter cannot be both free and fixed")
        if not free:
            raise ModelError("at least one free parameter is required")
        self.free = free
        self.fixed = {k: float(v) for k, v in fixed.items() if k not in free}
        merged = dict(self.default_bounds)
        merged.update(bounds or {})
        self.bounds = tuple(tuple(map(float, merged.get(k, (-np.inf, np.inf)))) for k in free)

    # -- parameters ---------------------------------------------------
    @property
    def dim_theta(self) -> int:
        return len(self.free)

    def theta(self, values) -> ParamVector:
        return ParamVector(np.asarray(values, dtype=float), self.bounds, self.free)

    def params(self, theta) -> dict[str, float]:
        """Full parameter mapping for the free values ``theta`` (validated)."""
        values = np.atleast_1d(np.asarray(theta, dtype=float))
        if values.size != self.dim_theta:
            raise DomainError(f"expected {self.dim_theta} free parameters, got {values.size}")
        ParamVector(values, self.bounds, self.free)
        p = dict(self.fixed)
        p.update(zip(self.free, map(float, values)))
        self._validate(p)
        return p

    def _validate(self, p):
        pass

    def in_state_space(self, x) -> np.ndarray:
        lo, hi = self.state_space
        x = np.asarray(x, dtype=float)
        return (x > lo) & (x < hi)

    def check_state(self, x):
        if not np.all(self.in_state_space(x)):
            raise DomainError(f"point(s) outside state space {self.state_space}")

    # -- coefficients -------------------------------------------------
    def drift(self, x, theta):
        return self._a(np.asarray(x, dtype=float), self.params(theta))

    def drift_dx(self, x, theta):
        return self._a1(np.asarray(x, dtype=float), self.params(theta))

    def drift_dxx(self, x, theta):
        return self._a2(np.asarray(x, dtype=float), self.params(theta))

    def diffusion(self, x, theta):
        return self._b(np.asarray(x, dtype=float), self.params(theta))

    def diffusion_dx(self, x, theta):
        return self._b1(np.asarray(x, dtype=float), self.params(theta))

    def diffusion_dxx(self, x, theta):
        return self._b2(np.asarray(x, dtype=float), self.params(theta))

    def invariant_logdensity(self, x, theta):
        return self._logdensity(np.asarray(x, dtype=float), self.params(theta))

    def invariant_logdensity_dx(self, x, theta):
        return self._logdensity_dx(np.asarray(x, dtype=float), self.params(theta))

    # -- optional analytic structure ----------------------------------
    def closed_form(self, theta) -> ClosedForm | None:
        return None

    def drift_poly(self, theta) -> Polynomial | None:
        """Drift as a polynomial of degree <= 1, if the model is polynomial."""
        return None

    def diffusion_sq_poly(self, theta) -> Polynomial | None:
        """Squared diffusion as a polynomial of degree <= 2, if polynomial."""
        return None

    @property
    def is_polynomial(self) -> bool:
        return False

    def raw_moments(self, theta, kmax: int) -> np.ndarray | None:
        """Invariant moments E[X^k], k = 0..kmax, when known in closed form."""
        return None

    def sample_invariant(self, theta, rng, size=None):
        """Draws from the invariant law, or ``None`` without a closed-form sampler."""
        return None

    def sample_transition(self, x, t, theta, rng):
        """Exact draw of X_t given X_0 = x, or ``None`` if unavailable."""
        return None

    def __repr__(self):
        fixed = ", ".join(f"{k}={v:g}" for k, v in self.fixed.items())
        return f"{type(self).__name__}(free={self.free}, fixed={{{fixed}}})"


class OrnsteinUhlenbeck(DiffusionModel):
    """dX = kappa (eta - X) dt + xi dB with invariant law N(eta, xi^2 / (2 kappa))."""

    family = "ou"
    param_names = ("kappa", "eta", "xi")
    default_bounds = {"kappa": (0.0, np.inf), "eta": (-np.inf, np.inf), "xi": (0.0, np.inf)}

    def _validate(self, p):
        if p["kappa"] <= 0 or p["xi"] <= 0:
            raise ModelError("OU requires kappa > 0 and xi > 0")

    def _a(self, x, p):
        return p["kappa"] * (p["eta"] - x)

    def _a1(self, x, p):
        return np.full_like(x, -p["kappa"], dtype=float)

    def _a2(self, x, p):
        return np.zeros_like(x, dtype=float)

    def _b(self, x, p):
        return np.full_like(x, p["xi"], dtype=float)

    def _b1(self, x, p):
        return np.zeros_like(x, dtype=float)

    _b2 = _b1

    @staticmethod
    def _var(p):
        return p["xi"] ** 2 / (2 * p["kappa"])

    def _logdensity(self, x, p):
        v = self._var(p)
        return -0.5 * np.log(2 * np.pi * v) - (x - p["eta"]) ** 2 / (2 * v)

    def _logdensity_dx(self, x, p):
        return -(x - p["eta"]) / self._var(p)

    def closed_form(self, theta):
        p = self.params(theta)
        k = p["kappa"]
        return ClosedForm(p["eta"], self._var(p), k, lambda t: np.exp(-k * np.asarray(t, dtype=float)))

    def drift_poly(self, theta):
        p = self.params(theta)
        return Polynomial([p["kappa"] * p["eta"], -p["kappa"]])

    def diffusion_sq_poly(self, theta):
        return Polynomial([self.params(theta)["xi"] ** 2])

    @property
    def is_polynomial(self):
        return True

    def raw_moments(self, theta, kmax):
        p = self.params(theta)
        m, v = p["eta"], self._var(p)
        # E[(m + s Z)^k] = sum_j C(k, j) m^(k-j) s^j E[Z^j]
        z = np.array([0.0 if j % 2 else float(special.factorial2(j - 1, exact=True)) if j else 1.0
                      for j in range(kmax + 1)])
        s = math.sqrt(v)
        return np.array([sum(math.comb(k, j) * m ** (k - j) * s**j * z[j] for j in range(k + 1))
                         for k in range(kmax + 1)])

    def sample_invariant(self, theta, rng, size=None):
        p = self.params(theta)
        return rng.normal(p["eta"], math.sqrt(self._var(p)), size)

    def transition_mean_var(self, x, t, theta):
        p = self.params(theta)
        e = math.exp(-p["kappa"] * t)
        return p["eta"] + (np.asarray(x, dtype=float) - p["eta"]) * e, self._var(p) * (1 - e * e)

    def sample_transition(self, x, t, theta, rng):
        m, v = self.transition_mean_var(x, t, theta)
        return m + math.sqrt(v) * rng.standard_normal(np.shape(m))


class CoxIngersollRoss(DiffusionModel):
    """dX = kappa (eta - X) dt + xi sqrt(X) dB on (0, inf).

    The invariant law is Gamma(shape 2 kappa eta / xi^2, rate 2 kappa / xi^2).
    Parameters must satisfy 2 kappa eta >= xi^2 so that 0 is not attained.
    """

    family = "cir"
    param_names = ("kappa", "eta", "xi")
    default_bounds = {"kappa": (0.0, np.inf), "eta": (0.0, np.inf), "xi": (0.0, np.inf)}
    state_space = (0.0, np.inf)

    def _validate(self, p):
        if min(p["kappa"], p["eta"], p["xi"]) <= 0:
            raise ModelError("CIR requires kappa, eta, xi > 0")
        if 2 * p["kappa"] * p["eta"] < p["xi"] ** 2:
            raise ModelError("CIR requires 2 kappa eta >= xi^2 (boundary non-attainability)")

    @staticmethod
    def _shape_rate(p):
        return 2 * p["kappa"] * p["eta"] / p["xi"] ** 2, 2 * p["kappa"] / p["xi"] ** 2

    def _a(self, x, p):
        return p["kappa"] * (p["eta"] - x)

    def _a1(self, x, p):
        return np.full_like(x, -p["kappa"], dtype=float)

    def _a2(self, x, p):
        return np.zeros_like(x, dtype=float)

    def _b(self, x, p):
        return p["xi"] * np.sqrt(x)

    def _b1(self, x, p):
        return 0.5 * p["xi"] / np.sqrt(x)

    def _b2(self, x, p):
        return -0.25 * p["xi"] * x ** -1.5

    def _logdensity(self, x, p):
        alpha, beta = self._shape_rate(p)
        return alpha * np.log(beta) - special.gammaln(alpha) + (alpha - 1) * np.log(x) - beta * x

    def _logdensity_dx(self, x, p):
        alpha, beta = self._shape_rate(p)
        return (alpha - 1) / x - beta

    def closed_form(self, theta):
        p = self.params(theta)
        k = p["kappa"]
        var = p["eta"] * p["xi"] ** 2 / (2 * k)
        return ClosedForm(p["eta"], var, k, lambda t: np.exp(-k * np.asarray(t, dtype=float)))

    def drift_poly(self, theta):
        p = self.params(theta)
        return Polynomial([p["kappa"] * p["eta"], -p["kappa"]])

    def diffusion_sq_poly(self, theta):
        return Polynomial([0.0, self.params(theta)["xi"] ** 2])

    @property
    def is_polynomial(self):
        return True

    def raw_moments(self, theta, kmax):
        alpha, beta = self._shape_rate(self.params(theta))
        # E[X^k] = alpha (alpha+1) ... (alpha+k-1) / beta^k
        return np.array([special.poch(alpha, k) / beta**k for k in range(kmax + 1)])

    def sample_invariant(self, theta, rng, size=None):
        alpha, beta = self._shape_rate(self.params(theta))
        return rng.gamma(alpha, 1.0 / beta, size)


class UserModel(DiffusionModel):
    """A model defined by callables ``fn(x, p)`` where ``p`` maps names to values.

    The invariant log-density must be supplied; it is not derived from the
    scale and speed measures.
    """

    family = "user"

    def __init__(self, *, param_names: Sequence[str], drift: Callable, drift_dx: Callable,
                 drift_dxx: Callable, diffusion: Callable, diffusion_dx: Callable,
                 diffusion_dxx: Callable, invariant_logdensity: Callable,
                 invariant_logdensity_dx: Callable, state_space=(-np.inf, np.inf),
                 free=None, fixed=None, bounds=None, validate: Callable | None = None,
                 spectral_gap: Callable | None = None):
        self.param_names = tuple(param_names)
        self.state_space = tuple(map(float, state_space))
        self._fns = dict(a=drift, a1=drift_dx, a2=drift_dxx, b=diffusion, b1=diffusion_dx,
                         b2=diffusion_dxx, ld=invariant_logdensity, ld1=invariant_logdensity_dx)
        self._user_validate = validate
        self._gap = spectral_gap
        super().__init__(free=free, fixed=fixed, bounds=bounds)

    def _validate(self, p):
        if self._user_validate is not None:
            self._user_validate(p)

    def _a(self, x, p):
        return self._fns["a"](x, p) + 0.0 * x

    def _a1(self, x, p):
        return self._fns["a1"](x, p) + 0.0 * x

    def _a2(self, x, p):
        return self._fns["a2"](x, p) + 0.0 * x

    def _b(self, x, p):
        return self._fns["b"](x, p) + 0.0 * x

    def _b1(self, x, p):
        return self._fns["b1"](x, p) + 0.0 * x

    def _b2(self, x, p):
        return self._fns["b2"](x, p) + 0.0 * x

    def _logdensity(self, x, p):
        return self._fns["ld"](x, p) + 0.0 * x

    def _logdensity_dx(self, x, p):
        return self._fns["ld1"](x, p) + 0.0 * x

    def spectral_gap(self, theta):
        return None if self._gap is None else float(self._gap(self.params(theta)))


FAMILIES = {"ou": OrnsteinUhlenbeck, "cir": CoxIngersollRoss}


def spectral_gap(model: DiffusionModel, theta) -> float | None:
    cf = model.closed_form(theta)
    if cf is not None:
        return cf.spectral_gap
    getter = getattr(model, "spectral_gap", None)
    return getter(theta) if callable(getter) else None


def model_from_config(cfg: Mapping) -> tuple[DiffusionModel, ParamVector]:
    """Build a built-in model and its true parameter from a mapping.

    Expected keys: ``family`` (``"ou"`` or ``"cir"``), ``params`` (all
    parameter values), ``free`` (names estimated, default all) and optional
    ``bounds`` (name -> [lo, hi]).
    """
    try:
        cls = FAMILIES[str(cfg["family"]).lower()]
    except KeyError as exc:
        raise ModelError(f"unknown or missing model family in {dict(cfg)!r}") from exc
    params = {k: float(v) for k, v in dict(cfg.get("params", {})).items()}
    free = tuple(cfg.get("free", cls.param_names))
    bounds = {k: tuple(v) for k, v in dict(cfg.get("bounds", {})).items()}
    fixed = {k: v for k, v in params.items() if k not in free}
    model = cls(free=free, fixed=fixed, bounds=bounds)
    missing = [k for k in free if k not in params]
    if missing:
        raise ModelError(f"true values missing for free parameters {missing}")
    theta0 = model.theta([params[k] for k in free])
    model.params(theta0)
    return model, theta0


def model_to_config(model: DiffusionModel, theta) -> dict:
    p = model.params(theta)
    return {"family": model.family, "params": p, "free": list(model.free),
            "bounds": {k: list(b) for k, b in zip(model.free, model.bounds)}}


# -- generator ---------------------------------------------------------

def generator_function(model: DiffusionModel, theta, f: SmoothFunction) -> SmoothFunction:
    """The function L f = a f' + b^2 f'' / 2 as a :class:`SmoothFunction`.

    Polynomial inputs on polynomial models stay polynomial. Otherwise the
    derivatives of ``L f`` up to order ``min(2, f.order - 2)`` are tracked.
    """
    if f.order < 2:
        raise ValueError("generator needs f with at least two derivatives")
    if f.poly is not None and model.is_polynomial:
        a, bsq = model.drift_poly(theta), model.diffusion_sq_poly(theta)
        p = f.poly
        out = a * p.deriv(1) + 0.5 * bsq * p.deriv(2) if p.degree() >= 2 else (
            a * p.deriv(1) if p.degree() == 1 else Polynomial([0.0]))
        return SmoothFunction.polynomial(out, label=f"L({f.label})")
    p = model.params(theta)
    a = (lambda x: model._a(np.asarray(x, float), p), lambda x: model._a1(np.asarray(x, float), p),
         lambda x: model._a2(np.asarray(x, float), p))

    def bsq(k):
        def val(x):
            x = np.asarray(x, float)
            b, b1, b2 = model._b(x, p), model._b1(x, p), model._b2(x, p)
            return (b * b, 2 * b * b1, 2 * (b1 * b1 + b * b2))[k]
        return val

    B = (bsq(0), bsq(1), bsq(2))
    fd = f.derivs
    n_out = min(2, f.order - 2) + 1

    def deriv(k):
        # (a f')^(k) + 1/2 (B f'')^(k) by Leibniz
        def g(x):
            out = 0.0
            for j in range(k + 1):
                c = math.comb(k, j)
                out = out + c * a[j](x) * fd[1 + k - j](x) + 0.5 * c * B[j](x) * fd[2 + k - j](x)
            return out
        return g

    return SmoothFunction(tuple(deriv(k) for k in range(n_out)), label=f"L({f.label})",
                          finite_difference=f.finite_difference)


def generator_apply(model: DiffusionModel, theta, f: SmoothFunction, x):
    """a(x) f'(x) + b(x)^2 f''(x) / 2."""
    model.check_state(x)
    x = np.asarray(x, dtype=float)
    b = model.diffusion(x, theta)
    return model.drift(x, theta) * f.d1(x) + 0.5 * b * b * f.d2(x)


def generator_iterate(model: DiffusionModel, theta, f: SmoothFunction, x, i: int):
    """The i-th power of the generator applied to f, evaluated at x (i <= 2)."""
    if i < 0 or i > 2:
        raise ValueError(f"generator order {i} unsupported; orders 0, 1, 2 are available")
    model.check_state(x)
    g = f
    for _ in range(i):
        g = generator_function(model, theta, g)
    return g(np.asarray(x, dtype=float))


# -- invariant law -----------------------------------------------------

def quadrature_interval(model: DiffusionModel, theta) -> tuple[float, float]:
    """Interval outside which the invariant density is below 1e-16 of its mode."""
    lo_s, hi_s = model.state_space
    logd = lambda x: float(model.invariant_logdensity(x, theta))  # noqa: E731
    cf = model.closed_form(theta)
    if cf is not None:
        center, scale = cf.mean, math.sqrt(cf.variance)
    else:
        left = lo_s + 1e-8 if np.isfinite(lo_s) else -1e3
        right = hi_s - 1e-8 if np.isfinite(hi_s) else 1e3
        res = optimize.minimize_scalar(lambda x: -logd(x), bounds=(left, right), method="bounded")
        center, scale = float(res.x), max(1e-3, 0.1 * abs(float(res.x)) + 0.1)
    grid = center + scale * np.linspace(-8, 8, 161)
    grid = grid[model.in_state_space(grid)]
    top = max(logd(x) for x in grid) if grid.size else logd(center)

    def walk(direction):
        bound = hi_s if direction > 0 else lo_s
        step = scale
        x = center
        for _ in range(200):
            nxt = x + direction * step
            if (direction > 0 and nxt >= bound) or (direction < 0 and nxt <= bound):
                return bound
            x = nxt
            if logd(x) < top - _LOG_TAIL:
                return x
            step *= 1.25
        raise NumericalError("invariant density does not decay in the tails",
                             {"center": center, "scale": scale})

    return walk(-1), walk(+1)


def _poly_moment(model, theta, p: Polynomial):
    mom = model.raw_moments(theta, p.degree())
    if mom is None:
        return None
    return float(np.dot(p.coef, mom[: p.coef.size]))


def invariant_moment(model: DiffusionModel, theta, g, full_output: bool = False,
                     method: str = "auto"):
    """mu_theta(g): closed form for polynomial g when available, else quadrature.

    ``method="quadrature"`` skips the closed form. With ``full_output``
    returns ``(value, abs_error_estimate)``.
    """
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and isinstance(g, SmoothFunction) and g.is_constant:
        return (g._const, 0.0) if full_output else g._const
    if method == "auto" and isinstance(g, SmoothFunction) and g.poly is not None:
        value = _poly_moment(model, theta, g.poly)
        if value is not None:
            return (value, 0.0) if full_output else value
    lo, hi = quadrature_interval(model, theta)
    fn = g if callable(g) else g.eval
    integrand = lambda x: float(fn(x)) * math.exp(float(model.invariant_logdensity(x, theta)))  # noqa: E731
    cf = model.closed_form(theta)
    mid = cf.mean if cf is not None else 0.5 * (lo + hi)
    value, err = 0.0, 0.0
    for a, b in ((lo, mid), (mid, hi)):
        v, e, info = integrate.quad(integrand, a, b, limit=400, epsabs=1e-13, epsrel=1e-11,
                                    full_output=True)[:3]
        value += v
        err += e
        if err > 1e-6 * max(1.0, abs(value)):
            raise NumericalError("quadrature did not converge", {"interval": (lo, hi), "abserr": err,
                                                                  "neval": info.get("neval")})
    return (value, err) if full_output else value


def invariant_variance(model, theta, f: SmoothFunction) -> float:
    m = invariant_moment(model, theta, f)
    return invariant_moment(model, theta, f * f) - m * m


def kf_coefficient(model: DiffusionModel, theta, f: SmoothFunction) -> float:
    """mu(f L f) / Var f(X_0): first-order rate in the lag-1 projection expansion."""
    var = invariant_variance(model, theta, f)
    if not var > 1e-12 * max(1.0, invariant_moment(model, theta, f * f)):
        raise DegeneratePredictorError(f"predictor {f.label!r} has zero variance under mu_theta")
    return invariant_moment(model, theta, f * generator_function(model, theta, f)) / var


def check_normalization(model: DiffusionModel, theta, tol: float = 1e-8) -> float:
    """Integral of the invariant density by quadrature; raises if off by more than ``tol``."""
    lo, hi = quadrature_interval(model, theta)
    total = integrate.quad(lambda x: math.exp(float(model.invariant_logdensity(x, theta))), lo, hi,
                           limit=400, epsabs=1e-14, epsrel=1e-12)[0]
    if abs(total - 1.0) > tol:
        raise NumericalError("invariant density does not integrate to one", {"integral": total})
    return total


# -- polynomial semigroup ----------------------------------------------

def generator_matrix(model: DiffusionModel, theta, degree: int) -> np.ndarray:
    """Matrix of L on the monomial basis 1, x, ..., x^degree (polynomial models)."""
    if not model.is_polynomial:
        raise ModelError(f"{model.family} is not a polynomial diffusion")
    a, bsq = model.drift_poly(theta), model.diffusion_sq_poly(theta)
    L = np.zeros((degree + 1, degree + 1))
    for k in range(1, degree + 1):
        img = k * a * Polynomial.basis(k - 1)
        if k >= 2:
            img = img + 0.5 * k * (k - 1) * bsq * Polynomial.basis(k - 2)
        c = img.coef
        if np.any(np.abs(c[degree + 1:]) > 0):
            raise ModelError("generator raises polynomial degree; model is not polynomial")
        L[: min(c.size, degree + 1), k] = c[: degree + 1]
    return L


def transition_polynomial(model: DiffusionModel, theta, f: SmoothFunction, t: float) -> SmoothFunction:
    """P_t f = E[f(X_t) | X_0 = x] as a polynomial in x, exact for polynomial models."""
    if f.poly is None:
        raise ValueError("transition_polynomial needs a polynomial f")
    deg = f.poly.degree()
    coef = np.zeros(deg + 1)
    coef[: f.poly.coef.size] = f.poly.coef
    out = linalg.expm(t * generator_matrix(model, theta, deg)) @ coef
    return SmoothFunction.polynomial(out, label=f"P_{t:g}({f.label})")


def lagged_moment(model: DiffusionModel, theta, f: SmoothFunction, g: SmoothFunction, t: float):
    """E[f(X_0) g(X_t)] under stationarity, exactly for polynomial f, g; else ``None``."""
    if not (model.is_polynomial and f.poly is not None and g.poly is not None):
        return None
    return invariant_moment(model, theta, f * transition_polynomial(model, theta, g, t))


def stationary_moment_check(model, theta, degrees=(1, 2, 3)) -> float:
    """max_k |mu(L x^k)| by quadrature, which should vanish (stationarity)."""
    worst = 0.0
    for k in degrees:
        Lf = generator_function(model, theta, SmoothFunction.monomial(k))
        worst = max(worst, abs(invariant_moment(model, theta, Lf, method="quadrature")))
    return worst


__all__ = [
    "ParamVector", "ClosedForm", "DiffusionModel", "OrnsteinUhlenbeck", "CoxIngersollRoss",
    "UserModel", "model_from_config", "model_to_config", "generator_function", "generator_apply",
    "generator_iterate", "invariant_moment", "invariant_variance", "kf_coefficient",
    "quadrature_interval", "check_normalization", "generator_matrix", "transition_polynomial",
    "lagged_moment", "spectral_gap", "stationary_moment_check",
]
