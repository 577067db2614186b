"""Potential operator U(g) = int_0^inf P_t g dt and asymptotic variances built from it.

Every asymptotic variance in this package is a combination of pairings
mu(g1 U(g2)) = int_0^inf E[g1(X_0) g2(X_t)] dt for centred g2. Polynomial
diffusions (OU, CIR) with polynomial g2 have polynomial potentials, found by
solving L u = -g2 on the monomial basis. Otherwise the pairing is estimated by
Monte Carlo, either with exponential random horizons or by trapezoidal
integration of the lagged covariance along simulated stationary paths.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import (BoundaryTermError, ConfigurationError, IdentifiabilityError, NotAvailableError,
                     NumericalError, SingularJacobianError)
from .estimator import PredictorSpec, theta_jacobian, w_limit
from .functions import SmoothFunction
from .model import (DiffusionModel, OrnsteinUhlenbeck, generator_function, generator_matrix,
                    invariant_moment, invariant_variance, kf_coefficient, quadrature_interval, spectral_gap)
from .simulate import SamplingScheme, draw_stationary, make_rng, propagate, simulate_paths

ESTIMATORS = ("exp_time", "grid_quadrature")
_CENTER_TOL = 1e-6
_BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class PotentialMCConfig:
    """Monte Carlo settings for pairings mu(g1 U(g2)).

    ``gamma`` and ``t_max`` default to lambda/2 and 10/gamma when the spectral
    gap lambda is known, else to a pilot autocorrelation time. ``window`` is
    the range of start times averaged over on each grid path (0 disables).
    """

    gamma: float | None = None
    K: int = 20_000
    t_max: float | None = None
    estimator: str = "grid_quadrature"
    substeps_per_unit: float = 200.0
    seed: int = 0
    grid_step: float | None = None
    window: float | None = None

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ConfigurationError("t_max must be positive")
        if self.K < 1:
            raise ConfigurationError("K must be at least 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"estimator must be one of {ESTIMATORS}")
        if self.window is not None and self.window < 0:
            raise ConfigurationError("window must be non-negative")


@dataclass
class PotentialEstimate:
    value: float
    stderr: float
    method: str
    bias_bound: float | None = None
    K_used: int = 0
    stderr_reliable: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["diagnostics"] = _jsonable(self.diagnostics)
        return d


@dataclass
class AvarReport:
    """Asymptotic (co)variance with its constituent pairings."""

    avar: float | np.ndarray
    components: dict
    stderr: float | np.ndarray | None = None
    w_matrix: np.ndarray | None = None
    bound: float | None = None
    method_notes: str = ""
    seeds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.avar, dtype=float)
        if a.ndim == 0:
            if not a > 0:
                raise NumericalError("asymptotic variance is not positive", {"avar": float(a)})
        else:
            if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
                raise NumericalError("asymptotic covariance is not symmetric", {"avar": a.tolist()})
            ev = np.linalg.eigvalsh(0.5 * (a + a.T))
            if ev.min() < -1e-10 * abs(np.trace(a)):
                raise NumericalError("asymptotic covariance is not positive semi-definite",
                                     {"eigenvalues": ev.tolist(), "components": _jsonable(self.components)})

    def to_dict(self) -> dict:
        return _jsonable({
            "avar": self.avar, "stderr": self.stderr, "w_matrix": self.w_matrix, "bound": self.bound,
            "method_notes": self.method_notes, "seeds": self.seeds, "diagnostics": self.diagnostics,
            "components": {k: v.to_dict() if isinstance(v, PotentialEstimate) else v
                           for k, v in self.components.items()},
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """Rows (component, value, stderr, method)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "value", "stderr", "method"])
        for name, est in self.components.items():
            if isinstance(est, PotentialEstimate):
                w.writerow([name, f"{est.value:.17g}", f"{est.stderr:.17g}", est.method])
            else:
                w.writerow([name, f"{float(est):.17g}", "0", "exact"])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, PotentialEstimate):
        return obj.to_dict()
    return obj


def _zero(g: SmoothFunction) -> bool:
    return g.is_constant and g._const == 0.0


def center(model: DiffusionModel, theta, g: SmoothFunction, name: str = "g") -> tuple[SmoothFunction, float]:
    """Return ``g - mu_theta(g)`` and the subtracted mean, warning when the mean is not negligible."""
    if _zero(g):
        return g, 0.0
    m = invariant_moment(model, theta, g)
    scale = math.sqrt(max(invariant_moment(model, theta, g * g), 0.0))
    if abs(m) > _CENTER_TOL * max(1.0, scale):
        warnings.warn(f"{name} is not centred under the invariant law (mean {m:.6g}); subtracting the mean",
                      RuntimeWarning, stacklevel=3)
    return (g - m if m != 0.0 else g), m


# -- closed forms ---------------------------------------------------------

def potential_polynomial(model: DiffusionModel, theta, f: SmoothFunction) -> SmoothFunction:
    """U(f - mu(f)) as a polynomial, for polynomial diffusions and polynomial f.

    Solves L u = -(f - mu(f)) on 1, x, ..., x^deg f and fixes the constant by mu(u) = 0.
    """
    if not (model.is_polynomial and f.poly is not None):
        raise NotAvailableError("polynomial potential needs a polynomial model and polynomial f")
    deg = f.poly.degree()
    if deg == 0:
        return SmoothFunction.constant(0.0)
    L = generator_matrix(model, theta, deg)
    rhs = np.zeros(deg + 1)
    rhs[: f.poly.coef.size] = -f.poly.coef
    rhs[0] += invariant_moment(model, theta, f)
    # L has a zero first column (constants); solve for the non-constant coefficients
    sol, *_ = np.linalg.lstsq(L[:, 1:], rhs, rcond=None)
    if np.max(np.abs(L[:, 1:] @ sol - rhs)) > 1e-9 * max(1.0, np.max(np.abs(rhs))):
        raise NotAvailableError("Poisson equation has no polynomial solution of this degree")
    u = SmoothFunction.polynomial(np.concatenate([[0.0], sol]))
    u = u - invariant_moment(model, theta, u)
    return SmoothFunction.polynomial(u.poly, label=f"U({f.label})")


def potential_closed_form_ou(model: DiffusionModel, theta, f_star_kind: str = "linear") -> SmoothFunction:
    """U(x - eta) = (x - eta)/kappa for the OU process."""
    if not isinstance(model, OrnsteinUhlenbeck) or f_star_kind != "linear":
        raise NotAvailableError(f"no closed-form potential for {model.family} / {f_star_kind!r}")
    p = model.params(theta)
    return SmoothFunction.polynomial([-p["eta"] / p["kappa"], 1.0 / p["kappa"]], label="(x - eta)/kappa")


def poisson_residual(model: DiffusionModel, theta, u: SmoothFunction, g: SmoothFunction, probes) -> float:
    """max over probes of |L u + g|."""
    x = np.asarray(probes, dtype=float)
    return float(np.max(np.abs(generator_function(model, theta, u)(x) + g(x))))


def potential_pairing_exact(model: DiffusionModel, theta, g1: SmoothFunction, g2: SmoothFunction) -> PotentialEstimate:
    """mu(g1 U(g2)) from the polynomial potential of g2 (g1 arbitrary)."""
    g2c, m = center(model, theta, g2, "g2")
    if _zero(g1) or _zero(g2c):
        return PotentialEstimate(0.0, 0.0, "closed_form", 0.0, 0)
    u = potential_polynomial(model, theta, g2c)
    return PotentialEstimate(invariant_moment(model, theta, g1 * u), 0.0, "closed_form", 0.0, 0,
                             diagnostics={"g2_mean_removed": m})


def l2_norm(model: DiffusionModel, theta, g: SmoothFunction) -> float:
    return math.sqrt(max(invariant_moment(model, theta, g * g), 0.0))


def potential_norm_check(model: DiffusionModel, theta, f: SmoothFunction) -> dict:
    """||U(f*)||_2 next to the bound ||f*||_2 / lambda, with f* = f - mu(f)."""
    fc = f - invariant_moment(model, theta, f)
    u = potential_polynomial(model, theta, fc)
    lam = spectral_gap(model, theta)
    norm_u, norm_f = l2_norm(model, theta, u), l2_norm(model, theta, fc)
    bound = norm_f / lam if lam else float("nan")
    return {"norm_U": norm_u, "norm_f": norm_f, "bound": bound, "ok": bool(lam is None or norm_u <= bound * (1 + 1e-10))}


def transition_norms_mc(model: DiffusionModel, theta, f: SmoothFunction, times, n: int = 20_000,
                        seed: int = 0, substeps_per_unit: float = 200.0):
    """Unbiased estimates of ||P_t f||_2^2 from two independent copies started at one X_0.

    Returns arrays (squared norm, stderr) over ``times``.
    """
    fc = f - invariant_moment(model, theta, f)
    out, se = [], []
    for k, t in enumerate(times):
        rng = make_rng(seed, k)
        x0 = draw_stationary(model, theta, rng, size=n)
        if t == 0:
            prod = fc(x0) ** 2
        else:
            prod = fc(propagate(model, theta, x0, t, rng, substeps_per_unit)) * \
                fc(propagate(model, theta, x0, t, rng, substeps_per_unit))
        out.append(float(prod.mean()))
        se.append(float(prod.std(ddof=1) / math.sqrt(n)))
    return np.array(out), np.array(se)


# -- Monte Carlo pairings -----------------------------------------------

def autocorrelation_time(model: DiffusionModel, theta, g: SmoothFunction, seed: int = 0,
                         dt: float = 0.01, n: int = 200_000) -> float:
    """Integrated autocorrelation time of g(X) from one pilot path, summed to the first negative lag."""
    x = simulate_paths(model, theta, SamplingScheme(n, dt, 5, seed))[0]
    y = g(x) - np.mean(g(x))
    m = 1 << int(np.ceil(np.log2(2 * y.size)))
    spec = np.fft.rfft(y, m)
    acf = np.fft.irfft(spec * np.conj(spec), m)[: y.size]
    if not acf[0] > 0:
        raise NumericalError("pilot path gives zero variance for g")
    acf /= acf[0]
    neg = np.flatnonzero(acf < 0)
    cut = neg[0] if neg.size else acf.size
    return float(dt * (acf[:cut].sum() - 0.5))


def resolve_config(model: DiffusionModel, theta, cfg: PotentialMCConfig | None,
                   pilot: SmoothFunction | None = None) -> PotentialMCConfig:
    """Fill in gamma and t_max from the spectral gap or a pilot autocorrelation time."""
    cfg = cfg or PotentialMCConfig()
    gamma, t_max = cfg.gamma, cfg.t_max
    if gamma is None:
        lam = spectral_gap(model, theta)
        if lam:
            gamma = lam / 2
        else:
            tau = autocorrelation_time(model, theta, pilot or SmoothFunction.identity(), cfg.seed)
            gamma = 1.0 / max(tau, 1e-6)
    if t_max is None:
        t_max = 10.0 / gamma
    return replace(cfg, gamma=gamma, t_max=t_max)


def _grid_samples(model, theta, pairs, cfg):
    h = cfg.grid_step or cfg.t_max / 240
    n_t = max(1, int(round(cfg.t_max / h)))
    h = cfg.t_max / n_t
    window = cfg.t_max if cfg.window is None else cfg.window
    n_shift = int(round(window / h)) + 1
    n = n_t + n_shift - 1
    exact = isinstance(model, OrnsteinUhlenbeck)
    m = 1 if exact else max(1, int(math.ceil(h * cfg.substeps_per_unit)))
    scheme = SamplingScheme(n, h, m, cfg.seed)
    samples = np.zeros((cfg.K, len(pairs)))
    rows = max(1, _BATCH_ELEMENTS // (n * m + 1))
    for start in range(0, cfg.K, rows):
        stop = min(cfg.K, start + rows)
        x = simulate_paths(model, theta, scheme, stream_ids=range(start, stop))
        cache = {}
        for j, (g1, g2) in enumerate(pairs):
            if _zero(g1) or _zero(g2):
                continue
            if id(g2) not in cache:
                c = integrate.cumulative_trapezoid(g2(x), dx=h, axis=1, initial=0.0)
                cache[id(g2)] = c[:, n_t:n_t + n_shift] - c[:, :n_shift]
            samples[start:stop, j] = np.mean(g1(x[:, :n_shift]) * cache[id(g2)], axis=1)
    return samples, {"grid_step": h, "n_shift": n_shift, "substeps": m, "t_max": cfg.t_max}


def _exp_time_samples(model, theta, pairs, cfg):
    gamma, t_max = cfg.gamma, cfg.t_max
    mass = -math.expm1(-gamma * t_max)
    samples = np.zeros((cfg.K, len(pairs)))
    rows = 50_000
    for c, start in enumerate(range(0, cfg.K, rows)):
        stop = min(cfg.K, start + rows)
        rng = make_rng(cfg.seed, c)
        u = rng.random(stop - start)
        t = -np.log1p(-u * mass) / gamma
        x0 = draw_stationary(model, theta, rng, size=stop - start)
        xt = propagate(model, theta, x0, t, rng, cfg.substeps_per_unit)
        # importance weight 1/p(t) of the exponential truncated to [0, t_max]
        w = mass / gamma * np.exp(gamma * t)
        for j, (g1, g2) in enumerate(pairs):
            if not (_zero(g1) or _zero(g2)):
                samples[start:stop, j] = w * g1(x0) * g2(xt)
    return samples, {"gamma": gamma, "t_max": t_max}


def pairing_samples(model: DiffusionModel, theta, pairs, cfg: PotentialMCConfig | None = None):
    """Per-draw contributions for several pairings on common random numbers.

    ``pairs`` is a list of (g1, g2) with g2 centred. Returns an array of shape
    (K, len(pairs)) whose column means estimate mu(g1 U(g2)), together with
    the resolved configuration and sampler diagnostics.
    """
    pilot = next((g2 for _, g2 in pairs if not _zero(g2)), None)
    cfg = resolve_config(model, theta, cfg, pilot)
    if cfg.estimator == "exp_time":
        samples, info = _exp_time_samples(model, theta, pairs, cfg)
    else:
        samples, info = _grid_samples(model, theta, pairs, cfg)
    return samples, cfg, info


def _bias_bound(model, theta, g1, g2, t_max):
    lam = spectral_gap(model, theta)
    if not lam:
        return None
    return l2_norm(model, theta, g1) * l2_norm(model, theta, g2) * math.exp(-lam * t_max) / lam


def _summarize(col, cfg, info, bias_bound, method_extra=None) -> PotentialEstimate:
    K = col.size
    value = float(np.mean(col))
    diag = dict(info)
    if method_extra:
        diag.update(method_extra)
    if K < 10:
        diag["diagnostics_only"] = True
        return PotentialEstimate(value, float("nan"), cfg.estimator, bias_bound, K, False, diag)
    se = float(np.std(col, ddof=1) / math.sqrt(K))
    return PotentialEstimate(value, se, cfg.estimator, bias_bound, K, cfg.estimator != "exp_time", diag)


def potential_pairing_mc(model: DiffusionModel, theta, g1: SmoothFunction, g2: SmoothFunction,
                         cfg: PotentialMCConfig | None = None) -> PotentialEstimate:
    """Monte Carlo estimate of mu_theta(g1 U_theta(g2)).

    g2 is centred automatically (with a warning) when its mean exceeds 1e-6.
    With K < 10 only a diagnostic value without standard error is returned.
    """
    g2c, m = center(model, theta, g2, "g2")
    samples, cfg, info = pairing_samples(model, theta, [(g1, g2c)], cfg)
    bb = _bias_bound(model, theta, g1, g2c, cfg.t_max)
    return _summarize(samples[:, 0], cfg, info, bb, {"g2_mean_removed": m, "seed": cfg.seed})


# -- integration by parts ------------------------------------------------

def boundary_check(model: DiffusionModel, theta, f1: SmoothFunction, rtol: float = 1e-8) -> dict:
    """Compare |nu f1| at the density truncation points with its bulk size."""
    lo, hi = quadrature_interval(model, theta)
    lo_s, hi_s = model.state_space
    span = hi - lo
    ends = [lo + 1e-10 * span if lo == lo_s else lo, hi - 1e-10 * span if hi == hi_s else hi]
    dens = lambda x: np.exp(model.invariant_logdensity(np.asarray(x, dtype=float), theta))  # noqa: E731
    grid = np.linspace(ends[0], ends[1], 401)
    bulk = float(np.max(np.abs(dens(grid) * f1(grid))))
    tails = [float(abs(dens(e) * f1(e))) for e in ends]
    ok = bulk == 0.0 or max(tails) <= rtol * bulk
    return {"endpoints": ends, "tail_values": tails, "bulk": bulk, "ok": bool(ok)}


def ibp_weight(model: DiffusionModel, theta, f1: SmoothFunction) -> SmoothFunction:
    """h = f1' + f1 (log nu)' so that mu(f1 dU(g)) = -mu(h U(g))."""
    def h(x):
        return f1.d1(x) + f1(x) * model.invariant_logdensity_dx(x, theta)

    return SmoothFunction((h,), label=f"ibp({f1.label})")


def dx_potential_term(model: DiffusionModel, theta, f1: SmoothFunction, g2_centered: SmoothFunction,
                      cfg: PotentialMCConfig | None = None, method: str = "mc") -> PotentialEstimate:
    """mu(f1 * d/dx U(g2)) via integration by parts, -mu(U(g2) h).

    ``method="closed_form"`` evaluates the left side directly from the
    polynomial potential instead.
    """
    if _zero(f1):
        return PotentialEstimate(0.0, 0.0, method, 0.0, 0)
    bc = boundary_check(model, theta, f1)
    if not bc["ok"]:
        raise BoundaryTermError(f"boundary terms of nu*{f1.label} do not vanish: {bc['tail_values']}")
    g2c, m = center(model, theta, g2_centered, "g2")
    if method == "closed_form":
        u = potential_polynomial(model, theta, g2c)
        val = invariant_moment(model, theta, f1 * u.derivative_function(1))
        return PotentialEstimate(val, 0.0, "closed_form", 0.0, 0, diagnostics={"boundary": bc})
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    est = potential_pairing_mc(model, theta, ibp_weight(model, theta, f1), g2c, cfg)
    est.value = -est.value
    est.diagnostics["boundary"] = bc
    return est


# -- asymptotic variances ---------------------------------------------------

def _use_closed_form(model, f, method):
    if method not in ("auto", "closed_form", "mc"):
        raise ValueError(f"unknown method {method!r}")
    available = model.is_polynomial and f.poly is not None
    if method == "closed_form" and not available:
        raise NotAvailableError("closed-form potentials need a polynomial model and predictor")
    return method == "closed_form" or (method == "auto" and available)


def avar_simple(model: DiffusionModel, theta0, spec: PredictorSpec, cfg: PotentialMCConfig | None = None,
                method: str = "auto") -> AvarReport:
    """AVAR of the simple estimator, 2 mu0(f* U0 f*) / (d mu_theta(f)/d theta)^2, with the spectral-gap bound."""
    if spec.q != 0 or model.dim_theta != 1:
        raise ConfigurationError("avar_simple needs q = 0 and a scalar parameter")
    f = spec.f
    fstar = f - invariant_moment(model, theta0, f)
    dmu = float(theta_jacobian(lambda t: invariant_moment(model, t, f), theta0, model.bounds)[0, 0])
    if abs(dmu) < 1e-10:
        raise IdentifiabilityError("mu_theta(f) does not depend on theta at theta0")
    if _use_closed_form(model, f, method):
        pair = potential_pairing_exact(model, theta0, fstar, fstar)
    else:
        pair = potential_pairing_mc(model, theta0, fstar, fstar, cfg)
    avar = 2 * pair.value / dmu**2
    se = 2 * pair.stderr / dmu**2
    lam = spectral_gap(model, theta0)
    bound = 2 * invariant_variance(model, theta0, f) / (lam * dmu**2) if lam else None
    diag = {"dmu_dtheta": dmu, "lambda": lam}
    if bound is not None:
        rel = se / avar if avar > 0 else 0.0
        diag["bound_ok"] = bool(avar <= bound * (1 + 3 * rel) + 1e-10 * bound)
        if not diag["bound_ok"]:
            warnings.warn(f"AVAR {avar:.6g} exceeds the spectral-gap bound {bound:.6g}", RuntimeWarning,
                          stacklevel=2)
    seeds = {} if pair.method == "closed_form" else {"pairing": (cfg or PotentialMCConfig()).seed}
    return AvarReport(avar, {"mu0(f* U0 f*)": pair}, se, None, bound,
                      f"pairing by {pair.method}; derivative of mu_theta(f) by central differences", seeds, diag)


def onelag_functions(model: DiffusionModel, theta0, f: SmoothFunction):
    """f1* = K_f (mu0(f) - f), f2* = f (L0 f + f1*), and ff'b^2.

    f2* is centred by construction; any numerical mean is removed and reported.
    """
    K = kf_coefficient(model, theta0, f)
    m0 = invariant_moment(model, theta0, f)
    f1 = (f * -K) + K * m0
    f2 = f * (generator_function(model, theta0, f) + f1)
    f2, m2 = center(model, theta0, f2, "f2*")
    bsq = _bsq_function(model, theta0)
    g = f * f.derivative_function(1) * bsq
    return f1, f2, g, {"K_f": K, "f2_mean_removed": m2}


def _bsq_function(model, theta):
    poly = model.diffusion_sq_poly(theta)
    if poly is not None:
        return SmoothFunction.polynomial(poly)

    def b2(x):
        return model.diffusion(x, theta) ** 2

    def b2_1(x):
        return 2 * model.diffusion(x, theta) * model.diffusion_dx(x, theta)

    def b2_2(x):
        b1 = model.diffusion_dx(x, theta)
        return 2 * (b1 * b1 + model.diffusion(x, theta) * model.diffusion_dxx(x, theta))

    return SmoothFunction((b2, b2_1, b2_2), label="b^2")


def avar_onelag(model: DiffusionModel, theta0, spec: PredictorSpec, cfg: PotentialMCConfig | None = None,
                method: str = "auto") -> AvarReport:
    """Sandwich W^{-1} V0 W^{-T} for the 1-lag estimator.

    V0 is assembled from pairings of f1*, f2* and integration-by-parts terms
    for the derivative of the potential; all Monte Carlo pairings share one
    set of simulated paths.
    """
    if spec.q != 1 or model.dim_theta != 2:
        raise ConfigurationError("avar_onelag needs q = 1 and a two-dimensional parameter")
    f = spec.f
    f1, f2, g, info = onelag_functions(model, theta0, f)
    fd1 = f.derivative_function(1)
    c22 = invariant_moment(model, theta0, g * f * fd1)  # mu0((f f' b)^2)
    W = w_limit(model, theta0, theta0, spec)
    cond = float(np.linalg.cond(W))
    if not cond < 1e12:
        raise SingularJacobianError(f"W(theta0) is singular (condition number {cond:.3g})")
    Wi = np.linalg.inv(W)
    if _use_closed_form(model, f, method):
        p11 = potential_pairing_exact(model, theta0, f1, f1)
        p12 = potential_pairing_exact(model, theta0, f1, f2)
        p21 = potential_pairing_exact(model, theta0, f2, f1)
        p22 = potential_pairing_exact(model, theta0, f2, f2)
        d1 = dx_potential_term(model, theta0, g, f1, method="closed_form")
        d2 = dx_potential_term(model, theta0, g, f2, method="closed_form")
        vals = np.array([p11.value, p12.value, p21.value, p22.value, d1.value, d2.value])
        V = _v_matrix(vals, c22)
        S = Wi @ V @ Wi.T
        se = np.zeros((2, 2))
        comps = {"mu0(f1* U0 f1*)": p11, "mu0(f1* U0 f2*)": p12, "mu0(f2* U0 f1*)": p21,
                 "mu0(f2* U0 f2*)": p22, "mu0(dU0(f1*) ff'b^2)": d1, "mu0(dU0(f2*) ff'b^2)": d2}
        notes, seeds = "closed-form polynomial potentials", {}
    else:
        for fn in (g,):
            bc = boundary_check(model, theta0, fn)
            if not bc["ok"]:
                raise BoundaryTermError(f"boundary terms of nu*{fn.label} do not vanish")
        h = ibp_weight(model, theta0, g)
        pairs = [(f1, f1), (f1, f2), (f2, f1), (f2, f2), (h, f1), (h, f2)]
        samples, rcfg, sinfo = pairing_samples(model, theta0, pairs, cfg)
        samples[:, 4:] *= -1.0
        names = ["mu0(f1* U0 f1*)", "mu0(f1* U0 f2*)", "mu0(f2* U0 f1*)", "mu0(f2* U0 f2*)",
                 "mu0(dU0(f1*) ff'b^2)", "mu0(dU0(f2*) ff'b^2)"]
        comps = {nm: _summarize(samples[:, j], rcfg, sinfo, None) for j, nm in enumerate(names)}
        vals = samples.mean(axis=0)
        V = _v_matrix(vals, c22)
        S = Wi @ V @ Wi.T
        # sandwich is linear in the pairing samples: per-draw sandwiches give the stderr
        per = np.einsum("ij,kjl,ml->kim", Wi, _v_matrix_rows(samples, c22), Wi)
        se = per.std(axis=0, ddof=1) / math.sqrt(samples.shape[0]) if samples.shape[0] > 1 else np.full((2, 2), np.nan)
        asym = samples[:, 1] - samples[:, 2]
        info["cross_pairing_asymmetry"] = float(asym.mean())
        info["cross_pairing_asymmetry_stderr"] = float(asym.std(ddof=1) / math.sqrt(asym.size))
        notes, seeds = f"{rcfg.estimator} pairings on common random numbers", {"pairing": rcfg.seed}
    comps["mu0((ff'b)^2)"] = c22
    V = 0.5 * (V + V.T)
    S = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(V)
    if ev.min() < -1e-10 * abs(np.trace(V)):
        raise NumericalError("V0 is not positive semi-definite", {"V0": V.tolist(), "eigenvalues": ev.tolist(),
                                                                   "components": _jsonable(comps)})
    info["V0"] = V
    info["W_condition"] = cond
    return AvarReport(S, comps, se, W, None, notes, seeds, info)


def _v_matrix(v, c22):
    v11 = 2 * v[0]
    v12 = v[1] + v[2] + v[4]
    v22 = 2 * v[3] + c22 + 2 * v[5]
    return np.array([[v11, v12], [v12, v22]])


def _v_matrix_rows(s, c22):
    out = np.empty((s.shape[0], 2, 2))
    out[:, 0, 0] = 2 * s[:, 0]
    out[:, 0, 1] = out[:, 1, 0] = s[:, 1] + s[:, 2] + s[:, 4]
    out[:, 1, 1] = 2 * s[:, 3] + c22 + 2 * s[:, 5]
    return out


def clt_variance(model: DiffusionModel, theta0, g: SmoothFunction, cfg: PotentialMCConfig | None = None) -> PotentialEstimate:
    """Asymptotic variance 2 mu0(g U0 g) of sqrt(n delta) V_n(g), by Monte Carlo.

    When the potential is polynomial, the diagnostics also carry both exact
    forms, 2 mu0(g U0 g) and mu0((dU0(g) b)^2), their discrepancy, and an
    independent Monte Carlo estimate of the second form from invariant draws.
    """
    gc, m = center(model, theta0, g, "g")
    if _zero(gc):
        return PotentialEstimate(0.0, 0.0, (cfg or PotentialMCConfig()).estimator, 0.0, 0,
                                 diagnostics={"g_mean_removed": m})
    pair = potential_pairing_mc(model, theta0, gc, gc, cfg)
    est = PotentialEstimate(2 * pair.value, 2 * pair.stderr, pair.method,
                            None if pair.bias_bound is None else 2 * pair.bias_bound, pair.K_used,
                            pair.stderr_reliable, {**pair.diagnostics, "g_mean_removed": m})
    try:
        u = potential_polynomial(model, theta0, gc)
    except NotAvailableError:
        return est
    du = u.derivative_function(1)
    bsq = _bsq_function(model, theta0)
    form_pair = 2 * invariant_moment(model, theta0, gc * u)
    form_dx = invariant_moment(model, theta0, du * du * bsq)
    seed = (cfg or PotentialMCConfig()).seed + 1
    K = (cfg or PotentialMCConfig()).K
    x = draw_stationary(model, theta0, make_rng(seed, 0), size=K)
    vals = du(x) ** 2 * bsq(x)
    est.diagnostics.update({
        "form_pairing_exact": form_pair, "form_dx_exact": form_dx,
        "discrepancy": abs(form_pair - form_dx),
        "form_dx_mc": float(vals.mean()),
        "form_dx_mc_stderr": float(vals.std(ddof=1) / math.sqrt(K)) if K > 1 else float("nan"),
    })
    return est


def ou_pairing_truncated(model: OrnsteinUhlenbeck, theta, t_max: float) -> float:
    """int_0^t_max Cov(X_0, X_t) dt = sigma^2 (1 - exp(-kappa t_max)) / kappa for OU."""
    cf = model.closed_form(theta)
    return cf.variance * -math.expm1(-cf.spectral_gap * t_max) / cf.spectral_gap


__all__ = [
    "PotentialMCConfig", "PotentialEstimate", "AvarReport", "center", "potential_polynomial",
    "potential_closed_form_ou", "poisson_residual", "potential_pairing_exact", "potential_norm_check",
    "transition_norms_mc", "autocorrelation_time", "resolve_config", "pairing_samples",
    "potential_pairing_mc", "boundary_check", "ibp_weight", "dx_potential_term", "avar_simple",
    "onelag_functions", "avar_onelag", "clt_variance", "ou_pairing_truncated", "l2_norm",
]

