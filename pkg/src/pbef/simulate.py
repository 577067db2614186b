"""Stationary discretised trajectories on equidistant grids.

Every variate is drawn from a Philox (counter-based) generator keyed by
``(seed, stream_id)``, so a replication is reproducible on its own and paths
simulated in a batch are bit-identical to paths simulated one at a time.
The OU family uses its exact Gaussian transition; other models use
Euler-Maruyama with ``substeps`` internal steps per observation interval and
full truncation at a finite state-space boundary.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate, signal

from .errors import NumericalError, SimulationError
from .functions import SmoothFunction
from .model import DiffusionModel, OrnsteinUhlenbeck, quadrature_interval

# rows * steps per batch of pre-drawn Gaussian noise
_BATCH_ELEMENTS = 4_000_000


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator for replication ``stream_id`` of experiment ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplingScheme:
    """n observation intervals of length delta, simulated with ``substeps`` Euler steps each."""

    n: int
    delta: float
    substeps: int = 1
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.n < 0 or not self.delta > 0 or self.substeps < 1:
            raise ValueError("need n >= 0, delta > 0 and substeps >= 1")

    @property
    def horizon(self) -> float:
        return self.n * self.delta

    @property
    def n_delta(self) -> float:
        return self.n * self.delta

    @property
    def n_delta3(self) -> float:
        return self.n * self.delta**3

    def with_stream(self, stream_id: int) -> SamplingScheme:
        return SamplingScheme(self.n, self.delta, self.substeps, self.seed, stream_id)


@dataclass
class SamplePath:
    """Observations X_0, X_delta, ..., X_{n delta}."""

    scheme: SamplingScheme
    values: np.ndarray
    method: str = "exact"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.scheme.n + 1,):
            raise ValueError(f"path length {self.values.shape} does not match n + 1 = {self.scheme.n + 1}")

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def delta(self) -> float:
        return self.scheme.delta

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.scheme.n + 1) * self.scheme.delta

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "time", "value"])
            for i, (t, x) in enumerate(zip(self.times, self.values)):
                w.writerow([i, f"{t:.17g}", f"{x:.17g}"])
        return path

    @classmethod
    def from_csv(cls, path, substeps: int = 1, seed: int = 0, stream_id: int = 0,
                 method: str = "imported") -> SamplePath:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no observations")
        idx = np.array([int(r["index"]) for r in rows])
        if not np.array_equal(idx, np.arange(idx.size)):
            raise ValueError(f"{path}: indices must be 0..n in order")
        times = np.array([float(r["time"]) for r in rows])
        values = np.array([float(r["value"]) for r in rows])
        if times.size > 1:
            steps = np.diff(times)
            delta = float(steps.mean())
            if not np.allclose(steps, delta, rtol=1e-9, atol=1e-12):
                raise ValueError(f"{path}: observation times are not equidistant")
        else:
            delta = 1.0
        scheme = SamplingScheme(values.size - 1, delta, substeps, seed, stream_id)
        return cls(scheme, values, method)


# -- invariant draws ----------------------------------------------------

def _inverse_cdf_table(model: DiffusionModel, theta, n_grid: int = 4001):
    lo, hi = quadrature_interval(model, theta)
    grid = np.linspace(lo, hi, n_grid)
    inside = model.in_state_space(grid)
    dens = np.zeros_like(grid)
    dens[inside] = np.exp(model.invariant_logdensity(grid[inside], theta))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    if not cdf[-1] > 0 or abs(cdf[-1] - 1.0) > 1e-3:
        raise NumericalError("CDF table does not reach one", {"total": float(cdf[-1])})
    cdf /= cdf[-1]
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    return interpolate.interp1d(cdf[keep], grid[keep], bounds_error=False,
                                fill_value=(grid[0], grid[-1]))


def draw_stationary(model: DiffusionModel, theta, rng: np.random.Generator, size=None):
    """Draw(s) from mu_theta: closed-form sampler or tabulated inverse CDF."""
    draws = model.sample_invariant(theta, rng, size)
    if draws is not None:
        return draws
    inv = _inverse_cdf_table(model, theta)
    out = inv(rng.random(size))
    if not np.all(model.in_state_space(out)):
        raise NumericalError("inverse CDF produced points outside the state space")
    return out if size is not None else float(out)


# -- path simulation -----------------------------------------------------

def _uses_exact(model: DiffusionModel, method: str) -> bool:
    if method == "auto":
        return isinstance(model, OrnsteinUhlenbeck)
    if method == "exact":
        if not isinstance(model, OrnsteinUhlenbeck):
            raise ValueError(f"no exact transition for {model.family}")
        return True
    if method == "euler":
        return False
    raise ValueError(f"unknown simulation method {method!r}")


def _ou_rows(model, theta, x0, noise, dt):
    p = model.params(theta)
    phi = math.exp(-p["kappa"] * dt)
    sd = math.sqrt(p["xi"] ** 2 / (2 * p["kappa"]) * (1 - phi * phi))
    # centred AR(1): y_i = phi y_{i-1} + sd e_i
    y = signal.lfilter([1.0], [1.0, -phi], sd * noise, axis=1,
                       zi=(phi * (x0 - p["eta"]))[:, None])[0]
    return np.concatenate([x0[:, None], y + p["eta"]], axis=1)


def euler_rows(model: DiffusionModel, theta, x0, noise, dt: float, record_every: int = 1):
    """Euler-Maruyama over ``noise.shape[1]`` steps for each row, keeping every ``record_every``-th state.

    Coefficients are evaluated at the state clipped to the closure of the
    state space (full truncation); the state itself is not modified.
    """
    p = model.params(theta)
    lo, hi = model.state_space
    x = np.array(x0, dtype=float)
    n_steps = noise.shape[1]
    out = np.empty((x.size, n_steps // record_every + 1))
    out[:, 0] = x
    sq = math.sqrt(dt)
    clip = np.isfinite(lo) or np.isfinite(hi)
    for k in range(n_steps):
        xc = np.clip(x, lo, hi) if clip else x
        x = x + model._a(xc, p) * dt + model._b(xc, p) * sq * noise[:, k]
        if (k + 1) % record_every == 0:
            out[:, (k + 1) // record_every] = x
    return out


def simulate_paths(model: DiffusionModel, theta, scheme: SamplingScheme,
                   stream_ids: Sequence[int] | None = None, method: str = "auto",
                   x0=None) -> np.ndarray:
    """Array of shape (R, n + 1): one stationary path per stream id.

    ``x0`` overrides the stationary start (diagnostics only).
    """
    model.params(theta)
    stream_ids = [scheme.stream_id] if stream_ids is None else list(stream_ids)
    exact = _uses_exact(model, method)
    m = 1 if exact else scheme.substeps
    steps = scheme.n * m
    dt = scheme.delta / m
    rows_per_batch = max(1, _BATCH_ELEMENTS // max(1, steps))
    out = np.empty((len(stream_ids), scheme.n + 1))
    for start in range(0, len(stream_ids), rows_per_batch):
        ids = stream_ids[start:start + rows_per_batch]
        x0s = np.empty(len(ids))
        noise = np.empty((len(ids), steps))
        for r, sid in enumerate(ids):
            rng = make_rng(scheme.seed, sid)
            x0s[r] = draw_stationary(model, theta, rng) if x0 is None else float(x0)
            noise[r] = rng.standard_normal(steps)
        if scheme.n == 0:
            block = x0s[:, None]
        elif exact:
            block = _ou_rows(model, theta, x0s, noise, scheme.delta)
        else:
            block = euler_rows(model, theta, x0s, noise, dt, record_every=m)
        out[start:start + len(ids)] = block
    bad = ~model.in_state_space(out)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise SimulationError(f"path for stream {stream_ids[row]} left the state space at index {col}",
                              index=int(col))
    return out


def simulate_path(model: DiffusionModel, theta, scheme: SamplingScheme, method: str = "auto",
                  burn_in: float = 0.0, x0=None) -> SamplePath:
    """One path with stationary start, or from ``x0`` after ``burn_in`` time units (diagnostics)."""
    exact = _uses_exact(model, method)
    if burn_in > 0:
        if x0 is None:
            raise ValueError("burn_in requires an explicit x0")
        n_burn = int(math.ceil(burn_in / scheme.delta))
        long = SamplingScheme(scheme.n + n_burn, scheme.delta, scheme.substeps, scheme.seed, scheme.stream_id)
        values = simulate_paths(model, theta, long, method=method, x0=x0)[0, n_burn:]
    else:
        values = simulate_paths(model, theta, scheme, method=method, x0=x0)[0]
    return SamplePath(scheme, values, "exact" if exact else "euler",
                      {"n_delta": scheme.n_delta, "n_delta3": scheme.n_delta3, "burn_in": burn_in})


def propagate(model: DiffusionModel, theta, x0, t, rng: np.random.Generator,
              substeps_per_unit: float = 200.0, method: str = "auto") -> np.ndarray:
    """Draw X_t given X_0 = x0 (arrays broadcast), exact for OU, Euler otherwise.

    ``t`` may vary per row; Euler then uses the same number of steps for all
    rows with row-specific step sizes.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x0.shape)
    if _uses_exact(model, method):
        p = model.params(theta)
        e = np.exp(-p["kappa"] * t)
        var = p["xi"] ** 2 / (2 * p["kappa"]) * (1 - e * e)
        return p["eta"] + (x0 - p["eta"]) * e + np.sqrt(var) * rng.standard_normal(x0.shape)
    n_steps = max(1, int(math.ceil(float(np.max(t)) * substeps_per_unit)))
    p = model.params(theta)
    lo, hi = model.state_space
    dt = t / n_steps
    sq = np.sqrt(dt)
    x = x0.copy()
    for _ in range(n_steps):
        xc = np.clip(x, lo, hi)
        x = x + model._a(xc, p) * dt + model._b(xc, p) * sq * rng.standard_normal(x.shape)
    return x


def conditional_expectation_mc(model: DiffusionModel, theta, f: SmoothFunction, x: float, t: float,
                               n_rep: int, rng: np.random.Generator,
                               substeps_per_unit: float = 200.0) -> tuple[float, float]:
    """Monte Carlo estimate of P_t f(x) = E[f(X_t) | X_0 = x] with its standard error."""
    if not t > 0:
        raise ValueError("t must be positive")
    model.check_state(x)
    if isinstance(f, SmoothFunction) and f.is_constant:
        return float(f._const), 0.0
    xt = propagate(model, theta, np.full(n_rep, float(x)), t, rng, substeps_per_unit)
    vals = f(xt)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else float("nan")


def increment_moment(model: DiffusionModel, theta, delta: float, k: float, n_paths: int = 20000,
                     seed: int = 0, substeps: int = 20) -> tuple[float, float]:
    """E|X_{t+delta} - X_t|^k under stationarity, with its standard error."""
    scheme = SamplingScheme(1, delta, substeps, seed)
    paths = simulate_paths(model, theta, scheme, stream_ids=range(n_paths))
    inc = np.abs(paths[:, 1] - paths[:, 0]) ** k
    return float(inc.mean()), float(inc.std(ddof=1) / math.sqrt(n_paths))


