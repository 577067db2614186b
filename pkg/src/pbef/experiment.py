"""Replication studies over high-frequency sampling schedules.

A study simulates R independent stationary paths for each (n, delta) entry
of a schedule, estimates theta on each path and compares the spread of
sqrt(n delta)(theta_hat - theta0) with the predicted asymptotic variance.
Each replication draws from its own counter-based stream, so results do not
depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e
from scipy import stats

from .errors import ConfigurationError, PbefError
from .estimator import (PredictorSpec, SolverOptions, gamma_limit, predictor_from_config,
                        projection_coefficients, solve_onelag, solve_simple)
from .functions import SmoothFunction
from .model import (DiffusionModel, OrnsteinUhlenbeck, generator_iterate, invariant_moment,
                    model_from_config)
from .potential import PotentialMCConfig, avar_onelag, avar_simple, clt_variance
from .simulate import SamplingScheme, increment_moment, simulate_path

ESTIMATOR_KINDS = ("simple", "onelag")
_STREAMS_PER_ENTRY = 1_000_000


def schedule_preset(c: float, ns) -> list[tuple[int, float]]:
    """Entries (n, c n^{-1/2}): n delta grows like sqrt(n) while n delta^3 shrinks like n^{-1/2}."""
    return [(int(n), float(c) / math.sqrt(n)) for n in ns]


@dataclass
class ExperimentConfig:
    """Everything needed to rerun a study; mirrors the JSON config file."""

    model: dict
    predictor: dict = field(default_factory=lambda: {"name": "x", "q": 1})
    estimator: str = "onelag"
    schedule: list = field(default_factory=lambda: [(10_000, 0.01)])
    replications: int = 100
    seed: int = 0
    substeps: int = 10
    avar: dict = field(default_factory=dict)
    theta_init: list | None = None
    coeff_method: str = "auto"
    feasible_coverage: bool = True
    clt_rtol: float = 0.15
    out_dir: str = "pbef-out"

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_KINDS:
            raise ConfigurationError(f"estimator must be one of {ESTIMATOR_KINDS}")
        if self.replications < 1:
            raise ConfigurationError("replications must be at least 1")
        if isinstance(self.schedule, dict):
            self.schedule = schedule_preset(self.schedule["c"], self.schedule["n"])
        self.schedule = [(int(n), float(d)) for n, d in self.schedule]
        if not self.schedule:
            raise ConfigurationError("schedule is empty")
        for n, d in self.schedule:
            if n < 2 or not d > 0:
                raise ConfigurationError(f"invalid schedule entry ({n}, {d})")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        if "model" not in d:
            raise ConfigurationError("config needs a 'model' section")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = [list(e) for e in self.schedule]
        return d

    def build(self) -> tuple[DiffusionModel, np.ndarray, PredictorSpec]:
        model, theta0 = model_from_config(self.model)
        spec = predictor_from_config(self.predictor)
        want_q = 0 if self.estimator == "simple" else 1
        if spec.q != want_q:
            spec = PredictorSpec(spec.f, want_q, spec.label)
        return model, np.asarray(theta0.values), spec

    def potential_config(self) -> tuple[PotentialMCConfig, str]:
        d = dict(self.avar)
        method = d.pop("method", "auto")
        return PotentialMCConfig(**d), method

    def regime(self) -> list[dict]:
        """n delta and n delta^3 per entry; n delta^3 >= 1 is outside the CLT regime."""
        return [{"n": n, "delta": d, "n_delta": n * d, "n_delta3": n * d**3, "regime_ok": n * d**3 < 1}
                for n, d in self.schedule]


@dataclass
class ReplicationResult:
    schedule_index: int
    replication: int
    theta_hat: list
    converged: bool
    fallback_used: bool
    std_error: list
    runtime: float = field(default=float("nan"), compare=False)
    error: str = ""


@dataclass
class ScheduleSummary:
    n: int
    delta: float
    n_delta: float
    n_delta3: float
    regime_ok: bool
    n_ok: int
    n_failed: int
    convergence_rate: float
    fallback_rate: float
    mean_error: list
    mean_error_stderr: list
    emp_cov: list
    coverage_oracle: list
    coverage_feasible: list
    skewness: list
    excess_kurtosis: list
    ks_distance: list


@dataclass
class StudyReport:
    config: ExperimentConfig
    names: list
    theta0: list
    predicted_avar: list
    replications: list
    summaries: list
    avar_notes: str = ""


# -- single replication --------------------------------------------------

def _replication(model, theta0, spec, cfg: ExperimentConfig, idx: int, r: int) -> ReplicationResult:
    n, delta = cfg.schedule[idx]
    scheme = SamplingScheme(n, delta, cfg.substeps, cfg.seed, idx * _STREAMS_PER_ENTRY + r)
    start = cfg.theta_init if cfg.theta_init is not None else theta0
    t0 = time.perf_counter()
    try:
        path = simulate_path(model, theta0, scheme)
        if cfg.estimator == "simple":
            res = solve_simple(model, path, spec, start, theta_star=start)
        else:
            res = solve_onelag(model, path, spec, start, SolverOptions(coeff_method=cfg.coeff_method))
    except PbefError as exc:
        d = len(theta0)
        return ReplicationResult(idx, r, [float("nan")] * d, False, False, [float("nan")] * d,
                                 time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    th = np.asarray(res.theta_hat.values, dtype=float)
    z = math.sqrt(n * delta) * (th - theta0)
    return ReplicationResult(idx, r, th.tolist(), bool(res.converged or res.fallback_used), bool(res.fallback_used),
                             z.tolist(), time.perf_counter() - t0)


def _worker(cfg_dict: dict, idx: int, reps: list) -> list:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    model, theta0, spec = cfg.build()
    return [_replication(model, theta0, spec, cfg, idx, r) for r in reps]


def run_replications(cfg: ExperimentConfig, jobs: int = 1) -> list[ReplicationResult]:
    """All replications for all schedule entries, sorted by (entry, replication)."""
    tasks = [(i, list(range(c, min(cfg.replications, c + 25))))
             for i in range(len(cfg.schedule)) for c in range(0, cfg.replications, 25)]
    if jobs <= 1:
        model, theta0, spec = cfg.build()
        out = [_replication(model, theta0, spec, cfg, i, r) for i, reps in tasks for r in reps]
    else:
        d = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_worker, d, i, reps) for i, reps in tasks]
            out = [res for fut in futures for res in fut.result()]
    return sorted(out, key=lambda x: (x.schedule_index, x.replication))


# -- predicted variance and summaries ------------------------------------

def predicted_avar(model, theta, spec, cfg: ExperimentConfig):
    """Asymptotic covariance matrix (d x d) for the configured estimator."""
    pcfg, method = cfg.potential_config()
    if spec.q == 0:
        rep = avar_simple(model, theta, spec, pcfg, method)
        return np.array([[rep.avar]]), rep
    rep = avar_onelag(model, theta, spec, pcfg, method)
    return np.asarray(rep.avar), rep


def _feasible_avar(model, spec, cfg, theta_hat):
    try:
        if cfg.avar.get("method", "auto") == "mc" or not (model.is_polynomial and spec.f.poly is not None):
            return None
        return predicted_avar(model, theta_hat, spec, cfg)[0]
    except PbefError:
        return None


def summarize_entry(cfg, idx, reps, theta0, avar, model=None, spec=None) -> ScheduleSummary:
    n, delta = cfg.schedule[idx]
    reg = cfg.regime()[idx]
    ok = [r for r in reps if r.converged]
    d = len(theta0)
    nan = [float("nan")] * d
    if len(ok) == 0:
        return ScheduleSummary(n, delta, n * delta, n * delta**3, reg["regime_ok"], 0, len(reps), 0.0,
                               float("nan"), nan, nan, [nan] * d, nan, nan, nan, nan, nan)
    z = np.array([r.std_error for r in ok])
    th = np.array([r.theta_hat for r in ok])
    k = len(ok)
    mean = z.mean(axis=0)
    se = z.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.full(d, np.nan)
    cov = np.atleast_2d(np.cov(z, rowvar=False)) if k > 1 else np.full((d, d), np.nan)
    half = 1.96 * np.sqrt(np.diag(avar) / (n * delta))
    cover_o = np.mean(np.abs(th - theta0) <= half, axis=0)
    cover_f = nan
    if cfg.feasible_coverage and model is not None:
        hits, used = np.zeros(d), 0
        for t in th:
            a = _feasible_avar(model, spec, cfg, t)
            if a is None:
                continue
            used += 1
            hits += np.abs(t - theta0) <= 1.96 * np.sqrt(np.diag(a) / (n * delta))
        cover_f = (hits / used).tolist() if used else nan
    if k > 2:
        skew = stats.skew(z, axis=0).tolist()
        kurt = stats.kurtosis(z, axis=0).tolist()
        sd = np.sqrt(np.diag(avar))
        ks = [float(stats.kstest(z[:, j] / sd[j], "norm").statistic) for j in range(d)]
    else:
        skew = kurt = ks = nan
    return ScheduleSummary(n, delta, n * delta, n * delta**3, reg["regime_ok"], k, len(reps) - k,
                           k / len(reps), float(np.mean([r.fallback_used for r in reps])), mean.tolist(),
                           se.tolist(), cov.tolist(), cover_o.tolist(), list(cover_f), skew, kurt, ks)


def run_estimation_study(cfg: ExperimentConfig, jobs: int = 1) -> StudyReport:
    """Replicated estimation with predicted AVAR, coverage and normality diagnostics."""
    model, theta0, spec = cfg.build()
    avar, rep = predicted_avar(model, theta0, spec, cfg)
    reps = run_replications(cfg, jobs)
    summaries = []
    for i in range(len(cfg.schedule)):
        entry = [r for r in reps if r.schedule_index == i]
        if entry and not any(r.converged for r in entry):
            raise PbefError(f"every replication failed for schedule entry {i}: {entry[0].error}")
        summaries.append(summarize_entry(cfg, i, entry, theta0, avar, model, spec))
    return StudyReport(cfg, list(model.free), theta0.tolist(), avar.tolist(), reps, summaries, rep.method_notes)


# -- LLN and CLT checks --------------------------------------------------

def _vn_values(model, theta0, g, cfg, idx):
    n, delta = cfg.schedule[idx]
    vals = []
    for r in range(cfg.replications):
        scheme = SamplingScheme(n, delta, cfg.substeps, cfg.seed, idx * _STREAMS_PER_ENTRY + r)
        try:
            path = simulate_path(model, theta0, scheme)
        except PbefError:
            vals.append(float("nan"))
            continue
        vals.append(float(np.mean(g(path.values[1:]))))
    return np.array(vals)


def run_lln_check(cfg: ExperimentConfig, f: SmoothFunction | None = None) -> list[dict]:
    """Mean of V_n(f) = n^{-1} sum f(X_i) across replications against mu0(f); pass within 4 stderr."""
    model, theta0, spec = cfg.build()
    f = f or spec.f
    target = invariant_moment(model, theta0, f)
    rows = []
    for i, (n, delta) in enumerate(cfg.schedule):
        v = _vn_values(model, theta0, f, cfg, i)
        good = v[np.isfinite(v)]
        mean = float(good.mean()) if good.size else float("nan")
        se = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else float("nan")
        dev = abs(mean - target)
        passed = bool(dev == 0.0 or (np.isfinite(se) and dev <= 4 * se))
        rows.append({"n": n, "delta": delta, "target": target, "mean": mean, "stderr": se, "deviation": dev,
                     "failed": int(v.size - good.size), "passed": passed})
    return rows


def run_clt_check(cfg: ExperimentConfig, g: SmoothFunction | None = None) -> list[dict]:
    """Empirical variance of sqrt(n delta) V_n(g*) against the potential prediction.

    Entries with n delta^3 >= 1 are flagged and carry no verdict.
    """
    model, theta0, spec = cfg.build()
    g = g or spec.f
    gc = g - invariant_moment(model, theta0, g)
    pcfg, method = cfg.potential_config()
    pred = clt_variance(model, theta0, gc, pcfg)
    target = pred.diagnostics.get("form_pairing_exact", pred.value) if method != "mc" else pred.value
    rows = []
    for i, reg in enumerate(cfg.regime()):
        v = _vn_values(model, theta0, gc, cfg, i)
        z = math.sqrt(reg["n_delta"]) * v[np.isfinite(v)]
        var = float(np.var(z, ddof=1)) if z.size > 1 else float("nan")
        rel = abs(var - target) / target if target > 0 else (0.0 if var == 0 else float("inf"))
        row = {**reg, "predicted": target, "empirical_var": var, "rel_error": rel,
               "skewness": float(stats.skew(z)) if z.size > 2 and var > 0 else float("nan"),
               "excess_kurtosis": float(stats.kurtosis(z)) if z.size > 2 and var > 0 else float("nan"),
               "max_abs": float(np.max(np.abs(z))) if z.size else float("nan")}
        row["passed"] = (bool(rel <= cfg.clt_rtol) if reg["regime_ok"] else None)
        rows.append(row)
    return rows


# -- deterministic diagnostics --------------------------------------------

def gamma_identification_grid(model, theta0, spec, box, n: int = 50) -> dict:
    """Norm of gamma(theta0; theta) on an n x n grid over ``box`` that has theta0 as a node.

    ``box`` is ((lo1, hi1), (lo2, hi2)). The grid is shifted so theta0 lies on
    it; the root cell is theta0's node and every other node is off-root.
    """
    theta0 = np.asarray(theta0, dtype=float)
    axes = []
    for k, (lo, hi) in enumerate(box):
        if not lo < theta0[k] < hi:
            raise ConfigurationError("theta0 must lie inside the box")
        h = (hi - lo) / (n - 1)
        j = int(round((theta0[k] - lo) / h))
        j = min(max(j, 0), n - 1)
        axes.append(theta0[k] + h * (np.arange(n) - j))
    norms = np.empty((n, n))
    for i, a in enumerate(axes[0]):
        for j, b in enumerate(axes[1]):
            try:
                norms[i, j] = np.linalg.norm(gamma_limit(model, theta0, [a, b], spec))
            except PbefError:
                norms[i, j] = np.nan
    root = tuple(int(np.argmin(np.abs(ax - t))) for ax, t in zip(axes, theta0))
    off = norms.copy()
    off[root] = np.nan
    return {"axes": axes, "norms": norms, "root_index": root, "root_norm": float(norms[root]),
            "min_off_root": float(np.nanmin(off)), "argmin_off_root": np.unravel_index(np.nanargmin(off), off.shape)}


def increment_slope_check(model, theta, deltas, ks=(2, 4), n_paths: int = 20_000, seed: int = 0,
                          substeps: int = 20) -> dict:
    """Log-log slope of E|X_delta - X_0|^k over ``deltas``; small-time scaling predicts k/2."""
    out = {}
    logd = np.log(np.asarray(deltas, dtype=float))
    for k in ks:
        m = np.array([increment_moment(model, theta, d, k, n_paths, seed, substeps)[0] for d in deltas])
        slope = float(np.polyfit(logd, np.log(m), 1)[0])
        out[k] = {"moments": m.tolist(), "slope": slope, "passed": slope >= k / 2 - 0.15}
    return out


def ou_conditional_expectation(model: OrnsteinUhlenbeck, theta, f: SmoothFunction, x: float, t: float,
                               nodes: int = 40) -> float:
    """E[f(X_t) | X_0 = x] from the exact Gaussian transition by Gauss-Hermite quadrature."""
    mean, var = model.transition_mean_var(x, t, theta)
    z, w = hermite_e.hermegauss(nodes)
    return float(np.dot(w, f(mean + math.sqrt(var) * z)) / math.sqrt(2 * math.pi))


def generator_expansion_check(model: OrnsteinUhlenbeck, theta, f: SmoothFunction, x: float, deltas) -> dict:
    """Remainder of the second-order generator expansion of E[f(X_delta)|x] and its halving ratios."""
    terms = [float(generator_iterate(model, theta, f, x, i)) for i in range(3)]
    rem = []
    for d in deltas:
        exact = ou_conditional_expectation(model, theta, f, x, d)
        rem.append(abs(exact - (terms[0] + d * terms[1] + 0.5 * d * d * terms[2])))
    rem = np.array(rem)
    return {"deltas": list(deltas), "remainders": rem.tolist(), "ratios": (rem[:-1] / rem[1:]).tolist()}


def coefficient_expansion_check(model, theta, spec, deltas) -> dict:
    """|a1_exact(delta) - (1 + delta K_f)| at delta and delta/2; ratios near 4 mean an O(delta^2) remainder."""
    out = []
    for d in deltas:
        r = []
        for dd in (d, d / 2):
            exact = projection_coefficients(model, theta, spec, dd, "exact_moments").a[1]
            approx = projection_coefficients(model, theta, spec, dd, "expansion_order1").a[1]
            r.append(abs(exact - approx))
        out.append({"delta": d, "remainder": r[0], "remainder_half": r[1], "ratio": r[0] / r[1]})
    return {"rows": out}


# -- reports ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def replication_header(names) -> list[str]:
    return (["schedule_index", "replication"] + [f"theta_hat_{n}" for n in names] + ["converged", "fallback_used"]
            + [f"std_error_{n}" for n in names] + ["error"])


def summary_header(names) -> list[str]:
    cols = ["schedule_index", "n", "delta", "n_delta", "n_delta3", "regime_ok", "n_ok", "n_failed",
            "convergence_rate", "fallback_rate"]
    for key in ("mean_error", "mean_error_stderr", "coverage_oracle", "coverage_feasible", "skewness",
                "excess_kurtosis", "ks_distance"):
        cols += [f"{key}_{n}" for n in names]
    cols += [f"emp_cov_{a}_{b}" for a in names for b in names]
    return cols


def emit_report(report: StudyReport, out_dir, fmt: str = "csv") -> list[Path]:
    """Write replications and per-entry summaries; returns the written paths.

    ``csv`` gives replications.csv, summary.csv and summary.json; ``json``
    gives a single report.json. Runtimes are excluded so outputs are
    byte-identical across reruns.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    names = report.names
    meta = {"config": report.config.to_dict(), "names": names, "theta0": report.theta0,
            "predicted_avar": report.predicted_avar, "avar_notes": report.avar_notes}
    summaries = [asdict(s) for s in report.summaries]
    if fmt == "json":
        path = out / "report.json"
        reps = [{k: v for k, v in asdict(r).items() if k != "runtime"} for r in report.replications]
        path.write_text(json.dumps({**meta, "summaries": summaries, "replications": reps}, indent=2,
                                   sort_keys=True, default=float) + "\n")
        return [path]
    if fmt != "csv":
        raise ConfigurationError(f"unknown format {fmt!r}")
    rpath, spath, jpath = out / "replications.csv", out / "summary.csv", out / "summary.json"
    with rpath.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(replication_header(names))
        for r in report.replications:
            w.writerow([r.schedule_index, r.replication, *map(_fmt, r.theta_hat), r.converged, r.fallback_used,
                        *map(_fmt, r.std_error), r.error])
    with spath.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_header(names))
        for i, s in enumerate(report.summaries):
            row = [i, s.n, s.delta, s.n_delta, s.n_delta3, s.regime_ok, s.n_ok, s.n_failed, s.convergence_rate,
                   s.fallback_rate]
            for key in ("mean_error", "mean_error_stderr", "coverage_oracle", "coverage_feasible", "skewness",
                        "excess_kurtosis", "ks_distance"):
                row += list(getattr(s, key))
            row += [c for line in s.emp_cov for c in line]
            w.writerow([_fmt(v) for v in row])
    jpath.write_text(json.dumps({**meta, "summaries": summaries}, indent=2, sort_keys=True, default=float) + "\n")
    return [rpath, spath, jpath]


def _parse(v: str):
    return v == "True"


def read_replications_csv(path) -> list[ReplicationResult]:
    """Inverse of the replication part of :func:`emit_report`."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = [h[len("theta_hat_"):] for h in header if h.startswith("theta_hat_")]
        d = len(names)
        out = []
        for row in reader:
            out.append(ReplicationResult(int(row[0]), int(row[1]), [float(v) for v in row[2:2 + d]],
                                         _parse(row[2 + d]), _parse(row[3 + d]),
                                         [float(v) for v in row[4 + d:4 + 2 * d]], float("nan"), row[4 + 2 * d]))
    return out


__all__ = [
    "ExperimentConfig", "ReplicationResult", "ScheduleSummary", "StudyReport", "schedule_preset",
    "run_replications", "run_estimation_study", "predicted_avar", "summarize_entry", "run_lln_check",
    "run_clt_check", "gamma_identification_grid", "increment_slope_check", "ou_conditional_expectation",
    "generator_expansion_check", "coefficient_expansion_check", "emit_report", "read_replications_csv",
]
