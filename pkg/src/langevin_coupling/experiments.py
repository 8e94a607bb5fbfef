"""Contraction, Lyapunov drift and propagation-of-chaos experiments.

Each runner returns plain result objects; :func:`write_csv` and
:func:`write_summary` turn them into the on-disk artifacts.  All floats are
written with 17 significant digits so reruns with the same seed reproduce
the files byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import semimetric as sm
from .constants import MP, admissible_interaction_bound, rate_at, to_jsonable

SCHEMA_VERSION = "v1"

CONTRACTION_COLUMNS = ("t", "E_rho", "SE_rho", "W1", "W2", "E_H_1", "E_H_2")
DRIFT_COLUMNS = ("t", "E_H", "SE", "slope_est", "bound", "margin_SE")
CHAOS_COLUMNS = ("N", "t", "W1", "SE", "W1_sqrtN")


class ConfigRejected(ValueError):
    """The run configuration violates a precondition of the experiment."""


class FitRejected(ValueError):
    """Too few usable points for a rate fit."""


@dataclass
class TimeSeries:
    times: np.ndarray
    columns: dict
    replica_count: int = 0
    excluded_count: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        for k, v in self.columns.items():
            if v.shape != self.times.shape:
                raise ValueError(f"column {k!r} has length {v.size}, expected {self.times.size}")

    def __getitem__(self, name):
        if name == "t":
            return self.times
        return self.columns[name]


@dataclass
class RateFit:
    rate: float
    intercept: float
    r_squared: float
    window: tuple
    rate_se: float = 0.0
    n_points: int = 0


def fit_exponential_rate(series, column, window=None, min_points=8):
    """OLS of log(value) on t inside ``window``; rate = -slope.

    Defaults to the second half of the horizon.  A non-positive value cuts the
    window just before it; fewer than ``min_points`` usable points rejects the fit.
    """
    t = series.times
    y = series[column]
    if window is None:
        window = (t[-1] / 2.0, t[-1])
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12) & np.isfinite(y)
    tt, yy = t[sel], y[sel]
    bad = np.flatnonzero(yy <= 0)
    if bad.size:
        tt, yy = tt[: bad[0]], yy[: bad[0]]
    if tt.size < min_points:
        raise FitRejected(f"only {tt.size} positive points in window {window}; need {min_points}")
    ly = np.log(yy)
    tm = tt.mean()
    sxx = np.sum((tt - tm) ** 2)
    slope = float(np.sum((tt - tm) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * tm)
    resid = ly - (intercept + slope * tt)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    dof = tt.size - 2
    se = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if dof > 0 else math.inf
    return RateFit(-slope, intercept, r2, (float(tt[0]), float(tt[-1])), se, int(tt.size))


# --- helpers ----------------------------------------------------------------------------

def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    n = vals.size
    if n == 0:
        return math.nan, math.nan
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def _record_steps(cfg):
    n = cfg.n_steps
    steps = list(range(0, n + 1, int(cfg.record_every)))
    if steps[-1] != n:
        steps.append(n)
    return steps


def _require_seed(cfg):
    if cfg.seed is None:
        raise ConfigRejected("a seed is required (config or --seed)")
    return cfg.validate()


# --- contraction ---------------------------------------------------------------------

@dataclass
class ContractionResult:
    series: TimeSeries
    fit: RateFit
    tau: object
    xi: float
    coupling_distance: np.ndarray = None


def run_contraction(params, dc, pot_U, pot_W, cfg, init_1, init_2, profile=None, w_every=5,
                    fit_window=None, progress=None):
    """Evolve M coupled nonlinear pairs and fit the decay of E rho.

    W1 and W2 between the two marginal clouds are computed exactly every
    ``w_every`` records (blank in between).
    """
    cfg = _require_seed(cfg)
    tau = rate_at(dc, pot_W.L_W)
    if not tau > 0:
        bound = admissible_interaction_bound(params, dc)
        raise ConfigRejected(
            f"contraction rate tau = {MP.nstr(tau, 6)} <= 0 for L_W = {pot_W.L_W}; "
            f"admissible_interaction_bound gives L_W < {MP.nstr(bound, 6)}")
    profile = profile or sm.DistanceProfile.from_constants(dc)
    xi = cfg.xi if cfg.xi is not None else 1e-2 * float(dc.R1)
    cfg = cfg.with_(xi=xi)
    cloud = dyn.coupled_from_inits(init_1, init_2, int(cfg.n_replicas), cfg.seed)
    gamma, lam, alpha, R1 = float(dc.gamma), float(params.lam), float(dc.alpha), float(dc.R1)
    rec = _record_steps(cfg)
    cols = {k: [] for k in CONTRACTION_COLUMNS[1:]}
    coupling = []
    times = []
    step = 0
    for j, target in enumerate(rec):
        while step < target:
            dyn.step_pair_coupled(cloud, pot_U, pot_W, alpha, R1, cfg, step)
            step += 1
        dyn.check_divergence(cloud)
        live = cloud.active.astype(bool)
        x, v, xt, vt = cloud.x[live], cloud.v[live], cloud.xt[live], cloud.vt[live]
        rho = sm.rho_eval(x, v, xt, vt, profile, pot_U, gamma, lam)
        m, se = _mean_se(rho)
        times.append(target * cfg.dt)
        cols["E_rho"].append(m)
        cols["SE_rho"].append(se)
        cols["E_H_1"].append(float(np.mean(sm.lyapunov_H(x, v, pot_U, gamma, lam))))
        cols["E_H_2"].append(float(np.mean(sm.lyapunov_H(xt, vt, pot_U, gamma, lam))))
        coupling.append(float(np.mean(np.linalg.norm(x - xt, axis=1) + np.linalg.norm(v - vt, axis=1))))
        if j % w_every == 0 or j == len(rec) - 1:
            P, Q = np.hstack([x, v]), np.hstack([xt, vt])
            cols["W1"].append(sm.wasserstein_subsampled(P, Q, "L1", seed=cfg.seed, paired=True))
            cols["W2"].append(sm.wasserstein_subsampled(P, Q, "L2_squared", seed=cfg.seed, paired=True))
        else:
            cols["W1"].append(math.nan)
            cols["W2"].append(math.nan)
        if progress:
            progress(times[-1], m)
    series = TimeSeries(times, cols, replica_count=cloud.n, excluded_count=cloud.excluded)
    fit = fit_exponential_rate(series, "E_rho", fit_window)
    return ContractionResult(series, fit, tau, xi, np.asarray(coupling))


# --- Lyapunov drift ------------------------------------------------------------------

@dataclass
class DriftResult:
    series: TimeSeries
    passed: bool
    terminal_ok: bool
    terminal_bound: float
    min_margin_SE: float
    B: float
    gamma: float


def run_lyapunov_drift(params, dc, pot_U, pot_W, cfg, init, slope_halfwidth=2):
    """Simulate the nonlinear ensemble and audit dE H/dt <= B - gamma E H.

    The slope at each record time is the mean of per-replica least-squares
    slopes over the neighbouring records, which gives it an honest standard
    error.  PASS iff bound - slope >= -3 SE everywhere.
    """
    cfg = _require_seed(cfg)
    M = int(cfg.n_replicas)
    x0, v0 = init.sample(M, cfg.seed, stream=0)
    cloud = dyn.ParticleCloud(x0, v0, group=M)
    gamma, lam, B = float(dc.gamma), float(params.lam), float(dc.B)
    rec = _record_steps(cfg)
    H = np.empty((len(rec), M))
    times = np.array([s * cfg.dt for s in rec])
    step = 0
    for j, target in enumerate(rec):
        while step < target:
            dyn.step_particle_system(cloud, pot_U, pot_W, cfg, step)
            step += 1
        dyn.check_divergence(cloud)
        H[j] = sm.lyapunov_H(cloud.x, cloud.v, pot_U, gamma, lam)
    live = cloud.active.astype(bool)
    H = H[:, live]
    EH = H.mean(axis=1)
    SE = H.std(axis=1, ddof=1) / math.sqrt(H.shape[1])
    slope = np.empty(len(rec))
    slope_se = np.empty(len(rec))
    for j in range(len(rec)):
        lo, hi = max(0, j - slope_halfwidth), min(len(rec), j + slope_halfwidth + 1)
        tt = times[lo:hi]
        tc = tt - tt.mean()
        per = (tc @ (H[lo:hi] - H[lo:hi].mean(axis=0))) / np.sum(tc * tc)
        slope[j], slope_se[j] = _mean_se(per)
    bound = B - gamma * EH
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(slope_se > 0, (bound - slope) / slope_se, np.inf)
    T = times[-1]
    terminal_bound = B / gamma + EH[0] * math.exp(-gamma * T) + 3.0 * SE[-1]
    terminal_ok = bool(EH[-1] <= terminal_bound)
    cols = {"E_H": EH, "SE": SE, "slope_est": slope, "bound": bound, "margin_SE": margin}
    series = TimeSeries(times, cols, replica_count=M, excluded_count=cloud.excluded)
    passed = bool(np.all(margin >= -3.0))
    return DriftResult(series, passed, terminal_ok, terminal_bound, float(np.min(margin)), B, gamma)


# --- propagation of chaos --------------------------------------------------------------

@dataclass
class ChaosScalingResult:
    n_values: list
    t_eval: list
    w1_values: np.ndarray
    w1_se: np.ndarray
    w2sq_values: np.ndarray
    w2sq_se: np.ndarray
    coupling_distance: np.ndarray
    slope_w1: float
    slope_w2sq: float
    uniformity: np.ndarray = field(default=None)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ValueError("n_values must be strictly increasing")
        self.uniformity = np.max(self.w1_values, axis=1) / np.min(self.w1_values, axis=1)

    @property
    def max_w1_sqrtN(self):
        return np.max(self.w1_values * np.sqrt(np.asarray(self.n_values))[:, None], axis=1)


def loglog_slope(n_values, values):
    """Average over columns of the OLS slope of log(value) against log N."""
    ln = np.log(np.asarray(n_values, dtype=float))
    slopes = [np.polyfit(ln, np.log(values[:, j]), 1)[0] for j in range(values.shape[1])]
    return float(np.mean(slopes))


def _resampled_distances(P, Q, seed, size, repeats):
    """W1 and W2^2 on paired subsamples: (mean, resample SE) for each."""
    rng = np.random.default_rng(seed)
    w1, w2 = [], []
    n = P.shape[0]
    for _ in range(repeats if n > size else 1):
        idx = np.sort(rng.choice(n, size, replace=False)) if n > size else np.arange(n)
        w1.append(sm.wasserstein_exact(P[idx], Q[idx], "L1"))
        w2.append(sm.wasserstein_exact(P[idx], Q[idx], "L2_squared") ** 2)
    m1, s1 = _mean_se(w1)
    m2, s2 = _mean_se(w2)
    return m1, s1, m2, s2


def run_chaos(params, dc, pc, pot_U, pot_W, cfg, init, n_sweep, t_eval, total_pairs=32768,
              min_replicas=16, reference_size=4096, sample_size=sm.EXACT_LIMIT,
              repeats=sm.SUBSAMPLE_REPEATS, progress=None):
    """Coupled particle systems vs nonlinear copies for each N in ``n_sweep``.

    Each N uses max(min_replicas, total_pairs // N) independent replicas.  The
    nonlinear side feels a disjoint reference ensemble of ``reference_size``
    replicas.  Distances are exact assignments between the pooled particle
    side and the pooled nonlinear side on paired subsamples.
    """
    cfg = _require_seed(cfg)
    n_sweep = [int(n) for n in n_sweep]
    if len(n_sweep) < 4:
        raise ConfigRejected("the N sweep needs at least 4 values")
    t_eval = sorted(float(t) for t in t_eval)
    steps_eval = [int(round(t / cfg.dt)) for t in t_eval]
    if any(abs(s * cfg.dt - t) > 1e-9 * max(1.0, t) for s, t in zip(steps_eval, t_eval)):
        raise ConfigRejected("every evaluation time must be a multiple of dt")
    alpha, R1 = float(dc.alpha), float(pc.R1_part)
    xi = cfg.xi if cfg.xi is not None else 1e-2 * R1
    cfg = cfg.with_(xi=xi)
    w1 = np.empty((len(n_sweep), len(t_eval)))
    w1se = np.empty_like(w1)
    w2 = np.empty_like(w1)
    w2se = np.empty_like(w1)
    zw = np.empty_like(w1)
    for a, N in enumerate(n_sweep):
        R = max(min_replicas, total_pairs // N)
        run_seed = (cfg.seed + 1_000_003 * N) % 2**64
        rcfg = cfg.with_(seed=run_seed)
        x0, v0 = init.sample(R * N, run_seed, stream=0)
        cloud = dyn.CoupledCloud(x0, v0, x0, v0, mode="particle_vs_nonlinear", group=N)
        rx, rv = init.sample(reference_size, run_seed, stream=1)
        ref = dyn.ParticleCloud(rx, rv, group=reference_size)
        step = 0
        for b, target in enumerate(steps_eval):
            while step < target:
                dyn.step_coupled_chaos(cloud, ref, pot_U, pot_W, alpha, R1, rcfg, step)
                step += 1
            dyn.check_divergence(cloud, ref)
            live = cloud.active.astype(bool)
            P, Q = cloud.phase()
            P, Q = P[live], Q[live]
            w1[a, b], w1se[a, b], w2[a, b], w2se[a, b] = _resampled_distances(
                P, Q, run_seed, sample_size, repeats)
            d = P.shape[1] // 2
            zw[a, b] = float(np.mean(np.linalg.norm(P[:, :d] - Q[:, :d], axis=1)
                                     + np.linalg.norm(P[:, d:] - Q[:, d:], axis=1)))
            if progress:
                progress(N, t_eval[b], w1[a, b])
    return ChaosScalingResult(n_sweep, t_eval, w1, w1se, w2, w2se, zw,
                              loglog_slope(n_sweep, w1), loglog_slope(n_sweep, w2))


# --- output ----------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x) if math.isinf(x) else format(x, ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def series_rows(series, header):
    cols = [series[h] for h in header]
    return list(zip(*cols))


def chaos_rows(res):
    rows = []
    for a, N in enumerate(res.n_values):
        for b, t in enumerate(res.t_eval):
            rows.append((N, t, res.w1_values[a, b], res.w1_se[a, b], res.w1_values[a, b] * math.sqrt(N)))
    return rows


def write_summary(path, summary):
    doc = {"schema": SCHEMA_VERSION}
    doc.update(summary)
    with open(path, "w") as fh:
        json.dump(to_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc
