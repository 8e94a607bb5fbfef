"""Invariant battery behind the ``check`` subcommand.

Each check returns a :class:`CheckResult`; :func:`run_battery` runs them all
for one model and reports a table of PASS/FAIL rows.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import dynamics as dyn
from . import potentials as pots
from . import semimetric as sm
from .constants import derive_base_constants, derive_particle_constants, verify_constraint_ledger


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def as_dict(self):
        return {"suite": self.suite, "name": self.name, "passed": bool(self.passed),
                "value": float(self.value), "tolerance": float(self.tolerance), "detail": self.detail}


def gauss_oracle_f(profile, s, panels=256, order=16, inner_panels=32):
    """Composite Gauss-Legendre integral of phi g on [0, min(s, R1)].

    phi g = phi - w J with J(u) = int_0^u Phi(t) exp(-k (u^2 - t^2)) dt, the
    inner integral done by its own Gauss rule on the window where the
    exponential exceeds e^-40.  Panels stop where phi has fallen below 1e-40
    since the rest cannot reach double precision.
    """
    k = profile.k
    top = min(float(s), profile.R1)
    cut = min(top, math.sqrt(40.0 * math.log(10.0) / k))
    x, w = np.polynomial.legendre.leggauss(order)
    weight = math.exp(profile.log_g_weight) if profile.log_g_weight > -745.0 else 0.0
    total = 0.0
    edges = np.linspace(0.0, cut, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (b - a) * (x + 1.0) + a
        vals = np.exp(-k * u * u)
        if weight > 0.0:
            vals = vals - weight * np.array([_inner_J(ui, k, x, w, inner_panels) for ui in u])
        total += 0.5 * (b - a) * float(np.dot(w, vals))
    return total


def _inner_J(u, k, x, w, panels):
    if u <= 0.0:
        return 0.0
    lo = max(0.0, u - 40.0 / (k * u))
    edges = np.linspace(lo, u, panels + 1)
    t = (0.5 * np.diff(edges)[:, None] * (x[None, :] + 1.0) + edges[:-1, None]).ravel()
    rk = math.sqrt(k)
    vals = 0.5 * math.sqrt(math.pi) / rk * special.erf(rk * t) * np.exp(-k * (u - t) * (u + t))
    return 0.5 * (u - lo) / panels * float(np.dot(np.tile(w, panels), vals))


def profile_checks(profile, samples=1000, seed=0):
    out = []
    f0, fp0 = profile.f_eval(np.array([0.0]))
    out.append(CheckResult("profile", "f_prime_at_zero", abs(fp0[0] - 1.0) <= 1e-8, abs(fp0[0] - 1.0), 1e-8))
    out.append(CheckResult("profile", "f_at_zero", f0[0] == 0.0, abs(f0[0]), 0.0))
    f = profile.f
    concav = float(np.max((f[:-2] + f[2:]) / 2.0 - f[1:-1]))
    out.append(CheckResult("profile", "concavity_grid", concav <= 1e-10, concav, 1e-10))
    mono = float(np.max(-np.diff(f)))
    out.append(CheckResult("profile", "monotone_grid", mono <= 0.0, mono, 0.0))
    g_lo, g_hi = float(profile.g.min()), float(profile.g.max())
    out.append(CheckResult("profile", "g_in_half_one", g_lo >= 0.5 and g_hi <= 1.0, g_lo, 0.5,
                           f"g range [{g_lo:.6g}, {g_hi:.6g}]"))
    rng = np.random.default_rng(seed)
    s = np.concatenate([rng.uniform(0.0, 2.0 * profile.R1, samples // 2),
                        np.exp(rng.uniform(-12.0, math.log(profile.R1), samples - samples // 2))])
    fs = profile.f_value(s)
    lower = np.minimum(s, profile.R1) * profile.fprime_R1
    upper = np.minimum(s, profile.R1)
    viol = float(max(np.max(lower - fs), np.max(fs - upper)))
    out.append(CheckResult("profile", "sandwich", viol <= 1e-12, viol, 1e-12))
    half = profile.R1 / 2.0
    err = abs(float(profile.f_value(np.array([half]))[0]) - gauss_oracle_f(profile, half))
    out.append(CheckResult("profile", "gauss_oracle_half_R1", err <= 1e-9, err, 1e-9))
    far = profile.f_eval(np.array([2.0 * profile.R1]))
    ok = far[0][0] == profile.f_R1 and far[1][0] == 0.0
    out.append(CheckResult("profile", "constant_past_R1", ok, abs(far[0][0] - profile.f_R1), 0.0))
    return out


def wasserstein_checks(instances=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(instances):
        n = int(rng.integers(1, 8))
        d = int(rng.integers(1, 3))
        P = rng.normal(size=(n, 2 * d))
        Q = rng.normal(size=(n, 2 * d)) + rng.normal()
        C = sm.cost_matrix(P, Q, "L1")
        brute = min(C[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n))) / n
        worst = max(worst, abs(sm.wasserstein_exact(P, Q, "L1") - brute))
    elapsed = time.perf_counter() - t0
    return [CheckResult("wasserstein", "brute_force_match", worst <= 1e-12, worst, 1e-12,
                        f"{instances} instances in {elapsed:.2f}s")]


def coupling_checks(samples=100_000, d=2, seed=0, dt=1e-3):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(samples, d))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    db = math.sqrt(dt) * rng.normal(size=(samples, d))
    refl = dyn.reflect_increment(e, db)
    norm_err = float(np.max(np.abs(np.linalg.norm(refl, axis=1) - np.linalg.norm(db, axis=1))))
    out = [CheckResult("coupling", "reflection_norm", norm_err <= 1e-12, norm_err, 1e-12)]
    # a fixed direction keeps the reflected increments Gaussian with covariance dt I
    e_fixed = np.tile(np.eye(d)[0], (samples, 1))
    g = math.sqrt(2.0 * dt) * rng.normal(size=(samples, d))
    cov = np.cov(dyn.reflect_increment(e_fixed, g).T) / (2.0 * dt)
    cov_err = float(np.max(np.abs(cov - np.eye(d))))
    tol = 4.0 / math.sqrt(samples)
    out.append(CheckResult("coupling", "reflected_covariance", cov_err <= tol, cov_err, tol))
    z = rng.normal(size=(samples, d)) * rng.choice([1e-3, 0.1, 1.0, 50.0], size=(samples, 1))
    w = rng.normal(size=(samples, d)) * rng.choice([1e-3, 0.1, 1.0, 50.0], size=(samples, 1))
    rc, sc = dyn.coupling_weights(z, w, xi=0.5, alpha=2.0, R1=20.0)
    err = float(np.max(np.abs(rc**2 + sc**2 - 1.0)))
    out.append(CheckResult("coupling", "rc_sc_unit", err <= 1e-12, err, 1e-12))
    return out


def synchronous_check(pot_U, pot_W, dc, steps=10_000, n=64, seed=0):
    init = dyn.GaussianInit(tuple([0.0] * pot_U.dim), tuple([0.0] * pot_U.dim), 1.0, 1.0)
    cloud = dyn.coupled_from_inits(init, init, n, seed)
    cfg = dyn.SimConfig(dt=1e-3, t_final=steps * 1e-3, seed=seed, xi=1.0)
    for k in range(steps):
        dyn.step_pair_coupled(cloud, pot_U, pot_W, float(dc.alpha), float(dc.R1), cfg, k)
    same = bool(np.array_equal(cloud.x, cloud.xt) and np.array_equal(cloud.v, cloud.vt))
    gap = float(np.max(np.abs(cloud.x - cloud.xt)) + np.max(np.abs(cloud.v - cloud.vt)))
    return [CheckResult("coupling", "identical_pairs_stay_equal", same, gap, 0.0, f"{steps} steps")]


def potential_checks(pot_U, pot_W, seed=0):
    out = []
    fd = pots.fd_gradient_check(pot_U, seed=seed)
    out.append(CheckResult("potentials", "fd_gradient_U", fd <= 1e-6, fd, 1e-6))
    if pot_W.kind != "zero":
        fdw = pots.fd_gradient_check(pot_W, seed=seed)
        out.append(CheckResult("potentials", "fd_gradient_W", fdw <= 1e-6, fdw, 1e-6))
    rep = pots.verify_confinement(pot_U)
    out.append(CheckResult("potentials", "confinement", rep.passed, rep.hyp_u_margin, 0.0, rep.status))
    lip = pots.lipschitz_audit(pot_U, seed=seed)
    out.append(CheckResult("potentials", "lipschitz_U", lip <= pot_U.L_U * (1 + 1e-9), lip, pot_U.L_U))
    return out


def run_battery(params, pot_U, pot_W, seed=0, pairs=10_000):
    """All invariant suites for one model; returns a list of CheckResult."""
    dc = derive_base_constants(params)
    pc = derive_particle_constants(params, dc)
    ledger = verify_constraint_ledger(params, dc, pc)
    res = [CheckResult("constants", "ledger_all_pass", ledger.all_pass, ledger.min_slack, 0.0,
                       ", ".join(ledger.failing()))]
    res += potential_checks(pot_U, pot_W, seed)
    profile = sm.DistanceProfile.from_constants(dc)
    res += profile_checks(profile, seed=seed)
    x, v, xt, vt = sm.random_phase_pairs(pairs, params.d, seed)
    worst, per = sm.metric_equivalence_check(x, v, xt, vt, dc, profile, pot_U, params.lam)
    res.append(CheckResult("semimetric", "metric_equivalence", worst >= -1e-9, worst, -1e-9,
                           ", ".join(f"{k}={v:.3g}" for k, v in per.items())))
    H = sm.lyapunov_H(x, v, pot_U, float(dc.gamma), params.lam)
    Ht, _ = sm.lyapunov_H_tilde(x, v, pot_U, float(dc.gamma), params.lam, params.a)
    gap = float(np.min(Ht - H))
    res.append(CheckResult("semimetric", "H_tilde_ge_H", gap >= 0.0, gap, 0.0))
    res.append(CheckResult("semimetric", "H_nonnegative", float(H.min()) >= 0.0, float(H.min()), 0.0))
    res += wasserstein_checks(seed=seed)
    res += coupling_checks(seed=seed)
    res += synchronous_check(pot_U, pot_W, dc, seed=seed)
    return res


def format_table(results):
    w = max(len(f"{r.suite}.{r.name}") for r in results)
    lines = []
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        lines.append(f"{tag}  {(r.suite + '.' + r.name).ljust(w)}  value={float(r.value):.6g}  tol={float(r.tolerance):.3g}"
                     + (f"  {r.detail}" if r.detail else ""))
    return "\n".join(lines)
