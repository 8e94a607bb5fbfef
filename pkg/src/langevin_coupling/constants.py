"""Explicit constants of the contraction and chaos estimates, and their audit.

The rate ``c`` is of order ``exp(-R1^2)`` with ``R1`` in the hundreds or more,
far below the smallest double.  All constants are therefore carried as
mpmath numbers in a private 40-digit context; the float64 profile machinery
only ever needs ``alpha``, ``R1`` and the Gaussian coefficient of ``phi``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields

import mpmath
import numpy as np

from . import _profile

MP = mpmath.MPContext()
MP.dps = 40

DEF_PHI_POINTS = 128
DEF_PHI_TOL = 1e-10
GOLDEN_TOL = 1e-10


def mpf(x):
    return MP.mpf(x)


def to_jsonable(x):
    """Float when representable as a normal double, otherwise a decimal string.

    Containers are converted element by element.
    """
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if x is None or isinstance(x, (bool, np.bool_, str)):
        return bool(x) if isinstance(x, np.bool_) else x
    if isinstance(x, (int, np.integer)):
        return int(x)
    v = MP.mpf(x)
    if v == 0:
        return 0.0
    if MP.isinf(v) or MP.isnan(v):
        return str(v)
    if 1e-300 < abs(v) < 1e300:
        return float(v)
    return MP.nstr(v, 17, min_fixed=1, max_fixed=0)


@dataclass(frozen=True)
class ModelParams:
    lam: float
    A: float
    tilde_A: float
    L_U: float
    L_W: float = 0.0
    d: int = 1
    a: float = 1.0
    C0: float = 0.0
    grad_U0_norm: float = 0.0

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def validation_errors(self):
        errs = []
        if not self.lam > 0:
            errs.append("lambda must be positive")
        if int(self.d) != self.d or self.d < 1:
            errs.append("d must be a positive integer")
        if not self.A >= 0:
            errs.append("A must be non-negative")
        if not self.tilde_A >= 0:
            errs.append("tilde_A must be non-negative")
        if not self.L_U > 0:
            errs.append("L_U must be positive")
        if not self.L_W >= 0:
            errs.append("L_W must be non-negative")
        elif self.lam > 0 and not self.L_W < self.lam / 8.0:
            errs.append(f"L_W = {self.L_W} violates L_W < lambda/8 = {self.lam / 8.0}")
        if not self.a > 0:
            errs.append("a must be positive")
        if not self.C0 >= 0:
            errs.append("C0 must be non-negative")
        return errs

    def with_L_W(self, L_W):
        return ModelParams(self.lam, self.A, self.tilde_A, self.L_U, L_W, self.d,
                           self.a, self.C0, self.grad_U0_norm)


@dataclass(frozen=True)
class DerivedConstants:
    gamma: object
    B: object
    alpha: object
    R0: object
    R1: object
    c: object
    epsilon: object
    C_bold: object
    C1: object
    C2: object
    C_r: object
    C_z: object
    C_dH1: object
    C_dH2: object
    C_K: object
    C_K0: object
    tau: object
    L_W_max: object
    c_psi: object
    # Gaussian coefficient k of phi(s) = exp(-k s^2); not part of the JSON record
    phi_k: float = field(default=0.0, repr=False)
    L_W: float = field(default=0.0, repr=False)

    def as_dict(self):
        return {f.name: to_jsonable(getattr(self, f.name))
                for f in fields(self) if f.repr}

    def f(self, name):
        """Constant as a python float (may be 0.0 or inf)."""
        return float(getattr(self, name))


@dataclass(frozen=True)
class ParticleConstants:
    B_tilde: object
    C_f1: object
    C_f2: object
    c_part: object
    epsilon_part: object
    R0_part: object
    R1_part: object
    L_W_max_part: object
    C1_part: object = field(default=None, repr=False)
    C_z_part: object = field(default=None, repr=False)
    phi_k: float = field(default=0.0, repr=False)
    # the four candidates whose minimum is L_W_max_part, in formula order
    L_W_terms: tuple = field(default=(), repr=False)

    def as_dict(self):
        out = {f.name: to_jsonable(getattr(self, f.name)) for f in fields(self) if f.repr}
        return out


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    lhs: object
    rhs: object
    satisfied: bool
    slack: object
    relation: str = "<="

    def as_dict(self):
        return {"name": self.name, "lhs": to_jsonable(self.lhs), "rhs": to_jsonable(self.rhs),
                "satisfied": self.satisfied, "slack": to_jsonable(self.slack),
                "relation": self.relation}


@dataclass
class ConstraintLedger:
    entries: list
    all_pass: bool
    elapsed: float = 0.0

    @property
    def min_slack(self):
        return min(MP.mpf(e.slack) for e in self.entries)

    def entry(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def failing(self):
        return [e.name for e in self.entries if not e.satisfied]

    def as_dict(self):
        return {"all_pass": self.all_pass, "min_slack": to_jsonable(self.min_slack),
                "entries": [e.as_dict() for e in self.entries]}


# --- shared profile quantities in extended precision -------------------------

@dataclass(frozen=True)
class _ProfileScalars:
    """phi(R1), g(R1), f(1), f(R1) for a Gaussian coefficient k and weight C/4."""

    k: float
    R1: object
    phi_R1: object
    g_R1: object
    f_1: object
    f_R1: object
    log_I_R1: float


def _profile_scalars(k, R1, g_weight):
    """g(s) = 1 - g_weight * int_0^s Phi/phi."""
    R1f = float(R1)
    phi_R1 = MP.exp(-mpf(k) * mpf(R1) ** 2)
    log_I_R1 = _profile.log_I(R1f, k)
    g_R1 = 1 - g_weight * MP.exp(mpf(log_I_R1))
    # f(s) = Phi(s) - g_weight * int_0^s J
    f_1 = mpf(float(_profile.Phi(min(1.0, R1f), k))) - g_weight * mpf(_profile.J_moment(min(1.0, R1f), k))
    f_R1 = mpf(float(_profile.Phi(R1f, k))) - g_weight * mpf(_profile.J_moment(R1f, k))
    return _ProfileScalars(k, R1, phi_R1, g_R1, f_1, f_R1, log_I_R1)


def _equivalence_constants(alpha, lam, eps, prof):
    quad = (1 + alpha) ** 2 + alpha**2
    large_r = 4 * quad / (eps * min(mpf(2) * lam / 3, mpf(6)) * prof.f_1)
    small_r = 1 / (prof.phi_R1 * prof.g_R1)
    both = max(large_r, small_r)
    C1 = max(2 / alpha, mpf(1)) * both
    C2 = 3 / (1 + alpha**2) * both
    C_r = both
    K = 2 * quad / min(mpf(lam) / 3, mpf(3))
    C_z = max(small_r / alpha, MP.sqrt(K) / (alpha * eps * prof.f_R1))
    return C1, C2, C_r, C_z


def _base_core(p, L_W):
    lam, L_U = mpf(p.lam), mpf(p.L_U)
    L_W = mpf(L_W)
    gamma = lam / (2 * (lam + 1))
    B = 24 * (mpf(p.A) + (lam - gamma) * mpf(p.tilde_A) + p.d)
    alpha = L_U + lam / 4
    m = min(mpf(3), lam / 3)
    R0 = MP.sqrt(24 * B / (5 * gamma * m))
    R1 = MP.sqrt((1 + alpha) ** 2 + alpha**2) * R0
    L = L_U + L_W
    mx = max(1 / (2 * alpha), mpf(1))
    pref = min(mpf(1) / 2 - L / (2 * alpha), 2 * MP.sqrt(L / (2 * MP.pi * alpha))) / 7
    c3 = pref * MP.exp(-(L / alpha + alpha + 96 * mx) * R1**2 / 8)
    c = min(gamma / 36, B / 3, c3)
    eps = 3 * c / B
    C_bold = c + 2 * eps * B
    coeff = L / alpha + alpha + 96 * eps * mx
    return dict(gamma=gamma, B=B, alpha=alpha, R0=R0, R1=R1, c=c, epsilon=eps,
                C_bold=C_bold, phi_coeff=coeff, k=float(coeff / 8), L=L)


def derive_base_constants(p: ModelParams) -> DerivedConstants:
    core = _base_core(p, p.L_W)
    gamma, B, alpha, eps, c = core["gamma"], core["B"], core["alpha"], core["epsilon"], core["c"]
    lam = mpf(p.lam)
    prof = _profile_scalars(core["k"], core["R1"], core["C_bold"] / 4)
    C1, C2, C_r, C_z = _equivalence_constants(alpha, lam, eps, prof)
    C_dH1 = 24 * mpf(p.grad_U0_norm) / alpha
    C_dH2 = (24 * mpf(p.L_U) / (alpha * MP.sqrt(lam))
             + (6 * (1 - gamma) + lam - 3) / (alpha * MP.sqrt(lam))
             + 2 * MP.sqrt(3) * max(mpf(1), 1 / (2 * alpha)))
    C_K = C1 * (1 + 2 * eps * B / gamma) + 2 * eps * B / (gamma * lam) * (6 + 8 * lam)
    # initial-moment term, with E H(X0) + E H(X0~) bounded by 2 C0
    C_K0 = eps * (C1 + (6 + 8 * lam) / lam) * 2 * mpf(p.C0)
    tau = c - mpf(p.L_W) * C_K
    L_W_max = min(c / C_K, lam / 8)
    eps_star = _base_core(p, p.lam / 8.0)["epsilon"]
    c_psi = mpf(p.L_U) * gamma / 8 * min(mpf(p.a) / 8, eps_star)
    return DerivedConstants(
        gamma=gamma, B=B, alpha=alpha, R0=core["R0"], R1=core["R1"], c=c, epsilon=eps,
        C_bold=core["C_bold"], C1=C1, C2=C2, C_r=C_r, C_z=C_z, C_dH1=C_dH1, C_dH2=C_dH2,
        C_K=C_K, C_K0=C_K0, tau=tau, L_W_max=L_W_max, c_psi=c_psi,
        phi_k=core["k"], L_W=float(p.L_W),
    )


def admissible_interaction_bound(p: ModelParams, dc: DerivedConstants):
    """Largest L_W keeping tau = c - L_W C_K positive, capped at lambda/8."""
    return min(dc.c / dc.C_K, mpf(p.lam) / 8)


def rate_at(dc: DerivedConstants, L_W):
    """tau(L_W) = c - L_W C_K with c and C_K held fixed."""
    return dc.c - mpf(L_W) * dc.C_K


# --- particle constants ---------------------------------------------------------

def _golden_max(logf, lo, hi, tol=GOLDEN_TOL):
    """Maximise a unimodal function on [lo, hi] by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = logf(x1), logf(x2)
    while b - a > tol * max(1.0, abs(b)):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = logf(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = logf(x1)
    u = 0.5 * (a + b)
    return u, logf(u)


def exp_weighted_sup_log(a, K, beta):
    """log of sup_{h>=0} exp(a sqrt h) (K - beta h), searched in u = sqrt h.

    The function is positive only for h < K / beta, so the search runs over
    u in [0, sqrt(K / beta)].
    """
    K = float(K)
    beta = float(beta)
    u_max = math.sqrt(K / beta)

    def logf(u):
        rem = K - beta * u * u
        return a * u + math.log(rem) if rem > 0 else -math.inf

    u, val = _golden_max(logf, 0.0, u_max)
    return max(val, math.log(K)), u


def derive_B_tilde(p: ModelParams, dc: DerivedConstants):
    gamma, B, lam = float(dc.gamma), float(dc.B), float(p.lam)
    a = float(p.a)
    K1 = B + 288.0 * a * a / gamma
    K0 = K1 + p.L_W * (6.0 + 8.0 * lam) * (B / gamma + p.C0) / lam
    log_nonlinear, _ = exp_weighted_sup_log(a, K0, gamma / 4.0)
    log_particle, _ = exp_weighted_sup_log(a, K1, gamma / 8.0)
    return MP.exp(mpf(max(log_nonlinear, log_particle)))


def derive_particle_constants(p: ModelParams, dc: DerivedConstants) -> ParticleConstants:
    if not p.a > 0:
        raise ValueError("a must be positive")
    a = mpf(p.a)
    lam, gamma, alpha = mpf(p.lam), dc.gamma, dc.alpha
    L = mpf(p.L_U) + mpf(p.L_W)
    B_tilde = derive_B_tilde(p, dc)
    R0p = MP.sqrt(160 * B_tilde / (gamma * min(lam / 3, mpf(3))))
    R1p = MP.sqrt((1 + alpha) ** 2 + alpha**2) * R0p
    mx = max(mpf(1), 1 / (2 * alpha))
    s3 = MP.sqrt(3)
    C_f1 = 8 * ((96 / a**2 * mx + 16 * s3 / a * dc.C_dH1) * (MP.exp(a**2 / 2) - 1)
                + 16 * s3 * (MP.e - 2) * dc.C_dH2)
    C_f2 = 8 * (24 * mx + 4 * s3 * dc.C_dH1 * a + 8 * s3 * dc.C_dH2 * a**2)
    first = min(2 * MP.sqrt(L / (2 * MP.pi * alpha * R1p**2)), (1 - L / alpha) / 2) / 12
    first = first * MP.exp(-(L / alpha + alpha + C_f1 + C_f2) * R1p**2 / 8)
    c_part = min(first, 2 * B_tilde / 5, gamma / 800)
    eps_part = 5 * c_part / (2 * B_tilde)
    k = float((L / alpha + alpha + eps_part * C_f1 + C_f2) / 8)
    prof = _profile_scalars(k, R1p, (c_part + 2 * eps_part * B_tilde) / 2)
    C1p, _, _, C_zp = _equivalence_constants(alpha, lam, eps_part, prof)
    terms = (gamma * lam / (16 * (3 + 4 * lam)), c_part / C1p,
             gamma / (64 * C_zp), gamma * a / (256 * C_zp * eps_part))
    L_W_max_part = min(terms)
    return ParticleConstants(
        B_tilde=B_tilde, C_f1=C_f1, C_f2=C_f2, c_part=c_part, epsilon_part=eps_part,
        R0_part=R0p, R1_part=R1p, L_W_max_part=L_W_max_part, C1_part=C1p, C_z_part=C_zp,
        phi_k=k, L_W_terms=terms,
    )


# --- the audit -------------------------------------------------------------------

def _entry(name, lhs, rhs, strict=False):
    lhs, rhs = mpf(lhs), mpf(rhs)
    ok = bool(lhs < rhs) if strict else bool(lhs <= rhs)
    if rhs > 0:
        slack = 1 - lhs / rhs
    else:
        slack = rhs - lhs
    return LedgerEntry(name, lhs, rhs, ok, slack, "<" if strict else "<=")


def def_phi_residual(k, R1, points=DEF_PHI_POINTS, h=1e-20):
    """Worst relative residual of 4 phi' + 8 k s phi = 0 on [0, R1].

    phi' comes from a complex-step derivative of log phi, so the check does
    not rely on the closed-form derivative; the residual is scaled by
    max(1, 8 k s) to stay meaningful where phi itself underflows.
    """
    coeff = 8.0 * k
    if float(R1) < 1e100:
        s = np.linspace(0.0, float(R1), points)
        log_phi_step = -k * (s + 1j * h) ** 2
        dlog = np.imag(log_phi_step) / h
        resid = np.abs(4.0 * dlog + coeff * s) / np.maximum(1.0, coeff * s)
        return float(np.max(resid))
    worst = mpf(0)
    for i in range(points):
        s = mpf(R1) * i / (points - 1)
        dlog = MP.im(-mpf(k) * MP.mpc(s, h) ** 2) / h
        worst = max(worst, abs(4 * dlog + coeff * s) / max(mpf(1), coeff * s))
    return worst


def _profile_entries(prefix, lhs_total, k, R1, L, alpha, g_rhs_factor=2):
    """Shared inf(r phi/Phi), int Phi/phi and phi identity audits."""
    # radii past the double range stay in extended precision
    R1f = float(R1) if R1 < 1e100 else mpf(R1)
    inf_log, _ = _profile.inf_ratio_log(R1f, k)
    half_gap = (1 - L / alpha) / 2
    out = [
        _entry(f"{prefix}region_2", lhs_total, half_gap * MP.exp(mpf(inf_log))),
        _entry(f"{prefix}g_half", lhs_total, g_rhs_factor / MP.exp(mpf(_profile.log_I(R1f, k)))),
        _entry(f"{prefix}def_phi", def_phi_residual(k, R1f), DEF_PHI_TOL),
    ]
    return out


def verify_constraint_ledger(p: ModelParams, dc: DerivedConstants, pc: ParticleConstants | None = None,
                             include_particle=True) -> ConstraintLedger:
    """Evaluate every parameter inequality; failures are recorded, never raised."""
    t0 = time.perf_counter()
    gamma, B, alpha, c, eps = dc.gamma, dc.B, dc.alpha, dc.c, dc.epsilon
    L = mpf(p.L_U) + mpf(p.L_W)
    C_bold = c + 2 * eps * B
    k = dc.phi_k
    R1 = dc.R1
    phi_R1 = MP.exp(-mpf(k) * R1**2)
    two_eps_B = 2 * eps * B
    entries = [
        # (gamma/6)(1 - (5g/6)/(2eB + 5g/6)) written without the cancellation
        _entry("cond_region_3", c, gamma / 6 * two_eps_B / (two_eps_B + 5 * gamma / 6)),
        _entry("cond_alpha", L, alpha, strict=True),
    ]
    prof = _profile_entries("", C_bold, k, R1, L, alpha)
    entries.append(LedgerEntry("cond_region_2_prop", *_fields(prof[0])))
    entries.append(LedgerEntry("cond_g_demi_prop", *_fields(prof[1])))
    entries.append(LedgerEntry("def_phi", *_fields(prof[2])))
    entries.append(_entry("cond_c_2", C_bold, (1 - L / alpha) / 2 * phi_R1))
    entries.append(_entry("cond_c_3", C_bold, 2 * MP.sqrt(L / (2 * MP.pi * alpha)) * phi_R1 / R1))
    if include_particle:
        if pc is None:
            pc = derive_particle_constants(p, dc)
        cp, ep, Bt = pc.c_part, pc.epsilon_part, pc.B_tilde
        eighty = 80 * ep * Bt
        entries.append(_entry("particle_rate_cap", cp, gamma / 160 * eighty / (eighty + gamma)))
        entries.append(_entry("particle_alpha", L, alpha, strict=True))
        entries.append(_entry("particle_epsilon_le_1", ep, 1))
        pprof = _profile_entries("particle_", 2 * cp + 4 * ep * Bt, pc.phi_k, pc.R1_part, L, alpha)
        entries.extend(pprof)
    return ConstraintLedger(entries, all(e.satisfied for e in entries),
                            time.perf_counter() - t0)


def _fields(e):
    return e.lhs, e.rhs, e.satisfied, e.slack, e.relation


def ledger_with_scaled_rate(p, dc, factor):
    """Re-run the base audit with c multiplied by ``factor`` (epsilon untouched)."""
    from dataclasses import replace

    scaled = replace(dc, c=dc.c * mpf(factor))
    return verify_constraint_ledger(p, scaled, include_particle=False)


# --- fixtures ----------------------------------------------------------------

# Admissible double-well constants found by a dense radial scan: the smallest
# A for lambda = 1/2 is 0.71094 (at r ~ 0.612) and tilde A = 1/11 (at r = 12/11).
DOUBLE_WELL_LAMBDA = 0.5
DOUBLE_WELL_A = 0.72
DOUBLE_WELL_TILDE_A = 0.0909091
DOUBLE_WELL_L_U = 8.0


def double_well_params(L_U=DOUBLE_WELL_L_U, L_W=0.0, d=1, a=1.0, C0=0.0):
    return ModelParams(lam=DOUBLE_WELL_LAMBDA, A=DOUBLE_WELL_A, tilde_A=DOUBLE_WELL_TILDE_A,
                       L_U=L_U, L_W=L_W, d=d, a=a, C0=C0, grad_U0_norm=0.0)


def random_admissible_params(rng, count):
    """Random parameter sets satisfying the structural constraints."""
    out = []
    for _ in range(count):
        lam = float(rng.uniform(0.05, 5.0))
        out.append(ModelParams(
            lam=lam,
            A=float(rng.uniform(0.0, 5.0)),
            tilde_A=float(rng.uniform(0.0, 2.0)),
            L_U=float(rng.uniform(0.1, 10.0)),
            L_W=float(rng.uniform(0.0, 0.999) * lam / 8.0),
            d=int(rng.integers(1, 4)),
            a=float(rng.uniform(0.1, 2.0)),
            C0=float(rng.uniform(0.0, 100.0)),
            grad_U0_norm=float(rng.uniform(0.0, 2.0)),
        ))
    return out
