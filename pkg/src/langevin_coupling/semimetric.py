"""Distance machinery: r, the concave profile f, Lyapunov functions, rho, Wasserstein.

Phase points are stored as arrays of shape (n, 2d) laid out as [x, v], or as
separate (n, d) position and velocity arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import _profile
from .constants import MP, mpf

GRID_NODES = 4096
EXACT_LIMIT = 4096
SUBSAMPLE_REPEATS = 8
H_TILDE_CAP = 1e300


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError("position and velocity must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("phase point must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


def _pairs(x, v, xt, vt):
    arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (x, v, xt, vt)]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError(f"dimension mismatch: {[a.shape for a in arrs]}")
    return arrs


def r_metric(x, v, xt, vt, alpha):
    """alpha |x - xt| + |x - xt + v - vt| for each row."""
    x, v, xt, vt = _pairs(x, v, xt, vt)
    z = x - xt
    q = z + (v - vt)
    return alpha * np.linalg.norm(z, axis=1) + np.linalg.norm(q, axis=1)


def r_metric_points(p, q, alpha):
    """r between two :class:`PhasePoint` objects."""
    if p.x.shape != q.x.shape:
        raise ValueError("dimension mismatch")
    return float(r_metric(p.x, p.v, q.x, q.v, alpha)[0])


# --- the concave profile ---------------------------------------------------------

class DistanceProfile:
    """f(s) = int_0^min(s,R1) phi g, tabulated on a uniform grid of [0, R1].

    ``g_weight`` is the factor in g(s) = 1 - g_weight * int_0^s Phi/phi.  It is
    kept as an mpmath number and only its logarithm enters float arithmetic.
    """

    def __init__(self, alpha, epsilon, R1, k, g_weight, nodes=GRID_NODES):
        self.alpha = float(alpha)
        self.epsilon_mp = mpf(epsilon)
        self.epsilon = float(self.epsilon_mp)
        self.R1 = float(R1)
        if not math.isfinite(self.R1):
            raise ValueError(f"R1 = {MP.nstr(mpf(R1), 6)} does not fit a double; the profile cannot be tabulated")
        self.k = float(k)
        self.exponent_coeff = 8.0 * self.k
        self.g_weight = mpf(g_weight)
        self.log_g_weight = float(MP.log(self.g_weight)) if self.g_weight > 0 else -math.inf
        self.s = np.linspace(0.0, self.R1, nodes)
        self.phi = np.exp(-self.k * self.s**2)
        self.Phi = _profile.Phi(self.s, self.k)
        self.log_one_minus_g = self._log_one_minus_g_grid()
        self.g = 1.0 - np.exp(self.log_one_minus_g)
        self.fprime = self.phi * self.g
        self.f = self.Phi - self._f_correction_grid()
        self.f_R1 = float(self.f[-1])
        self.fprime_R1 = float(self.fprime[-1])
        self._spline = CubicHermiteSpline(self.s, self.f, self.fprime)
        self._g_spline = None
        if not np.all(np.isneginf(self.log_one_minus_g)):
            self._g_spline = CubicSpline(self.s[1:], self.log_one_minus_g[1:])

    @classmethod
    def from_constants(cls, dc, nodes=GRID_NODES):
        return cls(dc.alpha, dc.epsilon, dc.R1, dc.phi_k, dc.C_bold / 4, nodes)

    @classmethod
    def from_particle_constants(cls, dc, pc, nodes=GRID_NODES):
        weight = (pc.c_part + 2 * pc.epsilon_part * pc.B_tilde) / 2
        return cls(dc.alpha, pc.epsilon_part, pc.R1_part, pc.phi_k, weight, nodes)

    # log(1 - g) = log(weight) + log I(s); skipped entirely when it cannot reach
    # double resolution anywhere on [0, R1]
    def _log_one_minus_g_grid(self):
        out = np.full(self.s.shape, -np.inf)
        top = self.log_g_weight + float(_profile.log_I(self.R1, self.k))
        if top < -800.0:
            return out
        for i in range(1, self.s.size):
            out[i] = self.log_g_weight + float(_profile.log_I(self.s[i], self.k))
        return out

    def _f_correction_grid(self):
        """weight * int_0^s J, or zeros when below double resolution of f."""
        total = _profile.J_moment(self.R1, self.k)
        if total <= 0 or self.log_g_weight + math.log(total) < -800.0:
            return np.zeros_like(self.s)
        j = np.array([_profile.J_integral(si, self.k) for si in self.s])
        # J is smooth on the grid; composite Simpson per cell with a midpoint value
        mids = 0.5 * (self.s[1:] + self.s[:-1])
        jm = np.array([_profile.J_integral(si, self.k) for si in mids])
        h = np.diff(self.s)
        cells = h / 6.0 * (j[:-1] + 4.0 * jm + j[1:])
        cum = np.concatenate([[0.0], np.cumsum(cells)])
        return math.exp(self.log_g_weight) * cum

    # evaluation ---------------------------------------------------------------
    def g_eval(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.R1)
        if self._g_spline is None:
            return np.ones_like(s)
        s1 = self.s[1]
        head = s < s1
        # below the first node I(s) = s^2/2 + k s^4/6 + O(s^6)
        with np.errstate(divide="ignore"):
            lg_head = self.log_g_weight + np.log(0.5 * s * s + self.k * s**4 / 6.0)
        lg = np.where(head, lg_head, self._g_spline(np.maximum(s, s1)))
        return 1.0 - np.exp(lg)

    def phi_eval(self, s):
        return np.exp(-self.k * np.asarray(s, dtype=float) ** 2)

    def f_eval(self, s):
        """(f(s), f'(s)); f' is phi g below R1 and 0 beyond."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("f is defined for s >= 0")
        inside = s < self.R1
        sc = np.where(inside, s, self.R1)
        f = np.where(inside, self._spline(sc), self.f_R1)
        fp = np.where(inside, self.phi_eval(sc) * self.g_eval(sc), 0.0)
        return f, fp

    def f_value(self, s):
        return self.f_eval(s)[0]


# --- Lyapunov functions ----------------------------------------------------------

def lyapunov_H(x, v, pot, gamma, lam):
    """24 U(x) + (6(1-gamma)+lambda)|x|^2 + 12 x.v + 12 |v|^2, row-wise."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u, _ = pot.value_grad(x)
    gamma, lam = float(gamma), float(lam)
    return (24.0 * u + (6.0 * (1.0 - gamma) + lam) * np.sum(x * x, axis=1)
            + 12.0 * np.sum(x * v, axis=1) + 12.0 * np.sum(v * v, axis=1))


def h_tilde_from_H(H, a):
    """int_0^H exp(a sqrt u) du in closed form.

    Returns (values, saturated) where ``saturated`` flags entries whose
    exponential overflowed and were capped at 1e300.
    """
    H = np.asarray(H, dtype=float)
    y = a * np.sqrt(np.maximum(H, 0.0))
    small = y < 1e-2
    with np.errstate(over="ignore", invalid="ignore"):
        # e^y (y - 1) + 1 = sum_{n>=2} (n-1) y^n / n!, series used for small y
        series = y**2 / 2.0 + y**3 / 3.0 + y**4 / 8.0 + y**5 / 30.0 + y**6 / 144.0
        direct = y * np.exp(y) - np.expm1(y)
        core = np.where(small, series, direct)
        val = 2.0 / (a * a) * core
    saturated = ~np.isfinite(val) | (val > H_TILDE_CAP)
    val = np.where(saturated, H_TILDE_CAP, val)
    return val, saturated


def lyapunov_H_tilde(x, v, pot, gamma, lam, a):
    if not a > 0:
        raise ValueError("a must be positive")
    return h_tilde_from_H(lyapunov_H(x, v, pot, gamma, lam), a)


def rho_eval(x, v, xt, vt, profile, pot, gamma, lam, lyap="H", a=1.0):
    """rho = f(r) (1 + eps L(x,v) + eps L(xt,vt)) with L = H or H tilde."""
    r = r_metric(x, v, xt, vt, profile.alpha)
    f, _ = profile.f_eval(r)
    if profile.epsilon == 0.0:
        return f
    if lyap == "H":
        l1 = lyapunov_H(x, v, pot, gamma, lam)
        l2 = lyapunov_H(xt, vt, pot, gamma, lam)
    elif lyap == "H_tilde":
        l1, _ = lyapunov_H_tilde(x, v, pot, gamma, lam, a)
        l2, _ = lyapunov_H_tilde(xt, vt, pot, gamma, lam, a)
    else:
        raise ValueError("lyap must be 'H' or 'H_tilde'")
    return f * (1.0 + profile.epsilon * (l1 + l2))


# --- exact empirical Wasserstein --------------------------------------------------

def _split(P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] % 2:
        raise ValueError("phase-space arrays need an even number of columns [x, v]")
    d = P.shape[1] // 2
    return P[:, :d], P[:, d:]


def cost_matrix(P, Q, cost, rho_cost=None):
    px, pv = _split(P)
    qx, qv = _split(Q)
    if cost == "L1":
        return cdist(px, qx) + cdist(pv, qv)
    if cost == "L2_squared":
        return cdist(px, qx, "sqeuclidean") + cdist(pv, qv, "sqeuclidean")
    if cost == "rho":
        if rho_cost is None:
            raise ValueError("cost='rho' needs a pairwise rho function")
        n, m = px.shape[0], qx.shape[0]
        i, j = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        i, j = i.ravel(), j.ravel()
        return rho_cost(px[i], pv[i], qx[j], qv[j]).reshape(n, m)
    raise ValueError(f"unknown cost {cost!r}")


def assignment_value(C):
    """Mean cost of the optimal permutation (uniform weights)."""
    rows, cols = linear_sum_assignment(C)
    return float(C[rows, cols].sum() / C.shape[0]), cols


def wasserstein_exact(P, Q, cost="L1", rho_cost=None, return_plan=False):
    """Exact W between equal-size uniform empirical measures.

    ``cost`` is 'L1' (W1), 'L2_squared' (returns W2 = sqrt of the optimum) or
    'rho' with ``rho_cost(x, v, xt, vt)`` the pairwise semimetric.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if P.shape != Q.shape:
        raise ValueError(f"exact mode needs equal sizes, got {P.shape} and {Q.shape}")
    if P.shape[0] > EXACT_LIMIT:
        raise ValueError(f"exact mode is limited to n <= {EXACT_LIMIT}; use wasserstein_subsampled")
    C = cost_matrix(P, Q, cost, rho_cost)
    val, plan = assignment_value(C)
    if cost == "L2_squared":
        val = math.sqrt(max(val, 0.0))
    return (val, plan) if return_plan else val


def wasserstein_subsampled(P, Q, cost="L1", seed=0, size=EXACT_LIMIT, repeats=SUBSAMPLE_REPEATS,
                           paired=False, rho_cost=None):
    """Average of exact solves on seeded subsamples without replacement.

    With ``paired=True`` the same row indices are drawn from both clouds,
    which keeps a coupling between them intact.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape[0] <= size and Q.shape[0] == P.shape[0]:
        return wasserstein_exact(P, Q, cost, rho_cost)
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(repeats):
        ip = np.sort(rng.choice(P.shape[0], size, replace=False))
        iq = ip if paired else np.sort(rng.choice(Q.shape[0], size, replace=False))
        vals.append(wasserstein_exact(P[ip], Q[iq], cost, rho_cost))
    return float(np.mean(vals))


# --- metric equivalence -----------------------------------------------------------

INEQUALITIES = ("L1_vs_rho", "L2_vs_rho", "r_vs_rho", "z_vs_f", "H_difference", "r_squared_vs_H")


def _log_safe(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _rel_slack(log_lhs, log_rhs, lhs_zero, rhs_zero):
    """1 - lhs/rhs computed from logs; NaN when both sides vanish."""
    with np.errstate(over="ignore", invalid="ignore"):
        s = -np.expm1(log_lhs - log_rhs)
    s = np.where(lhs_zero & rhs_zero, np.nan, s)
    s = np.where(lhs_zero & ~rhs_zero, 1.0, s)
    s = np.where(~lhs_zero & rhs_zero, -np.inf, s)
    return s


def metric_equivalence_check(x, v, xt, vt, dc, profile, pot, lam):
    """Worst relative slack of each equivalence inequality (negative = violated).

    Large constants are handled through their logarithms so nothing overflows.
    Returns (worst_overall, per_inequality dict).
    """
    x, v, xt, vt = _pairs(x, v, xt, vt)
    gamma, alpha = float(dc.gamma), float(dc.alpha)
    lam = float(lam)
    dx = np.linalg.norm(x - xt, axis=1)
    dv = np.linalg.norm(v - vt, axis=1)
    r = r_metric(x, v, xt, vt, alpha)
    f, _ = profile.f_eval(r)
    H1 = lyapunov_H(x, v, pot, gamma, lam)
    H2 = lyapunov_H(xt, vt, pot, gamma, lam)
    eps = profile.epsilon
    log_rho = _log_safe(f) + np.log1p(eps * (H1 + H2))
    rho_zero = f == 0.0
    logC = {name: float(MP.log(getattr(dc, name))) for name in ("C1", "C2", "C_r", "C_z")}
    out = {}
    lhs = dx + dv
    out["L1_vs_rho"] = _rel_slack(_log_safe(lhs), logC["C1"] + log_rho, lhs == 0, rho_zero)
    lhs = dx**2 + dv**2
    out["L2_vs_rho"] = _rel_slack(_log_safe(lhs), logC["C2"] + log_rho, lhs == 0, rho_zero)
    out["r_vs_rho"] = _rel_slack(_log_safe(r), logC["C_r"] + log_rho, r == 0, rho_zero)
    log_rhs = logC["C_z"] + _log_safe(f) + np.log1p(eps * (np.sqrt(H1) + np.sqrt(H2)))
    out["z_vs_f"] = _rel_slack(_log_safe(dx), log_rhs, dx == 0, rho_zero)
    lhs = np.abs(H1 - H2)
    rhs = float(dc.C_dH1) * r + float(dc.C_dH2) * r * (np.sqrt(H1) + np.sqrt(H2))
    out["H_difference"] = _rel_slack(_log_safe(lhs), _log_safe(rhs), lhs <= 1e-12 * np.maximum(H1 + H2, 1.0), rhs == 0)
    quad = 2.0 * ((1 + alpha) ** 2 + alpha**2) / min(lam / 3.0, 3.0)
    lhs = r**2
    rhs = quad * (H1 + H2)
    out["r_squared_vs_H"] = _rel_slack(_log_safe(lhs), _log_safe(rhs), lhs == 0, rhs == 0)
    # pairs where both sides vanish hold with equality and carry no information
    worst = {k: float(np.nanmin(s)) if np.any(~np.isnan(s)) else 0.0 for k, s in out.items()}
    return min(worst.values()), worst


def random_phase_pairs(n, dim, seed=0):
    """Pairs at mixed scales: near-identical, moderate, and far apart."""
    rng = np.random.default_rng(seed)
    scale = rng.choice([1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0], size=(n, 1))
    x = 3.0 * rng.standard_normal((n, dim))
    v = 3.0 * rng.standard_normal((n, dim))
    xt = x + scale * rng.standard_normal((n, dim))
    vt = v + scale * rng.standard_normal((n, dim))
    same = rng.random(n) < 0.02
    xt[same] = x[same]
    vt[same] = v[same]
    return x, v, xt, vt
