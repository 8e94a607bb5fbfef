"""Confining and interaction potentials, their gradients, and assumption audits.

Every confining potential here is radial, U(x) = S(|x|), so the gradient is
``factor(|x|) * x`` with ``factor(r) = S'(r) / r``.  The kernels in
``_kernels_numba`` evaluate the same factor from the packed description
returned by :meth:`ConfiningPotential.kernel_spec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

CONFINING_KINDS = ("double_well", "quadratic", "user_radial_table")
INTERACTION_KINDS = ("zero", "harmonic_attract", "harmonic_repulse", "mollified_coulomb")

# integer codes shared with the compiled kernels
U_DOUBLE_WELL, U_QUADRATIC, U_TABLE = 0, 1, 2
W_ZERO, W_HARMONIC, W_COULOMB = 0, 1, 2

KINK_EXCLUSION = 1e-3


class DomainError(ValueError):
    """Raised when a potential is evaluated at a non-finite point."""


def _as_point(x, dim):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected last dimension {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("potential evaluated at a non-finite point")
    return arr


@dataclass(frozen=True)
class RadialTable:
    """Tabulated radial profile S(r), cubic-interpolated in the radius.

    The spline is clamped to S'(0) = 0 so the radial extension is C^1 at the
    origin.  Past the last knot it continues as the quadratic with matching
    value, slope and curvature, which keeps the gradient globally Lipschitz.
    """

    radii: tuple
    values: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        s = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != s.shape or r.size < 4:
            raise ValueError("radial table needs at least 4 (radius, value) rows")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(s))):
            raise ValueError("radial table contains non-finite entries")
        if r[0] != 0.0:
            raise ValueError("radial table must start at radius 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radial table radii must be strictly increasing")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (radius, value)")
        return cls(tuple(data[:, 0]), tuple(data[:, 1]))

    def spline(self):
        return CubicSpline(np.asarray(self.radii), np.asarray(self.values),
                           bc_type=((1, 0.0), "not-a-knot"))

    def packed(self):
        """(knots, coefs, tail) arrays for the kernels."""
        return self._packed

    @cached_property
    def _packed(self):
        sp = self.spline()
        knots = np.ascontiguousarray(sp.x, dtype=float)
        coefs = np.ascontiguousarray(sp.c, dtype=float)
        r_end = float(knots[-1])
        tail = np.array([r_end, float(sp(r_end)), float(sp(r_end, 1)), float(sp(r_end, 2))])
        return knots, coefs, tail


def _table_profile(knots, coefs, tail, r):
    """Vectorised S(r), S'(r), S''(r) for the packed table."""
    r = np.asarray(r, dtype=float)
    r_end, s_end, ds_end, dds_end = tail
    j = np.clip(np.searchsorted(knots, r, side="right") - 1, 0, knots.size - 2)
    t = r - knots[j]
    c0, c1, c2, c3 = coefs[0, j], coefs[1, j], coefs[2, j], coefs[3, j]
    s = ((c0 * t + c1) * t + c2) * t + c3
    ds = (3.0 * c0 * t + 2.0 * c1) * t + c2
    dds = 6.0 * c0 * t + 2.0 * c1
    out = r > r_end
    if np.any(out):
        h = r[out] - r_end
        s = np.where(out, 0.0, s)
        ds = np.where(out, 0.0, ds)
        dds = np.where(out, 0.0, dds)
        s[out] = s_end + ds_end * h + 0.5 * dds_end * h * h
        ds[out] = ds_end + dds_end * h
        dds[out] = dds_end
    return s, ds, dds


@dataclass(frozen=True)
class ConfiningPotential:
    kind: str
    lam: float
    A: float
    L_U: float
    dim: int = 1
    stiffness: float = 1.0
    table: RadialTable | None = None

    def __post_init__(self):
        if self.kind not in CONFINING_KINDS:
            raise ValueError(f"unknown confining kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.A >= 0:
            raise ValueError("A must be non-negative")
        if not self.L_U > 0:
            raise ValueError("L_U must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dimension must be a positive integer")
        if self.kind == "quadratic" and not self.stiffness > 0:
            raise ValueError("quadratic stiffness must be positive")
        if self.kind == "user_radial_table" and self.table is None:
            raise ValueError("user_radial_table needs a table")

    # radial profile -------------------------------------------------------
    def radial(self, r):
        """S(r) and the gradient factor S'(r)/r for radii ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "double_well":
            inner = r < 1.0
            s = np.where(inner, (r * r - 1.0) ** 2, (r - 1.0) ** 2)
            with np.errstate(divide="ignore", invalid="ignore"):
                outer_factor = 2.0 * (r - 1.0) / r
            factor = np.where(inner, 4.0 * (r * r - 1.0), outer_factor)
            return s, factor
        if self.kind == "quadratic":
            return 0.5 * self.stiffness * r * r, np.full_like(r, self.stiffness)
        knots, coefs, tail = self.table.packed()
        s, ds, dds = _table_profile(knots, coefs, tail, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(r > 0.0, ds / np.where(r > 0.0, r, 1.0), dds)
        return s, factor

    def value_grad(self, x):
        """Vectorised (U, grad U) over the last axis."""
        pts = _as_point(x, self.dim)
        r = np.sqrt(np.sum(pts * pts, axis=-1))
        s, factor = self.radial(r)
        return s, factor[..., None] * pts

    def kernel_spec(self):
        """(code, params, knots, coefs) consumed by the compiled kernels."""
        empty2 = np.zeros((4, 1))
        if self.kind == "double_well":
            return U_DOUBLE_WELL, np.zeros(1), np.zeros(2), empty2
        if self.kind == "quadratic":
            return U_QUADRATIC, np.array([float(self.stiffness)]), np.zeros(2), empty2
        knots, coefs, tail = self.table.packed()
        return U_TABLE, tail, knots, coefs

    def grad_at_origin_norm(self):
        return float(np.linalg.norm(self.value_grad(np.zeros(self.dim))[1]))


def table_lipschitz_estimate(table, samples=20001):
    """Largest Hessian eigenvalue magnitude of the radial extension.

    The Hessian of S(|x|) has eigenvalues S''(r) (radial) and S'(r)/r
    (tangential), both read off the interpolant on a dense radius grid.
    """
    knots, coefs, tail = table.packed()
    r = np.linspace(0.0, 1.5 * knots[-1], samples)
    _, ds, dds = _table_profile(knots, coefs, tail, r)
    tangential = np.where(r > 0, np.abs(ds) / np.where(r > 0, r, 1.0), np.abs(dds))
    return float(max(np.max(np.abs(dds)), np.max(tangential)))


def _coulomb_radial_derivative(r, a, b, k):
    # d/dr of a r^(k-1) / (r^k + b^k)^(1+1/k)
    denom = r**k + b**k
    return a * r ** (k - 2) * denom ** (-2.0 - 1.0 / k) * ((k - 1) * b**k - 2.0 * r**k)


def coulomb_lipschitz(a, b, k):
    """sup_r |g'(r)| for the radial force magnitude of the mollified kernel."""
    r = b * np.logspace(-6, 6, 4001)
    vals = np.abs(_coulomb_radial_derivative(r, a, b, k))
    best = float(np.max(vals))
    i = int(np.argmax(vals))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
    res = minimize_scalar(lambda s: -abs(_coulomb_radial_derivative(s, a, b, k)),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14 * max(hi, 1.0)})
    best = max(best, -float(res.fun))
    if k == 2:
        best = max(best, a / b**3)  # value at the origin
    return best


@dataclass(frozen=True)
class InteractionPotential:
    kind: str = "zero"
    L_W: float | None = 0.0
    coulomb_a: float = 1.0
    coulomb_b: float = 1.0
    coulomb_k: int = 2
    coulomb_sign: int = 1
    dim: int = 1

    def __post_init__(self):
        if self.kind not in INTERACTION_KINDS:
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "mollified_coulomb":
            if not (self.coulomb_a > 0 and self.coulomb_b > 0):
                raise ValueError("mollified_coulomb needs a > 0 and b > 0")
            if int(self.coulomb_k) != self.coulomb_k or self.coulomb_k < 2:
                raise ValueError("mollified_coulomb exponent k must be an integer >= 2")
            if self.coulomb_sign not in (1, -1):
                raise ValueError("coulomb_sign must be +1 or -1")
            lw = coulomb_lipschitz(self.coulomb_a, self.coulomb_b, int(self.coulomb_k))
            object.__setattr__(self, "L_W", lw)
        elif self.kind == "zero":
            object.__setattr__(self, "L_W", 0.0)
        elif self.L_W is None or not self.L_W >= 0:
            raise ValueError("L_W must be non-negative")

    def value_grad(self, z):
        pts = _as_point(z, self.dim)
        sq = np.sum(pts * pts, axis=-1)
        if self.kind == "zero":
            return np.zeros_like(sq), np.zeros_like(pts)
        if self.kind in ("harmonic_attract", "harmonic_repulse"):
            sgn = 1.0 if self.kind == "harmonic_attract" else -1.0
            return sgn * 0.5 * self.L_W * sq, sgn * self.L_W * pts
        a, b, k, sgn = self.coulomb_a, self.coulomb_b, int(self.coulomb_k), self.coulomb_sign
        r = np.sqrt(sq)
        denom = r**k + b**k
        value = sgn * a / denom ** (1.0 / k)
        factor = -sgn * a * r ** (k - 2) / denom ** (1.0 + 1.0 / k)
        return value, factor[..., None] * pts

    def kernel_spec(self):
        """(code, params) consumed by the compiled kernels."""
        if self.kind == "zero":
            return W_ZERO, np.zeros(4)
        if self.kind in ("harmonic_attract", "harmonic_repulse"):
            sgn = 1.0 if self.kind == "harmonic_attract" else -1.0
            return W_HARMONIC, np.array([sgn * self.L_W, 0.0, 0.0, 0.0])
        return W_COULOMB, np.array([float(self.coulomb_sign) * self.coulomb_a,
                                    self.coulomb_b, float(self.coulomb_k), 0.0])

    @property
    def harmonic_coefficient(self):
        """Signed coefficient kappa with grad W(z) = kappa z, or None."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "harmonic_attract":
            return float(self.L_W)
        if self.kind == "harmonic_repulse":
            return -float(self.L_W)
        return None


def eval_grad_U(pot, x):
    """Value and gradient of the confining potential at a single point."""
    value, grad = pot.value_grad(x)
    return float(np.asarray(value).reshape(-1)[0]), grad.reshape(pot.dim)


def eval_grad_W(pot, z):
    """Value and gradient of the interaction potential at a single point."""
    value, grad = pot.value_grad(z)
    return float(np.asarray(value).reshape(-1)[0]), grad.reshape(pot.dim)


# assumption audits ----------------------------------------------------------

@dataclass
class ConfinementReport:
    hyp_u_margin: float
    tilde_A: float
    grid_spec: str
    passed: bool
    worst_point: np.ndarray
    lower_bound_margin: float

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"


def sphere_directions(dim, count=32):
    """Deterministic quasi-uniform unit directions in R^dim."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if dim == 3:
        i = np.arange(count) + 0.5
        polar = np.arccos(1.0 - 2.0 * i / count)
        azim = np.pi * (1.0 + 5.0**0.5) * i
        return np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar),
                         np.cos(polar)], axis=1)
    g = np.random.default_rng(0).standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def confinement_grid(pot, n_radii=64, n_dirs=32):
    r_max = 3.0 * math.sqrt(4.0 * pot.A / pot.lam) + 10.0
    radii = np.logspace(-3.0, math.log10(r_max), n_radii)
    dirs = sphere_directions(pot.dim, n_dirs)
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, pot.dim)
    spec = (f"{n_radii} log-spaced radii in [1e-3, {r_max:.6g}] x "
            f"{dirs.shape[0]} directions (d={pot.dim})")
    return pts, spec


def verify_confinement(pot, n_radii=64, n_dirs=32, tolerance=1e-9):
    """Audit 1/2 grad U(x).x >= lambda (U + |x|^2/4) - A and estimate tilde A."""
    pts, spec = confinement_grid(pot, n_radii, n_dirs)
    value, grad = pot.value_grad(pts)
    sq = np.sum(pts * pts, axis=1)
    margin = 0.5 * np.sum(grad * pts, axis=1) - pot.lam * (value + 0.25 * sq) + pot.A
    tilde_A = max(0.0, float(np.max(pot.lam / 6.0 * sq - value)))
    lower = value + tilde_A - pot.lam / 6.0 * sq
    worst = int(np.argmin(margin))
    return ConfinementReport(
        hyp_u_margin=float(margin[worst]),
        tilde_A=tilde_A,
        grid_spec=spec,
        passed=bool(margin[worst] >= -tolerance),
        worst_point=pts[worst].copy(),
        lower_bound_margin=float(np.min(lower)),
    )


def scan_confinement_constants(pot, r_max=200.0, samples=2_000_001):
    """Dense radial scan giving the smallest admissible A and tilde A."""
    r = np.linspace(0.0, r_max, samples)
    s, factor = pot.radial(r)
    A = max(0.0, float(np.max(pot.lam * (s + 0.25 * r * r) - 0.5 * factor * r * r)))
    tilde_A = max(0.0, float(np.max(pot.lam / 6.0 * r * r - s)))
    return A, tilde_A


def _near_kink(pot, pts):
    if not isinstance(pot, ConfiningPotential) or pot.kind != "double_well":
        return np.zeros(pts.shape[0], dtype=bool)
    return np.abs(np.linalg.norm(pts, axis=1) - 1.0) < KINK_EXCLUSION


def fd_gradient_check(pot, samples=200, step=1e-5, seed=0, scale=2.0):
    """Max relative error of central differences against the analytic gradient.

    The relative error uses max(|grad|, 1) as the denominator so points near a
    critical point are compared absolutely.
    """
    if not (0.0 < step <= 1e-3):
        raise ValueError("step must lie in (0, 1e-3]")
    rng = np.random.default_rng(seed)
    dim = pot.dim
    pts = scale * rng.standard_normal((samples, dim))
    bad = _near_kink(pot, pts)
    while np.any(bad):
        pts[bad] = scale * rng.standard_normal((int(bad.sum()), dim))
        bad = _near_kink(pot, pts)
    _, grad = pot.value_grad(pts)
    fd = np.empty_like(pts)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        up, _ = pot.value_grad(pts + e)
        down, _ = pot.value_grad(pts - e)
        fd[:, k] = (up - down) / (2.0 * step)
    err = np.linalg.norm(fd - grad, axis=1) / np.maximum(np.linalg.norm(grad, axis=1), 1.0)
    err = err[np.isfinite(err)]
    return float(np.max(err))


def lipschitz_audit(pot, pairs=10_000, seed=0, scale=3.0):
    """Largest observed |grad(x) - grad(y)| / |x - y| over random pairs."""
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((pairs, pot.dim))
    y = x + rng.standard_normal((pairs, pot.dim)) * rng.choice([1e-3, 1e-1, 1.0, 3.0], size=(pairs, 1))
    _, gx = pot.value_grad(x)
    _, gy = pot.value_grad(y)
    ratio = np.linalg.norm(gx - gy, axis=1) / np.linalg.norm(x - y, axis=1)
    return float(np.max(ratio))


def double_well(lam=0.5, A=0.72, L_U=8.0, dim=1):
    """The double-well confinement with the shipped admissible constants."""
    return ConfiningPotential("double_well", lam=lam, A=A, L_U=L_U, dim=dim)
