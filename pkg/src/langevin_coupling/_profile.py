"""Float64 building blocks of the concave distance profile.

With ``phi(s) = exp(-k s^2)``:

* ``Phi(s) = int_0^s phi`` has the closed form ``sqrt(pi)/(2 sqrt(k)) erf(sqrt(k) s)``.
* ``I(s) = int_0^s Phi/phi`` overflows for the radii we care about, so it is
  carried as ``log I(s) = k s^2 + log J(s)`` where

      J(s) = int_0^s Phi(s - w) exp(-k w (2 s - w)) dw

  is bounded and integrates cleanly after the substitution ``t = 2 k s w``.
"""

import math

import numpy as np
from scipy import integrate, special

# exp(-t/2) below this is far past double precision relative to J
_T_CUT = 80.0


def Phi(s, k):
    s = np.asarray(s, dtype=float)
    rk = math.sqrt(k)
    return 0.5 * math.sqrt(math.pi) / rk * special.erf(rk * s)


def log_Phi(s, k):
    return np.log(Phi(s, k))


def J_integral(s, k):
    """Bounded factor of int_0^s Phi/phi, see module docstring."""
    s = float(s)
    if s <= 0.0:
        return 0.0
    scale = 2.0 * k * s
    t_max = min(scale * s, _T_CUT)
    four_ks2 = 4.0 * k * s * s

    def integrand(t):
        return float(Phi(s - t / scale, k)) * math.exp(-t + t * t / four_ks2)

    val, _ = integrate.quad(integrand, 0.0, t_max, epsabs=0.0, epsrel=1e-13, limit=200)
    return val / scale


def log_I(s, k):
    """log of int_0^s Phi(u)/phi(u) du."""
    if s > 1e100:
        import mpmath

        # J(s) = Phi(inf) / (2 k s) up to a relative 1/(k s^2), far below double precision
        s = mpmath.mpf(s)
        return k * s * s + mpmath.log(0.5 * math.sqrt(math.pi / k) / (2.0 * k * s))
    s = float(s)
    j = J_integral(s, k)
    if j <= 0.0:
        return -math.inf
    return k * s * s + math.log(j)


def J_moment(s, k, nodes=64):
    """int_0^s J(u) du, with J from :func:`J_integral`.

    Gauss-Legendre on [0, min(s, 1)] and, past 1, in the variable log u, where
    J(u) ~ Phi(inf) / (2 k u) is smooth.
    """
    if s <= 0.0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    head = min(s, 1.0)
    u = 0.5 * head * (x + 1.0)
    total = 0.5 * head * float(np.dot(w, [J_integral(ui, k) for ui in u]))
    if s > 1.0:
        top = math.log(s)
        y = 0.5 * top * (x + 1.0)
        vals = [J_integral(math.exp(yi), k) * math.exp(yi) for yi in y]
        total += 0.5 * top * float(np.dot(w, vals))
    return total


def inf_ratio_log(R1, k, points=4096, r_min_rel=1e-8):
    """min over a log grid on (0, R1] of log(r phi(r) / Phi(r)).

    Returns (value, argmin).  Radii whose square overflows are handled with
    mpmath so huge particle radii still give a finite answer.
    """
    import mpmath

    hi = float(mpmath.log10(R1))
    lo = hi + math.log10(r_min_rel)
    if hi < 150.0:
        r = np.logspace(lo, hi, points)
        vals = np.log(r) - k * r * r - log_Phi(r, k)
        i = int(np.argmin(vals))
        return float(vals[i]), float(r[i])
    best, arg = math.inf, None
    for e in np.linspace(lo, hi, points):
        r = mpmath.mpf(10) ** e
        v = mpmath.log(r) - k * r * r - mpmath.log(
            mpmath.sqrt(mpmath.pi) / (2 * mpmath.sqrt(k)) * mpmath.erf(mpmath.sqrt(k) * r))
        if v < best:
            best, arg = v, r
    return best, arg
