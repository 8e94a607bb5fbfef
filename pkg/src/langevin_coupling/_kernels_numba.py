"""Compiled Euler-Maruyama kernels.

States are (n, d) float64 arrays updated in place.  ``active`` is a uint8
mask; inactive rows are skipped and left out of every mean-field average.
Loops over particles run under ``prange``; every reduction across particles
is serial in a fixed order, so results do not depend on the thread count.
"""

import math

import numba
import numpy as np
from numba import prange

from ._rng import fill_normals
from .potentials import U_DOUBLE_WELL, U_QUADRATIC, W_HARMONIC, W_ZERO


@numba.njit(inline="always")
def _table_factor(r, tail, knots, coefs):
    r_end, _, ds_end, dds_end = tail[0], tail[1], tail[2], tail[3]
    if r > r_end:
        ds = ds_end + dds_end * (r - r_end)
        return ds / r
    lo, hi = 0, knots.size - 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if knots[mid] <= r:
            lo = mid
        else:
            hi = mid - 1
    t = r - knots[lo]
    if r > 0.0:
        ds = (3.0 * coefs[0, lo] * t + 2.0 * coefs[1, lo]) * t + coefs[2, lo]
        return ds / r
    return 2.0 * coefs[1, 0]


@numba.njit(inline="always")
def u_factor(r, code, params, knots, coefs):
    """S'(r)/r so that grad U(x) = u_factor(|x|) x."""
    if code == U_DOUBLE_WELL:
        if r < 1.0:
            return 4.0 * (r * r - 1.0)
        return 2.0 * (r - 1.0) / r
    if code == U_QUADRATIC:
        return params[0]
    return _table_factor(r, params, knots, coefs)


@numba.njit(inline="always")
def w_factor(r, code, params):
    """grad W(z) = w_factor(|z|) z."""
    if code == W_ZERO:
        return 0.0
    if code == W_HARMONIC:
        return params[0]
    # k is an integer >= 2; repeated products avoid a libm pow per pair
    a, b, k = params[0], params[1], int(params[2])
    rk2 = 1.0
    bk = 1.0
    for _ in range(k - 2):
        rk2 *= r
        bk *= b
    denom = rk2 * r * r + bk * b * b
    root = math.sqrt(denom) if k == 2 else denom ** (1.0 / k)
    return -a * rk2 / (denom * root)


@numba.njit(inline="always")
def _norm(a, i):
    s = 0.0
    for k in range(a.shape[1]):
        s += a[i, k] * a[i, k]
    return math.sqrt(s)


@numba.njit(cache=True)
def pairwise_sum(buf):
    """Fixed-order pairwise summation; ``buf`` is overwritten."""
    n = buf.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        for j in range(half):
            buf[j] = buf[2 * j] + buf[2 * j + 1]
        if n % 2:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


@numba.njit(cache=True)
def group_means(X, active, group):
    """Mean of the active rows of each contiguous block of ``group`` rows."""
    n, d = X.shape
    ng = n // group
    out = np.zeros((ng, d))
    buf = np.empty(group)
    for g in range(ng):
        cnt = 0
        for j in range(group):
            cnt += active[g * group + j]
        if cnt == 0:
            continue
        for k in range(d):
            m = 0
            for j in range(group):
                if active[g * group + j]:
                    buf[m] = X[g * group + j, k]
                    m += 1
            out[g, k] = pairwise_sum(buf[:m]) / cnt
    return out


@numba.njit(parallel=True, cache=True)
def field_harmonic(X, active, group, kappa, out):
    """kappa (x_i - mean of its group): the O(N) form of the harmonic field."""
    n, d = X.shape
    means = group_means(X, active, group)
    for i in prange(n):
        g = i // group
        for k in range(d):
            out[i, k] = kappa * (X[i, k] - means[g, k])


@numba.njit(parallel=True, cache=True)
def field_pairwise(X, active, group, code, params, out):
    """(1/n_g) sum_j grad W(x_i - x_j) over the active rows of i's group."""
    n, d = X.shape
    for i in prange(n):
        g0 = (i // group) * group
        cnt = 0
        for k in range(d):
            out[i, k] = 0.0
        for j in range(g0, g0 + group):
            if not active[j]:
                continue
            cnt += 1
            if j == i:
                continue
            s = 0.0
            for k in range(d):
                dz = X[i, k] - X[j, k]
                s += dz * dz
            fac = w_factor(math.sqrt(s), code, params)
            for k in range(d):
                out[i, k] += fac * (X[i, k] - X[j, k])
        if cnt > 0:
            for k in range(d):
                out[i, k] /= cnt


@numba.njit(parallel=True, cache=True)
def field_external(Y, X, active, code, params, out):
    """(1/m) sum_j grad W(y_i - x_j) against a separate ensemble X."""
    n, d = Y.shape
    m = X.shape[0]
    cnt = 0
    for j in range(m):
        cnt += active[j]
    if code == W_HARMONIC:
        means = group_means(X, active, m)
        for i in prange(n):
            for k in range(d):
                out[i, k] = params[0] * (Y[i, k] - means[0, k])
        return
    for i in prange(n):
        for k in range(d):
            out[i, k] = 0.0
        for j in range(m):
            if not active[j]:
                continue
            s = 0.0
            for k in range(d):
                dz = Y[i, k] - X[j, k]
                s += dz * dz
            if s == 0.0:
                continue
            fac = w_factor(math.sqrt(s), code, params)
            for k in range(d):
                out[i, k] += fac * (Y[i, k] - X[j, k])
        if cnt > 0:
            for k in range(d):
                out[i, k] /= cnt


@numba.njit(parallel=True, cache=True)
def langevin_step(X, V, F, active, G, ucode, uparams, uknots, ucoefs,
                  dt, noise_scale, key0, key1, step, offset):
    """One EM step of independent kinetic Langevin particles with external field F."""
    n, d = X.shape
    amp = math.sqrt(2.0 * dt) * noise_scale
    for i in prange(n):
        if not active[i]:
            continue
        fill_normals(G[i], key0, key1, step, offset + i)
        fac = u_factor(_norm(X, i), ucode, uparams, uknots, ucoefs)
        ok = True
        for k in range(d):
            x = X[i, k]
            v = V[i, k]
            xn = x + v * dt
            vn = v + (-v - fac * x - F[i, k]) * dt + amp * G[i, k]
            X[i, k] = xn
            V[i, k] = vn
            if not (math.isfinite(xn) and math.isfinite(vn)):
                ok = False
        if not ok:
            active[i] = 0


@numba.njit(inline="always")
def ramp_weights(q, s, xi, R1):
    h1 = (q - 0.5 * xi) / (0.5 * xi)
    h1 = min(max(h1, 0.0), 1.0)
    h2 = (R1 + xi - s) / xi
    h2 = min(max(h2, 0.0), 1.0)
    rc = h1 * h2
    return rc, math.sqrt(1.0 - rc * rc)


@numba.njit(parallel=True, cache=True)
def coupled_step(X, V, Xt, Vt, F, Ft, active, G, ucode, uparams, uknots, ucoefs,
                 alpha, R1, xi, dt, noise_scale, key0, key1, step, offset):
    """One EM step of the reflection/synchronous coupling.

    G[i] receives 2d normals: the first d drive the reflection part, the
    last d the synchronous part.  The tilde process gets the reflected copy.
    """
    n, d = X.shape
    amp = math.sqrt(2.0 * dt) * noise_scale
    for i in prange(n):
        if not active[i]:
            continue
        g = G[i]
        fill_normals(g, key0, key1, step, offset + i)
        zn = 0.0
        qn = 0.0
        for k in range(d):
            z = X[i, k] - Xt[i, k]
            q = z + V[i, k] - Vt[i, k]
            zn += z * z
            qn += q * q
        zn = math.sqrt(zn)
        qn = math.sqrt(qn)
        rc, sc = ramp_weights(qn, alpha * zn + qn, xi, R1)
        edb = 0.0
        if qn > 0.0:
            for k in range(d):
                edb += (X[i, k] - Xt[i, k] + V[i, k] - Vt[i, k]) / qn * g[k]
        fac = u_factor(_norm(X, i), ucode, uparams, uknots, ucoefs)
        fact = u_factor(_norm(Xt, i), ucode, uparams, uknots, ucoefs)
        ok = True
        for k in range(d):
            e = 0.0
            if qn > 0.0:
                e = (X[i, k] - Xt[i, k] + V[i, k] - Vt[i, k]) / qn
            db = g[k]
            dbr = db - 2.0 * edb * e
            n1 = amp * (rc * db + sc * g[d + k])
            n2 = amp * (rc * dbr + sc * g[d + k])
            x = X[i, k]
            v = V[i, k]
            xt = Xt[i, k]
            vt = Vt[i, k]
            X[i, k] = x + v * dt
            V[i, k] = v + (-v - fac * x - F[i, k]) * dt + n1
            Xt[i, k] = xt + vt * dt
            Vt[i, k] = vt + (-vt - fact * xt - Ft[i, k]) * dt + n2
            if not (math.isfinite(X[i, k]) and math.isfinite(V[i, k])
                    and math.isfinite(Xt[i, k]) and math.isfinite(Vt[i, k])):
                ok = False
        if not ok:
            active[i] = 0


@numba.njit(parallel=True, cache=True)
def normals_block(key0, key1, step, offset, out):
    for i in prange(out.shape[0]):
        fill_normals(out[i], key0, key1, step, offset + i)
