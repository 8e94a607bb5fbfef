"""Vectorised numpy versions of the kernels in ``_kernels_numba``.

Same signatures and in-place semantics; selected by ``_backend.PURE_NUMPY``.
"""

import numpy as np

from ._rng import normals_numpy
from .potentials import U_DOUBLE_WELL, U_QUADRATIC, W_HARMONIC, W_ZERO, _table_profile


def u_factor(r, code, params, knots, coefs):
    r = np.asarray(r, dtype=float)
    if code == U_DOUBLE_WELL:
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = 2.0 * (r - 1.0) / r
        return np.where(r < 1.0, 4.0 * (r * r - 1.0), outer)
    if code == U_QUADRATIC:
        return np.full_like(r, params[0])
    _, ds, dds = _table_profile(knots, coefs, params, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0.0, ds / np.where(r > 0.0, r, 1.0), dds)


def w_factor(r, code, params):
    r = np.asarray(r, dtype=float)
    if code == W_ZERO:
        return np.zeros_like(r)
    if code == W_HARMONIC:
        return np.full_like(r, params[0])
    a, b, k = params[0], params[1], params[2]
    return -a * r ** (k - 2.0) / (r**k + b**k) ** (1.0 + 1.0 / k)


def pairwise_sum(buf):
    return float(np.sum(buf))


def group_means(X, active, group):
    n, d = X.shape
    w = active.astype(float).reshape(-1, group, 1)
    xs = np.where(w > 0, X.reshape(-1, group, d), 0.0)
    cnt = w.sum(axis=1)
    return np.where(cnt > 0, xs.sum(axis=1) / np.maximum(cnt, 1.0), 0.0)


def field_harmonic(X, active, group, kappa, out):
    means = group_means(X, active, group)
    out[:] = kappa * (X - np.repeat(means, group, axis=0))


def field_pairwise(X, active, group, code, params, out):
    n, d = X.shape
    Xg = X.reshape(-1, group, d)
    mask = active.reshape(-1, group).astype(bool)
    for g in range(Xg.shape[0]):
        diff = Xg[g][:, None, :] - Xg[g][None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = w_factor(r, code, params)
        fac = np.where(mask[g][None, :] & (r > 0.0), fac, 0.0)
        cnt = max(int(mask[g].sum()), 1)
        out[g * group:(g + 1) * group] = np.sum(fac[:, :, None] * diff, axis=1) / cnt


def field_external(Y, X, active, code, params, out):
    mask = active.astype(bool)
    if code == W_HARMONIC:
        out[:] = params[0] * (Y - group_means(X, active, X.shape[0])[0])
        return
    Xa = X[mask]
    cnt = max(Xa.shape[0], 1)
    for i in range(Y.shape[0]):
        diff = Y[i][None, :] - Xa
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0.0, w_factor(r, code, params), 0.0)
        out[i] = np.sum(fac[:, None] * diff, axis=0) / cnt


def langevin_step(X, V, F, active, G, ucode, uparams, uknots, ucoefs,
                  dt, noise_scale, key0, key1, step, offset):
    n, d = X.shape
    idx = np.flatnonzero(active)
    G[idx] = normals_numpy(key0, key1, step, np.uint64(offset) + idx.astype(np.uint64), d)
    amp = np.sqrt(2.0 * dt) * noise_scale
    x, v = X[idx], V[idx]
    fac = u_factor(np.sqrt(np.sum(x * x, axis=1)), ucode, uparams, uknots, ucoefs)[:, None]
    xn = x + v * dt
    vn = v + (-v - fac * x - F[idx]) * dt + amp * G[idx]
    X[idx] = xn
    V[idx] = vn
    bad = ~(np.all(np.isfinite(xn), axis=1) & np.all(np.isfinite(vn), axis=1))
    active[idx[bad]] = 0


def ramp_weights(q, s, xi, R1):
    h1 = np.clip((q - 0.5 * xi) / (0.5 * xi), 0.0, 1.0)
    h2 = np.clip((R1 + xi - s) / xi, 0.0, 1.0)
    rc = h1 * h2
    return rc, np.sqrt(1.0 - rc * rc)


def coupled_step(X, V, Xt, Vt, F, Ft, active, G, ucode, uparams, uknots, ucoefs,
                 alpha, R1, xi, dt, noise_scale, key0, key1, step, offset):
    n, d = X.shape
    idx = np.flatnonzero(active)
    g = normals_numpy(key0, key1, step, np.uint64(offset) + idx.astype(np.uint64), 2 * d)
    G[idx] = g
    amp = np.sqrt(2.0 * dt) * noise_scale
    x, v, xt, vt = X[idx], V[idx], Xt[idx], Vt[idx]
    z = x - xt
    q = z + v - vt
    zn = np.sqrt(np.sum(z * z, axis=1))
    qn = np.sqrt(np.sum(q * q, axis=1))
    rc, sc = ramp_weights(qn, alpha * zn + qn, xi, R1)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(qn[:, None] > 0.0, q / np.where(qn > 0.0, qn, 1.0)[:, None], 0.0)
    db = g[:, :d]
    edb = np.sum(e * db, axis=1)[:, None]
    dbr = db - 2.0 * edb * e
    n1 = amp * (rc[:, None] * db + sc[:, None] * g[:, d:])
    n2 = amp * (rc[:, None] * dbr + sc[:, None] * g[:, d:])
    fac = u_factor(np.sqrt(np.sum(x * x, axis=1)), ucode, uparams, uknots, ucoefs)[:, None]
    fact = u_factor(np.sqrt(np.sum(xt * xt, axis=1)), ucode, uparams, uknots, ucoefs)[:, None]
    X[idx] = x + v * dt
    V[idx] = v + (-v - fac * x - F[idx]) * dt + n1
    Xt[idx] = xt + vt * dt
    Vt[idx] = vt + (-vt - fact * xt - Ft[idx]) * dt + n2
    bad = ~np.all(np.isfinite(np.hstack([X[idx], V[idx], Xt[idx], Vt[idx]])), axis=1)
    active[idx[bad]] = 0


def normals_block(key0, key1, step, offset, out):
    out[:] = normals_numpy(key0, key1, step, np.uint64(offset) + np.arange(out.shape[0], dtype=np.uint64),
                           out.shape[1])
