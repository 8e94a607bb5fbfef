"""Euler-Maruyama time stepping of particle systems and coupled pairs.

Two coupled constructions are supported:

* ``pair_nonlinear``: M pairs of nonlinear processes, each side feeling the
  mean field of its own M-replica ensemble.
* ``particle_vs_nonlinear``: R replicas of an N-particle system (tilde side)
  coupled to N nonlinear copies per replica whose mean field comes from a
  separate reference ensemble.

Noise is addressed by (seed, tag, step, row), so trajectories depend only on
the seed and configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, _rng
from .potentials import W_HARMONIC, W_ZERO

MAX_EXCLUDED_FRACTION = 0.01


class SimulationDiverged(RuntimeError):
    """More than 1% of the replicas left the finite range."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_final: float = 1.0
    n_particles: int = 1
    n_replicas: int = 4096
    xi: float | None = None
    seed: int | None = None
    record_every: int = 100
    noise_scale: float = 1.0

    def validation_errors(self):
        errs = []
        if not (self.dt > 0 and self.dt <= 0.01):
            errs.append(("sim.dt", f"dt = {self.dt} must lie in (0, 0.01]"))
        if not self.t_final > 0:
            errs.append(("sim.t_final", "t_final must be positive"))
        elif self.dt > 0:
            steps = self.t_final / self.dt
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                errs.append(("sim.t_final", f"t_final/dt = {steps!r} is not an integer"))
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            errs.append(("sim.n_particles", "n_particles must be a positive integer"))
        if int(self.n_replicas) != self.n_replicas or self.n_replicas < 1:
            errs.append(("sim.n_replicas", "n_replicas must be a positive integer"))
        if self.xi is not None and not self.xi > 0:
            errs.append(("sim.xi", "xi must be positive"))
        if self.seed is not None and not (0 <= int(self.seed) < 2**64):
            errs.append(("sim.seed", "seed must be an unsigned 64-bit integer"))
        if int(self.record_every) != self.record_every or self.record_every < 1:
            errs.append(("sim.record_every", "record_every must be a positive integer"))
        if not self.noise_scale >= 0:
            errs.append(("sim.noise_scale", "noise_scale must be non-negative"))
        return errs

    def validate(self):
        errs = self.validation_errors()
        if errs:
            raise ValueError("; ".join(f"{k}: {m}" for k, m in errs))
        if self.seed is None:
            raise ValueError("sim.seed: a seed is required")
        return self

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def with_(self, **kw):
        return replace(self, **kw)


# --- coupling mechanics --------------------------------------------------------

def reflect_increment(e, dB, tol=1e-9):
    """(I - 2 e e^T) dB row-wise; rows with e = 0 are returned unchanged."""
    e = np.asarray(e, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if e.shape != dB.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {dB.shape}")
    norms = np.linalg.norm(np.atleast_2d(e), axis=-1)
    if np.any((norms != 0.0) & (np.abs(norms - 1.0) > tol)):
        raise ValueError("reflection direction must be a unit vector or zero")
    proj = np.sum(e * dB, axis=-1, keepdims=True)
    return dB - 2.0 * proj * e


def reflection_direction(z, w):
    """e = Q/|Q| with Q = z + w, or 0 when Q = 0."""
    q = np.asarray(z, dtype=float) + np.asarray(w, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(n > 0.0, q / np.where(n > 0.0, n, 1.0), 0.0)


def coupling_weights(z, w, xi, alpha, R1):
    """Piecewise-linear (rc, sc) with rc^2 + sc^2 = 1.

    rc ramps 0 -> 1 in |z+w| on [xi/2, xi] and 1 -> 0 in alpha|z| + |z+w|
    on [R1, R1 + xi].
    """
    if not xi > 0:
        raise ValueError("xi must be positive")
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    q = np.linalg.norm(z + w, axis=-1)
    s = alpha * np.linalg.norm(z, axis=-1) + q
    h1 = np.clip((q - 0.5 * xi) / (0.5 * xi), 0.0, 1.0)
    h2 = np.clip((R1 + xi - s) / xi, 0.0, 1.0)
    rc = h1 * h2
    return rc, np.sqrt(1.0 - rc * rc)


# --- state containers -------------------------------------------------------------

def _state(a, n, d):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    if a.shape != (n, d):
        raise ValueError(f"expected shape {(n, d)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("initial state must be finite")
    return a.copy()


@dataclass
class ParticleCloud:
    """Rows are particles; consecutive blocks of ``group`` rows interact."""

    x: np.ndarray
    v: np.ndarray
    group: int = 0
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        n, d = np.shape(self.x)
        self.x = _state(self.x, n, d)
        self.v = _state(self.v, n, d)
        if self.group == 0:
            self.group = n
        if n % self.group:
            raise ValueError("row count must be a multiple of the group size")
        if self.active is None:
            self.active = np.ones(n, dtype=np.uint8)
        self._g = np.empty((n, d))
        self._f = np.zeros((n, d))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def excluded(self):
        return int(self.n - self.active.sum())


MODES = ("pair_nonlinear", "particle_vs_nonlinear")


@dataclass
class CoupledCloud:
    """Coupled rows ((x, v), (xt, vt)); the tilde side receives reflected noise."""

    x: np.ndarray
    v: np.ndarray
    xt: np.ndarray
    vt: np.ndarray
    mode: str = "pair_nonlinear"
    group: int = 0
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        n, d = np.shape(self.x)
        self.x = _state(self.x, n, d)
        self.v = _state(self.v, n, d)
        self.xt = _state(self.xt, n, d)
        self.vt = _state(self.vt, n, d)
        if self.group == 0:
            self.group = n
        if n % self.group:
            raise ValueError("row count must be a multiple of the group size")
        if self.active is None:
            self.active = np.ones(n, dtype=np.uint8)
        self._g = np.empty((n, 2 * d))
        self._f = np.zeros((n, d))
        self._ft = np.zeros((n, d))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def excluded(self):
        return int(self.n - self.active.sum())

    def phase(self):
        """(n, 2d) arrays [x, v] and [xt, vt]."""
        return np.hstack([self.x, self.v]), np.hstack([self.xt, self.vt])


def check_divergence(*clouds):
    """Raise when any cloud has excluded more than 1% of its rows."""
    for c in clouds:
        if c.excluded > MAX_EXCLUDED_FRACTION * c.n:
            raise SimulationDiverged(f"{c.excluded} of {c.n} rows became non-finite")


# --- mean fields -------------------------------------------------------------------

def mean_field(x, active, group, pot_W, out, method="auto"):
    """(1/n_g) sum_j grad W(x_i - x_j) within each group of rows.

    ``method='auto'`` uses the O(N) form for harmonic W; ``'pairwise'``
    forces the O(N^2) sum.
    """
    code, params = pot_W.kernel_spec()
    if code == W_ZERO:
        out[:] = 0.0
    elif code == W_HARMONIC and method == "auto":
        _kernels.field_harmonic(x, active, group, params[0], out)
    else:
        _kernels.field_pairwise(x, active, group, code, params, out)
    return out


def external_field(y, x, active, pot_W, out):
    """(1/m) sum_j grad W(y_i - x_j) over an external ensemble x."""
    code, params = pot_W.kernel_spec()
    if code == W_ZERO:
        out[:] = 0.0
    else:
        _kernels.field_external(y, x, active, code, params, out)
    return out


def _uspec(pot_U):
    code, params, knots, coefs = pot_U.kernel_spec()
    return code, np.ascontiguousarray(params, dtype=float), np.ascontiguousarray(knots, dtype=float), \
        np.ascontiguousarray(coefs, dtype=float)


# --- steps -------------------------------------------------------------------------

def step_particle_system(cloud, pot_U, pot_W, cfg, step, tag=_rng.TAG_PARTICLE, offset=0):
    """One EM step of each interacting group of particles, in place."""
    mean_field(cloud.x, cloud.active, cloud.group, pot_W, cloud._f)
    k0, k1 = _rng.stream_key(cfg.seed, tag)
    code, params, knots, coefs = _uspec(pot_U)
    _kernels.langevin_step(cloud.x, cloud.v, cloud._f, cloud.active, cloud._g, code, params, knots, coefs,
                           float(cfg.dt), float(cfg.noise_scale), k0, k1, np.uint64(step), np.uint64(offset))
    return cloud


def step_pair_coupled(cloud, pot_U, pot_W, alpha, R1, cfg, step, tag=_rng.TAG_PAIR):
    """One EM step of M coupled nonlinear pairs, in place.

    Each side's law is represented by its own replica ensemble; e, rc and sc
    are frozen at the start of the step.
    """
    if cloud.mode != "pair_nonlinear":
        raise ValueError("step_pair_coupled needs mode 'pair_nonlinear'")
    mean_field(cloud.x, cloud.active, cloud.n, pot_W, cloud._f)
    mean_field(cloud.xt, cloud.active, cloud.n, pot_W, cloud._ft)
    _coupled(cloud, pot_U, alpha, R1, cfg, step, tag)
    return cloud


def _coupled(cloud, pot_U, alpha, R1, cfg, step, tag):
    k0, k1 = _rng.stream_key(cfg.seed, tag)
    code, params, knots, coefs = _uspec(pot_U)
    _kernels.coupled_step(cloud.x, cloud.v, cloud.xt, cloud.vt, cloud._f, cloud._ft, cloud.active, cloud._g,
                          code, params, knots, coefs, float(alpha), float(R1), float(cfg.xi), float(cfg.dt),
                          float(cfg.noise_scale), k0, k1, np.uint64(step), np.uint64(0))


def step_coupled_chaos(cloud, reference, pot_U, pot_W, alpha, R1, cfg, step):
    """One step of nonlinear copies (x side) coupled to particle systems (tilde side).

    The nonlinear copies feel the mean field of ``reference``, which advances
    as its own self-interacting ensemble with independent noise.  The particle
    side feels the mean field of its own group and receives the reflected noise.
    """
    if cloud.mode != "particle_vs_nonlinear":
        raise ValueError("step_coupled_chaos needs mode 'particle_vs_nonlinear'")
    external_field(cloud.x, reference.x, reference.active, pot_W, cloud._f)
    mean_field(cloud.xt, cloud.active, cloud.group, pot_W, cloud._ft)
    step_particle_system(reference, pot_U, pot_W, cfg, step, tag=_rng.TAG_REFERENCE)
    _coupled(cloud, pot_U, alpha, R1, cfg, step, _rng.TAG_CHAOS)
    return cloud


# --- initial laws ----------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianInit:
    """Independent Gaussian position and velocity with isotropic spreads."""

    mean_x: tuple = (0.0,)
    mean_v: tuple = (0.0,)
    std_x: float = 1.0
    std_v: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean_x", tuple(float(a) for a in np.atleast_1d(self.mean_x)))
        object.__setattr__(self, "mean_v", tuple(float(a) for a in np.atleast_1d(self.mean_v)))
        if len(self.mean_x) != len(self.mean_v):
            raise ValueError("mean_x and mean_v must have the same dimension")
        if not (self.std_x >= 0 and self.std_v >= 0):
            raise ValueError("standard deviations must be non-negative")

    @property
    def dim(self):
        return len(self.mean_x)

    def sample(self, n, seed, stream=0):
        """n draws as (x, v); ``stream`` separates independent samples under one seed."""
        d = self.dim
        k0, k1 = _rng.stream_key(seed, _rng.TAG_INIT)
        out = np.empty((n, 2 * d))
        _kernels.normals_block(k0, k1, np.uint64(stream), np.uint64(0), out)
        x = np.asarray(self.mean_x) + self.std_x * out[:, :d]
        v = np.asarray(self.mean_v) + self.std_v * out[:, d:]
        return x, v

    def exp_moment(self, a_tilde, samples=100_000, seed=0):
        """Monte Carlo estimate of E exp(a (|X| + |V|)) and its standard error."""
        x, v = self.sample(samples, seed, stream=2**32 - 1)
        vals = np.exp(a_tilde * (np.linalg.norm(x, axis=1) + np.linalg.norm(v, axis=1)))
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def coupled_from_inits(init_1, init_2, n, seed, mode="pair_nonlinear", group=0, same_draws=False):
    """Product coupling of two initial laws.

    Equal laws start on the diagonal instead, so the coupled pairs coincide.
    """
    x, v = init_1.sample(n, seed, stream=0)
    if same_draws or init_1 == init_2:
        xt, vt = x.copy(), v.copy()
    else:
        xt, vt = init_2.sample(n, seed, stream=1)
    return CoupledCloud(x, v, xt, vt, mode=mode, group=group)


__all__ = [
    "SimConfig", "SimulationDiverged", "ParticleCloud", "CoupledCloud", "GaussianInit",
    "reflect_increment", "reflection_direction", "coupling_weights", "mean_field", "external_field",
    "step_particle_system", "step_pair_coupled", "step_coupled_chaos", "coupled_from_inits",
    "check_divergence",
]
