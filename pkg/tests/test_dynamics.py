import json
import math
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from langevin_coupling import dynamics as D
from langevin_coupling import potentials as P
from langevin_coupling._backend import PURE_NUMPY

QUAD = P.ConfiningPotential("quadratic", lam=0.5, A=0.0, L_U=1.0)
ZERO_W = P.InteractionPotential("zero")


def test_reflection_examples():
    np.testing.assert_array_equal(D.reflect_increment(np.array([1.0, 0.0]), np.array([3.0, 4.0])), [-3.0, 4.0])
    np.testing.assert_array_equal(D.reflect_increment(np.zeros(2), np.array([3.0, 4.0])), [3.0, 4.0])
    with pytest.raises(ValueError):
        D.reflect_increment(np.array([0.5, 0.0]), np.array([3.0, 4.0]))


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_reflection_is_an_isometric_involution(q, db):
    e = D.reflection_direction(np.array(q), np.zeros(3))
    db = np.array(db)
    r = D.reflect_increment(e, db)
    assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(db), rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(D.reflect_increment(e, r), db, rtol=1e-12, atol=1e-9)


def test_coupling_weight_examples():
    xi, alpha, R1 = 1.0, 2.0, 100.0
    z = np.zeros((1, 2))
    rc, sc = D.coupling_weights(z, np.array([[xi / 4, 0.0]]), xi, alpha, R1)
    assert (rc[0], sc[0]) == (0.0, 1.0)
    rc, sc = D.coupling_weights(z, np.array([[2 * xi, 0.0]]), xi, alpha, R1)
    assert (rc[0], sc[0]) == (1.0, 0.0)
    rc, _ = D.coupling_weights(np.array([[R1, 0.0]]), np.array([[0.0, 0.0]]), xi, alpha, R1)
    assert rc[0] == 0.0
    with pytest.raises(ValueError):
        D.coupling_weights(z, z, 0.0, alpha, R1)


@given(st.lists(st.floats(-200, 200), min_size=4, max_size=4), st.floats(1e-3, 10), st.floats(0.5, 5))
def test_coupling_weights_unit_and_lipschitz(vals, xi, alpha):
    z, w = np.array([vals[:2]]), np.array([vals[2:]])
    rc, sc = D.coupling_weights(z, w, xi, alpha, 50.0)
    assert abs(rc[0] ** 2 + sc[0] ** 2 - 1) <= 1e-12
    assert 0 <= rc[0] <= 1
    h = 1e-7
    rc2, _ = D.coupling_weights(z + h, w, xi, alpha, 50.0)
    # both ramps have slope at most 2/xi in their argument
    assert abs(rc2[0] - rc[0]) <= (2 / xi) * (alpha + 2) * math.sqrt(2) * h + 1e-12


def _damped(t, x0, v0):
    # x'' + x' + x = 0
    w = math.sqrt(3) / 2
    a, b = x0, (v0 + x0 / 2) / w
    e = math.exp(-t / 2)
    x = e * (a * math.cos(w * t) + b * math.sin(w * t))
    v = -x / 2 + e * w * (-a * math.sin(w * t) + b * math.cos(w * t))
    return x, v


def test_zero_noise_damped_oscillator():
    cloud = D.ParticleCloud(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]), group=1)
    cfg = D.SimConfig(dt=1e-4, t_final=1.0, seed=0, noise_scale=0.0)
    for k in range(cfg.n_steps):
        D.step_particle_system(cloud, QUAD, ZERO_W, cfg, k)
    for i, (x0, v0) in enumerate(((1.0, 0.0), (0.0, 1.0))):
        x, v = _damped(1.0, x0, v0)
        assert cloud.x[i, 0] == pytest.approx(x, abs=1e-3)
        assert cloud.v[i, 0] == pytest.approx(v, abs=1e-3)


def _harmonic_states(n, d, dyadic, seed):
    rng = np.random.default_rng(seed)
    if dyadic:
        return rng.integers(-64, 64, size=(n, d)) / 8.0
    return rng.normal(size=(n, d)) * 3.0


@pytest.mark.parametrize("dyadic", [True, False])
@pytest.mark.parametrize("kind", ["harmonic_attract", "harmonic_repulse"])
def test_harmonic_linear_path_matches_pairwise(dyadic, kind):
    n, d = 64, 2
    x = _harmonic_states(n * 3, d, dyadic, 4)
    active = np.ones(n * 3, dtype=np.uint8)
    w = P.InteractionPotential(kind, L_W=0.25, dim=d)
    fast, slow = np.empty_like(x), np.empty_like(x)
    D.mean_field(x, active, n, w, fast)
    D.mean_field(x, active, n, w, slow, method="pairwise")
    if dyadic:
        np.testing.assert_array_equal(fast, slow)
    else:
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)


def test_pairwise_field_matches_definition():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(16, 2))
    w = P.InteractionPotential("mollified_coulomb", coulomb_a=1.0, coulomb_b=0.5, coulomb_k=3, dim=2)
    out = np.empty_like(x)
    D.mean_field(x, np.ones(16, dtype=np.uint8), 8, w, out)
    for g in range(2):
        block = x[8 * g:8 * g + 8]
        ref = np.array([w.value_grad(block[i] - block)[1].sum(axis=0) / 8 for i in range(8)])
        np.testing.assert_allclose(out[8 * g:8 * g + 8], ref, rtol=1e-12, atol=1e-14)


def test_external_field_matches_definition():
    rng = np.random.default_rng(2)
    y, x = rng.normal(size=(5, 1)), rng.normal(size=(40, 1))
    active = np.ones(40, dtype=np.uint8)
    for w in (P.InteractionPotential("harmonic_attract", L_W=0.1),
              P.InteractionPotential("mollified_coulomb", coulomb_k=2)):
        out = np.empty_like(y)
        D.external_field(y, x, active, w, out)
        ref = np.array([w.value_grad(y[i] - x)[1].mean(axis=0) for i in range(5)])
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kind", P.INTERACTION_KINDS)
def test_single_particle_feels_no_interaction(kind):
    x0 = np.array([[0.3], [-1.2], [2.0]])
    v0 = np.array([[0.0], [0.5], [-0.1]])
    cfg = D.SimConfig(dt=1e-3, t_final=0.2, seed=11)
    a = D.ParticleCloud(x0, v0, group=1)
    b = D.ParticleCloud(x0, v0, group=1)
    w = P.InteractionPotential(kind, L_W=0.05)
    for k in range(cfg.n_steps):
        D.step_particle_system(a, P.double_well(), w, cfg, k)
        D.step_particle_system(b, P.double_well(), ZERO_W, cfg, k)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.v, b.v)


def test_permuted_particles_give_permuted_trajectory():
    rng = np.random.default_rng(3)
    x0, v0 = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    perm = rng.permutation(8)
    w = P.InteractionPotential("mollified_coulomb", coulomb_k=2, dim=2)
    cfg = D.SimConfig(dt=1e-3, t_final=0.5, seed=0, noise_scale=0.0)
    a = D.ParticleCloud(x0, v0)
    b = D.ParticleCloud(x0[perm], v0[perm])
    for k in range(cfg.n_steps):
        D.step_particle_system(a, P.double_well(dim=2), w, cfg, k)
        D.step_particle_system(b, P.double_well(dim=2), w, cfg, k)
    np.testing.assert_allclose(b.x, a.x[perm], rtol=0, atol=1e-12)
    np.testing.assert_allclose(b.v, a.v[perm], rtol=0, atol=1e-12)


def test_particle_noise_is_keyed_by_row_and_offset():
    # rows 4..7 of a cloud see the same noise as a 4-row cloud started at offset 4
    rng = np.random.default_rng(5)
    x0, v0 = rng.normal(size=(8, 1)), rng.normal(size=(8, 1))
    cfg = D.SimConfig(dt=1e-3, t_final=0.05, seed=2)
    a = D.ParticleCloud(x0, v0, group=1)
    b = D.ParticleCloud(x0[4:], v0[4:], group=1)
    for k in range(cfg.n_steps):
        D.step_particle_system(a, QUAD, ZERO_W, cfg, k)
        D.step_particle_system(b, QUAD, ZERO_W, cfg, k, offset=4)
    np.testing.assert_array_equal(a.x[4:], b.x)


def _lyapunov_recursion(stiffness, dt, steps, cov0):
    A = np.array([[1.0, dt], [-stiffness * dt, 1.0 - dt]])
    S = cov0.copy()
    Q = np.diag([0.0, 2.0 * dt])
    for _ in range(steps):
        S = A @ S @ A.T + Q
    return S


def test_harmonic_particle_moments_follow_discrete_recursion():
    # with quadratic U the mean mode feels U only and the deviations feel U + kappa
    N, R, kappa, dt, steps = 64, 256, 0.5, 1e-2, 300
    init = D.GaussianInit((0.0,), (0.0,), 1.0, 0.5)
    x0, v0 = init.sample(N * R, seed=8)
    cloud = D.ParticleCloud(x0, v0, group=N)
    w = P.InteractionPotential("harmonic_attract", L_W=kappa)
    cfg = D.SimConfig(dt=dt, t_final=dt * steps, seed=8)
    for k in range(steps):
        D.step_particle_system(cloud, QUAD, w, cfg, k)
    cov0 = np.diag([1.0, 0.25])
    S = (_lyapunov_recursion(1.0, dt, steps, cov0) / N
         + _lyapunov_recursion(1.0 + kappa, dt, steps, cov0) * (1 - 1 / N))
    for est, ref in ((cloud.x[:, 0] ** 2, S[0, 0]), (cloud.v[:, 0] ** 2, S[1, 1]),
                     (cloud.x[:, 0] * cloud.v[:, 0], S[0, 1])):
        # replicas are independent across groups; use group means for the SE
        per_group = est.reshape(R, N).mean(axis=1)
        se = per_group.std(ddof=1) / math.sqrt(R)
        assert abs(per_group.mean() - ref) <= 3 * se, (per_group.mean(), ref, se)


def test_identical_pairs_stay_identical_with_interaction():
    init = D.GaussianInit((0.0,), (0.0,), 1.0, 1.0)
    cloud = D.coupled_from_inits(init, init, 128, seed=4)
    w = P.InteractionPotential("harmonic_attract", L_W=0.03)
    cfg = D.SimConfig(dt=1e-3, t_final=1.0, seed=4, xi=0.5)
    for k in range(cfg.n_steps):
        D.step_pair_coupled(cloud, P.double_well(), w, 8.125, 1000.0, cfg, k)
    assert np.array_equal(cloud.x, cloud.xt) and np.array_equal(cloud.v, cloud.vt)


def test_chaos_coupling_without_interaction_is_identity():
    init = D.GaussianInit((0.0,), (0.0,), 1.0, 1.0)
    x0, v0 = init.sample(64, seed=1)
    cloud = D.CoupledCloud(x0, v0, x0, v0, mode="particle_vs_nonlinear", group=16)
    rx, rv = init.sample(32, seed=1, stream=1)
    ref = D.ParticleCloud(rx, rv)
    cfg = D.SimConfig(dt=1e-3, t_final=0.5, seed=1, xi=1e-3)
    for k in range(cfg.n_steps):
        D.step_coupled_chaos(cloud, ref, P.double_well(), ZERO_W, 8.125, 1e3, cfg, k)
    assert np.array_equal(cloud.x, cloud.xt) and np.array_equal(cloud.v, cloud.vt)
    with pytest.raises(ValueError):
        D.step_pair_coupled(cloud, P.double_well(), ZERO_W, 8.125, 1e3, cfg, 0)


def test_reflection_coupling_in_the_step():
    # far-apart pairs inside the reflection zone: the Q noise is doubled and the rest cancels
    n = 4000
    x = np.zeros((n, 1))
    v = np.zeros((n, 1))
    cloud = D.CoupledCloud(x, v, x - 1.0, v.copy())
    cfg = D.SimConfig(dt=1e-3, t_final=1e-3, seed=6, xi=0.01)
    D.step_pair_coupled(cloud, QUAD, ZERO_W, 2.0, 100.0, cfg, 0)
    dq = (cloud.v - cloud.vt)[:, 0]
    drift = -(0.0 - 1.0) * 1e-3 * 1.0  # -(x - xt) dt with stiffness 1
    noise = dq + drift
    assert np.std(noise) == pytest.approx(2 * math.sqrt(2e-3), rel=0.05)
    np.testing.assert_allclose((cloud.v + cloud.vt)[:, 0] + (1.0 * (-1.0)) * 1e-3,
                               2 * cloud.v[:, 0] - noise, atol=1e-12)


def test_divergence_policy():
    x0 = np.array([[0.0]] * 200)
    cloud = D.ParticleCloud(x0, x0.copy())
    cloud.active[:2] = 0
    D.check_divergence(cloud)
    cloud.active[:3] = 0
    with pytest.raises(D.SimulationDiverged):
        D.check_divergence(cloud)


def test_blow_up_marks_rows_inactive():
    stiff = P.ConfiningPotential("quadratic", lam=0.5, A=0.0, L_U=1e10, stiffness=1e10)
    cloud = D.ParticleCloud(np.array([[1e300], [0.0]]), np.array([[0.0], [0.0]]), group=1)
    cfg = D.SimConfig(dt=1e-2, t_final=0.1, seed=0)
    for k in range(cfg.n_steps):
        D.step_particle_system(cloud, stiff, ZERO_W, cfg, k)
    assert cloud.active.tolist() == [0, 1]
    assert cloud.excluded == 1


def test_config_validation():
    assert D.SimConfig(dt=0.02).validation_errors()[0][0] == "sim.dt"
    assert any(k == "sim.t_final" for k, _ in D.SimConfig(dt=3e-3, t_final=1.0).validation_errors())
    with pytest.raises(ValueError):
        D.SimConfig().validate()
    with pytest.raises(ValueError):
        D.ParticleCloud(np.zeros((6, 1)), np.zeros((6, 1)), group=4)
    with pytest.raises(ValueError):
        D.ParticleCloud(np.array([[np.nan]]), np.zeros((1, 1)))


def test_gaussian_init_moments():
    init = D.GaussianInit((1.0, -2.0), (0.5, 0.0), 2.0, 0.5)
    x, v = init.sample(200_000, seed=3)
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -2.0], atol=0.02)
    np.testing.assert_allclose(v.std(axis=0), [0.5, 0.5], rtol=0.01)
    m, se = D.GaussianInit((0.0,), (0.0,), 1.0, 1.0).exp_moment(0.1, samples=50_000)
    # E exp(a|X|) for a standard normal is 2 exp(a^2/2) Phi(a), squared for two coordinates
    exact = (2 * math.exp(0.005) * 0.5 * (1 + math.erf(0.1 / math.sqrt(2)))) ** 2
    assert abs(m - exact) <= 4 * se


_WORKER = textwrap.dedent("""
    import hashlib, json, sys
    import numpy as np
    from langevin_coupling import dynamics as D, potentials as P
    init = D.GaussianInit((0.0,), (0.0,), 1.0, 1.0)
    cloud = D.coupled_from_inits(init, D.GaussianInit((2.0,), (0.0,), 1.0, 1.0), 512, seed=7)
    parts = D.ParticleCloud(*init.sample(512, seed=7), group=32)
    w = P.InteractionPotential("mollified_coulomb", coulomb_k=2)
    h = P.InteractionPotential("harmonic_attract", L_W=0.03)
    cfg = D.SimConfig(dt=1e-3, t_final=0.2, seed=7, xi=0.5)
    for k in range(cfg.n_steps):
        D.step_pair_coupled(cloud, P.double_well(), h, 8.125, 100.0, cfg, k)
        D.step_particle_system(parts, P.double_well(), w, cfg, k)
    blob = b"".join(a.tobytes() for a in (cloud.x, cloud.v, cloud.xt, cloud.vt, parts.x, parts.v))
    print(json.dumps({"hash": hashlib.sha256(blob).hexdigest(),
                      "x": cloud.x[:8, 0].tolist(), "px": parts.x[:8, 0].tolist()}))
""")


def _run_worker(env_extra):
    env = dict(os.environ, **env_extra)
    out = subprocess.run([sys.executable, "-c", _WORKER], env=env, capture_output=True, text=True,
                         check=True, timeout=600)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.skipif(PURE_NUMPY, reason="thread counts only apply to the compiled backend")
def test_trajectories_independent_of_thread_count():
    one = _run_worker({"NUMBA_NUM_THREADS": "1"})
    eight = _run_worker({"NUMBA_NUM_THREADS": "8"})
    assert one["hash"] == eight["hash"]


@pytest.mark.skipif(PURE_NUMPY, reason="compares against the compiled backend")
def test_numpy_backend_agrees_with_compiled():
    compiled = _run_worker({})
    plain = _run_worker({"LANGEVIN_COUPLING_PURE_NUMPY": "1"})
    np.testing.assert_allclose(plain["x"], compiled["x"], rtol=0, atol=1e-10)
    np.testing.assert_allclose(plain["px"], compiled["px"], rtol=0, atol=1e-10)
