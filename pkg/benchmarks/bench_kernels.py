"""Time the hot kernels under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--rows 4096] [--steps 200]

The backend is fixed at import, so each backend runs in its own subprocess.
"""

import argparse
import json
import os
import subprocess
import sys
import time

BACKENDS = {"numba": "0", "numpy": "1"}


def _time(fn, steps):
    fn(0)  # compile / warm up
    t0 = time.perf_counter()
    for k in range(1, steps + 1):
        fn(k)
    return (time.perf_counter() - t0) / steps


def worker(rows, steps, pair_group):
    import numpy as np

    from langevin_coupling import constants as C
    from langevin_coupling import dynamics as D
    from langevin_coupling import potentials as P

    p = C.double_well_params()
    dc = C.derive_base_constants(p)
    pot_U = P.double_well()
    harmonic = P.InteractionPotential("harmonic_attract", L_W=0.03125)
    coulomb = P.InteractionPotential("mollified_coulomb", coulomb_a=0.05, coulomb_b=1.0, coulomb_k=2)
    cfg = D.SimConfig(dt=1e-3, t_final=1.0, seed=1, xi=0.01 * float(dc.R1))
    init = D.GaussianInit((0.0,), (0.0,), 1.0, 1.0)
    alpha, R1 = float(dc.alpha), float(dc.R1)
    x, v = init.sample(rows, seed=1)

    cloud = D.ParticleCloud(x.copy(), v.copy())
    pair = D.coupled_from_inits(init, D.GaussianInit((2.0,), (0.0,), 1.0, 1.0), rows, seed=1)
    small = D.ParticleCloud(x.copy(), v.copy(), group=pair_group)
    out = np.empty_like(x)
    return {
        "particle_step_harmonic": _time(lambda k: D.step_particle_system(cloud, pot_U, harmonic, cfg, k), steps),
        "pair_coupled_step": _time(lambda k: D.step_pair_coupled(pair, pot_U, harmonic, alpha, R1, cfg, k), steps),
        f"pairwise_field_group{pair_group}": _time(
            lambda k: D.mean_field(small.x, small.active, small.group, coulomb, out), steps),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--pair-group", type=int, default=256)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(worker(args.rows, args.steps, args.pair_group)))
        return
    results = {}
    for name, flag in BACKENDS.items():
        env = dict(os.environ, LANGEVIN_COUPLING_PURE_NUMPY=flag)
        cmd = [sys.executable, __file__, "--worker", "--rows", str(args.rows), "--steps", str(args.steps),
               "--pair-group", str(args.pair_group)]
        results[name] = json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)
    print(f"rows={args.rows} steps={args.steps}")
    print(f"{'kernel':<30}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for kernel in results["numba"]:
        a, b = results["numba"][kernel] * 1e3, results["numpy"][kernel] * 1e3
        print(f"{kernel:<30}{a:>12.3f}{b:>12.3f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
