"""Command line entry point: constants | check | contract | drift | chaos.

Every subcommand prints a JSON summary on stdout (also written to
``<out>/summary.json`` when an output directory is in play); the exit status
is 0 exactly when the summary's ``passed`` field is true.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import checks, config, experiments as ex
from ._backend import BACKEND, set_threads
from .constants import (MP, admissible_interaction_bound, derive_base_constants, derive_particle_constants,
                        rate_at, to_jsonable, verify_constraint_ledger)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SWEEP_TOLERANCE = 0.20
R2_MIN = 0.95
SLOPE_RANGE = (-0.75, -0.25)
UNIFORMITY_MAX = 1.5


def _parser():
    ap = argparse.ArgumentParser(prog="langevin-coupling", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in config.EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="run configuration file")
        p.add_argument("--seed", type=int, help="64-bit seed; overrides sim.seed")
        p.add_argument("--out", type=Path, help="output directory; overrides output.dir")
        p.add_argument("--replicas", type=int, help="overrides sim.n_replicas")
        p.add_argument("--dt", type=float, help="overrides sim.dt")
        p.add_argument("--threads", type=int, help="numba worker threads")
        if name == "constants":
            p.add_argument("--defaults", action="store_true", help="print the defaults table and exit")
    return ap


def _emit(summary, out_dir=None):
    doc = {"schema": ex.SCHEMA_VERSION}
    doc.update(summary)
    doc = to_jsonable(doc)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if doc.get("passed") else EXIT_FAIL


def _load(args):
    overrides = {("experiment", "kind"): args.command, ("sim", "seed"): args.seed,
                 ("sim", "n_replicas"): args.replicas, ("sim", "dt"): args.dt,
                 ("sim", "threads"): args.threads,
                 ("output", "dir"): str(args.out) if args.out else None}
    if args.config is not None:
        return config.load_config(args.config, overrides)
    return config.parse_config("", ".", overrides)


def _echo(cfg):
    return {"config": cfg.values, "backend": BACKEND}


def cmd_constants(cfg, out_dir):
    p = cfg.model
    dc = derive_base_constants(p)
    pc = derive_particle_constants(p, dc)
    ledger = verify_constraint_ledger(p, dc, pc)
    print(_constants_table(dc, pc, ledger), file=sys.stderr)
    return {"command": "constants", "passed": ledger.all_pass, "derived": dc.as_dict(),
            "particle": pc.as_dict(), "ledger": ledger.as_dict(), **_echo(cfg)}


def _constants_table(dc, pc, ledger):
    lines = []
    for title, table in (("derived", dc.as_dict()), ("particle", pc.as_dict())):
        lines.append(f"[{title}]")
        w = max(len(k) for k in table)
        lines += [f"  {k.ljust(w)}  {MP.nstr(MP.mpf(v), 8)}" for k, v in table.items()]
    lines.append("[ledger]")
    w = max(len(e.name) for e in ledger.entries)
    for e in ledger.entries:
        tag = "PASS" if e.satisfied else "FAIL"
        lines.append(f"  {tag}  {e.name.ljust(w)}  {MP.nstr(MP.mpf(e.lhs), 8)} {e.relation} "
                     f"{MP.nstr(MP.mpf(e.rhs), 8)}  slack={float(e.slack):.4g}")
    return "\n".join(lines)


def cmd_check(cfg, out_dir):
    res = checks.run_battery(cfg.model, cfg.pot_U, cfg.pot_W, seed=cfg.sim.seed,
                             pairs=int(cfg.exp["check_pairs"]))
    print(checks.format_table(res), file=sys.stderr)
    return {"command": "check", "passed": all(r.passed for r in res),
            "results": [r.as_dict() for r in res], **_echo(cfg)}


def cmd_contract(cfg, out_dir):
    p = cfg.model
    dc = derive_base_constants(p)
    tau = rate_at(dc, cfg.pot_W.L_W)
    if not tau > 0:
        bound = admissible_interaction_bound(p, dc)
        return {"command": "contract", "passed": False,
                "error": (f"tau = {MP.nstr(tau, 6)} <= 0; admissible_interaction_bound requires "
                          f"L_W < {MP.nstr(bound, 6)}"),
                "tau": tau, "admissible_interaction_bound": bound, **_echo(cfg)}
    R1 = float(dc.R1)
    fractions = list(config._floats(cfg.exp["xi_sweep"]))
    main_xi = cfg.sim.xi if cfg.sim.xi is not None else 1e-2 * R1
    runs = []
    main = None
    for frac in fractions:
        xi = frac * R1
        is_main = math.isclose(xi, main_xi, rel_tol=1e-12)
        res = ex.run_contraction(p, dc, cfg.pot_U, cfg.pot_W, cfg.sim.with_(xi=xi), cfg.init(1), cfg.init(2),
                                 w_every=int(cfg.exp["w_every"]) if is_main else 10**9)
        runs.append((frac, xi, res))
        if is_main:
            main = res
    if main is None:
        main = ex.run_contraction(p, dc, cfg.pot_U, cfg.pot_W, cfg.sim.with_(xi=main_xi), cfg.init(1),
                                  cfg.init(2), w_every=int(cfg.exp["w_every"]))
    out_dir.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out_dir / "contraction.csv", ex.CONTRACTION_COLUMNS,
                 ex.series_rows(main.series, ex.CONTRACTION_COLUMNS))
    ex.write_csv(out_dir / "contraction_xi_sweep.csv", ("xi_fraction", "xi", "rate", "rate_SE", "r_squared"),
                 [(f, xi, r.fit.rate, r.fit.rate_se, r.fit.r_squared) for f, xi, r in runs])
    rates = [r.fit.rate for _, _, r in runs]
    spread = (max(rates) - min(rates)) / main.fit.rate if runs else 0.0
    fit = main.fit
    positive = bool(all(v > 0 for v in main.series["E_rho"][1:]))
    rate_ok = bool(fit.rate >= float(tau) - 2.0 * fit.rate_se)
    checks_ = {"E_rho_positive": positive, "r_squared": fit.r_squared >= R2_MIN, "rate_ge_tau": rate_ok,
               "xi_sweep_spread": spread < SWEEP_TOLERANCE}
    return {"command": "contract", "passed": all(checks_.values()), "checks": checks_, "tau": tau,
            "fit": {"rate": fit.rate, "rate_SE": fit.rate_se, "intercept": fit.intercept,
                    "r_squared": fit.r_squared, "window": list(fit.window)},
            "xi": main.xi, "xi_sweep": [{"fraction": f, "xi": xi, "rate": r.fit.rate, "r_squared": r.fit.r_squared}
                                         for f, xi, r in runs],
            "xi_sweep_spread": spread, "excluded": main.series.excluded_count, **_echo(cfg)}


def cmd_drift(cfg, out_dir):
    p = cfg.model
    dc = derive_base_constants(p)
    res = ex.run_lyapunov_drift(p, dc, cfg.pot_U, cfg.pot_W, cfg.sim, cfg.init(1))
    out_dir.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out_dir / "drift.csv", ex.DRIFT_COLUMNS, ex.series_rows(res.series, ex.DRIFT_COLUMNS))
    return {"command": "drift", "passed": res.passed and res.terminal_ok,
            "checks": {"drift_margin": res.passed, "terminal_level": res.terminal_ok},
            "min_margin_SE": res.min_margin_SE, "terminal_E_H": float(res.series["E_H"][-1]),
            "terminal_bound": res.terminal_bound, "B": res.B, "gamma": res.gamma,
            "excluded": res.series.excluded_count, **_echo(cfg)}


def cmd_chaos(cfg, out_dir):
    p = cfg.model
    dc = derive_base_constants(p)
    pc = derive_particle_constants(p, dc)
    g = float(dc.gamma)
    t_eval = [t / g for t in config._floats(cfg.exp["t_eval"])]
    steps = [round(t / cfg.sim.dt) for t in t_eval]
    t_eval = [s * cfg.sim.dt for s in steps]
    sim = cfg.sim.with_(t_final=max(t_eval))
    moment, moment_se = cfg.init(1).exp_moment(p.tilde_A, seed=sim.seed)
    res = ex.run_chaos(p, dc, pc, cfg.pot_U, cfg.pot_W, sim, cfg.init(1), config._ints(cfg.exp["n_sweep"]),
                       t_eval, total_pairs=int(cfg.exp["total_pairs"]),
                       reference_size=int(cfg.exp["reference_size"]))
    out_dir.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out_dir / "chaos.csv", ex.CHAOS_COLUMNS, ex.chaos_rows(res))
    slope_ok = SLOPE_RANGE[0] <= res.slope_w1 <= SLOPE_RANGE[1]
    uniform_ok = bool(max(res.uniformity) <= UNIFORMITY_MAX)
    return {"command": "chaos", "passed": bool(slope_ok and uniform_ok and math.isfinite(moment)),
            "checks": {"slope_w1": slope_ok, "time_uniformity": uniform_ok},
            "slope_w1": res.slope_w1, "slope_w2sq": res.slope_w2sq, "uniformity": list(res.uniformity),
            "n_values": res.n_values, "t_eval": res.t_eval, "max_W1_sqrtN": list(res.max_w1_sqrtN),
            "exp_moment": {"estimate": moment, "SE": moment_se}, **_echo(cfg)}


COMMANDS = {"constants": cmd_constants, "check": cmd_check, "contract": cmd_contract,
            "drift": cmd_drift, "chaos": cmd_chaos}


def main(argv=None):
    args = _parser().parse_args(argv)
    if getattr(args, "defaults", False):
        print(config.defaults_document())
        return EXIT_OK
    try:
        cfg = _load(args)
    except config.ConfigError as exc:
        return _config_failure(args.command, exc.errors)
    except OSError as exc:
        return _config_failure(args.command, [("config", str(exc))])
    if args.command != "constants" and cfg.sim.seed is None:
        return _config_failure(args.command, [("sim.seed", "no seed given; set sim.seed or pass --seed")])
    try:
        set_threads(cfg.threads)
    except ValueError as exc:
        return _config_failure(args.command, [("sim.threads", str(exc))])
    out_dir = cfg.output_dir
    t0 = time.perf_counter()
    try:
        summary = COMMANDS[args.command](cfg, out_dir)
    except (ex.ConfigRejected, ex.FitRejected, ValueError) as exc:
        summary = {"command": args.command, "passed": False, "error": str(exc), **_echo(cfg)}
    summary["elapsed_s"] = round(time.perf_counter() - t0, 3)
    # elapsed time varies run to run, so it stays out of the artifact on disk
    file_summary = {k: v for k, v in summary.items() if k != "elapsed_s"}
    write_dir = out_dir if (args.out is not None or args.command in ("contract", "drift", "chaos")) else None
    if write_dir is not None:
        write_dir.mkdir(parents=True, exist_ok=True)
        doc = {"schema": ex.SCHEMA_VERSION}
        doc.update(file_summary)
        (write_dir / "summary.json").write_text(json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return _emit(summary)


def _config_failure(command, errors):
    _emit({"command": command, "passed": False, "errors": [{"key": k, "message": m} for k, m in errors]})
    return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
