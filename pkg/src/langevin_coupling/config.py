"""Run configuration: a sectioned key-value document parsed with configparser.

Every problem found while parsing is collected and reported together, each
tagged with its ``section.key`` path.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .constants import (DOUBLE_WELL_A, DOUBLE_WELL_L_U, DOUBLE_WELL_LAMBDA, DOUBLE_WELL_TILDE_A,
                        ModelParams)
from .dynamics import GaussianInit, SimConfig
from .potentials import CONFINING_KINDS, INTERACTION_KINDS, ConfiningPotential, InteractionPotential, RadialTable

DEFAULTS_VERSION = "v1"
EXPERIMENTS = ("constants", "check", "contract", "drift", "chaos")

# one table for every default; printed by `constants --defaults`
DEFAULTS = {
    "model": {
        "fixture": "double_well",
        "lambda": DOUBLE_WELL_LAMBDA,
        "A": DOUBLE_WELL_A,
        "tilde_A": DOUBLE_WELL_TILDE_A,
        "L_U": DOUBLE_WELL_L_U,
        "L_W": 0.0,
        "d": 1,
        "a": 1.0,
        "C0": 0.0,
        "U": "double_well",
        "U_stiffness": 1.0,
        "U_table": "",
        "W": "zero",
        "coulomb_a": 1.0,
        "coulomb_b": 1.0,
        "coulomb_k": 2,
        "coulomb_sign": 1,
    },
    "sim": {
        "dt": 1e-3,
        "t_final": 60.0,
        "n_particles": 1,
        "n_replicas": 4096,
        "xi": "auto",
        "seed": "",
        "record_every": 1000,
        "threads": "",
    },
    "experiment": {
        "kind": "constants",
        "init_mean_x": "0.0",
        "init_mean_v": "0.0",
        "init_std_x": 1.0,
        "init_std_v": 1.0,
        "init2_mean_x": "2.0",
        "init2_mean_v": "0.0",
        "init2_std_x": 1.0,
        "init2_std_v": 1.0,
        "xi_sweep": "0.1,0.01,0.001",
        "w_every": 10,
        "n_sweep": "32,128,512,2048",
        "t_eval": "1,2,5,10",
        "total_pairs": 32768,
        "reference_size": 4096,
        "check_pairs": 10000,
    },
    "output": {
        "dir": "out",
    },
}

_INT_KEYS = {"d", "coulomb_k", "coulomb_sign", "n_particles", "n_replicas", "record_every", "w_every",
             "total_pairs", "reference_size", "check_pairs"}
_STR_KEYS = {"fixture", "U", "U_table", "W", "kind", "dir", "init_mean_x", "init_mean_v", "init2_mean_x",
             "init2_mean_v", "xi_sweep", "n_sweep", "t_eval"}
_OPTIONAL = {"xi", "seed", "threads"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    model: ModelParams = None
    pot_U: ConfiningPotential = None
    pot_W: InteractionPotential = None
    sim: SimConfig = None
    threads: int | None = None
    source_dir: Path = Path(".")

    @property
    def experiment(self):
        return self.values["experiment"]["kind"]

    @property
    def exp(self):
        return self.values["experiment"]

    @property
    def output_dir(self):
        return Path(self.values["output"]["dir"])

    def init(self, which=1):
        e = self.exp
        p = "init" if which == 1 else "init2"
        return GaussianInit(_floats(e[f"{p}_mean_x"]), _floats(e[f"{p}_mean_v"]),
                            float(e[f"{p}_std_x"]), float(e[f"{p}_std_v"]))

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _coerce(key, raw):
    if key in _STR_KEYS:
        return str(raw).strip()
    if key in _OPTIONAL:
        s = str(raw).strip()
        if key == "xi":
            return "auto" if s in ("", "auto") else float(s)
        return None if s == "" else int(s)
    if key in _INT_KEYS:
        f = float(raw)
        if f != int(f):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(f)
    return float(raw)


def parse_config(text, source_dir=".", overrides=None):
    """Validated :class:`RunConfig`, or :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    errors = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("document", str(exc).splitlines()[0])]) from None
    values = {}
    for sec in cp.sections():
        if sec not in DEFAULTS:
            errors.append((sec, "unknown section"))
    for sec, table in DEFAULTS.items():
        values[sec] = {}
        given = cp[sec] if cp.has_section(sec) else {}
        for key in given:
            if key not in table:
                errors.append((f"{sec}.{key}", "unknown key"))
        for key, default in table.items():
            raw = given.get(key, default) if given else default
            try:
                values[sec][key] = _coerce(key, raw)
            except (TypeError, ValueError) as exc:
                errors.append((f"{sec}.{key}", f"cannot parse {raw!r}: {exc}"))
    for (sec, key), val in (overrides or {}).items():
        if val is not None:
            values[sec][key] = val
    if errors:
        raise ConfigError(errors)
    cfg = _build(values, Path(source_dir), errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _build(values, source_dir, errors):
    m, s, e = values["model"], values["sim"], values["experiment"]
    if m["fixture"] not in ("double_well", "custom"):
        errors.append(("model.fixture", f"unknown fixture {m['fixture']!r}; use double_well or custom"))
    if m["U"] not in CONFINING_KINDS:
        errors.append(("model.U", f"unknown confining potential {m['U']!r}"))
    if m["W"] not in INTERACTION_KINDS:
        errors.append(("model.W", f"unknown interaction potential {m['W']!r}"))
    if e["kind"] not in EXPERIMENTS:
        errors.append(("experiment.kind", f"unknown experiment {e['kind']!r}"))
    probe = object.__new__(ModelParams)
    for name, val in (("lam", m["lambda"]), ("A", m["A"]), ("tilde_A", m["tilde_A"]), ("L_U", m["L_U"]),
                      ("L_W", m["L_W"]), ("d", m["d"]), ("a", m["a"]), ("C0", m["C0"])):
        object.__setattr__(probe, name, val)
    for msg in probe.validation_errors():
        # messages open with the parameter name
        errors.append((f"model.{msg.split()[0]}", msg))
    try:
        table = None
        if m["U"] == "user_radial_table":
            if not m["U_table"]:
                errors.append(("model.U_table", "user_radial_table needs a table path"))
            else:
                p = Path(m["U_table"])
                table = RadialTable.from_csv(p if p.is_absolute() else source_dir / p)
        pot_U = ConfiningPotential(m["U"], m["lambda"], m["A"], m["L_U"], dim=m["d"],
                                   stiffness=m["U_stiffness"], table=table)
    except (ValueError, OSError) as exc:
        errors.append(("model.U", str(exc)))
        pot_U = None
    try:
        pot_W = InteractionPotential(m["W"], L_W=m["L_W"], coulomb_a=m["coulomb_a"],
                                     coulomb_b=m["coulomb_b"], coulomb_k=m["coulomb_k"],
                                     coulomb_sign=m["coulomb_sign"], dim=m["d"])
    except ValueError as exc:
        errors.append(("model.W", str(exc)))
        pot_W = None
    if pot_W is not None and m["W"] == "mollified_coulomb" and not pot_W.L_W < m["lambda"] / 8:
        errors.append(("model.W", f"mollified_coulomb has L_W = {pot_W.L_W:.6g}, violating L_W < lambda/8"))
    if pot_W is not None and m["W"] == "zero" and m["L_W"] != 0:
        errors.append(("model.L_W", "L_W must be 0 when W = zero"))
    sim = SimConfig(dt=s["dt"], t_final=s["t_final"], n_particles=s["n_particles"],
                    n_replicas=s["n_replicas"], xi=None if s["xi"] == "auto" else s["xi"],
                    seed=s["seed"], record_every=s["record_every"])
    errors.extend(sim.validation_errors())
    for key, parse in (("init_mean_x", _floats), ("init_mean_v", _floats), ("init2_mean_x", _floats),
                       ("init2_mean_v", _floats), ("xi_sweep", _floats), ("n_sweep", _ints), ("t_eval", _floats)):
        try:
            vals = parse(e[key])
        except ValueError:
            errors.append((f"experiment.{key}", f"cannot parse list {e[key]!r}"))
            continue
        if key.startswith("init") and len(vals) != m["d"]:
            errors.append((f"experiment.{key}", f"needs {m['d']} components, got {len(vals)}"))
    for key in ("init_std_x", "init_std_v", "init2_std_x", "init2_std_v"):
        if not e[key] >= 0:
            errors.append((f"experiment.{key}", "must be non-negative"))
    if s["threads"] is not None and s["threads"] < 1:
        errors.append(("sim.threads", "must be a positive integer"))
    if errors:
        return None
    L_W_eff = pot_W.L_W
    model = ModelParams(m["lambda"], m["A"], m["tilde_A"], m["L_U"], L_W_eff, m["d"], m["a"], m["C0"],
                        pot_U.grad_at_origin_norm())
    return RunConfig(values=values, model=model, pot_U=pot_U, pot_W=pot_W, sim=sim,
                     threads=s["threads"], source_dir=source_dir)


def load_config(path, overrides=None):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent, overrides)


def _emit_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(cfg_or_values):
    """Document text that parses back to an equal configuration."""
    values = cfg_or_values.values if isinstance(cfg_or_values, RunConfig) else cfg_or_values
    lines = [f"; run configuration, defaults table {DEFAULTS_VERSION}"]
    for sec, table in values.items():
        lines.append(f"[{sec}]")
        for key, val in table.items():
            lines.append(f"{key} = {_emit_value(val)}")
        lines.append("")
    return "\n".join(lines)


def defaults_document():
    return emit_config({sec: dict(t) for sec, t in DEFAULTS.items()})
