"""Flat ``key = value`` experiment configs with per-experiment typed schemas."""
from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

EXPERIMENTS = ("eigensolve", "flea-sweep", "nwell", "dynamics", "gamma-scan", "husimi",
               "converge", "toy-drift", "toy-bound", "sg", "spinchain")

FLOAT, INT, STR, BOOL, FLOATS, INTS, STRS = "float", "int", "str", "bool", "floats", "ints", "strs"

_FLEA = {
    "flea_shape": (STR, "parabolic", ("parabolic", "gaussian")),
    "flea_center": (FLOAT, 1.0),
    "flea_width": (FLOAT, 0.25),
    "flea_height": (FLOAT, 1.0),
}
_MODEL = {"lam": (FLOAT, 1.0), "a": (FLOAT, 1.0), "mass": (FLOAT, 1.0), "n_points": (INT, 2048)}

SCHEMAS = {
    "eigensolve": {
        "potential": (STR, "double_well", ("double_well", "nwell")),
        "xi": (FLOATS, [0.6, 0.4, 0.2]),
        "k": (INT, 4),
        "flea": (STR, "both", ("on", "off", "both")),
        "n_wells": (INT, 4),
        "v_b": (FLOAT, 1.0),
        **_MODEL, **_FLEA, "flea_height": (FLOAT, 0.001),
    },
    "flea-sweep": {
        "xi": (FLOATS, [0.1, 0.15, 0.2]),
        "eps": (FLOATS, list(np.logspace(-1, -12, 45))),
        **_MODEL, "lam": (FLOAT, 9.0), **_FLEA,
    },
    "nwell": {
        "n_wells": (INT, 4), "xi": (FLOAT, 0.2), "v_b": (FLOAT, 1.0), "a": (FLOAT, 1.0),
        "n_points": (INT, 1024), "k": (INT, 4),
        "single_flea_well": (INT, 0), "single_flea_height": (FLOAT, 0.05),
        "single_flea_width": (FLOAT, 0.3),
        "random_fleas": (INT, 3), "height_min": (FLOAT, 0.01), "height_max": (FLOAT, 0.05),
    },
    "dynamics": {
        "mode": (STR, "trajectory", ("trajectory", "quench-study")),
        "schedule": (STR, "sin_ramp", ("static", "quench", "sin_ramp", "white_noise", "poisson")),
        "xi": (FLOAT, 0.3),
        **_MODEL, **_FLEA, "flea_height": (FLOAT, 0.5),
        "epsilon": (FLOAT, 1.0), "t_on": (FLOAT, 0.0), "T": (FLOAT, 1.0),
        "noise_amplitude": (FLOAT, 0.01), "dt_noise": (FLOAT, 0.5),
        "kick_rate": (FLOAT, 0.1), "kick_scale": (FLOAT, 0.01),
        "dt": (FLOAT, 0.02), "t_end": (FLOAT, 0.0), "stride": (INT, 10), "k": (INT, 2),
        "study_decades": (FLOAT, 2.0), "study_points": (INT, 9),
        "study_xi": (FLOAT, 0.2), "study_lam": (FLOAT, 9.0), "study_flea_height": (FLOAT, 1.0),
        "horizon": (FLOAT, 0.0),
    },
    "gamma-scan": {
        "hbar": (FLOATS, list(np.linspace(0.04, 0.08, 9))),
        **_MODEL, "lam": (FLOAT, 9.0), **_FLEA, "flea_height": (FLOAT, 1e-10),
        "shrink": (INT, 12),
    },
    "husimi": {
        "xi": (FLOAT, 0.05), **_MODEL, **_FLEA, "flea_height": (FLOAT, 0.01),
        "state": (STR, "ground", ("ground", "flea", "coherent")),
        "p0": (FLOAT, 0.0), "q0": (FLOAT, 0.7),
        "p_range": (FLOATS, [-3.0, 3.0]), "q_range": (FLOATS, [-2.0, 2.0]),
        "n_p": (INT, 128), "n_q": (INT, 128),
    },
    "converge": {
        "hbar": (FLOATS, [0.2, 0.1, 0.05, 0.025]),
        "family": (STR, "symmetric", ("symmetric", "flea")),
        **_MODEL, **_FLEA, "flea_height": (FLOAT, 0.01),
        "test_functions": (STRS, ["bump_right", "bump_left", "bump_barrier", "bump_far"]),
        "p_range": (FLOATS, [-3.0, 3.0]), "q_range": (FLOATS, [-3.0, 3.0]),
        "n_p": (INT, 128), "n_q": (INT, 192),
    },
    "toy-drift": {
        "d": (INT, 16), "eps": (FLOATS, [0.0, 1e-3, 1e-2]), "instances": (INT, 1000),
    },
    "toy-bound": {
        "d": (INT, 16), "eps1": (FLOAT, 1e-2), "eps2": (FLOAT, 1e-2), "instances": (INT, 500),
        "ortho_eps": (FLOATS, [0.0, 0.01, 1.0]), "ortho_trials": (INT, 1000),
        "adversarial_angles": (INT, 21),
    },
    "sg": {
        "alpha_re": (FLOAT, 1 / math.sqrt(2)), "alpha_im": (FLOAT, 0.0),
        "beta_re": (FLOAT, 1 / math.sqrt(2)), "beta_im": (FLOAT, 0.0),
        "s": (FLOAT, 6.0), "sigma": (FLOAT, 1.0),
        "slit": (STR, "right", ("full", "right", "left", "interval")),
        "slit_interval": (FLOATS, [0.0, 10.0]),
    },
    "spinchain": {
        "N": (INTS, [2, 4, 6, 8, 10]), "B": (FLOAT, 0.5),
        "variant": (STR, "transverse", ("as_printed", "transverse")),
        "boundary": (STR, "ring", ("open", "ring")),
        "flea_index": (INT, 0), "eps": (FLOAT, 1e-8), "k": (INT, 2),
    },
}

_FUNC = re.compile(r"^(logspace|linspace)\(([^)]*)\)$")


def parse_value(text: str):
    """Literal from config text: number, bool, bare word, [list], or log/linspace(a, b, n)."""
    t = text.strip()
    m = _FUNC.match(t)
    if m:
        args = [a.strip() for a in m.group(2).split(",")]
        if len(args) != 3:
            raise ConfigError(f"{m.group(1)} needs three arguments: {text!r}")
        lo, hi, n = float(args[0]), float(args[1]), int(args[2])
        fn = np.logspace if m.group(1) == "logspace" else np.linspace
        return [float(v) for v in fn(lo, hi, n)]
    if t.startswith("[") and t.endswith("]"):
        inner = t[1:-1].strip()
        return [parse_value(p) for p in inner.split(",")] if inner else []
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t.strip("\"'")


def parse_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key] = parse_value(val)
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        out[key.strip()] = parse_value(val)
    return out


def _coerce(key, kind, value, choices=None):
    try:
        if kind == FLOAT:
            if isinstance(value, bool) or isinstance(value, (list, str)):
                raise TypeError
            v = float(value)
        elif kind == INT:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            v = int(value)
        elif kind == BOOL:
            if not isinstance(value, bool):
                raise TypeError
            v = value
        elif kind == STR:
            v = str(value)
        elif kind == FLOATS:
            vals = value if isinstance(value, list) else [value]
            v = [_coerce(key, FLOAT, x) for x in vals]
        elif kind == INTS:
            vals = value if isinstance(value, list) else [value]
            v = [_coerce(key, INT, x) for x in vals]
        elif kind == STRS:
            vals = value if isinstance(value, list) else [value]
            v = [str(x) for x in vals]
        else:
            raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: cannot interpret {value!r} as {kind}") from None
    if choices is not None and v not in choices:
        raise ConfigError(f"key {key!r}: {v!r} not one of {list(choices)}")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    output_dir: str = "out"
    given: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "params": dict(self.params)}


def resolve(raw: dict, experiment: str | None = None, seed: int | None = None,
            output_dir: str | None = None) -> ExperimentConfig:
    """Validate ``raw`` against the experiment schema and fill in defaults."""
    raw = dict(raw)
    exp = experiment or raw.pop("experiment", None)
    raw.pop("experiment", None)
    if exp is None:
        raise ConfigError("no experiment given")
    if exp not in SCHEMAS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {list(EXPERIMENTS)}")
    file_seed = raw.pop("seed", None)
    out_dir = raw.pop("output_dir", None)
    schema = SCHEMAS[exp]
    unknown = [k for k in raw if k not in schema]
    if unknown:
        key = unknown[0]
        hint = difflib.get_close_matches(key, schema.keys(), n=1)
        msg = f"unknown key {key!r} for experiment {exp!r}"
        raise ConfigError(msg + (f" (did you mean {hint[0]!r}?)" if hint else ""))
    params = {}
    for key, spec in schema.items():
        kind, default = spec[0], spec[1]
        choices = spec[2] if len(spec) > 2 else None
        value = raw[key] if key in raw else default
        params[key] = _coerce(key, kind, value, choices)
    s = seed if seed is not None else (file_seed if file_seed is not None else 0)
    return ExperimentConfig(exp, params, int(_coerce("seed", INT, s)),
                            output_dir or (str(out_dir) if out_dir else "out"),
                            tuple(sorted(raw)))


def load(path, experiment=None, seed=None, output_dir=None, overrides=None) -> ExperimentConfig:
    raw = parse_text(Path(path).read_text()) if path else {}
    raw.update(overrides or {})
    return resolve(raw, experiment, seed, output_dir)
