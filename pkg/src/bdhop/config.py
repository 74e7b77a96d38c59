"""Run configuration: JSON schema, environment overrides and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from bdhop.measure import SiteSpace
from bdhop.rates import (
    ConstantRateModel,
    ExampleModelParams,
    PerturbedRateModel,
    RateModel,
    hopping_kernel,
    interaction_kernel,
    make_example_model,
    make_psi,
)

ENV_PREFIX = "BDHOP_"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_nonneg_vec = {"type": "array", "items": _nonneg, "minItems": 1}
_times = {"type": "array", "items": _nonneg, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_PSI = _obj(
    {
        "name": {"enum": ["constant", "affine-clamped", "sigmoid"]},
        "value": _nonneg, "intercept": _num, "slope": _num, "lo": _nonneg, "hi": _nonneg,
        "low": _nonneg, "high": _nonneg, "steepness": _num, "center": _num,
    },
    ["name"],
)
_KERNEL = _obj({"name": {"type": "string"}, "amplitude": _nonneg, "length": _pos}, ["name"])

CONFIG_SCHEMA: dict = _obj(
    {
        "seed": {"type": "integer", "minimum": 0},
        "threads": _posint,
        "space": {
            "oneOf": [
                _obj({"coords": {"type": "array", "minItems": 1}, "weights": _vec}, ["coords", "weights"]),
                _obj({"S": _posint, "length": _pos}, ["S"]),
            ]
        },
        "model": {
            "oneOf": [
                _obj(
                    {
                        "type": {"const": "example"},
                        "psi_bd": _PSI, "psi_h": _PSI, "c": _KERNEL, "h": _KERNEL,
                        "n_correction": _num,
                        "perturb": {"$ref": "#/$defs/perturb"},
                    },
                    ["type", "psi_bd", "psi_h", "c", "h"],
                ),
                _obj(
                    {
                        "type": {"const": "constant"},
                        "beta": _nonneg, "delta": _nonneg,
                        "eta": {"oneOf": [_nonneg, {"type": "array"}]},
                        "perturb": {"$ref": "#/$defs/perturb"},
                    },
                    ["type", "beta", "delta"],
                ),
            ]
        },
        "tolerances": _obj(
            {"deficit_tol": _pos, "rtol": _pos, "atol": _pos, "db_tol": _pos}
        ),
        "validate": _obj({"n_list": {"type": "array", "items": _posint, "minItems": 1}, "K_max": _posint, "samples": _posint}),
        "ssa": _obj(
            {
                "n": _posint, "u0": _nonneg_vec,
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "T": _nonneg, "times": _times, "M": _posint,
                "record_events": {"type": "boolean"}, "write_snapshots": {"type": "boolean"},
            },
            ["n", "T", "M"],
        ),
        "master": _obj(
            {
                "n": _posint, "K_max": _posint, "T": _nonneg, "n_out": {"type": "integer", "minimum": 2},
                "method": {"enum": ["rk4", "adaptive"]}, "dt": _pos,
                "initial": {"enum": ["dirac", "poisson", "reference"]}, "u0": _nonneg_vec,
                "write_generator": {"type": "boolean"},
            },
            ["n", "K_max", "T"],
        ),
        "meanfield": _obj(
            {"u0": _nonneg_vec, "T": _nonneg, "dt": _pos, "method": {"enum": ["rk4", "adaptive"]}, "output_every": _posint},
            ["u0", "T"],
        ),
        "sweep": _obj(
            {
                "u0": _nonneg_vec, "n_list": {"type": "array", "items": _posint, "minItems": 1},
                "T": _nonneg, "obs_times": _times, "mode": {"enum": ["master", "ssa", "both"]},
                "initial": {"enum": ["dirac", "poisson"]},
                "K_max": {"oneOf": [_posint, {"type": "null"}]}, "M": _posint,
                "lipschitz": {"type": "boolean"}, "mf_dt": _pos,
            },
            ["u0", "n_list", "T", "obs_times"],
        ),
    },
    ["space", "model"],
)
CONFIG_SCHEMA["$defs"] = {
    "perturb": _obj({"birth_shift": {}, "death_shift": {}, "hop_shift": {}}),
}


class ConfigError(ValueError):
    """Configuration file is malformed or inconsistent."""


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration document plus the objects built from it."""

    data: dict
    space: SiteSpace
    model: RateModel

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.data.get("threads", 1))

    def tol(self, key: str, default: float) -> float:
        return float(self.data.get("tolerances", {}).get(key, default))

    def block(self, name: str) -> dict:
        if name not in self.data:
            raise ConfigError(f"config has no {name!r} block")
        return self.data[name]

    def digest(self) -> str:
        return config_hash(self.data)


def config_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_space(spec: dict) -> SiteSpace:
    if "coords" in spec:
        return SiteSpace(coords=spec["coords"], weights=spec["weights"])
    return SiteSpace.uniform_grid(spec["S"], spec.get("length", 1.0))


def _kernel_kw(spec: dict) -> tuple[str, dict]:
    spec = dict(spec)
    return spec.pop("name"), spec


def build_model(spec: dict, space: SiteSpace) -> RateModel:
    if spec["type"] == "example":
        c_name, c_kw = _kernel_kw(spec["c"])
        h_name, h_kw = _kernel_kw(spec["h"])
        params = ExampleModelParams(
            psi_bd=make_psi(spec["psi_bd"]),
            psi_h=make_psi(spec["psi_h"]),
            c=interaction_kernel(space, c_name, **c_kw),
            h_kernel=hopping_kernel(space, h_name, **h_kw),
        )
        model: RateModel = make_example_model(params, space, spec.get("n_correction", 0.0))
    else:
        model = ConstantRateModel(space, spec["beta"], spec["delta"], spec.get("eta", 0.0))
    if "perturb" in spec:
        p = spec["perturb"]
        model = PerturbedRateModel(
            model,
            birth_shift=np.asarray(p.get("birth_shift", 0.0), dtype=float),
            death_shift=np.asarray(p.get("death_shift", 0.0), dtype=float),
            hop_shift=np.asarray(p.get("hop_shift", 0.0), dtype=float),
        )
    return model


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_env_overrides(data: dict, environ=None) -> dict:
    """Apply ``BDHOP_<BLOCK>__<KEY>=value`` overrides (JSON-decoded values).

    ``BDHOP_SEED=3`` sets a top-level key; a double underscore separates
    nesting levels, e.g. ``BDHOP_MASTER__K_MAX=14``.  Keys are lower-cased.
    """
    environ = os.environ if environ is None else environ
    out = copy.deepcopy(data)
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__")]
        if path[-1] == "k_max":
            path[-1] = "K_max"
        elif path[-1] == "t":
            path[-1] = "T"
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = _coerce(value)
    return out


def load_config(source: str | Path | dict, environ=None) -> RunConfig:
    """Parse, apply environment overrides, validate and build."""
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        try:
            data = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    data = apply_env_overrides(data, environ if environ is not None else {})
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    try:
        space = build_space(data["space"])
        model = build_model(data["model"], space)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(data, space, model)


def example_config(S: int = 2, length: float = 0.5) -> dict:
    """Configuration of the default example model on ``S`` cells of ``[0, length]``."""
    return {
        "seed": 0,
        "space": {"S": S, "length": length},
        "model": {
            "type": "example",
            "psi_bd": {"name": "sigmoid", "low": 0.5, "high": 2.0},
            "psi_h": {"name": "sigmoid", "low": 0.5, "high": 1.5},
            "c": {"name": "off-diagonal", "amplitude": 1.0},
            "h": {"name": "gaussian", "amplitude": 1.0, "length": 1.0},
        },
    }
