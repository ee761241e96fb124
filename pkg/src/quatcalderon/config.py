"""Run configuration: JSON schema, defaults and validation.

A configuration is a JSON object; every missing key is filled from
:data:`DEFAULTS` so the materialized config written to each manifest is
enough to repeat the run.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .grid import Grid3, Phantom, default_phantom
from .recon import AnnulusRule
from .scatter import SolverSettings

SUITES = ["algebra", "calculus", "cgo", "dirac", "scatter", "recon", "consistency"]

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "box": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "phantom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "positivity": {"type": "number"},
                "bumps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["center", "radius", "amplitude"],
                        "properties": {
                            "center": _VEC3,
                            "radius": {"type": "number", "exclusiveMinimum": 0},
                            "amplitude": _COMPLEX,
                            "profile": {"enum": ["smooth", "cone"]},
                        },
                    },
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "forward": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "xis": {"type": "array", "items": _VEC3},
                "ks": {"type": "array", "items": _VEC3},
                "pairs": {"type": "integer", "minimum": 0},
                "pair_k": {"type": "number", "exclusiveMinimum": 0},
                "pair_xi_max": {"type": "number", "exclusiveMinimum": 0},
                "mesh_level": {"type": "integer", "minimum": 0, "maximum": 6},
                "threshold_direction": _VEC3,
            },
        },
        "recon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "R": {"type": "number", "exclusiveMinimum": 0},
                "n_radial": {"type": "integer", "minimum": 1},
                "n_angular": {"type": "integer", "minimum": 1},
                "xi_max": {"type": "number", "exclusiveMinimum": 0},
                "r_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "n_values": {"type": "array", "items": {"type": "integer", "minimum": 8, "multipleOf": 2}, "minItems": 1},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
        "suites": {"type": "array", "items": {"enum": SUITES + ["all"]}},
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS = {
    "grid": {"n": 32, "box": 1.5},
    "phantom": default_phantom().to_dict(),
    "solver": {"tol": 1e-8, "max_iter": 50},
    "forward": {
        "xis": [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [1.0, 1.0, 1.0]],
        "ks": [[0.0, 0.0, 32.0]],
        "pairs": 0,
        "pair_k": 32.0,
        "pair_xi_max": 4.0,
        "mesh_level": 4,
        "threshold_direction": [0.0, 0.0, 1.0],
    },
    "recon": {"R": 32.0, "n_radial": 6, "n_angular": 64, "xi_max": 8.0, "r_values": [16.0, 32.0], "n_values": [24, 32]},
    "verify": {"tolerances": {}},
    "suites": ["all"],
    "out": "out",
    "seed": 0,
    "threads": 1,
}


class ConfigError(ValueError):
    """Configuration failed schema validation; ``path`` names the offending key."""

    def __init__(self, message: str, path: str):
        super().__init__(message)
        self.path = path


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "phantom":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate(raw: dict) -> dict:
    """Validate ``raw`` against :data:`SCHEMA` and return it merged over the defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}", path) from None
    return _merge(DEFAULTS, raw)


@dataclass
class RunConfig:
    """Materialized configuration with typed accessors."""

    data: dict

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}", "<root>") from None
            if not isinstance(raw, dict):
                raise ConfigError("configuration must be a JSON object", "<root>")
        raw = _merge(raw, overrides or {})
        return cls(validate(raw))

    @property
    def grid(self) -> Grid3:
        g = self.data["grid"]
        return Grid3.cube(int(g["n"]), float(g["box"]))

    @property
    def phantom(self) -> Phantom:
        return Phantom.from_dict(self.data["phantom"])

    @property
    def solver(self) -> SolverSettings:
        s = self.data["solver"]
        return SolverSettings(float(s["tol"]), int(s["max_iter"]))

    def rule(self, R: float | None = None) -> AnnulusRule:
        r = self.data["recon"]
        return AnnulusRule(float(R if R is not None else r["R"]), int(r["n_radial"]), int(r["n_angular"]))

    @property
    def suites(self) -> list[str]:
        names = self.data["suites"]
        return list(SUITES) if "all" in names else list(names)

    def __getitem__(self, key):
        return self.data[key]
