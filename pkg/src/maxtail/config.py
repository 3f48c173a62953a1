"""JSON config schema and loader shared by the CLI subcommands."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

MODEL_SCHEMA = {
    "type": "object",
    "required": ["variant"],
    "additionalProperties": False,
    "properties": {
        "variant": {"enum": ["independent", "armax", "m3", "m3_powerlaw"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "phi": {"type": "number"},
        "coeffs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "scale": {"type": "number"},
        "decay": {"type": "number"},
        "truncation": {"type": "integer", "minimum": 1},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "maxtail experiment config",
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": MODEL_SCHEMA,
        "lags": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "n": {"type": "integer", "minimum": 2},
        "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "u": {"type": "number", "exclusiveMinimum": 0},
        "replicates": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["clt", "variance_scaling", "bound_audit", "lrd_sweep"]},
        "centering": {"enum": ["limit", "finite"]},
        "horizon": {"type": "integer", "minimum": 1},
        "delta": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "u_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "max_lag": {"type": "integer", "minimum": 1, "maximum": 19},
        "cesaro_b": {"type": "integer", "minimum": 2},
        "ks_threshold": {"type": "number", "exclusiveMinimum": 0},
        "path_file": {"type": "string"},
    },
}


def parse_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config does not match schema at {where}: {exc.message}") from exc
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
