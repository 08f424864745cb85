"""Scenario configuration: JSON schema, defaults, presets and content hashing."""

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import InvalidSpecError, ValidationError

SCHEMA_VERSION = 1

_box = {
    "type": "array", "minItems": 2, "maxItems": 2,
    "items": {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": "number"}},
}
_point = {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": "number"}}

_density = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["uniform-box", "uniform-ball", "gaussian-mixture", "union-of-balls",
                          "csv-grid"]},
        "box": _box,
        "center": _point,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "centers": {"type": "array", "items": _point, "minItems": 1},
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "means": {"type": "array", "items": _point, "minItems": 1},
        "sigmas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "path": {"type": "string"},
        "jitter": {"type": "boolean"},
    },
}

_side = {
    "type": "object",
    "required": ["domain", "density"],
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object", "required": ["box"], "additionalProperties": False,
            "properties": {"box": _box, "K": {"type": "number", "minimum": 1}},
        },
        "density": _density,
    },
}

_region = {
    "type": ["object", "null"],
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["ball", "box"]},
        "center": _point,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "box": _box,
    },
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "dimension", "source", "target", "cost", "grid"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
        "source": _side,
        "target": _side,
        "cost": {
            "type": "object", "required": ["kind"], "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["quadratic-bilinear", "squared-distance", "power",
                                  "perturbed-bilinear", "squared-bilinear"]},
                "exponent": {"type": "number", "exclusiveMinimum": 1, "maximum": 10},
                "delta": {"type": "number", "minimum": 0, "maximum": 1},
                "bump": {"enum": ["phi1", "phi2"]},
            },
        },
        "grid": {
            "type": "object", "required": ["n_atoms", "eval_resolution"],
            "additionalProperties": False,
            "properties": {
                "n_atoms": {"type": "integer", "minimum": 1, "maximum": 100000},
                "n_target_atoms": {"type": "integer", "minimum": 1, "maximum": 100000},
                "eval_resolution": {
                    "oneOf": [{"type": "integer", "minimum": 8, "maximum": 2048},
                              {"type": "array", "minItems": 1,
                               "items": {"type": "integer", "minimum": 8, "maximum": 2048}}]},
                "eval_box": _box,
                "hessian_step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "method": {"enum": ["exact", "entropic"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "experiment": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "M": {"type": "number", "exclusiveMinimum": 1},
                "N": {"type": "number", "exclusiveMinimum": 1},
                "p": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 1}},
                "h0": {"type": "number", "exclusiveMinimum": 0},
                "h_list": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "K_levels": {"type": "integer", "minimum": 1, "maximum": 12},
                "rho0": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "C_prime": {"type": "number", "minimum": 1},
                "ratio_cap": {"type": "number", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1, "maximum": 100000},
                "sample_radius": {"type": "number", "exclusiveMinimum": 0},
                "X_domain": _region,
                "boundary_h0": {"type": "number", "exclusiveMinimum": 0},
                "boundary_samples": {"type": "integer", "minimum": 1},
                "K_bands": {"type": "integer", "minimum": 1, "maximum": 20},
                "remark_closeness_check": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object", "required": ["parameter", "values"], "additionalProperties": False,
            "properties": {
                "parameter": {"enum": ["cost.delta", "experiment.p"]},
                "values": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            },
        },
    },
}

DEFAULTS = {
    "solver": {"method": "exact", "epsilon": 1e-3, "max_iter": 5000, "tol": 1e-9},
    "experiment": {
        "M": 4.0, "N": 2.0, "p": [1.0, 2.0, 4.0], "h0": 0.1, "h_list": [0.01, 0.05, 0.1],
        "K_levels": 3, "rho0": 0.8, "sigma": 0.2, "C_prime": 9.0, "ratio_cap": 9.0, "seed": 0,
        "samples": 100, "sample_radius": 0.3, "X_domain": None, "boundary_h0": 0.125,
        "boundary_samples": 500, "K_bands": 6, "remark_closeness_check": False,
    },
}

PRESETS = ("E1", "E2", "E3", "E4", "E5")


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw):
    """Schema check plus cross-field checks; returns the config with defaults filled."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidSpecError(f"config invalid at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    n = cfg["dimension"]
    for side in ("source", "target"):
        box = cfg[side]["domain"]["box"]
        if any(len(b) != n for b in box) or any(lo >= hi for lo, hi in zip(*box)):
            raise InvalidSpecError(f"{side}.domain.box must be a nonempty box in R^{n}")
    res = cfg["grid"]["eval_resolution"]
    cfg["grid"]["eval_resolution"] = [res] if isinstance(res, int) else list(res)
    if cfg["solver"]["method"] == "entropic" and "epsilon" not in raw.get("solver", {}):
        raise InvalidSpecError("entropic solver needs solver.epsilon")
    return cfg


def load_config(source):
    """Load a config from a path or a preset name (``E1`` .. ``E5``)."""
    if isinstance(source, dict):
        return validate(source)
    name = str(source)
    if name in PRESETS:
        text = resources.files("otlab.lab.presets").joinpath(f"{name}.json").read_text("utf-8")
    else:
        try:
            text = Path(name).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {name!r}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"config {name!r} is not valid JSON: {exc}") from None
    return validate(raw)


def _canonical(obj):
    if isinstance(obj, float) and obj.is_integer() and abs(obj) < 2 ** 53:
        return int(obj)
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def canonical_json(cfg):
    """Sorted keys, no whitespace, integral floats written as integers."""
    return json.dumps(_canonical(cfg), sort_keys=True, separators=(",", ":"))


def scenario_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def solve_key(cfg):
    """Hash of the parts of a config that determine the transport solve."""
    part = {k: cfg[k] for k in ("dimension", "source", "target", "cost", "solver")}
    part["atoms"] = [cfg["grid"]["n_atoms"], cfg["grid"].get("n_target_atoms")]
    return scenario_hash(part)[:12]


def sweep_configs(cfg):
    """``[(label, config)]``: one entry per sweep value, or the config itself."""
    sw = cfg.get("sweep")
    if not sw:
        return [("", cfg)]
    out = []
    section, key = sw["parameter"].split(".")
    for v in sw["values"]:
        sub = copy.deepcopy(cfg)
        sub.pop("sweep")
        if key == "p":
            sub[section][key] = [float(v)]
        else:
            sub[section][key] = float(v)
        out.append((f"{key}={v:g}", sub))
    return out
