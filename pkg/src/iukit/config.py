"""Experiment configs: loading, schema validation and object construction.

Configs are YAML or JSON documents validated against the schemas shipped in
``iukit/schemas``.  Schema violations raise :class:`ConfigError` carrying
the path of the offending key.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from ._util import canonical_hash
from .errors import ConfigError
from .geometry import (Ball, BallComplement, Box, GrowthFunction, HalfSpace, Horn, ReferenceFunction, Region,
                       Ring)
from .kernels import CoefficientField, JumpKernel, ScalingFunction, TemperingFunction


def load_schema(name: str) -> dict:
    text = resources.files("iukit").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _experiment_schema() -> dict:
    schema = load_schema("experiment")
    schema["properties"]["kernel"] = load_schema("kernel")
    schema["properties"]["region"] = load_schema("region")
    return schema


def validate(doc: Any, schema: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = tuple(str(p) for p in err.absolute_path)
        where = ".".join(path) if path else "<root>"
        raise ConfigError(f"{where}: {err.message}", path=path)


def read_config(path) -> Any:
    """Parse a YAML or JSON config file without validating it."""
    p = Path(path)
    try:
        doc = yaml.safe_load(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {p} not found")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}")
    return doc


def load_config(path) -> dict:
    """Parse and validate an experiment config file."""
    return parse_config(read_config(path))


def parse_config(doc: Any) -> dict:
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("config is empty or not a mapping")
    doc = copy.deepcopy(doc)
    validate(doc, _experiment_schema())
    if "kernel" in doc and "region" in doc and doc["kernel"]["dim"] != doc["region"]["dim"]:
        raise ConfigError("kernel.dim and region.dim differ", path=("region", "dim"))
    return doc


def config_hash(doc: dict) -> str:
    return canonical_hash(doc)


def _gamma(v) -> float:
    return math.inf if v == "inf" else float(v)


def build_phi(spec: dict) -> ScalingFunction:
    if spec["kind"] == "power":
        if "alpha" not in spec:
            raise ConfigError("power Phi needs alpha", path=("kernel", "phi", "alpha"))
        return ScalingFunction.power(spec["alpha"])
    for key in ("expr", "alpha_lower", "alpha_upper"):
        if key not in spec:
            raise ConfigError(f"expr Phi needs {key}", path=("kernel", "phi", key))
    return ScalingFunction.from_expr(spec["expr"], spec["alpha_lower"], spec["alpha_upper"],
                                     spec.get("c_lower", 1.0), spec.get("c_upper", 1.0))


def build_chi(spec: dict | None) -> TemperingFunction:
    if not spec:
        return TemperingFunction.none()
    g = _gamma(spec.get("gamma", 0.0))
    if math.isinf(g):
        return TemperingFunction.finite_range()
    if g == 0:
        return TemperingFunction.none()
    c1 = float(spec.get("c1", 1.0))
    L1 = float(spec.get("L1", 1.0))
    return TemperingFunction(g, c1, float(spec.get("c2", c1)), L1, float(spec.get("L2", L1)), spec.get("chi0"))


def build_kernel(spec: dict) -> JumpKernel:
    dim = spec["dim"]
    kap = spec.get("kappa") or {}
    kappa = CoefficientField(kap.get("value", 1.0), kap.get("expr"), kap.get("L0"), dim=dim)
    return JumpKernel(dim, build_phi(spec["phi"]), build_chi(spec.get("chi")), kappa,
                      spec.get("variant", "product"), spec.get("alpha_expr"), spec.get("alpha_bounds"),
                      spec.get("density_expr"), spec.get("c0"))


def build_region(spec: dict, phi: ScalingFunction | None = None) -> Region:
    kind, dim = spec["kind"], spec["dim"]

    def vec(key, default=None):
        v = spec.get(key, default)
        if v is None or len(v) != dim:
            raise ConfigError(f"{key} must have {dim} entries", path=("region", key))
        return np.asarray(v, dtype=float)

    if kind == "ball":
        return Ball(vec("center", [0.0] * dim), spec["radius"])
    if kind == "ball_complement":
        return BallComplement(vec("center", [0.0] * dim), spec["radius"])
    if kind == "box":
        return Box(vec("lo"), vec("hi"))
    if kind == "half_space":
        return HalfSpace(vec("normal"), spec.get("offset", 0.0))
    if kind == "horn":
        f = spec["f"]
        needs_phi = f["kind"] in ("log_power", "poly_power")
        return Horn(ReferenceFunction(f["kind"], f.get("theta"), phi if needs_phi else None, f.get("expr")), dim)
    h = spec["h"]
    return Ring(GrowthFunction(h.get("kind", "expr"), h.get("theta"), phi, h.get("expr"), h.get("floor", 12.0)),
                dim, spec.get("far_radius", 50.0))
