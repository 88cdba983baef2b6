"""JSON run configuration: schema, defaults and conversion to study objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import jsonschema
import numpy as np

from .errors import ConfigInvalid, HomogError
from .fields import ellipticity_of
from .hconv import LIFTS, SOURCES, StudyConfig
from .oscillation import PeriodicProfile, TestFunctionFamily, TrigSeries, reciprocal_index

_NUMBER_OR_RECIPROCAL = {
    "anyOf": [
        {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        {"type": "string", "pattern": r"^\s*1\s*/\s*[1-9][0-9]*\s*$"},
    ]
}
_MATRIX = {"type": "array", "minItems": 2, "maxItems": 3, "items": {"type": "array", "items": {"type": "number"}}}
_TRIG = {
    "type": "object",
    "properties": {
        "mean": {"type": "number"},
        "cos": {"type": "array", "items": {"type": "number"}},
        "sin": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": False,
}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {"n_cells": {"type": "integer", "minimum": 3}},
            "additionalProperties": False,
        },
        "profile": {
            "type": "object",
            "properties": {
                "layers": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                            "matrix": _MATRIX,
                        },
                        "required": ["fraction", "matrix"],
                        "additionalProperties": False,
                    },
                },
                "smooth": {
                    "type": "object",
                    "patternProperties": {"^A[1-2][1-2]$": _TRIG},
                    "additionalProperties": False,
                    "minProperties": 1,
                },
            },
            "oneOf": [{"required": ["layers"]}, {"required": ["smooth"]}],
            "additionalProperties": False,
        },
        "epsilons": {"type": "array", "minItems": 1, "items": _NUMBER_OR_RECIPROCAL},
        "study": {
            "type": "object",
            "properties": {
                "source": {"enum": list(SOURCES)},
                "lift": {"enum": list(LIFTS)},
            },
            "additionalProperties": False,
        },
        "subdomain": {
            "type": "object",
            "properties": {"lower": _POINT, "upper": _POINT},
            "additionalProperties": False,
        },
        "tests": {
            "type": "object",
            "properties": {"polynomial_degree": {"type": "integer", "minimum": 0, "maximum": 6}},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"directory": {"type": "string", "minLength": 1}},
            "additionalProperties": False,
        },
    },
    "required": ["profile"],
    "additionalProperties": False,
}

DEFAULT_EPSILONS = (0.25, 0.125, 0.0625)


def _key_path(error: jsonschema.ValidationError) -> str:
    parts = []
    for p in error.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else (f".{p}" if parts else str(p)))
    return "".join(parts) or "<root>"


def _parse_epsilon(raw, index: int) -> float:
    value = float(Fraction(raw.replace(" ", ""))) if isinstance(raw, str) else float(raw)
    try:
        reciprocal_index(value)
    except ValueError as exc:
        raise ConfigInvalid(f"epsilons[{index}]: {exc}") from None
    return value


@dataclass(frozen=True, eq=False)
class RunConfig:
    profile: PeriodicProfile
    profile_spec: dict
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    n_cells: int = 256
    source: str = "zero-affine"
    lift: str = "x1"
    subdomain: tuple[tuple[float, float], tuple[float, float]] = ((0.25, 0.25), (0.75, 0.75))
    polynomial_degree: int = 3
    output: str = "out"
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        """Validate ``doc``; raises ``ConfigInvalid`` naming the offending key."""
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            raise ConfigInvalid(f"{_key_path(err)}: {err.message}")

        profile_spec = doc["profile"]
        try:
            profile = _build_profile(profile_spec)
        except ConfigInvalid:
            raise
        except (ValueError, HomogError) as exc:
            raise ConfigInvalid(f"profile: {exc}") from None

        eps = tuple(_parse_epsilon(e, i) for i, e in enumerate(doc.get("epsilons", DEFAULT_EPSILONS)))
        for i in range(1, len(eps)):
            if not eps[i] < eps[i - 1]:
                raise ConfigInvalid(f"epsilons[{i}]: list must be strictly decreasing ({eps[i - 1]} then {eps[i]})")

        sub = doc.get("subdomain", {})
        subdomain = (tuple(sub.get("lower", (0.25, 0.25))), tuple(sub.get("upper", (0.75, 0.75))))
        if not all(0 < a < b < 1 for a, b in zip(*subdomain)):
            raise ConfigInvalid(f"subdomain: {subdomain} must lie strictly inside the unit square")

        cfg = cls(
            profile=profile,
            profile_spec=json.loads(json.dumps(profile_spec)),
            epsilons=eps,
            n_cells=doc.get("grid", {}).get("n_cells", 256),
            source=doc.get("study", {}).get("source", "zero-affine"),
            lift=doc.get("study", {}).get("lift", "x1"),
            subdomain=subdomain,
            polynomial_degree=doc.get("tests", {}).get("polynomial_degree", 3),
            output=doc.get("output", {}).get("directory", "out"),
        )
        try:
            cfg.study_config()
        except (ValueError, HomogError) as exc:
            raise ConfigInvalid(f"grid.n_cells: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"<root>: not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigInvalid(f"<root>: cannot read config ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        """Normalized document; ``from_dict(to_dict())`` reproduces this config."""
        return {
            "grid": {"n_cells": self.n_cells},
            "profile": self.profile_spec,
            "epsilons": list(self.epsilons),
            "study": {"source": self.source, "lift": self.lift},
            "subdomain": {"lower": list(self.subdomain[0]), "upper": list(self.subdomain[1])},
            "tests": {"polynomial_degree": self.polynomial_degree},
            "output": {"directory": self.output},
        }

    def study_config(self, **overrides) -> StudyConfig:
        kw = dict(
            profile=self.profile,
            epsilons=self.epsilons,
            n_cells=self.n_cells,
            source=self.source,
            lift=self.lift,
            family=TestFunctionFamily(self.polynomial_degree),
            subdomain=self.subdomain,
        )
        kw.update(overrides)
        return StudyConfig(**kw)


def _build_profile(spec: dict) -> PeriodicProfile:
    if "layers" in spec:
        layers = []
        for k, layer in enumerate(spec["layers"]):
            mat = np.asarray(layer["matrix"], dtype=float)
            if mat.shape != (2, 2):
                raise ConfigInvalid(f"profile.layers[{k}].matrix: expected a 2x2 matrix, got shape {mat.shape}")
            try:
                ellipticity_of(mat)
            except HomogError as exc:
                raise ConfigInvalid(f"profile.layers[{k}].matrix: {exc}") from None
            layers.append((layer["fraction"], mat))
        return PeriodicProfile.layered(layers)
    entries = {}
    for key, coeffs in spec["smooth"].items():
        i, j = int(key[1]) - 1, int(key[2]) - 1
        entries[(i, j)] = TrigSeries(coeffs.get("mean", 0.0), tuple(coeffs.get("cos", ())), tuple(coeffs.get("sin", ())))
    return PeriodicProfile.smooth_entries(entries, dim=2)
