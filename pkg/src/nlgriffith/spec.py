"""Experiment specifications (JSON, ``schema_version`` 1).

A specification names an experiment, the ladder of scales, the
densities and the outputs. Unknown keys are rejected. ``bundled:NAME``
refers to ``NAME.json`` shipped in :mod:`nlgriffith.data`.

Example::

    {
      "schema_version": 1,
      "experiment": "oned_limit",
      "eps_ladder": {"pow2": [2, 7]},
      "h_rule": {"cells_per_eps": 32},
      "density": {"kind": "truncated_affine", "a": 1, "b": 1},
      "bulk": {"kind": "p_norm", "p": 2},
      "bc": {"left": 0, "right": 1.41421356237},
      "output": {"csv_path": "oned.csv", "json_path": "oned.json"},
      "seed": 0
    }
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .densities import bulk_from_dict, density_from_dict, fidelity_from_dict
from .energy import EnergyParams
from .errors import SpecError, UsageError
from .gammalab.sweep import EXPERIMENTS, SweepPlan

__all__ = ["ExperimentSpec", "load_spec", "resolve_spec_path", "SCHEMA", "bundled_specs"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "density", "bulk"],
    "properties": {
        "schema_version": {"const": 1},
        "experiment": {"enum": list(EXPERIMENTS)},
        "description": {"type": "string"},
        "epsilon": _POS,
        "eps_ladder": {"oneOf": [
            {"type": "array", "items": _POS, "minItems": 1},
            {"type": "object", "additionalProperties": False, "required": ["pow2"],
             "properties": {"pow2": {"type": "array", "items": {"type": "integer"},
                                     "minItems": 2, "maxItems": 2}}},
        ]},
        "h_rule": {"type": "object", "additionalProperties": False,
                   "properties": {"cells_per_eps": _POS, "h": _POS}},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "density": {"oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["kind", "a", "b"],
             "properties": {"kind": {"const": "truncated_affine"}, "a": _POS, "b": _POS}},
            {"type": "object", "additionalProperties": False,
             "required": ["kind", "alpha", "beta"],
             "properties": {"kind": {"const": "saturating_exponential"}, "alpha": _POS,
                            "beta": _POS}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "csv"],
             "properties": {"kind": {"const": "user_sampled"}, "csv": {"type": "string"}}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "t", "f"],
             "properties": {"kind": {"const": "user_sampled"},
                            "t": {"type": "array", "items": _NUM},
                            "f": {"type": "array", "items": _NUM}}},
        ]},
        "coercive_perturbation": {"type": "boolean"},
        "bulk": {"type": "object", "additionalProperties": False, "required": ["kind", "p"],
                 "properties": {"kind": {"const": "p_norm"},
                                "p": {"type": "number", "exclusiveMinimum": 1}}},
        "fidelity": {"oneOf": [
            {"type": "null"},
            {"type": "object", "additionalProperties": False, "required": ["kind"],
             "properties": {"kind": {"const": "power"},
                            "q": {"type": "number", "exclusiveMinimum": 1}}},
        ]},
        "bc": {"oneOf": [
            {"type": "null"},
            {"type": "object", "additionalProperties": False, "required": ["left", "right"],
             "properties": {"left": _VEC, "right": _VEC}},
        ]},
        "options": {"type": "object"},
        "compactness": {"type": "object", "additionalProperties": False,
                        "properties": {"delta": {"type": "number", "exclusiveMinimum": 0,
                                                 "exclusiveMaximum": 1},
                                       "a": _POS, "b": _POS, "tol": {"type": "number",
                                                                     "minimum": 0}}},
        "field": {"type": "string"},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"csv_path": {"type": "string"},
                                  "json_path": {"type": "string"},
                                  "svg_path": {"type": "string"},
                                  "field_path": {"type": "string"}}},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
}


def bundled_specs() -> list:
    """Names of the specifications shipped with the package."""
    root = resources.files("nlgriffith") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_spec_path(path: str) -> Path:
    if path.startswith("bundled:"):
        name = path.split(":", 1)[1]
        p = Path(str(resources.files("nlgriffith") / "data" / f"{name}.json"))
        if not p.exists():
            raise SpecError(f"no bundled spec named {name!r}; available: {bundled_specs()}")
        return p
    return Path(path)


@dataclass
class ExperimentSpec:
    raw: dict
    base_dir: Path
    params: EnergyParams
    ladder: tuple
    h_rule_desc: dict = field(default_factory=dict)

    @property
    def experiment(self) -> Optional[str]:
        return self.raw.get("experiment")

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def h_rule(self):
        desc = self.h_rule_desc
        if "h" in desc:
            h = float(desc["h"])
            return lambda eps: h
        cpe = float(desc.get("cells_per_eps", 16))
        return lambda eps: eps / cpe

    def plan(self, seed: Optional[int] = None) -> SweepPlan:
        return SweepPlan(self.experiment, self.ladder, self.params, self.h_rule(),
                         self.raw.get("bc"), dict(self.raw.get("options", {})),
                         self.seed if seed is None else int(seed))

    def field_path(self) -> Optional[Path]:
        f = self.raw.get("field")
        if f is None:
            return None
        if f.startswith("bundled:"):
            return Path(str(resources.files("nlgriffith") / "data" / "fields" / f[8:]))
        p = Path(f)
        return p if p.is_absolute() else self.base_dir / p

    def output_paths(self, out_dir: Optional[Path]) -> dict:
        """Output paths resolved against ``out_dir`` (default: working directory)."""
        base = Path(out_dir) if out_dir is not None else Path.cwd()
        outs = {}
        for key, val in self.raw.get("output", {}).items():
            p = Path(val)
            outs[key] = p if p.is_absolute() else base / p
        return outs


def _ladder(raw: dict) -> tuple:
    lad = raw.get("eps_ladder")
    if lad is None:
        if "epsilon" in raw:
            return (float(raw["epsilon"]),)
        raise UsageError("spec needs eps_ladder or epsilon")
    if isinstance(lad, dict):
        k0, k1 = lad["pow2"]
        if k1 < k0:
            raise UsageError("pow2 ladder needs k_min <= k_max")
        return tuple(2.0 ** (-k) for k in range(k0, k1 + 1))
    return tuple(float(e) for e in lad)


def load_spec(path: str) -> ExperimentSpec:
    """Parse and validate a specification; raises :class:`SpecError` on bad input."""
    p = resolve_spec_path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise SpecError(f"cannot read spec {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON in {p}: {exc}") from exc
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise SpecError(f"invalid spec {p} at {loc}: {exc.message}") from exc
    base = p.parent
    dens = density_from_dict(raw["density"], base)
    bulk = bulk_from_dict(raw["bulk"])
    fid = fidelity_from_dict(raw.get("fidelity"), bulk.p)
    ladder = _ladder(raw)
    eps0 = float(raw.get("epsilon", ladder[0]))
    delta = float(raw.get("delta", raw.get("compactness", {}).get("delta", 0.5)))
    if raw.get("coercive_perturbation"):
        from .densities import coercive_perturbation

        dens = coercive_perturbation(dens, eps0)
    params = EnergyParams(eps0, dens, bulk, delta, fid)
    return ExperimentSpec(raw, base, params, ladder, raw.get("h_rule", {}))


def check_writable(paths) -> None:
    for p in paths:
        parent = Path(p).parent
        if not parent.exists():
            parent.mkdir(parents=True, exist_ok=True)
        if not os.access(parent, os.W_OK) or (Path(p).exists() and not os.access(p, os.W_OK)):
            raise UsageError(f"output path {p} is not writable")
