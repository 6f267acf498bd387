"""Run configuration: one JSON document per run, schema-checked before any work.

Layout::

    {
      "seed": 0,
      "out": "runs/k25",
      "cache": ".chaoscope_cache",
      "dataset":    {"k_min": 2.5, "n_k": 20, ...},     # DatasetSpec fields
      "model":      {"preset": "cnn2d", "scale": "desk", ...},
      "training":   {"epochs": 50, "batch_size": 64, ...},
      "label":      {"fallback": true},
      "eval":       {"partition": "test", "dataset": "...", "checkpoint": "..."},
      "train":      {"dataset": "...", "partition": "train"},
      "poincare":   {"K": 1.0, "n_side": 11, "n_steps": 1000},
      "experiment": {"params": {...}}
    }

Every section is optional at the schema level; commands demand the sections
they use through :func:`require`.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .tensornet.model import PRESETS


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NN_INT = {"type": "integer", "minimum": 0}
_WIDTHS = {"type": ["array", "null"], "items": _POS_INT, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "seed": _NN_INT,
    "out": {"type": "string"},
    "cache": {"type": ["string", "null"]},
    "dataset": _obj({
        "k_min": _NUM, "k_max": {"type": ["number", "null"]}, "m_k": _POS_INT,
        "m_tr": _NN_INT, "m_tt": _NN_INT, "n_k": _POS_INT, "n_ref": {"type": "integer", "minimum": 2},
        "grid_size": {"type": "integer", "minimum": 2}, "bins": {"type": "integer", "minimum": 3},
        "jacobian": {"enum": ["exact", "extra_2pi"]},
    }, required=("k_min", "n_k")),
    "model": _obj({
        "preset": {"enum": list(PRESETS)}, "scale": {"enum": ["paper", "desk"]},
        "conv_widths": _WIDTHS, "fc_widths": _WIDTHS, "fc_bias": {"type": "boolean"},
        "dtype": {"enum": ["float32", "float64"]},
    }),
    "training": _obj({
        "epochs": _NN_INT, "batch_size": _POS_INT, "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "patience": _NN_INT, "validation_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "max_restarts": _NN_INT,
    }),
    "label": _obj({"fallback": {"type": "boolean"}}),
    "train": _obj({"dataset": {"type": "string"}, "partition": {"enum": ["train", "test", "all"]}}),
    "eval": _obj({
        "dataset": {"type": "string"}, "checkpoint": {"type": "string"},
        "partition": {"enum": ["train", "test", "all"]},
    }),
    "poincare": _obj({
        "K": {"type": "number", "minimum": 0}, "n_side": _POS_INT, "n_steps": _POS_INT,
    }, required=("K",)),
    "experiment": _obj({"params": {"type": "object"}}),
})


def _describe(err):
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        return f"missing required key {'.'.join(list(map(str, err.absolute_path)) + missing[:1])}"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"unknown key {'.'.join(list(map(str, err.absolute_path)) + extra[:1])}"
    return f"{where}: {err.message}"


def validate(doc):
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("; ".join(_describe(e) for e in errors))
    return doc


def parse_value(text):
    """``--set`` values: JSON where it parses (numbers, booleans, lists), else a string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = parse_value(value)
    return doc


@dataclass
class RunConfig:
    doc: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides=(), seed=None, out=None):
        """Read ``path`` (if any), apply ``--set`` overrides then explicit flags, validate."""
        doc = {}
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise ConfigError("config must be a JSON object")
        doc = copy.deepcopy(doc)
        for a in overrides:
            apply_override(doc, a)
        if seed is not None:
            doc["seed"] = seed
        if out is not None:
            doc["out"] = out
        return cls(validate(doc))

    @property
    def seed(self):
        return self.doc.get("seed", 0)

    def section(self, name):
        return dict(self.doc.get(name, {}))

    def require(self, name):
        if name not in self.doc:
            raise ConfigError(f"missing required key {name}")
        return self.section(name)

    def dataset_spec(self):
        from .pipeline.dataset import DatasetSpec

        return DatasetSpec(seed=self.seed, **self.require("dataset"))

    def estimator_params(self):
        params = self.section("model")
        t = self.section("training")
        params.update(t)
        params["random_state"] = self.seed
        return params

    def to_json(self):
        return json.dumps(self.doc, sort_keys=True, indent=1)
