"""Experiment configuration: TOML file, JSON-schema validation, CLI overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..errors import ConfigError
from ..metrics import DEFAULT_KS
from ..retrieval import MASK_POLICIES

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TEXT_SOURCES = ("grounded", "title")
FUSIONS = ("concat", "average", "gating", "attention", "smore-lite")
VARIANTS = (
    ("text-grounded", "text-title", "vision-only")
    + tuple(f"{f}-{s}" for f in FUSIONS for s in TEXT_SOURCES)
)
# the twelve-strategy comparison: two text-only, four fusions per text source,
# gating (title text) and vision-only
STANDARD_VARIANTS = (
    "text-grounded", "text-title",
    "attention-grounded", "concat-grounded", "average-grounded", "smore-lite-grounded",
    "attention-title", "concat-title", "average-title", "smore-lite-title",
    "gating-title", "vision-only",
)

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "semrec experiment config",
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "experiment"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["interactions"],
            "properties": {
                "interactions": {"type": "string"},
                "format": {"enum": ["tsv", "jsonl"]},
                "recency": {"enum": ["timestamp", "file_order"]},
            },
        },
        "embeddings": {
            "type": "object",
            "additionalProperties": False,
            "description": "SEMV vector files; the id sidecar defaults to <stem>.ids",
            "properties": {src: {"type": "string"} for src in ("grounded", "title", "vision")},
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variants", "seed"],
            "properties": {
                "variants": {
                    "oneOf": [
                        {"const": "standard"},
                        {"type": "array", "minItems": 1, "uniqueItems": True,
                         "items": {"enum": list(VARIANTS)}},
                    ]
                },
                "L_max": {"type": "integer", "minimum": 1},
                "Ks": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "mask_policy": {"enum": list(MASK_POLICIES)},
                "eval_split": {"enum": ["validation", "test"]},
                "matched_subset": {"type": "boolean"},
                "baseline": {"type": "string"},
                "seed": {"type": "integer"},
                "out": {"type": "string"},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "contrastive_epochs": {"type": "integer", "minimum": 1},
                "bpr_epochs": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "negatives_per_positive": {"type": "integer", "minimum": 1},
                "l2": {"type": "number", "minimum": 0},
                "knn_k": {"type": "integer", "minimum": 1},
                "gcn_layers": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "data": {"format": None, "recency": "timestamp"},
    "embeddings": {},
    "experiment": {
        "L_max": 10, "Ks": list(DEFAULT_KS), "mask_policy": "history",
        "eval_split": "validation", "matched_subset": True, "baseline": "text-title",
        "out": "runs/experiment",
    },
    "train": {
        "contrastive_epochs": 15, "bpr_epochs": 20, "learning_rate": 1e-3, "batch_size": 256,
        "temperature": 0.07, "negatives_per_positive": 1, "l2": 0.0, "knn_k": 10, "gcn_layers": 2,
    },
}


def variant_inputs(variant: str) -> tuple[str, ...]:
    """Embedding sources a variant reads."""
    if variant == "vision-only":
        return ("vision",)
    if variant.startswith("text-"):
        return (variant[5:],)
    return (variant.rsplit("-", 1)[1], "vision")


def variant_fusion(variant: str) -> str | None:
    if variant in ("vision-only",) or variant.startswith("text-"):
        return None
    return variant.rsplit("-", 1)[0]


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path

    @property
    def data(self) -> dict:
        return self.raw["data"]

    @property
    def experiment(self) -> dict:
        return self.raw["experiment"]

    @property
    def train(self) -> dict:
        return self.raw["train"]

    @property
    def variants(self) -> list[str]:
        v = self.experiment["variants"]
        return list(STANDARD_VARIANTS) if v == "standard" else list(v)

    @property
    def seed(self) -> int:
        return self.experiment["seed"]

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"at {where}: {exc.message}") from None


def make_config(raw: dict, base_dir=".", overrides: dict | None = None) -> ExperimentConfig:
    merged = _merge(raw, overrides or {})
    validate(merged)
    merged = _merge(DEFAULTS, merged)
    cfg = ExperimentConfig(merged, Path(base_dir))
    if cfg.experiment["baseline"] not in VARIANTS:
        raise ConfigError(f"unknown baseline variant {cfg.experiment['baseline']!r}")
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return make_config(raw, path.parent, overrides)


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2)
