"""Pipeline configuration: defaults, JSON schema, validation and merging."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from ._util import json_pointer
from .augmentation import SPEC_TYPES


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "frame_base": 1,
    "paths": {"videos": None, "gt": None, "out": "framesift-run"},
    "video": {"fps": 10},
    "background": {"window_seconds": 10.0, "keep_fraction": 0.6},
    "classifier": {"night_threshold": 150, "fog_skewness_epsilon": 0.25},
    "sampling": {
        "frames": 400,
        "mode": "balanced",
        "hash_size": 8,
        "dedup_threshold": 5,
        "negative_augment_count": 2,
        "split_ratio": 0.7,
    },
    "augmentation": {
        "policy": "default6",
        "variants_per_frame": 6,
        "rgb": True,
        "augment_splits": ["train", "none"],
    },
    "tta": {"iou": 0.55, "confidence_rule": "views"},
    "eval": {"thresholds": [0.5]},
}

_num = {"type": "number"}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "framesift pipeline config",
    "type": "object",
    "additionalProperties": False,
    "required": list(DEFAULT_CONFIG),
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "jobs": {"type": "integer", "minimum": 1},
        "frame_base": {"enum": [0, 1]},
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "required": ["videos", "gt", "out"],
            "properties": {
                "videos": {"type": ["string", "null"]},
                "gt": {"type": ["string", "null"]},
                "out": {"type": "string"},
            },
        },
        "video": {
            "type": "object",
            "additionalProperties": False,
            "required": ["fps"],
            "properties": {"fps": {"type": "number", "exclusiveMinimum": 0}},
        },
        "background": {
            "type": "object",
            "additionalProperties": False,
            "required": ["window_seconds", "keep_fraction"],
            "properties": {
                "window_seconds": {"type": "number", "exclusiveMinimum": 0},
                "keep_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "classifier": {
            "type": "object",
            "additionalProperties": False,
            "required": ["night_threshold", "fog_skewness_epsilon"],
            "properties": {
                "night_threshold": {"type": "integer", "minimum": 0, "maximum": 255},
                "fog_skewness_epsilon": {"type": "number", "minimum": 0},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "required": list(DEFAULT_CONFIG["sampling"]),
            "properties": {
                "frames": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["paper", "balanced"]},
                "hash_size": {"type": "integer", "minimum": 1, "maximum": 16},
                "dedup_threshold": {"type": "integer", "minimum": 0},
                "negative_augment_count": {"type": "integer", "minimum": 0},
                "split_ratio": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "augmentation": {
            "type": "object",
            "additionalProperties": False,
            "required": list(DEFAULT_CONFIG["augmentation"]),
            "properties": {
                "policy": {
                    "oneOf": [
                        {"type": "string"},
                        {
                            "type": "object",
                            "properties": {
                                "name": {"type": "string"},
                                "ops": {"type": "array", "items": {"enum": sorted(SPEC_TYPES)}, "minItems": 1},
                                "rotate_degrees": _range,
                                "scale_factor": _range,
                                "crop_area": _range,
                                "crop_min_visible": _num,
                                "blur_radius": _range,
                                "brightness": _range,
                                "contrast": _range,
                                "saturation": _range,
                            },
                            "additionalProperties": False,
                        },
                    ]
                },
                "variants_per_frame": {"type": "integer", "minimum": 0},
                "rgb": {"type": "boolean"},
                "augment_splits": {"type": "array", "items": {"enum": ["train", "val", "none"]}},
            },
        },
        "tta": {
            "type": "object",
            "additionalProperties": False,
            "required": ["iou", "confidence_rule"],
            "properties": {
                "iou": {"type": "number", "minimum": 0, "maximum": 1},
                "confidence_rule": {"enum": ["views", "members"]},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "required": ["thresholds"],
            "properties": {
                "thresholds": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                               "minItems": 1},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "policy":
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(doc) -> dict:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ConfigError(json_pointer(err.absolute_path), err.message)
    return doc


def load_config(path) -> dict:
    """Read a config file, filling missing keys from the defaults.

    A run summary written by the pipeline is accepted too; its ``config``
    block is used.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "config" in doc and "stages" in doc:
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    return validate_config(merge(DEFAULT_CONFIG, doc))
