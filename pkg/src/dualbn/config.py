"""Experiment configuration: JSON schema, defaults, presets, resolution.

A config is a JSON document mirroring the training/model dataclasses
plus evaluation sections. Unknown keys are rejected with their JSON
path. `resolve_config` fills every default so the resolved snapshot
written next to run outputs is complete and replayable.
"""

import copy
import json
import os

from .augment import AlternatingPolicy, policy_preset
from .batchnorm import BnMode
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig

DATA_ROOT_ENV = "DUALBN_DATA_ROOT"

DEFAULTS = {
    "preset": None,
    "seed": 0,
    "out_dir": "runs/default",
    "threads": None,
    "dataset": {
        "kind": "synth",            # synth | cifar10 | cifar100
        "root": None,               # falls back to $DUALBN_DATA_ROOT
        "num_classes": 4,           # synth only
        "n_train": 5000,            # synth only
        "n_test": 1000,             # synth only
        "size": 32,                 # synth only
        "subset": None,             # cifar kinds: keep first N training records
    },
    "model": {
        "depth": 10,
        "width": 1,
        "bn_mode": "single",        # single | shared_affine | fully_separate
        "bn_momentum": 0.1,
        "bn_eps": 1e-5,
    },
    "train": {
        "epochs": 10,
        "batch_size": 128,
        "lr": 0.1,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "dual_enabled": False,
        "main_policy": "flip_crop",
        "aux_policy": "randaugment",
        "decay_norm_and_bias": False,
        "checkpoint_every": 0,      # epochs; 0 = only at the end
    },
    "eval": {
        "lambda_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
        "corruption_images": 500,
        "lambda_uce": True,
        "want_ce": False,
        "baseline_errors_csv": None,
        "logit_space_interpolation": False,
    },
    "fourier": {
        "norm": 8.0,
        "n_images": 128,
    },
    "lowpass": {
        "bandwidths": [1, 2, 4, 6, 8, 12, 16, 24, 32],
        "n_images": 500,
    },
    "affinity": {
        "policies": ["none", "flip", "flip_crop", "cutout"],
        "n_images": None,
    },
}

# Table-style ablation presets; each is a sparse override of DEFAULTS.
PRESETS = {
    "standard": {
        "train": {"main_policy": "flip_crop", "dual_enabled": False},
        "model": {"bn_mode": "single"},
    },
    "randaugment": {
        "train": {"main_policy": "randaugment", "dual_enabled": False},
        "model": {"bn_mode": "single"},
    },
    "two-ra": {
        "train": {"main_policy": "randaugment", "aux_policy": "randaugment",
                  "dual_enabled": True},
        "model": {"bn_mode": "single"},
    },
    "two-ra-dualbn": {
        "train": {"main_policy": "randaugment", "aux_policy": "randaugment",
                  "dual_enabled": True},
        "model": {"bn_mode": "fully_separate"},
    },
    "weak-no-dual": {
        "train": {"main_policy": {"alternate": ["cutout", "randaugment"]},
                  "dual_enabled": False},
        "model": {"bn_mode": "single"},
    },
    "weak-shared-affine": {
        "train": {"main_policy": "cutout", "aux_policy": "randaugment",
                  "dual_enabled": True},
        "model": {"bn_mode": "shared_affine"},
    },
    "weak-augment": {
        "train": {"main_policy": "cutout", "aux_policy": "randaugment",
                  "dual_enabled": True},
        "model": {"bn_mode": "fully_separate"},
    },
}


def _check_keys(raw, template, path=""):
    if not isinstance(raw, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be an object")
    for key, value in raw.items():
        here = f"{path}.{key}" if path else key
        if key not in template:
            raise ConfigError(f"unknown config key '{here}'")
        if isinstance(template[key], dict) and template[key]:
            _check_keys(value, template[key], here)


def _deep_merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if isinstance(value, dict) and isinstance(out.get(key), dict) and out[key]:
            out[key] = _deep_merge(out[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(raw: dict = None, preset: str = None, overrides: dict = None) -> dict:
    """Defaults <- preset <- config file <- CLI overrides, fully expanded."""
    resolved = copy.deepcopy(DEFAULTS)
    name = preset or (raw or {}).get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}' (have {sorted(PRESETS)})")
        resolved = _deep_merge(resolved, PRESETS[name])
        resolved["preset"] = name
    if raw:
        # policy specs may be dicts; exempt them from the key walk
        template = copy.deepcopy(DEFAULTS)
        template["train"]["main_policy"] = None
        template["train"]["aux_policy"] = None
        _check_keys(raw, template)
        resolved = _deep_merge(resolved, {k: v for k, v in raw.items() if k != "preset"})
    if overrides:
        resolved = _deep_merge(resolved, overrides)
    return resolved


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    return raw


def build_policy(spec):
    """Policy spec: preset name, {'preset':..., params}, or {'alternate': [a, b]}."""
    if isinstance(spec, str):
        return policy_preset(spec)
    if isinstance(spec, dict) and "alternate" in spec:
        pair = spec["alternate"]
        if len(pair) != 2:
            raise ConfigError(f"'alternate' needs exactly 2 policies, got {len(pair)}")
        even, odd = (build_policy(p) for p in pair)
        return AlternatingPolicy(f"alternate({even.name},{odd.name})", even, odd)
    if isinstance(spec, dict) and "preset" in spec:
        spec = dict(spec)
        return policy_preset(spec.pop("preset"), **spec)
    raise ConfigError(f"cannot interpret augmentation policy spec {spec!r}")


def build_model_config(resolved: dict, num_classes: int) -> ModelConfig:
    m = resolved["model"]
    try:
        mode = BnMode(m["bn_mode"])
    except ValueError:
        raise ConfigError(
            f"model.bn_mode '{m['bn_mode']}' not one of "
            f"{[b.value for b in BnMode]}") from None
    return ModelConfig(depth=m["depth"], width=m["width"], in_channels=3,
                       num_classes=num_classes, bn_mode=mode,
                       bn_momentum=m["bn_momentum"], bn_eps=m["bn_eps"])


def build_train_config(resolved: dict, num_classes: int) -> TrainConfig:
    t = resolved["train"]
    return TrainConfig(
        model=build_model_config(resolved, num_classes),
        epochs=t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
        momentum=t["momentum"], weight_decay=t["weight_decay"],
        dual_enabled=t["dual_enabled"],
        main_policy=build_policy(t["main_policy"]),
        aux_policy=build_policy(t["aux_policy"]),
        seed=resolved["seed"], decay_norm_and_bias=t["decay_norm_and_bias"])


def dataset_root(resolved: dict) -> str:
    root = resolved["dataset"]["root"] or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ConfigError(
            f"dataset.kind '{resolved['dataset']['kind']}' needs dataset.root "
            f"or ${DATA_ROOT_ENV}")
    return root


def write_resolved_config(resolved: dict, path):
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
