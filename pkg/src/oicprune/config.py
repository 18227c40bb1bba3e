"""INI-style run configuration with strict key checking.

Sections: [model], [train], [prune], [data]. Unknown sections or keys
are rejected so typos never pass silently. Overrides are given as
``key=value`` (unique across sections) or ``section.key=value``.
"""

from __future__ import annotations

import configparser

from .errors import ConfigError
from .training import RunConfig


def _parse_schedule(text):
    pairs = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        epoch, mult = token.split(":")
        pairs.append((int(epoch), float(mult)))
    return pairs


def _parse_targets(text):
    return [float(v) for v in text.split(",") if v.strip()]


_SCHEMA = {
    "model": {
        "input": str,
        "layers": str,
        "init_seed": int,
    },
    "train": {
        "lr": float,
        "momentum": float,
        "weight_decay": float,
        "lambda_s": float,
        "regularizer": str,
        "batch_size": int,
        "epochs": int,
        "seed": int,
        "lr_schedule": _parse_schedule,
    },
    "prune": {
        "iterations": int,
        "targets": _parse_targets,
        "criterion": str,
        "fine_tune_epochs": int,
    },
    "data": {
        "task": str,
        "n": int,
        "seed": int,
        "num_classes": int,
        "eval_n": int,
        "eval_seed": int,
        "images": str,
        "labels": str,
        "eval_images": str,
        "eval_labels": str,
    },
}


def load_config(path, overrides=()):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        cfg[section] = {}
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            cfg[section][key] = _convert(section, key, raw)
    for ov in overrides:
        _apply_override(cfg, ov)
    return cfg


def _convert(section, key, raw):
    try:
        return _SCHEMA[section][key](raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({e})")


def _apply_override(cfg, override):
    if "=" not in override:
        raise ConfigError(f"override must be KEY=VALUE, got {override!r}")
    key, value = override.split("=", 1)
    key = key.strip()
    if "." in key:
        section, key = key.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override key {section}.{key}")
        sections = [section]
    else:
        sections = [s for s in _SCHEMA if key in _SCHEMA[s]]
        if not sections:
            raise ConfigError(f"unknown override key {key!r}")
        if len(sections) > 1:
            raise ConfigError(
                f"override key {key!r} is ambiguous across sections {sections}; "
                "qualify it as section.key"
            )
    section = sections[0]
    cfg.setdefault(section, {})[key] = _convert(section, key, value)


def require(cfg, section, key):
    try:
        return cfg[section][key]
    except KeyError:
        raise ConfigError(f"missing required config key {section}.{key}")


def run_config_from(cfg) -> RunConfig:
    """Build the training/pruning hyperparameter bundle from a config dict."""
    kwargs = {}
    train = cfg.get("train", {})
    for key in (
        "lr",
        "momentum",
        "weight_decay",
        "lambda_s",
        "regularizer",
        "batch_size",
        "epochs",
        "seed",
        "lr_schedule",
    ):
        if key in train:
            kwargs[key] = train[key]
    prune = cfg.get("prune", {})
    if "iterations" in prune:
        kwargs["iterations"] = prune["iterations"]
    if "targets" in prune:
        kwargs["flops_targets"] = prune["targets"]
    if "criterion" in prune:
        kwargs["criterion"] = prune["criterion"]
    if "fine_tune_epochs" in prune:
        kwargs["fine_tune_epochs"] = prune["fine_tune_epochs"]
    config = RunConfig(**kwargs)
    if config.iterations != len(config.flops_targets):
        raise ConfigError(
            f"prune.iterations={config.iterations} but "
            f"{len(config.flops_targets)} targets given"
        )
    return config


def config_to_jsonable(cfg):
    out = {}
    for section, keys in cfg.items():
        out[section] = {}
        for k, v in keys.items():
            out[section][k] = [list(p) for p in v] if k == "lr_schedule" else v
    return out
