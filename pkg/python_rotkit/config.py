"""``key = value`` run configuration.

Global keys sit at the top level; experiment settings use the experiment tag
as a prefix (``fourier.nb = 1,2,3``). Later sources override earlier ones:
file values first, then command-line overrides.
"""

from __future__ import annotations

import logging
import types
import typing
from collections.abc import Mapping
from dataclasses import fields
from typing import Any

from python_rotkit.const import ExperimentType
from python_rotkit.exceptions import ConfigError
from python_rotkit.model import EXPERIMENT_CONFIGS, RunSettings

_LOGGER = logging.getLogger(__name__)

GLOBAL_KEYS = ("seed", "out_dir", "workers", "svg")

# singular spellings accepted on the command line
FLAG_ALIASES = {
    "rep": "reps",
    "projection": "projections",
    "metric": "metrics",
    "variant": "variants",
    "batch": "batches",
}

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def parse_config_text(text: str) -> dict[str, str]:
    """Key/value pairs of a config file; every malformed line is reported."""
    values: dict[str, str] = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if key in values:
            _LOGGER.debug("config line %d overrides %s", lineno, key)
        values[key] = value.strip()
    if errors:
        raise ConfigError(errors)
    return values


def _coerce_scalar(text: str, kind: Any) -> Any:
    if kind is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def coerce(text: str, annotation: Any) -> Any:
    """Convert config text to a field annotation: scalars, optionals and tuples."""
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin in (types.UnionType, typing.Union):
        if text.lower() == "none" and type(None) in args:
            return None
        (inner,) = (a for a in args if a is not type(None))
        return coerce(text, inner)
    if origin is tuple:
        items = [item.strip() for item in text.split(",") if item.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce_scalar(item, args[0]) for item in items)
        if len(items) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values, got {len(items)}")
        return tuple(_coerce_scalar(item, a) for item, a in zip(items, args, strict=True))
    return _coerce_scalar(text, annotation)


def experiment_config(experiment: ExperimentType, values: Mapping[str, str]) -> Any:
    """Build the experiment's config dataclass from its ``<tag>.<field>`` keys."""
    cls = EXPERIMENT_CONFIGS[experiment]
    hints = typing.get_type_hints(cls)
    prefix = f"{experiment.value}."
    kwargs, errors = {}, []
    names = {f.name for f in fields(cls)}
    for key, text in values.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix) :]
        if name not in names:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            kwargs[name] = coerce(text, hints[name])
        except ValueError as ex:
            errors.append(f"{key}: {ex}")
    if errors:
        raise ConfigError(errors)
    return cls(**kwargs)


def _check_keys(experiment: ExperimentType, values: Mapping[str, str]) -> list[str]:
    """Unknown keys in every section; ``experiment``'s own section is left to experiment_config."""
    sections = {e.value: {f.name for f in fields(EXPERIMENT_CONFIGS[e])} for e in ExperimentType}
    errors = []
    for key in values:
        section, dot, name = key.partition(".")
        if key in GLOBAL_KEYS or section == experiment.value:
            continue
        if dot and name in sections.get(section, ()):
            continue
        errors.append(f"unknown key {key!r}")
    return errors


def flag_key(experiment: ExperimentType, flag: str) -> str:
    """Config key for a ``--flag`` given after the experiment name."""
    name = flag.lstrip("-").replace("-", "_")
    if name in GLOBAL_KEYS:
        return name
    return f"{experiment.value}.{FLAG_ALIASES.get(name, name)}"


def load_settings(
    experiment: ExperimentType,
    file_values: Mapping[str, str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> RunSettings:
    """Merge file values and overrides into validated run settings.

    Every unknown key and every bad value across all sources is collected
    before a single ConfigError is raised.
    """
    values = {**(file_values or {}), **(overrides or {})}
    errors = _check_keys(experiment, values)

    config = None
    try:
        config = experiment_config(experiment, values)
    except ConfigError as ex:
        errors.extend(ex.errors)
    except TypeError as ex:
        errors.append(str(ex))

    globals_: dict[str, Any] = {}
    for key, kind in (("seed", int), ("workers", int), ("svg", bool)):
        if key in values:
            try:
                globals_[key] = _coerce_scalar(values[key], kind)
            except ValueError as ex:
                errors.append(f"{key}: {ex}")
    if globals_.get("seed", 0) < 0:
        errors.append(f"seed must be nonnegative, got {globals_['seed']}")
    if globals_.get("workers", 1) < 1:
        errors.append(f"workers must be at least 1, got {globals_['workers']}")
    if errors:
        raise ConfigError(errors)

    settings = RunSettings(experiment, config, out_dir=values.get("out_dir"), **globals_)
    _LOGGER.debug("resolved settings: %s", settings)
    return settings
