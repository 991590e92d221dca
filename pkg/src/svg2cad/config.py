"""Flat key = value configuration files, CLI overrides, and seed resolution.

Keys match TrainConfig / ModelConfig field names exactly. Precedence:
defaults < config file < CLI flags < the D2C_SEED environment variable,
which overrides every seed in the program.
"""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path
from typing import Any, Optional, Union

SEED_ENV_VAR = "D2C_SEED"


class ConfigError(ValueError):
    """Malformed configuration input."""


def parse_config_file(path: Union[str, Path]) -> dict[str, str]:
    """Read ``key = value`` lines; blank lines and # comments are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(value: str, target_type: type) -> Any:
    if target_type is bool:
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot read {value!r} as a boolean")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def apply_overrides(instance, values: dict[str, Any], strict: bool = False):
    """Dataclass copy with matching fields replaced; values coerced by field type."""
    fields = {f.name: f for f in dataclasses.fields(instance)}
    updates = {}
    for key, value in values.items():
        if key not in fields:
            if strict:
                raise ConfigError(f"unknown configuration key {key!r}")
            continue
        target_type = fields[key].type
        if isinstance(target_type, str):
            target_type = {"int": int, "float": float, "str": str, "bool": bool}.get(
                target_type, str)
        if isinstance(value, str):
            value = _coerce(value, target_type)
        updates[key] = value
    return dataclasses.replace(instance, **updates)


def resolve_seed(seed: Optional[int], default: int = 0) -> int:
    """CLI/file seed, unless D2C_SEED overrides everything."""
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    if seed is not None:
        return seed
    return default
