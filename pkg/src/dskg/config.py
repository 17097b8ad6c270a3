"""Flat key=value configuration with environment and flag overrides.

Option values resolve in increasing precedence: built-in defaults, then a
key=value config file, then ``DSKG_``-prefixed environment variables, then
command-line flags. Every command writes the fully resolved configuration it
ran with next to its outputs.
"""

from __future__ import annotations

import os
from pathlib import Path

ENV_PREFIX = "DSKG_"


def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    options: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            options[key.strip()] = value.strip()
    return options


def env_overrides(keys, environ=None) -> dict[str, str]:
    """Pick up DSKG_<KEY> environment variables for the given option keys."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in keys:
        value = environ.get(ENV_PREFIX + key.upper())
        if value is not None:
            out[key] = value
    return out


def coerce(value, target_type):
    """Convert a string option to its declared type; booleans accept 1/0/true/false."""
    if value is None or not isinstance(value, str):
        return value
    if target_type is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def resolve_options(
    defaults: dict,
    types: dict,
    config_file: str | None = None,
    environ=None,
    flags: dict | None = None,
) -> dict:
    """Merge defaults < config file < environment < explicit flags."""
    merged = dict(defaults)
    if config_file:
        file_options = parse_config_file(config_file)
        unknown = set(file_options) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in file_options.items():
            merged[key] = coerce(value, types[key])
    for key, value in env_overrides(defaults.keys(), environ).items():
        merged[key] = coerce(value, types[key])
    for key, value in (flags or {}).items():
        if value is not None:
            merged[key] = value
    return merged


def write_resolved(options: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for key in sorted(options):
            handle.write(f"{key}={options[key]}\n")
