"""Run configuration: file/env/flag merging and artifact fingerprinting.

Precedence, lowest to highest: built-in default, config file (TOML; a
``[subcommand]`` section overrides top-level keys), ``COUNTFORGE_<NAME>``
environment variable, explicit command-line flag. The resolved option map
is hashed into a short fingerprint that every output artifact embeds, so
artifacts can be traced back to the exact configuration that produced
them.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ENV_PREFIX = "COUNTFORGE"


def load_config_file(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _coerce(raw: str, template):
    if isinstance(template, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one subcommand invocation."""

    command: str
    options: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"command": self.command, "options": self.options},
            sort_keys=True,
            ensure_ascii=False,
            default=str,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"command": self.command, "options": dict(self.options)}


class OptionResolver:
    """Merge one subcommand's options from defaults, file, env, and flags."""

    def __init__(self, command: str, file_config: dict | None = None):
        self.command = command
        file_config = file_config or {}
        section = file_config.get(command, {})
        if not isinstance(section, dict):
            section = {}
        self._flat = {k: v for k, v in file_config.items() if not isinstance(v, dict)}
        self._section = section
        self._resolved: dict = {}

    def resolve(self, name: str, cli_value, default):
        """Pick the effective value for one option and record it."""
        value = default
        if name in self._flat:
            value = self._flat[name]
        if name in self._section:
            value = self._section[name]
        env_value = os.environ.get(f"{ENV_PREFIX}_{name.upper()}")
        if env_value is not None:
            value = _coerce(env_value, default)
        if cli_value is not None:
            value = cli_value
        self._resolved[name] = value
        return value

    def record(self, name: str, value) -> None:
        """Record an option that does not participate in merging."""
        self._resolved[name] = value

    def run_config(self) -> RunConfig:
        return RunConfig(command=self.command, options=dict(self._resolved))
