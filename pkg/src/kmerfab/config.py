"""Flat key=value config files with fail-fast unknown-key validation."""

from __future__ import annotations

import re
from pathlib import Path


class ConfigError(Exception):
    pass


def parse_kv(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in out:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_kv(path: Path | str) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv(path.read_text())


def check_keys(kv: dict[str, str], allowed: set[str], patterns: list[str] = ()) -> None:
    """Reject keys outside the allowed set (or the regex patterns)."""
    compiled = [re.compile(p) for p in patterns]
    for key in kv:
        if key in allowed:
            continue
        if any(p.fullmatch(key) for p in compiled):
            continue
        raise ConfigError(f"unknown config key {key!r}")


def get_int(kv: dict[str, str], key: str, default: int | None = None) -> int | None:
    if key not in kv:
        return default
    try:
        return int(float(kv[key])) if ("e" in kv[key] or "." in kv[key]) else int(kv[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected integer, got {kv[key]!r}") from exc


def get_float(kv: dict[str, str], key: str, default: float | None = None) -> float | None:
    if key not in kv:
        return default
    try:
        return float(kv[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected number, got {kv[key]!r}") from exc


def get_str(kv: dict[str, str], key: str, default: str | None = None,
            choices: set[str] | None = None) -> str | None:
    value = kv.get(key, default)
    if value is not None and choices is not None and value not in choices:
        raise ConfigError(f"key {key!r}: expected one of {sorted(choices)}, got {value!r}")
    return value


def get_curve(kv: dict[str, str], key: str) -> list[float] | None:
    if key not in kv:
        return None
    try:
        return [float(v) for v in kv[key].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected comma-separated floats") from exc
