"""Flat key=value config files for the experiment CLI.

One `key = value` pair per line; '#' starts a comment.  Keys must match the
target dataclass's field names and values are coerced by field type.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path


def read_kv(path: str | Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _coerce(text: str, typ) -> object:
    if typ is bool or typ == "bool":
        lowered = text.lower()
        if lowered in ("1", "true", "on", "yes"):
            return True
        if lowered in ("0", "false", "off", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ is int or typ == "int":
        return int(text)
    if typ is float or typ == "float":
        return float(text)
    return text


def dataclass_from_kv(cls, pairs: dict[str, str], overrides: dict | None = None):
    """Build a config dataclass from string pairs, erroring on unknown keys."""
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    unknown = set(pairs) - set(field_types)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {name: _coerce(text, field_types[name]) for name, text in pairs.items()}
    if overrides:
        kwargs.update(overrides)
    return cls(**kwargs)


def load_config(cls, path: str | Path, overrides: dict | None = None):
    return dataclass_from_kv(cls, read_kv(path), overrides)


def write_kv(path: str | Path, cfg) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")
