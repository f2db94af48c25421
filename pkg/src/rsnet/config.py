"""Flat ``key = value`` config files mapped onto dataclasses.

One assignment per line, ``#`` starts a comment. Values are parsed with the
type of the matching dataclass field; unknown keys are rejected by name.
"""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path
from typing import Any, TypeVar

T = TypeVar("T")


class ConfigKeyError(KeyError):
    def __init__(self, key: str, allowed):
        super().__init__(key)
        self.key = key
        self.allowed = sorted(allowed)

    def __str__(self) -> str:
        return f"unknown config key {self.key!r} (allowed: {', '.join(self.allowed)})"


class ConfigValueError(ValueError):
    pass


def _parse_value(raw: str, typ, key: str) -> Any:
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        origin = typing.get_origin(typ)
        if origin is tuple:
            (inner, *_) = typing.get_args(typ)
            return tuple(_parse_value(v, inner, key) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigValueError(f"config key {key!r}: cannot parse {raw!r} as {typ}") from exc
    raise ConfigValueError(f"config key {key!r}: unsupported field type {typ}")


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    return str(v)


def parse_overrides(text: str, cls: type[T]) -> dict[str, Any]:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ConfigKeyError(key, names)
        out[key] = _parse_value(val, hints[key], key)
    return out


def load_config(path, cls: type[T], **overrides) -> T:
    values = parse_overrides(Path(path).read_text(), cls) if path else {}
    values.update(overrides)
    return config_from_dict(values, cls)


def config_from_dict(values: dict, cls: type[T]) -> T:
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigKeyError(key, names)
    hints = typing.get_type_hints(cls)
    fixed = {}
    for k, v in values.items():
        if typing.get_origin(hints[k]) is tuple and isinstance(v, list):
            v = tuple(v)
        fixed[k] = v
    return cls(**fixed)


def dump_config(cfg) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


def config_to_dict(cfg) -> dict:
    return {f.name: (list(v) if isinstance(v := getattr(cfg, f.name), tuple) else v) for f in dataclasses.fields(cfg)}


def load_split_config(path, *classes: type) -> list:
    """One flat file whose keys are spread over several config dataclasses.

    Each key goes to the first class that declares it; a key no class
    declares is rejected. Returns the parsed override dicts, one per class.
    """
    text = Path(path).read_text() if path else ""
    owners = {}
    for cls in reversed(classes):
        for f in dataclasses.fields(cls):
            owners[f.name] = cls
    out = [{} for _ in classes]
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in owners:
            raise ConfigKeyError(key, owners)
        cls = owners[key]
        out[classes.index(cls)][key] = _parse_value(val, typing.get_type_hints(cls)[key], key)
    return out
