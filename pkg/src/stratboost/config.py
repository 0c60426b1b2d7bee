"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Keys::

    sample_size  ess_threshold  max_rules  gamma_init  gamma_floor
    max_leaves   bins           time_budget  sampler_batch  segment_bytes
    concurrent   stop.c  stop.sigma  stop.t0  stop.check_interval
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .booster import BoostConfig


class ConfigError(ValueError):
    pass


_ALIASES = {
    "stop.c": "stop_c",
    "stop.sigma": "stop_sigma",
    "stop.t0": "stop_t0",
    "stop.check_interval": "stop_check_interval",
}

_TYPES = {
    "sample_size": int, "max_rules": int, "max_leaves": int, "bins": int,
    "stop_t0": int, "stop_check_interval": int, "sampler_batch": int, "segment_bytes": int,
    "ess_threshold": float, "gamma_init": float, "gamma_floor": float, "stop_c": float,
    "stop_sigma": float, "time_budget": float, "concurrent": bool,
}


def _convert(key: str, raw: str, lineno: int):
    kind = _TYPES[key]
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> dict:
    out = {}
    known = {f.name for f in fields(BoostConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = (part.strip() for part in line.partition("="))
        name = _ALIASES.get(key, key)
        if name not in known or name not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if raw.lower() in ("none", ""):
            out[name] = None
            continue
        out[name] = _convert(name, raw, lineno)
    return out


def load_config(path, **overrides) -> BoostConfig:
    values = parse_config(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return BoostConfig(**{k: v for k, v in values.items() if v is not None or k in ("stop_sigma", "time_budget")})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_echo(cfg: BoostConfig) -> dict:
    inverse = {v: k for k, v in _ALIASES.items()}
    return {inverse.get(f.name, f.name): getattr(cfg, f.name) for f in fields(cfg)}
