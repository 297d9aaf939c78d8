"""JSON run configuration.

The file mirrors :class:`~graphene_dsmc.engine.SimConfig`; nested objects
``grid``, ``ee`` and ``material`` take the fields of ``GridSpec``,
``EeRateParams`` and ``MaterialParams`` (internal units: eV, nm, ps, K).
An optional top-level ``out`` names the output directory.  Missing keys take
their defaults; unknown keys are errors.  Error messages point at the line
of the offending key.
"""

from __future__ import annotations

import dataclasses
import json
import re
import warnings
from pathlib import Path

from .ee import EeRateParams
from .engine import ConfigError, SimConfig
from .grid import GridSpec
from .material import MaterialParams

_SECTIONS = {"grid": GridSpec, "ee": EeRateParams, "material": MaterialParams}
_TOP_EXTRA = {"out"}


class ConfigFileError(ConfigError):
    """Problem in a configuration file; the message carries ``path:line``."""


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _line_of(text: str, key: str, after: int = 0) -> int:
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, after)
    pos = m.start() if m else after
    return text.count("\n", 0, pos) + 1


def _offset_of(text: str, key: str) -> int:
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text)
    return m.start() if m else 0


def _check_value(name: str, value, expected: str):
    """Loose type check on JSON values against the dataclass annotation string."""
    exp = str(expected)
    if exp in ("bool",):
        ok = isinstance(value, bool)
    elif exp in ("int",):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif exp in ("float",):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif exp in ("str",):
        ok = isinstance(value, str)
    elif exp.startswith("tuple"):
        ok = (isinstance(value, list) and len(value) == 2
              and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value))
    elif "None" in exp:
        ok = value is None or (isinstance(value, (int, float)) and not isinstance(value, bool))
    else:
        ok = True
    if not ok:
        raise ValueError(f"'{name}' has invalid value {value!r} (expected {exp})")


def parse_config(text: str, path: str = "<config>") -> tuple[SimConfig, dict]:
    """Parse configuration text; returns the SimConfig and the extra keys (``out``)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigFileError(f"{path}:1: top level must be a JSON object")
    top_types = _field_types(SimConfig)
    kwargs, extra = {}, {}
    for key, value in data.items():
        line = _line_of(text, key)
        if key in _TOP_EXTRA:
            if not isinstance(value, str):
                raise ConfigFileError(f"{path}:{line}: 'out' must be a string")
            extra[key] = value
            continue
        if key not in top_types:
            raise ConfigFileError(f"{path}:{line}: unknown key '{key}'")
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigFileError(f"{path}:{line}: '{key}' must be an object")
            sub_types = _field_types(cls)
            start = _offset_of(text, key)
            for sub_key, sub_val in value.items():
                sub_line = _line_of(text, sub_key, start)
                if sub_key not in sub_types:
                    raise ConfigFileError(f"{path}:{sub_line}: unknown key '{key}.{sub_key}'")
                try:
                    _check_value(f"{key}.{sub_key}", sub_val, sub_types[sub_key])
                except ValueError as exc:
                    raise ConfigFileError(f"{path}:{sub_line}: {exc}") from None
            try:
                kwargs[key] = cls(**value)
            except (ValueError, TypeError) as exc:
                raise ConfigFileError(f"{path}:{line}: invalid '{key}' section: {exc}") from None
            continue
        try:
            _check_value(key, value, top_types[key])
        except ValueError as exc:
            raise ConfigFileError(f"{path}:{line}: {exc}") from None
        kwargs[key] = value
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = SimConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        # locate the key the message names, if any
        bad = next((k for k in data if f"{k} " in str(exc) or f"'{k}'" in str(exc) or str(exc).startswith(k)), None)
        line = _line_of(text, bad) if bad else 1
        raise ConfigFileError(f"{path}:{line}: {exc}") from None
    return cfg, extra


def load_config(path) -> tuple[SimConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def config_to_json(cfg: SimConfig) -> str:
    """Canonical single-line JSON of a config (sorted keys)."""
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
