"""
Config Utility

Line-oriented `key=value` config files, typed dataclass loading and config hashing.
The default config path comes from the AVSE_CONFIG environment variable (read
through python-dotenv by the entry point).
"""

import hashlib
import logging
import os
from dataclasses import fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

from dotenv import load_dotenv

from shared import AVSEError, ENV_CONFIG

logger = logging.getLogger('avse')

load_dotenv()

PathLike = Union[str, Path]

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse `key=value` lines; `#` starts a comment, blank lines are skipped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected key=value, got '{raw.strip()}'")
        values[key.strip()] = value.strip()
    return values


def load_kv(path: PathLike) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    return parse_kv(path.read_text(encoding='utf-8'), str(path))


def default_config_path() -> Optional[Path]:
    value = os.getenv(ENV_CONFIG)
    return Path(value) if value else None


def load_config(path: Optional[PathLike] = None) -> Dict[str, str]:
    """Config from an explicit path, else from $AVSE_CONFIG, else empty."""
    path = Path(path) if path else default_config_path()
    if path is None:
        return {}
    logger.debug(f"CONFIG | loading {path}")
    return load_kv(path)


def dump_kv(values: Mapping[str, object]) -> str:
    return "".join(f"{k}={_render(v)}\n" for k, v in sorted(values.items()))


def save_kv(path: PathLike, values: Mapping[str, object]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_kv(values), encoding='utf-8')
    return path


def config_hash(values: Mapping[str, object]) -> str:
    """SHA-256 over the sorted canonical key=value lines."""
    return hashlib.sha256(dump_kv(values).encode('utf-8')).hexdigest()


def _render(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce(kind, value: str, key: str = "?"):
    name = kind if isinstance(kind, str) else getattr(kind, '__name__', str(kind))
    try:
        if name == 'bool':
            lowered = str(value).strip().lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value}")
        if name == 'int':
            return int(value)
        if name == 'float':
            return float(value)
    except ValueError as e:
        raise ConfigError(f"Bad value for '{key}': {e}") from e
    return str(value)


def dataclass_from_mapping(cls, data: Mapping[str, str], strict: bool = True, prefix: str = ""):
    """Build dataclass `cls` from string values; unknown keys fail when strict."""
    known = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if prefix:
            if not key.startswith(prefix):
                continue
            key = key[len(prefix):]
        if key in known:
            kwargs[key] = coerce(known[key], value, key)
        elif strict:
            raise ConfigError(f"Unknown config key '{prefix}{key}' for {cls.__name__}")
    return cls(**kwargs)


def check_sections(data: Mapping[str, str], sections: Mapping[str, type]):
    """Every key must be `prefix.field` for one of the registered dataclasses."""
    for key in data:
        prefix, dot, name = key.partition('.')
        cls = sections.get(f"{prefix}.") if dot else None
        if cls is None:
            raise ConfigError(f"Unknown config section in '{key}', expected one of {sorted(sections)}")
        if name not in {f.name for f in fields(cls)}:
            raise ConfigError(f"Unknown config key '{key}' for {cls.__name__}")


class ConfigError(AVSEError):
    """Raised for unreadable or invalid configuration."""
    pass
