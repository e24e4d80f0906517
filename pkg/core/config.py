import os, json
import copy
from typing import Any, Dict, Iterable, Optional

from core.error_handler import ConfigError


def deep_merge(base: Dict, override: Dict) -> Dict:
    """Return a copy of base with override merged in (nested dicts merged, rest replaced)."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str):
    """Split 'a.b=value' into ('a.b', value). Values are JSON when they parse, strings otherwise."""
    if "=" not in item:
        raise ConfigError(f"Override '{item}' must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"Override '{item}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


class Config:
    """
    Nested JSON configuration addressed with dotted keys ('train.learning_rate').

    A Config is built from defaults plus an optional document on disk; command-line
    overrides are applied on top with apply_overrides().
    """

    def __init__(self, data: Optional[Dict] = None, defaults: Optional[Dict] = None, source: Optional[str] = None):
        self._data = deep_merge(defaults or {}, data or {})
        self.source = source  # path the document was read from, if any

    @classmethod
    def load(cls, path: str, defaults: Optional[Dict] = None) -> "Config":
        """Read a JSON configuration document and merge it over the defaults."""
        if not os.path.exists(path):
            raise ConfigError(f"Configuration file not found: {path}")
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration root in {path} must be an object")
        return cls(data, defaults=defaults, source=path)

    def _walk(self, key: str, create: bool = False):
        parts = key.split(".")
        node = self._data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                if not create:
                    return None, parts[-1]
                node[part] = {}
            node = node[part]
        return node, parts[-1]

    def get(self, key: str, default: Any = None) -> Any:
        """Get a value by dotted key. Read-only - does not persist defaults."""
        node, leaf = self._walk(key)
        if node is None:
            return default
        return node.get(leaf, default)

    def set(self, key: str, value: Any) -> None:
        """Set a value by dotted key, creating intermediate sections."""
        node, leaf = self._walk(key, create=True)
        node[leaf] = value

    def rem(self, key: str) -> bool:
        """Remove a key. Returns True if something was removed."""
        node, leaf = self._walk(key)
        if node is not None and leaf in node:
            del node[leaf]
            return True
        return False

    def has(self, key: str) -> bool:
        """Check if a dotted key exists"""
        node, leaf = self._walk(key)
        return node is not None and leaf in node

    def section(self, key: str) -> Dict:
        """Return a copy of a nested section (empty dict if missing)."""
        value = self.get(key, {})
        if not isinstance(value, dict):
            raise ConfigError(f"Configuration key '{key}' must be an object")
        return copy.deepcopy(value)

    def apply_overrides(self, items: Iterable[str]) -> None:
        """Apply 'key=value' overrides from the command line."""
        for item in items or []:
            key, value = parse_override(item)
            self.set(key, value)

    def as_dict(self) -> Dict:
        return copy.deepcopy(self._data)

    def save(self, path: str) -> None:
        """Write the configuration atomically (temp file + rename)."""
        from core.utils import atomic_write_text
        atomic_write_text(path, json.dumps(self._data, indent=4, sort_keys=True) + "\n")
