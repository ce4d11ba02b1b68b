"""
Flat configuration files: one `dotted.key = value` per line, `#` comments.

Values stay strings (comma-separated values become lists of strings); typing
and validation happen in the pydantic model that consumes the mapping.
"""

import os
import re
from typing import Dict, List, Tuple

_KEY_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$')


class ConfigError(ValueError):
    """Configuration problems, each as (line number, message); line 0 means the whole file."""

    def __init__(self, path, diagnostics: List[Tuple[int, str]]):
        self.path = path
        self.diagnostics = list(diagnostics)
        super().__init__('\n'.join(self.format_lines()))

    def format_lines(self) -> List[str]:
        return [f"{self.path}:{line}: {message}" if line else f"{self.path}: {message}"
                for line, message in self.diagnostics]


def parse_value(raw: str):
    raw = raw.strip()
    if ',' in raw:
        return [item.strip() for item in raw.split(',') if item.strip()]
    return raw


def parse_flat_config(text: str, path='<config>') -> Tuple[Dict, Dict[str, int]]:
    """Parse config text into (nested mapping, dotted key -> line number)."""
    nested: Dict = {}
    lines: Dict[str, int] = {}
    diagnostics: List[Tuple[int, str]] = []

    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        if '=' not in stripped:
            diagnostics.append((number, f"expected 'key = value', got {stripped!r}"))
            continue
        key, value = (part.strip() for part in stripped.split('=', 1))
        if not _KEY_RE.match(key):
            diagnostics.append((number, f"invalid key {key!r}"))
            continue
        if key in lines:
            diagnostics.append((number, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue

        *sections, leaf = key.split('.')
        node = nested
        conflict = False
        for section in sections:
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                conflict = True
                break
            node = child
        if conflict or isinstance(node.get(leaf), dict):
            diagnostics.append((number, f"key {key!r} conflicts with another key"))
            continue
        node[leaf] = parse_value(value)
        lines[key] = number

    if diagnostics:
        raise ConfigError(path, diagnostics)
    return nested, lines


def load_flat_config(file_path) -> Tuple[Dict, Dict[str, int]]:
    if not os.path.isfile(file_path):
        raise ConfigError(file_path, [(0, "configuration file not found")])
    with open(file_path, 'r', encoding='utf-8') as file:
        return parse_flat_config(file.read(), file_path)
