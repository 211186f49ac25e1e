"""Server configuration file loading.

Prefers the stdlib tomllib when running on 3.11+; otherwise falls back to
a small TOML-subset reader (documented in docs/server-config.md) covering
tables, strings, integers, booleans and string arrays, which is all the
server config uses.
"""

from __future__ import annotations

import re

try:
    import tomllib  # Python 3.11+
except ImportError:
    tomllib = None

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.\-\"']+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_\-]+)\s*=\s*(.+)$")


class ConfigError(ValueError):
    pass


def _parse_value(raw: str, lineno: int):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    if raw == "true":
        return True
    if raw == "false":
        return False
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(item, lineno) for item in _split_array(inner)]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {raw!r}")


def _split_array(inner: str) -> list:
    items, depth, quote, start = [], 0, None, 0
    for i, ch in enumerate(inner):
        if quote:
            if ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0:
            items.append(inner[start:i].strip())
            start = i + 1
    tail = inner[start:].strip()
    if tail:
        items.append(tail)
    return items


def _parse_toml_subset(text: str) -> dict:
    root: dict = {}
    current = root
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            current = root
            for part in m.group(1).split("."):
                part = part.strip("\"'")
                current = current.setdefault(part, {})
                if not isinstance(current, dict):
                    raise ConfigError(f"line {lineno}: section conflicts with a value")
            continue
        m = _KEY_RE.match(stripped)
        if m:
            key, raw = m.group(1), m.group(2)
            # strip trailing comments outside quotes
            raw = _strip_comment(raw)
            current[key] = _parse_value(raw, lineno)
            continue
        raise ConfigError(f"line {lineno}: cannot parse {stripped!r}")
    return root


def _strip_comment(raw: str) -> str:
    quote = None
    for i, ch in enumerate(raw):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return raw[:i].strip()
    return raw.strip()


def load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    if tomllib is not None:
        return tomllib.loads(data.decode("utf-8"))
    return _parse_toml_subset(data.decode("utf-8"))
