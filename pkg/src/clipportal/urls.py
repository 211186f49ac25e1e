"""Small URL helpers shared by the clip engine, server and client."""

from __future__ import annotations

from urllib.parse import urljoin, urlsplit


def origin_of(url: str) -> str:
    """scheme://host[:port] in lowercase; raises ValueError if not absolute."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"not an absolute URL: {url!r}")
    return f"{parts.scheme.lower()}://{parts.netloc.lower()}"


def is_absolute(url: str) -> bool:
    parts = urlsplit(url)
    return bool(parts.scheme)


def resolve(base_url: str, ref: str) -> str:
    return urljoin(base_url, ref)
