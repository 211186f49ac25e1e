"""Client-side cookie jar with RFC 6265 domain/path matching.

Cookies are additionally keyed by the origin (scheme://host:port) that set
them and are only replayed to that origin, so two services on different
ports of one host never see each other's sessions.  Within an origin the
usual RFC 6265 rules apply: path prefix matching, Secure only over https,
expiry via Max-Age/Expires.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from email.utils import parsedate_to_datetime
from urllib.parse import urlsplit


def _normalized_origin(url: str) -> str:
    parts = urlsplit(url)
    scheme = parts.scheme.lower()
    host = (parts.hostname or "").lower()
    port = parts.port
    if port is None:
        port = 443 if scheme == "https" else 80
    return f"{scheme}://{host}:{port}"


def default_path(request_path: str) -> str:
    """RFC 6265 section 5.1.4 default-path computation."""
    if not request_path.startswith("/") or request_path == "/":
        return "/"
    idx = request_path.rfind("/")
    if idx == 0:
        return "/"
    return request_path[:idx]


def path_matches(request_path: str, cookie_path: str) -> bool:
    if request_path == cookie_path:
        return True
    if request_path.startswith(cookie_path):
        if cookie_path.endswith("/"):
            return True
        return request_path[len(cookie_path):].startswith("/")
    return False


def domain_matches(host: str, domain: str) -> bool:
    host = host.lower()
    domain = domain.lower()
    if host == domain:
        return True
    return host.endswith("." + domain)


@dataclass
class Cookie:
    name: str
    value: str
    domain: str
    path: str
    origin: str  # origin that set the cookie; replay is limited to it
    expires: float | None = None  # epoch seconds
    secure: bool = False
    host_only: bool = True
    created: float = 0.0

    def expired(self, now: float) -> bool:
        return self.expires is not None and now >= self.expires


class CookieJar:
    """Thread-safe store; one read-modify-write per response."""

    def __init__(self):
        self._lock = threading.Lock()
        self._cookies: dict[tuple, Cookie] = {}

    def __len__(self):
        return len(self._cookies)

    def all_cookies(self) -> list[Cookie]:
        with self._lock:
            return list(self._cookies.values())

    def store(self, response_url: str, set_cookie_value: str, now: float | None = None) -> None:
        """Absorb one Set-Cookie header value received from response_url."""
        now = time.time() if now is None else now
        parts = urlsplit(response_url)
        host = (parts.hostname or "").lower()
        origin = _normalized_origin(response_url)

        pieces = set_cookie_value.split(";")
        if "=" not in pieces[0]:
            return
        name, _, value = pieces[0].partition("=")
        name = name.strip()
        value = value.strip().strip('"')
        if not name:
            return

        domain = host
        host_only = True
        path = None
        expires: float | None = None
        max_age: float | None = None
        secure = False
        for piece in pieces[1:]:
            key, _, val = piece.strip().partition("=")
            key = key.strip().lower()
            val = val.strip()
            if key == "domain" and val:
                candidate = val.lstrip(".").lower()
                if not domain_matches(host, candidate):
                    return  # cookie rejected: domain does not cover the host
                domain = candidate
                host_only = False
            elif key == "path":
                path = val if val.startswith("/") else None
            elif key == "max-age":
                try:
                    max_age = float(val)
                except ValueError:
                    pass
            elif key == "expires":
                try:
                    expires = parsedate_to_datetime(val).timestamp()
                except (ValueError, TypeError):
                    pass
            elif key == "secure":
                secure = True
        if max_age is not None:
            expires = now + max_age
        if path is None:
            path = default_path(parts.path or "/")

        cookie = Cookie(
            name=name, value=value, domain=domain, path=path, origin=origin,
            expires=expires, secure=secure, host_only=host_only, created=now,
        )
        key = (origin, name, domain, path)
        with self._lock:
            if expires is not None and expires <= now:
                self._cookies.pop(key, None)
            else:
                old = self._cookies.get(key)
                if old is not None:
                    cookie.created = old.created
                self._cookies[key] = cookie

    def matching(self, request_url: str, now: float | None = None) -> list[Cookie]:
        now = time.time() if now is None else now
        parts = urlsplit(request_url)
        host = (parts.hostname or "").lower()
        scheme = parts.scheme.lower()
        req_path = parts.path or "/"
        origin = _normalized_origin(request_url)
        out = []
        with self._lock:
            for key, cookie in list(self._cookies.items()):
                if cookie.expired(now):
                    del self._cookies[key]
                    continue
                if cookie.origin != origin:
                    continue
                if cookie.host_only:
                    if host != cookie.domain:
                        continue
                elif not domain_matches(host, cookie.domain):
                    continue
                if not path_matches(req_path, cookie.path):
                    continue
                if cookie.secure and scheme != "https":
                    continue
                out.append(cookie)
        out.sort(key=lambda c: (-len(c.path), c.created))
        return out

    def get(self, request_url: str, name: str) -> Cookie | None:
        for cookie in self.matching(request_url):
            if cookie.name == name:
                return cookie
        return None


def cookie_header_for(jar: CookieJar, request_url: str, now: float | None = None) -> str:
    """The Cookie header value for a request, or "" when nothing matches."""
    return "; ".join(f"{c.name}={c.value}" for c in jar.matching(request_url, now))
