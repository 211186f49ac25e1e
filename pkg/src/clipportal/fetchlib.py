"""Minimal HTTP client: redirects, cookie jar hookup, per-origin traffic log.

Built on http.client so every request and response body is visible for
byte accounting; redirect hops each count against the origin they touch.
"""

from __future__ import annotations

import http.client
import socket
import ssl
import threading
from dataclasses import dataclass, field
from urllib.parse import urlsplit, urlunsplit

from .cookies import CookieJar, cookie_header_for
from .urls import origin_of, resolve

REDIRECT_STATUSES = (301, 302, 303, 307, 308)


class FetchError(Exception):
    def __init__(self, url: str, cause: str):
        self.url = url
        self.cause = cause
        super().__init__(f"{cause}: {url}")


@dataclass
class Response:
    status: int
    headers: list  # (name, value) pairs in receipt order
    body: bytes
    url: str  # final URL after redirects
    hops: int = 0

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for k, v in self.headers:
            if k.lower() == lname:
                return v
        return None

    def header_all(self, name: str) -> list:
        lname = name.lower()
        return [v for k, v in self.headers if k.lower() == lname]

    @property
    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")


@dataclass
class Counter:
    bytes_in: int = 0
    bytes_out: int = 0
    request_count: int = 0


class TrafficLog:
    """Per-origin request/byte counters; bytes are body bytes only."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counters: dict[str, Counter] = {}

    def record(self, origin: str, sent: int, received: int) -> None:
        with self._lock:
            counter = self._counters.setdefault(origin, Counter())
            counter.bytes_out += sent
            counter.bytes_in += received
            counter.request_count += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                origin: Counter(c.bytes_in, c.bytes_out, c.request_count)
                for origin, c in self._counters.items()
            }

    def for_origin(self, origin: str) -> Counter:
        with self._lock:
            c = self._counters.get(origin)
            return Counter(c.bytes_in, c.bytes_out, c.request_count) if c else Counter()

    def total_requests(self) -> int:
        with self._lock:
            return sum(c.request_count for c in self._counters.values())


def fetch(
    method: str,
    url: str,
    *,
    headers: dict | None = None,
    body: bytes | None = None,
    jar: CookieJar | None = None,
    traffic: TrafficLog | None = None,
    max_redirects: int = 5,
    timeout: float = 10.0,
    ssl_context: ssl.SSLContext | None = None,
) -> Response:
    """Issue a request, following up to max_redirects and absorbing cookies
    at every hop.  Raises FetchError on network failure, never on HTTP
    status codes."""
    current_method = method.upper()
    current_url = url
    current_body = body
    hops = 0
    while True:
        parts = urlsplit(current_url)
        if parts.scheme not in ("http", "https"):
            raise FetchError(current_url, "unsupported scheme")
        host = parts.hostname or ""
        port = parts.port or (443 if parts.scheme == "https" else 80)
        path = urlunsplit(("", "", parts.path or "/", parts.query, ""))
        if parts.scheme == "https":
            context = ssl_context
            if context is None:
                context = ssl.create_default_context()
            conn = http.client.HTTPSConnection(host, port, timeout=timeout, context=context)
        else:
            conn = http.client.HTTPConnection(host, port, timeout=timeout)

        send_headers = dict(headers or {})
        if jar is not None:
            cookie_value = cookie_header_for(jar, current_url)
            if cookie_value:
                send_headers["Cookie"] = cookie_value
        if current_body is not None and "Content-Type" not in send_headers:
            send_headers["Content-Type"] = "application/x-www-form-urlencoded"

        try:
            conn.request(current_method, path, body=current_body, headers=send_headers)
            resp = conn.getresponse()
            resp_body = resp.read()
            resp_headers = list(resp.getheaders())
            status = resp.status
        except (OSError, socket.timeout, http.client.HTTPException, ssl.SSLError) as exc:
            conn.close()
            raise FetchError(current_url, f"connection failed ({exc.__class__.__name__})")
        finally:
            try:
                conn.close()
            except Exception:
                pass

        if traffic is not None:
            traffic.record(origin_of(current_url), len(current_body or b""), len(resp_body))
        if jar is not None:
            for value in (v for k, v in resp_headers if k.lower() == "set-cookie"):
                jar.store(current_url, value)

        if status in REDIRECT_STATUSES and hops < max_redirects:
            location = next((v for k, v in resp_headers if k.lower() == "location"), None)
            if location is not None:
                hops += 1
                current_url = resolve(current_url, location)
                if status in (301, 302, 303) and current_method not in ("GET", "HEAD"):
                    current_method = "GET"
                    current_body = None
                continue
        # an unfollowed redirect (loop or max_redirects=0) is returned as-is
        return Response(status=status, headers=resp_headers, body=resp_body, url=current_url, hops=hops)


def ssl_context_for_ca(ca_file: str | None) -> ssl.SSLContext | None:
    """Context trusting the given CA/cert file; None means default trust."""
    if ca_file is None:
        return None
    context = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    context.load_verify_locations(cafile=ca_file)
    context.check_hostname = False
    context.verify_mode = ssl.CERT_REQUIRED
    return context
