"""The portal's TLS service: login, descriptor and credential distribution,
portlet authoring, optional opaque relay, static UI assets, traffic stats.

The server never parses or clips source pages; after a client initializes,
it is out of the data path entirely (the relay exists only as an opaque
byte pipe for browsers blocked by the same-origin policy).
"""

from __future__ import annotations

import hmac
import ipaddress
import json
import mimetypes
import os
import secrets
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from . import model
from .fetchlib import FetchError, fetch
from .model import CredentialEntry, DescriptorError, PortalDescriptor
from .urls import origin_of
from .vault import AuthError as VaultAuthError
from .vault import CredentialVault, NotFound

ENDPOINT_CLASSES = ("auth", "descriptor", "credentials", "assets", "relay")

TOKEN_TTL_SECONDS = 3600
LOGIN_FAILURE_WINDOW = 60.0
LOGIN_FAILURE_LIMIT = 10


@dataclass
class UserAccount:
    name: str
    password: str
    admin: bool = False


@dataclass
class ClassCounter:
    bytes_out: int = 0
    bytes_in: int = 0
    request_count: int = 0


class TrafficCounter:
    """Monotone per-endpoint-class counters (body bytes only)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._classes = {name: ClassCounter() for name in ENDPOINT_CLASSES}

    def add(self, endpoint_class: str, bytes_in: int, bytes_out: int) -> None:
        if endpoint_class not in self._classes:
            return  # stats/admin traffic is intentionally uncounted
        with self._lock:
            c = self._classes[endpoint_class]
            c.bytes_in += bytes_in
            c.bytes_out += bytes_out
            c.request_count += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                name: {
                    "bytes_out": c.bytes_out,
                    "bytes_in": c.bytes_in,
                    "request_count": c.request_count,
                }
                for name, c in self._classes.items()
            }


@dataclass
class Session:
    token: str
    user: str
    admin: bool
    expires_at: float


class PortalState:
    """Shared mutable server state; descriptor swaps are atomic."""

    def __init__(
        self,
        users: dict,
        descriptors: dict,
        vault: CredentialVault | None,
        portal_file: str | None = None,
        relay_enabled: bool = True,
        ui_dir: str | None = None,
        insecure_loopback: bool = False,
    ):
        self.users = users
        self.descriptors = dict(descriptors)
        self.vault = vault
        self.portal_file = portal_file
        self.relay_enabled = relay_enabled
        self.ui_dir = ui_dir
        self.insecure_loopback = insecure_loopback
        self.tls_active = False
        self.counters = TrafficCounter()
        self.sessions: dict[str, Session] = {}
        self.request_log: deque = deque(maxlen=4096)  # debugging and audits
        self._failures: dict[str, deque] = {}
        self._lock = threading.Lock()

    def log_request(self, method: str, path: str, headers, body: bytes) -> None:
        with self._lock:
            self.request_log.append({
                "method": method,
                "path": path,
                "headers": [(k, v) for k, v in headers.items()],
                "body": body.decode("utf-8", errors="replace"),
            })

    def request_log_text(self) -> str:
        """Flattened log for audits (cookie-leak scans in particular)."""
        with self._lock:
            lines = []
            for entry in self.request_log:
                headers = "; ".join(f"{k}: {v}" for k, v in entry["headers"])
                lines.append(f'{entry["method"]} {entry["path"]} | {headers} | {entry["body"]}')
        return "\n".join(lines)

    # --- authentication ----------------------------------------------------

    def rate_limited(self, user: str, now: float | None = None) -> bool:
        now = time.time() if now is None else now
        with self._lock:
            window = self._failures.get(user)
            if not window:
                return False
            while window and now - window[0] > LOGIN_FAILURE_WINDOW:
                window.popleft()
            return len(window) >= LOGIN_FAILURE_LIMIT

    def record_failure(self, user: str, now: float | None = None) -> None:
        now = time.time() if now is None else now
        with self._lock:
            self._failures.setdefault(user, deque()).append(now)

    def authenticate(self, user: str, password: str) -> Session | None:
        account = self.users.get(user)
        expected = account.password if account is not None else ""
        ok = hmac.compare_digest(expected.encode(), password.encode())
        if account is None or not ok:
            return None
        session = Session(
            token=secrets.token_hex(16),
            user=user,
            admin=account.admin,
            expires_at=time.time() + TOKEN_TTL_SECONDS,
        )
        with self._lock:
            self.sessions[session.token] = session
        return session

    def session_for(self, token: str | None) -> Session | None:
        if not token:
            return None
        with self._lock:
            session = self.sessions.get(token)
            if session is None:
                return None
            if time.time() >= session.expires_at:
                del self.sessions[token]
                return None
            return session

    # --- descriptors ---------------------------------------------------------

    def descriptor(self, portal_id: str) -> PortalDescriptor | None:
        with self._lock:
            return self.descriptors.get(portal_id)

    def swap_descriptor(self, descriptor: PortalDescriptor) -> None:
        with self._lock:
            self.descriptors[descriptor.portal_id] = descriptor
        if self.portal_file:
            tmp = self.portal_file + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(model.dump_descriptor(descriptor))
            os.replace(tmp, self.portal_file)

    def allowed_relay_origins(self) -> set:
        origins = set()
        with self._lock:
            descriptors = list(self.descriptors.values())
        for desc in descriptors:
            for defn in desc.portlets.values():
                try:
                    origins.add(origin_of(defn.source_url))
                except ValueError:
                    pass
                for step in defn.workflow:
                    if step.kind == "get" and step.url:
                        try:
                            origins.add(origin_of(step.url))
                        except ValueError:
                            pass
        return origins


class PortalHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, state: PortalState):
        super().__init__(addr, PortalRequestHandler)
        self.state = state


class PortalRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "clipportal"

    # quiet by default; tests read stderr
    def log_message(self, fmt, *args):
        pass

    @property
    def state(self) -> PortalState:
        return self.server.state

    # --- plumbing -----------------------------------------------------------

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length > 0 else b""

    def _send(self, status: int, body: bytes, endpoint_class: str | None,
              content_type: str = "application/json", extra_headers=()):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        for name, value in extra_headers:
            self.send_header(name, value)
        self.end_headers()
        if body:
            self.wfile.write(body)
        if endpoint_class is not None:
            self.state.counters.add(endpoint_class, len(getattr(self, "_body_in", b"")), len(body))

    def _send_json(self, status: int, payload: dict, endpoint_class: str | None, extra_headers=()):
        body = json.dumps(payload).encode("utf-8")
        self._send(status, body, endpoint_class, extra_headers=extra_headers)

    def _error(self, status: int, code: str, detail: str, endpoint_class: str | None):
        self._send_json(status, {"error": code, "detail": detail}, endpoint_class)

    def _bearer_token(self) -> str | None:
        header = self.headers.get("Authorization") or ""
        if header.startswith("Bearer "):
            return header[len("Bearer "):].strip()
        return None

    def _session(self):
        return self.state.session_for(self._bearer_token())

    def _peer_is_loopback(self) -> bool:
        try:
            return ipaddress.ip_address(self.client_address[0]).is_loopback
        except ValueError:
            return False

    def _transport_secure(self) -> bool:
        """Credentials may only flow over TLS, or plaintext to loopback peers
        when the server was explicitly started with insecure-loopback."""
        if self.state.tls_active:
            return True
        return self.state.insecure_loopback and self._peer_is_loopback()

    # --- routing --------------------------------------------------------------

    def do_GET(self):
        self._body_in = b""
        self._route("GET")

    def do_POST(self):
        self._body_in = self._read_body()
        self._route("POST")

    def do_PUT(self):
        self._body_in = self._read_body()
        self._route("PUT")

    def _route(self, method: str):
        try:
            self.state.log_request(method, self.path, self.headers, self._body_in)
            parts = urlsplit(self.path)
            segments = [unquote(s) for s in parts.path.split("/") if s]
            query = parse_qs(parts.query)
            self._dispatch(method, segments, query)
        except BrokenPipeError:
            pass
        except Exception as exc:  # total: a handler bug must not kill the thread
            try:
                self._error(500, "InternalError", str(exc), None)
            except Exception:
                pass

    def _dispatch(self, method: str, segments: list, query: dict):
        if method == "POST" and segments == ["api", "login"]:
            return self._handle_login()
        if method == "GET" and len(segments) == 4 and segments[:2] == ["api", "portal"] and segments[3] == "descriptor":
            return self._handle_descriptor(segments[2], query)
        if method == "GET" and len(segments) == 5 and segments[:2] == ["api", "portal"] and segments[3] == "credentials":
            return self._handle_credentials(segments[2], segments[4])
        if method == "PUT" and len(segments) == 6 and segments[:3] == ["api", "admin", "portal"] and segments[4] == "portlets":
            return self._handle_add_portlet(segments[3], segments[5])
        if method in ("GET", "POST") and segments == ["api", "relay"]:
            return self._handle_relay(method, query)
        if method == "GET" and segments == ["api", "stats"]:
            return self._handle_stats()
        if method == "GET" and (not segments or segments[0] == "ui"):
            return self._handle_asset(segments)
        self._error(404, "NotFound", "no such endpoint", None)

    # --- endpoints --------------------------------------------------------------

    def _handle_login(self):
        try:
            payload = json.loads(self._body_in.decode("utf-8"))
            user = str(payload["user"])
            password = str(payload["pass"])
        except (ValueError, KeyError, UnicodeDecodeError):
            return self._error(400, "BadRequest", "body must be JSON {user, pass}", "auth")
        if self.state.rate_limited(user):
            return self._error(429, "RateLimited", "too many failed logins", "auth")
        session = self.state.authenticate(user, password)
        if session is None:
            self.state.record_failure(user)
            return self._error(401, "AuthError", "invalid credentials", "auth")
        self._send_json(200, {"token": session.token, "expires_in": TOKEN_TTL_SECONDS}, "auth")

    def _handle_descriptor(self, portal_id: str, query: dict):
        if self._session() is None:
            return self._error(401, "AuthError", "valid token required", "descriptor")
        descriptor = self.state.descriptor(portal_id)
        if descriptor is None:
            return self._error(404, "NotFound", f"no portal {portal_id!r}", "descriptor")
        if_version = query.get("if_version", [None])[0]
        version_header = [("X-Portal-Version", str(descriptor.version))]
        if if_version is not None and if_version == str(descriptor.version):
            return self._send(304, b"", "descriptor", extra_headers=version_header)
        body = model.dump_descriptor(descriptor).encode("utf-8")
        self._send(200, body, "descriptor", extra_headers=version_header)

    def _handle_credentials(self, portal_id: str, portlet_id: str):
        if self._session() is None:
            return self._error(401, "AuthError", "valid token required", "credentials")
        if not self._transport_secure():
            return self._error(
                403, "InsecureTransport",
                "credentials only travel over TLS (or loopback in insecure-loopback mode)",
                "credentials",
            )
        descriptor = self.state.descriptor(portal_id)
        if descriptor is None:
            return self._error(404, "NotFound", f"no portal {portal_id!r}", "credentials")
        defn = descriptor.portlets.get(portlet_id)
        if defn is None or not defn.credential_ref:
            return self._error(404, "NotFound", "portlet has no credentials", "credentials")
        if self.state.vault is None:
            return self._error(404, "NotFound", "no vault configured", "credentials")
        try:
            entry = self.state.vault.get(defn.credential_ref)
        except NotFound:
            return self._error(404, "NotFound", "credential entry missing", "credentials")
        except VaultAuthError:
            return self._error(500, "VaultError", "vault cannot be opened", "credentials")
        self._send_json(200, entry.to_dict(), "credentials")

    def _handle_add_portlet(self, portal_id: str, portlet_id: str):
        session = self._session()
        if session is None:
            return self._error(401, "AuthError", "valid token required", None)
        if not session.admin:
            return self._error(403, "Forbidden", "admin account required", None)
        descriptor = self.state.descriptor(portal_id)
        if descriptor is None:
            return self._error(404, "NotFound", f"no portal {portal_id!r}", None)
        if portlet_id in descriptor.portlets:
            return self._error(409, "Conflict", f"portlet {portlet_id!r} already defined", None)
        try:
            payload = json.loads(self._body_in.decode("utf-8"))
            defn_raw = payload["definition"]
        except (ValueError, KeyError, UnicodeDecodeError):
            return self._error(400, "BadRequest", "body must be JSON {definition, credentials?}", None)

        creds_raw = payload.get("credentials")
        if creds_raw is not None and defn_raw.get("credential_ref") is None:
            defn_raw = dict(defn_raw)
            defn_raw["credential_ref"] = portlet_id

        issues: list = []
        defn = model._load_portlet(portlet_id, defn_raw, issues)
        if defn is not None:
            for msg in model.validate_workflow(defn):
                issues.append(model.Issue("schema", f"portlets:{portlet_id}", msg))
        if issues or defn is None:
            return self._send_json(
                422,
                {"error": "ValidationError",
                 "issues": [{"kind": i.kind, "where": i.where, "message": i.message} for i in issues]},
                None,
            )
        if creds_raw is not None:
            if self.state.vault is None:
                return self._error(500, "VaultError", "no vault configured", None)
            try:
                entry = CredentialEntry(
                    service_id=defn.credential_ref,
                    username=str(creds_raw["username"]),
                    password=str(creds_raw["password"]),
                    extra_fields=dict(creds_raw.get("extra_fields") or {}),
                )
            except (KeyError, TypeError):
                return self._error(400, "BadRequest", "credentials need username and password", None)
            self.state.vault.put(entry)
        elif defn.credential_ref:
            return self._error(422, "ValidationError", "credential_ref set but no credentials supplied", None)

        updated = descriptor.with_portlet(defn)
        self.state.swap_descriptor(updated)
        self._send_json(200, {"version": updated.version}, None)

    def _handle_relay(self, method: str, query: dict):
        if self._session() is None:
            return self._error(401, "AuthError", "valid token required", "relay")
        if not self.state.relay_enabled:
            return self._error(403, "RelayDisabled", "relay is disabled on this server", "relay")
        target = query.get("target", [None])[0]
        if not target:
            return self._error(400, "BadRequest", "target query parameter required", "relay")
        try:
            target_origin = origin_of(target)
        except ValueError:
            return self._error(400, "BadRequest", "target must be an absolute URL", "relay")
        if target_origin not in self.state.allowed_relay_origins():
            return self._error(403, "ForbiddenOrigin", f"{target_origin} is not an allowed origin", "relay")
        headers = {}
        for name in ("Content-Type", "Cookie"):
            value = self.headers.get(name)
            if value:
                headers[name] = value
        try:
            # redirects pass through untouched so the client keeps control
            upstream = fetch(
                method, target, headers=headers,
                body=self._body_in if method == "POST" else None,
                max_redirects=0,
            )
        except FetchError as exc:
            return self._error(502, "UpstreamUnreachable", str(exc), "relay")
        passthrough = [("X-Relay-Final-Url", upstream.url)]
        for name, value in upstream.headers:
            if name.lower() in ("content-type", "set-cookie", "location"):
                passthrough.append((name, value))
        self._send(upstream.status, upstream.body, "relay",
                   content_type=upstream.header("Content-Type") or "application/octet-stream",
                   extra_headers=[h for h in passthrough if h[0].lower() != "content-type"])

    def _handle_stats(self):
        if self._session() is None:
            return self._error(401, "AuthError", "valid token required", None)
        self._send_json(200, self.state.counters.snapshot(), None)

    def _handle_asset(self, segments: list):
        if not segments:
            return self._send(302, b"", "assets", extra_headers=[("Location", "/ui/")])
        rel = "/".join(segments[1:]) or "index.html"
        ui_dir = self.state.ui_dir
        if ui_dir is None:
            return self._error(404, "NotFound", "no UI assets configured", "assets")
        base = os.path.realpath(ui_dir)
        full = os.path.realpath(os.path.join(base, rel))
        if not full.startswith(base + os.sep) and full != base:
            return self._error(404, "NotFound", "no such asset", "assets")
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            return self._error(404, "NotFound", "no such asset", "assets")
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self._send(200, body, "assets", content_type=ctype)


# --- TLS ----------------------------------------------------------------------

def generate_self_signed_cert(cert_path: str, key_path: str, hosts=("localhost", "127.0.0.1")):
    """Dev certificate generation; returns the SHA-256 fingerprint hex."""
    import datetime
    import hashlib

    from cryptography import x509
    from cryptography.hazmat.primitives import hashes, serialization
    from cryptography.hazmat.primitives.asymmetric import rsa
    from cryptography.x509.oid import NameOID

    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, hosts[0])])
    san_entries = []
    for host in hosts:
        try:
            san_entries.append(x509.IPAddress(ipaddress.ip_address(host)))
        except ValueError:
            san_entries.append(x509.DNSName(host))
    now = datetime.datetime.now(datetime.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(days=1))
        .not_valid_after(now + datetime.timedelta(days=365))
        .add_extension(x509.SubjectAlternativeName(san_entries), critical=False)
        .sign(key, hashes.SHA256())
    )
    with open(key_path, "wb") as fh:
        fh.write(key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.TraditionalOpenSSL,
            serialization.NoEncryption(),
        ))
    cert_bytes = cert.public_bytes(serialization.Encoding.PEM)
    with open(cert_path, "wb") as fh:
        fh.write(cert_bytes)
    return hashlib.sha256(cert.public_bytes(serialization.Encoding.DER)).hexdigest()


class PortalServer:
    """Owns the listening socket and worker thread; used by CLI and tests."""

    def __init__(self, state: PortalState, host: str = "127.0.0.1", port: int = 0,
                 tls_cert: str | None = None, tls_key: str | None = None):
        import ssl

        if tls_cert is None and not state.insecure_loopback:
            raise ValueError("refusing to start without TLS; pass insecure_loopback for tests")
        self.state = state
        self.httpd = PortalHTTPServer((host, port), state)
        if tls_cert is not None:
            context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            context.load_cert_chain(tls_cert, tls_key)
            self.httpd.socket = context.wrap_socket(self.httpd.socket, server_side=True)
            state.tls_active = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def url(self) -> str:
        scheme = "https" if self.state.tls_active else "http"
        host = self.httpd.server_address[0]
        if host == "0.0.0.0":
            host = "127.0.0.1"
        return f"{scheme}://{host}:{self.port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
