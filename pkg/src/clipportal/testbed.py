"""Simulated legacy sites for end-to-end runs without external networks.

Two plain-HTTP origins:
  news   - public page with a timestamped headlines div and a page-2 link;
           POST /__mutate bumps the edition, POST /__config resizes filler.
  grades - form login (fields u/p, session cookie SID, redirect after
           login), a grades table, and an applet-style page whose
           <object> data URL only answers with a valid SID.

With cors=True every response carries permissive cross-origin headers so a
browser UI can fetch the sites directly, mirroring the portal's direct
mode; without it the relay covers restrictive browsers.
"""

from __future__ import annotations

import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

DEFAULT_LOGIN_USER = "student"
DEFAULT_LOGIN_PASS = "letmein42"


class _SiteState:
    def __init__(self, pad: int = 0):
        self.lock = threading.Lock()
        self.news_edition = 1
        self.grades_rev = 1
        self.pad = pad
        self.sessions: set[str] = set()
        self.login_user = DEFAULT_LOGIN_USER
        self.login_pass = DEFAULT_LOGIN_PASS
        self.request_log: list[dict] = []

    def log(self, site: str, method: str, path: str, headers) -> None:
        with self.lock:
            self.request_log.append({
                "site": site,
                "method": method,
                "path": path,
                "cookie": headers.get("Cookie") or "",
            })


class _BaseHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    site_name = "testbed"

    def log_message(self, fmt, *args):
        pass

    @property
    def state(self) -> _SiteState:
        return self.server.state

    @property
    def cors(self) -> bool:
        return self.server.cors

    def _cors_headers(self):
        if not self.cors:
            return []
        origin = self.headers.get("Origin") or "*"
        return [
            ("Access-Control-Allow-Origin", origin),
            ("Access-Control-Allow-Credentials", "true"),
            ("Access-Control-Allow-Methods", "GET, POST, OPTIONS"),
            ("Access-Control-Allow-Headers", "Content-Type"),
            ("Vary", "Origin"),
        ]

    def reply(self, status: int, body: bytes = b"", content_type: str = "text/html; charset=utf-8",
              extra=()):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for name, value in self._cors_headers():
            self.send_header(name, value)
        for name, value in extra:
            self.send_header(name, value)
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_OPTIONS(self):
        self.reply(204)

    def read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def form_fields(self) -> dict:
        raw = self.read_body().decode("utf-8", errors="replace")
        return {k: v[0] for k, v in parse_qs(raw, keep_blank_values=True).items()}


class NewsHandler(_BaseHandler):
    site_name = "news"

    def _news_page(self) -> bytes:
        st = self.state
        with st.lock:
            edition = st.news_edition
            pad = st.pad
        filler = ""
        if pad > 0:
            filler = '<div class="filler" style="display:none">' + ("x" * pad) + "</div>"
        page = f"""<html>
<head><title>Town News</title></head>
<body>
<div id="chrome"><a href="/about">About</a> | <a href="/contact">Contact</a></div>
<div id="headlines">
  <h2>Headlines</h2>
  <ul>
    <li><a href="page2.html">Council approves the new bridge</a></li>
    <li>Weather stays fine all week</li>
  </ul>
  <p class="stamp">Edition {edition}</p>
</div>
{filler}
<div id="footer">(c) Town Gazette</div>
</body>
</html>"""
        return page.encode("utf-8")

    def _page2(self) -> bytes:
        return b"""<html>
<head><title>Town News - page 2</title></head>
<body>
<div id="chrome"><a href="/news">Back</a></div>
<div id="headlines">
  <h2>Bridge special</h2>
  <p>The council session ran long into the night.</p>
  <p><a href="/news">front page</a></p>
</div>
</body>
</html>"""

    def do_GET(self):
        self.state.log("news", "GET", self.path, self.headers)
        path = urlsplit(self.path).path
        if path in ("/", "/news"):
            return self.reply(200, self._news_page())
        if path in ("/page2.html", "/news/page2.html"):
            return self.reply(200, self._page2())
        if path == "/about":
            # a page with no headlines div, so clip rules miss it
            return self.reply(200, b"<html><body><div id=\"chrome\">about</div>"
                                   b"<p>The Town Gazette, since 1921.</p></body></html>")
        return self.reply(404, b"<html><body>not found</body></html>")

    def do_POST(self):
        self.state.log("news", "POST", self.path, self.headers)
        path = urlsplit(self.path).path
        if path == "/__mutate":
            self.read_body()
            with self.state.lock:
                self.state.news_edition += 1
            return self.reply(204)
        if path == "/__config":
            try:
                payload = json.loads(self.read_body() or b"{}")
                with self.state.lock:
                    self.state.pad = int(payload.get("pad", self.state.pad))
            except (ValueError, TypeError):
                return self.reply(400)
            return self.reply(204)
        return self.reply(404)


class GradesHandler(_BaseHandler):
    site_name = "grades"

    def _sid(self) -> str | None:
        header = self.headers.get("Cookie") or ""
        for piece in header.split(";"):
            name, _, value = piece.strip().partition("=")
            if name == "SID":
                return value
        return None

    def _authed(self) -> bool:
        sid = self._sid()
        with self.state.lock:
            return sid is not None and sid in self.state.sessions

    def _login_page(self, failed: bool = False) -> bytes:
        note = '<p class="error">Unknown user or wrong password.</p>' if failed else ""
        page = f"""<html>
<head><title>Registrar - sign in</title></head>
<body>
<div id="chrome">Registrar of the College</div>
{note}
<form id="loginform" action="/login" method="post">
  <label>User <input name="u" type="text"></label>
  <label>Password <input name="p" type="password"></label>
  <input type="hidden" name="term" value="fall">
  <input type="submit" value="Sign in">
</form>
</body>
</html>"""
        return page.encode("utf-8")

    def _grades_page(self) -> bytes:
        with self.state.lock:
            rev = self.state.grades_rev
        grade = "A" if rev == 1 else f"A+ (rev {rev})"
        page = f"""<html>
<head><title>Transcript</title></head>
<body>
<div id="chrome"><a href="/logout">Sign out</a></div>
<script>var tracking = "should never survive a clip";</script>
<div id="grades">
  <h2>Transcript</h2>
  <table>
    <tr><th>Course</th><th>Grade</th></tr>
    <tr><td>Algebra</td><td>{grade}</td></tr>
    <tr><td>History</td><td>B+</td></tr>
  </table>
  <p><a href="transcript.pdf">Download</a></p>
</div>
</body>
</html>"""
        return page.encode("utf-8")

    def _applet_page(self) -> bytes:
        page = """<html>
<head><title>Grade Explorer</title></head>
<body>
<div id="applet-area">
  <h3>Grade Explorer</h3>
  <object data="/applet/data" type="application/x-grade-explorer" width="320" height="200">
    Interactive explorer needs a signed-in session.
  </object>
</div>
</body>
</html>"""
        return page.encode("utf-8")

    def do_GET(self):
        self.state.log("grades", "GET", self.path, self.headers)
        path = urlsplit(self.path).path
        if path == "/login":
            failed = "bad=1" in (urlsplit(self.path).query or "")
            return self.reply(200, self._login_page(failed))
        if path == "/grades":
            if not self._authed():
                return self.reply(302, b"", extra=[("Location", "/login")])
            return self.reply(200, self._grades_page())
        if path == "/applet":
            if not self._authed():
                return self.reply(302, b"", extra=[("Location", "/login")])
            return self.reply(200, self._applet_page())
        if path == "/applet/data":
            if not self._authed():
                return self.reply(403, b"forbidden", content_type="text/plain")
            with self.state.lock:
                rev = self.state.grades_rev
            return self.reply(200, f"GRADE-EXPLORER-DATA rev={rev}".encode(),
                              content_type="application/octet-stream")
        if path == "/":
            return self.reply(302, b"", extra=[("Location", "/login")])
        return self.reply(404, b"<html><body>not found</body></html>")

    def do_POST(self):
        self.state.log("grades", "POST", self.path, self.headers)
        path = urlsplit(self.path).path
        if path == "/login":
            fields = self.form_fields()
            with self.state.lock:
                ok = (
                    fields.get("u") == self.state.login_user
                    and fields.get("p") == self.state.login_pass
                )
            if not ok:
                return self.reply(200, self._login_page(failed=True))
            sid = secrets.token_hex(8)
            with self.state.lock:
                self.state.sessions.add(sid)
            return self.reply(302, b"", extra=[
                ("Location", "/grades"),
                ("Set-Cookie", f"SID={sid}; Path=/"),
            ])
        if path == "/__mutate":
            self.read_body()
            with self.state.lock:
                self.state.grades_rev += 1
            return self.reply(204)
        if path == "/__expire_sessions":
            self.read_body()
            with self.state.lock:
                self.state.sessions.clear()
            return self.reply(204)
        return self.reply(404)


class _SiteServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, handler, state: _SiteState, cors: bool):
        super().__init__(addr, handler)
        self.state = state
        self.cors = cors


class Testbed:
    """Both sites plus direct handles on their mutable state for tests."""

    __test__ = False  # not a pytest class despite the name

    def __init__(self, host: str = "127.0.0.1", news_port: int = 0,
                 grades_port: int = 0, cors: bool = False, pad: int = 0):
        self.state = _SiteState(pad=pad)
        self._news = _SiteServer((host, news_port), NewsHandler, self.state, cors)
        self._grades = _SiteServer((host, grades_port), GradesHandler, self.state, cors)
        self._threads: list[threading.Thread] = []
        self._stopped = False
        self.host = host

    @property
    def news_url(self) -> str:
        return f"http://{self.host}:{self._news.server_address[1]}/news"

    @property
    def news_origin(self) -> str:
        return f"http://{self.host}:{self._news.server_address[1]}"

    @property
    def grades_origin(self) -> str:
        return f"http://{self.host}:{self._grades.server_address[1]}"

    def start(self) -> "Testbed":
        for server in (self._news, self._grades):
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopped = True
        for server in (self._news, self._grades):
            server.shutdown()
            server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)

    # direct state mutation helpers used by tests and the watch scenarios
    def mutate_news(self) -> None:
        with self.state.lock:
            self.state.news_edition += 1

    def mutate_grades(self) -> None:
        with self.state.lock:
            self.state.grades_rev += 1

    def set_news_pad(self, pad: int) -> None:
        with self.state.lock:
            self.state.pad = pad

    def expire_grades_sessions(self) -> None:
        with self.state.lock:
            self.state.sessions.clear()

    def request_log(self) -> list:
        with self.state.lock:
            return list(self.state.request_log)
