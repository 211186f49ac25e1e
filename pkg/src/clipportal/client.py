"""Headless portal client: initializes once from the portal server, then
talks only to the producing sites.

Login workflows run with a local cookie jar; fragments carry content
digests so a refresh can report exactly which portlets changed, and
render_portal rewrites only the fragment files whose content moved.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from urllib.parse import urlencode

from .clip import EmptyClip, PortletFragment, apply_clip
from .cookies import CookieJar, cookie_header_for  # re-exported jar API
from .fetchlib import FetchError, Response, TrafficLog, fetch, ssl_context_for_ca
from .html_tree import Document, Node, parse_html
from .model import (
    PASS_PLACEHOLDER,
    USER_PLACEHOLDER,
    CredentialEntry,
    PortalDescriptor,
    PortletDefinition,
    load_descriptor,
)
from .urls import origin_of, resolve
from .xpath import Attr, evaluate

__all__ = [
    "AuthError", "DescriptorError", "StepError", "ChangeReport", "ClientSession",
    "init_session", "run_workflow", "refresh", "render_portal", "watch",
    "cookie_header_for",
]


class AuthError(Exception):
    pass


class DescriptorError(Exception):
    pass


class StepError(Exception):
    """A workflow step failed; cause is one of FetchFailed, FormNotFound,
    LinkNotFound, LoginRejected, EmptyClip."""

    def __init__(self, step_index: int, cause: str, detail: str = ""):
        self.step_index = step_index
        self.cause = cause
        self.detail = detail
        super().__init__(f"step {step_index}: {cause}" + (f" ({detail})" if detail else ""))


@dataclass
class ChangeReport:
    portlet_id: str
    changed: bool
    old_digest: str | None
    new_digest: str | None
    fetch_bytes: int
    error: str | None = None
    cycle: int | None = None

    def to_json(self) -> str:
        out = {
            "portlet_id": self.portlet_id,
            "changed": self.changed,
            "old_digest": self.old_digest,
            "new_digest": self.new_digest,
            "fetch_bytes": self.fetch_bytes,
            "error": self.error,
        }
        if self.cycle is not None:
            out["cycle"] = self.cycle
        return json.dumps(out, sort_keys=False)


@dataclass
class ClientSession:
    server_url: str
    portal_id: str
    token: str
    descriptor: PortalDescriptor
    credentials: dict = field(default_factory=dict)  # portlet_id -> CredentialEntry
    jar: CookieJar = field(default_factory=CookieJar)
    digests: dict = field(default_factory=dict)  # portlet_id -> last digest
    fragments: dict = field(default_factory=dict)  # portlet_id -> PortletFragment
    content_urls: dict = field(default_factory=dict)  # portlet_id -> URL the clip consumed
    traffic: TrafficLog = field(default_factory=TrafficLog)
    ssl_context: object = None

    @property
    def portal_origin(self) -> str:
        return origin_of(self.server_url)

    def portal_requests(self) -> int:
        return self.traffic.for_origin(self.portal_origin).request_count

    def portal_bytes(self) -> int:
        counter = self.traffic.for_origin(self.portal_origin)
        return counter.bytes_in + counter.bytes_out


def init_session(server_url: str, portal_id: str, user: str, password: str,
                 ca_file: str | None = None) -> ClientSession:
    """Authenticate, fetch the descriptor and every needed credential entry.

    Exactly 2 + (number of credentialed portlets) portal-server requests.
    """
    ssl_context = ssl_context_for_ca(ca_file)
    traffic = TrafficLog()
    login_url = server_url.rstrip("/") + "/api/login"
    try:
        resp = fetch("POST", login_url,
                     body=json.dumps({"user": user, "pass": password}).encode(),
                     headers={"Content-Type": "application/json"},
                     traffic=traffic, ssl_context=ssl_context)
    except FetchError as exc:
        raise AuthError(f"cannot reach portal server: {exc}")
    if resp.status != 200:
        raise AuthError(f"login failed with status {resp.status}")
    token = json.loads(resp.body)["token"]
    auth_headers = {"Authorization": f"Bearer {token}"}

    desc_url = f"{server_url.rstrip('/')}/api/portal/{portal_id}/descriptor"
    resp = fetch("GET", desc_url, headers=auth_headers, traffic=traffic, ssl_context=ssl_context)
    if resp.status == 404:
        raise DescriptorError(f"NotFound: no portal {portal_id!r}")
    if resp.status != 200:
        raise DescriptorError(f"descriptor fetch failed with status {resp.status}")
    try:
        descriptor = load_descriptor(resp.body)
    except ValueError as exc:
        raise DescriptorError(f"invalid descriptor: {exc}")

    session = ClientSession(
        server_url=server_url.rstrip("/"),
        portal_id=portal_id,
        token=token,
        descriptor=descriptor,
        traffic=traffic,
        ssl_context=ssl_context,
    )
    for pid, defn in descriptor.portlets.items():
        if not defn.credential_ref:
            continue
        cred_url = f"{session.server_url}/api/portal/{portal_id}/credentials/{pid}"
        resp = fetch("GET", cred_url, headers=auth_headers, traffic=traffic, ssl_context=ssl_context)
        if resp.status != 200:
            raise DescriptorError(f"credentials for {pid!r} failed with status {resp.status}")
        session.credentials[pid] = CredentialEntry.from_dict(json.loads(resp.body))
    return session


# --- workflow execution -------------------------------------------------------

def _resolve_placeholders(value: str, creds: CredentialEntry | None) -> str:
    if creds is None:
        return value
    if value == USER_PLACEHOLDER:
        return creds.username
    if value == PASS_PLACEHOLDER:
        return creds.password
    return value


def _collect_form_defaults(form: Node) -> list:
    """Form control defaults in document order, the way a browser submits."""
    fields = []
    for node in form.iter():
        if node.kind != "element":
            continue
        name = node.attributes.get("name")
        if not name:
            continue
        if node.name == "input":
            itype = (node.attributes.get("type") or "text").lower()
            if itype in ("submit", "button", "image", "file", "reset"):
                continue
            if itype in ("checkbox", "radio") and "checked" not in node.attributes:
                continue
            fields.append((name, node.attributes.get("value", "")))
        elif node.name == "textarea":
            text = "".join(c.text for c in node.children if c.kind == "text")
            fields.append((name, text))
        elif node.name == "select":
            selected = None
            first = None
            for opt in node.iter():
                if opt.kind == "element" and opt.name == "option":
                    value = opt.attributes.get("value")
                    if value is None:
                        value = "".join(c.text for c in opt.children if c.kind == "text")
                    if first is None:
                        first = value
                    if "selected" in opt.attributes:
                        selected = value
            if selected is not None or first is not None:
                fields.append((name, selected if selected is not None else first))
    return fields


def _fetch_step(session: ClientSession, step_index: int, method: str, url: str,
                body: bytes | None = None, headers: dict | None = None) -> Response:
    try:
        resp = fetch(method, url, body=body, headers=headers,
                     jar=session.jar, traffic=session.traffic)
    except FetchError as exc:
        raise StepError(step_index, "FetchFailed", str(exc))
    if resp.status >= 400:
        raise StepError(step_index, "FetchFailed", f"status {resp.status} from {url}")
    return resp


def run_workflow(session: ClientSession, portlet_id: str) -> PortletFragment:
    """Execute the portlet's workflow steps in order and clip the result."""
    defn = session.descriptor.portlets.get(portlet_id)
    if defn is None:
        raise KeyError(portlet_id)
    creds = session.credentials.get(portlet_id)

    doc: Document | None = None
    for index, step in enumerate(defn.workflow):
        if step.kind == "get":
            resp = _fetch_step(session, index, "GET", step.url)
            doc = parse_html(resp.body, resp.url)
        elif step.kind == "submit_form":
            if doc is None:
                raise StepError(index, "FormNotFound", "no page fetched yet")
            doc = _submit_form(session, index, step, doc, creds)
        elif step.kind == "follow_link":
            if doc is None:
                raise StepError(index, "LinkNotFound", "no page fetched yet")
            doc = _follow_link(session, index, step, doc)
        elif step.kind == "clip":
            if doc is None:
                raise StepError(index, "EmptyClip", "no page fetched yet")
            try:
                fragment = apply_clip(doc, defn.clip_rules, defn.sanitize_policy)
            except EmptyClip as exc:
                raise StepError(index, "EmptyClip", str(exc))
            session.fragments[portlet_id] = fragment
            session.digests[portlet_id] = fragment.digest
            session.content_urls[portlet_id] = doc.base_url
            return fragment
    raise StepError(len(defn.workflow), "EmptyClip", "workflow had no clip step")


def _submit_form(session: ClientSession, index: int, step, doc: Document,
                 creds: CredentialEntry | None) -> Document:
    matches = [m for m in evaluate(step.form_path, doc.root)
               if isinstance(m, Node) and m.kind == "element"]
    if not matches:
        raise StepError(index, "FormNotFound", "form_path matched nothing")
    form = matches[0]

    fields = _collect_form_defaults(form)
    merged = dict(fields)
    if creds is not None:
        for name, value in creds.extra_fields.items():
            merged[name] = value
    for name, value in step.fields.items():
        merged[name] = _resolve_placeholders(value, creds)

    action = form.attributes.get("action") or doc.base_url
    target_url = resolve(doc.base_url, action)
    method = (form.attributes.get("method") or "get").lower()
    encoded = urlencode(list(merged.items()))
    if method == "post":
        resp = _fetch_step(session, index, "POST", target_url, body=encoded.encode(),
                           headers={"Content-Type": "application/x-www-form-urlencoded"})
    else:
        separator = "&" if "?" in target_url else "?"
        resp = _fetch_step(session, index, "GET", target_url + separator + encoded)
    new_doc = parse_html(resp.body, resp.url)

    # the login form coming back means the submission was rejected
    if any(isinstance(m, Node) and m.kind == "element"
           for m in evaluate(step.form_path, new_doc.root)):
        raise StepError(index, "LoginRejected", "form still present after submit")
    return new_doc


def _follow_link(session: ClientSession, index: int, step, doc: Document) -> Document:
    href = None
    for match in evaluate(step.link_path, doc.root):
        if isinstance(match, Attr):
            href = match.value
            break
        if isinstance(match, Node) and match.kind == "element":
            href = match.attributes.get("href")
            if href:
                break
    if not href:
        raise StepError(index, "LinkNotFound", "link_path matched no href")
    resp = _fetch_step(session, index, "GET", resolve(doc.base_url, href))
    return parse_html(resp.body, resp.url)


# --- refresh -------------------------------------------------------------------

def refresh(session: ClientSession, portlet_id: str) -> ChangeReport:
    """Re-fetch and re-clip one portlet; zero portal-server traffic.

    Reuses the session cookie and skips login steps; if the source demands
    a login again, the full workflow re-runs once before giving up.
    """
    defn = session.descriptor.portlets.get(portlet_id)
    if defn is None:
        raise KeyError(portlet_id)
    old_digest = session.digests.get(portlet_id)
    bytes_before = _source_bytes(session)
    try:
        fragment = _refresh_fetch(session, portlet_id, defn)
    except StepError as exc:
        return ChangeReport(
            portlet_id=portlet_id, changed=False,
            old_digest=old_digest, new_digest=old_digest,
            fetch_bytes=_source_bytes(session) - bytes_before,
            error=exc.cause,
        )
    return ChangeReport(
        portlet_id=portlet_id,
        changed=fragment.digest != old_digest,
        old_digest=old_digest,
        new_digest=fragment.digest,
        fetch_bytes=_source_bytes(session) - bytes_before,
    )


def _source_bytes(session: ClientSession) -> int:
    total = 0
    portal = session.portal_origin
    for origin, counter in session.traffic.snapshot().items():
        if origin != portal:
            total += counter.bytes_in
    return total


def _login_form_paths(defn: PortletDefinition):
    return [s.form_path for s in defn.workflow if s.kind == "submit_form"]


def _refresh_fetch(session: ClientSession, portlet_id: str, defn) -> PortletFragment:
    content_url = session.content_urls.get(portlet_id)
    if content_url is None:
        return run_workflow(session, portlet_id)

    clip_index = len(defn.workflow) - 1
    resp = _fetch_step(session, clip_index, "GET", content_url)
    doc = parse_html(resp.body, resp.url)

    needs_login = any(
        any(isinstance(m, Node) and m.kind == "element" for m in evaluate(path, doc.root))
        for path in _login_form_paths(defn)
    )
    if not needs_login:
        try:
            fragment = apply_clip(doc, defn.clip_rules, defn.sanitize_policy)
            session.fragments[portlet_id] = fragment
            session.digests[portlet_id] = fragment.digest
            session.content_urls[portlet_id] = doc.base_url
            return fragment
        except EmptyClip:
            if not _login_form_paths(defn):
                raise StepError(clip_index, "EmptyClip", "no select rule matched")
            # fall through: the page may be a session-expired variant
    # one automatic re-login, then surface whatever happens
    return run_workflow(session, portlet_id)


def watch(session: ClientSession, cycles: int, interval: float,
          on_report=None) -> list[ChangeReport]:
    """Run refresh cycles over interval-policy portlets; manual ones skip.

    interval must be at least the largest declared portlet interval so no
    source is polled more often than its refresh policy allows.
    """
    due = [
        pid
        for row in session.descriptor.layout
        for pid in row
        if session.descriptor.portlets[pid].refresh.policy == "interval"
    ]
    if due:
        floor = max(session.descriptor.portlets[pid].refresh.interval_seconds for pid in due)
        if interval < floor:
            raise ValueError(f"interval {interval} below the portlet minimum {floor}")
    reports: list[ChangeReport] = []
    for cycle in range(1, cycles + 1):
        for pid in due:
            report = refresh(session, pid)
            report.cycle = cycle
            reports.append(report)
            if on_report is not None:
                on_report(report)
        if cycle < cycles:
            time.sleep(interval)
    return reports


# --- rendering -------------------------------------------------------------------

_PORTAL_CSS = """body{font-family:sans-serif;background:#eef1f4;margin:0;padding:12px}
.portal-row{display:flex;gap:12px;margin-bottom:12px}
.portlet{background:#fff;border:1px solid #ccd;flex:1;min-width:0}
.portlet.maximized{flex:3}
.portlet-title{margin:0;padding:6px 10px;background:#356;color:#fff;font-size:14px}
.portlet-body{padding:10px;overflow:auto}
.portlet-error{padding:10px;color:#a00}
"""


def render_portal(session: ClientSession, output_dir) -> dict:
    """Write portal.html plus one file per fragment; returns a summary dict.

    Fragment files are only rewritten when their content changed, so a
    single-source mutation touches a single fragment file.
    """
    import os

    os.makedirs(output_dir, exist_ok=True)
    descriptor = session.descriptor
    succeeded = 0
    sections_by_row = []
    written = []
    for row in descriptor.layout:
        sections = []
        for pid in row:
            defn = descriptor.portlets[pid]
            fragment = session.fragments.get(pid)
            classes = "portlet" + (f" {defn.window_state}" if defn.window_state != "normal" else "")
            header = f'<h2 class="portlet-title">{_escape(defn.title)}</h2>'
            if defn.window_state == "minimized":
                body_html = ""
            elif fragment is None:
                body_html = '<div class="portlet-error">portlet unavailable</div>'
            else:
                body_html = f'<div class="portlet-body">{fragment.html}</div>'
            if fragment is not None:
                succeeded += 1
                fragment_path = os.path.join(output_dir, f"fragment_{pid}.html")
                if _write_if_changed(fragment_path, fragment.html):
                    written.append(fragment_path)
            digest = session.digests.get(pid, "")
            sections.append(
                f'<section class="{classes}" id="portlet-{_escape(pid)}" data-digest="{digest}">'
                f"{header}{body_html}</section>"
            )
        sections_by_row.append('<div class="portal-row">' + "".join(sections) + "</div>")

    page = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{_escape(descriptor.title)}</title>"
        f"<style>{_PORTAL_CSS}</style></head>\n<body>\n"
        f"<h1>{_escape(descriptor.title)}</h1>\n"
        + "\n".join(sections_by_row)
        + "\n</body></html>\n"
    )
    portal_path = os.path.join(output_dir, "portal.html")
    if _write_if_changed(portal_path, page):
        written.append(portal_path)
    return {
        "portal_file": portal_path,
        "written": written,
        "portlets_rendered": succeeded,
        "portlets_total": sum(len(row) for row in descriptor.layout),
    }


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _write_if_changed(path: str, content: str) -> bool:
    import os

    data = content.encode("utf-8")
    if os.path.exists(path):
        with open(path, "rb") as fh:
            if fh.read() == data:
                return False
    with open(path, "wb") as fh:
        fh.write(data)
    return True
