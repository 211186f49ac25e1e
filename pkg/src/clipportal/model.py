"""Portal configuration: descriptors, portlet definitions, login workflows.

The descriptor travels as UTF-8 JSON (schema in docs/descriptor-schema.md)
and is secret-free by construction; credentials live in the vault and are
fetched separately over TLS.  XPath is carried as source text and compiled
on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .clip import ChangeSpec, ClipRule
from .urls import is_absolute
from .xpath import XPathExpr, XPathSyntaxError, compile_xpath

USER_PLACEHOLDER = "{user}"
PASS_PLACEHOLDER = "{pass}"

MODES = ("view", "edit", "help")
WINDOW_STATES = ("normal", "minimized", "maximized")
REFRESH_POLICIES = ("manual", "interval")
SANITIZE_POLICIES = ("strict", "trusted")


@dataclass
class CredentialEntry:
    service_id: str
    username: str
    password: str
    extra_fields: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "service_id": self.service_id,
            "username": self.username,
            "password": self.password,
            "extra_fields": dict(self.extra_fields),
        }

    @staticmethod
    def from_dict(data: dict) -> "CredentialEntry":
        return CredentialEntry(
            service_id=data["service_id"],
            username=data["username"],
            password=data["password"],
            extra_fields=dict(data.get("extra_fields") or {}),
        )


@dataclass(frozen=True)
class WorkflowStep:
    kind: str  # 'get' | 'submit_form' | 'follow_link' | 'clip'
    url: str | None = None
    form_path: XPathExpr | None = None
    field_values: tuple = ()  # ordered (name, value) pairs
    link_path: XPathExpr | None = None

    @property
    def fields(self) -> dict:
        return dict(self.field_values)


@dataclass(frozen=True)
class RefreshPolicy:
    interval_seconds: int = 300
    policy: str = "manual"


@dataclass(frozen=True)
class PortletDefinition:
    portlet_id: str
    title: str
    source_url: str
    clip_rules: tuple = ()
    workflow: tuple = ()
    credential_ref: str | None = None
    refresh: RefreshPolicy = RefreshPolicy()
    sanitize_policy: str = "strict"
    mode: str = "view"
    window_state: str = "normal"


@dataclass(frozen=True)
class PortalDescriptor:
    portal_id: str
    title: str
    layout: tuple  # rows of portlet_id tuples
    portlets: dict  # portlet_id -> PortletDefinition
    version: int = 1

    def with_portlet(self, definition: PortletDefinition) -> "PortalDescriptor":
        """New descriptor with the portlet added and the version bumped."""
        portlets = dict(self.portlets)
        portlets[definition.portlet_id] = definition
        layout = self.layout
        placed = any(definition.portlet_id in row for row in layout)
        if not placed:
            layout = layout + ((definition.portlet_id,),)
        return replace(
            self, portlets=portlets, layout=layout, version=self.version + 1
        )


@dataclass(frozen=True)
class Issue:
    kind: str  # 'schema' | 'reference' | 'rule'
    where: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.where}: {self.message}"


class DescriptorError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


_PORTLET_KEYS = {
    "portlet_id", "title", "source_url", "clip_rules", "workflow",
    "credential_ref", "refresh", "sanitize_policy", "mode", "window_state",
}
_DESCRIPTOR_KEYS = {"portal_id", "title", "layout", "portlets", "version"}


def load_descriptor(text: str | bytes) -> PortalDescriptor:
    """Parse and validate descriptor JSON; raises DescriptorError with the
    full issue list (kinds: schema, reference, rule)."""
    issues: list[Issue] = []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptorError([Issue("schema", "$", f"invalid JSON: {exc}")])
    if not isinstance(data, dict):
        raise DescriptorError([Issue("schema", "$", "descriptor must be an object")])

    for key in data:
        if key not in _DESCRIPTOR_KEYS:
            issues.append(Issue("schema", key, "unknown field"))
    portal_id = data.get("portal_id")
    title = data.get("title", portal_id or "")
    version = data.get("version", 1)
    if not isinstance(portal_id, str) or not portal_id:
        issues.append(Issue("schema", "portal_id", "required string"))
    if not isinstance(version, int) or version < 1:
        issues.append(Issue("schema", "version", "must be a positive integer"))
    layout_raw = data.get("layout", [])
    portlets_raw = data.get("portlets", {})
    if not isinstance(layout_raw, list) or not all(
        isinstance(row, list) and all(isinstance(p, str) for p in row)
        for row in layout_raw
    ):
        issues.append(Issue("schema", "layout", "must be a list of portlet-id rows"))
        layout_raw = []
    if not isinstance(portlets_raw, dict):
        issues.append(Issue("schema", "portlets", "must be an object"))
        portlets_raw = {}

    portlets: dict[str, PortletDefinition] = {}
    for pid, praw in portlets_raw.items():
        defn = _load_portlet(pid, praw, issues)
        if defn is not None:
            portlets[pid] = defn

    layout_ids = [pid for row in layout_raw for pid in row]
    for pid in layout_ids:
        if pid not in portlets_raw:
            issues.append(Issue("reference", f"layout:{pid}", "layout id does not resolve"))
    for pid in portlets_raw:
        if pid not in layout_ids:
            issues.append(Issue("reference", f"portlets:{pid}", "portlet not placed in layout"))
    seen: set[str] = set()
    for pid in layout_ids:
        if pid in seen:
            issues.append(Issue("reference", f"layout:{pid}", "portlet placed twice"))
        seen.add(pid)

    for pid, defn in portlets.items():
        for msg in validate_workflow(defn):
            issues.append(Issue("schema", f"portlets:{pid}", msg))

    if issues:
        raise DescriptorError(issues)
    return PortalDescriptor(
        portal_id=portal_id,
        title=title,
        layout=tuple(tuple(row) for row in layout_raw),
        portlets=portlets,
        version=version,
    )


def _compile_path(source, where: str, issues: list) -> XPathExpr | None:
    if not isinstance(source, str):
        issues.append(Issue("schema", where, "path must be a string"))
        return None
    try:
        return compile_xpath(source)
    except XPathSyntaxError as exc:
        issues.append(Issue("rule", where, str(exc)))
        return None


def _load_portlet(pid, praw, issues) -> PortletDefinition | None:
    where = f"portlets:{pid}"
    if not isinstance(praw, dict):
        issues.append(Issue("schema", where, "portlet must be an object"))
        return None
    for key in praw:
        if key not in _PORTLET_KEYS:
            issues.append(Issue("schema", f"{where}.{key}", "unknown field"))
    if "portlet_id" in praw and praw["portlet_id"] != pid:
        issues.append(Issue("schema", f"{where}.portlet_id", "does not match its key"))
    source_url = praw.get("source_url")
    if not isinstance(source_url, str) or not is_absolute(source_url):
        issues.append(Issue("schema", f"{where}.source_url", "required absolute URL"))
        source_url = source_url if isinstance(source_url, str) else ""

    rules = []
    rules_raw = praw.get("clip_rules", [])
    if not isinstance(rules_raw, list):
        issues.append(Issue("schema", f"{where}.clip_rules", "must be a list"))
        rules_raw = []
    for i, rraw in enumerate(rules_raw):
        rule = _load_rule(rraw, f"{where}.clip_rules[{i}]", issues)
        if rule is not None:
            rules.append(rule)
    if not any(r.kind == "select" for r in rules):
        issues.append(Issue("schema", f"{where}.clip_rules", "needs at least one select rule"))

    workflow_raw = praw.get("workflow")
    if workflow_raw is None:
        workflow_raw = [{"step": "get", "url": source_url}, {"step": "clip"}]
    steps = []
    if not isinstance(workflow_raw, list):
        issues.append(Issue("schema", f"{where}.workflow", "must be a list"))
        workflow_raw = []
    for i, sraw in enumerate(workflow_raw):
        step = _load_step(sraw, f"{where}.workflow[{i}]", issues)
        if step is not None:
            steps.append(step)

    refresh_raw = praw.get("refresh") or {}
    interval = refresh_raw.get("interval_seconds", 300)
    policy = refresh_raw.get("policy", "manual")
    if not isinstance(interval, int) or interval < 1:
        issues.append(Issue("schema", f"{where}.refresh.interval_seconds", "must be an integer >= 1"))
        interval = 1
    if policy not in REFRESH_POLICIES:
        issues.append(Issue("schema", f"{where}.refresh.policy", f"must be one of {REFRESH_POLICIES}"))
        policy = "manual"

    sanitize_policy = praw.get("sanitize_policy", "strict")
    if sanitize_policy not in SANITIZE_POLICIES:
        issues.append(Issue("schema", f"{where}.sanitize_policy", f"must be one of {SANITIZE_POLICIES}"))
        sanitize_policy = "strict"
    mode = praw.get("mode", "view")
    if mode not in MODES:
        issues.append(Issue("schema", f"{where}.mode", f"must be one of {MODES}"))
        mode = "view"
    window_state = praw.get("window_state", "normal")
    if window_state not in WINDOW_STATES:
        issues.append(Issue("schema", f"{where}.window_state", f"must be one of {WINDOW_STATES}"))
        window_state = "normal"
    credential_ref = praw.get("credential_ref")
    if credential_ref is not None and not isinstance(credential_ref, str):
        issues.append(Issue("schema", f"{where}.credential_ref", "must be a string or null"))
        credential_ref = None

    return PortletDefinition(
        portlet_id=pid,
        title=str(praw.get("title", pid)),
        source_url=source_url,
        clip_rules=tuple(rules),
        workflow=tuple(steps),
        credential_ref=credential_ref,
        refresh=RefreshPolicy(interval, policy),
        sanitize_policy=sanitize_policy,
        mode=mode,
        window_state=window_state,
    )


def _load_rule(rraw, where, issues) -> ClipRule | None:
    if not isinstance(rraw, dict):
        issues.append(Issue("schema", where, "rule must be an object"))
        return None
    kind = rraw.get("kind")
    if kind not in ("select", "cut", "change"):
        issues.append(Issue("schema", where, "kind must be select, cut or change"))
        return None
    path = _compile_path(rraw.get("path"), where, issues)
    if path is None:
        return None
    if kind != "change":
        return ClipRule(kind, path)
    op = rraw.get("op")
    if op == "set_attr":
        name, value = rraw.get("name"), rraw.get("value")
        if not isinstance(name, str) or not isinstance(value, str):
            issues.append(Issue("schema", where, "set_attr needs name and value"))
            return None
        return ClipRule(kind, path, ChangeSpec("set_attr", name=name, value=value))
    if op == "remove_attr":
        name = rraw.get("name")
        if not isinstance(name, str):
            issues.append(Issue("schema", where, "remove_attr needs name"))
            return None
        return ClipRule(kind, path, ChangeSpec("remove_attr", name=name))
    if op == "replace_text":
        find, rep = rraw.get("find"), rraw.get("replace")
        if not isinstance(find, str) or not isinstance(rep, str):
            issues.append(Issue("schema", where, "replace_text needs find and replace"))
            return None
        return ClipRule(kind, path, ChangeSpec("replace_text", find=find, replace=rep))
    issues.append(Issue("schema", where, "op must be set_attr, remove_attr or replace_text"))
    return None


def _load_step(sraw, where, issues) -> WorkflowStep | None:
    if not isinstance(sraw, dict):
        issues.append(Issue("schema", where, "step must be an object"))
        return None
    kind = sraw.get("step")
    if kind == "get":
        url = sraw.get("url")
        if not isinstance(url, str) or not is_absolute(url):
            issues.append(Issue("schema", where, "get needs an absolute url"))
            return None
        return WorkflowStep("get", url=url)
    if kind == "submit_form":
        form_path = _compile_path(sraw.get("form_path"), where, issues)
        fields = sraw.get("fields")
        if not isinstance(fields, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in fields.items()
        ):
            issues.append(Issue("schema", where, "submit_form needs a fields object of strings"))
            return None
        if form_path is None:
            return None
        return WorkflowStep("submit_form", form_path=form_path, field_values=tuple(fields.items()))
    if kind == "follow_link":
        link_path = _compile_path(sraw.get("link_path"), where, issues)
        if link_path is None:
            return None
        return WorkflowStep("follow_link", link_path=link_path)
    if kind == "clip":
        return WorkflowStep("clip")
    issues.append(Issue("schema", where, "step must be get, submit_form, follow_link or clip"))
    return None


def validate_workflow(defn: PortletDefinition) -> list[str]:
    """Workflow structure checks; returns human-readable error strings."""
    errors = []
    steps = defn.workflow
    if not steps:
        return ["workflow is empty"]
    clip_positions = [i for i, s in enumerate(steps) if s.kind == "clip"]
    if len(clip_positions) != 1:
        errors.append("workflow needs exactly one clip step")
    elif clip_positions[0] != len(steps) - 1:
        errors.append("clip step must be the terminal step")
    if steps[0].kind not in ("get",):
        errors.append("workflow must start with a get step")
    uses_placeholders = any(
        v in (USER_PLACEHOLDER, PASS_PLACEHOLDER)
        for s in steps if s.kind == "submit_form"
        for v in s.fields.values()
    )
    if uses_placeholders and not defn.credential_ref:
        errors.append("credential_ref required: workflow uses credential placeholders")
    if defn.credential_ref and not uses_placeholders:
        errors.append("credential_ref set but no workflow step uses credential placeholders")
    return errors


# --- serialization back to JSON ----------------------------------------------

def _rule_to_dict(rule: ClipRule) -> dict:
    from .xpath import render
    out = {"kind": rule.kind, "path": render(rule.path)}
    if rule.change is not None:
        out["op"] = rule.change.op
        if rule.change.op == "set_attr":
            out["name"], out["value"] = rule.change.name, rule.change.value
        elif rule.change.op == "remove_attr":
            out["name"] = rule.change.name
        else:
            out["find"], out["replace"] = rule.change.find, rule.change.replace
    return out


def _step_to_dict(step: WorkflowStep) -> dict:
    from .xpath import render
    if step.kind == "get":
        return {"step": "get", "url": step.url}
    if step.kind == "submit_form":
        return {"step": "submit_form", "form_path": render(step.form_path), "fields": step.fields}
    if step.kind == "follow_link":
        return {"step": "follow_link", "link_path": render(step.link_path)}
    return {"step": "clip"}


def portlet_to_dict(defn: PortletDefinition) -> dict:
    return {
        "title": defn.title,
        "source_url": defn.source_url,
        "clip_rules": [_rule_to_dict(r) for r in defn.clip_rules],
        "workflow": [_step_to_dict(s) for s in defn.workflow],
        "credential_ref": defn.credential_ref,
        "refresh": {
            "interval_seconds": defn.refresh.interval_seconds,
            "policy": defn.refresh.policy,
        },
        "sanitize_policy": defn.sanitize_policy,
        "mode": defn.mode,
        "window_state": defn.window_state,
    }


def descriptor_to_dict(desc: PortalDescriptor) -> dict:
    return {
        "portal_id": desc.portal_id,
        "title": desc.title,
        "version": desc.version,
        "layout": [list(row) for row in desc.layout],
        "portlets": {pid: portlet_to_dict(d) for pid, d in desc.portlets.items()},
    }


def dump_descriptor(desc: PortalDescriptor) -> str:
    return json.dumps(descriptor_to_dict(desc), indent=2, sort_keys=False) + "\n"
