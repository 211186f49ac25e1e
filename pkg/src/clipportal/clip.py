"""Clip rules: select / cut / change a page into a portlet fragment.

The pipeline is fixed: select (union of matches in document order), cut,
change, link rebasing, sanitization, digest.  The digest is the change
detector that lets a portal reload only portlets whose content moved;
its normalization is documented in docs/digest-normalization.md and is
mirrored by the browser UI implementation.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .html_tree import Attr, Document, Node, deep_copy, parse_html, serialize
from .urls import is_absolute, origin_of, resolve
from .xpath import XPathExpr, compile_xpath, evaluate

LINK_ATTRS = ("href", "src", "action", "data")

STRICT_REMOVED_ELEMENTS = frozenset({"script", "object", "embed", "applet"})
TRUSTED_REMOVED_ELEMENTS = frozenset({"script"})

_WS_RUN = re.compile(r"\s+")


class EmptyClip(Exception):
    """No select rule matched; usually means the source page changed shape."""


@dataclass(frozen=True)
class ChangeSpec:
    op: str  # 'set_attr' | 'remove_attr' | 'replace_text'
    name: str | None = None
    value: str | None = None
    find: str | None = None
    replace: str | None = None


@dataclass(frozen=True)
class ClipRule:
    kind: str  # 'select' | 'cut' | 'change'
    path: XPathExpr
    change: ChangeSpec | None = None

    @staticmethod
    def select(path: str) -> "ClipRule":
        return ClipRule("select", compile_xpath(path))

    @staticmethod
    def cut(path: str) -> "ClipRule":
        return ClipRule("cut", compile_xpath(path))

    @staticmethod
    def set_attr(path: str, name: str, value: str) -> "ClipRule":
        return ClipRule("change", compile_xpath(path), ChangeSpec("set_attr", name=name, value=value))

    @staticmethod
    def remove_attr(path: str, name: str) -> "ClipRule":
        return ClipRule("change", compile_xpath(path), ChangeSpec("remove_attr", name=name))

    @staticmethod
    def replace_text(path: str, find: str, replace: str) -> "ClipRule":
        return ClipRule("change", compile_xpath(path), ChangeSpec("replace_text", find=find, replace=replace))


@dataclass
class PortletFragment:
    html: str
    source_origin: str
    digest: str
    clipped_at: str
    node_count: int
    sanitize_removals: int = 0
    rebase_failures: int = 0


def validate_rules(rules) -> None:
    if not any(r.kind == "select" for r in rules):
        raise ValueError("clip rule list needs at least one select rule")
    for rule in rules:
        if rule.kind not in ("select", "cut", "change"):
            raise ValueError(f"unknown clip rule kind {rule.kind!r}")
        if rule.kind == "change" and rule.change is None:
            raise ValueError("change rule without a change spec")


def apply_clip(doc: Document, rules, policy: str = "strict") -> PortletFragment:
    """Clip a document into a fragment; raises EmptyClip when nothing matches."""
    validate_rules(rules)
    if policy not in ("strict", "trusted"):
        raise ValueError(f"unknown sanitize policy {policy!r}")

    selected: list[Node] = []
    seen: set[int] = set()
    for rule in rules:
        if rule.kind != "select":
            continue
        for match in evaluate(rule.path, doc.root):
            if isinstance(match, Attr):
                continue
            if id(match) not in seen:
                seen.add(id(match))
                selected.append(match)
    if not selected:
        raise EmptyClip("no select rule matched the document")
    # the fragment is the document-order concatenation across all selects
    order = {id(node): i for i, node in enumerate(doc.root.iter())}
    selected.sort(key=lambda node: order.get(id(node), 0))

    fragment = Node("document")
    for node in selected:
        fragment.append(deep_copy(node))

    for rule in rules:
        if rule.kind == "cut":
            for match in evaluate(rule.path, fragment):
                if isinstance(match, Attr):
                    match.owner.attributes.pop(match.name, None)
                elif match is not fragment:
                    match.detach()
        elif rule.kind == "change":
            _apply_change(fragment, rule)

    rebase_failures = rebase_links(fragment, doc.base_url)
    removals = sanitize(fragment, policy)

    html = serialize(fragment)
    node_count = sum(1 for _ in fragment.iter()) - 1
    return PortletFragment(
        html=html,
        source_origin=origin_of(doc.base_url),
        digest=fragment_digest(html),
        clipped_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        node_count=node_count,
        sanitize_removals=removals,
        rebase_failures=rebase_failures,
    )


def _apply_change(fragment: Node, rule: ClipRule) -> None:
    spec = rule.change
    for match in evaluate(rule.path, fragment):
        if isinstance(match, Attr):
            continue
        if spec.op == "set_attr" and match.kind == "element":
            match.attributes[spec.name] = spec.value or ""
        elif spec.op == "remove_attr" and match.kind == "element":
            match.attributes.pop(spec.name, None)
        elif spec.op == "replace_text":
            targets = [match] if match.kind == "text" else [
                n for n in match.iter() if n.kind == "text"
            ]
            for node in targets:
                node.text = node.text.replace(spec.find or "", spec.replace or "")


def rebase_links(root: Node, base_url: str) -> int:
    """Resolve relative href/src/action values against base_url, in place.

    Values with a scheme and fragment-only (#x) references are untouched.
    Returns the count of values that could not be resolved (left as-is).
    """
    failures = 0
    for node in root.iter():
        if node.kind != "element":
            continue
        for attr in LINK_ATTRS:
            value = node.attributes.get(attr)
            if value is None:
                continue
            stripped = value.strip()
            if not stripped or stripped.startswith("#") or is_absolute(stripped):
                continue
            try:
                node.attributes[attr] = resolve(base_url, stripped)
            except ValueError:
                failures += 1
    return failures


def sanitize(root: Node, policy: str) -> int:
    """Strip active content in place; returns the number of removals.

    strict removes script/object/embed/applet elements, on* handler
    attributes and javascript: URLs; trusted keeps object/embed/applet so
    cookie-authenticated applets still render on the client.
    """
    removed_elements = (
        STRICT_REMOVED_ELEMENTS if policy == "strict" else TRUSTED_REMOVED_ELEMENTS
    )
    count = 0
    for node in list(root.iter()):
        if node.kind != "element":
            continue
        if node.name in removed_elements and node.parent is not None:
            node.detach()
            count += 1
            continue
        for name in [a for a in node.attributes if a.startswith("on")]:
            del node.attributes[name]
            count += 1
        for attr in LINK_ATTRS:
            value = node.attributes.get(attr)
            if value is not None and value.strip().lower().startswith("javascript:"):
                del node.attributes[attr]
                count += 1
    return count


def fragment_digest(html: str) -> str:
    """SHA-256 hex digest of the normalized fragment text.

    Normalization: reparse, drop comments, drop whitespace-only text nodes,
    collapse whitespace runs inside text to one space, unwrap tbody/thead/
    tfoot wrappers, then hash the canonical serialization as UTF-8.
    """
    return hashlib.sha256(normalize_fragment(html).encode("utf-8")).hexdigest()


_TABLE_WRAPPERS = frozenset({"tbody", "thead", "tfoot"})


def normalize_fragment(html: str) -> str:
    doc = parse_html(html, "http://digest.invalid/")
    body = None
    for child in doc.html.children:
        if child.kind == "element" and child.name == "body":
            body = child
    if body is None:
        return ""
    _normalize_node(body)
    return "".join(serialize(c) for c in body.children)


def _normalize_node(node: Node) -> None:
    new_children: list[Node] = []
    for child in node.children:
        if child.kind == "comment":
            continue
        if child.kind == "text":
            if _WS_RUN.fullmatch(child.text):
                continue
            child.text = _WS_RUN.sub(" ", child.text)
            new_children.append(child)
            continue
        _normalize_node(child)
        if child.kind == "element" and child.name in _TABLE_WRAPPERS:
            for grandchild in child.children:
                grandchild.parent = node
                new_children.append(grandchild)
            continue
        new_children.append(child)
    node.children = new_children
    for child in new_children:
        child.parent = node
    # merge text nodes made adjacent by dropped comments or unwrapping
    merged: list[Node] = []
    for child in node.children:
        if merged and child.kind == "text" and merged[-1].kind == "text":
            merged[-1].text += child.text
        else:
            merged.append(child)
    node.children = merged


def scan_links(html: str):
    """All (element name, attribute, value) link triples in a fragment."""
    doc = parse_html(html, "http://scan.invalid/")
    out = []
    for node in doc.root.iter():
        if node.kind != "element":
            continue
        for attr in LINK_ATTRS:
            if attr in node.attributes:
                out.append((node.name, attr, node.attributes[attr]))
    return out
