"""Tag-soup tolerant HTML parsing into a small navigable node tree.

The tree builder implements the deterministic rule subset documented in
docs/parsing-rules.md: a hand-written tokenizer, html/head/body synthesis,
a fixed auto-close table, and nearest-open-ancestor recovery for misnested
end tags.  parse_html() is total: any byte input yields a tree.
"""

from __future__ import annotations

import codecs
import html as _htmlmod
import json
import re
from urllib.parse import urlsplit

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

# Raw text: content captured verbatim, no entity decoding, no nested tags.
RAW_TEXT_ELEMENTS = frozenset({"script", "style"})
# RCDATA: no nested tags, but entities are decoded.
RCDATA_ELEMENTS = frozenset({"title", "textarea"})

HEAD_ONLY_TAGS = frozenset({"title", "meta", "link", "base", "style", "script", "noscript"})

# Start tag -> (closable targets, boundary tags that stop the search).
AUTO_CLOSE = {
    "p": ({"p"}, {"body", "html", "table", "td", "th", "caption", "object", "applet"}),
    "li": ({"li"}, {"ul", "ol", "body", "html", "table", "td", "th"}),
    "option": ({"option"}, {"select", "body", "html"}),
    "td": ({"td", "th"}, {"tr", "table", "body", "html"}),
    "th": ({"td", "th"}, {"tr", "table", "body", "html"}),
    "tr": ({"tr"}, {"table", "body", "html"}),
}

_META_CHARSET_RE = re.compile(
    rb"""<meta[^>]+charset\s*=\s*["']?\s*([a-zA-Z0-9_][a-zA-Z0-9._-]*)""",
    re.IGNORECASE,
)
_TAG_NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9:_-]*")


class Node:
    """One tree node: kind is 'document', 'element', 'text' or 'comment'."""

    __slots__ = ("kind", "name", "attributes", "children", "parent", "text")

    def __init__(self, kind, name=None, attributes=None, text=""):
        self.kind = kind
        self.name = name
        self.attributes = attributes if attributes is not None else {}
        self.children = []
        self.parent = None
        self.text = text

    def append(self, child: "Node") -> None:
        child.parent = self
        self.children.append(child)

    def detach(self) -> None:
        """Remove this node from its parent."""
        if self.parent is not None:
            self.parent.children = [c for c in self.parent.children if c is not self]
            self.parent = None

    def root(self) -> "Node":
        node = self
        while node.parent is not None:
            node = node.parent
        return node

    def iter(self):
        """Pre-order traversal including self."""
        yield self
        for child in self.children:
            yield from child.iter()

    def __repr__(self):
        if self.kind == "element":
            return f"<Node element {self.name} children={len(self.children)}>"
        if self.kind == "text":
            return f"<Node text {self.text[:24]!r}>"
        return f"<Node {self.kind}>"


class Attr:
    """Attribute node as produced by the attribute axis of a selector."""

    __slots__ = ("owner", "name", "value")

    def __init__(self, owner: Node, name: str, value: str):
        self.owner = owner
        self.name = name
        self.value = value

    def __repr__(self):
        return f'<Attr {self.name}="{self.value}">'

    def __eq__(self, other):
        return (
            isinstance(other, Attr)
            and other.owner is self.owner
            and other.name == self.name
        )

    def __hash__(self):
        return hash((id(self.owner), self.name))


class Document:
    """Parsed page: synthetic root whose single element child is <html>."""

    def __init__(self, root: Node, base_url: str, encoding: str):
        self.root = root
        self.base_url = base_url
        self.encoding = encoding

    @property
    def html(self) -> Node:
        for child in self.root.children:
            if child.kind == "element" and child.name == "html":
                return child
        raise AssertionError("document without html element")


class InvalidBaseUrl(ValueError):
    pass


def _check_base_url(base_url: str) -> None:
    parts = urlsplit(base_url)
    if not parts.scheme or not parts.netloc:
        raise InvalidBaseUrl(f"base_url must be absolute: {base_url!r}")


def _sniff_encoding(data: bytes) -> str:
    if data.startswith(codecs.BOM_UTF8):
        return "utf-8-sig"
    if data.startswith(codecs.BOM_UTF16_LE) or data.startswith(codecs.BOM_UTF16_BE):
        return "utf-16"
    m = _META_CHARSET_RE.search(data[:1024])
    if m:
        label = m.group(1).decode("ascii", "replace")
        try:
            codecs.lookup(label)
            return label
        except LookupError:
            pass
    return "utf-8"


# --- tokenizer -------------------------------------------------------------

class _Tok:
    TEXT = "text"
    START = "start"
    END = "end"
    COMMENT = "comment"


def _decode_text(text: str) -> str:
    return _htmlmod.unescape(text) if "&" in text else text


def _tokenize(src: str):
    """Yield (kind, payload) tokens; never raises on malformed input.

    Payloads: text/comment -> str; start -> (name, attrs, self_closing);
    end -> name; rawtext -> (element name, content).  Doctypes, processing
    instructions and other <!...> or <?...> constructs are dropped.  An
    unterminated tag at EOF is discarded.  Content of script/style (raw)
    and title/textarea (entity-decoded) is emitted as one rawtext token.
    """
    i = 0
    n = len(src)
    while i < n:
        lt = src.find("<", i)
        if lt == -1:
            yield (_Tok.TEXT, _decode_text(src[i:]))
            return
        if lt > i:
            yield (_Tok.TEXT, _decode_text(src[i:lt]))
        if lt + 1 >= n:
            # lone '<' at EOF becomes text
            yield (_Tok.TEXT, "<")
            return
        ch = src[lt + 1]
        if ch == "!":
            if src.startswith("<!--", lt):
                end = src.find("-->", lt + 4)
                if end == -1:
                    yield (_Tok.COMMENT, src[lt + 4:])
                    return
                yield (_Tok.COMMENT, src[lt + 4:end])
                i = end + 3
            else:
                gt = src.find(">", lt)
                if gt == -1:
                    return
                i = gt + 1
            continue
        if ch == "?":
            gt = src.find(">", lt)
            if gt == -1:
                return
            i = gt + 1
            continue
        if ch == "/":
            m = _TAG_NAME_RE.match(src, lt + 2)
            if not m:
                # "</>" or "</ ..." is dropped up to the next '>'
                gt = src.find(">", lt)
                if gt == -1:
                    return
                i = gt + 1
                continue
            gt = src.find(">", m.end())
            if gt == -1:
                return
            yield (_Tok.END, m.group(0).lower())
            i = gt + 1
            continue
        m = _TAG_NAME_RE.match(src, lt + 1)
        if not m:
            # '<' not opening a tag is literal text
            yield (_Tok.TEXT, "<")
            i = lt + 1
            continue
        name = m.group(0).lower()
        attrs, self_closing, nxt = _parse_attrs(src, m.end())
        if nxt is None:
            return  # unterminated start tag at EOF
        i = nxt
        yield (_Tok.START, (name, attrs, self_closing))
        if not self_closing and (name in RAW_TEXT_ELEMENTS or name in RCDATA_ELEMENTS):
            text, i = _raw_text_until(src, name, i)
            if name in RCDATA_ELEMENTS:
                text = _htmlmod.unescape(text)
            yield ("rawtext", (name, text))


def _parse_attrs(src: str, i: int):
    """Parse attributes from position i up to '>'.

    Returns (attrs, self_closing, next_index) or (None, None, None) at EOF.
    Duplicate attribute names keep the first occurrence.
    """
    n = len(src)
    attrs: dict[str, str] = {}
    self_closing = False
    while True:
        while i < n and src[i] in " \t\r\n\f":
            i += 1
        if i >= n:
            return None, None, None
        if src[i] == ">":
            return attrs, self_closing, i + 1
        if src[i] == "/":
            i += 1
            if i < n and src[i] == ">":
                return attrs, True, i + 1
            continue
        start = i
        while i < n and src[i] not in " \t\r\n\f=/>":
            i += 1
        name = src[start:i].lower()
        while i < n and src[i] in " \t\r\n\f":
            i += 1
        value = ""
        if i < n and src[i] == "=":
            i += 1
            while i < n and src[i] in " \t\r\n\f":
                i += 1
            if i < n and src[i] in "\"'":
                quote = src[i]
                end = src.find(quote, i + 1)
                if end == -1:
                    value = src[i + 1:]
                    i = n
                else:
                    value = src[i + 1:end]
                    i = end + 1
            else:
                start = i
                while i < n and src[i] not in " \t\r\n\f>":
                    i += 1
                value = src[start:i]
        if name and name not in attrs:
            attrs[name] = _htmlmod.unescape(value)
        if i >= n:
            return None, None, None


def _raw_text_until(src: str, close_name: str, i: int):
    """Capture raw content until the matching end tag (case-insensitive)."""
    pat = re.compile(r"</" + re.escape(close_name) + r"(?=[\s/>])[^>]*>|</" + re.escape(close_name) + r">", re.IGNORECASE)
    m = pat.search(src, i)
    if m is None:
        return src[i:], len(src)
    return src[i:m.start()], m.end()


# --- tree builder ----------------------------------------------------------

class _TreeBuilder:
    def __init__(self):
        self.root = Node("document")
        self.html: Node | None = None
        self.head: Node | None = None
        self.body: Node | None = None
        self.stack: list[Node] = []  # open elements, innermost last

    def _ensure_html(self, attrs=None):
        if self.html is None:
            self.html = Node("element", "html", dict(attrs or {}))
            self.root.append(self.html)
            self.stack = [self.html]

    def _ensure_head(self):
        self._ensure_html()
        if self.head is None:
            self.head = Node("element", "head")
            self.html.append(self.head)
        if self.body is None and self.stack[-1] is self.html:
            self.stack.append(self.head)

    def _ensure_body(self, attrs=None):
        self._ensure_html()
        if self.head is None:
            self.head = Node("element", "head")
            self.html.append(self.head)
        if self.body is None:
            self.body = Node("element", "body", dict(attrs or {}))
            self.html.append(self.body)
        # drop any open head context
        if self.head in self.stack:
            self.stack = [n for n in self.stack if n is not self.head and not _is_under(n, self.head)]
        if self.stack[-1] is self.html:
            self.stack.append(self.body)

    def current(self) -> Node:
        return self.stack[-1]

    def add_text(self, text: str):
        if not text:
            return
        if self.body is None:
            if not text.strip():
                return  # whitespace before body is dropped
            self._ensure_body()
        parent = self.current()
        if parent.children and parent.children[-1].kind == "text":
            parent.children[-1].text += text
        else:
            parent.append(Node("text", text=text))

    def add_comment(self, text: str):
        if self.html is None:
            self.root.append(Node("comment", text=text))
            return
        self.current().append(Node("comment", text=text))

    def _auto_close(self, name: str):
        rule = AUTO_CLOSE.get(name)
        if rule is None:
            return
        targets, boundary = rule
        for idx in range(len(self.stack) - 1, -1, -1):
            node = self.stack[idx]
            if node.name in targets:
                del self.stack[idx:]
                return
            if node.name in boundary:
                return

    def add_start(self, name: str, attrs: dict, self_closing: bool):
        if name == "html":
            if self.html is None:
                self._ensure_html(attrs)
            return
        if name == "head":
            self._ensure_head()
            return
        if name == "body":
            self._ensure_body(attrs)
            return
        if self.body is None:
            if name in HEAD_ONLY_TAGS:
                self._ensure_head()
            else:
                self._ensure_body()
        self._auto_close(name)
        node = Node("element", name, attrs)
        self.current().append(node)
        if name not in VOID_ELEMENTS and not self_closing:
            self.stack.append(node)

    def add_end(self, name: str):
        if name in ("html", "body"):
            return  # kept open so trailing content still lands in body
        if name == "head":
            if self.head in self.stack:
                idx = self.stack.index(self.head)
                del self.stack[idx:]
            return
        # nearest open ancestor with this name; never pops past body/head
        for idx in range(len(self.stack) - 1, -1, -1):
            node = self.stack[idx]
            if node is self.body or node is self.head or node is self.html:
                return
            if node.name == name:
                del self.stack[idx:]
                return

    def finish(self) -> Node:
        self._ensure_body()
        return self.root


def _is_under(node: Node, ancestor: Node) -> bool:
    cur = node.parent
    while cur is not None:
        if cur is ancestor:
            return True
        cur = cur.parent
    return False


def parse_html(data, base_url: str) -> Document:
    """Parse HTML bytes (or text) into a Document. Total on any input."""
    _check_base_url(base_url)
    if isinstance(data, (bytes, bytearray, memoryview)):
        data = bytes(data)
        encoding = _sniff_encoding(data)
        try:
            src = data.decode(encoding, errors="replace")
        except (LookupError, UnicodeError):
            encoding = "utf-8"
            src = data.decode("utf-8", errors="replace")
    else:
        src = str(data)
        encoding = "utf-8"

    builder = _TreeBuilder()
    for kind, payload in _tokenize(src):
        if kind == _Tok.TEXT:
            builder.add_text(payload)
        elif kind == _Tok.COMMENT:
            builder.add_comment(payload)
        elif kind == _Tok.START:
            name, attrs, self_closing = payload
            builder.add_start(name, attrs, self_closing)
        elif kind == _Tok.END:
            builder.add_end(payload)
        elif kind == "rawtext":
            name, text = payload
            if text:
                node = builder.current()
                if node.kind == "element" and node.name == name:
                    node.append(Node("text", text=text))
            builder.add_end(name)
    root = builder.finish()
    return Document(root, base_url, encoding)


_TEXT_ESCAPES = {"&": "&amp;", "<": "&lt;", ">": "&gt;"}
_ATTR_ESCAPES = {"&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;"}


def _escape_text(text: str) -> str:
    return "".join(_TEXT_ESCAPES.get(c, c) for c in text)


def _escape_attr(value: str) -> str:
    return "".join(_ATTR_ESCAPES.get(c, c) for c in value)


def serialize(node: Node | Attr) -> str:
    """Serialize a node back to HTML text (attribute order preserved)."""
    if isinstance(node, Attr):
        return f'{node.name}="{_escape_attr(node.value)}"'
    out: list[str] = []
    _serialize_into(node, out)
    return "".join(out)


def _serialize_into(node: Node, out: list) -> None:
    if node.kind == "document":
        for child in node.children:
            _serialize_into(child, out)
        return
    if node.kind == "text":
        parent = node.parent
        if parent is not None and parent.kind == "element" and parent.name in RAW_TEXT_ELEMENTS:
            # a literal end tag inside raw text cannot round-trip; defang it
            out.append(node.text.replace("</", "<\\/"))
        else:
            out.append(_escape_text(node.text))
        return
    if node.kind == "comment":
        out.append(f"<!--{node.text}-->")
        return
    attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in node.attributes.items())
    if node.name in VOID_ELEMENTS:
        out.append(f"<{node.name}{attrs}>")
        return
    out.append(f"<{node.name}{attrs}>")
    for child in node.children:
        _serialize_into(child, out)
    out.append(f"</{node.name}>")


def text_content(node: Node | Attr) -> str:
    """Concatenated descendant text in document order."""
    if isinstance(node, Attr):
        return node.value
    if node.kind == "text":
        return node.text
    if node.kind == "comment":
        return ""
    parts = []
    for n in node.iter():
        if n.kind == "text":
            parts.append(n.text)
    return "".join(parts)


def tree_dump(node: Node, indent: int = 0) -> str:
    """Normalized tree dump, one node per line, two spaces per depth."""
    pad = "  " * indent
    if node.kind == "document":
        lines = [pad + "#document"]
        for child in node.children:
            lines.append(tree_dump(child, indent + 1))
        return "\n".join(lines)
    if node.kind == "text":
        return pad + json.dumps(node.text, ensure_ascii=False)
    if node.kind == "comment":
        return pad + "#comment " + json.dumps(node.text, ensure_ascii=False)
    attrs = "".join(f" {k}={json.dumps(v, ensure_ascii=False)}" for k, v in node.attributes.items())
    lines = [f"{pad}<{node.name}{attrs}>"]
    for child in node.children:
        lines.append(tree_dump(child, indent + 1))
    return "\n".join(lines)


def deep_copy(node: Node) -> Node:
    """Copy a subtree; the copy has no parent."""
    clone = Node(node.kind, node.name, dict(node.attributes), node.text)
    for child in node.children:
        clone.append(deep_copy(child))
    return clone
