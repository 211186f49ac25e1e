"""Abbreviated location-path selector engine over the HTML node tree.

Supported grammar (v1, documented in docs/xpath-grammar.md): `/`, `//`,
`.`, `..`, `@name`, name tests, `*`, `text()`, `node()`, and predicates
`[n]`, `[@a]`, `[@a='v']`, `[contains(@a,'v')]`, `[contains(text(),'v')]`
combined with `and` / `or` and parentheses.  Evaluation returns unique
nodes in document order and never raises.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .html_tree import Attr, Document, Node

_NAME_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_.-]*")
_INT_RE = re.compile(r"[0-9]+")


class XPathSyntaxError(ValueError):
    """Raised by compile_xpath; carries the offset and expected-token set."""

    def __init__(self, message: str, position: int, expected=()):
        self.position = position
        self.expected = frozenset(expected)
        detail = f"{message} at offset {position}"
        if expected:
            detail += " (expected " + ", ".join(sorted(self.expected)) + ")"
        super().__init__(detail)


# --- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class NodeTest:
    kind: str  # 'name' | 'wildcard' | 'text' | 'node'
    name: str | None = None


@dataclass(frozen=True)
class Position:
    index: int


@dataclass(frozen=True)
class AttrPresent:
    name: str


@dataclass(frozen=True)
class AttrEquals:
    name: str
    value: str


@dataclass(frozen=True)
class Contains:
    attr: str | None  # None means text()
    needle: str


@dataclass(frozen=True)
class AllOf:
    items: tuple


@dataclass(frozen=True)
class AnyOf:
    items: tuple


@dataclass(frozen=True)
class Step:
    axis: str  # 'child' | 'descendant-or-self' | 'self' | 'parent' | 'attribute'
    test: NodeTest
    predicates: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class XPathExpr:
    absolute: bool
    steps: tuple[Step, ...]


_DESCEND = Step("descendant-or-self", NodeTest("node"))


# --- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.n = len(source)

    def error(self, message, expected=()):
        raise XPathSyntaxError(message, self.pos, expected)

    def skip_ws(self):
        while self.pos < self.n and self.src[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self, lit: str) -> bool:
        return self.src.startswith(lit, self.pos)

    def eat(self, lit: str) -> bool:
        if self.src.startswith(lit, self.pos):
            self.pos += len(lit)
            return True
        return False

    def expect(self, lit: str):
        if not self.eat(lit):
            self.error(f"expected {lit!r}", {lit})

    def name(self) -> str:
        m = _NAME_RE.match(self.src, self.pos)
        if not m:
            self.error("expected a name", {"name"})
        self.pos = m.end()
        return m.group(0).lower()

    def literal(self) -> str:
        if self.pos >= self.n or self.src[self.pos] not in "'\"":
            self.error("expected a string literal", {"'", '"'})
        quote = self.src[self.pos]
        end = self.src.find(quote, self.pos + 1)
        if end == -1:
            self.error("unterminated string literal", {quote})
        value = self.src[self.pos + 1:end]
        self.pos = end + 1
        return value

    def parse(self) -> XPathExpr:
        self.skip_ws()
        steps: list[Step] = []
        absolute = False
        if self.eat("//"):
            absolute = True
            steps.append(_DESCEND)
        elif self.eat("/"):
            absolute = True
            self.skip_ws()
            if self.pos >= self.n:
                return XPathExpr(True, ())  # bare root
        steps.append(self.step())
        while True:
            self.skip_ws()
            if self.eat("//"):
                steps.append(_DESCEND)
                steps.append(self.step())
            elif self.eat("/"):
                steps.append(self.step())
            else:
                break
        self.skip_ws()
        if self.pos != self.n:
            self.error("unexpected trailing input", {"/", "//", "end of expression"})
        return XPathExpr(absolute, tuple(steps))

    def step(self) -> Step:
        self.skip_ws()
        if self.pos >= self.n:
            self.error("expected a step", {"name", "*", "@", ".", "..", "text()", "node()"})
        if self.eat(".."):
            return Step("parent", NodeTest("node"), self.predicates())
        if self.eat("."):
            return Step("self", NodeTest("node"), self.predicates())
        if self.eat("@"):
            if self.eat("*"):
                return Step("attribute", NodeTest("wildcard"), self.predicates())
            return Step("attribute", NodeTest("name", self.name()), self.predicates())
        if self.eat("*"):
            return Step("child", NodeTest("wildcard"), self.predicates())
        if self.peek("text()"):
            self.pos += len("text()")
            return Step("child", NodeTest("text"), self.predicates())
        if self.peek("node()"):
            self.pos += len("node()")
            return Step("child", NodeTest("node"), self.predicates())
        return Step("child", NodeTest("name", self.name()), self.predicates())

    def predicates(self) -> tuple:
        preds = []
        while True:
            self.skip_ws()
            if not self.eat("["):
                return tuple(preds)
            pred = self.or_expr()
            self.skip_ws()
            self.expect("]")
            preds.append(pred)

    def or_expr(self):
        items = [self.and_expr()]
        while True:
            self.skip_ws()
            if self._word("or"):
                items.append(self.and_expr())
            else:
                break
        return items[0] if len(items) == 1 else AnyOf(tuple(items))

    def and_expr(self):
        items = [self.atom()]
        while True:
            self.skip_ws()
            if self._word("and"):
                items.append(self.atom())
            else:
                break
        return items[0] if len(items) == 1 else AllOf(tuple(items))

    def _word(self, word: str) -> bool:
        end = self.pos + len(word)
        if self.src.startswith(word, self.pos) and (
            end >= self.n or not self.src[end].isalnum()
        ):
            self.pos = end
            return True
        return False

    def atom(self):
        self.skip_ws()
        if self.pos >= self.n:
            self.error("expected a predicate", {"integer", "@", "contains(", "("})
        if self.eat("("):
            inner = self.or_expr()
            self.skip_ws()
            self.expect(")")
            return inner
        m = _INT_RE.match(self.src, self.pos)
        if m:
            self.pos = m.end()
            index = int(m.group(0))
            if index < 1:
                self.error("position must be >= 1")
            return Position(index)
        if self.eat("@"):
            attr = self.name()
            self.skip_ws()
            if self.eat("="):
                self.skip_ws()
                return AttrEquals(attr, self.literal())
            return AttrPresent(attr)
        if self._word("contains"):
            self.skip_ws()
            self.expect("(")
            self.skip_ws()
            if self.eat("@"):
                target = self.name()
            elif self.eat("text()"):
                target = None
            else:
                self.error("expected @name or text()", {"@", "text()"})
            self.skip_ws()
            self.expect(",")
            self.skip_ws()
            needle = self.literal()
            self.skip_ws()
            self.expect(")")
            return Contains(target, needle)
        self.error("unrecognized predicate", {"integer", "@", "contains(", "("})


def compile_xpath(source: str) -> XPathExpr:
    """Compile a location path; raises XPathSyntaxError on bad input."""
    return _Parser(source).parse()


# --- rendering --------------------------------------------------------------

def _quote(value: str) -> str:
    if "'" not in value:
        return f"'{value}'"
    if '"' not in value:
        return f'"{value}"'
    raise ValueError("literal cannot contain both quote kinds")


def _render_pred(pred, top=True) -> str:
    if isinstance(pred, Position):
        return str(pred.index)
    if isinstance(pred, AttrPresent):
        return f"@{pred.name}"
    if isinstance(pred, AttrEquals):
        return f"@{pred.name}={_quote(pred.value)}"
    if isinstance(pred, Contains):
        sel = "text()" if pred.attr is None else f"@{pred.attr}"
        return f"contains({sel},{_quote(pred.needle)})"
    if isinstance(pred, AllOf):
        inner = " and ".join(
            _render_pred(p, top=False) if isinstance(p, AnyOf) else _render_pred(p)
            for p in pred.items
        )
        return inner
    if isinstance(pred, AnyOf):
        inner = " or ".join(_render_pred(p) for p in pred.items)
        return inner if top else f"({inner})"
    raise TypeError(f"unknown predicate {pred!r}")


def render(expr: XPathExpr) -> str:
    """Render an expression back to source text; recompiling it yields a
    structurally equal expression."""
    if expr.absolute and not expr.steps:
        return "/"
    parts: list[str] = []
    i = 0
    steps = expr.steps
    first = True
    while i < len(steps):
        step = steps[i]
        sep = ""
        if step == _DESCEND and i + 1 < len(steps):
            sep = "//"
            i += 1
            step = steps[i]
        elif not first:
            sep = "/"
        elif expr.absolute:
            sep = "/"
        if step.axis == "self":
            body = "."
        elif step.axis == "parent":
            body = ".."
        elif step.axis == "attribute":
            body = "@*" if step.test.kind == "wildcard" else f"@{step.test.name}"
        elif step.test.kind == "wildcard":
            body = "*"
        elif step.test.kind == "text":
            body = "text()"
        elif step.test.kind == "node":
            body = "node()"
        else:
            body = step.test.name
        preds = "".join(f"[{_render_pred(p)}]" for p in step.predicates)
        parts.append(sep + body + preds)
        first = False
        i += 1
    return "".join(parts)


# --- evaluation -------------------------------------------------------------

def _order_map(root: Node) -> dict[int, int]:
    order = {}
    for i, node in enumerate(root.iter()):
        order[id(node)] = i
    return order


def _doc_key(item, order: dict[int, int]):
    if isinstance(item, Attr):
        owner_idx = order.get(id(item.owner), 0)
        attr_idx = list(item.owner.attributes).index(item.name)
        return (owner_idx, 1, attr_idx)
    return (order.get(id(item), 0), 0, 0)


def _test_matches(test: NodeTest, item, axis: str) -> bool:
    if axis == "attribute":
        if not isinstance(item, Attr):
            return False
        if test.kind == "wildcard":
            return True
        return test.kind == "name" and item.name == test.name
    if isinstance(item, Attr):
        return test.kind == "node"
    if test.kind == "node":
        return True
    if test.kind == "text":
        return item.kind == "text"
    if test.kind == "wildcard":
        return item.kind == "element"
    return item.kind == "element" and item.name == test.name


def _axis_candidates(ctx, axis: str):
    if isinstance(ctx, Attr):
        if axis == "self":
            return [ctx]
        if axis == "parent":
            return [ctx.owner]
        return []
    if axis == "child":
        return list(ctx.children)
    if axis == "descendant-or-self":
        return list(ctx.iter())
    if axis == "self":
        return [ctx]
    if axis == "parent":
        return [ctx.parent] if ctx.parent is not None else []
    if axis == "attribute":
        if ctx.kind != "element":
            return []
        return [Attr(ctx, k, v) for k, v in ctx.attributes.items()]
    raise ValueError(f"unknown axis {axis}")


def _child_text(node) -> str:
    if isinstance(node, Attr) or node.kind != "element":
        return ""
    return "".join(c.text for c in node.children if c.kind == "text")


def _pred_matches(pred, item, position: int) -> bool:
    if isinstance(pred, Position):
        return position == pred.index
    if isinstance(pred, AttrPresent):
        return (
            isinstance(item, Node)
            and item.kind == "element"
            and pred.name in item.attributes
        )
    if isinstance(pred, AttrEquals):
        return (
            isinstance(item, Node)
            and item.kind == "element"
            and item.attributes.get(pred.name) == pred.value
        )
    if isinstance(pred, Contains):
        if pred.attr is None:
            hay = _child_text(item)
        elif isinstance(item, Node) and item.kind == "element":
            hay = item.attributes.get(pred.attr)
            if hay is None:
                return False
        else:
            return False
        return pred.needle in hay
    if isinstance(pred, AllOf):
        return all(_pred_matches(p, item, position) for p in pred.items)
    if isinstance(pred, AnyOf):
        return any(_pred_matches(p, item, position) for p in pred.items)
    raise TypeError(f"unknown predicate {pred!r}")


def evaluate(expr: XPathExpr, context) -> list:
    """Evaluate against a context Node (or Document); total, never raises.

    Returns unique nodes in document order; attribute nodes sort directly
    after their owning element.
    """
    if isinstance(context, Document):
        context = context.root
    root = context.root()
    order = _order_map(root)
    current = [root] if expr.absolute else [context]
    for step in expr.steps:
        gathered = []
        seen = set()
        for ctx in current:
            candidates = [
                c for c in _axis_candidates(ctx, step.axis)
                if _test_matches(step.test, c, step.axis)
            ]
            for pred in step.predicates:
                candidates = [
                    c for i, c in enumerate(candidates, 1)
                    if _pred_matches(pred, c, i)
                ]
            for c in candidates:
                key = (id(c.owner), c.name) if isinstance(c, Attr) else id(c)
                if key not in seen:
                    seen.add(key)
                    gathered.append(c)
        gathered.sort(key=lambda item: _doc_key(item, order))
        current = gathered
    return current
