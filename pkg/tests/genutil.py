"""Seeded random documents and selector expressions for equivalence runs."""

from __future__ import annotations

import random

from clipportal.html_tree import Document, Node

TAGS = ["div", "p", "span", "a", "ul", "li", "b", "i", "table", "tr", "td"]
ATTR_NAMES = ["id", "class", "href", "title", "rel"]
ATTR_VALUES = ["a", "b", "note", "x1", "menu item", "v-2"]
TEXTS = ["alpha", "beta", "x", "menu", "  ", "note one"]


def random_document(rng: random.Random, max_nodes: int = 50) -> Document:
    root = Node("document")
    html = Node("element", "html")
    body = Node("element", "body")
    root.append(html)
    html.append(Node("element", "head"))
    html.append(body)
    budget = rng.randint(1, max_nodes - 4)
    _fill(rng, body, budget, depth=0)
    return Document(root, "http://gen.example/", "utf-8")


def _fill(rng: random.Random, parent: Node, budget: int, depth: int) -> int:
    while budget > 0:
        roll = rng.random()
        if roll < 0.28:
            text = rng.choice(TEXTS)
            if parent.children and parent.children[-1].kind == "text":
                parent.children[-1].text += text
            else:
                parent.append(Node("text", text=text))
            budget -= 1
        elif roll < 0.33:
            parent.append(Node("comment", text=rng.choice(TEXTS)))
            budget -= 1
        else:
            attrs = {}
            for name in rng.sample(ATTR_NAMES, rng.randint(0, 2)):
                attrs[name] = rng.choice(ATTR_VALUES)
            node = Node("element", rng.choice(TAGS), attrs)
            parent.append(node)
            budget -= 1
            if depth < 5 and budget > 0 and rng.random() < 0.6:
                budget = _fill(rng, node, rng.randint(0, budget), depth + 1)
        if rng.random() < 0.25:
            break
    return budget


def random_expression(rng: random.Random) -> str:
    parts = []
    absolute = rng.random() < 0.6
    if absolute:
        parts.append("//" if rng.random() < 0.5 else "/")
    step_count = rng.randint(1, 3)
    for i in range(step_count):
        if i > 0:
            parts.append("//" if rng.random() < 0.3 else "/")
        parts.append(_random_step(rng, last=(i == step_count - 1)))
    return "".join(parts)


def _random_step(rng: random.Random, last: bool) -> str:
    roll = rng.random()
    if last and roll < 0.12:
        return "@" + rng.choice(ATTR_NAMES + ["*"])
    if roll < 0.18:
        base = "."
    elif roll < 0.24:
        base = ".."
    elif roll < 0.32:
        base = "*"
    elif roll < 0.40:
        base = "text()" if rng.random() < 0.5 else "node()"
    else:
        base = rng.choice(TAGS)
    preds = ""
    for _ in range(rng.choices([0, 1, 2], weights=[6, 3, 1])[0]):
        preds += "[" + _random_predicate(rng) + "]"
    return base + preds


def _random_predicate(rng: random.Random, depth: int = 0) -> str:
    roll = rng.random()
    if roll < 0.35:
        return str(rng.randint(1, 3))
    if roll < 0.55:
        return "@" + rng.choice(ATTR_NAMES)
    if roll < 0.72:
        return f"@{rng.choice(ATTR_NAMES)}='{rng.choice(ATTR_VALUES)}'"
    if roll < 0.82:
        return f"contains(@{rng.choice(ATTR_NAMES)},'{rng.choice(['a', 'o', 'x'])}')"
    if roll < 0.90:
        return f"contains(text(),'{rng.choice(['a', 'x', 'note'])}')"
    if depth >= 1:
        return str(rng.randint(1, 2))
    op = " and " if rng.random() < 0.5 else " or "
    return _random_predicate(rng, depth + 1) + op + _random_predicate(rng, depth + 1)
