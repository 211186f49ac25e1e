"""Selector engine: grammar, evaluation semantics, oracle equivalence."""

from __future__ import annotations

import random

import pytest

from clipportal.html_tree import Attr, parse_html, serialize
from clipportal.xpath import (
    AttrEquals,
    Position,
    XPathSyntaxError,
    compile_xpath,
    evaluate,
    render,
)

from .genutil import random_document, random_expression
from .oracle import oracle_evaluate

DOC = parse_html(
    b'<html><body><div id="a"><p>x</p><p>y</p></div></body></html>',
    "http://t.example/",
)


def _texts(results):
    out = []
    for item in results:
        if isinstance(item, Attr):
            out.append(f"@{item.name}={item.value}")
        elif item.kind == "text":
            out.append(item.text)
        else:
            out.append(serialize(item))
    return out


class TestCompile:
    def test_absolute_child_steps_with_position(self):
        expr = compile_xpath("/html/body/div[2]")
        assert expr.absolute
        assert [s.axis for s in expr.steps] == ["child", "child", "child"]
        assert expr.steps[2].predicates == (Position(2),)

    def test_descendant_with_attr_equals(self):
        expr = compile_xpath("//p[@class='note']")
        assert expr.absolute
        assert expr.steps[0].axis == "descendant-or-self"
        assert expr.steps[0].test.kind == "node"
        assert expr.steps[1].axis == "child"
        assert expr.steps[1].test.name == "p"
        assert expr.steps[1].predicates == (AttrEquals("class", "note"),)

    def test_unterminated_predicate_position(self):
        with pytest.raises(XPathSyntaxError) as exc_info:
            compile_xpath("div[")
        assert exc_info.value.position == 4
        assert exc_info.value.expected

    @pytest.mark.parametrize("bad", [
        "", "/html/", "//", "div[]", "div[@]", "div[1 and]", "p[contains(a,'x')]",
        "p[contains(@a 'x')]", "p[@a='unterminated]", "@", "div]", "p[(1]",
    ])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(XPathSyntaxError):
            compile_xpath(bad)

    def test_attribute_axis_only_name_or_wildcard(self):
        compile_xpath("//a/@href")
        compile_xpath("//a/@*")
        with pytest.raises(XPathSyntaxError):
            compile_xpath("//a/@text()")


class TestEvaluate:
    def test_positional_child(self):
        assert _texts(evaluate(compile_xpath("/html/body/div/p[2]"), DOC.root)) == ["<p>y</p>"]

    def test_descendants_in_document_order(self):
        assert _texts(evaluate(compile_xpath("//p"), DOC.root)) == ["<p>x</p>", "<p>y</p>"]

    def test_attribute_node(self):
        (attr,) = evaluate(compile_xpath("//div[@id='a']/@id"), DOC.root)
        assert isinstance(attr, Attr)
        assert (attr.name, attr.value) == ("id", "a")

    def test_absent_element_yields_empty(self):
        assert evaluate(compile_xpath("/html/body/span"), DOC.root) == []

    def test_bare_root(self):
        assert evaluate(compile_xpath("/"), DOC.root) == [DOC.root]

    def test_relative_and_parent_steps(self):
        div = evaluate(compile_xpath("//div"), DOC.root)[0]
        assert _texts(evaluate(compile_xpath("p[1]"), div)) == ["<p>x</p>"]
        assert evaluate(compile_xpath(".."), div)[0].name == "body"
        assert evaluate(compile_xpath("."), div) == [div]

    def test_text_node_test(self):
        doc = parse_html(b"<p>one</p><p>two</p>", "http://t.example/")
        assert _texts(evaluate(compile_xpath("//p/text()"), doc.root)) == ["one", "two"]

    def test_contains_on_text_and_attr(self):
        doc = parse_html(
            b'<div><a href="/long/path">go</a><a href="/x">no</a></div>',
            "http://t.example/",
        )
        found = evaluate(compile_xpath("//a[contains(@href,'long')]"), doc.root)
        assert _texts(found) == ['<a href="/long/path">go</a>']
        found = evaluate(compile_xpath("//a[contains(text(),'g')]"), doc.root)
        assert _texts(found) == ['<a href="/long/path">go</a>']

    def test_and_or_predicates(self):
        doc = parse_html(
            b'<ul><li class="a">1</li><li class="b" id="k">2</li><li>3</li></ul>',
            "http://t.example/",
        )
        both = evaluate(compile_xpath("//li[@class='b' and @id]"), doc.root)
        assert _texts(both) == ['<li class="b" id="k">2</li>']
        either = evaluate(compile_xpath("//li[@class='a' or @id='k']"), doc.root)
        assert len(either) == 2

    def test_predicates_filter_sequentially(self):
        doc = parse_html(
            b'<div><p>a</p><p class="k">b</p><p class="k">c</p></div>',
            "http://t.example/",
        )
        # [@class][2] means: of the class-bearing candidates, the second
        found = evaluate(compile_xpath("//p[@class='k'][2]"), doc.root)
        assert _texts(found) == ['<p class="k">c</p>']

    def test_position_is_per_parent_context(self):
        doc = parse_html(
            b"<div><p>a</p><p>b</p></div><div><p>c</p></div>",
            "http://t.example/",
        )
        # //p[1]: first p of each parent
        found = evaluate(compile_xpath("//p[1]"), doc.root)
        assert _texts(found) == ["<p>a</p>", "<p>c</p>"]

    def test_repeat_evaluation_identical(self):
        expr = compile_xpath("//p")
        first = evaluate(expr, DOC.root)
        second = evaluate(expr, DOC.root)
        assert first == second

    def test_results_unique(self):
        # both select steps can reach the same node; it appears once
        doc = parse_html(b"<div><div><p>x</p></div></div>", "http://t.example/")
        found = evaluate(compile_xpath("//div//p"), doc.root)
        assert len(found) == 1


class TestRenderIdentity:
    @pytest.mark.parametrize("source", [
        "/", "/html/body/div[2]", "//p[@class='note']", "//a/@href", "@*",
        ".", "..", "div//p[1]", "//li[@class='a' or @id='k'][2]",
        "//p[contains(text(),'x') and @id]", "text()", "node()[2]",
        "//div[@id='a']/p[2]/text()",
    ])
    def test_compile_render_compile(self, source):
        expr = compile_xpath(source)
        assert compile_xpath(render(expr)) == expr

    def test_random_expressions(self):
        rng = random.Random(7)
        for _ in range(300):
            source = random_expression(rng)
            expr = compile_xpath(source)
            assert compile_xpath(render(expr)) == expr, source


class TestOracleEquivalence:
    def test_fixed_cases(self):
        cases = [
            "/html/body/div/p[2]", "//p", "//div[@id='a']/@id", "/html/body/span",
            "//p/..", "//*", "//node()", "//text()", ".//p", "//div/p[1]",
        ]
        for source in cases:
            expr = compile_xpath(source)
            assert evaluate(expr, DOC.root) == oracle_evaluate(expr, DOC.root), source

    def test_randomized_small_run(self):
        rng = random.Random(42)
        for _ in range(250):
            doc = random_document(rng)
            expr = compile_xpath(random_expression(rng))
            contexts = [doc.root]
            elements = [n for n in doc.root.iter() if n.kind == "element"]
            contexts.append(rng.choice(elements))
            for context in contexts:
                got = evaluate(expr, context)
                want = oracle_evaluate(expr, context)
                assert got == want, (render(expr), serialize(doc.root))
