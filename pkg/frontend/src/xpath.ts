/**
 * Abbreviated location-path selectors over the browser DOM.
 *
 * Same v1 grammar the backend engine speaks (docs/xpath-grammar.md):
 * `/`, `//`, `.`, `..`, `@name`, name tests, `*`, `text()`, `node()`,
 * predicates `[n]`, `[@a]`, `[@a='v']`, `[contains(@a,'v')]`,
 * `[contains(text(),'v')]`, `and`/`or`, parentheses. Conformance with
 * the backend is pinned by shared golden fixtures.
 */

export type Axis = "child" | "descendant-or-self" | "self" | "parent" | "attribute";

export interface NodeTest {
  kind: "name" | "wildcard" | "text" | "node";
  name?: string;
}

export type Predicate =
  | { kind: "position"; index: number }
  | { kind: "attr-present"; name: string }
  | { kind: "attr-equals"; name: string; value: string }
  | { kind: "contains"; attr: string | null; needle: string }
  | { kind: "all"; items: Predicate[] }
  | { kind: "any"; items: Predicate[] };

export interface Step {
  axis: Axis;
  test: NodeTest;
  predicates: Predicate[];
}

export interface PathExpr {
  absolute: boolean;
  steps: Step[];
}

/** Attribute result item; plain object rather than the DOM's Attr. */
export interface AttrRef {
  kind: "attr";
  owner: Element;
  name: string;
  value: string;
}

export type Item = Node | AttrRef;

export function isAttrRef(item: Item): item is AttrRef {
  return (item as AttrRef).kind === "attr";
}

export class PathSyntaxError extends Error {
  constructor(message: string, readonly position: number, readonly expected: string[] = []) {
    super(`${message} at offset ${position}`);
    this.name = "PathSyntaxError";
  }
}

const NAME_RE = /[a-zA-Z_][a-zA-Z0-9_.-]*/y;
const INT_RE = /[0-9]+/y;
const DESCEND: Step = { axis: "descendant-or-self", test: { kind: "node" }, predicates: [] };

class Parser {
  pos = 0;

  constructor(readonly src: string) {}

  error(message: string, expected: string[] = []): never {
    throw new PathSyntaxError(message, this.pos, expected);
  }

  skipWs(): void {
    while (this.pos < this.src.length && " \t\r\n".includes(this.src[this.pos])) this.pos++;
  }

  eat(lit: string): boolean {
    if (this.src.startsWith(lit, this.pos)) {
      this.pos += lit.length;
      return true;
    }
    return false;
  }

  expect(lit: string): void {
    if (!this.eat(lit)) this.error(`expected '${lit}'`, [lit]);
  }

  name(): string {
    NAME_RE.lastIndex = this.pos;
    const m = NAME_RE.exec(this.src);
    if (!m) this.error("expected a name", ["name"]);
    this.pos = NAME_RE.lastIndex;
    return m[0].toLowerCase();
  }

  literal(): string {
    const quote = this.src[this.pos];
    if (quote !== "'" && quote !== '"') this.error("expected a string literal", ["'", '"']);
    const end = this.src.indexOf(quote, this.pos + 1);
    if (end === -1) this.error("unterminated string literal", [quote]);
    const value = this.src.slice(this.pos + 1, end);
    this.pos = end + 1;
    return value;
  }

  parse(): PathExpr {
    this.skipWs();
    const steps: Step[] = [];
    let absolute = false;
    if (this.eat("//")) {
      absolute = true;
      steps.push(DESCEND);
    } else if (this.eat("/")) {
      absolute = true;
      this.skipWs();
      if (this.pos >= this.src.length) return { absolute: true, steps: [] };
    }
    steps.push(this.step());
    for (;;) {
      this.skipWs();
      if (this.eat("//")) {
        steps.push(DESCEND);
        steps.push(this.step());
      } else if (this.eat("/")) {
        steps.push(this.step());
      } else {
        break;
      }
    }
    this.skipWs();
    if (this.pos !== this.src.length) {
      this.error("unexpected trailing input", ["/", "//", "end of expression"]);
    }
    return { absolute, steps };
  }

  step(): Step {
    this.skipWs();
    if (this.pos >= this.src.length) {
      this.error("expected a step", ["name", "*", "@", ".", "..", "text()", "node()"]);
    }
    if (this.eat("..")) return { axis: "parent", test: { kind: "node" }, predicates: this.predicates() };
    if (this.eat(".")) return { axis: "self", test: { kind: "node" }, predicates: this.predicates() };
    if (this.eat("@")) {
      if (this.eat("*")) return { axis: "attribute", test: { kind: "wildcard" }, predicates: this.predicates() };
      return { axis: "attribute", test: { kind: "name", name: this.name() }, predicates: this.predicates() };
    }
    if (this.eat("*")) return { axis: "child", test: { kind: "wildcard" }, predicates: this.predicates() };
    if (this.src.startsWith("text()", this.pos)) {
      this.pos += 6;
      return { axis: "child", test: { kind: "text" }, predicates: this.predicates() };
    }
    if (this.src.startsWith("node()", this.pos)) {
      this.pos += 6;
      return { axis: "child", test: { kind: "node" }, predicates: this.predicates() };
    }
    return { axis: "child", test: { kind: "name", name: this.name() }, predicates: this.predicates() };
  }

  predicates(): Predicate[] {
    const preds: Predicate[] = [];
    for (;;) {
      this.skipWs();
      if (!this.eat("[")) return preds;
      const pred = this.orExpr();
      this.skipWs();
      this.expect("]");
      preds.push(pred);
    }
  }

  orExpr(): Predicate {
    const items = [this.andExpr()];
    for (;;) {
      this.skipWs();
      if (this.word("or")) items.push(this.andExpr());
      else break;
    }
    return items.length === 1 ? items[0] : { kind: "any", items };
  }

  andExpr(): Predicate {
    const items = [this.atom()];
    for (;;) {
      this.skipWs();
      if (this.word("and")) items.push(this.atom());
      else break;
    }
    return items.length === 1 ? items[0] : { kind: "all", items };
  }

  word(word: string): boolean {
    const end = this.pos + word.length;
    if (this.src.startsWith(word, this.pos) && (end >= this.src.length || !/[a-zA-Z0-9]/.test(this.src[end]))) {
      this.pos = end;
      return true;
    }
    return false;
  }

  atom(): Predicate {
    this.skipWs();
    if (this.pos >= this.src.length) this.error("expected a predicate", ["integer", "@", "contains(", "("]);
    if (this.eat("(")) {
      const inner = this.orExpr();
      this.skipWs();
      this.expect(")");
      return inner;
    }
    INT_RE.lastIndex = this.pos;
    const m = INT_RE.exec(this.src);
    if (m) {
      this.pos = INT_RE.lastIndex;
      const index = parseInt(m[0], 10);
      if (index < 1) this.error("position must be >= 1");
      return { kind: "position", index };
    }
    if (this.eat("@")) {
      const attr = this.name();
      this.skipWs();
      if (this.eat("=")) {
        this.skipWs();
        return { kind: "attr-equals", name: attr, value: this.literal() };
      }
      return { kind: "attr-present", name: attr };
    }
    if (this.word("contains")) {
      this.skipWs();
      this.expect("(");
      this.skipWs();
      let target: string | null;
      if (this.eat("@")) target = this.name();
      else if (this.eat("text()")) target = null;
      else this.error("expected @name or text()", ["@", "text()"]);
      this.skipWs();
      this.expect(",");
      this.skipWs();
      const needle = this.literal();
      this.skipWs();
      this.expect(")");
      return { kind: "contains", attr: target, needle };
    }
    this.error("unrecognized predicate", ["integer", "@", "contains(", "("]);
  }
}

export function compilePath(source: string): PathExpr {
  return new Parser(source).parse();
}

// --- evaluation ---------------------------------------------------------------

const ELEMENT = 1;
const TEXT = 3;
const COMMENT = 8;
const DOCUMENT = 9;
const DOCUMENT_FRAGMENT = 11;

function elementName(node: Node): string {
  return (node as Element).localName.toLowerCase();
}

function testMatches(test: NodeTest, item: Item, axis: Axis): boolean {
  if (axis === "attribute") {
    if (!isAttrRef(item)) return false;
    if (test.kind === "wildcard") return true;
    return test.kind === "name" && item.name === test.name;
  }
  if (isAttrRef(item)) return test.kind === "node";
  const node = item as Node;
  switch (test.kind) {
    case "node":
      return node.nodeType === ELEMENT || node.nodeType === TEXT ||
        node.nodeType === COMMENT || node.nodeType === DOCUMENT ||
        node.nodeType === DOCUMENT_FRAGMENT;
    case "text":
      return node.nodeType === TEXT;
    case "wildcard":
      return node.nodeType === ELEMENT;
    case "name":
      return node.nodeType === ELEMENT && elementName(node) === test.name;
  }
}

function attrRefs(element: Element): AttrRef[] {
  const out: AttrRef[] = [];
  for (let i = 0; i < element.attributes.length; i++) {
    const attr = element.attributes.item(i)!;
    out.push({ kind: "attr", owner: element, name: attr.name.toLowerCase(), value: attr.value });
  }
  return out;
}

function walkSubtree(node: Node, out: Node[]): void {
  out.push(node);
  for (let child = node.firstChild; child; child = child.nextSibling) {
    walkSubtree(child, out);
  }
}

function axisCandidates(ctx: Item, axis: Axis): Item[] {
  if (isAttrRef(ctx)) {
    if (axis === "self") return [ctx];
    if (axis === "parent") return [ctx.owner];
    return [];
  }
  const node = ctx as Node;
  switch (axis) {
    case "child":
      return Array.from(node.childNodes);
    case "descendant-or-self": {
      const out: Node[] = [];
      walkSubtree(node, out);
      return out;
    }
    case "self":
      return [node];
    case "parent":
      return node.parentNode ? [node.parentNode] : [];
    case "attribute":
      return node.nodeType === ELEMENT ? attrRefs(node as Element) : [];
  }
}

function childText(item: Item): string {
  if (isAttrRef(item) || (item as Node).nodeType !== ELEMENT) return "";
  let text = "";
  for (let child = (item as Node).firstChild; child; child = child.nextSibling) {
    if (child.nodeType === TEXT) text += child.nodeValue ?? "";
  }
  return text;
}

function predMatches(pred: Predicate, item: Item, position: number): boolean {
  switch (pred.kind) {
    case "position":
      return position === pred.index;
    case "attr-present":
      return !isAttrRef(item) && (item as Node).nodeType === ELEMENT &&
        (item as Element).hasAttribute(pred.name);
    case "attr-equals":
      return !isAttrRef(item) && (item as Node).nodeType === ELEMENT &&
        (item as Element).getAttribute(pred.name) === pred.value;
    case "contains": {
      let hay: string | null;
      if (pred.attr === null) {
        hay = childText(item);
      } else if (!isAttrRef(item) && (item as Node).nodeType === ELEMENT) {
        hay = (item as Element).getAttribute(pred.attr);
        if (hay === null) return false;
      } else {
        return false;
      }
      return hay.includes(pred.needle);
    }
    case "all":
      return pred.items.every((p) => predMatches(p, item, position));
    case "any":
      return pred.items.some((p) => predMatches(p, item, position));
  }
}

function rootOf(context: Node): Node {
  let node: Node = context;
  while (node.parentNode) node = node.parentNode;
  return node;
}

function documentOrderKey(item: Item, order: Map<Node, number>): [number, number, number] {
  if (isAttrRef(item)) {
    let attrIndex = 0;
    for (let i = 0; i < item.owner.attributes.length; i++) {
      if (item.owner.attributes.item(i)!.name.toLowerCase() === item.name) {
        attrIndex = i;
        break;
      }
    }
    return [order.get(item.owner) ?? 0, 1, attrIndex];
  }
  return [order.get(item as Node) ?? 0, 0, 0];
}

/** Evaluate against a context node; returns unique items in document order. */
export function evaluatePath(expr: PathExpr, context: Node): Item[] {
  const root = rootOf(context);
  const order = new Map<Node, number>();
  {
    const all: Node[] = [];
    walkSubtree(root, all);
    all.forEach((node, i) => order.set(node, i));
  }
  let current: Item[] = [expr.absolute ? root : context];
  for (const step of expr.steps) {
    const gathered: Item[] = [];
    const seenNodes = new Set<Node>();
    const seenAttrs = new Set<string>();
    for (const ctx of current) {
      let candidates = axisCandidates(ctx, step.axis).filter((c) =>
        testMatches(step.test, c, step.axis),
      );
      for (const pred of step.predicates) {
        candidates = candidates.filter((c, i) => predMatches(pred, c, i + 1));
      }
      for (const candidate of candidates) {
        if (isAttrRef(candidate)) {
          const key = `${order.get(candidate.owner)}#${candidate.name}`;
          if (!seenAttrs.has(key)) {
            seenAttrs.add(key);
            gathered.push(candidate);
          }
        } else if (!seenNodes.has(candidate as Node)) {
          seenNodes.add(candidate as Node);
          gathered.push(candidate);
        }
      }
    }
    gathered.sort((a, b) => {
      const ka = documentOrderKey(a, order);
      const kb = documentOrderKey(b, order);
      return ka[0] - kb[0] || ka[1] - kb[1] || ka[2] - kb[2];
    });
    current = gathered;
  }
  return current;
}
