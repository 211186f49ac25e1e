/**
 * Client-side clipping: select / cut / change rules applied to a fetched
 * page, links rebased to the source origin, active content stripped, and
 * a change-detection digest computed. Mirrors the backend pipeline;
 * conformance is pinned by the shared golden fixtures.
 */

import { fragmentDigest } from "./digest.js";
import { serializeNode } from "./serialize.js";
import { type PathExpr, compilePath, evaluatePath, isAttrRef } from "./xpath.js";

export type SanitizePolicy = "strict" | "trusted";

export interface ChangeSpec {
  op: "set_attr" | "remove_attr" | "replace_text";
  name?: string;
  value?: string;
  find?: string;
  replace?: string;
}

export interface ClipRule {
  kind: "select" | "cut" | "change";
  path: PathExpr;
  change?: ChangeSpec;
}

export interface RuleJson {
  kind: string;
  path: string;
  op?: string;
  name?: string;
  value?: string;
  find?: string;
  replace?: string;
}

export interface Fragment {
  html: string;
  digest: string;
  sourceOrigin: string;
}

export class EmptyClipError extends Error {
  constructor() {
    super("no select rule matched the document");
    this.name = "EmptyClipError";
  }
}

const ELEMENT = 1;
const TEXT = 3;

const LINK_ATTRS = ["href", "src", "action", "data"];
const STRICT_REMOVED = new Set(["script", "object", "embed", "applet"]);
const TRUSTED_REMOVED = new Set(["script"]);

export function parseRules(raw: RuleJson[]): ClipRule[] {
  return raw.map((rule) => {
    const path = compilePath(rule.path);
    if (rule.kind !== "change") {
      return { kind: rule.kind as "select" | "cut", path };
    }
    return {
      kind: "change",
      path,
      change: {
        op: rule.op as ChangeSpec["op"],
        name: rule.name,
        value: rule.value,
        find: rule.find,
        replace: rule.replace,
      },
    };
  });
}

function documentOrder(root: Node): Map<Node, number> {
  const order = new Map<Node, number>();
  let index = 0;
  const walk = (node: Node): void => {
    order.set(node, index++);
    for (let child = node.firstChild; child; child = child.nextSibling) walk(child);
  };
  walk(root);
  return order;
}

export async function applyClip(
  doc: Document,
  baseUrl: string,
  rules: ClipRule[],
  policy: SanitizePolicy,
): Promise<Fragment> {
  if (!rules.some((r) => r.kind === "select")) {
    throw new Error("clip rule list needs at least one select rule");
  }
  const selected: Node[] = [];
  const seen = new Set<Node>();
  for (const rule of rules) {
    if (rule.kind !== "select") continue;
    for (const match of evaluatePath(rule.path, doc)) {
      if (isAttrRef(match)) continue;
      const node = match as Node;
      if (!seen.has(node)) {
        seen.add(node);
        selected.push(node);
      }
    }
  }
  if (selected.length === 0) throw new EmptyClipError();
  const order = documentOrder(doc);
  selected.sort((a, b) => (order.get(a) ?? 0) - (order.get(b) ?? 0));

  // work on deep copies inside a fragment container so the source page
  // stays untouched (other portlets may clip the same document)
  const container = doc.implementation.createHTMLDocument("clip").createDocumentFragment();
  for (const node of selected) container.appendChild(node.cloneNode(true));

  for (const rule of rules) {
    if (rule.kind === "cut") {
      for (const match of evaluatePath(rule.path, container)) {
        if (isAttrRef(match)) match.owner.removeAttribute(match.name);
        else if ((match as Node).parentNode) (match as Node).parentNode!.removeChild(match as Node);
      }
    } else if (rule.kind === "change" && rule.change) {
      applyChange(container, rule.path, rule.change);
    }
  }

  rebaseLinks(container, baseUrl);
  sanitize(container, policy);

  const html = serializeNode(container);
  return {
    html,
    digest: await fragmentDigest(html),
    sourceOrigin: new URL(baseUrl).origin,
  };
}

function applyChange(container: Node, path: PathExpr, spec: ChangeSpec): void {
  for (const match of evaluatePath(path, container)) {
    if (isAttrRef(match)) continue;
    const node = match as Node;
    if (spec.op === "set_attr" && node.nodeType === ELEMENT) {
      (node as Element).setAttribute(spec.name ?? "", spec.value ?? "");
    } else if (spec.op === "remove_attr" && node.nodeType === ELEMENT) {
      (node as Element).removeAttribute(spec.name ?? "");
    } else if (spec.op === "replace_text") {
      const targets: Node[] = [];
      if (node.nodeType === TEXT) {
        targets.push(node);
      } else {
        const collect = (n: Node): void => {
          if (n.nodeType === TEXT) targets.push(n);
          for (let c = n.firstChild; c; c = c.nextSibling) collect(c);
        };
        collect(node);
      }
      for (const target of targets) {
        target.nodeValue = (target.nodeValue ?? "").split(spec.find ?? "").join(spec.replace ?? "");
      }
    }
  }
}

export function rebaseLinks(root: Node, baseUrl: string): number {
  let failures = 0;
  const walk = (node: Node): void => {
    if (node.nodeType === ELEMENT) {
      const element = node as Element;
      for (const attr of LINK_ATTRS) {
        const value = element.getAttribute(attr);
        if (value === null) continue;
        const stripped = value.trim();
        if (!stripped || stripped.startsWith("#") || hasScheme(stripped)) continue;
        try {
          element.setAttribute(attr, new URL(stripped, baseUrl).toString());
        } catch {
          failures++;
        }
      }
    }
    for (let child = node.firstChild; child; child = child.nextSibling) walk(child);
  };
  walk(root);
  return failures;
}

function hasScheme(url: string): boolean {
  // scheme-relative (//host/x) counts as relative, matching the backend
  return /^[a-zA-Z][a-zA-Z0-9+.-]*:/.test(url);
}

export function sanitize(root: Node, policy: SanitizePolicy): number {
  const removedElements = policy === "strict" ? STRICT_REMOVED : TRUSTED_REMOVED;
  let count = 0;
  const all: Element[] = [];
  const collect = (node: Node): void => {
    if (node.nodeType === ELEMENT) all.push(node as Element);
    for (let child = node.firstChild; child; child = child.nextSibling) collect(child);
  };
  collect(root);
  for (const element of all) {
    if (removedElements.has(element.localName.toLowerCase()) && element.parentNode) {
      element.parentNode.removeChild(element);
      count++;
      continue;
    }
    for (const name of Array.from(element.getAttributeNames())) {
      if (name.toLowerCase().startsWith("on")) {
        element.removeAttribute(name);
        count++;
      }
    }
    for (const attr of LINK_ATTRS) {
      const value = element.getAttribute(attr);
      if (value !== null && value.trim().toLowerCase().startsWith("javascript:")) {
        element.removeAttribute(attr);
        count++;
      }
    }
  }
  return count;
}
