/**
 * Canonical HTML serialization matching the backend engine byte for byte:
 * lowercase names, attributes in document order as name="value", `& < >`
 * escaped in text, `& < > "` in attribute values, the fixed void-element
 * set, raw text emitted verbatim inside script/style with a literal `</`
 * defanged to `<\/`.
 */

import { type AttrRef, type Item, isAttrRef } from "./xpath.js";

const VOID_ELEMENTS = new Set([
  "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
  "meta", "param", "source", "track", "wbr",
]);

const RAW_TEXT_ELEMENTS = new Set(["script", "style"]);

const ELEMENT = 1;
const TEXT = 3;
const COMMENT = 8;
const DOCUMENT = 9;
const DOCUMENT_FRAGMENT = 11;

export function escapeText(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function escapeAttr(value: string): string {
  return escapeText(value).replace(/"/g, "&quot;");
}

export function serializeNode(item: Item): string {
  if (isAttrRef(item)) {
    return `${item.name}="${escapeAttr(item.value)}"`;
  }
  const node = item as Node;
  switch (node.nodeType) {
    case DOCUMENT:
    case DOCUMENT_FRAGMENT: {
      let out = "";
      for (let child = node.firstChild; child; child = child.nextSibling) {
        out += serializeNode(child);
      }
      return out;
    }
    case TEXT: {
      const parent = node.parentNode;
      const data = node.nodeValue ?? "";
      if (parent && parent.nodeType === ELEMENT &&
          RAW_TEXT_ELEMENTS.has((parent as Element).localName.toLowerCase())) {
        return data.replace(/<\//g, "<\\/");
      }
      return escapeText(data);
    }
    case COMMENT:
      return `<!--${node.nodeValue ?? ""}-->`;
    case ELEMENT: {
      const element = node as Element;
      const name = element.localName.toLowerCase();
      let attrs = "";
      for (let i = 0; i < element.attributes.length; i++) {
        const attr = element.attributes.item(i)!;
        attrs += ` ${attr.name.toLowerCase()}="${escapeAttr(attr.value)}"`;
      }
      if (VOID_ELEMENTS.has(name)) return `<${name}${attrs}>`;
      let out = `<${name}${attrs}>`;
      for (let child = element.firstChild; child; child = child.nextSibling) {
        out += serializeNode(child);
      }
      return out + `</${name}>`;
    }
    default:
      return "";
  }
}

export function serializeChildren(node: Node): string {
  let out = "";
  for (let child = node.firstChild; child; child = child.nextSibling) {
    out += serializeNode(child);
  }
  return out;
}
