/**
 * Content digests for change detection, identical to the backend's
 * pipeline (docs/digest-normalization.md): drop comments and
 * whitespace-only text, collapse whitespace runs, unwrap
 * tbody/thead/tfoot, merge adjacent text, canonical-serialize, SHA-256.
 */

import { serializeChildren } from "./serialize.js";

const ELEMENT = 1;
const TEXT = 3;
const COMMENT = 8;

const TABLE_WRAPPERS = new Set(["tbody", "thead", "tfoot"]);
const WS_RUN = /\s+/g;
const WS_ONLY = /^\s+$/;

function normalizeInto(node: Node): void {
  const doc = node.ownerDocument!;
  const kept: Node[] = [];
  for (let child = node.firstChild; child; ) {
    const next = child.nextSibling;
    if (child.nodeType === COMMENT) {
      // dropped
    } else if (child.nodeType === TEXT) {
      const data = child.nodeValue ?? "";
      if (!WS_ONLY.test(data)) {
        child.nodeValue = data.replace(WS_RUN, " ");
        kept.push(child);
      }
    } else {
      if (child.nodeType === ELEMENT) normalizeInto(child);
      if (child.nodeType === ELEMENT &&
          TABLE_WRAPPERS.has((child as Element).localName.toLowerCase())) {
        for (let inner = child.firstChild; inner; ) {
          const innerNext = inner.nextSibling;
          kept.push(inner);
          inner = innerNext;
        }
      } else {
        kept.push(child);
      }
    }
    child = next;
  }
  while (node.firstChild) node.removeChild(node.firstChild);
  let previousText: Node | null = null;
  for (const child of kept) {
    if (child.nodeType === TEXT && previousText) {
      previousText.nodeValue = (previousText.nodeValue ?? "") + (child.nodeValue ?? "");
      continue;
    }
    node.appendChild(child);
    previousText = child.nodeType === TEXT ? child : null;
  }
  void doc;
}

/** Normalized canonical form of a fragment's markup. */
export function normalizeFragment(html: string): string {
  const doc = new DOMParser().parseFromString(html, "text/html");
  normalizeInto(doc.body);
  return serializeChildren(doc.body);
}

export async function fragmentDigest(html: string): Promise<string> {
  const canonical = normalizeFragment(html);
  const bytes = new TextEncoder().encode(canonical);
  const digest = await crypto.subtle.digest("SHA-256", bytes);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}
