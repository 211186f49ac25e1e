/**
 * The live portal page: a grid of independently refreshed portlet slots.
 *
 * Each portlet runs its login workflow in the browser, clips the fetched
 * page with the descriptor's rules, and only touches its slot's subtree
 * when the fragment digest actually changed; the document itself never
 * reloads. Clicking a link inside a fragment re-clips the target page in
 * place (external origins open a new browsing context instead).
 */

import {
  type CredentialJson,
  type DescriptorJson,
  type PortletJson,
  type WorkflowStepJson,
  PortalApi,
} from "./api.js";
import { type ClipRule, EmptyClipError, applyClip, parseRules, sanitize } from "./clip.js";
import { compilePath, evaluatePath, isAttrRef } from "./xpath.js";
import { serializeChildren } from "./serialize.js";
import { fragmentDigest } from "./digest.js";

export type ViewState = "loading" | "live" | "error";

export interface PortletView {
  portletId: string;
  definition: PortletJson;
  rules: ClipRule[];
  slot: HTMLElement;
  section: HTMLElement;
  state: ViewState;
  digest: string | null;
  contentUrl: string | null;
  errorMessage: string | null;
  unclipped: boolean;
  timer: ReturnType<typeof setInterval> | null;
}

export interface PortalOptions {
  /** start per-portlet interval timers (tests drive refresh manually) */
  timers?: boolean;
  /** open external links; injectable for tests (default window.open) */
  openExternal?: (url: string) => void;
}

export class PortalPage {
  readonly api: PortalApi;
  readonly views = new Map<string, PortletView>();
  descriptor: DescriptorJson | null = null;
  private readonly credentials = new Map<string, CredentialJson>();
  private readonly openExternal: (url: string) => void;
  private readonly timersEnabled: boolean;

  constructor(
    serverUrl: string,
    readonly portalId: string,
    readonly root: HTMLElement,
    options: PortalOptions = {},
  ) {
    this.api = new PortalApi(serverUrl);
    this.timersEnabled = options.timers ?? true;
    this.openExternal = options.openExternal ?? ((url) => window.open(url, "_blank"));
    this.api.onRelayEngaged = () => this.showRelayBanner();
  }

  /** Login, fetch the descriptor, lay out the grid, start every workflow. */
  async boot(user: string, pass: string): Promise<void> {
    await this.api.login(user, pass); // failures propagate before any descriptor request
    this.descriptor = await this.api.descriptor(this.portalId);
    this.layoutGrid();
    await Promise.all(
      [...this.views.keys()].map((pid) => this.startPortlet(pid)),
    );
  }

  private layoutGrid(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    const descriptor = this.descriptor!;
    const title = doc.createElement("h1");
    title.textContent = descriptor.title;
    this.root.appendChild(title);
    for (const row of descriptor.layout) {
      const rowBox = doc.createElement("div");
      rowBox.className = "portal-row";
      for (const pid of row) {
        const definition = descriptor.portlets[pid];
        const section = doc.createElement("section");
        section.className = "portlet";
        section.id = `portlet-${pid}`;
        section.dataset.windowState = definition.window_state;

        const bar = doc.createElement("h2");
        bar.className = "portlet-title";
        bar.textContent = definition.title;
        const controls = doc.createElement("span");
        controls.className = "portlet-controls";
        for (const [label, state] of [["–", "minimized"], ["□", "maximized"], ["×", "normal"]] as const) {
          const button = doc.createElement("button");
          button.textContent = label;
          button.addEventListener("click", () => this.setWindowState(pid, state));
          controls.appendChild(button);
        }
        bar.appendChild(controls);
        section.appendChild(bar);

        const slot = doc.createElement("div");
        slot.className = "portlet-slot";
        slot.textContent = "loading …";
        section.appendChild(slot);
        rowBox.appendChild(section);

        slot.addEventListener("click", (event) => this.onSlotClick(pid, event));
        this.views.set(pid, {
          portletId: pid,
          definition,
          rules: parseRules(definition.clip_rules),
          slot,
          section,
          state: "loading",
          digest: null,
          contentUrl: null,
          errorMessage: null,
          unclipped: false,
          timer: null,
        });
        this.applyWindowState(pid);
      }
      this.root.appendChild(rowBox);
    }
  }

  private async startPortlet(pid: string): Promise<void> {
    const view = this.views.get(pid)!;
    try {
      const fragment = await this.runWorkflow(view);
      this.showFragment(view, fragment.html, fragment.digest);
    } catch (err) {
      this.showError(view, err);
    }
    if (this.timersEnabled && view.definition.refresh.policy === "interval") {
      view.timer = setInterval(
        () => void this.refreshPortlet(pid),
        view.definition.refresh.interval_seconds * 1000,
      );
    }
  }

  /** Re-fetch and re-clip; replaces the slot subtree only on digest change. */
  async refreshPortlet(pid: string): Promise<{ changed: boolean; error: string | null }> {
    const view = this.views.get(pid)!;
    try {
      // the content URL is retried first; clipUrl falls back to the full
      // workflow when the page demands a login again
      const fragment = view.contentUrl !== null
        ? await this.clipUrl(view, view.contentUrl)
        : await this.runWorkflow(view);
      const changed = fragment.digest !== view.digest;
      if (changed) this.showFragment(view, fragment.html, fragment.digest);
      else view.state = "live";
      return { changed, error: null };
    } catch (err) {
      // transient failure: keep previous content, add a badge
      view.errorMessage = err instanceof Error ? err.message : String(err);
      this.markErrorBadge(view);
      return { changed: false, error: view.errorMessage };
    }
  }

  private async clipUrl(view: PortletView, url: string) {
    const page = await this.api.fetchPage(url);
    if (page.status >= 400) throw new Error(`fetch failed with status ${page.status}`);
    const doc = new DOMParser().parseFromString(page.text, "text/html");
    const loginForms = view.definition.workflow
      .filter((s) => s.step === "submit_form" && s.form_path)
      .map((s) => compilePath(s.form_path!));
    const loggedOut = loginForms.some((path) => evaluatePath(path, doc).length > 0);
    if (loggedOut) return this.runWorkflow(view); // transparent re-login, once
    try {
      const fragment = await applyClip(doc, page.url, view.rules, view.definition.sanitize_policy);
      view.contentUrl = page.url;
      view.unclipped = false;
      return fragment;
    } catch (err) {
      if (err instanceof EmptyClipError && loginForms.length > 0) {
        return this.runWorkflow(view); // maybe a session-expired page variant
      }
      throw err;
    }
  }

  private async runWorkflow(view: PortletView) {
    const steps: WorkflowStepJson[] = view.definition.workflow;
    const credentials = await this.credentialsFor(view);
    let doc: Document | null = null;
    let docUrl = view.definition.source_url;
    for (const step of steps) {
      if (step.step === "get") {
        const page = await this.api.fetchPage(step.url!);
        if (page.status >= 400) throw new Error(`fetch failed with status ${page.status}`);
        doc = new DOMParser().parseFromString(page.text, "text/html");
        docUrl = page.url;
      } else if (step.step === "submit_form") {
        if (!doc) throw new Error("workflow has no page to submit");
        const result = await this.submitForm(doc, docUrl, step, credentials);
        doc = result.doc;
        docUrl = result.url;
      } else if (step.step === "follow_link") {
        if (!doc) throw new Error("workflow has no page to navigate");
        const href = this.findLink(doc, step.link_path!);
        const page = await this.api.fetchPage(new URL(href, docUrl).toString());
        if (page.status >= 400) throw new Error(`fetch failed with status ${page.status}`);
        doc = new DOMParser().parseFromString(page.text, "text/html");
        docUrl = page.url;
      } else if (step.step === "clip") {
        if (!doc) throw new Error("workflow has no page to clip");
        const fragment = await applyClip(doc, docUrl, view.rules, view.definition.sanitize_policy);
        view.contentUrl = docUrl;
        view.unclipped = false;
        return fragment;
      }
    }
    throw new Error("workflow had no clip step");
  }

  private async credentialsFor(view: PortletView): Promise<CredentialJson | null> {
    if (!view.definition.credential_ref) return null;
    const cached = this.credentials.get(view.portletId);
    if (cached) return cached;
    const entry = await this.api.credentials(this.portalId, view.portletId);
    this.credentials.set(view.portletId, entry);
    return entry;
  }

  private async submitForm(
    doc: Document,
    docUrl: string,
    step: WorkflowStepJson,
    credentials: CredentialJson | null,
  ): Promise<{ doc: Document; url: string }> {
    const path = compilePath(step.form_path!);
    const match = evaluatePath(path, doc).find(
      (m) => !isAttrRef(m) && (m as Node).nodeType === 1,
    );
    if (!match) throw new Error("login form not found");
    const form = match as Element;

    const fields = new Map<string, string>();
    for (const control of Array.from(form.querySelectorAll("input,textarea,select"))) {
      const name = control.getAttribute("name");
      if (!name) continue;
      const tag = control.localName.toLowerCase();
      if (tag === "input") {
        const type = (control.getAttribute("type") ?? "text").toLowerCase();
        if (["submit", "button", "image", "file", "reset"].includes(type)) continue;
        if (["checkbox", "radio"].includes(type) && !control.hasAttribute("checked")) continue;
        fields.set(name, control.getAttribute("value") ?? "");
      } else if (tag === "textarea") {
        fields.set(name, control.textContent ?? "");
      } else {
        const selected = control.querySelector("option[selected]") ?? control.querySelector("option");
        if (selected) fields.set(name, selected.getAttribute("value") ?? selected.textContent ?? "");
      }
    }
    if (credentials) {
      for (const [name, value] of Object.entries(credentials.extra_fields)) fields.set(name, value);
    }
    for (const [name, raw] of Object.entries(step.fields ?? {})) {
      let value = raw;
      if (raw === "{user}") value = credentials?.username ?? raw;
      else if (raw === "{pass}") value = credentials?.password ?? raw;
      fields.set(name, value);
    }

    const action = form.getAttribute("action") || docUrl;
    const target = new URL(action, docUrl).toString();
    const method = (form.getAttribute("method") ?? "get").toLowerCase();
    const encoded = new URLSearchParams([...fields.entries()]).toString();
    const page = method === "post"
      ? await this.api.fetchPage(target, { method: "POST", body: encoded })
      : await this.api.fetchPage(target + (target.includes("?") ? "&" : "?") + encoded);
    if (page.status >= 400) throw new Error(`submit failed with status ${page.status}`);
    const nextDoc = new DOMParser().parseFromString(page.text, "text/html");
    if (evaluatePath(path, nextDoc).length > 0) {
      throw new Error("login rejected (form still present after submit)");
    }
    return { doc: nextDoc, url: page.url };
  }

  private findLink(doc: Document, linkPath: string): string {
    for (const match of evaluatePath(compilePath(linkPath), doc)) {
      if (isAttrRef(match)) return match.value;
      if ((match as Node).nodeType === 1) {
        const href = (match as Element).getAttribute("href");
        if (href) return href;
      }
    }
    throw new Error("link not found");
  }

  /** In-portlet navigation: clicked links re-clip in place when same-source. */
  private onSlotClick(pid: string, event: Event): void {
    const target = event.target as Element | null;
    const anchor = target?.closest?.("a[href]");
    if (!anchor) return;
    event.preventDefault();
    const href = anchor.getAttribute("href")!;
    if (href.startsWith("#")) return;
    void this.navigateInPortlet(pid, href);
  }

  async navigateInPortlet(pid: string, url: string): Promise<void> {
    const view = this.views.get(pid)!;
    const sourceOrigin = new URL(view.definition.source_url).origin;
    let targetOrigin: string;
    try {
      targetOrigin = new URL(url).origin;
    } catch {
      return; // links are absolute post-rebase; anything else is inert
    }
    if (targetOrigin !== sourceOrigin) {
      this.openExternal(url); // external link: new browsing context, slot untouched
      return;
    }
    try {
      const page = await this.api.fetchPage(url);
      if (page.status >= 400) throw new Error(`fetch failed with status ${page.status}`);
      const doc = new DOMParser().parseFromString(page.text, "text/html");
      try {
        const fragment = await applyClip(doc, page.url, view.rules, view.definition.sanitize_policy);
        view.contentUrl = page.url;
        view.unclipped = false;
        this.showFragment(view, fragment.html, fragment.digest);
      } catch (err) {
        if (!(err instanceof EmptyClipError)) throw err;
        // clip miss on the navigation target: sanitized body fallback
        sanitize(doc.body, view.definition.sanitize_policy);
        const html = serializeChildren(doc.body);
        view.contentUrl = page.url;
        view.unclipped = true;
        this.showFragment(view, html, await fragmentDigest(html));
      }
    } catch (err) {
      view.errorMessage = err instanceof Error ? err.message : String(err);
      this.markErrorBadge(view); // fetch failure: keep current content
    }
  }

  private showFragment(view: PortletView, html: string, digest: string): void {
    view.slot.innerHTML = html;
    view.digest = digest;
    view.state = "live";
    view.errorMessage = null;
    view.section.dataset.digest = digest;
    view.section.classList.remove("portlet-error");
    view.section.classList.toggle("portlet-unclipped", view.unclipped);
    const doc = view.section.ownerDocument;
    const oldBadge = view.section.querySelector(".portlet-badge");
    if (oldBadge) oldBadge.remove();
    if (view.unclipped) {
      const badge = doc.createElement("span");
      badge.className = "portlet-badge";
      badge.textContent = "unclipped";
      view.section.querySelector(".portlet-title")!.appendChild(badge);
    }
  }

  private showError(view: PortletView, err: unknown): void {
    view.state = "error";
    view.errorMessage = err instanceof Error ? err.message : String(err);
    view.slot.textContent = `portlet unavailable: ${view.errorMessage}`;
    view.section.classList.add("portlet-error");
  }

  private markErrorBadge(view: PortletView): void {
    view.state = view.digest ? "live" : "error";
    const doc = view.section.ownerDocument;
    let badge = view.section.querySelector(".portlet-badge");
    if (!badge) {
      badge = doc.createElement("span");
      badge.className = "portlet-badge";
      view.section.querySelector(".portlet-title")!.appendChild(badge);
    }
    badge.textContent = "stale";
  }

  setWindowState(pid: string, state: "normal" | "minimized" | "maximized"): void {
    const view = this.views.get(pid)!;
    view.definition.window_state = state;
    view.section.dataset.windowState = state;
    this.applyWindowState(pid);
  }

  private applyWindowState(pid: string): void {
    const view = this.views.get(pid)!;
    const state = view.definition.window_state;
    view.slot.style.display = state === "minimized" ? "none" : "";
    view.section.classList.toggle("maximized", state === "maximized");
    view.section.classList.toggle("minimized", state === "minimized");
  }

  private showRelayBanner(): void {
    const doc = this.root.ownerDocument;
    if (doc.getElementById("relay-banner")) return;
    const banner = doc.createElement("div");
    banner.id = "relay-banner";
    banner.className = "relay-banner";
    banner.textContent =
      "relay mode active for a blocked origin: its traffic now flows through the portal server";
    this.root.insertBefore(banner, this.root.firstChild);
  }

  stopTimers(): void {
    for (const view of this.views.values()) {
      if (view.timer !== null) clearInterval(view.timer);
      view.timer = null;
    }
  }
}
