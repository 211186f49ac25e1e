/**
 * Live portal behavior against the real backend (spawned by global
 * setup): boot, partial refresh with a mutation-observer assertion, the
 * direct-mode network invariant via request capture, in-portlet
 * navigation, window states and failure isolation.
 */

import { afterEach, beforeEach, describe, expect, inject, it } from "vitest";

import { PortalPage } from "../src/portal.js";
import { type FetchHarness, installBrowserLikeFetch, observeSlots } from "./harness.js";

const backend = inject("backend");

let harness: FetchHarness;

beforeEach(() => {
  document.body.innerHTML = '<div id="portal-root"></div>';
  harness = installBrowserLikeFetch();
});

afterEach(() => {
  harness.restore();
});

function makePage(): PortalPage {
  return new PortalPage(
    backend.portal_url,
    "campus",
    document.getElementById("portal-root")!,
    { timers: false, openExternal: () => {} },
  );
}

async function bootPage(): Promise<PortalPage> {
  const page = makePage();
  await page.boot(backend.portal_user, backend.portal_pass);
  return page;
}

function mutateNews(): Promise<Response> {
  return fetch(`${backend.news_origin}/__mutate`, { method: "POST" });
}

describe("boot", () => {
  it("lays out every portlet in layout order and reaches live state", async () => {
    const page = await bootPage();
    const sections = Array.from(document.querySelectorAll("section.portlet"));
    expect(sections.map((s) => s.id)).toEqual(["portlet-news", "portlet-grades"]);
    for (const [pid, view] of page.views) {
      expect(view.state, pid).toBe("live");
      expect(view.digest).toMatch(/^[0-9a-f]{64}$/);
    }
    expect(document.querySelector("#portlet-news .portlet-slot")!.innerHTML)
      .toContain('id="headlines"');
    expect(document.querySelector("#portlet-grades .portlet-slot")!.innerHTML)
      .toContain("Algebra");
  });

  it("bad password: inline failure, no descriptor request", async () => {
    const page = makePage();
    harness.reset();
    await expect(page.boot(backend.portal_user, "wrong")).rejects.toThrow();
    const descriptorRequests = harness.records.filter((r) => r.url.includes("/descriptor"));
    expect(descriptorRequests).toHaveLength(0);
  });

  it("a dead source leaves that slot in error state and others live", async () => {
    const page = makePage();
    const deadOrigin = "http://127.0.0.1:1";
    // sabotage the news portlet before its workflow starts
    const realDescriptor = page.api.descriptor.bind(page.api);
    page.api.descriptor = async (portalId: string) => {
      const descriptor = await realDescriptor(portalId);
      descriptor.portlets.news.source_url = `${deadOrigin}/news`;
      descriptor.portlets.news.workflow = [
        { step: "get", url: `${deadOrigin}/news` },
        { step: "clip" },
      ];
      return descriptor;
    };
    await page.boot(backend.portal_user, backend.portal_pass);
    expect(page.views.get("news")!.state).toBe("error");
    expect(page.views.get("grades")!.state).toBe("live");
    expect(document.querySelector("#portlet-news .portlet-slot")!.textContent)
      .toContain("portlet unavailable");
  });
});

describe("partial refresh", () => {
  it("unchanged sources cause zero slot mutations and no document reload", async () => {
    const page = await bootPage();
    const href = window.location.href;
    const documentElement = document.documentElement;
    const slots = observeSlots(page.views);
    for (const pid of page.views.keys()) {
      const report = await page.refreshPortlet(pid);
      expect(report.changed).toBe(false);
    }
    await new Promise((r) => setTimeout(r, 0)); // flush observer queues
    expect(slots.mutatedSlots()).toEqual([]);
    expect(window.location.href).toBe(href);
    expect(document.documentElement).toBe(documentElement);
    slots.disconnect();
  });

  it("one mutated source replaces exactly one slot subtree", async () => {
    const page = await bootPage();
    const documentElement = document.documentElement;
    const slots = observeSlots(page.views);
    await mutateNews();
    const reports = new Map<string, { changed: boolean }>();
    for (const pid of page.views.keys()) {
      reports.set(pid, await page.refreshPortlet(pid));
    }
    await new Promise((r) => setTimeout(r, 0));
    expect(reports.get("news")!.changed).toBe(true);
    expect(reports.get("grades")!.changed).toBe(false);
    expect(slots.mutatedSlots()).toEqual(["news"]);
    expect(document.documentElement).toBe(documentElement); // no reload
    slots.disconnect();
  });

  it("direct-mode refresh cycles issue zero portal-server requests", async () => {
    const page = await bootPage();
    const portalOrigin = new URL(backend.portal_url).origin;
    harness.reset();
    for (let cycle = 0; cycle < 3; cycle++) {
      await mutateNews();
      for (const pid of page.views.keys()) {
        await page.refreshPortlet(pid);
      }
    }
    expect(harness.requestsTo(portalOrigin)).toBe(0);
    expect(harness.requestsTo(backend.news_origin)).toBeGreaterThan(0);
  });

  it("a source going away keeps the previous content with a stale badge", async () => {
    const page = await bootPage();
    const before = document.querySelector("#portlet-grades .portlet-slot")!.innerHTML;
    const view = page.views.get("grades")!;
    view.contentUrl = "http://127.0.0.1:1/grades"; // unreachable
    view.definition.workflow = [
      { step: "get", url: "http://127.0.0.1:1/grades" },
      { step: "clip" },
    ];
    const report = await page.refreshPortlet("grades");
    expect(report.error).not.toBeNull();
    expect(document.querySelector("#portlet-grades .portlet-slot")!.innerHTML).toBe(before);
    expect(document.querySelector("#portlet-grades .portlet-badge")!.textContent).toBe("stale");
  });
});

describe("in-portlet navigation", () => {
  it("clicking a same-source link re-clips the target into the slot", async () => {
    const page = await bootPage();
    await page.navigateInPortlet("news", `${backend.news_origin}/page2.html`);
    const slot = document.querySelector("#portlet-news .portlet-slot")!;
    expect(slot.innerHTML).toContain("Bridge special");
    expect(page.views.get("news")!.unclipped).toBe(false);
    // document never navigated
    expect(window.location.href).not.toContain("page2");
  });

  it("a clip miss falls back to the sanitized body with an unclipped badge", async () => {
    const page = await bootPage();
    // the about page has no headlines div, so the news rules cannot match it
    await page.navigateInPortlet("news", `${backend.news_origin}/about`);
    const view = page.views.get("news")!;
    expect(view.unclipped).toBe(true);
    const slot = document.querySelector("#portlet-news .portlet-slot")!;
    expect(slot.innerHTML).toContain("since 1921");
    const badge = document.querySelector("#portlet-news .portlet-badge");
    expect(badge?.textContent).toBe("unclipped");
  });

  it("external links open a new browsing context and leave the slot alone", async () => {
    const opened: string[] = [];
    const page = new PortalPage(
      backend.portal_url, "campus", document.getElementById("portal-root")!,
      { timers: false, openExternal: (url) => opened.push(url) },
    );
    await page.boot(backend.portal_user, backend.portal_pass);
    const before = document.querySelector("#portlet-news .portlet-slot")!.innerHTML;
    await page.navigateInPortlet("news", `${backend.grades_origin}/login`);
    expect(opened).toEqual([`${backend.grades_origin}/login`]);
    expect(document.querySelector("#portlet-news .portlet-slot")!.innerHTML).toBe(before);
  });
});

describe("window states", () => {
  it("minimized hides the slot, maximized widens the section", async () => {
    const page = await bootPage();
    page.setWindowState("news", "minimized");
    const section = document.getElementById("portlet-news")!;
    const slot = section.querySelector(".portlet-slot") as HTMLElement;
    expect(slot.style.display).toBe("none");
    page.setWindowState("news", "maximized");
    expect(slot.style.display).toBe("");
    expect(section.classList.contains("maximized")).toBe(true);
    page.setWindowState("news", "normal");
    expect(section.classList.contains("maximized")).toBe(false);
  });
});

describe("digest agreement with the backend", () => {
  it("the UI computes the same grades digest as the headless client", async () => {
    const page = await bootPage();
    // ask the backend's own engine for its digest of the same portlet
    const { execFile } = await import("node:child_process");
    const { promisify } = await import("node:util");
    const script = [
      "from clipportal import client",
      `s = client.init_session(${JSON.stringify(backend.portal_url)}, "campus", "alice", "wonderland")`,
      'f = client.run_workflow(s, "grades")',
      "print(f.digest)",
    ].join("\n");
    const { stdout } = await promisify(execFile)("python3", ["-c", script]);
    expect(page.views.get("grades")!.digest).toBe(stdout.trim());
  });
});
