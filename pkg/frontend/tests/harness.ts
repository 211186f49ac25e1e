/**
 * Browser-behavior shim for node: the UI relies on the browser's cookie
 * jar (`credentials: "include"`) and redirect following, which node's
 * fetch does not provide. This wrapper reproduces both and records every
 * request so tests can capture network traffic per origin.
 */

export interface RequestRecord {
  url: string;
  origin: string;
  method: string;
}

export interface FetchHarness {
  records: RequestRecord[];
  requestsTo(origin: string): number;
  reset(): void;
  restore(): void;
}

interface StoredCookie {
  name: string;
  value: string;
  path: string;
}

function cookiePath(attrs: string[]): string {
  for (const attr of attrs) {
    const [key, value] = attr.split("=", 2).map((s) => s.trim());
    if (key.toLowerCase() === "path" && value?.startsWith("/")) return value;
  }
  return "/";
}

export function installBrowserLikeFetch(): FetchHarness {
  const realFetch = globalThis.fetch.bind(globalThis);
  const jar = new Map<string, StoredCookie[]>(); // origin -> cookies
  const records: RequestRecord[] = [];

  function absorb(origin: string, headers: Headers): void {
    const setCookies: string[] =
      (headers as Headers & { getSetCookie?: () => string[] }).getSetCookie?.() ??
      (headers.get("set-cookie") ? [headers.get("set-cookie")!] : []);
    for (const line of setCookies) {
      const [pair, ...attrs] = line.split(";");
      const eq = pair.indexOf("=");
      if (eq === -1) continue;
      const cookie: StoredCookie = {
        name: pair.slice(0, eq).trim(),
        value: pair.slice(eq + 1).trim(),
        path: cookiePath(attrs),
      };
      const existing = jar.get(origin) ?? [];
      const kept = existing.filter((c) => !(c.name === cookie.name && c.path === cookie.path));
      kept.push(cookie);
      jar.set(origin, kept);
    }
  }

  function cookieHeader(origin: string, path: string): string {
    const cookies = (jar.get(origin) ?? []).filter(
      (c) => path === c.path || path.startsWith(c.path.endsWith("/") ? c.path : c.path + "/") || c.path === "/",
    );
    return cookies.map((c) => `${c.name}=${c.value}`).join("; ");
  }

  async function browserFetch(input: RequestInfo | URL, init?: RequestInit): Promise<Response> {
    let url = typeof input === "string" ? input : input instanceof URL ? input.toString() : input.url;
    let method = init?.method ?? "GET";
    let body = init?.body ?? null;
    const baseHeaders = new Headers(init?.headers);
    for (let hop = 0; hop <= 8; hop++) {
      const parsed = new URL(url);
      records.push({ url, origin: parsed.origin, method });
      const headers = new Headers(baseHeaders);
      const cookie = cookieHeader(parsed.origin, parsed.pathname);
      if (cookie) headers.set("Cookie", cookie);
      const resp = await realFetch(url, { method, headers, body, redirect: "manual" });
      absorb(parsed.origin, resp.headers);
      const location = resp.headers.get("location");
      if (resp.status >= 300 && resp.status < 400 && location) {
        url = new URL(location, url).toString();
        if (resp.status !== 307 && resp.status !== 308) {
          method = "GET";
          body = null;
          baseHeaders.delete("Content-Type");
        }
        continue;
      }
      // expose the final URL the way a browser Response does
      Object.defineProperty(resp, "url", { value: url });
      return resp;
    }
    throw new TypeError("too many redirects");
  }

  globalThis.fetch = browserFetch as typeof fetch;
  return {
    records,
    requestsTo(origin: string): number {
      return records.filter((r) => r.origin === origin).length;
    },
    reset(): void {
      records.length = 0;
    },
    restore(): void {
      globalThis.fetch = realFetch;
    },
  };
}

/** Watches portlet slots and reports which mutated between marks. */
export function observeSlots(views: Map<string, { slot: HTMLElement }>): {
  mutatedSlots(): string[];
  mark(): void;
  disconnect(): void;
} {
  const counts = new Map<string, number>();
  const observers: MutationObserver[] = [];
  for (const [pid, view] of views) {
    counts.set(pid, 0);
    const observer = new MutationObserver((mutations) => {
      counts.set(pid, (counts.get(pid) ?? 0) + mutations.length);
    });
    observer.observe(view.slot, {
      childList: true,
      subtree: true,
      characterData: true,
      attributes: true,
    });
    observers.push(observer);
  }
  return {
    mutatedSlots(): string[] {
      return [...counts.entries()].filter(([, n]) => n > 0).map(([pid]) => pid).sort();
    },
    mark(): void {
      for (const pid of counts.keys()) counts.set(pid, 0);
    },
    disconnect(): void {
      for (const observer of observers) observer.disconnect();
    },
  };
}
