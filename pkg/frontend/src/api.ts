/**
 * Portal server API client plus the page fetcher with its automatic
 * per-origin relay fallback (used when a source site's CORS policy blocks
 * direct browser access; a banner discloses it because relayed traffic
 * flows through the portal server).
 */

export interface RefreshPolicy {
  interval_seconds: number;
  policy: "manual" | "interval";
}

export interface PortletJson {
  title: string;
  source_url: string;
  clip_rules: import("./clip.js").RuleJson[];
  workflow: WorkflowStepJson[];
  credential_ref: string | null;
  refresh: RefreshPolicy;
  sanitize_policy: "strict" | "trusted";
  mode: string;
  window_state: "normal" | "minimized" | "maximized";
}

export interface WorkflowStepJson {
  step: "get" | "submit_form" | "follow_link" | "clip";
  url?: string;
  form_path?: string;
  fields?: Record<string, string>;
  link_path?: string;
}

export interface DescriptorJson {
  portal_id: string;
  title: string;
  version: number;
  layout: string[][];
  portlets: Record<string, PortletJson>;
}

export interface CredentialJson {
  service_id: string;
  username: string;
  password: string;
  extra_fields: Record<string, string>;
}

export interface FetchedPage {
  status: number;
  url: string;
  text: string;
  viaRelay: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class PortalApi {
  token: string | null = null;
  readonly relayOrigins = new Set<string>();
  onRelayEngaged: ((origin: string) => void) | null = null;

  constructor(readonly serverUrl: string) {}

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await fetch(this.serverUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const payload = (await resp.json()) as { error?: string; detail?: string };
        detail = payload.error ?? detail;
      } catch {
        // non-JSON error body
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  async login(user: string, pass: string): Promise<void> {
    const payload = await this.json<{ token: string }>("POST", "/api/login", { user, pass });
    this.token = payload.token;
  }

  descriptor(portalId: string): Promise<DescriptorJson> {
    return this.json<DescriptorJson>("GET", `/api/portal/${portalId}/descriptor`);
  }

  credentials(portalId: string, portletId: string): Promise<CredentialJson> {
    return this.json<CredentialJson>("GET", `/api/portal/${portalId}/credentials/${portletId}`);
  }

  relayUrl(target: string): string {
    return `${this.serverUrl}/api/relay?target=${encodeURIComponent(target)}`;
  }

  /**
   * Fetch a producer page: direct mode first (browser carries the source
   * site's cookies), relay fallback per origin after a network/CORS
   * failure. Returns the final URL so clip rules can rebase links.
   */
  async fetchPage(url: string, init?: { method?: string; body?: string }): Promise<FetchedPage> {
    const origin = new URL(url).origin;
    if (!this.relayOrigins.has(origin)) {
      try {
        return await this.directFetch(url, init);
      } catch (err) {
        if (!(err instanceof TypeError)) throw err;
        // network-level failure: engage the relay for this origin
        this.relayOrigins.add(origin);
        this.onRelayEngaged?.(origin);
      }
    }
    return this.relayFetch(url, init);
  }

  private async directFetch(url: string, init?: { method?: string; body?: string }): Promise<FetchedPage> {
    const resp = await fetch(url, {
      method: init?.method ?? "GET",
      body: init?.body,
      headers: init?.body !== undefined
        ? { "Content-Type": "application/x-www-form-urlencoded" }
        : undefined,
      credentials: "include",
      redirect: "follow",
    });
    return { status: resp.status, url: resp.url || url, text: await resp.text(), viaRelay: false };
  }

  private async relayFetch(url: string, init?: { method?: string; body?: string }): Promise<FetchedPage> {
    let current = url;
    let method = init?.method ?? "GET";
    let body = init?.body;
    for (let hop = 0; hop <= 5; hop++) {
      const headers: Record<string, string> = {};
      if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
      if (body !== undefined) headers["Content-Type"] = "application/x-www-form-urlencoded";
      const resp = await fetch(this.relayUrl(current), {
        method,
        headers,
        body,
        credentials: "include",
        redirect: "follow",
      });
      const location = resp.headers.get("Location");
      if (resp.status >= 300 && resp.status < 400 && location && hop < 5) {
        current = new URL(location, current).toString();
        method = "GET";
        body = undefined;
        continue;
      }
      const finalUrl = resp.headers.get("X-Relay-Final-Url") ?? current;
      return { status: resp.status, url: finalUrl, text: await resp.text(), viaRelay: true };
    }
    throw new ApiError(508, "too many redirects through the relay");
  }
}
