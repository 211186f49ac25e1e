/** Page bootstrap: login form wiring around PortalPage. */

import { ApiError } from "./api.js";
import { PortalPage } from "./portal.js";

function query(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

export function wireLoginForm(doc: Document = document): void {
  const form = doc.getElementById("login-form") as HTMLFormElement | null;
  if (!form) return;
  const errorBox = doc.getElementById("login-error")!;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    errorBox.textContent = "";
    const user = (doc.getElementById("login-user") as HTMLInputElement).value;
    const pass = (doc.getElementById("login-pass") as HTMLInputElement).value;
    const portalId = query("portal", "campus");
    const serverUrl = window.location.origin;
    const page = new PortalPage(serverUrl, portalId, doc.getElementById("portal-root")!);
    page
      .boot(user, pass)
      .then(() => {
        (doc.getElementById("login-box") as HTMLElement).style.display = "none";
      })
      .catch((err: unknown) => {
        errorBox.textContent =
          err instanceof ApiError && err.status === 401
            ? "wrong portal user or password"
            : `login failed: ${err instanceof Error ? err.message : String(err)}`;
      });
  });
}

if (typeof document !== "undefined" && document.getElementById("login-form")) {
  wireLoginForm(document);
}
