import { ConsoleApp } from "./app.js";
import { GatewayClient } from "./gateway.js";
import type { ConsoleConfig } from "./types.js";

/**
 * Resolve configuration from the page URL.
 *
 *   ?gateway=http://host:port   gateway origin (default: this host, :18830)
 *   ?credential=...             write credential (default: epic-operator)
 *   ?operator=...               name recorded on the ledger
 *   ?debug=1                    enable the ground-truth comparison view
 *   ?truth=URL                  truth document location (default: /truth on
 *                               the origin serving this page, i.e. the
 *                               harness — only read when debug is on)
 */
export function resolveConfig(href: string): ConsoleConfig {
  const url = new URL(href);
  const q = url.searchParams;
  const debug = q.get("debug") === "1" || q.get("debug") === "true";
  return {
    gatewayBase: q.get("gateway") ?? `${url.protocol}//${url.hostname}:18830`,
    credential: q.get("credential") ?? "epic-operator",
    operator: q.get("operator") ?? "console",
    truthUrl: debug ? (q.get("truth") ?? `${url.origin}/truth`) : "",
    debug,
  };
}

function boot(): void {
  const root = document.getElementById("console");
  if (!root) throw new Error("missing #console mount point");
  const config = resolveConfig(window.location.href);
  const client = new GatewayClient(config);
  const app = new ConsoleApp(root, client, { debug: config.debug });
  app.start();
  window.addEventListener("beforeunload", () => app.stop());
}

if (typeof document !== "undefined" && document.getElementById("console")) {
  boot();
}
