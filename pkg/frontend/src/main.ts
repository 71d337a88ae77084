/* Browser bootstrap.  The API origin defaults to same-origin and can be
   overridden with ?api=http://host:port when the bundle is served from a
   separate static host.  cards.json sits next to index.html. */

import { AdvisorClient, fetchTransport } from "./api.js";
import { App } from "./app.js";
import type { CardInfo } from "./types.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
  const catalog = (await (await fetch("cards.json")).json()) as CardInfo[];
  const app = new App(root, new AdvisorClient(fetchTransport(apiBase)), catalog);
  await app.start();
}

void boot();
