/** Entry point: wire the API client, session controller, and renderer. */

import { ApiClient } from "./api.js";
import { SessionController } from "./session.js";
import { renderApp } from "./render.js";

const params = new URLSearchParams(window.location.search);
const worker = params.get("worker") ?? "anonymous";
const size = Number(params.get("size") ?? "20");
const base = params.get("api") ?? "";

const client = new ApiClient(base);
const controller = new SessionController(client);

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
renderApp(root, controller, client);

controller.start(worker, size).catch((err) => {
  root.innerHTML = `<p class="error">cannot start session: ${String(err)}</p>`;
});
