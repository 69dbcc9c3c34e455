/**
 * Browser entry point. Reads the service URL and policy name from query
 * parameters, opens a session against the discovered defaults, and wires
 * click delegation plus refetch-on-focus. All state lives in the
 * Workbench; this file only moves DOM events in and HTML out.
 *
 *   index.html?api=http://127.0.0.1:8640&policy=net_comp
 */

import { ApiClient } from "./api.js";
import { Workbench } from "./workbench.js";

export async function mount(root: HTMLElement): Promise<Workbench> {
  const params = new URLSearchParams(window.location.search);
  const apiUrl = params.get("api") ?? "http://127.0.0.1:8640";
  const policyName = params.get("policy") ?? "net_comp";

  const client = new ApiClient(apiUrl);
  const defaults = await client.defaults();
  const policyDoc = defaults.policies?.[policyName];
  if (policyDoc === undefined) {
    const known = Object.keys(defaults.policies ?? {}).join(", ") || "none";
    root.innerHTML = `<div class="banner error">unknown policy "${policyName}"; service offers: ${known}</div>`;
    throw new Error(`unknown policy ${policyName}`);
  }

  const workbench = new Workbench(client, { policy: policyDoc });
  workbench.subscribe(() => {
    root.innerHTML = workbench.render();
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const commitLabel = target.getAttribute("data-commit");
    if (commitLabel !== null) void workbench.commit(commitLabel);
    else if (target.hasAttribute("data-undo")) void workbench.undo();
    else if (target.hasAttribute("data-refresh")) void workbench.refresh();
  });
  window.addEventListener("focus", () => {
    if (workbench.state.phase === "ready") void workbench.refresh();
  });

  await workbench.open();
  return workbench;
}

// Auto-mount when loaded as a page script; tests import the modules only.
if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root !== null) {
    void mount(root).catch((err) => {
      console.error("workbench failed to start", err);
    });
  }
}
