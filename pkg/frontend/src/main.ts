/**
 * App shell: top menu bar switching between the four views, each rendered
 * into the shared content host.
 */

import { ApiClient } from "./api.js";
import { LoopController } from "./loop.js";
import { Store, type ViewName } from "./state.js";
import {
  renderDataView,
  renderModelView,
  renderResultsView,
  renderSynthesisView,
  type ViewContext,
} from "./views.js";

const VIEWS: { name: ViewName; title: string }[] = [
  { name: "synthesis", title: "Synthesis" },
  { name: "data", title: "Data" },
  { name: "model", title: "Model" },
  { name: "results", title: "Results" },
];

export function mountApp(root: HTMLElement, baseUrl: string): ViewContext {
  const api = new ApiClient(baseUrl);
  const store = new Store();
  const loop = new LoopController(api, store);
  const ctx: ViewContext = { api, store, loop };

  const menu = document.createElement("nav");
  const content = document.createElement("main");
  root.replaceChildren(menu, content);

  const render = () => {
    const view = store.get().view;
    menu.replaceChildren(
      ...VIEWS.map(({ name, title }) => {
        const button = document.createElement("button");
        button.textContent = title;
        button.className = name === view ? "active" : "";
        button.addEventListener("click", () => store.update({ view: name }));
        return button;
      }),
    );
    if (view === "synthesis") renderSynthesisView(content, ctx);
    else if (view === "data") renderDataView(content, ctx);
    else if (view === "model") renderModelView(content, ctx);
    else renderResultsView(content, ctx);
  };

  let lastView = store.get().view;
  store.subscribe((state) => {
    if (state.view !== lastView) {
      lastView = state.view;
      render();
    }
  });
  render();
  return ctx;
}

declare global {
  interface Window {
    igaiva?: ViewContext;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = new URLSearchParams(location.search).get("api") ?? location.origin;
  window.igaiva = mountApp(document.getElementById("app")!, base);
}
