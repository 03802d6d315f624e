import { ApiClient } from "./api.js";
import { Controller } from "./controller.js";
import { fromQuery, toQuery, ViewState } from "./viewstate.js";
import { Dimension } from "./types.js";

declare const API_BASE_URL: string | undefined;

/** Browser entry point: wires the controller to the DOM and keeps the
 *  ViewState synchronized with the URL so every view is shareable. */
export function mount(root: HTMLElement, baseUrl?: string): void {
  const api = new ApiClient(
    baseUrl ?? (typeof API_BASE_URL !== "undefined" ? API_BASE_URL : ""),
  );
  const controller = new Controller(api);
  let state: ViewState = fromQuery(window.location.search.replace(/^\?/, ""));

  const redraw = () => {
    const r = controller.render(state);
    root.innerHTML = `${r.banner}\n${r.rankings}\n${r.map}\n${r.detail}`;
  };

  const apply = async (next: ViewState, push: boolean) => {
    state = next;
    if (push) {
      const q = toQuery(state);
      window.history.pushState(null, "", q ? `?${q}` : window.location.pathname);
    }
    await controller.refresh(state);
    state.buildId = controller.activeBuildId;
    redraw();
  };

  root.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const dimBtn = target.closest<HTMLElement>("button.dim");
    if (dimBtn?.dataset.dim) {
      void apply({ ...state, dimension: dimBtn.dataset.dim as Dimension }, true);
      return;
    }
    const row = target.closest<HTMLElement>("tr[data-code]");
    if (row?.dataset.code) {
      void apply({ ...state, selected: row.dataset.code }, true);
      return;
    }
    const marker = target.closest<HTMLElement>("button.marker");
    if (marker) {
      const codes = (marker.dataset.codes ?? "").split(" ").filter(Boolean);
      if (marker.classList.contains("singleton") && codes.length === 1) {
        void apply({ ...state, selected: codes[0] }, true);
      } else {
        const lat = Number(marker.dataset.lat);
        const lon = Number(marker.dataset.lon);
        const span = 180 / 2 ** state.zoom;
        void apply(
          {
            ...state,
            zoom: state.zoom + 1,
            bbox: [
              Math.max(-180, lon - span),
              Math.max(-90, lat - span),
              Math.min(180, lon + span),
              Math.min(90, lat + span),
            ],
          },
          true,
        );
      }
    }
  });

  window.addEventListener("popstate", () => {
    void apply(fromQuery(window.location.search.replace(/^\?/, "")), false);
  });

  void apply(state, false);
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) mount(root);
}
