import { Dimension, DIMENSIONS } from "./types.js";

/** Everything needed to reproduce a view, shareable as a URL query string. */
export interface ViewState {
  dimension: Dimension;
  minSpeakers: number;
  /** Inclusive rank-range filter applied to the server-provided ranks. */
  rankMin: number | null;
  rankMax: number | null;
  country: string | null;
  /** Map viewport: [minLon, minLat, maxLon, maxLat]. */
  bbox: [number, number, number, number];
  zoom: number;
  selected: string | null;
  /** Snapshot build the current view was rendered from. */
  buildId: string | null;
}

export const WORLD_BBOX: [number, number, number, number] = [-180, -90, 180, 90];

export function defaultViewState(): ViewState {
  return {
    dimension: "overall",
    minSpeakers: 0,
    rankMin: null,
    rankMax: null,
    country: null,
    bbox: [...WORLD_BBOX],
    zoom: 2,
    selected: null,
    buildId: null,
  };
}

function isDimension(v: string): v is Dimension {
  return (DIMENSIONS as readonly string[]).includes(v);
}

/** Serialize to a query string; fields at their default value are omitted. */
export function toQuery(state: ViewState): string {
  const q = new URLSearchParams();
  if (state.dimension !== "overall") q.set("dim", state.dimension);
  if (state.minSpeakers !== 0) q.set("min_speakers", String(state.minSpeakers));
  if (state.rankMin !== null) q.set("rank_min", String(state.rankMin));
  if (state.rankMax !== null) q.set("rank_max", String(state.rankMax));
  if (state.country !== null) q.set("country", state.country);
  const def = WORLD_BBOX;
  if (state.bbox.some((v, i) => v !== def[i])) q.set("bbox", state.bbox.map(String).join(","));
  if (state.zoom !== 2) q.set("zoom", String(state.zoom));
  if (state.selected !== null) q.set("lang", state.selected);
  if (state.buildId !== null) q.set("build", state.buildId);
  return q.toString();
}

/** Parse a query string; unknown or malformed parameters fall back to defaults. */
export function fromQuery(query: string): ViewState {
  const q = new URLSearchParams(query);
  const state = defaultViewState();
  const dim = q.get("dim");
  if (dim !== null && isDimension(dim)) state.dimension = dim;
  const num = (key: string): number | null => {
    const raw = q.get(key);
    if (raw === null || raw === "") return null;
    const v = Number(raw);
    return Number.isFinite(v) ? v : null;
  };
  state.minSpeakers = num("min_speakers") ?? 0;
  state.rankMin = num("rank_min");
  state.rankMax = num("rank_max");
  state.country = q.get("country");
  const bbox = q.get("bbox");
  if (bbox !== null) {
    const parts = bbox.split(",").map(Number);
    if (parts.length === 4 && parts.every(Number.isFinite)) {
      state.bbox = [parts[0], parts[1], parts[2], parts[3]];
    }
  }
  state.zoom = num("zoom") ?? 2;
  state.selected = q.get("lang");
  state.buildId = q.get("build");
  return state;
}
