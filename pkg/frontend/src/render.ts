import {
  Cluster,
  ClustersPayload,
  DetailPayload,
  DIMENSIONS,
  RankingItem,
  RankingsPayload,
} from "./types.js";
import { ViewState } from "./viewstate.js";

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Render an API-provided number verbatim. This is the only path by which a
 * number reaches the page, so every displayed figure is byte-sourced from a
 * response; the UI never rounds, rescales, or recomputes.
 */
function raw(v: number | null | undefined): string {
  return v === null || v === undefined ? "–" : String(v);
}

export function renderOfflineBanner(): string {
  return `<div class="banner offline" role="alert">API unreachable — showing nothing rather than stale numbers.</div>`;
}

export function renderStaleBuildBanner(oldId: string, newId: string): string {
  return `<div class="banner stale" role="alert">Results refreshed: snapshot <code>${esc(oldId)}</code> was replaced by <code>${esc(newId)}</code>.</div>`;
}

export function renderNotFoundCard(code: string): string {
  return `<div class="card not-found">No language with code <code>${esc(code)}</code> in this snapshot.</div>`;
}

/** Rows surviving the client-side rank-range visibility filter.
 *  The ranks themselves are server-assigned; this only compares them. */
export function visibleItems(state: ViewState, items: RankingItem[]): RankingItem[] {
  return items.filter(
    (it) =>
      (state.rankMin === null || it.rank >= state.rankMin) &&
      (state.rankMax === null || it.rank <= state.rankMax),
  );
}

export function renderRankings(state: ViewState, payload: RankingsPayload): string {
  const toggles = DIMENSIONS.map(
    (d) =>
      `<button class="dim${d === state.dimension ? " active" : ""}" data-dim="${d}">${d}</button>`,
  ).join("");
  const rows = visibleItems(state, payload.items)
    .map(
      (it) => `<tr data-code="${esc(it.glottocode)}">
  <td class="rank">${raw(it.rank)}</td>
  <td class="name">${esc(it.name)}</td>
  <td class="speakers">${raw(it.n_speakers)}</td>
  <td class="overall">${raw(it.overall)}</td>
  <td>${raw(it.ai_resources)}</td>
  <td>${raw(it.socioeconomic)}</td>
  <td>${raw(it.digital_infrastructure)}</td>
</tr>`,
    )
    .join("\n");
  return `<section class="rankings" data-build="${esc(payload.build_id)}">
<nav class="dimensions">${toggles}</nav>
<table>
<thead><tr><th>rank</th><th>language</th><th>speakers</th><th>overall</th><th>AI</th><th>socio</th><th>infra</th></tr></thead>
<tbody>${rows}</tbody>
</table>
<footer class="total">total: <span class="total-count">${raw(payload.total)}</span></footer>
</section>`;
}

export function renderEmptyViewport(): string {
  return `<div class="map-empty">No languages in this viewport.</div>`;
}

export function renderCluster(c: Cluster): string {
  const single = c.count === 1;
  return `<button class="marker ${single ? "singleton" : "cluster"}" data-lat="${raw(c.lat)}" data-lon="${raw(c.lon)}" data-codes="${esc(c.sample_codes.join(" "))}">
<span class="count">${raw(c.count)}</span>
</button>`;
}

export function renderMap(payload: ClustersPayload): string {
  if (payload.clusters.length === 0) return renderEmptyViewport();
  const markers = payload.clusters.map(renderCluster).join("\n");
  return `<section class="map" data-build="${esc(payload.build_id)}">${markers}</section>`;
}

/**
 * Country comparison row. The "median" language is picked from the
 * server-sorted country listing (lower-middle element), so the numbers
 * shown are an actual API row, not a client-side aggregate.
 */
export function countryMedianItem(countryRanking: RankingsPayload): RankingItem | null {
  const items = countryRanking.items;
  if (items.length === 0) return null;
  return items[Math.floor((items.length - 1) / 2)];
}

export function renderDetail(detail: DetailPayload, countryRanking: RankingsPayload | null): string {
  const badges = detail.features
    .map((f) => {
      const badge = f.imputed
        ? ` <span class="badge imputed" title="imputed via ${esc(f.method ?? "?")}">imputed${
            f.donor ? ` from ${esc(f.donor)}` : ""
          }</span>`
        : "";
      return `<li class="feature"><span class="fid">${esc(f.feature_id)}</span> <span class="fval">${raw(f.value)}</span>${badge}</li>`;
    })
    .join("\n");
  const median = countryRanking ? countryMedianItem(countryRanking) : null;
  const comparison = median
    ? `<div class="country-median">country median (<code>${esc(median.glottocode)}</code>): overall ${raw(median.overall)}, AI ${raw(median.ai_resources)}, socio ${raw(median.socioeconomic)}, infra ${raw(median.digital_infrastructure)}</div>`
    : "";
  return `<aside class="detail" data-build="${esc(detail.build_id)}" data-code="${esc(detail.glottocode)}">
<h2>${esc(detail.name)}</h2>
<dl>
  <dt>rank</dt><dd>${raw(detail.rank)}</dd>
  <dt>tier</dt><dd>${raw(detail.tier)}</dd>
  <dt>overall</dt><dd>${raw(detail.overall)}</dd>
  <dt>AI resources</dt><dd>${raw(detail.ai_resources)}</dd>
  <dt>socioeconomic</dt><dd>${raw(detail.socioeconomic)}</dd>
  <dt>digital infrastructure</dt><dd>${raw(detail.digital_infrastructure)}</dd>
  <dt>binary penalty</dt><dd>${raw(detail.binary_penalty)}</dd>
  <dt>speakers</dt><dd>${raw(detail.n_speakers)}</dd>
  <dt>category</dt><dd>${detail.category === null ? "–" : esc(detail.category)}</dd>
</dl>
<ul class="features">${badges}</ul>
${comparison}
</aside>`;
}
