import { ApiClient, NotFound } from "./api.js";
import {
  renderDetail,
  renderMap,
  renderNotFoundCard,
  renderOfflineBanner,
  renderRankings,
  renderStaleBuildBanner,
} from "./render.js";
import { ClustersPayload, DetailPayload, RankingsPayload } from "./types.js";
import { ViewState } from "./viewstate.js";

export interface Rendered {
  banner: string;
  rankings: string;
  map: string;
  detail: string;
}

/**
 * View orchestration: issues API fetches for the current ViewState,
 * discards stale responses (a newer request for the same view wins), and
 * reconciles builds — when the server swaps to a new snapshot mid-session a
 * banner announces it and the view re-adopts the new build wholesale.
 */
export class Controller {
  private seq = { rankings: 0, map: 0, detail: 0 };
  private latest: {
    rankings: RankingsPayload | null;
    map: ClustersPayload | null;
    detail: DetailPayload | null;
    countryRanking: RankingsPayload | null;
  } = { rankings: null, map: null, detail: null, countryRanking: null };
  private notFoundCode: string | null = null;
  private offline = false;
  private staleFrom: string | null = null;
  activeBuildId: string | null = null;

  constructor(private readonly api: ApiClient) {}

  private adoptBuild(buildId: string): void {
    if (this.activeBuildId === null) {
      this.activeBuildId = buildId;
    } else if (this.activeBuildId !== buildId) {
      this.staleFrom = this.activeBuildId;
      this.activeBuildId = buildId;
    }
  }

  async refresh(state: ViewState): Promise<void> {
    this.offline = false;
    const rankingsSeq = ++this.seq.rankings;
    const mapSeq = ++this.seq.map;
    const detailSeq = ++this.seq.detail;
    try {
      const [rankings, map] = await Promise.all([
        this.api.rankings({
          dimension: state.dimension,
          minSpeakers: state.minSpeakers,
          country: state.country,
        }),
        this.api.clusters(state.bbox, state.zoom),
      ]);
      if (rankingsSeq === this.seq.rankings) {
        this.latest.rankings = rankings;
        this.adoptBuild(rankings.build_id);
      }
      if (mapSeq === this.seq.map) {
        this.latest.map = map;
        this.adoptBuild(map.build_id);
      }
    } catch {
      this.offline = true;
      return;
    }

    this.notFoundCode = null;
    this.latest.detail = null;
    this.latest.countryRanking = null;
    if (state.selected !== null) {
      try {
        const detail = await this.api.detail(state.selected);
        const countryRanking = await this.api.rankings({
          dimension: state.dimension,
          country: detail.country,
        });
        if (detailSeq === this.seq.detail) {
          this.latest.detail = detail;
          this.latest.countryRanking = countryRanking;
          this.adoptBuild(detail.build_id);
        }
      } catch (err) {
        if (err instanceof NotFound) {
          this.notFoundCode = state.selected;
        } else {
          this.offline = true;
        }
      }
    }
  }

  /** Sum of cluster counts vs the unfiltered rankings total; a mismatch
   *  means the two views came from different builds mid-swap. */
  countsReconcile(): boolean {
    if (this.latest.rankings === null || this.latest.map === null) return true;
    if (this.latest.rankings.build_id !== this.latest.map.build_id) return false;
    const visible = this.latest.map.clusters.reduce((acc, c) => acc + c.count, 0);
    return visible <= this.latest.rankings.total;
  }

  render(state: ViewState): Rendered {
    if (this.offline) {
      return { banner: renderOfflineBanner(), rankings: "", map: "", detail: "" };
    }
    let banner = "";
    if (this.staleFrom !== null && this.activeBuildId !== null) {
      banner = renderStaleBuildBanner(this.staleFrom, this.activeBuildId);
    }
    const detail =
      this.notFoundCode !== null
        ? renderNotFoundCard(this.notFoundCode)
        : this.latest.detail !== null
          ? renderDetail(this.latest.detail, this.latest.countryRanking)
          : "";
    return {
      banner,
      rankings: this.latest.rankings ? renderRankings(state, this.latest.rankings) : "",
      map: this.latest.map ? renderMap(this.latest.map) : "",
      detail,
    };
  }
}
