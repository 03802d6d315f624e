import {
  ClustersPayload,
  DetailPayload,
  Dimension,
  RankingsPayload,
} from "./types.js";

export type FetchLike = (url: string) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class NotFound extends ApiError {
  constructor(message: string) {
    super(404, message);
  }
}

export interface RankingsQuery {
  dimension?: Dimension;
  minSpeakers?: number;
  country?: string | null;
  limit?: number;
  offset?: number;
}

/**
 * Thin read-only client for the /v1 API. All numbers shown anywhere in the
 * UI come out of these responses untouched; the client never computes
 * scores, ranks, or counts.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url) => fetch(url),
  ) {}

  private async get<T>(path: string, params: Record<string, string>): Promise<T> {
    const q = new URLSearchParams(params).toString();
    const url = `${this.baseUrl}${path}${q ? `?${q}` : ""}`;
    const res = await this.fetchImpl(url);
    if (res.status === 404) throw new NotFound(path);
    if (!res.ok) throw new ApiError(res.status, `${path} failed with ${res.status}`);
    return (await res.json()) as T;
  }

  rankings(query: RankingsQuery = {}): Promise<RankingsPayload> {
    const params: Record<string, string> = {};
    if (query.dimension) params.dimension = query.dimension;
    if (query.minSpeakers) params.min_speakers = String(query.minSpeakers);
    if (query.country) params.country = query.country;
    if (query.limit !== undefined) params.limit = String(query.limit);
    if (query.offset !== undefined) params.offset = String(query.offset);
    return this.get<RankingsPayload>("/v1/languages", params);
  }

  detail(glottocode: string): Promise<DetailPayload> {
    return this.get<DetailPayload>(`/v1/languages/${glottocode}`, {});
  }

  clusters(bbox: [number, number, number, number], zoom: number): Promise<ClustersPayload> {
    return this.get<ClustersPayload>("/v1/map/clusters", {
      bbox: bbox.map(String).join(","),
      zoom: String(zoom),
    });
  }
}
