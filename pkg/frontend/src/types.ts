/** Payload shapes of the /v1 readiness-index API. */

export type Dimension = "overall" | "ai" | "socio" | "infra";

export const DIMENSIONS: readonly Dimension[] = ["overall", "ai", "socio", "infra"];

export interface RankingItem {
  glottocode: string;
  name: string;
  n_speakers: number;
  country: string;
  macroarea: string;
  overall: number;
  ai_resources: number | null;
  socioeconomic: number | null;
  digital_infrastructure: number | null;
  binary_penalty: number;
  rank: number;
  tier: number;
  category: string | null;
}

export interface RankingsPayload {
  build_id: string;
  total: number;
  offset: number;
  items: RankingItem[];
}

export interface FeatureCell {
  feature_id: string;
  value: number;
  imputed: boolean;
  method?: string;
  donor?: string | null;
}

export interface DetailPayload extends RankingItem {
  centroid_lat: number;
  centroid_lon: number;
  family: string;
  vitality: string;
  is_dead: boolean;
  features: FeatureCell[];
  build_id: string;
}

export interface Cluster {
  lat: number;
  lon: number;
  count: number;
  sample_codes: string[];
}

export interface ClustersPayload {
  build_id: string;
  clusters: Cluster[];
}
