/** Payload shapes of the curation REST API. */

export type LayerCode = 'S' | 'I' | 'M' | 'E';

/** Display order matches the pipeline's canonical layer order. */
export const LAYER_CODES: readonly LayerCode[] = ['S', 'I', 'M', 'E'];

export const LAYER_LABELS: Record<LayerCode, string> = {
  S: 'Street',
  I: 'Infrastructure',
  M: 'Movable Objects',
  E: 'Environment',
};

export interface GoldLabel {
  anomalous: boolean;
  layers: string[];
  provenance: string;
}

export interface Verdict {
  anomalous: boolean;
  layers: string[];
  rationale: string;
  parse_status: string;
}

export interface Annotation {
  model: string;
  verdict: Verdict;
  scene: Record<string, string> | null;
  description: string | null;
}

export interface Item {
  id: string;
  image_url: string;
  review: string;
  gold: GoldLabel | null;
  annotation: Annotation | null;
  error: string | null;
  lease_seconds?: number;
}

export interface Progress {
  total: number;
  unreviewed: number;
  accepted: number;
  corrected: number;
  reviewed: number;
  per_reviewer: Record<string, number>;
}

export interface QueueResponse {
  item: Item | null;
  progress: Progress;
}

export interface CorrectedLabel {
  anomalous: boolean;
  layers: string[];
}

export interface ReviewBody {
  decision: 'accept' | 'correct';
  reviewer: string;
  corrected?: CorrectedLabel;
  descriptions?: Record<string, string>;
  note?: string;
}

export interface ReviewResponse {
  item: Item;
  progress: Progress;
}

export interface ApiError {
  error: string;
  rules?: string[];
}
