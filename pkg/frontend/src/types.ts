/** Wire types mirroring the annotation server's JSON API. */

export type Score = -1 | 0 | 1;

export interface IntentionItem {
  relation: string;
  gloss: string;
  text: string;
  stripped_text: string;
  provenance?: Record<string, unknown>;
}

export interface TaskView {
  post_id: string;
  text: string;
  image_ref: string | null;
  dataset?: string;
  intentions: IntentionItem[];
}

export interface Progress {
  scored_posts: number;
  total_posts: number;
}

export interface NextTaskResponse {
  done: boolean;
  task?: TaskView;
  progress: Progress;
}

export interface ScorePayload {
  post_id: string;
  relation: string;
  annotator_id: string;
  value: Score;
}

export interface PostAggregate {
  post_id: string;
  per_relation_score: Record<string, number>;
  total: number;
  eligible: boolean;
  review_status: string;
}

export interface DecisionPayload {
  post_id: string;
  decision: "admit" | "reject";
  reviewer_id: string;
  excluded_relations?: string[];
}

export interface BenchmarkManifest {
  per_relation_counts: Record<string, number>;
  total: number;
  average?: number;
  admitted_posts?: number;
}

/** The surface the flows depend on; implemented by ApiClient and test stubs. */
export interface AnnotationApi {
  nextTask(annotatorId: string): Promise<NextTaskResponse>;
  submitScore(payload: ScorePayload): Promise<unknown>;
  reviewQueue(): Promise<{ queue: PostAggregate[] }>;
  submitDecision(payload: DecisionPayload): Promise<unknown>;
  benchmarkManifest(): Promise<BenchmarkManifest>;
}
