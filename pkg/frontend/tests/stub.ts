import type {
  AnnotationApi,
  BenchmarkManifest,
  DecisionPayload,
  NextTaskResponse,
  PostAggregate,
  ScorePayload,
  TaskView,
} from "../src/types.js";
import { ApiError } from "../src/api.js";

export const RELATION_CODES = [
  "xNeed", "xIntent", "xAttr", "xEffect", "xReact",
  "xWant", "oEffect", "oReact", "oWant", "Open",
];

export function makeTask(postId: string): TaskView {
  return {
    post_id: postId,
    text: `post ${postId}`,
    image_ref: null,
    intentions: RELATION_CODES.map((code) => ({
      relation: code,
      gloss: "gloss",
      text: `Prefix ${code} of ${postId}.`,
      stripped_text: `${code} of ${postId}.`,
    })),
  };
}

/** In-memory stand-in for the annotation server. */
export class StubApi implements AnnotationApi {
  scorePosts: ScorePayload[] = [];
  decisions: DecisionPayload[] = [];
  failNextScores = 0;
  queue: PostAggregate[] = [];
  reviewed = new Set<string>();
  private tasks: TaskView[];

  constructor(tasks: TaskView[] = [makeTask("p1")]) {
    this.tasks = [...tasks];
  }

  private totalPosts = -1;

  async nextTask(annotatorId: string): Promise<NextTaskResponse> {
    if (this.totalPosts < 0) this.totalPosts = this.tasks.length;
    const scored = this.totalPosts - this.tasks.length;
    const progress = { scored_posts: scored, total_posts: this.totalPosts };
    const task = this.tasks[0];
    if (!task) return { done: true, progress };
    void annotatorId;
    return { done: false, task, progress };
  }

  async submitScore(payload: ScorePayload): Promise<unknown> {
    if (this.failNextScores > 0) {
      this.failNextScores -= 1;
      throw new ApiError(0, "NetworkError", "connection reset");
    }
    this.scorePosts.push(payload);
    const task = this.tasks[0];
    if (task && task.post_id === payload.post_id) {
      const done = new Set(
        this.scorePosts
          .filter((s) => s.post_id === payload.post_id)
          .map((s) => s.relation),
      );
      if (done.size === task.intentions.length) this.tasks.shift();
    }
    return { ok: true };
  }

  async reviewQueue(): Promise<{ queue: PostAggregate[] }> {
    // the server only ever serves eligible & pending entries
    return {
      queue: this.queue.filter(
        (item) => item.eligible && item.review_status === "pending"
          && !this.reviewed.has(item.post_id),
      ),
    };
  }

  async submitDecision(payload: DecisionPayload): Promise<unknown> {
    if (this.reviewed.has(payload.post_id)) {
      throw new ApiError(409, "AlreadyReviewed", "already reviewed");
    }
    this.reviewed.add(payload.post_id);
    this.decisions.push(payload);
    return { ok: true };
  }

  async benchmarkManifest(): Promise<BenchmarkManifest> {
    const counts: Record<string, number> = {};
    for (const code of RELATION_CODES) counts[code] = 0;
    return { per_relation_counts: counts, total: 0 };
  }
}
