import { ApiError } from "./api.js";
import type { AnnotationApi, PostAggregate } from "./types.js";

export type ReviewFlowState = "loading" | "ready" | "error";

/**
 * Stage-2 review: the queue holds eligible, still-pending posts (the
 * server filters); admit/reject removes the post locally. A conflict
 * (someone else reviewed it first) refreshes the queue instead of
 * surfacing an error.
 */
export class ReviewFlow {
  queue: PostAggregate[] = [];
  state: ReviewFlowState = "loading";
  lastError: string | null = null;

  constructor(
    private readonly api: AnnotationApi,
    readonly reviewerId: string,
  ) {}

  async refresh(): Promise<void> {
    this.state = "loading";
    this.lastError = null;
    const resp = await this.api.reviewQueue();
    this.queue = resp.queue;
    this.state = "ready";
  }

  /** Relations the reviewer may exclude: mean score below 1 (unscored counts as 0). */
  excludableRelations(aggregate: PostAggregate, relations: string[]): string[] {
    return relations.filter(
      (code) => (aggregate.per_relation_score[code] ?? 0) < 1,
    );
  }

  async decide(
    postId: string,
    decision: "admit" | "reject",
    excludedRelations: string[] = [],
  ): Promise<void> {
    try {
      await this.api.submitDecision({
        post_id: postId,
        decision,
        reviewer_id: this.reviewerId,
        excluded_relations: excludedRelations,
      });
      this.queue = this.queue.filter((item) => item.post_id !== postId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return;
      }
      this.state = "error";
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    }
  }
}
