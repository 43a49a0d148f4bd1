import type { AnnotationApi, Progress, Score, TaskView } from "./types.js";

export type ScoreFlowState = "loading" | "scoring" | "submitting" | "done" | "error";

const VALID_SCORES: readonly Score[] = [-1, 0, 1];

/**
 * Drives one annotator's scoring session.
 *
 * Every outgoing value maps 1:1 to a user selection and is one of
 * {-1, 0, 1}; submit only activates once all rows have a selection.
 * Submission posts one score per relation; on a network failure the
 * flow keeps the selections (and which relations already went through),
 * so retrying never double-posts or loses work.
 */
export class ScoreFlow {
  task: TaskView | null = null;
  state: ScoreFlowState = "loading";
  progress: Progress = { scored_posts: 0, total_posts: 0 };
  lastError: string | null = null;
  currentIndex = 0;

  private selections = new Map<string, Score>();
  private submitted = new Set<string>();

  constructor(
    private readonly api: AnnotationApi,
    readonly annotatorId: string,
  ) {}

  async loadNext(): Promise<void> {
    this.state = "loading";
    this.lastError = null;
    const resp = await this.api.nextTask(this.annotatorId);
    this.progress = resp.progress;
    if (resp.done || !resp.task) {
      this.task = null;
      this.state = "done";
      return;
    }
    this.task = resp.task;
    this.selections.clear();
    this.submitted.clear();
    this.currentIndex = 0;
    this.state = "scoring";
  }

  selection(relation: string): Score | undefined {
    return this.selections.get(relation);
  }

  select(relation: string, value: Score): void {
    if (!this.task || !VALID_SCORES.includes(value)) return;
    if (!this.task.intentions.some((item) => item.relation === relation)) return;
    this.selections.set(relation, value);
  }

  /** Keyboard path: score the highlighted row, then advance. */
  selectCurrent(value: Score): void {
    if (!this.task) return;
    const item = this.task.intentions[this.currentIndex];
    if (!item) return;
    this.select(item.relation, value);
    if (this.currentIndex < this.task.intentions.length - 1) {
      this.currentIndex += 1;
    }
  }

  moveCursor(delta: number): void {
    if (!this.task) return;
    const max = this.task.intentions.length - 1;
    this.currentIndex = Math.min(max, Math.max(0, this.currentIndex + delta));
  }

  get complete(): boolean {
    return this.task !== null && this.selections.size === this.task.intentions.length;
  }

  async submit(): Promise<void> {
    if (!this.task || !this.complete || this.state === "submitting") return;
    this.state = "submitting";
    this.lastError = null;
    for (const item of this.task.intentions) {
      if (this.submitted.has(item.relation)) continue;
      const value = this.selections.get(item.relation);
      if (value === undefined) continue;
      try {
        await this.api.submitScore({
          post_id: this.task.post_id,
          relation: item.relation,
          annotator_id: this.annotatorId,
          value,
        });
        this.submitted.add(item.relation);
      } catch (err) {
        // selections and submitted set stay intact for the retry banner
        this.state = "error";
        this.lastError = err instanceof Error ? err.message : String(err);
        return;
      }
    }
    await this.loadNext();
  }
}
