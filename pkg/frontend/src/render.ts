import type { ScoreFlow } from "./scoring.js";
import type { ReviewFlow } from "./review.js";
import type { PostAggregate, Score } from "./types.js";

const SCORE_LABELS: ReadonlyArray<[Score, string, string]> = [
  [1, "1", "high typicality"],
  [0, "0", "low typicality"],
  [-1, "-1", "implausible"],
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderScoreView(
  root: HTMLElement,
  flow: ScoreFlow,
  hooks: { onChange(): void; onSubmit(): void },
): void {
  root.replaceChildren();

  if (flow.state === "loading") {
    root.append(el("p", "status", "Loading next post…"));
    return;
  }
  if (flow.state === "done") {
    const done = el("div", "done-screen");
    done.append(el("h2", undefined, "All done"));
    done.append(el("p", undefined,
      `You scored ${flow.progress.scored_posts} of ${flow.progress.total_posts} posts.`));
    root.append(done);
    return;
  }
  const task = flow.task;
  if (!task) return;

  const header = el("div", "task-header");
  header.append(el("span", "progress",
    `Post ${flow.progress.scored_posts + 1} / ${flow.progress.total_posts}`));
  root.append(header);

  const postBox = el("div", "post-box");
  postBox.append(el("p", "post-text", task.text));
  if (task.image_ref) {
    const image = el("img", "post-image");
    image.src = `/images/${task.image_ref}`;
    image.alt = "post image";
    image.onerror = () => image.remove();
    postBox.append(image);
  }
  root.append(postBox);

  const list = el("div", "intention-list");
  task.intentions.forEach((item, index) => {
    const row = el("div", "intention-row" +
      (index === flow.currentIndex ? " current" : ""));
    row.append(el("span", "relation-code", item.relation));
    row.append(el("span", "relation-gloss", item.gloss));
    row.append(el("span", "intention-text", item.text));
    const buttons = el("span", "score-buttons");
    for (const [value, label, title] of SCORE_LABELS) {
      const button = el("button",
        "score-button" + (flow.selection(item.relation) === value ? " selected" : ""),
        label);
      button.title = title;
      button.onclick = () => {
        flow.select(item.relation, value);
        flow.currentIndex = index;
        hooks.onChange();
      };
      buttons.append(button);
    }
    row.append(buttons);
    list.append(row);
  });
  root.append(list);

  if (flow.state === "error" && flow.lastError) {
    const banner = el("div", "error-banner");
    banner.append(el("span", undefined, `Submission failed: ${flow.lastError}`));
    const retry = el("button", "retry-button", "Retry");
    retry.onclick = hooks.onSubmit;
    banner.append(retry);
    root.append(banner);
  }

  const submit = el("button", "submit-button", "Submit post");
  submit.disabled = !flow.complete || flow.state === "submitting";
  submit.onclick = hooks.onSubmit;
  root.append(submit);
  root.append(el("p", "hint",
    "Keys: 1 high, 0 low, - implausible; arrows move; Enter submits."));
}

export function renderReviewView(
  root: HTMLElement,
  flow: ReviewFlow,
  relationCodes: string[],
  hooks: { onDecide(postId: string, decision: "admit" | "reject", excluded: string[]): void },
): void {
  root.replaceChildren();

  if (flow.state === "loading") {
    root.append(el("p", "status", "Loading review queue…"));
    return;
  }
  if (flow.queue.length === 0) {
    root.append(el("p", "status", "Review queue is empty."));
    return;
  }

  for (const aggregate of flow.queue) {
    root.append(renderQueueEntry(flow, aggregate, relationCodes, hooks));
  }
}

function renderQueueEntry(
  flow: ReviewFlow,
  aggregate: PostAggregate,
  relationCodes: string[],
  hooks: { onDecide(postId: string, decision: "admit" | "reject", excluded: string[]): void },
): HTMLElement {
  const entry = el("div", "queue-entry");
  entry.dataset.postId = aggregate.post_id;
  const head = el("div", "queue-head");
  head.append(el("strong", undefined, aggregate.post_id));
  head.append(el("span", "total", `total ${aggregate.total}`));
  entry.append(head);

  const means = el("div", "relation-means");
  const excludable = new Set(flow.excludableRelations(aggregate, relationCodes));
  const checkboxes = new Map<string, HTMLInputElement>();
  for (const code of relationCodes) {
    const cell = el("label", "mean-cell");
    const mean = aggregate.per_relation_score[code];
    cell.append(el("span", undefined, `${code}: ${mean === undefined ? "–" : mean}`));
    if (excludable.has(code)) {
      const box = el("input") as HTMLInputElement;
      box.type = "checkbox";
      box.title = "exclude from benchmark";
      checkboxes.set(code, box);
      cell.append(box);
    }
    means.append(cell);
  }
  entry.append(means);

  const actions = el("div", "queue-actions");
  const excluded = () =>
    [...checkboxes.entries()].filter(([, box]) => box.checked).map(([code]) => code);
  const admit = el("button", "admit-button", "Admit");
  admit.onclick = () => hooks.onDecide(aggregate.post_id, "admit", excluded());
  const reject = el("button", "reject-button", "Reject");
  reject.onclick = () => hooks.onDecide(aggregate.post_id, "reject", []);
  actions.append(admit, reject);
  entry.append(actions);
  return entry;
}
