import { ApiClient } from "./api.js";
import { bindHotkeys } from "./hotkeys.js";
import { renderReviewView, renderScoreView } from "./render.js";
import { ReviewFlow } from "./review.js";
import { ScoreFlow } from "./scoring.js";

const RELATION_CODES = [
  "xNeed", "xIntent", "xAttr", "xEffect", "xReact",
  "xWant", "oEffect", "oReact", "oWant", "Open",
];

const api = new ApiClient("");
const app = document.getElementById("app");

function readIdentity(): { id: string; role: string } | null {
  const params = new URLSearchParams(window.location.search);
  const id = params.get("annotator") ?? params.get("reviewer");
  if (!id) return null;
  return { id, role: params.get("reviewer") ? "review" : "score" };
}

function renderLanding(root: HTMLElement): void {
  root.replaceChildren();
  const form = document.createElement("form");
  form.className = "landing";
  form.innerHTML = `
    <h2>Intention annotation</h2>
    <label>Your id <input name="id" required placeholder="annotator id"></label>
    <label><input type="radio" name="role" value="score" checked> score intentions</label>
    <label><input type="radio" name="role" value="review"> review queue</label>
    <button type="submit">Start</button>`;
  form.onsubmit = (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const id = String(data.get("id") ?? "").trim();
    if (!id) return;
    const key = data.get("role") === "review" ? "reviewer" : "annotator";
    window.location.search = `?${key}=${encodeURIComponent(id)}`;
  };
  root.append(form);
}

async function startScoring(root: HTMLElement, annotatorId: string): Promise<void> {
  const flow = new ScoreFlow(api, annotatorId);
  const redraw = () => renderScoreView(root, flow, {
    onChange: redraw,
    onSubmit: () => { void submit(); },
  });
  const submit = async () => {
    await flow.submit();
    redraw();
  };
  bindHotkeys(window, {
    score: (value) => { flow.selectCurrent(value); redraw(); },
    move: (delta) => { flow.moveCursor(delta); redraw(); },
    submit: () => { void submit(); },
  });
  redraw();
  await flow.loadNext();
  redraw();
}

async function startReview(root: HTMLElement, reviewerId: string): Promise<void> {
  const flow = new ReviewFlow(api, reviewerId);
  const redraw = () => renderReviewView(root, flow, RELATION_CODES, {
    onDecide: (postId, decision, excluded) => {
      void flow.decide(postId, decision, excluded).then(redraw, redraw);
    },
  });
  redraw();
  await flow.refresh();
  redraw();
}

if (app) {
  const identity = readIdentity();
  if (!identity) {
    renderLanding(app);
  } else if (identity.role === "review") {
    void startReview(app, identity.id);
  } else {
    void startScoring(app, identity.id);
  }
}
