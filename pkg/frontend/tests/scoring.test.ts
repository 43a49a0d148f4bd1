import { describe, expect, it } from "vitest";

import { ScoreFlow } from "../src/scoring.js";
import type { Score } from "../src/types.js";
import { RELATION_CODES, StubApi, makeTask } from "./stub.js";

const CYCLE: Score[] = [1, 0, -1];

describe("scoring flow", () => {
  it("emits exactly 10 valid score POSTs per post", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    expect(flow.state).toBe("scoring");
    expect(flow.task?.intentions).toHaveLength(10);

    flow.task!.intentions.forEach((item, i) => {
      flow.select(item.relation, CYCLE[i % 3]!);
    });
    expect(flow.complete).toBe(true);
    await flow.submit();

    expect(api.scorePosts).toHaveLength(10);
    expect(new Set(api.scorePosts.map((s) => s.relation)).size).toBe(10);
    for (const posted of api.scorePosts) {
      expect([-1, 0, 1]).toContain(posted.value);
      expect(posted.post_id).toBe("p1");
      expect(posted.annotator_id).toBe("alice");
    }
  });

  it("maps outgoing values 1:1 to user selections", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    const chosen = new Map<string, Score>();
    flow.task!.intentions.forEach((item, i) => {
      const value = CYCLE[(i + 1) % 3]!;
      chosen.set(item.relation, value);
      flow.select(item.relation, value);
    });
    await flow.submit();
    for (const posted of api.scorePosts) {
      expect(posted.value).toBe(chosen.get(posted.relation));
    }
  });

  it("submit stays inactive until every relation is selected", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    const items = flow.task!.intentions;
    items.slice(0, 9).forEach((item) => flow.select(item.relation, 1));
    expect(flow.complete).toBe(false);
    await flow.submit();
    expect(api.scorePosts).toHaveLength(0); // nothing sent early
    flow.select(items[9]!.relation, 0);
    expect(flow.complete).toBe(true);
    await flow.submit();
    expect(api.scorePosts).toHaveLength(10);
  });

  it("a changed selection before submit wins", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    for (const item of flow.task!.intentions) flow.select(item.relation, 1);
    flow.select("xWant", 0); // change before submitting
    await flow.submit();
    const xwant = api.scorePosts.find((s) => s.relation === "xWant");
    expect(xwant?.value).toBe(0);
  });

  it("auto-loads the next task and finishes with counts", async () => {
    const api = new StubApi([makeTask("p1"), makeTask("p2")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    for (const round of ["p1", "p2"]) {
      expect(flow.task?.post_id).toBe(round);
      for (const item of flow.task!.intentions) flow.select(item.relation, 1);
      await flow.submit();
    }
    expect(flow.state).toBe("done");
    expect(flow.progress).toEqual({ scored_posts: 2, total_posts: 2 });
    expect(api.scorePosts).toHaveLength(20);
  });

  it("retry after a network failure loses nothing and never double-posts", async () => {
    const api = new StubApi([makeTask("p1")]);
    api.failNextScores = 1;
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    for (const item of flow.task!.intentions) flow.select(item.relation, -1);

    await flow.submit();
    expect(flow.state).toBe("error");
    expect(flow.lastError).toBeTruthy();
    // selections survived the failure
    for (const code of RELATION_CODES) expect(flow.selection(code)).toBe(-1);

    await flow.submit(); // retry
    expect(flow.state).toBe("done");
    expect(api.scorePosts).toHaveLength(10);
    expect(new Set(api.scorePosts.map((s) => s.relation)).size).toBe(10);
  });

  it("keyboard path scores the highlighted row and advances", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    flow.selectCurrent(1);
    flow.selectCurrent(0);
    flow.selectCurrent(-1);
    expect(flow.selection("xNeed")).toBe(1);
    expect(flow.selection("xIntent")).toBe(0);
    expect(flow.selection("xAttr")).toBe(-1);
    expect(flow.currentIndex).toBe(3);
    flow.moveCursor(-2);
    expect(flow.currentIndex).toBe(1);
    flow.moveCursor(100);
    expect(flow.currentIndex).toBe(9);
  });

  it("ignores selections for unknown relations or values", async () => {
    const api = new StubApi([makeTask("p1")]);
    const flow = new ScoreFlow(api, "alice");
    await flow.loadNext();
    flow.select("nonexistent", 1);
    // a rogue caller cannot sneak an out-of-domain value through
    flow.select("xNeed", 5 as unknown as Score);
    expect(flow.selection("nonexistent")).toBeUndefined();
    expect(flow.selection("xNeed")).toBeUndefined();
  });
});
