"""Two-stage human annotation over distilled intentions.

Stage 1: annotators score each of a post's 10 intentions for typicality
in {1 high, 0 low, -1 implausible}. Stage 2: posts whose aggregate total
is strictly greater than 5 enter a manual review queue; admitted posts
contribute their intentions to the benchmark (the reviewer may exclude
individual relations whose mean score fell below 1).

All mutations go through an append-only event log (jsonl); scores,
decisions and aggregates are derived state, rebuilt by replay on open.
Resubmitting a score overwrites the annotator's previous value, so
replayed events are idempotent.
"""

from __future__ import annotations

import json
import random
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AlreadyReviewed,
    EmptyBenchmark,
    ExclusionNotAllowed,
    InvalidValue,
    NotEligible,
    UnknownAnnotator,
    UnknownTask,
)
from .kb import KnowledgeBase
from .relations import RELATION_CODES, get_relation, summarize_relation_counts

ELIGIBILITY_THRESHOLD = 5  # total must be strictly greater

VALID_SCORES = (-1, 0, 1)


@dataclass(frozen=True)
class AnnotationScore:
    post_id: str
    relation: str
    annotator_id: str
    value: int
    timestamp: float = field(default_factory=time.time)


@dataclass
class PostAggregate:
    post_id: str
    per_relation_score: dict[str, float]
    total: float
    eligible: bool
    review_status: str  # pending | admitted | rejected | not_eligible

    def to_json(self) -> dict:
        return {
            "post_id": self.post_id,
            "per_relation_score": self.per_relation_score,
            "total": self.total,
            "eligible": self.eligible,
            "review_status": self.review_status,
        }


@dataclass(frozen=True)
class BenchmarkEntry:
    post_id: str
    relation: str
    gold_text: str
    source_provenance: dict

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "relation": self.relation,
                "gold_text": self.gold_text,
                "source_provenance": self.source_provenance}


def sample_pool(kb: KnowledgeBase, posts: list, n: int, seed: int) -> list[dict]:
    """Reproducibly pick n annotation tasks from posts with complete KB records.

    Each task packs the post text, its image reference and all 10
    intentions in taxonomy order, so the annotation server never needs
    the KB or corpus again.
    """
    by_id = {post.id: post for post in posts}
    complete = [pid for pid in kb.post_ids()
                if pid in by_id and len(kb.relations_for(pid)) == len(RELATION_CODES)]
    if n > len(complete):
        raise ValueError(f"asked for {n} posts but only {len(complete)} are complete")
    order = {pid: i for i, pid in enumerate(complete)}
    chosen = sorted(random.Random(seed).sample(complete, n), key=order.__getitem__)
    grouped = kb.intentions_by_post()
    tasks = []
    for pid in chosen:
        post = by_id[pid]
        records = grouped[pid]
        tasks.append({
            "post_id": pid,
            "text": post.text,
            "image_ref": post.image,
            "dataset": post.dataset.value,
            "intentions": [
                {
                    "relation": code,
                    "gloss": get_relation(code).gloss,
                    "text": records[code].text,
                    "stripped_text": records[code].stripped_text,
                    "provenance": records[code].provenance,
                }
                for code in RELATION_CODES
            ],
        })
    return tasks


def write_pool(tasks: list[dict], out_path: str | Path, seed: int) -> None:
    Path(out_path).write_text(
        json.dumps({"seed": seed, "n": len(tasks), "tasks": tasks}, indent=2,
                   ensure_ascii=False) + "\n",
        encoding="utf-8")


def load_pool(path: str | Path) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return data["tasks"] if isinstance(data, dict) else data


class AnnotationService:
    """Serves scoring tasks, records events, aggregates, gates admission."""

    def __init__(
        self,
        pool: list[dict],
        events_path: str | Path | None = None,
        allowlist: set[str] | None = None,
        agreement: str = "mean",
    ):
        if agreement not in ("mean", "majority"):
            raise ValueError(f"unknown agreement mode {agreement!r}")
        self.pool = list(pool)
        self.tasks = {task["post_id"]: task for task in self.pool}
        self.events_path = Path(events_path) if events_path else None
        self.allowlist = set(allowlist) if allowlist else None
        self.agreement = agreement
        self._lock = threading.RLock()
        # (post_id, relation, annotator_id) -> value; last write wins
        self._scores: dict[tuple[str, str, str], int] = {}
        self._decisions: dict[str, dict] = {}
        self._leases: dict[str, str] = {}
        if self.events_path and self.events_path.is_file():
            self._replay()

    # --- event log -----------------------------------------------------

    def _replay(self):
        with self.events_path.open("r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["type"] == "score":
                    key = (event["post_id"], event["relation"], event["annotator_id"])
                    self._scores[key] = int(event["value"])
                elif event["type"] == "decision":
                    self._decisions[event["post_id"]] = {
                        "decision": event["decision"],
                        "reviewer_id": event["reviewer_id"],
                        "excluded_relations": event.get("excluded_relations", []),
                    }

    def _append_event(self, event: dict):
        if self.events_path is None:
            return
        self.events_path.parent.mkdir(parents=True, exist_ok=True)
        with self.events_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False) + "\n")
            f.flush()

    # --- task assignment -------------------------------------------------

    def _check_annotator(self, annotator_id: str):
        if not annotator_id:
            raise UnknownAnnotator("annotator id must be nonempty")
        if self.allowlist is not None and annotator_id not in self.allowlist:
            raise UnknownAnnotator(f"annotator {annotator_id!r} not in allowlist")

    def _scored_relations(self, post_id: str, annotator_id: str) -> set[str]:
        return {rel for (pid, rel, ann) in self._scores
                if pid == post_id and ann == annotator_id}

    def _is_complete(self, post_id: str, annotator_id: str) -> bool:
        return len(self._scored_relations(post_id, annotator_id)) == len(RELATION_CODES)

    def next_task(self, annotator_id: str) -> dict | None:
        """Least-annotated post this annotator has not finished, or None.

        A per-annotator lease pins the choice: repeated calls return the
        same post until its 10 scores are in, so interleaved sessions
        neither lose nor duplicate work.
        """
        with self._lock:
            self._check_annotator(annotator_id)
            leased = self._leases.get(annotator_id)
            if leased and not self._is_complete(leased, annotator_id):
                return self.tasks[leased]
            # Resume partially scored posts first (leases do not survive
            # a restart, the event log does).
            for task in self.pool:
                if 0 < len(self._scored_relations(task["post_id"], annotator_id)) \
                        < len(RELATION_CODES):
                    self._leases[annotator_id] = task["post_id"]
                    return task
            open_posts = [
                (sum(1 for (pid, _, _) in self._scores if pid == task["post_id"]), i, task)
                for i, task in enumerate(self.pool)
                if not self._is_complete(task["post_id"], annotator_id)
            ]
            if not open_posts:
                self._leases.pop(annotator_id, None)
                return None
            _, _, task = min(open_posts)
            self._leases[annotator_id] = task["post_id"]
            return task

    def progress(self, annotator_id: str) -> dict:
        with self._lock:
            scored = sum(1 for task in self.pool
                         if self._is_complete(task["post_id"], annotator_id))
            return {"scored_posts": scored, "total_posts": len(self.pool)}

    # --- scoring ---------------------------------------------------------

    def submit_score(self, score: AnnotationScore) -> None:
        with self._lock:
            self._check_annotator(score.annotator_id)
            if score.value not in VALID_SCORES:
                raise InvalidValue(f"score must be in {{-1, 0, 1}}, got {score.value}")
            task = self.tasks.get(score.post_id)
            if task is None or score.relation not in RELATION_CODES:
                raise UnknownTask(f"no task for ({score.post_id}, {score.relation})")
            self._scores[(score.post_id, score.relation, score.annotator_id)] = score.value
            self._append_event({
                "type": "score", "post_id": score.post_id, "relation": score.relation,
                "annotator_id": score.annotator_id, "value": score.value,
                "ts": score.timestamp,
            })
            if self._is_complete(score.post_id, score.annotator_id) and \
                    self._leases.get(score.annotator_id) == score.post_id:
                del self._leases[score.annotator_id]

    # --- aggregation -------------------------------------------------------

    def _relation_score(self, post_id: str, relation: str) -> float | None:
        values = [v for (pid, rel, _), v in self._scores.items()
                  if pid == post_id and rel == relation]
        if not values:
            return None
        if self.agreement == "majority":
            counts = Counter(values)
            # Ties resolve to the smaller value for determinism.
            return float(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0])
        return sum(values) / len(values)

    def _status(self, post_id: str, eligible: bool) -> str:
        decision = self._decisions.get(post_id)
        if decision:
            return "admitted" if decision["decision"] == "admit" else "rejected"
        return "pending" if eligible else "not_eligible"

    def aggregate(self) -> list[PostAggregate]:
        """Per-post aggregates in pool order; totals sum per-relation means."""
        with self._lock:
            out = []
            for task in self.pool:
                pid = task["post_id"]
                per_relation = {}
                for code in RELATION_CODES:
                    value = self._relation_score(pid, code)
                    if value is not None:
                        per_relation[code] = value
                total = sum(per_relation.values())
                eligible = total > ELIGIBILITY_THRESHOLD
                out.append(PostAggregate(
                    post_id=pid,
                    per_relation_score=per_relation,
                    total=total,
                    eligible=eligible,
                    review_status=self._status(pid, eligible),
                ))
            return out

    def aggregate_for(self, post_id: str) -> PostAggregate:
        for agg in self.aggregate():
            if agg.post_id == post_id:
                return agg
        raise UnknownTask(f"no task for post {post_id}")

    def review_queue(self) -> list[PostAggregate]:
        """Eligible, still-pending posts, highest total first."""
        return sorted(
            (agg for agg in self.aggregate()
             if agg.eligible and agg.review_status == "pending"),
            key=lambda agg: -agg.total,
        )

    def score_distribution(self) -> dict[str, dict[str, int]]:
        """Raw typicality counts per relation (for the distribution report)."""
        with self._lock:
            dist = {code: {"1": 0, "0": 0, "-1": 0} for code in RELATION_CODES}
            for (_, rel, _), value in self._scores.items():
                dist[rel][str(value)] += 1
            return dist

    # --- review & benchmark ---------------------------------------------

    def review_decision(
        self,
        post_id: str,
        decision: str,
        reviewer_id: str,
        excluded_relations: list[str] | None = None,
    ) -> None:
        with self._lock:
            if decision not in ("admit", "reject"):
                raise InvalidValue(f"decision must be admit or reject, got {decision!r}")
            if post_id not in self.tasks:
                raise UnknownTask(f"no task for post {post_id}")
            if post_id in self._decisions:
                raise AlreadyReviewed(f"post {post_id} already reviewed")
            agg = self.aggregate_for(post_id)
            if not agg.eligible:
                raise NotEligible(
                    f"post {post_id} total {agg.total} does not exceed "
                    f"{ELIGIBILITY_THRESHOLD}")
            excluded = list(excluded_relations or [])
            for code in excluded:
                if code not in RELATION_CODES:
                    raise ExclusionNotAllowed(f"unknown relation {code!r}")
                mean = agg.per_relation_score.get(code, 0.0)
                if mean >= 1:
                    raise ExclusionNotAllowed(
                        f"relation {code} has mean {mean}, only mean < 1 may be excluded")
            self._decisions[post_id] = {
                "decision": decision,
                "reviewer_id": reviewer_id,
                "excluded_relations": excluded,
            }
            self._append_event({
                "type": "decision", "post_id": post_id, "decision": decision,
                "reviewer_id": reviewer_id, "excluded_relations": excluded,
                "ts": time.time(),
            })

    def benchmark_entries(self) -> list[BenchmarkEntry]:
        """Gold intentions of admitted posts, minus excluded relations."""
        with self._lock:
            entries = []
            for task in self.pool:
                decision = self._decisions.get(task["post_id"])
                if not decision or decision["decision"] != "admit":
                    continue
                excluded = set(decision["excluded_relations"])
                for item in task["intentions"]:
                    if item["relation"] in excluded:
                        continue
                    entries.append(BenchmarkEntry(
                        post_id=task["post_id"],
                        relation=item["relation"],
                        gold_text=item["stripped_text"],
                        source_provenance=item.get("provenance", {}),
                    ))
            return entries

    def benchmark_manifest(self) -> dict:
        entries = self.benchmark_entries()
        if not entries:
            raise EmptyBenchmark("no admitted posts yet")
        counts = Counter(entry.relation for entry in entries)
        manifest = summarize_relation_counts(dict(counts))
        manifest["admitted_posts"] = len({e.post_id for e in entries})
        return manifest

    def export_benchmark(self, out_path: str | Path) -> dict:
        """Write benchmark jsonl + manifest json; returns the manifest."""
        manifest = self.benchmark_manifest()
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", encoding="utf-8") as f:
            for entry in self.benchmark_entries():
                f.write(json.dumps(entry.to_json(), ensure_ascii=False) + "\n")
        manifest_path = out_path.with_suffix(".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return manifest


def write_score_distribution_csv(dist: dict[str, dict[str, int]], out_path: str | Path) -> None:
    """CSV of typicality-score counts: relation, high, low, implausible."""
    lines = ["relation,high_1,low_0,implausible_-1"]
    for code in RELATION_CODES:
        row = dist.get(code, {})
        lines.append(f"{code},{row.get('1', 0)},{row.get('0', 0)},{row.get('-1', 0)}")
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
