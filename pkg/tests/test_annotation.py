from __future__ import annotations

import json

import pytest

from miko.annotation import (
    AnnotationScore,
    AnnotationService,
    sample_pool,
    write_pool,
    write_score_distribution_csv,
)
from miko.errors import (
    AlreadyReviewed,
    EmptyBenchmark,
    ExclusionNotAllowed,
    InvalidValue,
    NotEligible,
    UnknownAnnotator,
    UnknownTask,
)
from miko.relations import RELATION_CODES


def make_pool(n=3):
    return [
        {
            "post_id": f"p{i}",
            "text": f"post {i}",
            "image_ref": None,
            "dataset": "generic",
            "intentions": [
                {"relation": code, "gloss": "g",
                 "text": f"Prefix {code} of p{i}.",
                 "stripped_text": f"{code} of p{i}.",
                 "provenance": {"model_id": "m"}}
                for code in RELATION_CODES
            ],
        }
        for i in range(1, n + 1)
    ]


def score_all(service, post_id, annotator, value=1, values=None):
    for i, code in enumerate(RELATION_CODES):
        v = values[i] if values is not None else value
        service.submit_score(AnnotationScore(post_id, code, annotator, v))


@pytest.fixture
def service(tmp_path):
    return AnnotationService(make_pool(), events_path=tmp_path / "events.jsonl")


class TestSamplePool:
    def test_reproducible(self, distilled):
        posts, kb, _ = distilled
        first = sample_pool(kb, posts, 3, seed=11)
        second = sample_pool(kb, posts, 3, seed=11)
        assert [t["post_id"] for t in first] == [t["post_id"] for t in second]
        different = sample_pool(kb, posts, 3, seed=12)
        assert len(different) == 3

    def test_tasks_carry_ten_intentions_in_order(self, distilled):
        posts, kb, _ = distilled
        task = sample_pool(kb, posts, 1, seed=0)[0]
        assert [i["relation"] for i in task["intentions"]] == list(RELATION_CODES)
        assert task["text"]

    def test_oversample_rejected(self, distilled):
        posts, kb, _ = distilled
        with pytest.raises(ValueError):
            sample_pool(kb, posts, 99, seed=0)

    def test_write_pool_round_trip(self, distilled, tmp_path):
        from miko.annotation import load_pool

        posts, kb, _ = distilled
        tasks = sample_pool(kb, posts, 2, seed=5)
        write_pool(tasks, tmp_path / "pool.json", seed=5)
        assert load_pool(tmp_path / "pool.json") == tasks


class TestNextTask:
    def test_fresh_pool_serves_task(self, service):
        task = service.next_task("alice")
        assert task is not None
        assert len(task["intentions"]) == 10

    def test_lease_is_stable_until_complete(self, service):
        first = service.next_task("alice")
        again = service.next_task("alice")
        assert first["post_id"] == again["post_id"]

    def test_done_after_scoring_everything(self, service):
        for task in make_pool():
            score_all(service, task["post_id"], "alice")
        assert service.next_task("alice") is None
        assert service.progress("alice") == {"scored_posts": 3, "total_posts": 3}

    def test_interleaved_annotators_lose_nothing(self, tmp_path):
        service = AnnotationService(make_pool(4), events_path=tmp_path / "e.jsonl")
        served = {"alice": [], "bob": []}
        for _ in range(4):
            for annotator in ("alice", "bob"):
                task = service.next_task(annotator)
                served[annotator].append(task["post_id"])
                score_all(service, task["post_id"], annotator)
        for annotator in ("alice", "bob"):
            assert sorted(served[annotator]) == ["p1", "p2", "p3", "p4"]
            assert len(set(served[annotator])) == 4
            assert service.next_task(annotator) is None

    def test_partial_progress_resumed(self, tmp_path):
        events = tmp_path / "events.jsonl"
        service = AnnotationService(make_pool(), events_path=events)
        task = service.next_task("alice")
        service.submit_score(AnnotationScore(task["post_id"], "xNeed", "alice", 1))
        # restart: leases are memory-only, but partially scored posts win
        restarted = AnnotationService(make_pool(), events_path=events)
        assert restarted.next_task("alice")["post_id"] == task["post_id"]

    def test_allowlist(self, tmp_path):
        service = AnnotationService(make_pool(), events_path=tmp_path / "e.jsonl",
                                    allowlist={"alice"})
        assert service.next_task("alice") is not None
        with pytest.raises(UnknownAnnotator):
            service.next_task("mallory")


class TestSubmitScore:
    def test_invalid_value(self, service):
        with pytest.raises(InvalidValue):
            service.submit_score(AnnotationScore("p1", "xWant", "alice", 2))

    def test_unknown_task(self, service):
        with pytest.raises(UnknownTask):
            service.submit_score(AnnotationScore("p99", "xWant", "alice", 1))
        with pytest.raises(UnknownTask):
            service.submit_score(AnnotationScore("p1", "xBogus", "alice", 1))

    def test_resubmission_overwrites(self, service):
        service.submit_score(AnnotationScore("p1", "xWant", "alice", 1))
        service.submit_score(AnnotationScore("p1", "xWant", "alice", 0))
        agg = service.aggregate_for("p1")
        assert agg.per_relation_score["xWant"] == 0.0

    def test_ten_submissions_complete_post(self, service):
        score_all(service, "p1", "alice")
        assert service.progress("alice")["scored_posts"] == 1


class TestAggregate:
    def test_single_annotator_all_ones(self, service):
        score_all(service, "p1", "alice", value=1)
        agg = service.aggregate_for("p1")
        assert agg.total == 10
        assert agg.eligible
        assert agg.review_status == "pending"

    def test_all_zeros_not_eligible(self, service):
        score_all(service, "p1", "alice", value=0)
        agg = service.aggregate_for("p1")
        assert agg.total == 0
        assert not agg.eligible
        assert agg.review_status == "not_eligible"

    def test_two_annotator_mean_case(self, service):
        # A: xWant=1, everything else 1; B: xWant=0, everything else 1
        score_all(service, "p1", "A", value=1)
        values = [0 if code == "xWant" else 1 for code in RELATION_CODES]
        score_all(service, "p1", "B", values=values)
        agg = service.aggregate_for("p1")
        assert agg.per_relation_score["xWant"] == 0.5
        assert agg.total == 9.5
        assert agg.eligible

    def test_threshold_is_strict(self, service):
        # exactly 5.0 must not be eligible
        values = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
        score_all(service, "p1", "alice", values=values)
        agg = service.aggregate_for("p1")
        assert agg.total == 5.0
        assert not agg.eligible

    def test_total_is_sum_of_relation_scores(self, service):
        values = [1, -1, 0, 1, 1, 0, -1, 1, 0, 1]
        score_all(service, "p1", "alice", values=values)
        agg = service.aggregate_for("p1")
        assert agg.total == sum(agg.per_relation_score.values()) == sum(values)

    def test_majority_agreement_mode(self, tmp_path):
        service = AnnotationService(make_pool(), events_path=tmp_path / "e.jsonl",
                                    agreement="majority")
        for annotator, value in (("a", 1), ("b", 1), ("c", 0)):
            service.submit_score(AnnotationScore("p1", "xWant", annotator, value))
        assert service.aggregate_for("p1").per_relation_score["xWant"] == 1.0


class TestReview:
    def test_admit_produces_ten_entries(self, service):
        score_all(service, "p1", "alice")
        service.review_decision("p1", "admit", "rev1")
        entries = service.benchmark_entries()
        assert len(entries) == 10
        assert {e.relation for e in entries} == set(RELATION_CODES)
        assert entries[0].gold_text == "xNeed of p1."

    def test_reject_produces_none(self, service):
        score_all(service, "p1", "alice")
        service.review_decision("p1", "reject", "rev1")
        assert service.benchmark_entries() == []
        assert service.aggregate_for("p1").review_status == "rejected"

    def test_not_eligible_at_exactly_five(self, service):
        values = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
        score_all(service, "p1", "alice", values=values)
        with pytest.raises(NotEligible):
            service.review_decision("p1", "admit", "rev1")

    def test_already_reviewed(self, service):
        score_all(service, "p1", "alice")
        service.review_decision("p1", "admit", "rev1")
        with pytest.raises(AlreadyReviewed):
            service.review_decision("p1", "reject", "rev1")

    def test_exclusion_of_low_mean_relation(self, service):
        values = [1 if code != "xReact" else 0 for code in RELATION_CODES]
        score_all(service, "p1", "alice", values=values)
        service.review_decision("p1", "admit", "rev1", excluded_relations=["xReact"])
        entries = service.benchmark_entries()
        assert len(entries) == 9
        assert all(e.relation != "xReact" for e in entries)

    def test_exclusion_requires_low_mean(self, service):
        score_all(service, "p1", "alice", value=1)
        with pytest.raises(ExclusionNotAllowed):
            service.review_decision("p1", "admit", "rev1",
                                    excluded_relations=["xWant"])

    def test_admission_is_monotone(self, service):
        score_all(service, "p1", "alice", value=1)
        service.review_decision("p1", "admit", "rev1")
        # later score changes cannot revoke the admission
        score_all(service, "p1", "bob", value=-1)
        assert service.aggregate_for("p1").review_status == "admitted"
        assert len(service.benchmark_entries()) == 10

    def test_review_queue_only_eligible_pending(self, service):
        score_all(service, "p1", "alice", value=1)   # eligible, pending
        score_all(service, "p2", "alice", value=0)   # not eligible
        score_all(service, "p3", "alice", value=1)   # eligible, then admitted
        service.review_decision("p3", "admit", "rev1")
        queue = service.review_queue()
        assert [agg.post_id for agg in queue] == ["p1"]


class TestBenchmarkExport:
    def test_three_admitted_posts(self, tmp_path):
        service = AnnotationService(make_pool(3), events_path=tmp_path / "e.jsonl")
        for pid in ("p1", "p2", "p3"):
            score_all(service, pid, "alice")
            service.review_decision(pid, "admit", "rev1")
        manifest = service.export_benchmark(tmp_path / "benchmark.jsonl")
        assert manifest["total"] == 30
        assert sum(manifest["per_relation_counts"].values()) == manifest["total"]
        assert manifest["per_relation_counts"]["xWant"] == 3
        assert manifest["admitted_posts"] == 3
        lines = (tmp_path / "benchmark.jsonl").read_text().splitlines()
        assert len(lines) == 30
        assert json.loads(lines[0])["gold_text"]
        assert (tmp_path / "benchmark.manifest.json").is_file()

    def test_empty_benchmark(self, service):
        with pytest.raises(EmptyBenchmark):
            service.export_benchmark("unused.jsonl")

    def test_one_admitted_post_counts(self, service):
        score_all(service, "p1", "alice")
        service.review_decision("p1", "admit", "rev1")
        manifest = service.benchmark_manifest()
        assert manifest["total"] == 10
        assert all(v == 1 for v in manifest["per_relation_counts"].values())


class TestEventLog:
    def test_replay_restores_state(self, tmp_path):
        events = tmp_path / "events.jsonl"
        service = AnnotationService(make_pool(), events_path=events)
        score_all(service, "p1", "alice")
        service.review_decision("p1", "admit", "rev1")
        replayed = AnnotationService(make_pool(), events_path=events)
        assert replayed.aggregate_for("p1").total == 10
        assert replayed.aggregate_for("p1").review_status == "admitted"
        assert len(replayed.benchmark_entries()) == 10

    def test_duplicate_events_idempotent(self, tmp_path):
        events = tmp_path / "events.jsonl"
        service = AnnotationService(make_pool(), events_path=events)
        service.submit_score(AnnotationScore("p1", "xWant", "alice", 1))
        service.submit_score(AnnotationScore("p1", "xWant", "alice", 1))
        replayed = AnnotationService(make_pool(), events_path=events)
        assert replayed.aggregate_for("p1").per_relation_score["xWant"] == 1.0
        assert replayed.aggregate_for("p1").total == 1.0


class TestDistribution:
    def test_counts_and_csv(self, service, tmp_path):
        values = [1, 1, 0, -1, 1, 0, 1, 1, -1, 0]
        score_all(service, "p1", "alice", values=values)
        dist = service.score_distribution()
        assert dist["xNeed"]["1"] == 1
        assert dist["xEffect"]["-1"] == 1
        total = sum(sum(row.values()) for row in dist.values())
        assert total == 10
        out = tmp_path / "dist.csv"
        write_score_distribution_csv(dist, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "relation,high_1,low_0,implausible_-1"
        assert len(lines) == 11
