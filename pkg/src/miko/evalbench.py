"""Evaluation and export tooling.

Covers: soft token-overlap scoring of candidate intentions against the
benchmark (greedy max cosine over per-token embeddings, reported as
percentages), instruction-pair export for fine-tuning, sarcasm-dataset
augmentation, and binary classification metrics.

Candidate file: jsonl {post_id, relation, text, model_name}.
Benchmark file: jsonl of benchmark entries {post_id, relation, gold_text, ...}.
Instruction export: jsonl, one conversation per line:
    {"post_id": ..., "turns": [{"role": "user", "text": ...},
                               {"role": "assistant", "text": ...}, ...]}
Augmented dataset: jsonl {post_id, text, label, variant}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Post
from .distiller import strip_prefix
from .errors import (
    EmptyText,
    IncompletePost,
    LengthMismatch,
    MissingArtifact,
    NoOverlap,
)
from .kb import KnowledgeBase
from .prompts import TemplateSet
from .relations import RELATION_CODES

VARIANTS = ("Text", "Text+IMGDES", "Text+INTE", "Text+IMGDES+INTE")
DEFAULT_SEPARATOR = " [SEP] "
INTENTION_JOINER = "; "


# --- soft token-overlap score -------------------------------------------------


def bertscore_from_embeddings(cand_vectors, ref_vectors) -> tuple[float, float, float]:
    """Greedy-max cosine matching over raw token vectors.

    Precision averages, over candidate tokens, the best cosine
    similarity to any reference token; recall is symmetric; results are
    clamped to [0, 1] and F1 is 0 when P + R is 0.
    """
    cand = np.asarray(cand_vectors, dtype=float)
    ref = np.asarray(ref_vectors, dtype=float)
    if cand.ndim != 2 or ref.ndim != 2 or cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("need nonempty 2-D embedding matrices")

    def unit(matrix):
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        norms[norms == 0] = 1.0  # zero vectors stay zero-similar
        return matrix / norms

    sims = unit(cand) @ unit(ref).T
    precision = float(np.clip(sims.max(axis=1).mean(), 0.0, 1.0))
    recall = float(np.clip(sims.max(axis=0).mean(), 0.0, 1.0))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def bertscore(candidate: str, reference: str, emb) -> dict:
    """Score one candidate/reference pair through an embedding backend.

    `emb` is anything with embed_tokens(text) -> TokenEmbeddings; the
    backend owns tokenization entirely.
    """
    if not candidate.strip() or not reference.strip():
        raise EmptyText("bertscore needs nonempty candidate and reference")
    cand = emb.embed_tokens(candidate)
    ref = emb.embed_tokens(reference)
    precision, recall, f1 = bertscore_from_embeddings(cand.vectors, ref.vectors)
    return {"precision": precision, "recall": recall, "f1": f1}


# --- benchmark evaluation ---------------------------------------------------


@dataclass
class CandidateSet:
    model_name: str
    items: dict[tuple[str, str], str]  # (post_id, relation) -> text


def load_candidates(path: str | Path) -> CandidateSet:
    items: dict[tuple[str, str], str] = {}
    model_name = ""
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            items[(obj["post_id"], obj["relation"])] = obj["text"]
            model_name = model_name or obj.get("model_name", "")
    return CandidateSet(model_name or "unknown", items)


def load_benchmark_file(path: str | Path) -> dict[tuple[str, str], str]:
    golds: dict[tuple[str, str], str] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            golds[(obj["post_id"], obj["relation"])] = obj["gold_text"]
    return golds


@dataclass
class EvalReport:
    model_name: str
    per_relation_f1: dict[str, float]  # percentages
    average: float
    n_scored: int
    n_skipped: int = 0
    embedding_backend: str = ""
    mode: str = "macro"

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "per_relation_f1": {k: round(v, 2) for k, v in self.per_relation_f1.items()},
            "average": round(self.average, 2),
            "n_scored": self.n_scored,
            "n_skipped": self.n_skipped,
            "embedding_backend": self.embedding_backend,
            "mode": self.mode,
        }


def evaluate(
    candidates: CandidateSet,
    benchmark: dict[tuple[str, str], str],
    emb,
    *,
    missing: str = "skip",
    average: str = "macro",
    prefixes: dict[str, list[str]] | None = None,
) -> EvalReport:
    """Score a candidate set against benchmark golds, per relation.

    Both sides pass through prefix stripping before scoring. Benchmark
    pairs without a candidate are skipped and counted (missing="zero"
    scores them 0 instead). The average is the unweighted mean over
    relation scores; average="micro" averages over pairs instead.
    """
    if missing not in ("skip", "zero"):
        raise ValueError(f"missing must be skip or zero, got {missing!r}")
    if average not in ("macro", "micro"):
        raise ValueError(f"average must be macro or micro, got {average!r}")
    if not any(key in benchmark for key in candidates.items):
        raise NoOverlap("no candidate key matches the benchmark")

    per_relation_scores: dict[str, list[float]] = {code: [] for code in RELATION_CODES}
    n_scored = 0
    n_skipped = 0
    for (post_id, relation), gold_text in sorted(benchmark.items()):
        candidate_text = candidates.items.get((post_id, relation))
        stripped_gold = strip_prefix(gold_text, relation, prefixes)
        stripped_cand = (strip_prefix(candidate_text, relation, prefixes)
                         if candidate_text is not None else "")
        if not stripped_cand.strip() or not stripped_gold.strip():
            if missing == "zero":
                per_relation_scores[relation].append(0.0)
            else:
                n_skipped += 1
            continue
        _, _, f1 = bertscore_from_embeddings(
            emb.embed_tokens(stripped_cand).vectors,
            emb.embed_tokens(stripped_gold).vectors,
        )
        per_relation_scores[relation].append(f1)
        n_scored += 1

    per_relation_f1 = {
        code: 100.0 * sum(scores) / len(scores)
        for code, scores in per_relation_scores.items()
        if scores
    }
    if average == "micro":
        all_scores = [s for scores in per_relation_scores.values() for s in scores]
        overall = 100.0 * sum(all_scores) / len(all_scores) if all_scores else 0.0
    else:
        overall = (sum(per_relation_f1.values()) / len(per_relation_f1)
                   if per_relation_f1 else 0.0)
    return EvalReport(
        model_name=candidates.model_name,
        per_relation_f1=per_relation_f1,
        average=overall,
        n_scored=n_scored,
        n_skipped=n_skipped,
        embedding_backend=getattr(emb, "embedding_backend_id", ""),
        mode=average,
    )


def write_report(report: EvalReport, json_path: str | Path, csv_path: str | Path | None = None):
    Path(json_path).write_text(
        json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    if csv_path is not None:
        lines = ["relation,f1_percent"]
        for code in RELATION_CODES:
            if code in report.per_relation_f1:
                lines.append(f"{code},{report.per_relation_f1[code]:.2f}")
        lines.append(f"Average,{report.average:.2f}")
        Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- instruction export -------------------------------------------------------


def export_instructions(
    kb: KnowledgeBase,
    posts: list[Post],
    out_path: str | Path,
    templates: TemplateSet | None = None,
) -> int:
    """One training conversation per post: 10 question/answer turns.

    Questions re-render the intention prompt (post text, image
    description when present, key information, relation instruction);
    answers are the stored intention sentences. Turn order follows the
    relation taxonomy. Raises IncompletePost if a post lacks its key
    information or any relation.
    """
    templates = templates or TemplateSet()
    descriptions = {d.post_id: d for d in kb.descriptions()}
    keyinfos = {k.post_id: k for k in kb.keyinfos()}
    grouped = kb.intentions_by_post()
    count = 0
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as f:
        for post in posts:
            records = grouped.get(post.id, {})
            missing = [code for code in RELATION_CODES if code not in records]
            if post.id not in keyinfos:
                missing.insert(0, "keyinfo")
            if missing:
                raise IncompletePost(post.id, missing)
            desc = descriptions.get(post.id)
            turns = []
            for code in RELATION_CODES:
                question = templates.render_intention_prompt(
                    post.text, desc.text if desc else None,
                    keyinfos[post.id].fields(), code)
                turns.append({"role": "user", "text": question})
                turns.append({"role": "assistant", "text": records[code].text})
            f.write(json.dumps({"post_id": post.id, "turns": turns},
                               ensure_ascii=False) + "\n")
            count += 1
    return count


# --- downstream-task augmentation ---------------------------------------------


@dataclass
class AugmentedPost:
    post_id: str
    text: str
    variant: str
    label: int | None = None

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "text": self.text,
                "label": self.label, "variant": self.variant}


def normalize_variant(name: str) -> str:
    canonical = {v.lower(): v for v in VARIANTS}
    key = name.strip().lower()
    if key not in canonical:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return canonical[key]


def augment(
    posts: list[Post],
    kb: KnowledgeBase | None,
    variant: str,
    *,
    separator: str = DEFAULT_SEPARATOR,
    strict: bool = False,
) -> list[AugmentedPost]:
    """Append KB artifacts to raw post text for downstream training.

    Sections, in order: raw text, image description (IMGDES variants),
    the stripped intentions joined in taxonomy order (INTE variants),
    separated by `separator`. Posts lacking a required artifact are
    skipped, or raise MissingArtifact when strict.
    """
    variant = normalize_variant(variant)
    wants_imgdes = "IMGDES" in variant
    wants_inte = "INTE" in variant
    if variant == "Text":
        return [AugmentedPost(p.id, p.text, variant, p.label) for p in posts]

    descriptions = {d.post_id: d for d in kb.descriptions()} if kb else {}
    grouped = kb.intentions_by_post() if kb and wants_inte else {}
    out: list[AugmentedPost] = []
    for post in posts:
        sections = [post.text]
        if wants_imgdes:
            desc = descriptions.get(post.id)
            if desc is None:
                if strict:
                    raise MissingArtifact(post.id, "image_description")
                continue
            sections.append(desc.text)
        if wants_inte:
            records = grouped.get(post.id, {})
            if any(code not in records for code in RELATION_CODES):
                if strict:
                    raise MissingArtifact(post.id, "intentions")
                continue
            sections.append(INTENTION_JOINER.join(
                records[code].stripped_text for code in RELATION_CODES))
        out.append(AugmentedPost(post.id, separator.join(sections), variant, post.label))
    return out


def write_augmented(items: list[AugmentedPost], out_path: str | Path,
                    separator: str = DEFAULT_SEPARATOR) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item.to_json(), ensure_ascii=False) + "\n")
    manifest = {
        "variant": items[0].variant if items else None,
        "separator": separator,
        "count": len(items),
    }
    out_path.with_suffix(".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# --- classification metrics ---------------------------------------------------


def classification_metrics(golds: list[int], preds: list[int]) -> dict:
    """Accuracy, precision, recall, F1 as percentages; positive class is 1.

    Precision and recall fall back to 0 on an empty denominator, and F1
    to 0 when P + R is 0.
    """
    if len(golds) != len(preds) or not golds:
        raise LengthMismatch(
            f"need equal nonzero lengths, got {len(golds)} and {len(preds)}")
    for value in list(golds) + list(preds):
        if value not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {value!r}")
    tp = sum(1 for g, p in zip(golds, preds) if g == 1 and p == 1)
    fp = sum(1 for g, p in zip(golds, preds) if g == 0 and p == 1)
    fn = sum(1 for g, p in zip(golds, preds) if g == 1 and p == 0)
    tn = sum(1 for g, p in zip(golds, preds) if g == 0 and p == 0)
    acc = 100.0 * (tp + tn) / len(golds)
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"acc": acc, "p": precision, "r": recall, "f1": f1}
