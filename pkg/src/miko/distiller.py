"""Three-stage intention distillation over a corpus.

Per post: (1) caption the image with the multimodal backend, skipped
entirely for text-only posts; (2) extract key information from a merged
block of post text and image description; (3) generate one intention
per relation, 10 per post. Posts run under a worker pool but results are
written in corpus order through a single KB writer, so mock-backend runs
are byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Post
from .errors import MikoError, MissingImageFile, ParseFailure, PartialResult, StageError
from .gateway import ChatRequest, Gateway
from .kb import KnowledgeBase
from .prompts import TemplateSet, load_prefixes
from .records import ImageDescription, IntentionRecord, KeyInfo
from .relations import RELATIONS

log = logging.getLogger(__name__)

PIPELINE_VERSION = "0.1.0"

REPROMPT_REMINDER = (
    "Reminder: reply with exactly five labeled lines (Concept, Action, Object, "
    "Emotion, Keywords) and give three to five comma-separated keywords."
)

_KEYINFO_FIELDS = ("concept", "action", "object", "emotion", "keywords")
_LABEL_LINE = re.compile(
    r"^\s*[-*]?\s*(concept|action|object|emotion|keywords)\s*[:：]\s*(.*?)\s*$",
    re.IGNORECASE | re.MULTILINE,
)


@dataclass
class DistillOptions:
    templates: TemplateSet = field(default_factory=TemplateSet)
    llm_model: str = "mock-llm"
    mllm_model: str = "mock-mllm"
    caption_temperature: float = 0.7
    keyinfo_temperature: float = 0.0  # extraction must be stable
    intention_temperature: float = 0.7
    max_tokens: int = 512
    parallel: int = 4
    strict: bool = False
    image_root: str | None = None
    verify_images: bool = False
    merged_keyinfo: bool = True  # False: separate extraction per source


@dataclass
class PipelineReport:
    posts_total: int = 0
    posts_ok: int = 0
    posts_partial: int = 0
    posts_failed: int = 0
    descriptions: int = 0
    keyinfos: int = 0
    intentions: int = 0
    backend_calls: int = 0
    cache_hits: int = 0
    duration_s: float = 0.0
    failures: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "posts_total": self.posts_total,
            "posts_ok": self.posts_ok,
            "posts_partial": self.posts_partial,
            "posts_failed": self.posts_failed,
            "records": {
                "descriptions": self.descriptions,
                "keyinfos": self.keyinfos,
                "intentions": self.intentions,
            },
            "backend_calls": self.backend_calls,
            "cache_hits": self.cache_hits,
            "duration_s": round(self.duration_s, 3),
            "failures": self.failures,
        }


def _resolve_image(post: Post, opts: DistillOptions) -> str | None:
    if post.image is None:
        return None
    if opts.image_root:
        return str(Path(opts.image_root) / post.image)
    return post.image


def caption_stage(post: Post, gw: Gateway, opts: DistillOptions) -> ImageDescription | None:
    """Describe the post's image; text-only posts cost zero backend calls."""
    if post.image is None:
        return None
    image_ref = _resolve_image(post, opts)
    if opts.verify_images and not Path(image_ref).is_file():
        if opts.strict:
            raise MissingImageFile(f"{post.id}: image {image_ref} not found")
        log.warning("post %s: image %s unreadable, treating post as text-only",
                    post.id, image_ref)
        return None
    prompt = opts.templates.render_caption_prompt(post.text)
    resp = gw.chat(ChatRequest(
        backend="mllm",
        model_id=opts.mllm_model,
        prompt=prompt,
        image=image_ref,
        temperature=opts.caption_temperature,
        max_tokens=opts.max_tokens,
        request_tag=f"caption:{post.id}",
    ))
    return ImageDescription(
        post_id=post.id,
        text=resp.text,
        model_id=resp.model_id,
        template_version=opts.templates.versions["caption"],
    )


def parse_keyinfo(raw: str) -> dict:
    """Pull the five labeled fields out of model text.

    Accepts either a JSON object or "Label: value" lines, both matched
    case-insensitively. Keywords split on commas, semicolons and
    newlines; duplicates are dropped keeping the first occurrence. The
    3-to-5 keyword bound is enforced after dedup.
    """
    if not raw.strip():
        raise ParseFailure(raw, reason="empty model output")
    fields = _try_json_fields(raw)
    if fields is None:
        fields = {}
        for match in _LABEL_LINE.finditer(raw):
            fields.setdefault(match.group(1).lower(), match.group(2))
    missing = [name for name in _KEYINFO_FIELDS if not _present(fields.get(name))]
    if missing:
        raise ParseFailure(raw, missing=missing)
    keywords = _split_keywords(fields["keywords"])
    if not 3 <= len(keywords) <= 5:
        raise ParseFailure(
            raw, reason=f"{len(keywords)} keywords after dedup, expected 3 to 5")
    return {
        "concept": str(fields["concept"]).strip(),
        "action": str(fields["action"]).strip(),
        "object": str(fields["object"]).strip(),
        "emotion": str(fields["emotion"]).strip(),
        "keywords": keywords,
    }


def _present(value) -> bool:
    if value is None:
        return False
    if isinstance(value, (list, tuple)):
        return len(value) > 0
    return bool(str(value).strip())


def _try_json_fields(raw: str) -> dict | None:
    start, end = raw.find("{"), raw.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        obj = json.loads(raw[start:end + 1])
    except ValueError:
        return None
    if not isinstance(obj, dict):
        return None
    lowered = {str(k).lower(): v for k, v in obj.items()}
    return {name: lowered[name] for name in _KEYINFO_FIELDS if name in lowered}


def _split_keywords(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        parts = [str(v) for v in value]
    else:
        parts = re.split(r"[,;\n]", str(value))
    seen: dict[str, None] = {}
    for part in parts:
        cleaned = part.strip()
        if cleaned:
            seen.setdefault(cleaned, None)
    return list(seen)


def keyinfo_stage(
    post: Post, desc: ImageDescription | None, gw: Gateway, opts: DistillOptions
) -> KeyInfo:
    """Extract key information over the merged source block.

    Post text and image description are concatenated with labeled
    headers when a description exists (source = merged); otherwise the
    post text alone is used (source = post_text).
    """
    if desc is None:
        source_text, kind, source = post.text, "post", "post_text"
    else:
        source_text = f"<Text information>: {post.text}\n<Image description>: {desc.text}"
        kind, source = "merged", "merged"
    return _extract_keyinfo(post.id, source_text, kind, source, gw, opts,
                            request_tag=f"keyinfo:{post.id}")


def _extract_keyinfo(post_id, source_text, kind, source, gw, opts, request_tag) -> KeyInfo:
    prompt = opts.templates.render_keyinfo_prompt(source_text, kind)
    raw = _chat_keyinfo(prompt, request_tag, gw, opts)
    try:
        fields = parse_keyinfo(raw)
    except ParseFailure as first_failure:
        # One cheap repair attempt; the reminder changes the prompt and
        # therefore the cache key, so the retry is cached independently.
        log.info("post %s: keyinfo parse failed (%s); reprompting once",
                 post_id, first_failure.reason)
        raw = _chat_keyinfo(f"{prompt}\n\n{REPROMPT_REMINDER}", request_tag, gw, opts)
        fields = parse_keyinfo(raw)
    return KeyInfo(
        post_id=post_id,
        source=source,
        concept=fields["concept"],
        action=fields["action"],
        object=fields["object"],
        emotion=fields["emotion"],
        keywords=tuple(fields["keywords"]),
    )


def _chat_keyinfo(prompt: str, request_tag: str, gw: Gateway, opts: DistillOptions) -> str:
    return gw.chat(ChatRequest(
        backend="llm",
        model_id=opts.llm_model,
        prompt=prompt,
        temperature=opts.keyinfo_temperature,
        max_tokens=opts.max_tokens,
        request_tag=request_tag,
    )).text


def _prefix_patterns(code: str, prefixes: dict[str, list[str]]) -> list[re.Pattern]:
    patterns = []
    for variant in sorted(prefixes.get(code, []), key=len, reverse=True):
        words = []
        for word in variant.split():
            if word.endswith(","):
                words.append(re.escape(word[:-1]) + ",?")
            else:
                words.append(re.escape(word))
        patterns.append(re.compile(r"^\s*" + r"\s+".join(words), re.IGNORECASE))
    return patterns


def strip_prefix(text: str, relation, prefixes: dict[str, list[str]] | None = None) -> str:
    """Remove the relation's known answer prefix from a generation.

    Matching is case-insensitive, whitespace-tolerant, and repeats until
    no variant matches (idempotent by construction). Text without a
    matching prefix is returned unchanged.
    """
    if prefixes is None:
        prefixes = load_prefixes()
    code = relation if isinstance(relation, str) else relation.code
    patterns = _prefix_patterns(code, prefixes)
    current = text
    stripped_any = False
    while True:
        for pattern in patterns:
            match = pattern.match(current)
            if match:
                current = current[match.end():].lstrip(" \t,.:;")
                stripped_any = True
                break
        else:
            return current if stripped_any else text


def intention_stage(
    post: Post,
    desc: ImageDescription | None,
    ki: KeyInfo,
    gw: Gateway,
    opts: DistillOptions,
) -> list[IntentionRecord]:
    """Generate one intention per relation, in taxonomy order.

    In strict mode the first failed relation aborts the post; otherwise
    the successful records ride along on a PartialResult.
    """
    records: list[IntentionRecord] = []
    failures: dict[str, str] = {}
    for relation in RELATIONS:
        try:
            prompt = opts.templates.render_intention_prompt(
                post.text, desc.text if desc else None, ki.fields(), relation)
            resp = gw.chat(ChatRequest(
                backend="llm",
                model_id=opts.llm_model,
                prompt=prompt,
                temperature=opts.intention_temperature,
                max_tokens=opts.max_tokens,
                request_tag=f"intention:{post.id}:{relation.code}",
            ))
            records.append(IntentionRecord(
                post_id=post.id,
                relation=relation.code,
                text=resp.text,
                stripped_text=strip_prefix(resp.text, relation, opts.templates.prefixes),
                provenance={
                    "caption_used": desc is not None,
                    "keyinfo_digest": ki.digest(),
                    "template_versions": {
                        "caption": opts.templates.versions["caption"],
                        "keyinfo": opts.templates.versions["keyinfo"],
                        "intention": opts.templates.versions[f"intention.{relation.code}"],
                    },
                    "model_id": resp.model_id,
                    "temperature": opts.intention_temperature,
                    "dataset": post.dataset.value,
                },
            ))
        except (MikoError, ValueError) as exc:
            if opts.strict:
                raise StageError(post.id, f"intention:{relation.code}", exc) from exc
            failures[relation.code] = str(exc)
    if failures:
        raise PartialResult(post.id, records, failures)
    return records


@dataclass
class PostResult:
    post: Post
    description: ImageDescription | None
    keyinfos: list[KeyInfo]
    intentions: list[IntentionRecord]
    failures: dict[str, str]


def distill_post(post: Post, gw: Gateway, opts: DistillOptions) -> PostResult:
    """Run all three stages for one post, tolerating partial stage 3."""
    desc = caption_stage(post, gw, opts)
    if opts.merged_keyinfo or desc is None:
        keyinfos = [keyinfo_stage(post, desc, gw, opts)]
    else:
        # Per-source mode: independent extraction per source; the
        # post-text result drives stage 3, the description's is stored too.
        keyinfos = [
            _extract_keyinfo(post.id, post.text, "post", "post_text", gw, opts,
                             request_tag=f"keyinfo:{post.id}"),
            _extract_keyinfo(post.id, desc.text, "image_description",
                             "image_description", gw, opts,
                             request_tag=f"keyinfo:{post.id}:image"),
        ]
    try:
        intentions = intention_stage(post, desc, keyinfos[0], gw, opts)
        failures: dict[str, str] = {}
    except PartialResult as partial:
        intentions, failures = partial.records, partial.failures
    return PostResult(post, desc, keyinfos, intentions, failures)


def run_pipeline(
    posts: list[Post],
    gw: Gateway,
    kb: KnowledgeBase,
    opts: DistillOptions | None = None,
) -> PipelineReport:
    """Distill every post and persist results through the KB writer.

    Posts are processed by a bounded worker pool; writes happen in corpus
    order from this thread only, so identical inputs (and a deterministic
    backend) give byte-identical segment files.
    """
    opts = opts or DistillOptions()
    report = PipelineReport(posts_total=len(posts))
    calls_before = gw.counters()
    started = time.monotonic()

    with ThreadPoolExecutor(max_workers=max(1, opts.parallel)) as pool:
        futures = [(post, pool.submit(distill_post, post, gw, opts)) for post in posts]
        for post, future in futures:
            try:
                result = future.result()
            except (MikoError, ValueError) as exc:
                if opts.strict:
                    raise
                report.posts_failed += 1
                report.failures.append(
                    {"post_id": post.id, "stage": getattr(exc, "stage", "pipeline"),
                     "error": str(exc)})
                continue
            _persist(kb, result, report)
            if result.failures:
                report.posts_partial += 1
                for code, message in result.failures.items():
                    report.failures.append(
                        {"post_id": post.id, "stage": f"intention:{code}",
                         "error": message})
            else:
                report.posts_ok += 1

    kb.write_index()
    counters = gw.counters()
    report.backend_calls = counters["backend_calls"] - calls_before["backend_calls"]
    report.cache_hits = counters["cache_hits"] - calls_before["cache_hits"]
    report.duration_s = time.monotonic() - started
    return report


def _persist(kb: KnowledgeBase, result: PostResult, report: PipelineReport) -> None:
    if result.description is not None:
        kb.append(result.description)
        report.descriptions += 1
    for ki in result.keyinfos:
        kb.append(ki)
        report.keyinfos += 1
    for record in result.intentions:
        kb.append(record)
        report.intentions += 1
