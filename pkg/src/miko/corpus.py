"""Corpus ingestion and cleaning.

Loads the four public Twitter datasets plus a generic jsonl format into
normalized Post records, dropping rows without an image reference when
the dataset is treated as multimodal. Text is left noisy on purpose
(hashtags, misspellings, abbreviations survive); the only normalization
is BOM removal and trailing-whitespace trim, because later stages do
their own denoising.

Generic jsonl schema, one object per line:
    {"id": str, "text": str, "image": str|null, "label": int|null, "split": str|null}

For tsv/csv sources a header row is required; columns are resolved
case-insensitively through these aliases:
    id:    id, tweet_id, post_id, index
    text:  text, tweet, sentence
    image: image, image_id, img, image_path, photo
    label: label, sarcasm, class      (TwitterSarcasm / Generic only)
    split: split
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import MalformedRecord, UnreadableSource


class Dataset(str, Enum):
    TWITTER2015 = "twitter2015"
    TWITTER2017 = "twitter2017"
    TWITTER100K = "twitter100k"
    TWITTER_SARCASM = "twitter_sarcasm"
    GENERIC = "generic"


# Datasets whose published form is image+text pairs; rows lacking the
# image reference are excluded during ingest unless overridden.
MULTIMODAL_DATASETS = frozenset(
    {Dataset.TWITTER2015, Dataset.TWITTER2017, Dataset.TWITTER100K, Dataset.TWITTER_SARCASM}
)

# Only the sarcasm task (and the generic schema) carries a 0/1 label.
LABELED_DATASETS = frozenset({Dataset.TWITTER_SARCASM, Dataset.GENERIC})

SPLITS = ("train", "dev", "test", "unsplit")
_SPLIT_ALIASES = {"train": "train", "dev": "dev", "val": "dev", "valid": "dev",
                  "validation": "dev", "test": "test", "unsplit": "unsplit"}

_COLUMN_ALIASES = {
    "id": ("id", "tweet_id", "post_id", "index"),
    "text": ("text", "tweet", "sentence"),
    "image": ("image", "image_id", "img", "image_path", "photo"),
    "label": ("label", "sarcasm", "class"),
    "split": ("split",),
}


@dataclass(frozen=True)
class Post:
    """One social-media item; text keeps its original noise."""

    id: str
    dataset: Dataset
    text: str
    image: str | None = None
    label: int | None = None
    split: str = "unsplit"

    def __post_init__(self):
        if not self.id:
            raise ValueError("post id must be nonempty")
        if not self.text.strip():
            raise ValueError("post text must be nonempty after trim")
        if self.label is not None and self.dataset not in LABELED_DATASETS:
            raise ValueError(f"label not allowed for dataset {self.dataset.value}")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "image": self.image,
                "label": self.label, "split": self.split}


@dataclass
class CorpusManifest:
    dataset: Dataset
    total_raw: int = 0
    total_kept: int = 0
    dropped_missing_image: int = 0
    source_uri: str = ""
    checksum: str = ""
    malformed_skipped: int = 0

    def validate(self):
        if min(self.total_raw, self.total_kept, self.dropped_missing_image) < 0:
            raise ValueError("manifest counts must be nonnegative")
        if self.total_kept != self.total_raw - self.dropped_missing_image:
            raise ValueError("total_kept must equal total_raw - dropped_missing_image")

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.value,
            "total_raw": self.total_raw,
            "total_kept": self.total_kept,
            "dropped_missing_image": self.dropped_missing_image,
            "source_uri": self.source_uri,
            "checksum": self.checksum,
            "malformed_skipped": self.malformed_skipped,
        }


def _normalize_bytes(raw: bytes) -> bytes:
    if raw.startswith(b"\xef\xbb\xbf"):
        raw = raw[3:]
    return raw.replace(b"\r\n", b"\n")


def _clean_text(value: str) -> str:
    return value.lstrip("﻿").rstrip()


def _parse_split(value) -> str:
    if value is None or value == "":
        return "unsplit"
    normalized = _SPLIT_ALIASES.get(str(value).strip().lower())
    if normalized is None:
        raise ValueError(f"unknown split {value!r}")
    return normalized


def _parse_label(value, dataset: Dataset) -> int | None:
    if value is None or value == "":
        return None
    if dataset not in LABELED_DATASETS:
        # Upstream files may carry extra columns; labels are only
        # meaningful for the sarcasm task and the generic schema.
        return None
    label = int(value)
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    return label


def _row_from_json(obj: dict, dataset: Dataset) -> Post:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    if "id" not in obj or "text" not in obj:
        raise ValueError("record lacks id or text")
    image = obj.get("image")
    return Post(
        id=str(obj["id"]),
        dataset=dataset,
        text=_clean_text(str(obj["text"])),
        image=str(image) if image else None,
        label=_parse_label(obj.get("label"), dataset),
        split=_parse_split(obj.get("split")),
    )


def _resolve_columns(header: list[str]) -> dict[str, str]:
    lowered = {name.strip().lower(): name for name in header}
    resolved = {}
    for target, aliases in _COLUMN_ALIASES.items():
        for alias in aliases:
            if alias in lowered:
                resolved[target] = lowered[alias]
                break
    if "id" not in resolved or "text" not in resolved:
        raise UnreadableSource(f"header lacks id/text columns: {header}")
    return resolved


def _row_from_csv(row: dict, columns: dict[str, str], dataset: Dataset) -> Post:
    image = row.get(columns["image"]) if "image" in columns else None
    label = row.get(columns["label"]) if "label" in columns else None
    split = row.get(columns["split"]) if "split" in columns else None
    text = row.get(columns["text"])
    post_id = row.get(columns["id"])
    if post_id is None or text is None:
        raise ValueError("row missing id or text cell")
    return Post(
        id=str(post_id).strip(),
        dataset=dataset,
        text=_clean_text(str(text)),
        image=str(image).strip() if image and str(image).strip() else None,
        label=_parse_label(label, dataset),
        split=_parse_split(split),
    )


def ingest(
    source_uri: str | Path,
    dataset: Dataset | str,
    format: str = "jsonl",
    *,
    multimodal: bool | None = None,
    strict: bool = False,
) -> tuple[list[Post], CorpusManifest]:
    """Load a corpus file into Posts plus an accounting manifest.

    multimodal=None applies the dataset default (the four Twitter
    datasets drop rows without images, the generic schema keeps them).
    Malformed rows are counted and skipped unless strict, in which case
    the first one raises MalformedRecord. Duplicate ids keep the first
    occurrence (strict: rejected). Input order is preserved.
    """
    dataset = Dataset(dataset)
    if format not in ("jsonl", "tsv", "csv"):
        raise UnreadableSource(f"unknown format {format!r}")
    if multimodal is None:
        multimodal = dataset in MULTIMODAL_DATASETS

    path = Path(source_uri)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableSource(f"cannot read {source_uri}: {exc}") from exc
    normalized = _normalize_bytes(raw)

    manifest = CorpusManifest(
        dataset=dataset,
        source_uri=str(source_uri),
        checksum=hashlib.sha256(normalized).hexdigest(),
    )

    posts: list[Post] = []
    seen_ids: set[str] = set()

    def consume(line_no: int, build):
        try:
            post = build()
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            if strict:
                raise MalformedRecord(line_no, str(exc)) from exc
            manifest.malformed_skipped += 1
            return
        if post.id in seen_ids:
            if strict:
                raise MalformedRecord(line_no, f"duplicate id {post.id!r}")
            manifest.malformed_skipped += 1
            return
        seen_ids.add(post.id)
        manifest.total_raw += 1
        if multimodal and post.image is None:
            manifest.dropped_missing_image += 1
            return
        posts.append(post)

    text_stream = io.StringIO(normalized.decode("utf-8", errors="replace"))
    if format == "jsonl":
        for line_no, line in enumerate(text_stream, start=1):
            if not line.strip():
                continue
            consume(line_no, lambda line=line: _row_from_json(json.loads(line), dataset))
    else:
        delimiter = "\t" if format == "tsv" else ","
        reader = csv.DictReader(text_stream, delimiter=delimiter)
        if reader.fieldnames is None:
            raise UnreadableSource(f"{source_uri}: no header row")
        columns = _resolve_columns(reader.fieldnames)
        for line_no, row in enumerate(reader, start=2):
            consume(line_no, lambda row=row: _row_from_csv(row, columns, dataset))

    manifest.total_kept = len(posts)
    manifest.validate()
    return posts, manifest


def filter_multimodal(posts: list[Post]) -> list[Post]:
    """Keep only posts that carry an image reference, order preserved."""
    return [post for post in posts if post.image is not None]


def write_corpus_jsonl(posts: list[Post], out_path: str | Path) -> None:
    """Serialize posts in the generic jsonl schema (round-trips via ingest)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as f:
        for post in posts:
            f.write(json.dumps(post.to_json(), ensure_ascii=False) + "\n")


def write_manifest(manifest: CorpusManifest, out_path: str | Path) -> None:
    Path(out_path).write_text(
        json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8"
    )


def load_posts(path: str | Path, dataset: Dataset | str = Dataset.GENERIC) -> list[Post]:
    """Convenience loader for pipeline inputs already in the generic schema."""
    posts, _ = ingest(path, dataset, "jsonl", multimodal=False)
    return posts
