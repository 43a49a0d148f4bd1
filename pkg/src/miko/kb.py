"""Append-only intention knowledge base.

One directory holds three jsonl segments (descriptions.jsonl,
keyinfo.jsonl, intentions.jsonl), a meta.json, and a sidecar index.json
that is rebuilt from the segments on open, so the KB ships as a plain
diff-friendly dataset artifact. Single writer, many readers; a torn
trailing line left by a crash is quarantined on open and everything
before it stays queryable.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateKey
from .records import ImageDescription, IntentionRecord, KeyInfo
from .relations import RELATION_CODES, summarize_relation_counts

FORMAT_VERSION = 1

_SEGMENTS = {
    ImageDescription: "descriptions.jsonl",
    KeyInfo: "keyinfo.jsonl",
    IntentionRecord: "intentions.jsonl",
}


@dataclass
class KbStats:
    per_relation: dict[str, int]
    total: int
    average: int

    def to_json(self) -> dict:
        return {"per_relation_counts": self.per_relation,
                "total": self.total, "average": self.average}


def _quarantine_torn_tail(path: Path) -> None:
    """Move an unparseable trailing line into <segment>.quarantine."""
    raw = path.read_bytes()
    if not raw:
        return
    lines = raw.split(b"\n")
    # A clean file ends with a newline, leaving one empty trailing chunk.
    if lines[-1] == b"":
        return
    torn = lines[-1]
    with (path.parent / (path.name + ".quarantine")).open("ab") as q:
        q.write(torn + b"\n")
    path.write_bytes(b"\n".join(lines[:-1]) + (b"\n" if lines[:-1] else b""))


class KnowledgeBase:
    def __init__(self, root: str | Path, create: bool = False,
                 meta: dict | None = None):
        self.root = Path(root)
        self._lock = threading.Lock()
        meta_path = self.root / "meta.json"
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
            self.meta = {
                "format_version": FORMAT_VERSION,
                "pipeline_version": "",
                "template_versions": {},
                "created_at": datetime.now(timezone.utc).isoformat(),
            }
            self.meta.update(meta or {})
            meta_path.write_text(json.dumps(self.meta, indent=2) + "\n", encoding="utf-8")
            for name in _SEGMENTS.values():
                (self.root / name).touch()
        else:
            if not meta_path.is_file():
                raise FileNotFoundError(f"{self.root} is not a knowledge base (no meta.json)")
            self.meta = json.loads(meta_path.read_text(encoding="utf-8"))
            if self.meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(
                    f"unsupported KB format {self.meta.get('format_version')!r}")
        self._recover_and_index()

    @classmethod
    def create(cls, root: str | Path, meta: dict | None = None) -> "KnowledgeBase":
        return cls(root, create=True, meta=meta)

    def _recover_and_index(self) -> None:
        # (post_id, relation) -> byte offset into intentions.jsonl
        self._intention_index: dict[tuple[str, str], int] = {}
        self._post_relations: dict[str, set[str]] = {}
        self._description_posts: set[str] = set()
        self._keyinfo_posts: set[str] = set()
        for name in _SEGMENTS.values():
            path = self.root / name
            if path.is_file():
                _quarantine_torn_tail(path)
        path = self.root / _SEGMENTS[IntentionRecord]
        if path.is_file():
            offset = 0
            with path.open("rb") as f:
                for line in f:
                    obj = json.loads(line)
                    self._intention_index[(obj["post_id"], obj["relation"])] = offset
                    self._post_relations.setdefault(obj["post_id"], set()).add(obj["relation"])
                    offset += len(line)
        for record_cls, bucket in ((ImageDescription, self._description_posts),
                                   (KeyInfo, self._keyinfo_posts)):
            seg = self.root / _SEGMENTS[record_cls]
            if seg.is_file():
                with seg.open("rb") as f:
                    for line in f:
                        bucket.add(json.loads(line)["post_id"])

    # --- writes -----------------------------------------------------------

    def append(self, record: ImageDescription | KeyInfo | IntentionRecord) -> None:
        segment = _SEGMENTS.get(type(record))
        if segment is None:
            raise TypeError(f"cannot store {type(record).__name__}")
        with self._lock:
            if isinstance(record, IntentionRecord):
                key = (record.post_id, record.relation)
                if key in self._intention_index:
                    raise DuplicateKey(f"intention already stored for {key}")
            path = self.root / segment
            line = json.dumps(record.to_json(), ensure_ascii=False) + "\n"
            with path.open("a", encoding="utf-8") as f:
                offset = f.tell()
                f.write(line)
                f.flush()
            if isinstance(record, IntentionRecord):
                self._intention_index[(record.post_id, record.relation)] = offset
                self._post_relations.setdefault(record.post_id, set()).add(record.relation)
            elif isinstance(record, ImageDescription):
                self._description_posts.add(record.post_id)
            else:
                self._keyinfo_posts.add(record.post_id)

    def write_index(self) -> None:
        """Persist the sidecar index (informational; open() always rescans)."""
        entries = [[pid, rel, off] for (pid, rel), off in sorted(self._intention_index.items())]
        (self.root / "index.json").write_text(
            json.dumps({"intentions": entries}, indent=2) + "\n", encoding="utf-8")

    def close(self) -> None:
        self.write_index()

    # --- reads ------------------------------------------------------------

    def _iter_segment(self, record_cls) -> Iterator[dict]:
        path = self.root / _SEGMENTS[record_cls]
        if not path.is_file():
            return
        with path.open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    yield json.loads(line)

    def query(
        self,
        post_ids: Iterable[str] | None = None,
        relations: Iterable[str] | None = None,
        dataset: str | None = None,
    ) -> Iterator[IntentionRecord]:
        """Intention records matching every given predicate, in append order."""
        post_ids = set(post_ids) if post_ids is not None else None
        relations = set(relations) if relations is not None else None
        for obj in self._iter_segment(IntentionRecord):
            if post_ids is not None and obj["post_id"] not in post_ids:
                continue
            if relations is not None and obj["relation"] not in relations:
                continue
            if dataset is not None and obj.get("provenance", {}).get("dataset") != dataset:
                continue
            yield IntentionRecord.from_json(obj)

    def get(self, post_id: str, relation: str) -> IntentionRecord | None:
        offset = self._intention_index.get((post_id, relation))
        if offset is None:
            return None
        with (self.root / _SEGMENTS[IntentionRecord]).open("rb") as f:
            f.seek(offset)
            return IntentionRecord.from_json(json.loads(f.readline()))

    def descriptions(self) -> Iterator[ImageDescription]:
        for obj in self._iter_segment(ImageDescription):
            yield ImageDescription.from_json(obj)

    def description_for(self, post_id: str) -> ImageDescription | None:
        for desc in self.descriptions():
            if desc.post_id == post_id:
                return desc
        return None

    def keyinfos(self) -> Iterator[KeyInfo]:
        for obj in self._iter_segment(KeyInfo):
            yield KeyInfo.from_json(obj)

    def keyinfo_for(self, post_id: str) -> KeyInfo | None:
        for ki in self.keyinfos():
            if ki.post_id == post_id:
                return ki
        return None

    def post_ids(self) -> list[str]:
        """Distinct post ids among intention records, in first-seen order."""
        seen: dict[str, None] = {}
        for obj in self._iter_segment(IntentionRecord):
            seen.setdefault(obj["post_id"], None)
        return list(seen)

    def relations_for(self, post_id: str) -> set[str]:
        return set(self._post_relations.get(post_id, ()))

    def intentions_by_post(self) -> dict[str, dict[str, IntentionRecord]]:
        """All intention records grouped post -> relation, one segment pass."""
        grouped: dict[str, dict[str, IntentionRecord]] = {}
        for record in self.query():
            grouped.setdefault(record.post_id, {})[record.relation] = record
        return grouped

    def stats(self) -> KbStats:
        counts = Counter(rel for (_, rel) in self._intention_index)
        summary = summarize_relation_counts({code: counts.get(code, 0) for code in RELATION_CODES})
        return KbStats(summary["per_relation_counts"], summary["total"], summary["average"])
