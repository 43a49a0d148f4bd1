"""Typed records produced by the pipeline and persisted in the KB."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .relations import is_relation_code

KEYINFO_SOURCES = ("post_text", "image_description", "merged")


@dataclass(frozen=True)
class ImageDescription:
    post_id: str
    text: str
    model_id: str
    template_version: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("image description text must be nonempty")

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "text": self.text,
                "model_id": self.model_id, "template_version": self.template_version}

    @classmethod
    def from_json(cls, obj: dict) -> "ImageDescription":
        return cls(obj["post_id"], obj["text"], obj["model_id"], obj["template_version"])


@dataclass(frozen=True)
class KeyInfo:
    """The denoising extraction: concept, action, object, emotion, keywords."""

    post_id: str
    source: str  # one of KEYINFO_SOURCES
    concept: str
    action: str
    object: str
    emotion: str
    keywords: tuple[str, ...]

    def __post_init__(self):
        if self.source not in KEYINFO_SOURCES:
            raise ValueError(f"unknown keyinfo source {self.source!r}")
        if not 3 <= len(self.keywords) <= 5:
            raise ValueError(f"keyword count {len(self.keywords)} outside [3, 5]")
        if any(not k for k in self.keywords):
            raise ValueError("keywords must be nonempty")

    def fields(self) -> dict:
        return {"concept": self.concept, "action": self.action,
                "object": self.object, "emotion": self.emotion,
                "keywords": list(self.keywords)}

    def digest(self) -> str:
        blob = json.dumps(self.fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "source": self.source, **self.fields()}

    @classmethod
    def from_json(cls, obj: dict) -> "KeyInfo":
        return cls(obj["post_id"], obj["source"], obj["concept"], obj["action"],
                   obj["object"], obj["emotion"], tuple(obj["keywords"]))


@dataclass(frozen=True)
class IntentionRecord:
    """One generated intention for one post under one relation.

    text keeps the model's full sentence including its natural answer
    prefix; stripped_text has the prefix removed for scoring and export.
    """

    post_id: str
    relation: str
    text: str
    stripped_text: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not is_relation_code(self.relation):
            raise ValueError(f"unknown relation {self.relation!r}")
        if not self.stripped_text.strip():
            raise ValueError("stripped_text must be nonempty")

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "relation": self.relation,
                "text": self.text, "stripped_text": self.stripped_text,
                "provenance": self.provenance}

    @classmethod
    def from_json(cls, obj: dict) -> "IntentionRecord":
        return cls(obj["post_id"], obj["relation"], obj["text"],
                   obj["stripped_text"], obj.get("provenance", {}))
