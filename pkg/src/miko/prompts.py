"""Prompt templates for the three pipeline stages.

Templates live as UTF-8 files with {placeholder} slots, one file per
stage and one per relation for the intention stage, next to a
manifest.json that pins each template's version. Rendering is pure:
identical inputs produce identical bytes, and rendered prompts embed
their inputs verbatim. Downstream provenance records the versions from
the manifest, so any edit to a template file must bump its version.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import EmptyText, TemplateError
from .relations import RELATION_CODES, Relation, get_relation

# Placeholders each template is allowed to reference.
_DECLARED = {
    "caption": {"post_text"},
    "keyinfo": {"information_block"},
    "intention": {"post_text", "image_section", "keyinfo_block"},
}

_KEYINFO_SOURCE_TAGS = {
    "post": "Text information",
    "image_description": "Image description",
}


@dataclass(frozen=True)
class PromptTemplate:
    stage: str  # "caption", "keyinfo" or "intention"
    name: str  # manifest key, e.g. "caption" or "intention.xWant"
    text: str
    version: str

    def placeholders(self) -> set[str]:
        return {
            field
            for _, field, _, _ in string.Formatter().parse(self.text)
            if field
        }


def _default_template_dir() -> Path:
    return Path(str(resources.files("miko").joinpath("templates")))


class TemplateSet:
    """All templates from one directory, validated against the manifest."""

    def __init__(self, template_dir: str | Path | None = None):
        self.root = Path(template_dir) if template_dir else _default_template_dir()
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise TemplateError(f"no template manifest at {manifest_path}")
        self.versions: dict[str, str] = json.loads(manifest_path.read_text(encoding="utf-8"))
        self._templates: dict[str, PromptTemplate] = {}
        self._load("caption", "caption.txt")
        self._load("keyinfo", "keyinfo.txt")
        for code in RELATION_CODES:
            self._load(f"intention.{code}", f"intention_{code}.txt")
        self.prefixes = load_prefixes(self.root)

    def _load(self, name: str, filename: str) -> None:
        path = self.root / filename
        if not path.is_file():
            raise TemplateError(f"missing template file {path}")
        if name not in self.versions:
            raise TemplateError(f"template {name!r} has no version in manifest")
        stage = name.split(".", 1)[0]
        tpl = PromptTemplate(stage, name, path.read_text(encoding="utf-8"), self.versions[name])
        undeclared = tpl.placeholders() - _DECLARED[stage]
        if undeclared:
            raise TemplateError(f"{name}: undeclared placeholders {sorted(undeclared)}")
        self._templates[name] = tpl

    def get(self, name: str) -> PromptTemplate:
        return self._templates[name]

    # --- rendering ----------------------------------------------------

    def render_caption_prompt(self, post_text: str) -> str:
        if not post_text.strip():
            raise EmptyText("caption prompt needs nonempty post text")
        return self._templates["caption"].text.format(post_text=post_text)

    def render_keyinfo_prompt(self, source_text: str, source_kind: str = "post") -> str:
        """Render the key-information extraction prompt.

        source_kind "post" and "image_description" wrap source_text in the
        matching slot tag; "merged" passes a block that already carries its
        own labeled sections (built by the distiller) through unchanged.
        """
        if not source_text.strip():
            raise EmptyText("keyinfo prompt needs nonempty source text")
        if source_kind == "merged":
            block = source_text
        elif source_kind in _KEYINFO_SOURCE_TAGS:
            block = f"<{_KEYINFO_SOURCE_TAGS[source_kind]}>: {source_text}"
        else:
            raise TemplateError(f"unknown keyinfo source kind: {source_kind!r}")
        return self._templates["keyinfo"].text.format(information_block=block)

    def render_intention_prompt(
        self,
        post_text: str,
        image_description: str | None,
        keyinfo_fields: dict,
        relation: Relation | str,
    ) -> str:
        """Render the intention prompt for one relation.

        The image slot is omitted entirely for text-only posts; the
        key-information block serializes the five extracted fields.
        """
        if not post_text.strip():
            raise EmptyText("intention prompt needs nonempty post text")
        rel = relation if isinstance(relation, Relation) else get_relation(relation)
        image_section = (
            f"Image description: {image_description}\n" if image_description else ""
        )
        return self._templates[f"intention.{rel.code}"].text.format(
            post_text=post_text,
            image_section=image_section,
            keyinfo_block=format_keyinfo_block(keyinfo_fields),
        )

    def canonical_prefix(self, relation: Relation | str) -> str:
        rel = relation if isinstance(relation, Relation) else get_relation(relation)
        return self.prefixes[rel.code][0]


def format_keyinfo_block(fields: dict) -> str:
    keywords = fields["keywords"]
    if not isinstance(keywords, str):
        keywords = ", ".join(keywords)
    lines = [
        f"- Concept: {fields['concept']}",
        f"- Action: {fields['action']}",
        f"- Object: {fields['object']}",
        f"- Emotion: {fields['emotion']}",
        f"- Keywords: {keywords}",
    ]
    return "\n".join(lines)


def load_prefixes(template_dir: str | Path | None = None) -> dict[str, list[str]]:
    """Per-relation answer-prefix variants; first entry is canonical.

    Kept as config rather than code so evaluation can adjust phrasing
    variants without a rebuild.
    """
    root = Path(template_dir) if template_dir else _default_template_dir()
    data = json.loads((root / "prefixes.json").read_text(encoding="utf-8"))
    missing = [code for code in RELATION_CODES if code not in data or not data[code]]
    if missing:
        raise TemplateError(f"prefix table lacks relations: {missing}")
    return {code: list(data[code]) for code in RELATION_CODES}
