"""The 10-relation taxonomy used for intention generation.

Nine relations follow the ATOMIC social-commonsense scheme ("x" = the
posting user, "o" = viewers of the post); the tenth is an open relation
for the free-form motive behind publishing the post. The tuple order
below is the canonical taxonomy order used everywhere downstream
(prompting, storage, exports, reports).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidRelation


@dataclass(frozen=True)
class Relation:
    code: str
    perspective: str  # "agent", "other" or "open"
    gloss: str


RELATIONS: tuple[Relation, ...] = (
    Relation("xNeed", "agent", "user's need"),
    Relation("xIntent", "agent", "user's intention"),
    Relation("xAttr", "agent", "user's attribute"),
    Relation("xEffect", "agent", "effect of user's action"),
    Relation("xReact", "agent", "user's reaction"),
    Relation("xWant", "agent", "user's desire"),
    Relation("oEffect", "other", "impact on others"),
    Relation("oReact", "other", "others' reaction"),
    Relation("oWant", "other", "others' desire"),
    Relation("Open", "open", "motive behind publishing the post"),
)

RELATION_CODES: tuple[str, ...] = tuple(r.code for r in RELATIONS)

_BY_CODE = {r.code: r for r in RELATIONS}


def get_relation(code: str) -> Relation:
    """Look up a relation by its code, raising InvalidRelation otherwise."""
    try:
        return _BY_CODE[code]
    except KeyError:
        raise InvalidRelation(f"unknown relation code: {code!r}") from None


def is_relation_code(code: str) -> bool:
    return code in _BY_CODE


def summarize_relation_counts(counts: dict[str, int]) -> dict:
    """Total and per-relation summary over the 10 relations.

    `average` is the nearest integer (halves round up) of total / 10,
    the convention used in benchmark reports.
    """
    per_relation = {code: int(counts.get(code, 0)) for code in RELATION_CODES}
    total = sum(per_relation.values())
    return {
        "per_relation_counts": per_relation,
        "total": total,
        "average": int(total / len(RELATIONS) + 0.5),
    }
