"""Intention distillation toolkit for multimodal social-media posts."""

__version__ = "0.1.0"

from .corpus import Dataset, Post, filter_multimodal, ingest
from .gateway import ChatRequest, ChatResponse, Gateway, TokenEmbeddings
from .kb import KnowledgeBase
from .records import ImageDescription, IntentionRecord, KeyInfo
from .relations import RELATION_CODES, RELATIONS, Relation, get_relation

__all__ = [
    "Dataset",
    "Post",
    "ingest",
    "filter_multimodal",
    "ChatRequest",
    "ChatResponse",
    "Gateway",
    "TokenEmbeddings",
    "KnowledgeBase",
    "ImageDescription",
    "KeyInfo",
    "IntentionRecord",
    "Relation",
    "RELATIONS",
    "RELATION_CODES",
    "get_relation",
]
