from __future__ import annotations

from pathlib import Path

import pytest

from miko.config import Config, build_gateway
from miko.corpus import load_posts
from miko.distiller import DistillOptions, run_pipeline
from miko.kb import KnowledgeBase

DATA = Path(__file__).parent / "data"


@pytest.fixture
def seven_posts():
    return load_posts(DATA / "corpus7.jsonl")


@pytest.fixture
def mock_gateway(tmp_path):
    return build_gateway(Config(), "mock", seed=0, cache_dir=tmp_path / "cache")


@pytest.fixture(scope="session")
def distilled(tmp_path_factory):
    """7-post fixture distilled once with the mock backend (read-only)."""
    root = tmp_path_factory.mktemp("distilled")
    posts = load_posts(DATA / "corpus7.jsonl")
    gw = build_gateway(Config(), "mock", seed=0, cache_dir=root / "cache")
    kb = KnowledgeBase.create(root / "kb")
    report = run_pipeline(posts, gw, kb, DistillOptions())
    assert report.posts_ok == 7
    return posts, kb, report
