"""Shared test doubles."""

from __future__ import annotations


class ScriptedBackend:
    """Chat backend that replays queued responses per request_tag.

    Script values are either a single string (served repeatedly) or a
    list consumed front to back; exceptions in the list are raised.
    """

    def __init__(self, script: dict):
        self.script = {tag: (list(v) if isinstance(v, list) else v)
                       for tag, v in script.items()}
        self.calls = 0
        self.seen_tags: list[str] = []

    def complete(self, req):
        self.calls += 1
        self.seen_tags.append(req.request_tag)
        entry = self.script[req.request_tag]
        if isinstance(entry, list):
            item = entry.pop(0)
        else:
            item = entry
        if isinstance(item, Exception):
            raise item
        return item, "stop"


class FlakyBackend:
    """Fails with the given exceptions before finally succeeding."""

    def __init__(self, failures: list[Exception], text: str = "ok"):
        self.failures = list(failures)
        self.text = text
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        if self.failures:
            raise self.failures.pop(0)
        return self.text, "stop"


class StubEmbeddingBackend:
    """Fixed token -> vector table; whitespace tokenization."""

    def __init__(self, table: dict[str, list[float]], dim: int):
        self.table = table
        self.dim = dim
        self.calls = 0
        self.cache_id = "stub"

    def embed(self, text: str):
        from miko.gateway import TokenEmbeddings

        self.calls += 1
        tokens = text.split()
        emb = TokenEmbeddings(tokens, [self.table[t] for t in tokens], self.dim)
        emb.validate()
        return emb

    # evaluate() duck-types against the gateway surface
    def embed_tokens(self, text: str):
        return self.embed(text)
