"""Config file loading and gateway construction.

The config is a TOML-like key/value file: `key = value` lines, optional
[section] headers that prefix keys with "section.", # comments, strings
quoted or bare, ints/floats/booleans unquoted. Credentials are never
read from config files; API keys (and fallback base URLs) come from the
MIKO_* environment variables.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MikoError
from .gateway import (
    Gateway,
    HashEmbeddingBackend,
    HttpEmbeddingBackend,
    MockChatBackend,
    OpenAIChatBackend,
)

DEFAULT_RATE_LIMIT = 4.0


@dataclass
class BackendProfile:
    base_url: str = ""
    model_id: str = ""
    rate_limit: float = DEFAULT_RATE_LIMIT


@dataclass
class Config:
    backends: dict[str, BackendProfile] = field(default_factory=dict)
    parallel: int = 4
    caption_temperature: float = 0.7
    keyinfo_temperature: float = 0.0
    intention_temperature: float = 0.7
    cache_dir: str = ".miko-cache"
    template_dir: str | None = None
    strict: bool = False

    def backend(self, kind: str) -> BackendProfile:
        return self.backends.get(kind, BackendProfile())


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def parse_config_text(text: str) -> dict:
    values: dict[str, object] = {}
    section = ""
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise MikoError(f"config line {line_no}: expected key = value")
        key, raw = stripped.split("=", 1)
        full_key = f"{section}.{key.strip()}" if section else key.strip()
        values[full_key] = _parse_value(raw)
    return values


def load_config(path: str | Path | None) -> Config:
    config = Config()
    if path is None:
        return config
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    for kind in ("llm", "mllm", "embed"):
        profile = BackendProfile(
            base_url=str(values.get(f"backend.{kind}.base_url", "")),
            model_id=str(values.get(f"backend.{kind}.model_id", "")),
            rate_limit=float(values.get(f"backend.{kind}.rate_limit", DEFAULT_RATE_LIMIT)),
        )
        if profile.base_url or profile.model_id:
            config.backends[kind] = profile
    config.parallel = int(values.get("parallel", config.parallel))
    config.caption_temperature = float(
        values.get("temperature.caption", config.caption_temperature))
    config.keyinfo_temperature = float(
        values.get("temperature.keyinfo", config.keyinfo_temperature))
    config.intention_temperature = float(
        values.get("temperature.intention", config.intention_temperature))
    config.cache_dir = str(values.get("cache_dir", config.cache_dir))
    template_dir = values.get("template_dir", "")
    config.template_dir = str(template_dir) or None
    config.strict = bool(values.get("strict", config.strict))
    return config


def _env_base_url(kind: str) -> str:
    return os.environ.get(f"MIKO_{kind.upper()}_BASE_URL", "")


def _env_api_key(kind: str) -> str:
    return os.environ.get(f"MIKO_{kind.upper()}_API_KEY", "")


def build_gateway(config: Config, profile: str = "http", seed: int = 0,
                  cache_dir: str | Path | None = None,
                  embed_dim: int = 16) -> Gateway:
    """Construct a gateway for the named backend profile.

    "mock" wires the deterministic offline backends (no rate limiting;
    they are local and tests depend on fast re-runs). Anything else
    builds HTTP clients from config base URLs, with the environment
    filling credentials and any missing base URL.
    """
    cache = cache_dir if cache_dir is not None else config.cache_dir
    if profile == "mock":
        return Gateway(
            llm=MockChatBackend(seed),
            mllm=MockChatBackend(seed),
            embed=HashEmbeddingBackend(seed, dim=embed_dim),
            cache_dir=cache,
        )

    def chat_backend(kind: str):
        base = config.backend(kind).base_url or _env_base_url(kind)
        if not base:
            return None
        return OpenAIChatBackend(base, _env_api_key(kind))

    embed_base = config.backend("embed").base_url or _env_base_url("embed")
    return Gateway(
        llm=chat_backend("llm"),
        mllm=chat_backend("mllm"),
        embed=HttpEmbeddingBackend(embed_base, _env_api_key("embed")) if embed_base else None,
        cache_dir=cache,
        rate_limits={kind: config.backend(kind).rate_limit
                     for kind in ("llm", "mllm", "embed")},
    )
