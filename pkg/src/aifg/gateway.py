"""Uniform client for chat completion and text embedding.

Every pipeline stage talks to models through a :class:`Gateway`, which
runs in one of three modes: ``record`` (call the provider, append the
response to a transcript), ``replay`` (serve responses from a transcript,
no network), or ``passthrough`` (call the provider, record nothing). The
shipped embedder hashes character trigrams locally, so replay runs are
fully offline and byte-deterministic.

API keys are read from environment variables only (AIFG_CHAT_API_KEY,
AIFG_EMBED_API_KEY); they never appear in config files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import ConfigError, CorruptProviderError, ProviderError, ReplayMissError
from .kernels import trigram_embed

logger = logging.getLogger(__name__)

RECORD = "record"
REPLAY = "replay"
PASSTHROUGH = "passthrough"
MODES = (RECORD, REPLAY, PASSTHROUGH)

DEFAULT_EMBED_DIM = 256


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_output_chars: int = 8192


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    params: GenerationParams = GenerationParams()
    model_tag: str = "default"

    def validate(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        t = self.params.temperature
        if not (t == t and abs(t) != float("inf")) or t < 0:
            raise ValueError("temperature must be finite and non-negative")
        if self.params.max_output_chars <= 0:
            raise ValueError("max_output_chars must be positive")


def request_hash(req: ChatRequest) -> str:
    """Stable digest of the request's semantic content.

    max_output_chars is deliberately excluded so transcripts survive
    output-limit tweaks.
    """
    payload = json.dumps(
        {
            "system": req.system_prompt,
            "user": req.user_prompt,
            "temperature": round(req.params.temperature, 6),
            "model": req.model_tag,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    model_tag: str

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ValueError("values length does not match dim")


class Transcript:
    """Ordered (request_hash, response) log backing record/replay.

    On replay the first entry for a hash wins; a later entry with a
    different response for the same hash is logged and ignored.
    """

    def __init__(self, entries: list[tuple[str, str]] | None = None, mode: str = REPLAY):
        if mode not in MODES:
            raise ValueError(f"unknown transcript mode {mode!r}")
        self.mode = mode
        self.entries: list[tuple[str, str]] = []
        self._by_hash: dict[str, str] = {}
        for h, resp in entries or []:
            self.append(h, resp)

    def append(self, request_hash: str, response: str) -> None:
        self.entries.append((request_hash, response))
        if request_hash in self._by_hash:
            if self._by_hash[request_hash] != response:
                logger.warning("conflicting duplicate transcript entry for %s; keeping the first", request_hash)
        else:
            self._by_hash[request_hash] = response

    def lookup(self, request_hash: str) -> str:
        try:
            return self._by_hash[request_hash]
        except KeyError:
            raise ReplayMissError(request_hash) from None

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def load(cls, path: str | Path, mode: str = REPLAY) -> "Transcript":
        entries = []
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "hash" not in row or "response" not in row:
                    raise ConfigError(f"{path}:{line_no}: transcript row needs 'hash' and 'response'")
                entries.append((row["hash"], row["response"]))
        return cls(entries, mode=mode)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for h, resp in self.entries:
                f.write(json.dumps({"hash": h, "response": resp}, ensure_ascii=False) + "\n")


class HashEmbedder:
    """Offline embedder: L2-normalized hashed character trigrams.

    Deterministic by construction, which is what makes replay runs and the
    retrieval tests reproducible with no network.
    """

    def __init__(self, dim: int = DEFAULT_EMBED_DIM, model_tag: str | None = None):
        self.dim = dim
        self.model_tag = model_tag or f"hash-trigram-{dim}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [trigram_embed(t, self.dim) for t in texts]


class HttpChatProvider:
    """Chat-completions provider speaking the common JSON wire format."""

    def __init__(self, base_url: str, api_key_env: str = "AIFG_CHAT_API_KEY", timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ChatRequest) -> str:
        body = {
            "model": req.model_tag,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.params.temperature,
        }
        resp = requests.post(
            f"{self.base_url}/chat/completions", json=body, headers=self._headers(), timeout=self.timeout
        )
        resp.raise_for_status()
        data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise CorruptProviderError(f"unexpected chat response shape: {exc}") from exc


class HttpEmbedProvider:
    def __init__(
        self,
        base_url: str,
        model_tag: str,
        api_key_env: str = "AIFG_EMBED_API_KEY",
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_tag = model_tag
        self.api_key_env = api_key_env
        self.timeout = timeout

    def embed(self, texts: list[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model_tag, "input": texts},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        data = resp.json()
        try:
            rows = sorted(data["data"], key=lambda r: r.get("index", 0))
            return [list(map(float, r["embedding"])) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptProviderError(f"unexpected embeddings response shape: {exc}") from exc


class Gateway:
    """Shared, thread-safe front door for chat and embedding calls.

    Transcript appends are serialized by an internal lock; replay lookups
    are read-only after load. Retries: ``retries`` attempts with
    exponential backoff starting at ``backoff`` seconds.
    """

    def __init__(
        self,
        chat_provider=None,
        embed_provider=None,
        transcript: Transcript | None = None,
        mode: str = REPLAY,
        transcript_path: str | Path | None = None,
        retries: int = 3,
        backoff: float = 1.0,
        sleep=time.sleep,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown gateway mode {mode!r}")
        self.chat_provider = chat_provider
        self.embed_provider = embed_provider or HashEmbedder()
        self.mode = mode
        self.transcript = transcript if transcript is not None else Transcript(mode=mode)
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._lock = threading.Lock()

    # -- chat ---------------------------------------------------------------

    def chat(self, req: ChatRequest) -> str:
        req.validate()
        h = request_hash(req)
        if self.mode == REPLAY:
            return self.transcript.lookup(h).rstrip()
        if self.chat_provider is None:
            raise ConfigError("no chat provider configured for live mode")
        response = self._with_retry(lambda: self.chat_provider.complete(req)).rstrip()
        if self.mode == RECORD:
            with self._lock:
                self.transcript.append(h, response)
                if self.transcript_path:
                    with open(self.transcript_path, "a", encoding="utf-8") as f:
                        f.write(json.dumps({"hash": h, "response": response}, ensure_ascii=False) + "\n")
        return response

    # -- embeddings -----------------------------------------------------------

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("embed requires at least one text")
        if any(not t for t in texts):
            raise ValueError("embed requires non-empty texts")
        raw = self._with_retry(lambda: self.embed_provider.embed(texts))
        if len(raw) != len(texts):
            raise CorruptProviderError(f"provider returned {len(raw)} vectors for {len(texts)} texts")
        dims = {len(v) for v in raw}
        if len(dims) != 1:
            raise CorruptProviderError(f"mixed embedding dimensions in one batch: {sorted(dims)}")
        tag = getattr(self.embed_provider, "model_tag", "unknown")
        return [EmbeddingVector(tuple(v), len(v), tag) for v in raw]

    # -- plumbing ---------------------------------------------------------------

    def _with_retry(self, call):
        delay = self.backoff
        last: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                return call()
            except (requests.RequestException, ConnectionError, TimeoutError) as exc:
                last = exc
                logger.warning("provider call failed (attempt %d/%d): %s", attempt, self.retries, exc)
                if attempt < self.retries:
                    self._sleep(delay)
                    delay *= 2
        raise ProviderError(str(last), attempts=self.retries)


def load_config(path: str | Path) -> dict:
    """Read a TOML or JSON gateway config file."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(data.decode("utf-8"))
    return json.loads(data.decode("utf-8"))


def build_gateway(
    config: dict | None = None,
    transcript_path: str | Path | None = None,
    mode: str = REPLAY,
    sleep=time.sleep,
) -> Gateway:
    """Assemble a Gateway from a parsed config dict.

    With no config the gateway is offline: hash embedder, no chat provider,
    which is sufficient for replay mode.
    """
    config = config or {}
    chat_cfg = config.get("chat", {})
    embed_cfg = config.get("embed", {})

    chat_provider = None
    if chat_cfg.get("base_url"):
        chat_provider = HttpChatProvider(chat_cfg["base_url"])

    if embed_cfg.get("provider", "hash") == "http":
        if not embed_cfg.get("base_url") or not embed_cfg.get("model_tag"):
            raise ConfigError("http embed provider needs base_url and model_tag")
        embed_provider = HttpEmbedProvider(embed_cfg["base_url"], embed_cfg["model_tag"])
    else:
        embed_provider = HashEmbedder(dim=int(embed_cfg.get("dim", DEFAULT_EMBED_DIM)))

    transcript = None
    if transcript_path and Path(transcript_path).exists():
        transcript = Transcript.load(transcript_path, mode=mode)
    elif mode == REPLAY and transcript_path:
        raise ConfigError(f"replay mode needs an existing transcript at {transcript_path}")

    return Gateway(
        chat_provider=chat_provider,
        embed_provider=embed_provider,
        transcript=transcript,
        mode=mode,
        transcript_path=transcript_path if mode == RECORD else None,
        sleep=sleep,
    )
