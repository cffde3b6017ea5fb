"""Prompt assembly and completion/embedding providers.

The prompt is the preamble, the serialized exemplars in shuffled order, and
the serialized test constraint, separated by blank lines. Providers hide the
transport: an OpenAI-compatible HTTP client for real runs, a file-replay
provider for regression fixtures, and echo/noisy mocks for offline tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Union

import requests

from .errors import InvalidInputError, ProviderError
from .geometry import DomainConfig, Element, Layout, clamp_box
from .retrieval import Exemplar
from .rng import SplitMix64, mix_seed
from .serde import (
    ConstraintSpec,
    TaskKind,
    check_task_constraint,
    serialize_constraint,
    serialize_layout_html,
    serialize_preamble,
)

logger = logging.getLogger(__name__)

#: Header line printed above the serialized test constraint.
TEST_HEADER = "Test Sample"


@dataclass(frozen=True)
class GenerationParams:
    """Sampling and transport knobs for one generation run."""

    num_exemplars: int = 10
    num_samples: int = 10
    temperature: float = 0.7
    seed: int = 0
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    fan_out: int = 4

    def __post_init__(self) -> None:
        if self.num_exemplars < 0:
            raise InvalidInputError("num_exemplars must be >= 0")
        if self.num_samples < 1:
            raise InvalidInputError("num_samples must be >= 1")
        if self.temperature < 0:
            raise InvalidInputError("temperature must be >= 0")
        if self.timeout <= 0:
            raise InvalidInputError("timeout must be positive")
        if self.max_retries < 0:
            raise InvalidInputError("max_retries must be >= 0")
        if self.backoff < 0:
            raise InvalidInputError("backoff must be >= 0")
        if self.fan_out < 1:
            raise InvalidInputError("fan_out must be >= 1")


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered prompt plus the pieces it was assembled from.

    exemplar_blocks follow prompt (shuffled) order; exemplars keeps the
    retrieval order, best match first, so mocks and the evaluation path can
    still see which exemplar ranked highest.
    """

    preamble: str
    exemplar_blocks: tuple[tuple[str, str], ...]
    test_block: str
    rendered: str
    exemplars: tuple[Exemplar, ...] = ()


def prompt_hash(prompt: Union[PromptBundle, str]) -> str:
    """Stable fixture key: sha256 hex digest of the rendered prompt."""
    rendered = prompt.rendered if isinstance(prompt, PromptBundle) else prompt
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


def build_prompt(
    task: TaskKind,
    domain: DomainConfig,
    exemplars: Sequence[Exemplar],
    x_test: ConstraintSpec,
    seed: int,
    include_headers: bool = True,
    generation_cue: str = "",
) -> PromptBundle:
    """Assemble the in-context prompt for one test sample.

    The exemplar order is shuffled with a portable seeded generator so runs
    are reproducible across platforms. Blocks are separated by single blank
    lines; "Exemplar N" / "Test Sample" header lines are emitted unless
    include_headers is off; a non-empty generation_cue is appended on its
    own line after the test constraint.
    """
    check_task_constraint(task, x_test)
    for ex in exemplars:
        check_task_constraint(task, ex.constraint)

    order = list(exemplars)
    SplitMix64(seed).shuffle(order)

    preamble = serialize_preamble(task, domain)
    blocks = tuple(
        (serialize_constraint(task, ex.constraint), serialize_layout_html(ex.layout))
        for ex in order
    )
    test_block = serialize_constraint(task, x_test)

    parts = [preamble]
    for i, (constraint_text, layout_html) in enumerate(blocks, start=1):
        header = f"Exemplar {i}\n" if include_headers else ""
        parts.append(f"{header}{constraint_text}\n{layout_html}")
    test_text = (f"{TEST_HEADER}\n" if include_headers else "") + test_block
    if generation_cue:
        test_text += "\n" + generation_cue
    parts.append(test_text)

    return PromptBundle(
        preamble=preamble,
        exemplar_blocks=blocks,
        test_block=test_block,
        rendered="\n\n".join(parts),
        exemplars=tuple(exemplars),
    )


class CompletionProvider(Protocol):
    def complete(self, bundle: PromptBundle, params: GenerationParams) -> list[str]:
        """Return up to num_samples completion strings for the prompt."""
        ...


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> tuple[float, ...]:
        """Return a fixed-dimension embedding; deterministic per text."""
        ...


def complete(
    prompt: Union[PromptBundle, str],
    params: GenerationParams,
    provider: CompletionProvider,
) -> list[str]:
    """Request completions; raw strings are wrapped into a bare bundle."""
    if isinstance(prompt, str):
        prompt = PromptBundle(
            preamble="", exemplar_blocks=(), test_block=prompt, rendered=prompt
        )
    completions = provider.complete(prompt, params)
    if not completions:
        raise ProviderError("provider returned no completions")
    return completions


@dataclass(frozen=True)
class ProviderConfig:
    """Where and how to reach an OpenAI-compatible HTTP API."""

    base_url: str = "https://api.openai.com"
    model: str = "gpt-3.5-turbo"
    embedding_model: str = "text-embedding-ada-002"
    api_key_env: str = "LAYOUTGEN_API_KEY"
    completion_path: str = "/v1/chat/completions"
    embedding_path: str = "/v1/embeddings"


class OpenAICompatibleProvider:
    """Chat-completion and embedding client with retries and bounded fan-out.

    The API key is read from the configured environment variable at call
    time and never logged. Rate-limit and server errors are retried with
    exponential backoff; the num_samples requests run concurrently but the
    returned list preserves request order so downstream tie-breaks stay
    deterministic.
    """

    dimension = 1536  # common embedding width; actual size taken from responses

    def __init__(self, config: ProviderConfig) -> None:
        self.config = config

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ProviderError(
                f"no API key: set the {self.config.api_key_env} environment variable"
            )
        return key

    def _post(self, path: str, payload: dict, params: GenerationParams) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: Optional[str] = None
        for attempt in range(params.max_retries + 1):
            if attempt:
                time.sleep(params.backoff * (2 ** (attempt - 1)))
            try:
                logger.debug("POST %s payload=%s", url, json.dumps(payload)[:2000])
                response = requests.post(
                    url, json=payload, headers=headers, timeout=params.timeout
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                logger.debug("attempt %d failed: %s", attempt + 1, exc)
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.debug("attempt %d got %s; backing off", attempt + 1, last_error)
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"{url} returned HTTP {response.status_code}: {response.text[:500]}"
                )
            logger.debug("response=%s", response.text[:2000])
            return response.json()
        raise ProviderError(f"{url} failed after {params.max_retries + 1} attempts: {last_error}")

    def _one_completion(self, rendered: str, params: GenerationParams) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": rendered}],
            "temperature": params.temperature,
            "presence_penalty": 0,
            "frequency_penalty": 0,
        }
        body = self._post(self.config.completion_path, payload, params)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {body}") from exc

    def complete(self, bundle: PromptBundle, params: GenerationParams) -> list[str]:
        results: list[Optional[str]] = [None] * params.num_samples

        def worker(slot: int) -> None:
            try:
                results[slot] = self._one_completion(bundle.rendered, params)
            except ProviderError as exc:
                logger.warning("sample %d failed: %s", slot, exc)

        with ThreadPoolExecutor(max_workers=params.fan_out) as pool:
            list(pool.map(worker, range(params.num_samples)))
        successes = [r for r in results if r is not None]
        if not successes:
            raise ProviderError(
                f"all {params.num_samples} completion requests failed"
            )
        if len(successes) < params.num_samples:
            logger.warning(
                "only %d of %d completions succeeded",
                len(successes),
                params.num_samples,
            )
        return successes

    def embed(self, text: str) -> tuple[float, ...]:
        if not text:
            raise InvalidInputError("cannot embed empty text")
        payload = {"model": self.config.embedding_model, "input": text}
        body = self._post(self.config.embedding_path, payload, GenerationParams())
        try:
            return tuple(float(v) for v in body["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embedding response: {body}") from exc


class ReplayProvider:
    """Serve completions from a fixture file keyed by prompt hash.

    The fixture is a JSON array of {"prompt_hash": ..., "completions": [...]}
    entries, recorded from earlier runs; unknown prompts are an error so
    fixture drift is caught immediately.
    """

    def __init__(self, path: str) -> None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                entries = json.load(fh)
            self._fixtures: dict[str, list[str]] = {
                entry["prompt_hash"]: list(entry["completions"]) for entry in entries
            }
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ProviderError(f"cannot load replay fixture {path}: {exc}") from exc
        self._path = path

    def complete(self, bundle: PromptBundle, params: GenerationParams) -> list[str]:
        key = prompt_hash(bundle)
        completions = self._fixtures.get(key)
        if completions is None:
            raise ProviderError(f"{self._path}: no fixture for prompt hash {key}")
        if len(completions) < params.num_samples:
            logger.warning(
                "fixture holds %d completions, %d requested; returning all",
                len(completions),
                params.num_samples,
            )
            return list(completions)
        return completions[: params.num_samples]


class EchoMockProvider:
    """Return num_samples copies of the best-retrieved exemplar's layout HTML."""

    def complete(self, bundle: PromptBundle, params: GenerationParams) -> list[str]:
        if not bundle.exemplars:
            raise InvalidInputError("echo provider needs a prompt built from exemplars")
        html = serialize_layout_html(bundle.exemplars[0].layout)
        return [html] * params.num_samples


class NoisyMockProvider:
    """Deterministic seeded jitter of the retrieved exemplar layouts.

    Sample i perturbs exemplar i (mod count) with per-sample derived seeds,
    giving num_samples distinct but reproducible candidates for exercising
    the ranker.
    """

    position_jitter = 3
    size_jitter = 2

    def complete(self, bundle: PromptBundle, params: GenerationParams) -> list[str]:
        if not bundle.exemplars:
            raise InvalidInputError("noisy provider needs a prompt built from exemplars")
        outputs = []
        for i in range(params.num_samples):
            base = bundle.exemplars[i % len(bundle.exemplars)].layout
            rng = SplitMix64(mix_seed(params.seed, i))
            elements = []
            for e in base.elements:
                clamped = clamp_box(
                    e.box.left + rng.randint(-self.position_jitter, self.position_jitter),
                    e.box.top + rng.randint(-self.position_jitter, self.position_jitter),
                    max(0, e.box.width + rng.randint(-self.size_jitter, self.size_jitter)),
                    max(0, e.box.height + rng.randint(-self.size_jitter, self.size_jitter)),
                    base.canvas,
                )
                elements.append(Element(e.type_label, clamped))
            outputs.append(
                serialize_layout_html(Layout(canvas=base.canvas, elements=tuple(elements)))
            )
        return outputs


class HashEmbeddingProvider:
    """Offline stand-in embedding: 64 dims accumulated from token hashes.

    The vector depends only on the text's tokens, so equal texts map to
    equal unit-norm vectors and similar token multisets land near each
    other; no network involved.
    """

    dimension = 64

    def embed(self, text: str) -> tuple[float, ...]:
        if not text:
            raise InvalidInputError("cannot embed empty text")
        values = [0.0] * self.dimension
        for token in text.lower().split():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            for k in range(4):
                chunk = int.from_bytes(digest[k * 8 : (k + 1) * 8], "big")
                idx = chunk % self.dimension
                magnitude = ((chunk >> 8) % 2001) / 1000.0 - 1.0
                values[idx] += magnitude
        norm = sum(v * v for v in values) ** 0.5
        if norm == 0.0:
            values[0] = 1.0
            norm = 1.0
        return tuple(v / norm for v in values)


class CachedEmbeddingProvider:
    """Content-hash cache in front of any embedding provider.

    Safe for concurrent readers; writes are serialized. The cache can be
    persisted to JSON alongside the index so re-ingesting never re-requests
    an embedding it already paid for.
    """

    def __init__(self, provider: EmbeddingProvider, path: Optional[str] = None) -> None:
        self._provider = provider
        self._path = path
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[float, ...]] = {}
        if path and os.path.exists(path):
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    stored = json.load(fh)
                self._cache = {k: tuple(v) for k, v in stored.items()}
            except (json.JSONDecodeError, AttributeError, TypeError) as exc:
                logger.warning("ignoring unreadable embedding cache %s: %s", path, exc)

    @property
    def dimension(self) -> int:
        return self._provider.dimension

    def embed(self, text: str) -> tuple[float, ...]:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        vector = self._provider.embed(text)
        with self._lock:
            self._cache[key] = vector
        return vector

    def save(self) -> None:
        if not self._path:
            return
        with self._lock:
            snapshot = {k: list(v) for k, v in sorted(self._cache.items())}
        tmp = self._path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh, sort_keys=True)
        os.replace(tmp, self._path)


def embed(text: str, provider: EmbeddingProvider) -> tuple[float, ...]:
    """Embed text through the given provider; empty text is refused."""
    if not text:
        raise InvalidInputError("cannot embed empty text")
    return provider.embed(text)
