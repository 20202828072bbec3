"""Example selection (train-split only, enforced) and synthetic message
generation through a generator abstraction.

Two generators ship: a remote chat-completions client configured through
IGAIVA_LLM_BASE_URL / IGAIVA_LLM_API_KEY / IGAIVA_LLM_MODEL, and an offline
mock that deterministically perturbs each example (synonym substitution
plus clause shuffling) so the whole pipeline runs without a network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import AbstractSet, Callable, Mapping, Protocol, Sequence

from .corpus import ORIGIN_SYNTHETIC, Dataset, Message
from .errors import DataError, GeneratorError
from .features import tokenize
from .heatmap import Region, region_membership
from .projection import Embedding2D

logger = logging.getLogger(__name__)

ENV_BASE_URL = "IGAIVA_LLM_BASE_URL"
ENV_API_KEY = "IGAIVA_LLM_API_KEY"
ENV_MODEL = "IGAIVA_LLM_MODEL"

PROMPT_TEMPLATE = (
    "You write realistic support-ticket messages. Given an example, produce "
    "{k} distinct new messages on the same topic and style, same language, "
    "one per line, no numbering."
)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    max_tokens: int = 550
    top_p: float = 0.5
    frequency_penalty: float = 0.3
    presence_penalty: float = 0.0
    per_example_count: int = 5

    def __post_init__(self) -> None:
        if self.per_example_count < 1:
            raise DataError(f"per_example_count must be >= 1, got {self.per_example_count}")
        if self.temperature < 0:
            raise DataError(f"temperature must be >= 0, got {self.temperature}")
        if not (0 < self.top_p <= 1):
            raise DataError(f"top_p must be in (0, 1], got {self.top_p}")

    def to_json(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "top_p": self.top_p,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
            "per_example_count": self.per_example_count,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "GenerationParams":
        return cls(
            temperature=float(doc.get("temperature", 0.7)),  # type: ignore[arg-type]
            max_tokens=int(doc.get("max_tokens", 550)),  # type: ignore[arg-type]
            top_p=float(doc.get("top_p", 0.5)),  # type: ignore[arg-type]
            frequency_penalty=float(doc.get("frequency_penalty", 0.3)),  # type: ignore[arg-type]
            presence_penalty=float(doc.get("presence_penalty", 0.0)),  # type: ignore[arg-type]
            per_example_count=int(doc.get("per_example_count", 5)),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class SynthesisRequest:
    target_label: str
    example_ids: tuple[str, ...]
    params: GenerationParams = field(default_factory=GenerationParams)
    generator: str = "mock"  # "mock" or "remote"
    run_id: str = "run"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.example_ids:
            raise DataError("synthesis request needs at least one example id")
        if self.generator not in ("mock", "remote"):
            raise DataError(f"unknown generator {self.generator!r}")

    def validate_against_split(self, train_ids: AbstractSet[str]) -> None:
        outside = [e for e in self.example_ids if e not in train_ids]
        if outside:
            raise DataError(
                f"example id(s) outside the training split: {outside[:5]} "
                "(examples must never come from test data)"
            )

    def to_json(self) -> dict:
        return {
            "target_label": self.target_label,
            "example_ids": list(self.example_ids),
            "params": self.params.to_json(),
            "generator": self.generator,
            "run_id": self.run_id,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "SynthesisRequest":
        return cls(
            target_label=str(doc["target_label"]),
            example_ids=tuple(doc["example_ids"]),  # type: ignore[arg-type]
            params=GenerationParams.from_json(doc.get("params", {})),  # type: ignore[arg-type]
            generator=str(doc.get("generator", "mock")),
            run_id=str(doc.get("run_id", "run")),
            seed=int(doc.get("seed", 0)),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class SyntheticBatch:
    messages: tuple[Message, ...]
    request: SynthesisRequest
    rejected: tuple[str, ...]  # human-readable log of dropped outputs

    def __len__(self) -> int:
        return len(self.messages)


# ---------------------------------------------------------------------------
# Example selection: every selector intersects with the training split and
# asserts the train-only postcondition.


def _assert_train_only(selected: Sequence[str], train_ids: AbstractSet[str]) -> None:
    leaked = [s for s in selected if s not in train_ids]
    if leaked:
        raise DataError(f"selection leaked non-training id(s): {leaked[:5]}")


def select_examples_in_region(
    dataset: Dataset,
    train_ids: AbstractSet[str],
    embedding: Embedding2D,
    region: Region,
    class_filter: str | None = None,
) -> list[str]:
    """Training messages whose embedded points fall in the region, optionally
    restricted to one class. Never returns a test id."""
    candidate_ids = [mid for mid in embedding.ids if mid in train_ids]
    if class_filter is not None:
        candidate_ids = [mid for mid in candidate_ids if dataset.get(mid).label == class_filter]
    points = [(mid, *embedding.point_of(mid)) for mid in candidate_ids]
    members = region_membership(points, region)
    selected = [mid for mid in candidate_ids if mid in members]
    _assert_train_only(selected, train_ids)
    if not selected:
        logger.info("region selection is empty (class_filter=%r)", class_filter)
    return selected


def select_examples_by_keywords(
    dataset: Dataset,
    train_ids: AbstractSet[str],
    label: str,
    include_terms: Sequence[str],
    stopwords: str | frozenset[str] | None = None,
) -> list[str]:
    """Training messages of the class whose token set intersects the terms."""
    if not include_terms:
        raise DataError("include_terms must be non-empty")
    wanted = {t.lower() for t in include_terms}
    selected = []
    for mid in dataset.class_index.get(label, ()):
        if mid not in train_ids:
            continue
        if wanted & set(tokenize(dataset.get(mid).text, stopwords=stopwords)):
            selected.append(mid)
    _assert_train_only(selected, train_ids)
    return selected


def select_examples_random(
    dataset: Dataset,
    train_ids: AbstractSet[str],
    label: str,
    n: int,
    seed: int,
) -> list[str]:
    """n distinct training messages of the class, uniform under the seed."""
    pool = sorted(mid for mid in dataset.class_index.get(label, ()) if mid in train_ids)
    if n > len(pool):
        raise DataError(
            f"requested {n} examples but class {label!r} has only {len(pool)} training messages"
        )
    selected = random.Random(seed).sample(pool, n)
    _assert_train_only(selected, train_ids)
    return selected


# ---------------------------------------------------------------------------
# Generators


class Generator(Protocol):
    name: str

    def generate(self, example: Message, k: int, params: GenerationParams, seed: int) -> list[str]:
        """Up to k candidate texts for one example."""
        ...


_CLAUSE_SPLIT = re.compile(r"(?<=[,.;:])\s+")


_NUMBER_RE = re.compile(r"\d+")
_WORD_CORE = re.compile(r"^(\W*)(\w+)(\W*)$", re.UNICODE)


class MockGenerator:
    """Offline deterministic generator.

    Each variant reshuffles clause order and substitutes synonyms under a
    per-example seed; when that alone cannot yield another distinct text
    (short messages have few clause orders), numeric tokens are re-rolled
    and, as a last resort, a reference number is appended, the way real
    ticket messages vary phone and case numbers. Output is never byte-equal
    to the example.
    """

    name = "mock"

    def __init__(self, synonyms: Mapping[str, Sequence[str]] | None = None):
        self.synonyms = {k: list(v) for k, v in (synonyms or {}).items()}

    def _shuffle_clauses(self, text: str, rng: random.Random) -> str:
        clauses = _CLAUSE_SPLIT.split(text.strip())
        if len(clauses) < 2:
            words = text.split()
            if len(words) >= 2:
                half = len(words) // 2
                clauses = [" ".join(words[:half]), " ".join(words[half:])]
            else:
                clauses = words
        for _ in range(8):
            order = list(range(len(clauses)))
            rng.shuffle(order)
            candidate = " ".join(clauses[i] for i in order)
            if candidate != text:
                return candidate
        return " ".join(reversed(clauses))

    def _substitute(self, text: str, rng: random.Random) -> str:
        if not self.synonyms:
            return text
        out_words = []
        for word in text.split():
            match = _WORD_CORE.match(word)
            alts = self.synonyms.get(match.group(2)) if match else None
            if alts and rng.random() < 0.5:
                out_words.append(match.group(1) + rng.choice(alts) + match.group(3))
            else:
                out_words.append(word)
        return " ".join(out_words)

    def generate(self, example: Message, k: int, params: GenerationParams, seed: int) -> list[str]:
        rng = random.Random(f"{seed}/{example.id}")
        variants: list[str] = []
        seen: set[str] = {example.text}
        attempts = 0
        while len(variants) < k and attempts < 30 * k:
            attempts += 1
            candidate = self._substitute(self._shuffle_clauses(example.text, rng), rng)
            if candidate in seen:
                candidate = _NUMBER_RE.sub(lambda _m: str(rng.randrange(10000)), candidate)
            if candidate in seen:
                candidate = f"{candidate} ref {rng.randrange(1000, 10000)}"
            if candidate and candidate not in seen:
                seen.add(candidate)
                variants.append(candidate)
        return variants


class RemoteGenerator:
    """Chat-completions client. One call per example; the completion is
    expected to carry the k variants one per line. Transient failures retry
    three times with exponential backoff."""

    name = "remote"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        transport=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.getenv(ENV_BASE_URL) or "").rstrip("/")
        self.api_key = api_key or os.getenv(ENV_API_KEY) or ""
        self.model = model or os.getenv(ENV_MODEL) or ""
        if not self.base_url:
            raise GeneratorError(f"remote generator needs a base URL ({ENV_BASE_URL})")
        if not self.model:
            raise GeneratorError(f"remote generator needs a model name ({ENV_MODEL})")
        self.timeout = timeout
        self.max_retries = max_retries
        self._transport = transport
        self._sleep = sleep

    def _post(self, payload: dict) -> dict:
        import httpx

        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                    resp = client.post(url, headers=headers, json=payload)
                if resp.status_code >= 400:
                    raise GeneratorError(f"generator HTTP {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except Exception as exc:  # noqa: BLE001 - retried, then surfaced
                last_err = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(0.5 * (2**attempt))
        raise GeneratorError(f"generator request failed after {self.max_retries} attempts: {last_err}")

    def generate(self, example: Message, k: int, params: GenerationParams, seed: int) -> list[str]:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": PROMPT_TEMPLATE.format(k=k)},
                {"role": "user", "content": example.text},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        }
        doc = self._post(payload)
        try:
            content = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            logger.warning("unparseable completion for example %s; skipping", example.id)
            return []
        lines = [line.strip() for line in str(content).splitlines()]
        return [line for line in lines if line][:k]


def prompt_hash(generator_name: str, example: Message, k: int, seed: int) -> str:
    if generator_name == "remote":
        raw = PROMPT_TEMPLATE.format(k=k) + "\n" + example.text
    else:
        raw = f"mock/{seed}/{example.id}/{example.text}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def make_generator(
    kind: str,
    synonyms: Mapping[str, Sequence[str]] | None = None,
    **remote_kwargs,
) -> Generator:
    if kind == "mock":
        return MockGenerator(synonyms=synonyms)
    if kind == "remote":
        return RemoteGenerator(**remote_kwargs)
    raise DataError(f"unknown generator kind {kind!r}")


def synthesize(
    request: SynthesisRequest,
    corpus: Dataset,
    generator: Generator | None = None,
    parallelism: int = 4,
    on_progress: Callable[[int, int], None] | None = None,
) -> SyntheticBatch:
    """Generate up to len(examples) * k synthetic messages for the target
    class. Outputs that are empty or exact duplicates of any example or of
    an earlier generation in the batch are dropped and logged. Remote calls
    run concurrently up to `parallelism`, with results re-assembled in
    example order; synthetic ids are namespaced "<run-id>/<n>" so they can
    never collide with collected ids.
    """
    gen = generator or make_generator(request.generator)
    examples = [corpus.get(mid) for mid in request.example_ids]
    k = request.params.per_example_count

    def one(example: Message) -> list[str]:
        return gen.generate(example, k, request.params, request.seed)

    if gen.name == "remote" and parallelism > 1 and len(examples) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            per_example = list(pool.map(one, examples))
    else:
        per_example = [one(e) for e in examples]

    example_texts = {e.text for e in examples}
    seen: set[str] = set()
    messages: list[Message] = []
    rejected: list[str] = []
    counter = 0
    failed_examples = 0
    for example, texts in zip(examples, per_example):
        if not texts:
            failed_examples += 1
            rejected.append(f"example {example.id}: no output")
            continue
        for text in texts:
            if not text.strip():
                rejected.append(f"example {example.id}: empty output dropped")
                continue
            if text in example_texts:
                rejected.append(f"example {example.id}: duplicate of an example dropped")
                continue
            if text in seen:
                rejected.append(f"example {example.id}: duplicate generation dropped")
                continue
            seen.add(text)
            messages.append(
                Message(
                    id=f"{request.run_id}/{counter}",
                    text=text,
                    label=request.target_label,
                    origin=ORIGIN_SYNTHETIC,
                    provenance={
                        "generator": gen.name,
                        "examples": [example.id],
                        "prompt_hash": prompt_hash(gen.name, example, k, request.seed),
                    },
                )
            )
            counter += 1
        if on_progress is not None:
            on_progress(counter, len(examples) * k)
    if failed_examples == len(examples):
        raise GeneratorError("all examples failed to produce output")
    return SyntheticBatch(messages=tuple(messages), request=request, rejected=tuple(rejected))


def save_batch(batch: SyntheticBatch, path: str | Path) -> None:
    """Messages as JSONL plus a .meta.json sidecar with the request snapshot
    and the rejected-output log."""
    from .corpus import save_dataset

    path = Path(path)
    save_dataset(list(batch.messages), path)
    meta = {
        "schema": 1,
        "kind": "synthetic_batch",
        "request": batch.request.to_json(),
        "rejected": list(batch.rejected),
    }
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(meta, ensure_ascii=False), encoding="utf-8"
    )


def load_batch(path: str | Path) -> SyntheticBatch:
    from .corpus import load_dataset

    path = Path(path)
    ds = load_dataset(path)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if not meta_path.exists():
        raise DataError(f"batch metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return SyntheticBatch(
        messages=ds.messages,
        request=SynthesisRequest.from_json(meta["request"]),
        rejected=tuple(meta.get("rejected", ())),
    )
