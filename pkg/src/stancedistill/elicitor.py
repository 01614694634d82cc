"""Rationale elicitation and the zero-shot baseline against a completion service.

Two clients ship here: ``HTTPCompletionClient`` for any OpenAI-compatible
chat endpoint, and ``MockCompletionClient``, a pure function of the prompt
used for offline runs and tests.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .codec import ParseOutcome, Paradigm, match_stem, parse_generation
from .corpus import LABELS, StanceExample, StanceLabel, parse_stance_string
from .prompts import PromptKind, rationale_stem, render_prompt

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "STANCE_LLM_API_KEY"


class ServiceError(RuntimeError):
    pass


class TransientServiceError(ServiceError):
    """A failure worth retrying (timeouts, rate limits, 5xx)."""


class ServiceUnavailable(ServiceError):
    pass


class RationaleValidationFailed(ValueError):
    pass


class CacheCorrupt(ValueError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class CompletionClient(Protocol):
    service_id: str

    def complete(self, prompt: str, max_tokens: int = 256) -> str: ...


@dataclass(frozen=True)
class RationalizedExample:
    example: StanceExample
    rationale: str
    service_id: str
    attempts: int
    created_at: str

    def to_record(self) -> dict:
        return {
            **self.example.to_dict(),
            "rationale": self.rationale,
            "service_id": self.service_id,
            "attempts": self.attempts,
            "created_at": self.created_at,
            "status": "ok",
        }


def rationale_violation(rationale: str, example: StanceExample) -> str | None:
    """Describe why a rationale breaks the stem/label rule, or None if it conforms."""
    found = match_stem(rationale, example.topic)
    if found is None:
        return "missing stem " + repr(rationale_stem(example.gold, example.topic))
    label, body = found
    if label is not example.gold:
        return f"stem names {label.word}, gold is {example.gold.word}"
    if not body:
        return "empty explanation after the stem"
    return None


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * 2 ** (attempt - 1), self.max_delay)


class HTTPCompletionClient:
    """Chat-completions client for OpenAI-compatible endpoints."""

    def __init__(
        self,
        endpoint: str,
        model: str = "gpt-3.5-turbo",
        *,
        key_env: str = DEFAULT_KEY_ENV,
        temperature: float = 0.0,
        timeout: float = 60.0,
        transport=None,
    ):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.service_id = f"{model}@{self.endpoint}"
        headers = {}
        key = os.environ.get(key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._httpx = httpx

    def complete(self, prompt: str, max_tokens: int = 256) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": max_tokens,
        }
        try:
            resp = self._http.post(f"{self.endpoint}/chat/completions", json=payload)
        except (self._httpx.TimeoutException, self._httpx.TransportError) as e:
            raise TransientServiceError(str(e)) from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientServiceError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ServiceUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, ValueError) as e:
            raise TransientServiceError(f"malformed response: {e}") from e


_PROMPT_FIELDS = re.compile(r"^Topic: (?P<topic>.*)\nComment: (?P<comment>.*?)\n", re.MULTILINE | re.DOTALL)
_STEM_REQUEST = re.compile(r'begin with: "The comment is classified as (\w+) towards (.*) because"\s*$')

_CLAUSES = {
    StanceLabel.FAVOR: ("it supports {w}", "it praises {w}", "it defends {w}"),
    StanceLabel.AGAINST: ("it mocks {w}", "it rejects {w}", "it attacks {w}"),
    StanceLabel.NEUTRAL: ("it only mentions {w}", "it just notes {w}", "it asks about {w}"),
}
_LABEL_WORDS = {lab.word for lab in LABELS}


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class MockCompletionClient:
    """Deterministic offline stand-in for a completion service.

    Rationale prompts get the requested stem plus a short clause built from a
    hash-selected comment word. Classification prompts are answered by
    ``classifier(topic, comment)`` when given, else by a hash-picked label.
    """

    service_id = "mock"

    def __init__(self, classifier: Callable[[str, str], str] | None = None):
        self.classifier = classifier

    def complete(self, prompt: str, max_tokens: int = 256) -> str:
        fields = _PROMPT_FIELDS.search(prompt)
        topic = fields.group("topic") if fields else ""
        comment = fields.group("comment") if fields else prompt
        stem = _STEM_REQUEST.search(prompt)
        if stem:
            label = parse_stance_string(stem.group(1))
            return self._rationale(label, stem.group(2), comment)
        if self.classifier is not None:
            return self.classifier(topic, comment)
        return LABELS[_digest(prompt) % 3].word

    @staticmethod
    def _rationale(label: StanceLabel, topic: str, comment: str) -> str:
        words = [w for w in re.findall(r"[A-Za-z]+", comment) if w.lower() not in _LABEL_WORDS]
        h = _digest(f"{label.word}|{topic}|{comment}")
        word = words[h % len(words)].lower() if words else "it"
        options = _CLAUSES[label]
        clause = options[(h >> 16) % len(options)].format(w=word)
        return f"{rationale_stem(label, topic)} {clause}"


def _call(client: CompletionClient, prompt: str, max_tokens: int):
    """One service call; returns (text, None) or (None, transient error)."""
    try:
        return client.complete(prompt, max_tokens), None
    except TransientServiceError as e:
        return None, e


def classify_zero_shot(
    example: StanceExample,
    client: CompletionClient,
    *,
    retry: RetryPolicy | None = None,
    max_tokens: int = 256,
    sleep: Callable[[float], None] = time.sleep,
) -> ParseOutcome:
    """Zero-shot stance via the classification prompt; parse failures are returned, not raised."""
    retry = retry or RetryPolicy()
    prompt = render_prompt(PromptKind.ZERO_SHOT_CLASSIFY, example.topic, example.comment)
    for attempt in range(1, retry.max_attempts + 1):
        text, err = _call(client, prompt, max_tokens)
        if err is None:
            return parse_generation(text, Paradigm.ST_FT)
        log.warning("transient service error on %s (attempt %d): %s", example.id, attempt, err)
        if attempt < retry.max_attempts:
            sleep(retry.delay(attempt))
    raise ServiceUnavailable(f"{client.service_id}: gave up on {example.id} after {retry.max_attempts} attempts")


def elicit_rationale(
    example: StanceExample,
    client: CompletionClient,
    max_attempts: int = 3,
    *,
    retry: RetryPolicy | None = None,
    max_tokens: int = 256,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], str] = _now,
) -> RationalizedExample:
    """Ask for a label-conditioned explanation and keep it only if the stem matches the gold label.

    Service errors and non-conforming completions draw on the same attempt
    budget, so ``attempts`` always equals the number of client calls.
    """
    retry = retry or RetryPolicy(max_attempts=max_attempts)
    max_attempts = retry.max_attempts
    prompt = render_prompt(PromptKind.LABEL_CONDITIONED_EXPLAIN, example.topic, example.comment, example.gold)
    problems: list[str] = []
    for attempt in range(1, max_attempts + 1):
        text, err = _call(client, prompt, max_tokens)
        if err is not None:
            problems.append(f"service: {err}")
            if attempt < max_attempts:
                sleep(retry.delay(attempt))
            continue
        text = text.strip()
        why = rationale_violation(text, example)
        if why is None:
            return RationalizedExample(example, text, client.service_id, attempt, clock())
        problems.append(why)
    if all(p.startswith("service:") for p in problems):
        raise ServiceUnavailable(f"{example.id}: {problems[-1]}")
    raise RationaleValidationFailed(f"{example.id}: {'; '.join(problems)}")


@dataclass
class StoreSummary:
    cached: int = 0
    elicited: int = 0
    failed: int = 0


def _read_cache(path: Path) -> list[dict]:
    records = []
    if not path.exists():
        return records
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CacheCorrupt(path, line_no, f"invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec or "status" not in rec:
                raise CacheCorrupt(path, line_no, "record lacks id/status")
            records.append(rec)
    return records


def build_rationale_store(
    examples: Sequence[StanceExample],
    client: CompletionClient,
    cache_path: str | Path,
    *,
    max_attempts: int = 3,
    workers: int = 4,
    retry: RetryPolicy | None = None,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], str] = _now,
) -> StoreSummary:
    """Elicit rationales for every example id not already in the JSON-lines cache.

    Requests fan out over ``workers`` threads; records are appended by this
    thread alone, in input order. Failures are stored with ``status: failed``.
    """
    path = Path(cache_path)
    seen = {rec["id"] for rec in _read_cache(path)}
    summary = StoreSummary(cached=sum(1 for ex in examples if ex.id in seen))
    todo = []
    for ex in examples:
        if ex.id not in seen:
            todo.append(ex)
            seen.add(ex.id)

    def work(ex: StanceExample) -> dict:
        try:
            rex = elicit_rationale(ex, client, max_attempts, retry=retry, sleep=sleep, clock=clock)
            return rex.to_record()
        except (RationaleValidationFailed, ServiceError) as e:
            return {
                **ex.to_dict(), "rationale": None, "service_id": client.service_id,
                "attempts": retry.max_attempts if retry else max_attempts, "created_at": clock(), "status": "failed", "error": str(e),
            }

    if not todo:
        return summary
    path.parent.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool, open(path, "a", encoding="utf-8") as fh:
        for rec in pool.map(work, todo):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            fh.flush()
            if rec["status"] == "ok":
                summary.elicited += 1
            else:
                summary.failed += 1
    return summary


def load_rationale_store(cache_path: str | Path) -> dict[str, RationalizedExample]:
    """Successful records keyed by example id."""
    out = {}
    for rec in _read_cache(Path(cache_path)):
        if rec["status"] != "ok":
            continue
        ex = StanceExample.from_dict(rec)
        out[ex.id] = RationalizedExample(ex, rec["rationale"], rec["service_id"], rec["attempts"], rec["created_at"])
    return out


def validate_store(cache_path: str | Path) -> list[tuple[str, str]]:
    """Scan every successful record and list (id, problem) for rule violations."""
    return [
        (rid, why)
        for rid, rex in load_rationale_store(cache_path).items()
        if (why := rationale_violation(rex.rationale, rex.example)) is not None
    ]


def zero_shot_outcomes(
    examples: Iterable[StanceExample], client: CompletionClient, workers: int = 4, **kw
) -> list[ParseOutcome]:
    examples = list(examples)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda ex: classify_zero_shot(ex, client, **kw), examples))

