"""Completion-endpoint client with disk caching, retry, and offline replay.

The transport is pluggable: a live HTTP transport for completion-style
endpoints, a fixture transport that replays a JSON-lines file, and an
in-memory mock for tests. Responses are cached on disk keyed by a hash of
(prompt text, sample index, sampling params), so a warmed cache makes reruns
deterministic and free of network traffic.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    EndpointUnreachable,
    InvalidConfig,
    MalformedResponse,
    ParseError,
    TransportError,
)

DEFAULT_SAMPLES_PER_PROMPT = 5
DEFAULT_MAX_TOKENS = 60
DEFAULT_SAMPLING_TEMPERATURE = 0.9
DEFAULT_MAX_IN_FLIGHT = 4
DEFAULT_RETRIES = 3

AUTH_TOKEN_ENV = "TEXTPROBE_API_TOKEN"

SOURCE_LIVE = "live"
SOURCE_CACHE = "cache"
SOURCE_FIXTURE = "fixture"


@dataclass(frozen=True)
class LlmRequest:
    """One prompt to complete, plus the class it was generated for."""

    prompt_id: str
    prompt_text: str
    class_id: int
    class_name: str = ""
    samples_per_prompt: int = DEFAULT_SAMPLES_PER_PROMPT
    max_tokens: int = DEFAULT_MAX_TOKENS
    sampling_temperature: float = DEFAULT_SAMPLING_TEMPERATURE

    def __post_init__(self):
        if self.samples_per_prompt < 1:
            raise InvalidConfig("samples_per_prompt must be >= 1")
        if self.max_tokens < 1:
            raise InvalidConfig("max_tokens must be >= 1")
        if self.sampling_temperature < 0:
            raise InvalidConfig("sampling_temperature must be >= 0")


@dataclass(frozen=True)
class Description:
    """One generated class description."""

    prompt_id: str
    class_id: int
    text: str
    sample_index: int
    source: str = SOURCE_LIVE
    class_name: str = ""


@dataclass(frozen=True)
class FetchFailure:
    prompt_id: str
    kind: str  # "unreachable" or "malformed"
    message: str


def requests_from_prompt_records(
    records: list[dict],
    samples_per_prompt: int = DEFAULT_SAMPLES_PER_PROMPT,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    sampling_temperature: float = DEFAULT_SAMPLING_TEMPERATURE,
) -> list[LlmRequest]:
    """Turn prompt JSONL records into requests with shared sampling params."""
    return [
        LlmRequest(
            prompt_id=rec["prompt_id"],
            prompt_text=rec["text"],
            class_id=rec["class_id"],
            class_name=rec.get("class_name", ""),
            samples_per_prompt=samples_per_prompt,
            max_tokens=max_tokens,
            sampling_temperature=sampling_temperature,
        )
        for rec in records
    ]


# -- transports ----------------------------------------------------------------

class HttpTransport:
    """POSTs completion-style bodies {prompt, max_tokens, temperature, n}.

    Expects a JSON reply with a `choices` list of {"text": ...} objects.
    Connection problems, timeouts, and 5xx replies are transient (retried by
    the fetcher); 4xx replies and unparseable bodies are not.
    """

    source = SOURCE_LIVE

    def __init__(self, url: str, timeout: float = 30.0, token: str | None = None,
                 session: requests.Session | None = None):
        self.url = url
        self.timeout = timeout
        self.token = token if token is not None else os.environ.get(AUTH_TOKEN_ENV)
        self.session = session or requests.Session()

    def complete(self, request: LlmRequest) -> list[str]:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "prompt": request.prompt_text,
            "max_tokens": request.max_tokens,
            "temperature": request.sampling_temperature,
            "n": request.samples_per_prompt,
        }
        try:
            resp = self.session.post(
                self.url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}", transient=True) from exc
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}", transient=True)
        if resp.status_code >= 400:
            raise TransportError(f"client error {resp.status_code}", transient=False)
        try:
            doc = resp.json()
            choices = doc["choices"]
            texts = [str(c["text"]) for c in choices]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponse(
                f"unparseable completion body: {exc}", prompt_id=request.prompt_id
            ) from exc
        return texts


class FixtureTransport:
    """Replays completions from a JSON-lines description file.

    Records are keyed by (prompt_id, sample_index); a request for a missing
    entry fails non-transiently so the caller can report exactly which
    prompts have no fixture coverage.
    """

    source = SOURCE_FIXTURE

    def __init__(self, path):
        self.path = str(path)
        self._texts: dict[tuple[str, int], str] = {}
        for desc in load_fixture_descriptions(path):
            self._texts[(desc.prompt_id, desc.sample_index)] = desc.text
        self.calls = 0

    def complete(self, request: LlmRequest) -> list[str]:
        self.calls += 1
        texts = []
        for i in range(request.samples_per_prompt):
            key = (request.prompt_id, i)
            if key not in self._texts:
                raise TransportError(
                    f"fixture {self.path} has no entry for prompt "
                    f"{request.prompt_id!r} sample {i}",
                    transient=False,
                )
            texts.append(self._texts[key])
        return texts


class MockTransport:
    """In-memory transport for tests.

    `replies` maps prompt_text to a list of completions (cycled if shorter
    than the requested sample count) or is a callable taking the request.
    `fail_times` injects that many transient failures before succeeding.
    """

    source = SOURCE_LIVE

    def __init__(self, replies, fail_times: int = 0):
        self.replies = replies
        self.fail_times = fail_times
        self.calls = 0
        self.failures_injected = 0

    def complete(self, request: LlmRequest) -> list[str]:
        self.calls += 1
        if self.failures_injected < self.fail_times:
            self.failures_injected += 1
            raise TransportError("injected transient failure", transient=True)
        if callable(self.replies):
            texts = list(self.replies(request))
        else:
            base = list(self.replies[request.prompt_text])
            texts = [base[i % len(base)] for i in range(request.samples_per_prompt)]
        return texts


# -- disk cache ------------------------------------------------------------------

def cache_key(prompt_text: str, sample_index: int, max_tokens: int,
              sampling_temperature: float) -> str:
    """Content hash identifying one cached completion."""
    payload = json.dumps(
        {
            "prompt_text": prompt_text,
            "sample_index": sample_index,
            "max_tokens": max_tokens,
            "sampling_temperature": sampling_temperature,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cache_path(cache_dir, key: str) -> Path:
    return Path(cache_dir) / f"{key}.json"


def _cache_read(cache_dir, key: str) -> str | None:
    path = _cache_path(cache_dir, key)
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return str(doc["text"])
    except (ValueError, KeyError):
        # Corrupt cache entries are treated as misses and rewritten.
        return None


def _cache_write(cache_dir, key: str, request: LlmRequest, sample_index: int,
                 text: str) -> None:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "prompt_id": request.prompt_id,
        "prompt_text": request.prompt_text,
        "sample_index": sample_index,
        "max_tokens": request.max_tokens,
        "sampling_temperature": request.sampling_temperature,
        "text": text,
    }
    # Atomic write: temp file in the same directory, then rename.
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
        os.replace(tmp, _cache_path(cache_dir, key))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- fetching ----------------------------------------------------------------------

def clean_completion(text: str) -> str:
    """Strip whitespace and one layer of surrounding quote characters."""
    text = text.strip()
    while len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        text = text[1:-1].strip()
    return text


def _complete_with_retry(transport, request: LlmRequest, retries: int,
                         backoff_base: float) -> list[str]:
    attempt = 0
    while True:
        try:
            return transport.complete(request)
        except TransportError as exc:
            attempt += 1
            if not exc.transient or attempt >= retries:
                raise
            time.sleep(backoff_base * (2 ** (attempt - 1)))


def _fetch_one(request: LlmRequest, transport, cache_dir, retries: int,
               backoff_base: float) -> list[Description]:
    n = request.samples_per_prompt
    cached: dict[int, str] = {}
    if cache_dir is not None:
        for i in range(n):
            key = cache_key(
                request.prompt_text, i, request.max_tokens,
                request.sampling_temperature,
            )
            text = _cache_read(cache_dir, key)
            if text is not None:
                cached[i] = text

    live_texts: list[str] | None = None
    if len(cached) < n:
        live_texts = _complete_with_retry(transport, request, retries, backoff_base)
        if len(live_texts) < n:
            raise MalformedResponse(
                f"endpoint returned {len(live_texts)} completions, "
                f"expected {n}",
                prompt_id=request.prompt_id,
            )

    out: list[Description] = []
    for i in range(n):
        if i in cached:
            text, source = cached[i], SOURCE_CACHE
        else:
            text = clean_completion(live_texts[i])
            if not text:
                raise MalformedResponse(
                    "endpoint returned an empty completion",
                    prompt_id=request.prompt_id,
                )
            source = transport.source
            if cache_dir is not None:
                key = cache_key(
                    request.prompt_text, i, request.max_tokens,
                    request.sampling_temperature,
                )
                _cache_write(cache_dir, key, request, i, text)
        out.append(
            Description(
                prompt_id=request.prompt_id,
                class_id=request.class_id,
                text=text,
                sample_index=i,
                source=source,
                class_name=request.class_name,
            )
        )
    return out


def fetch_descriptions_partial(
    requests_list: list[LlmRequest],
    transport,
    cache_dir=None,
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 0.5,
) -> tuple[list[Description], list[FetchFailure]]:
    """Fetch what can be fetched; report the rest.

    Returns descriptions in input-request order (samples_per_prompt per
    surviving request) plus one FetchFailure per request that failed after
    retries.
    """
    seen: set[str] = set()
    for req in requests_list:
        if req.prompt_id in seen:
            raise InvalidConfig(f"duplicate prompt_id {req.prompt_id!r} in requests")
        seen.add(req.prompt_id)

    def worker(req: LlmRequest):
        try:
            return _fetch_one(req, transport, cache_dir, retries, backoff_base), None
        except MalformedResponse as exc:
            return None, FetchFailure(req.prompt_id, "malformed", str(exc))
        except TransportError as exc:
            return None, FetchFailure(req.prompt_id, "unreachable", str(exc))

    descriptions: list[Description] = []
    failures: list[FetchFailure] = []
    if not requests_list:
        return descriptions, failures
    workers = max(1, min(max_in_flight, len(requests_list)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for descs, failure in pool.map(worker, requests_list):
            if failure is not None:
                failures.append(failure)
            else:
                descriptions.extend(descs)
    return descriptions, failures


def fetch_descriptions(
    requests_list: list[LlmRequest],
    transport,
    cache_dir=None,
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 0.5,
) -> list[Description]:
    """Strict variant: raises if any request could not be completed."""
    descriptions, failures = fetch_descriptions_partial(
        requests_list, transport, cache_dir,
        max_in_flight=max_in_flight, retries=retries, backoff_base=backoff_base,
    )
    if failures:
        unreachable = [f.prompt_id for f in failures if f.kind == "unreachable"]
        if unreachable:
            raise EndpointUnreachable(
                f"{len(unreachable)} prompt(s) failed after {retries} attempts: "
                + ", ".join(unreachable),
                failed_prompt_ids=[f.prompt_id for f in failures],
            )
        first = failures[0]
        raise MalformedResponse(first.message, prompt_id=first.prompt_id)
    return descriptions


# -- JSON-lines description files ----------------------------------------------------

def write_descriptions_jsonl(descriptions: list[Description], path) -> None:
    """Write records {prompt_id, class_id, class_name, sample_index, text}."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in descriptions:
            rec = {
                "prompt_id": d.prompt_id,
                "class_id": d.class_id,
                "class_name": d.class_name,
                "sample_index": d.sample_index,
                "text": d.text,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_fixture_descriptions(path) -> list[Description]:
    """Load a JSON-lines description file with per-line validation.

    Every record needs prompt_id, class_id, sample_index, and nonempty text;
    (prompt_id, sample_index) pairs must be unique. All loaded records are
    tagged source="fixture".
    """
    out: list[Description] = []
    seen: set[tuple[str, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc})", lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError(f"line {lineno}: expected a JSON object", lineno)
            for key in ("prompt_id", "class_id", "sample_index", "text"):
                if key not in rec:
                    raise ParseError(f"line {lineno}: missing '{key}'", lineno)
            try:
                prompt_id = str(rec["prompt_id"])
                class_id = int(rec["class_id"])
                sample_index = int(rec["sample_index"])
                text = str(rec["text"]).strip()
            except (TypeError, ValueError) as exc:
                raise ParseError(f"line {lineno}: bad field type ({exc})", lineno) from exc
            if not text:
                raise ParseError(f"line {lineno}: empty text", lineno)
            pair = (prompt_id, sample_index)
            if pair in seen:
                raise ParseError(
                    f"line {lineno}: duplicate (prompt_id, sample_index) {pair}",
                    lineno,
                )
            seen.add(pair)
            out.append(
                Description(
                    prompt_id=prompt_id,
                    class_id=class_id,
                    text=text,
                    sample_index=sample_index,
                    source=SOURCE_FIXTURE,
                    class_name=str(rec.get("class_name", "")),
                )
            )
    return out
