"""Assess patches with a chat-completion HTTP endpoint.

Every sample gets one rendered prompt. The prompt is sent up to
``max_resamples`` times until a response parses as well-formed (think block,
answer block, unambiguous verdict). Transport failures count as failed
attempts; a sample that never resolves comes back flagged ``unresolved``
instead of raising.

The request carries an ``X-Sample-Id`` header. Real endpoints ignore it; the
scripted mock server in :mod:`patchjudge.mock` uses it to pick a response.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import httpx

from .corpus import PatchSample, Verdict
from .parsing import ParsedResponse, is_wellformed, parse
from .prompts import PromptTemplate, RenderedPrompt, build_prompt

log = logging.getLogger(__name__)

COMPLETIONS_PATH = "/v1/chat/completions"
SAMPLE_ID_HEADER = "X-Sample-Id"
BODY_EXCERPT = 300


class ClientError(RuntimeError):
    pass


class TransportError(ClientError):
    """Network failure or timeout that survived every retry."""


class EndpointError(ClientError):
    """The endpoint answered with a non-2xx status or an unreadable body."""

    def __init__(self, status: int, excerpt: str):
        super().__init__(f"endpoint returned HTTP {status}: {excerpt}")
        self.status = status
        self.excerpt = excerpt


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = ""
    timeout_seconds: float = 60.0
    max_retries: int = 3
    max_resamples: int = 3
    temperature: float = 0.6
    max_tokens: int = 2048
    backoff_seconds: float = 0.5

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must not be empty")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be > 0")
        if self.max_resamples < 1:
            raise ValueError("max_resamples must be >= 1")
        if self.max_retries < 0 or self.max_tokens < 1 or self.backoff_seconds < 0:
            raise ValueError("max_retries and backoff_seconds must be >= 0, max_tokens >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown endpoint options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def api_key(self) -> Optional[str]:
        if not self.api_key_env_var:
            return None
        return os.environ.get(self.api_key_env_var) or None

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + COMPLETIONS_PATH


def load_endpoint_config(path: str | Path) -> EndpointConfig:
    return EndpointConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class AssessmentRecord:
    sample_id: str
    attempts: int
    final: ParsedResponse
    raw_outputs: list[str]
    verdict: Optional[Verdict]
    latencies: list[float]
    unresolved: bool
    errors: list[Optional[str]] = field(default_factory=list)
    votes: Optional[list[Optional[Verdict]]] = None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "attempts": self.attempts,
            "final": self.final.to_dict(),
            "raw_outputs": list(self.raw_outputs),
            "verdict": self.verdict.value if self.verdict else None,
            "latencies": list(self.latencies),
            "unresolved": self.unresolved,
            "errors": list(self.errors),
            "votes": None if self.votes is None else [v.value if v else None for v in self.votes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssessmentRecord":
        votes = d.get("votes")
        return cls(
            sample_id=d["sample_id"],
            attempts=int(d["attempts"]),
            final=ParsedResponse.from_dict(d["final"]),
            raw_outputs=list(d["raw_outputs"]),
            verdict=Verdict(d["verdict"]) if d.get("verdict") else None,
            latencies=[float(x) for x in d.get("latencies", [])],
            unresolved=bool(d["unresolved"]),
            errors=list(d.get("errors", [])),
            votes=None if votes is None else [Verdict(v) if v else None for v in votes],
        )


def save_records(records: Iterable[AssessmentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def load_records(path: str | Path) -> list[AssessmentRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AssessmentRecord.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad assessment record ({exc})") from None
    return out


def _headers(cfg: EndpointConfig, sample_id: str) -> dict:
    headers = {"Content-Type": "application/json", SAMPLE_ID_HEADER: sample_id}
    key = cfg.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def request_body(cfg: EndpointConfig, prompt: RenderedPrompt) -> dict:
    return {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }


def complete(cfg: EndpointConfig, prompt: RenderedPrompt, client: Optional[httpx.Client] = None) -> str:
    """Send one chat-completion request and return ``choices[0].message.content``.

    Network errors and timeouts are retried ``max_retries`` times with
    exponential backoff. HTTP errors are not retried.
    """
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout_seconds)
    try:
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = client.post(
                    cfg.url,
                    json=request_body(cfg, prompt),
                    headers=_headers(cfg, prompt.sample_id),
                    timeout=cfg.timeout_seconds,
                )
                break
            except httpx.TransportError as exc:
                if attempt == cfg.max_retries:
                    raise TransportError(f"{cfg.url}: {exc!r} after {attempt + 1} attempts") from exc
                delay = cfg.backoff_seconds * 2**attempt
                log.warning("request for %s failed (%s); retrying in %.2fs", prompt.sample_id, exc, delay)
                time.sleep(delay)
    finally:
        if own:
            client.close()
    if not 200 <= resp.status_code < 300:
        raise EndpointError(resp.status_code, resp.text[:BODY_EXCERPT])
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise EndpointError(resp.status_code, "unexpected response shape: " + resp.text[:BODY_EXCERPT]) from None
    return content or ""


def assess_with_resample(
    cfg: EndpointConfig,
    sample: PatchSample,
    template: PromptTemplate,
    client: Optional[httpx.Client] = None,
) -> AssessmentRecord:
    prompt = build_prompt(sample, template)
    raws, latencies, errors = [], [], []
    final = ParsedResponse()
    for _ in range(cfg.max_resamples):
        t0 = time.perf_counter()
        try:
            raw, err = complete(cfg, prompt, client), None
        except ClientError as exc:
            raw, err = "", str(exc)
            log.warning("sample %s: %s", sample.id, exc)
        latencies.append(time.perf_counter() - t0)
        raws.append(raw)
        errors.append(err)
        final = parse(raw)
        if err is None and is_wellformed(final):
            break
    ok = is_wellformed(final) and errors[-1] is None
    return AssessmentRecord(
        sample_id=sample.id,
        attempts=len(raws),
        final=final,
        raw_outputs=raws,
        verdict=final.verdict if ok else None,
        latencies=latencies,
        unresolved=not ok,
        errors=errors,
    )


def assess_votes(
    cfg: EndpointConfig,
    sample: PatchSample,
    template: PromptTemplate,
    k: int,
    client: Optional[httpx.Client] = None,
) -> AssessmentRecord:
    """k independent resampled assessments; the first one is the primary record."""
    if k < 1:
        raise ValueError("k must be >= 1")
    runs = [assess_with_resample(cfg, sample, template, client) for _ in range(k)]
    primary = runs[0]
    primary.votes = [r.verdict for r in runs]
    return primary


def assess_batch(
    cfg: EndpointConfig,
    samples: Sequence[PatchSample],
    template: PromptTemplate,
    parallelism: int = 1,
    votes: int = 0,
) -> list[AssessmentRecord]:
    """Assess every sample; output order matches input order."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if not samples:
        return []
    with httpx.Client(timeout=cfg.timeout_seconds) as client:

        def one(sample):
            if votes:
                return assess_votes(cfg, sample, template, votes, client)
            return assess_with_resample(cfg, sample, template, client)

        if parallelism == 1:
            return [one(s) for s in samples]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, samples))


def all_transport_failures(records: Sequence[AssessmentRecord]) -> bool:
    """True when records exist and not a single request got through."""
    return bool(records) and all(all(e is not None for e in r.errors) for r in records)
