"""Oracle backed by a chat-completions-style vision endpoint.

Sends two base64-encoded frames plus a prompt, parses the Yes/No answer,
and caches responses content-addressed by the image bytes so renamed files
still hit the cache.  The endpoint, model and API-key variable are all
configurable; nothing provider-specific is hardcoded.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import InvalidInputError, OracleUnavailableError, ProtocolError
from .tvs import Judgment, Verdict

logger = logging.getLogger(__name__)

STRICT_INSTRUCTION = "Answer strictly with a single token: YES or NO."


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str

    @property
    def strict_variant(self) -> str:
        return f"{self.text} {STRICT_INSTRUCTION}"


PROMPTS = {
    "baseline": PromptTemplate(
        "baseline",
        "Do these two neighboring frames depict the same human motion? "
        "Answer Yes or No.",
    ),
    "attribute": PromptTemplate(
        "attribute",
        "Carefully compare the two human figures. Focus on body posture, limb "
        "angles, contact with the ground, and movement direction. Ignore "
        "lighting, clothing, and background. Decide if they represent the same "
        "stage of an action. Answer Yes or No.",
    ),
    "confidence": PromptTemplate(
        "confidence",
        "Do these two frames depict the same human motion? Provide your answer "
        "(Yes/No) and a confidence score between 0 and 1.",
    ),
    "step_aware": PromptTemplate(
        "step_aware",
        "Compare frame i and frame i+Δt. Decide whether they correspond to "
        "the same stage of motion despite intermediate movement. Ignore "
        "viewpoint and background differences.",
    ),
    "phase_aware": PromptTemplate(
        "phase_aware",
        "Identify whether these two frames occur in the same phase of an action "
        "(preparation, execution, or completion). Focus on body posture and "
        "motion trajectory. Answer Yes or No.",
    ),
    "causal": PromptTemplate(
        "causal",
        "Analyze how the motion evolves between these two frames. Determine if "
        "the second frame naturally follows from the first as part of the same "
        "continuous action. Answer Yes or No.",
    ),
}


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach the endpoint.

    The API key is read from the environment variable named by
    ``api_key_env_var`` at request time and never written to disk or logs.
    """

    base_url: str
    model_name: str
    api_key_env_var: str = "TVSEG_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2
    max_parallel: int = 1
    cache_dir: str | None = None
    requests_per_second: float | None = None
    confidence_threshold: float = 0.5
    debug: bool = False


def encode_image(path) -> str:
    """Standard base64 of the raw file bytes, no line wrapping."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    data = path.read_bytes()
    if not data:
        raise InvalidInputError(f"image file is empty: {path}")
    return base64.b64encode(data).decode("ascii")


_YES = re.compile(r"\byes\b", re.IGNORECASE)
_NO = re.compile(r"\bno\b", re.IGNORECASE)
_NUMBER = re.compile(r"\d+(?:\.\d+)?|\.\d+")


def parse_verdict(text: str) -> Verdict:
    """Case-insensitive token scan.

    A standalone yes-token with no no-token is Same, the converse is
    Different; both, neither, or empty text is Ambiguous.
    """
    text = text or ""
    has_yes = bool(_YES.search(text))
    has_no = bool(_NO.search(text))
    if has_yes and not has_no:
        return Verdict.SAME
    if has_no and not has_yes:
        return Verdict.DIFFERENT
    return Verdict.AMBIGUOUS


def parse_confidence(text: str) -> float | None:
    """Last number in [0, 1] mentioned in the response, if any."""
    score = None
    for token in _NUMBER.findall(text or ""):
        value = float(token)
        if 0.0 <= value <= 1.0:
            score = value
    return score


class _TokenBucket:
    """Serializes requests to at most ``rate`` per second."""

    def __init__(self, rate):
        self._interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self):
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if delay > 0:
            time.sleep(delay)


def http_transport(url, headers, payload, timeout):
    """Default transport: POST the JSON payload, return the parsed body."""
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    response.raise_for_status()
    return response.json()


class LlmOracle:
    """Adjacency oracle that asks a vision endpoint about each frame pair.

    Thread-safe; cache writes go through a temp file and an atomic rename,
    so concurrent writers never leave a corrupt entry.
    """

    source = "oracle"

    def __init__(self, config: EndpointConfig, template_id: str = "baseline",
                 transport=None):
        if template_id not in PROMPTS:
            raise InvalidInputError(f"unknown prompt template: {template_id}")
        self.config = config
        self.template = PROMPTS[template_id]
        self._transport = transport or http_transport
        self._bucket = (
            _TokenBucket(config.requests_per_second)
            if config.requests_per_second
            else None
        )
        self._hash_lock = threading.Lock()
        self._hash_cache: dict[str, str] = {}

    def _image_hash(self, path):
        key = str(path)
        with self._hash_lock:
            cached = self._hash_cache.get(key)
        if cached is not None:
            return cached
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        with self._hash_lock:
            self._hash_cache[key] = digest
        return digest

    def _cache_key(self, path_a, path_b, strict):
        material = "\n".join(
            [
                self._image_hash(path_a),
                self._image_hash(path_b),
                self.template.id,
                self.config.model_name,
                "strict" if strict else "plain",
            ]
        )
        return hashlib.sha256(material.encode()).hexdigest()

    def _cache_path(self, key):
        if self.config.cache_dir is None:
            return None
        return Path(self.config.cache_dir) / f"{key}.json"

    def _cache_read(self, key):
        path = self._cache_path(key)
        if path is None or not path.is_file():
            return None
        entry = json.loads(path.read_text())
        return Judgment(
            verdict=Verdict(entry["verdict"]),
            raw_text=entry["raw_text"],
            score=entry.get("score"),
        )

    def _cache_write(self, key, judgment):
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "key": key,
            "verdict": judgment.verdict.value,
            "raw_text": judgment.raw_text,
            "timestamp": time.time(),
        }
        if judgment.score is not None:
            entry["score"] = judgment.score
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as handle:
                json.dump(entry, handle)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _request_payload(self, path_a, path_b, strict):
        prompt = self.template.strict_variant if strict else self.template.text
        parts = [{"type": "text", "text": prompt}]
        for path in (path_a, path_b):
            parts.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{encode_image(path)}"},
                }
            )
        return {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": parts}],
        }

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _call_endpoint(self, payload):
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error = None
        for attempt in range(self.config.max_retries + 1):
            if self._bucket is not None:
                self._bucket.wait()
            try:
                if self.config.debug:
                    logger.debug("request attempt %d: %s", attempt, _elide(payload))
                body = self._transport(url, self._headers(), payload, self.config.timeout)
                if self.config.debug:
                    logger.debug("response: %s", body)
                return body
            except (requests.RequestException, ConnectionError, TimeoutError, OSError) as exc:
                last_error = exc
        raise OracleUnavailableError(
            f"endpoint unreachable after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def judge(self, path_a, path_b, strict: bool = False) -> Judgment:
        key = self._cache_key(path_a, path_b, strict)
        cached = self._cache_read(key)
        if cached is not None:
            return cached

        body = self._call_endpoint(self._request_payload(path_a, path_b, strict))
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed response body: {exc}") from exc

        verdict = parse_verdict(text)
        score = None
        if self.template.id == "confidence":
            score = parse_confidence(text)
            if (
                verdict is not Verdict.AMBIGUOUS
                and score is not None
                and score < self.config.confidence_threshold
            ):
                verdict = Verdict.AMBIGUOUS
        judgment = Judgment(verdict=verdict, raw_text=text, score=score)
        self._cache_write(key, judgment)
        return judgment


def _elide(payload):
    """Copy of the payload with image data replaced by placeholders."""
    slim = json.loads(json.dumps(payload))
    for message in slim.get("messages", []):
        for part in message.get("content", []):
            if part.get("type") == "image_url":
                part["image_url"] = {"url": "<base64 elided>"}
    return slim
