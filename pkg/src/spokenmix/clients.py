"""Judge and text-embedding clients.

Remote clients speak a chat-completions / embeddings JSON shape over HTTP
with exponential-backoff retries, a content-addressed on-disk cache, and a
semaphore bounding in-flight requests. A deterministic hashed-trigram
embedder and scripted judges let everything downstream run hermetically,
so CI and the bundled fixtures never need credentials.

Request/response wire shapes (POST, ``Authorization: Bearer <key>``):

  judge      {"model": ..., "messages": [{"role": "user", "content": prompt}],
              "temperature": 0}
          -> {"choices": [{"message": {"content": "Correct"}}]}
  embedding  {"model": ..., "input": [text]}
          -> {"data": [{"embedding": [floats...]}]}
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

TRIGRAM_DIM = 4096

QA_CORRECTNESS_TEMPLATE = """\
You are grading an answer to an audio question.

Question: {question}
Reference answer(s): {ground_truth}
Model answer: {prediction}

Does the model answer convey the same meaning as any reference answer?
Reply with exactly one word: Correct or Incorrect."""

INSTRUCTION_FOLLOWING_TEMPLATE = """\
You are checking whether a model followed the instruction it was given.

Task type: {question}
Model answer: {prediction}

Does the answer attempt the stated task type (for example, a class label
for classification, a descriptive sentence for captioning, a direct answer
for question answering), regardless of whether it is factually right?
Reply with exactly one word: Correct or Incorrect."""

TEMPLATES = {
    "qa_correctness": QA_CORRECTNESS_TEMPLATE,
    "instruction_following": INSTRUCTION_FOLLOWING_TEMPLATE,
}


@dataclass(frozen=True)
class JudgeRequest:
    question: str
    ground_truth: tuple[str, ...]
    prediction: str
    template_id: str = "qa_correctness"

    def __post_init__(self):
        if self.template_id not in TEMPLATES:
            raise ValueError(f"unknown template_id {self.template_id!r}")
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))


@dataclass(frozen=True)
class JudgeVerdict:
    outcome: str  # correct | incorrect | unresolved
    raw_response: str = ""

    @property
    def is_correct(self) -> bool:
        return self.outcome == "correct"

    @property
    def is_unresolved(self) -> bool:
        return self.outcome == "unresolved"


class Judge(Protocol):
    def verdict(self, request: JudgeRequest) -> JudgeVerdict: ...


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


def render_judge_prompt(request: JudgeRequest) -> str:
    return TEMPLATES[request.template_id].format(
        question=request.question,
        ground_truth=" | ".join(request.ground_truth),
        prediction=request.prediction,
    )


def parse_verdict_token(response_text: str) -> str | None:
    """First standalone correct/incorrect token, or None when unparseable."""
    for token in response_text.replace(".", " ").replace(",", " ").split():
        lowered = token.strip("\"'`*()[]:;!").lower()
        if lowered in ("correct", "incorrect"):
            return lowered
    return None


@dataclass
class ClientConfig:
    """Connection and retry settings shared by both remote clients.

    ``max_retries`` counts attempts after the first; credentials come from
    the environment variable named by ``api_key_env`` (JUDGE_API_KEY /
    EMBED_API_KEY by convention), never from config files.
    """

    endpoint: str = ""
    model: str = ""
    api_key_env: str = "JUDGE_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 8
    cache_dir: str | None = None


class ResponseCache:
    """One JSON file per request hash; writes are atomic so readers never tear."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(payload: dict) -> str:
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def put(self, key: str, request: dict, response: dict) -> None:
        record = {"request": request, "response": response}
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(record, handle, ensure_ascii=False)
            os.replace(tmp, self._path(key))
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _default_transport(url: str, payload: dict, headers: dict, timeout_s: float) -> dict:
    import requests

    response = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
    response.raise_for_status()
    return response.json()


class _RemoteClient:
    """Retry + cache + concurrency plumbing shared by judge and embedder."""

    def __init__(self, config: ClientConfig, transport: Callable | None = None):
        self.config = config
        self.transport = transport or _default_transport
        self._semaphore = threading.Semaphore(max(1, config.max_in_flight))
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self.request_count = 0
        self._count_lock = threading.Lock()

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_with_retries(self, payload: dict) -> dict | None:
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._semaphore:
                    with self._count_lock:
                        self.request_count += 1
                    return self.transport(
                        self.config.endpoint, payload, self._headers(), self.config.timeout_s
                    )
            except Exception:
                if attempt < self.config.max_retries and self.config.backoff_s > 0:
                    time.sleep(self.config.backoff_s * (2**attempt))
        return None


class HttpJudge(_RemoteClient):
    """LLM judge over HTTP; unresolved after retry exhaustion, never an exception."""

    def verdict(self, request: JudgeRequest) -> JudgeVerdict:
        cache_key = None
        request_dict = {
            "template_id": request.template_id,
            "question": request.question,
            "ground_truth": list(request.ground_truth),
            "prediction": request.prediction,
        }
        if self.cache is not None:
            cache_key = self.cache.key_for(request_dict)
            hit = self.cache.get(cache_key)
            if hit is not None:
                resp = hit["response"]
                return JudgeVerdict(resp["outcome"], resp.get("raw_response", ""))

        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": render_judge_prompt(request)}],
            "temperature": 0,
        }
        body = self._post_with_retries(payload)
        if body is None:
            return JudgeVerdict("unresolved", "")
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            return JudgeVerdict("unresolved", json.dumps(body)[:500])
        token = parse_verdict_token(str(content))
        if token is None:
            return JudgeVerdict("unresolved", str(content))
        verdict = JudgeVerdict(token, str(content))
        if self.cache is not None:
            # Unresolved outcomes are transient; only settled verdicts persist.
            self.cache.put(
                cache_key,
                request_dict,
                {"outcome": verdict.outcome, "raw_response": verdict.raw_response},
            )
        return verdict


class HttpEmbedder(_RemoteClient):
    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed an empty string")
        request_dict = {"model": self.config.model, "text": text}
        cache_key = None
        if self.cache is not None:
            cache_key = self.cache.key_for(request_dict)
            hit = self.cache.get(cache_key)
            if hit is not None:
                return np.asarray(hit["response"]["embedding"], dtype=np.float64)

        body = self._post_with_retries({"model": self.config.model, "input": [text]})
        if body is None:
            raise RuntimeError(f"embedding request failed after retries: {text[:60]!r}")
        vector = np.asarray(body["data"][0]["embedding"], dtype=np.float64)
        if self.cache is not None:
            self.cache.put(cache_key, request_dict, {"embedding": vector.tolist()})
        return vector


class TrigramEmbedder:
    """Offline fallback: L2-normalized hashed character-trigram counts.

    Deterministic across processes (crc32, not Python's salted hash), fixed
    dimension, and cheap enough to call per label with no cache.
    """

    def __init__(self, dim: int = TRIGRAM_DIM):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed an empty string")
        vector = np.zeros(self.dim, dtype=np.float64)
        padded = f"  {text.lower()}  "
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            vector[zlib.crc32(trigram.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            vector[0] = 1.0
            return vector
        return vector / norm


class StaticJudge:
    """Always returns one outcome; counts calls. The workhorse test double."""

    def __init__(self, outcome: str = "incorrect"):
        self.outcome = outcome
        self.calls = 0

    def verdict(self, request: JudgeRequest) -> JudgeVerdict:
        self.calls += 1
        return JudgeVerdict(self.outcome, self.outcome)


class ScriptedJudge:
    """Verdicts looked up by prediction text (exact, then whitespace-squeezed).

    Keys may be plain prediction strings or scoped ``template_id::prediction``
    entries; ``template_id::__default__`` overrides ``default`` for one
    template. Anything not in the script gets ``default``. Drives hermetic
    evaluation runs: pair a predictions file with a verdict file and the
    whole metric suite is reproducible bit for bit.
    """

    def __init__(self, verdicts: dict, default: str = "incorrect"):
        self.verdicts = dict(verdicts)
        self.default = default
        self.calls = 0

    def verdict(self, request: JudgeRequest) -> JudgeVerdict:
        self.calls += 1
        squeezed = " ".join(request.prediction.split())
        lookup_order = (
            f"{request.template_id}::{request.prediction}",
            f"{request.template_id}::{squeezed}",
            request.prediction,
            squeezed,
            f"{request.template_id}::__default__",
        )
        for key in lookup_order:
            if key in self.verdicts:
                outcome = self.verdicts[key]
                return JudgeVerdict(outcome, f"scripted:{key}")
        return JudgeVerdict(self.default, "scripted:default")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)
