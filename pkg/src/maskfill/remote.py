"""HTTP client for the fill-mask inference service.

Wire protocol (HTTP + JSON, UTF-8):

* ``POST /fill``     {"left": [...], "right": [...], "k": int, "model_version": str}
  -> {"candidates": [{"token": str, "score": float}, ...], "model_version": str}
* ``POST /finetune`` {"corpus": [str, ...], "task": "mlm"} -> {"model_version": str}
* ``POST /generate`` {"instruction": str, "input": str, "model_version": str}
  -> {"text": str}
* ``GET /health``    -> {"status": "ok", "model_version": str}

Non-2xx responses carry {"error": str}. Request bodies are canonical
JSON (sorted keys, no extra whitespace) so they are byte-stable for
golden tests. Responses are re-validated client-side.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import requests

from .corpus import MASK, Corpus
from .obfuscate import FillCandidate, Prompt

logger = logging.getLogger(__name__)


class FillerError(RuntimeError):
    """Base class for remote filler failures."""


class FillerUnavailable(FillerError):
    """Transport-level failure persisting through all retry attempts."""


class ProtocolError(FillerError):
    """The service response violates the wire schema."""


class ServiceError(FillerError):
    """The service reported an application error (non-2xx)."""

    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


@dataclass
class ServiceEndpoint:
    base_url: str
    timeout: float = 10.0
    retries: int = 2
    model_version: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        self.base_url = self.base_url.rstrip("/")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


class RemoteFiller:
    """MaskFiller backed by the fill-mask service."""

    def __init__(self, endpoint: ServiceEndpoint, session=None):
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self.model_version = endpoint.model_version

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, body=None) -> dict:
        url = self.endpoint.base_url + path
        attempts = self.endpoint.retries + 1
        last_exc: Exception | None = None
        resp = None
        for _ in range(attempts):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.endpoint.timeout)
                else:
                    resp = self._session.post(
                        url,
                        data=canonical_json(body),
                        headers={"Content-Type": "application/json"},
                        timeout=self.endpoint.timeout,
                    )
                break
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
        if resp is None:
            raise FillerUnavailable(
                f"{method} {url} failed after {attempts} attempt(s): {last_exc}"
            ) from last_exc
        try:
            text = resp.content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"{url}: response is not valid UTF-8") from exc
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{url}: response is not JSON: {text[:200]!r}") from exc
        if not 200 <= resp.status_code < 300:
            message = payload.get("error") if isinstance(payload, dict) else None
            raise ServiceError(resp.status_code, message or text[:200])
        if not isinstance(payload, dict):
            raise ProtocolError(f"{url}: expected a JSON object, got {text[:200]!r}")
        return payload

    # -- operations ---------------------------------------------------------

    def health(self) -> str:
        payload = self._request("GET", "/health")
        version = payload.get("model_version")
        if payload.get("status") != "ok" or not isinstance(version, str):
            raise ProtocolError(f"/health: malformed payload {payload!r}")
        self.model_version = version
        return version

    def _version(self) -> str:
        if self.model_version is None:
            self.health()
        return self.model_version

    def candidates(self, left, right, k: int) -> list[FillCandidate]:
        """Ranked candidates from the service, re-validated locally.

        Marker and whitespace-bearing tokens are filtered out; an
        out-of-order candidate list is re-sorted with a protocol warning.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        body = {
            "left": list(left),
            "right": list(right),
            "k": k,
            "model_version": self._version(),
        }
        payload = self._request("POST", "/fill", body)
        raw = payload.get("candidates")
        version = payload.get("model_version")
        if not isinstance(raw, list) or not isinstance(version, str):
            raise ProtocolError(f"/fill: malformed payload {str(payload)[:200]!r}")
        cands: list[FillCandidate] = []
        for item in raw:
            if (
                not isinstance(item, dict)
                or not isinstance(item.get("token"), str)
                or not isinstance(item.get("score"), (int, float))
                or isinstance(item.get("score"), bool)
            ):
                raise ProtocolError(f"/fill: malformed candidate {str(item)[:200]!r}")
            token, score = item["token"], float(item["score"])
            if not (math.isfinite(score) and score > 0):
                raise ProtocolError(f"/fill: candidate score must be finite and > 0: {item!r}")
            if token == MASK or not token or token.split() != [token]:
                logger.warning("dropping unusable candidate token %r", token)
                continue
            cands.append(FillCandidate(token, score))
        scores = [c.score for c in cands]
        if scores != sorted(scores, reverse=True):
            logger.warning("/fill returned candidates out of order; re-sorting")
        cands.sort(key=lambda c: (-c.score, c.token))
        self.model_version = version
        return cands[:k]

    def remote_finetune(self, corpus: Corpus) -> str:
        """Blocking fine-tune; returns and adopts the new model version."""
        if not corpus.sentences:
            raise ValueError("cannot fine-tune on an empty corpus")
        body = {"corpus": [s.text() for s in corpus.sentences], "task": "mlm"}
        payload = self._request("POST", "/finetune", body)
        version = payload.get("model_version")
        if not isinstance(version, str) or not version:
            raise ProtocolError(f"/finetune: malformed payload {str(payload)[:200]!r}")
        self.model_version = version
        return version

    def finetune(self, corpus: Corpus) -> "RemoteFiller":
        """MaskFiller fine-tune capability; later calls use the new version."""
        self.remote_finetune(corpus)
        return self

    def generate(self, prompt: Prompt) -> str:
        body = {
            "instruction": prompt.instruction,
            "input": prompt.input,
            "model_version": self._version(),
        }
        payload = self._request("POST", "/generate", body)
        text = payload.get("text")
        if not isinstance(text, str):
            raise ProtocolError(f"/generate: malformed payload {str(payload)[:200]!r}")
        return text
