"""Edit-service and critic-service clients: wire protocol, HTTP transport, mocks.

Wire protocol (JSON over POST, all binary payloads base64-encoded):

    POST <editor>/edit
        {"image": b64, "media_type": str, "prompt": str, "n_variants": int}
        -> {"candidates": [b64, ...]}

    POST <critic>/critique
        {"original": b64, "candidates": [b64, ...], "instruction": str,
         "prompt_template": str}
        -> {"accept": bool, "best_index": int|null, "reasoning": str}

Canonical serialization is sorted-key, no-whitespace JSON so recorded
request/response fixtures round-trip byte-for-byte.

A base URL with the ``mock:`` scheme selects in-process deterministic
backends instead of HTTP. Mock outputs are pure functions of (seed, inputs):
the editor derives small valid images from a keyed hash of the request, the
critic accepts a request iff its hash falls under the configured acceptance
rate. ``mock:`` accepts comma-separated options, e.g. ``mock:accept_rate=0``.

Transport failures are retried a bounded number of times and then raised as
:class:`TransportError`; malformed responses raise :class:`ProtocolError`.
Callers treat both as *failures*, never as critic discards.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass

import requests
from PIL import Image

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECONDS = 30.0
DEFAULT_MAX_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 0.5
MOCK_SCHEME = "mock:"
DEFAULT_MOCK_ACCEPT_RATE = 0.85


class TransportError(RuntimeError):
    """The remote service could not be reached or kept failing after retries."""


class ProtocolError(ValueError):
    """A request or response does not conform to the wire protocol."""


class CriticProtocolError(ProtocolError):
    """The critic returned a response that violates the verdict contract."""


@dataclass(frozen=True)
class CritiqueVerdict:
    """Critic decision for one edit batch.

    ``best_index`` is present exactly when ``accept`` is true and selects the
    winning candidate.
    """

    accept: bool
    best_index: int | None
    reasoning: str

    def __post_init__(self) -> None:
        if self.accept != (self.best_index is not None):
            raise CriticProtocolError(
                f"accept={self.accept} inconsistent with best_index={self.best_index}"
            )


def canonical_json(obj) -> bytes:
    """Canonical wire bytes: sorted keys, minimal separators, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_edit_request(image: bytes, media_type: str, prompt: str, n_variants: int) -> bytes:
    if n_variants < 1:
        raise ProtocolError(f"n_variants must be >= 1, got {n_variants}")
    return canonical_json(
        {
            "image": base64.b64encode(image).decode("ascii"),
            "media_type": media_type,
            "prompt": prompt,
            "n_variants": n_variants,
        }
    )


def decode_edit_request(payload: bytes) -> tuple[bytes, str, str, int]:
    doc = _load_json_object(payload, required={"image", "media_type", "prompt", "n_variants"})
    if not isinstance(doc["n_variants"], int) or doc["n_variants"] < 1:
        raise ProtocolError(f"invalid n_variants: {doc['n_variants']!r}")
    return (
        _b64_field(doc, "image"),
        _str_field(doc, "media_type"),
        _str_field(doc, "prompt"),
        doc["n_variants"],
    )


def encode_edit_response(candidates: list[bytes]) -> bytes:
    return canonical_json({"candidates": [base64.b64encode(c).decode("ascii") for c in candidates]})


def decode_edit_response(payload: bytes) -> list[bytes]:
    doc = _load_json_object(payload, required={"candidates"})
    if not isinstance(doc["candidates"], list) or not doc["candidates"]:
        raise ProtocolError("edit response must contain a non-empty candidate list")
    return [_b64_value(c, "candidates") for c in doc["candidates"]]


def encode_critique_request(
    original: bytes, candidates: list[bytes], instruction: str, prompt_template: str
) -> bytes:
    return canonical_json(
        {
            "original": base64.b64encode(original).decode("ascii"),
            "candidates": [base64.b64encode(c).decode("ascii") for c in candidates],
            "instruction": instruction,
            "prompt_template": prompt_template,
        }
    )


def decode_critique_request(payload: bytes) -> tuple[bytes, list[bytes], str, str]:
    doc = _load_json_object(
        payload, required={"original", "candidates", "instruction", "prompt_template"}
    )
    if not isinstance(doc["candidates"], list) or not doc["candidates"]:
        raise ProtocolError("critique request must contain a non-empty candidate list")
    return (
        _b64_field(doc, "original"),
        [_b64_value(c, "candidates") for c in doc["candidates"]],
        _str_field(doc, "instruction"),
        _str_field(doc, "prompt_template"),
    )


def encode_critique_response(verdict: CritiqueVerdict) -> bytes:
    return canonical_json(
        {"accept": verdict.accept, "best_index": verdict.best_index, "reasoning": verdict.reasoning}
    )


def decode_critique_response(payload: bytes, n_candidates: int) -> CritiqueVerdict:
    """Parse and validate a critic response against the candidate count.

    Any structural violation (missing keys, wrong types, accept/best_index
    inconsistency, index out of range) raises :class:`CriticProtocolError`:
    a broken critic is a failure, not a judgment about the edit.
    """
    try:
        doc = _load_json_object(payload, required={"accept", "best_index", "reasoning"})
    except ProtocolError as exc:
        raise CriticProtocolError(str(exc)) from None
    if not isinstance(doc["accept"], bool):
        raise CriticProtocolError(f"accept must be a bool, got {doc['accept']!r}")
    best = doc["best_index"]
    if best is not None and (isinstance(best, bool) or not isinstance(best, int)):
        raise CriticProtocolError(f"best_index must be int or null, got {best!r}")
    if best is not None and not 0 <= best < n_candidates:
        raise CriticProtocolError(f"best_index {best} out of range for {n_candidates} candidates")
    if not isinstance(doc["reasoning"], str):
        raise CriticProtocolError("reasoning must be a string")
    return CritiqueVerdict(accept=doc["accept"], best_index=best, reasoning=doc["reasoning"])


def _load_json_object(payload: bytes, required: set[str]) -> dict:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"invalid JSON payload: {exc}") from None
    if not isinstance(doc, dict):
        raise ProtocolError("payload must be a JSON object")
    missing = required - doc.keys()
    if missing:
        raise ProtocolError(f"payload missing keys: {sorted(missing)}")
    return doc


def _str_field(doc: dict, key: str) -> str:
    if not isinstance(doc[key], str):
        raise ProtocolError(f"{key} must be a string")
    return doc[key]


def _b64_field(doc: dict, key: str) -> bytes:
    return _b64_value(doc[key], key)


def _b64_value(value, key: str) -> bytes:
    if not isinstance(value, str):
        raise ProtocolError(f"{key} entries must be base64 strings")
    try:
        return base64.b64decode(value, validate=True)
    except (ValueError, TypeError) as exc:
        raise ProtocolError(f"{key} is not valid base64: {exc}") from None


def _post_with_retries(url: str, payload: bytes, timeout: float, max_attempts: int) -> bytes:
    last_error: Exception | None = None
    for attempt in range(max_attempts):
        if attempt:
            time.sleep(RETRY_BACKOFF_SECONDS * 2 ** (attempt - 1))
        try:
            response = requests.post(
                url,
                data=payload,
                headers={"Content-Type": "application/json"},
                timeout=timeout,
            )
        except requests.RequestException as exc:
            last_error = exc
            log.warning("POST %s attempt %d/%d failed: %s", url, attempt + 1, max_attempts, exc)
            continue
        if response.status_code >= 500:
            last_error = TransportError(f"{url} returned {response.status_code}")
            log.warning("POST %s attempt %d/%d: HTTP %d", url, attempt + 1, max_attempts, response.status_code)
            continue
        if response.status_code != 200:
            raise TransportError(f"{url} returned {response.status_code}: {response.text[:200]}")
        return response.content
    raise TransportError(f"{url} failed after {max_attempts} attempts: {last_error}")


class HttpEditClient:
    """Edit-service client speaking the /edit wire protocol."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_attempts = max_attempts

    def edit(self, image: bytes, media_type: str, prompt: str, n_variants: int) -> list[bytes]:
        payload = encode_edit_request(image, media_type, prompt, n_variants)
        raw = _post_with_retries(f"{self.base_url}/edit", payload, self.timeout, self.max_attempts)
        return decode_edit_response(raw)


class HttpCriticClient:
    """Critic-service client speaking the /critique wire protocol."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_attempts = max_attempts

    def critique(
        self, original: bytes, candidates: list[bytes], instruction: str, prompt_template: str
    ) -> CritiqueVerdict:
        payload = encode_critique_request(original, candidates, instruction, prompt_template)
        raw = _post_with_retries(
            f"{self.base_url}/critique", payload, self.timeout, self.max_attempts
        )
        return decode_critique_response(raw, n_candidates=len(candidates))


def _keyed_digest(seed: int, *parts: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=32, key=str(seed).encode("ascii"))
    for part in parts:
        h.update(len(part).to_bytes(8, "little"))
        h.update(part)
    return h.digest()


def _digest_to_image(digest: bytes, media_type: str, size: int = 16) -> bytes:
    """A small valid image whose pixels are derived from ``digest``.

    Candidates must be decodable (the table-height zoom decodes pixels), so
    the mock emits real PNG/JPEG bytes rather than raw hash output.
    """
    need = size * size * 3
    pixels = (digest * (need // len(digest) + 1))[:need]
    img = Image.frombytes("RGB", (size, size), pixels)
    buf = io.BytesIO()
    if media_type == "image/jpeg":
        img.save(buf, format="JPEG", quality=90)
    else:
        img.save(buf, format="PNG")
    return buf.getvalue()


class MockEditClient:
    """Deterministic in-process stand-in for the edit service.

    Candidate i is a pure function of (seed, image, prompt, i); identical
    requests always yield identical candidate bytes.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def edit(self, image: bytes, media_type: str, prompt: str, n_variants: int) -> list[bytes]:
        if n_variants < 1:
            raise ProtocolError(f"n_variants must be >= 1, got {n_variants}")
        return [
            _digest_to_image(
                _keyed_digest(self.seed, b"edit", image, prompt.encode("utf-8"), bytes([i])),
                media_type,
            )
            for i in range(n_variants)
        ]


class MockCriticClient:
    """Deterministic in-process stand-in for the critic service.

    The accept decision hashes (seed, original, candidates, instruction) to a
    uniform value in [0, 1) and accepts when it falls below ``accept_rate``;
    the best index comes from the same digest. ``accept_rate=0`` rejects
    everything, ``accept_rate=1`` accepts everything.
    """

    def __init__(self, seed: int = 0, accept_rate: float = DEFAULT_MOCK_ACCEPT_RATE):
        if not 0.0 <= accept_rate <= 1.0:
            raise ValueError(f"accept_rate must be in [0, 1], got {accept_rate}")
        self.seed = seed
        self.accept_rate = accept_rate

    def critique(
        self, original: bytes, candidates: list[bytes], instruction: str, prompt_template: str
    ) -> CritiqueVerdict:
        if not candidates:
            raise ProtocolError("critique requires at least one candidate")
        digest = _keyed_digest(
            self.seed, b"critic", original, *candidates, instruction.encode("utf-8")
        )
        u = int.from_bytes(digest[:8], "big") / 2**64
        if u < self.accept_rate:
            best = int.from_bytes(digest[8:12], "big") % len(candidates)
            return CritiqueVerdict(True, best, f"mock accept: u={u:.4f} < {self.accept_rate}")
        return CritiqueVerdict(False, None, f"mock reject: u={u:.4f} >= {self.accept_rate}")


def _parse_mock_options(url: str) -> dict[str, str]:
    spec = url[len(MOCK_SCHEME):].strip()
    options: dict[str, str] = {}
    if not spec:
        return options
    for item in spec.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad mock option {item!r}; expected key=value")
        options[key.strip()] = value.strip()
    return options


def create_edit_client(url: str, seed: int = 0):
    """Editor client for ``url``; the ``mock:`` scheme selects the in-process backend."""
    if url.startswith(MOCK_SCHEME):
        options = _parse_mock_options(url)
        return MockEditClient(seed=int(options.get("seed", seed)))
    return HttpEditClient(url)


def create_critic_client(url: str, seed: int = 0):
    """Critic client for ``url``; ``mock:`` options: ``accept_rate``, ``seed``."""
    if url.startswith(MOCK_SCHEME):
        options = _parse_mock_options(url)
        return MockCriticClient(
            seed=int(options.get("seed", seed)),
            accept_rate=float(options.get("accept_rate", DEFAULT_MOCK_ACCEPT_RATE)),
        )
    return HttpCriticClient(url)
