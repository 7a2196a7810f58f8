"""Wire-level clients for the four external models, plus offline mocks.

The pipeline talks to four black boxes: a sentence embedder, a chat model
used for rewriting, an image generator, and an image safety checker. Each
gets its own small interface because their signatures and failure modes
differ. The in-tree mocks are deterministic (fixed seed, reproducible byte
streams across runs) so every pipeline behavior is testable with zero model
weights.

HTTP wire formats (bodies are JSON; kept stable by golden tests):

    POST {base}/embed     {"text": str}                     -> {"vector": [float]}
    POST {base}/chat      {"system": str, "user": str,
                           "temperature": float}            -> {"completion": str}
    POST {base}/generate  {"prompt": str}                   -> {"image_id": str, "locator": str}
    POST {base}/check     {"image_id": str, "locator": str} -> {"verdict": "safe"|"unsafe"}
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np
import requests

from .matching import normalize_text, tokenize
from .rules import RuleSet

MOCK_EMBEDDING_DIM = 64


class ProviderError(RuntimeError):
    """A provider call failed."""


class ProviderUnreachable(ProviderError):
    """The provider endpoint could not be reached."""


class ProviderTimeout(ProviderUnreachable):
    """The provider did not answer within the configured timeout."""


@dataclass(frozen=True)
class ChatRequest:
    """A system+user conversation sent to the rewriting chat model."""

    system_text: str
    user_text: str
    temperature: float

    def __post_init__(self) -> None:
        if not self.system_text.strip() or not self.user_text.strip():
            raise ValueError("system_text and user_text must be non-empty")


@dataclass(frozen=True)
class ImageRef:
    """Locator of a generated image; the payload itself is never loaded."""

    image_id: str
    provenance_prompt: str  # the exact prompt that produced this image
    locator: str


class SafetyVerdict(Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class ChatRewriter(Protocol):
    def rewrite(self, request: ChatRequest) -> str: ...


class ImageGenerator(Protocol):
    def generate(self, prompt: str) -> ImageRef: ...


class ImageChecker(Protocol):
    def check(self, image: ImageRef) -> SafetyVerdict: ...


@dataclass
class ProviderBundle:
    """The four providers a full pipeline run needs.

    generator/checker may be None for text-only operation.
    """

    embedder: Embedder
    chat: ChatRewriter
    generator: ImageGenerator | None = None
    checker: ImageChecker | None = None


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


class MockEmbedder:
    """Deterministic bag-of-tokens embedder.

    Construction: lowercase-tokenize the text; map each token to a
    pseudo-random unit vector seeded by the token's bytes (plus the instance
    seed); average the token vectors; L2-normalize. Dimension 64.

    The same text always embeds to the same vector, across processes and
    runs. Token vectors are memoized; the cache never changes an output.
    """

    def __init__(self, seed: int = 0, dimension: int = MOCK_EMBEDDING_DIM) -> None:
        self.seed = seed
        self.dimension = dimension
        self._token_cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.blake2b(
            token.encode("utf-8"),
            digest_size=8,
            key=self.seed.to_bytes(8, "little", signed=False),
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dimension)
        vec /= np.linalg.norm(vec)
        with self._lock:
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = [t.text for t in tokenize(normalize_text(text))]
        if not tokens:
            raise ProviderError("cannot embed empty text")
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise ProviderError("degenerate embedding (zero vector)")
        return mean / norm


class MockChatRewriter:
    """Scripted chat model.

    Lookup order: ``constant`` (if set), then the ``script`` keyed by the
    prompt being rewritten, then a fallback that strips every blocked
    keyword from the user text. The fallback never returns an empty string.
    """

    SAFE_FALLBACK = "a neutral artistic scene"
    USER_PREFIX = "Rewrite: "

    def __init__(
        self,
        script: dict[str, str] | None = None,
        rules: RuleSet | None = None,
        constant: str | None = None,
    ) -> None:
        self.script = dict(script or {})
        self.rules = rules
        self.constant = constant

    def rewrite(self, request: ChatRequest) -> str:
        if self.constant is not None:
            return self.constant
        prompt = request.user_text
        if prompt.startswith(self.USER_PREFIX):
            prompt = prompt[len(self.USER_PREFIX):]
        if prompt in self.script:
            return self.script[prompt]
        return self._strip_blocked(prompt)

    def _strip_blocked(self, prompt: str) -> str:
        if self.rules is None:
            return prompt or self.SAFE_FALLBACK
        normalized = normalize_text(prompt)
        hits = self.rules.keyword_matcher.scan_text(normalized)
        drop = set()
        for hit in hits:
            drop.update(range(hit.token_start, hit.token_end + 1))
        kept = [
            tok.text
            for i, tok in enumerate(tokenize(normalized))
            if i not in drop
        ]
        return " ".join(kept) if kept else self.SAFE_FALLBACK


class MockImageGenerator:
    """Returns fresh image ids; the locator encodes the id only.

    Ids are drawn from a monotonic counter, so repeated runs of the same
    program produce identical sequences while two calls with the same prompt
    still yield distinct images.
    """

    def __init__(self) -> None:
        self._counter = itertools.count(1)

    def generate(self, prompt: str) -> ImageRef:
        if not prompt.strip():
            raise ProviderError("cannot generate from an empty prompt")
        n = next(self._counter)
        image_id = f"img-{n:06d}"
        return ImageRef(
            image_id=image_id,
            provenance_prompt=prompt,
            locator=f"mock://images/{image_id}.png",
        )


class KeywordImageChecker:
    """Mock safety checker: unsafe iff the prompt that produced the image
    contains a blocked keyword.

    This preserves the pipeline's control flow (verification, regeneration)
    without any vision model: prompts that clear moderation contain no
    blocked keyword, so their images check safe.
    """

    def __init__(self, rules: RuleSet) -> None:
        self.rules = rules

    def check(self, image: ImageRef) -> SafetyVerdict:
        if self.rules.keyword_matcher.contains(image.provenance_prompt):
            return SafetyVerdict.UNSAFE
        return SafetyVerdict.SAFE


class ConstantImageChecker:
    """Always returns the configured verdict (for fault-path tests)."""

    def __init__(self, verdict: SafetyVerdict) -> None:
        self.verdict = verdict

    def check(self, image: ImageRef) -> SafetyVerdict:
        return self.verdict


def mock_bundle(rules: RuleSet, seed: int = 0) -> ProviderBundle:
    """All-mock provider bundle for offline runs and tests."""
    return ProviderBundle(
        embedder=MockEmbedder(seed=seed),
        chat=MockChatRewriter(rules=rules),
        generator=MockImageGenerator(),
        checker=KeywordImageChecker(rules),
    )


# ---------------------------------------------------------------------------
# HTTP clients
# ---------------------------------------------------------------------------


class _HttpClient:
    """Shared POST/JSON plumbing. No retries here: retry policy belongs to
    the caller (the moderation loop decides how often to re-ask)."""

    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _post(self, path: str, body: dict) -> dict:
        url = f"{self.base_url}{path}"
        try:
            response = requests.post(url, json=body, timeout=self.timeout)
        except requests.Timeout as exc:
            raise ProviderTimeout(f"{url}: timed out after {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise ProviderUnreachable(f"{url}: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(f"{url}: HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProviderError(f"{url}: response is not JSON") from exc
        if not isinstance(payload, dict):
            raise ProviderError(f"{url}: response must be a JSON object")
        return payload

    def reachable(self) -> bool:
        try:
            requests.get(self.base_url, timeout=min(self.timeout, 2.0))
            return True
        except requests.RequestException:
            return False


class HttpEmbedder(_HttpClient):
    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        super().__init__(base_url, timeout)
        self.dimension: int | None = None

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ProviderError("cannot embed empty text")
        payload = self._post("/embed", {"text": text})
        vector = np.asarray(payload.get("vector"), dtype=float)
        if vector.ndim != 1 or vector.size == 0 or not np.all(np.isfinite(vector)):
            raise ProviderError(f"{self.base_url}/embed: malformed vector")
        if self.dimension is None:
            self.dimension = int(vector.size)
        elif vector.size != self.dimension:
            raise ProviderError(
                f"{self.base_url}/embed: dimension changed "
                f"({vector.size} != {self.dimension})"
            )
        return vector


class HttpChatRewriter(_HttpClient):
    def rewrite(self, request: ChatRequest) -> str:
        payload = self._post(
            "/chat",
            {
                "system": request.system_text,
                "user": request.user_text,
                "temperature": request.temperature,
            },
        )
        completion = payload.get("completion")
        if not isinstance(completion, str) or not completion.strip():
            raise ProviderError(f"{self.base_url}/chat: empty completion")
        return completion


class HttpImageGenerator(_HttpClient):
    def generate(self, prompt: str) -> ImageRef:
        if not prompt.strip():
            raise ProviderError("cannot generate from an empty prompt")
        payload = self._post("/generate", {"prompt": prompt})
        image_id = payload.get("image_id")
        locator = payload.get("locator")
        if not isinstance(image_id, str) or not isinstance(locator, str):
            raise ProviderError(f"{self.base_url}/generate: malformed response")
        return ImageRef(image_id=image_id, provenance_prompt=prompt, locator=locator)


class HttpImageChecker(_HttpClient):
    def check(self, image: ImageRef) -> SafetyVerdict:
        payload = self._post(
            "/check", {"image_id": image.image_id, "locator": image.locator}
        )
        verdict = payload.get("verdict")
        if verdict not in ("safe", "unsafe"):
            raise ProviderError(f"{self.base_url}/check: malformed verdict {verdict!r}")
        return SafetyVerdict(verdict)
