"""HTTP moderation gateway.

Endpoints:

    POST /v1/detect    {"prompt": str} -> detection signals and evidence
    POST /v1/moderate  {"prompt": str} -> pass / rewritten / blocked
    POST /v1/generate  {"prompt": str} -> moderated generation (full mode)
    GET  /healthz                      -> status and provider reachability

The generator client is only reachable through the moderation pipeline:
no handler forwards a raw prompt to the generator endpoint. Requests beyond
the concurrency cap are rejected with 429 instead of queueing. Prompt text
is kept out of the audit log unless explicitly enabled.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path

import yaml
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .detect import DetectionOutcome, is_safe
from .intent import IntentEvidence, intention_flag
from .moderate import (
    DEFAULT_SYSTEM_PROMPTS,
    ModerationDecision,
    RiskCategory,
    SystemPromptSet,
    Verification,
    classify,
    moderate,
)
from .pipeline import run_pipeline
from .providers import (
    HttpChatRewriter,
    HttpEmbedder,
    HttpImageChecker,
    HttpImageGenerator,
    KeywordImageChecker,
    MockChatRewriter,
    MockEmbedder,
    MockImageGenerator,
    ProviderBundle,
    ProviderError,
    ProviderTimeout,
)
from .rules import RuleSet, load_rules

logger = logging.getLogger("promptgate.service")

MODES = ("text-only", "full")
MOCK_URL = "mock"


class ConfigError(ValueError):
    """Service configuration is invalid."""


@dataclass(frozen=True)
class EndpointConfig:
    url: str  # "mock" or an http(s) base URL
    timeout: float = 10.0


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    rules_path: str | None = None  # None -> packaged default rules
    mode: str = "text-only"
    max_concurrent: int = 8
    log_prompts: bool = False
    embedder: EndpointConfig = EndpointConfig(MOCK_URL)
    chat: EndpointConfig = EndpointConfig(MOCK_URL)
    generator: EndpointConfig | None = None
    checker: EndpointConfig | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.port < 65536:
            raise ConfigError(f"port must be in 1..65535, got {self.port}")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be >= 1")
        endpoints = [("embedder", self.embedder), ("chat", self.chat)]
        if self.mode == "full":
            if self.generator is None or self.checker is None:
                raise ConfigError("full mode requires generator and checker endpoints")
            endpoints += [("generator", self.generator), ("checker", self.checker)]
        for name, endpoint in endpoints:
            if endpoint.timeout <= 0:
                raise ConfigError(f"{name} timeout must be > 0")


def _parse_listen(listen: str) -> tuple[str, int]:
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text:
        raise ConfigError(f"listen address must be host:port, got {listen!r}")
    try:
        return host, int(port_text)
    except ValueError as exc:
        raise ConfigError(f"invalid port in listen address {listen!r}") from exc


def _endpoint_from(raw: object, name: str) -> EndpointConfig:
    if isinstance(raw, str):
        return EndpointConfig(url=raw)
    if isinstance(raw, dict):
        try:
            return EndpointConfig(
                url=str(raw["url"]), timeout=float(raw.get("timeout", 10.0))
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"provider {name!r}: invalid endpoint spec") from exc
    raise ConfigError(f"provider {name!r}: expected a URL or {{url, timeout}} mapping")


def load_config(path: str | Path | None = None) -> ServiceConfig:
    """Load service config from YAML and apply environment overrides.

    Recognized variables: PROMPTGATE_LISTEN, PROMPTGATE_RULES,
    PROMPTGATE_MODE, PROMPTGATE_EMBEDDER_URL, PROMPTGATE_CHAT_URL,
    PROMPTGATE_GENERATOR_URL, PROMPTGATE_CHECKER_URL.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("service config must be a YAML mapping")

    providers = doc.get("providers", {}) or {}
    if not isinstance(providers, dict):
        raise ConfigError("providers must be a mapping")

    config = ServiceConfig(
        rules_path=doc.get("rules"),
        mode=str(doc.get("mode", "text-only")),
        max_concurrent=int(doc.get("max_concurrent", 8)),
        log_prompts=bool(doc.get("log_prompts", False)),
        embedder=_endpoint_from(providers.get("embedder", MOCK_URL), "embedder"),
        chat=_endpoint_from(providers.get("chat", MOCK_URL), "chat"),
        generator=(
            _endpoint_from(providers["generator"], "generator")
            if "generator" in providers
            else None
        ),
        checker=(
            _endpoint_from(providers["checker"], "checker")
            if "checker" in providers
            else None
        ),
    )
    if "listen" in doc:
        host, port = _parse_listen(str(doc["listen"]))
        config = replace(config, host=host, port=port)

    env = os.environ
    if env.get("PROMPTGATE_LISTEN"):
        host, port = _parse_listen(env["PROMPTGATE_LISTEN"])
        config = replace(config, host=host, port=port)
    if env.get("PROMPTGATE_RULES"):
        config = replace(config, rules_path=env["PROMPTGATE_RULES"])
    if env.get("PROMPTGATE_MODE"):
        config = replace(config, mode=env["PROMPTGATE_MODE"])
    for name in ("embedder", "chat", "generator", "checker"):
        url = env.get(f"PROMPTGATE_{name.upper()}_URL")
        if url:
            config = replace(config, **{name: EndpointConfig(url=url)})

    config.validate()
    return config


def build_providers(config: ServiceConfig, rules: RuleSet) -> ProviderBundle:
    """Instantiate provider clients; "mock" URLs select the in-tree mocks."""

    def embedder():
        if config.embedder.url == MOCK_URL:
            return MockEmbedder()
        return HttpEmbedder(config.embedder.url, config.embedder.timeout)

    def chat():
        if config.chat.url == MOCK_URL:
            return MockChatRewriter(rules=rules)
        return HttpChatRewriter(config.chat.url, config.chat.timeout)

    generator = checker = None
    if config.mode == "full":
        assert config.generator is not None and config.checker is not None
        generator = (
            MockImageGenerator()
            if config.generator.url == MOCK_URL
            else HttpImageGenerator(config.generator.url, config.generator.timeout)
        )
        checker = (
            KeywordImageChecker(rules)
            if config.checker.url == MOCK_URL
            else HttpImageChecker(config.checker.url, config.checker.timeout)
        )
    return ProviderBundle(
        embedder=embedder(), chat=chat(), generator=generator, checker=checker
    )


# ---------------------------------------------------------------------------
# JSON shapes (held stable by golden tests)
# ---------------------------------------------------------------------------


def _outcome_body(outcome: DetectionOutcome, intent: IntentEvidence | None,
                  intent_flagged: bool) -> dict:
    return {
        "word": None
        if outcome.word is None
        else {
            "phrase": outcome.word.matched_phrase,
            "category": outcome.word.category,
            "span": list(outcome.word.span),
        },
        "semantic": {
            "best_phrase": outcome.semantic.best_phrase
            if outcome.semantic
            else None,
            "score": outcome.semantic_score,
            "flagged": outcome.semantic_flag,
        },
        "value": None
        if outcome.value is None
        else {
            "location": list(outcome.value.best_location),
            "act": list(outcome.value.best_act),
        },
        "intention": None
        if not intent_flagged or intent is None
        else {
            "cue": list(intent.cue),
            "concept": intent.unsafe_concept,
            "linkage": intent.linkage,
        },
    }


def _evidence_digest(body: dict) -> str:
    payload = json.dumps(body, sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:12]


def _decision_action(decision: ModerationDecision) -> str:
    if decision.category is RiskCategory.NONE:
        return "pass"
    if decision.verification is Verification.PASSED:
        return "rewritten"
    return "blocked"


def _provider_status(bundle: ProviderBundle) -> dict[str, bool]:
    status: dict[str, bool] = {}
    for name in ("embedder", "chat", "generator", "checker"):
        provider = getattr(bundle, name)
        if provider is None:
            continue
        probe = getattr(provider, "reachable", None)
        status[name] = bool(probe()) if callable(probe) else True
    return status


def create_app(
    config: ServiceConfig,
    rules: RuleSet | None = None,
    bundle: ProviderBundle | None = None,
    system_prompts: SystemPromptSet = DEFAULT_SYSTEM_PROMPTS,
) -> FastAPI:
    """Build the gateway application (providers default from the config)."""
    config.validate()
    if rules is None:
        rules = load_rules(config.rules_path)
    if bundle is None:
        bundle = build_providers(config, rules)

    app = FastAPI(title="promptgate", docs_url=None, redoc_url=None)
    slots = threading.BoundedSemaphore(config.max_concurrent)
    app.state.slots = slots  # exposed for saturation tests

    @app.middleware("http")
    async def backpressure(request: Request, call_next):
        if not request.url.path.startswith("/v1/"):
            return await call_next(request)
        if not slots.acquire(blocking=False):
            return JSONResponse(
                {"error": "too many concurrent requests"}, status_code=429
            )
        try:
            return await call_next(request)
        finally:
            slots.release()

    async def read_prompt(request: Request) -> str | JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        prompt = body.get("prompt") if isinstance(body, dict) else None
        if not isinstance(prompt, str) or not prompt.strip():
            return JSONResponse(
                {"error": "field 'prompt' must be a non-empty string"},
                status_code=400,
            )
        return prompt

    def provider_failure(exc: ProviderError, phase: str) -> JSONResponse:
        status = 504 if isinstance(exc, ProviderTimeout) else 502
        return JSONResponse(
            {"error": str(exc), "phase": phase}, status_code=status
        )

    def audit(event: str, prompt: str, decision: ModerationDecision,
              evidence: dict) -> None:
        suffix = f" prompt={prompt!r}" if config.log_prompts else ""
        logger.info(
            "event=%s category=%s evidence=%s attempts=%d action=%s%s",
            event,
            decision.category.value,
            _evidence_digest(evidence),
            decision.attempts,
            _decision_action(decision),
            suffix,
        )

    @app.post("/v1/detect")
    async def detect_endpoint(request: Request):
        prompt = await read_prompt(request)
        if isinstance(prompt, JSONResponse):
            return prompt
        try:
            safe, outcome = is_safe(prompt, rules, bundle.embedder)
        except ProviderError as exc:
            return provider_failure(exc, "detect")
        intent_flagged, intent_evidence = intention_flag(prompt, rules)
        category = classify(outcome, intent_flagged)
        evidence = _outcome_body(outcome, intent_evidence, intent_flagged)
        logger.info(
            "event=detect category=%s evidence=%s safe=%s%s",
            category.value,
            _evidence_digest(evidence),
            safe and not intent_flagged,
            f" prompt={prompt!r}" if config.log_prompts else "",
        )
        return {
            "safe": safe and not intent_flagged,
            "category": category.value,
            "signals": {
                "word": outcome.word_flag,
                "semantic": outcome.semantic_flag,
                "value": outcome.value_flag,
                "intention": intent_flagged,
            },
            "evidence": evidence,
        }

    @app.post("/v1/moderate")
    async def moderate_endpoint(request: Request):
        prompt = await read_prompt(request)
        if isinstance(prompt, JSONResponse):
            return prompt
        try:
            decision = moderate(
                prompt, rules, bundle.embedder, bundle.chat, system_prompts
            )
        except ProviderError as exc:
            return provider_failure(exc, "moderate")
        evidence = _outcome_body(
            decision.outcome, decision.intent_evidence,
            decision.category is RiskCategory.INTENTION,
        ) if decision.outcome else {}
        audit("moderate", prompt, decision, evidence)
        body = {
            "action": _decision_action(decision),
            "category": decision.category.value,
            "attempts": decision.attempts,
        }
        if decision.effective_prompt is not None:
            body["effective_prompt"] = decision.effective_prompt
        return body

    @app.post("/v1/generate")
    async def generate_endpoint(request: Request):
        if config.mode != "full":
            return JSONResponse(
                {"error": "image generation is disabled in text-only mode"},
                status_code=409,
            )
        prompt = await read_prompt(request)
        if isinstance(prompt, JSONResponse):
            return prompt
        try:
            report = run_pipeline(
                [prompt], rules, bundle, system_prompts, text_only=False
            )
        except ProviderError as exc:
            return provider_failure(exc, "generate")
        entry = report.entries[0]
        if entry.error:
            return JSONResponse(
                {"error": entry.error, "phase": "generate"}, status_code=502
            )
        logger.info(
            "event=generate category=%s blocked=%s regenerated=%s%s",
            entry.category,
            entry.blocked,
            entry.regenerated,
            f" prompt={prompt!r}" if config.log_prompts else "",
        )
        return {
            "blocked": entry.blocked,
            "category": entry.category,
            "attempts": entry.attempts,
            "image": None
            if entry.image is None
            else {"image_id": entry.image.image_id, "locator": entry.image.locator},
            "verdict": entry.final_verdict.value if entry.final_verdict else None,
            "regenerated": entry.regenerated,
        }

    @app.get("/healthz")
    async def healthz():
        providers = _provider_status(bundle)
        status = "ok" if all(providers.values()) else "degraded"
        return {"status": status, "mode": config.mode, "providers": providers}

    return app
