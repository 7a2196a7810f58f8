"""Command-line front door: detect, moderate, eval, serve.

Exit codes: 0 success (all prompts safe), 1 flagged content found (detect),
2 usage or configuration error, 3 provider failure.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import click

from .detect import is_safe
from .intent import intention_flag
from .metrics import MetricReport, confusion, format_metric_table, safe_rate
from .moderate import (
    DEFAULT_SYSTEM_PROMPTS,
    ModerationDecision,
    RiskCategory,
    Verification,
    build_template,
    classify,
    moderate,
)
from .providers import ProviderBundle, ProviderError, mock_bundle
from .regen import generate_verified
from .rules import DatasetRecord, RuleSet, load_dataset, load_rules
from .service import ConfigError, build_providers, create_app, load_config

POLICIES = ("full", "rewrite-all", "none")


def _load_rules(rules_path: str | None) -> RuleSet:
    try:
        return load_rules(rules_path)
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"cannot load rules: {exc}") from exc


def _load_bundle(
    providers_path: str | None, rules: RuleSet, mode: str
) -> ProviderBundle:
    if providers_path is None:
        return mock_bundle(rules)
    try:
        config = load_config(providers_path)
        config = replace(config, mode=mode)
        config.validate()
        return build_providers(config, rules)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def _input_prompts(prompts: tuple[str, ...]) -> list[str]:
    if prompts:
        return list(prompts)
    if sys.stdin.isatty():
        return []
    return [line.rstrip("\n") for line in sys.stdin if line.strip()]


def _signal_tokens(outcome, intent_flagged: bool, intent_evidence) -> list[str]:
    tokens: list[str] = []
    if outcome.word is not None:
        tokens.append(f"word:{outcome.word.matched_phrase}")
    if outcome.semantic is not None:
        tokens.append(f"semantic:{outcome.semantic.score:.3f}")
    if outcome.value is not None:
        tokens.append(
            f"value:{outcome.value.best_location[0]}+{outcome.value.best_act[0]}"
        )
    if intent_flagged and intent_evidence is not None:
        tokens.append(
            f"intent:{intent_evidence.cue[0]}->{intent_evidence.unsafe_concept}"
        )
    return tokens


@click.group()
def main() -> None:
    """Prompt moderation gateway for text-to-image generation."""


@main.command()
@click.argument("prompts", nargs=-1)
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None,
              help="Rule bundle YAML (default: packaged rules).")
@click.option("--providers", "providers_path", type=click.Path(exists=True),
              default=None, help="Provider config YAML (default: mocks).")
@click.option("--format", "output_format", type=click.Choice(["text", "structured"]),
              default="text")
def detect(prompts, rules_path, providers_path, output_format) -> None:
    """Classify prompts; exit 1 if any is flagged."""
    rules = _load_rules(rules_path)
    bundle = _load_bundle(providers_path, rules, "text-only")
    any_flagged = False
    for prompt in _input_prompts(prompts):
        try:
            safe, outcome = is_safe(prompt, rules, bundle.embedder)
        except ProviderError as exc:
            click.echo(f"provider failure: {exc}", err=True)
            sys.exit(3)
        intent_flagged, intent_evidence = intention_flag(prompt, rules)
        category = classify(outcome, intent_flagged)
        flagged = category is not RiskCategory.NONE
        any_flagged = any_flagged or flagged
        if output_format == "structured":
            click.echo(json.dumps({
                "prompt": prompt,
                "safe": not flagged,
                "category": category.value,
                "signals": {
                    "word": outcome.word_flag,
                    "semantic": outcome.semantic_flag,
                    "value": outcome.value_flag,
                    "intention": intent_flagged,
                },
                "semantic_score": outcome.semantic_score,
            }, sort_keys=True))
        elif flagged:
            tokens = _signal_tokens(outcome, intent_flagged, intent_evidence)
            click.echo(f"{category.value} {' '.join(tokens)}")
        else:
            click.echo("NONE safe")
    sys.exit(1 if any_flagged else 0)


@main.command("moderate")
@click.argument("prompts", nargs=-1)
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--providers", "providers_path", type=click.Path(exists=True),
              default=None)
@click.option("--format", "output_format", type=click.Choice(["text", "structured"]),
              default="text")
def moderate_command(prompts, rules_path, providers_path, output_format) -> None:
    """Moderate prompts: pass, rewrite, or block each one."""
    rules = _load_rules(rules_path)
    bundle = _load_bundle(providers_path, rules, "text-only")
    for prompt in _input_prompts(prompts):
        try:
            decision = moderate(prompt, rules, bundle.embedder, bundle.chat)
        except ProviderError as exc:
            click.echo(f"provider failure: {exc}", err=True)
            sys.exit(3)
        action = ("pass" if decision.category is RiskCategory.NONE
                  else "rewritten" if decision.verification is Verification.PASSED
                  else "blocked")
        if output_format == "structured":
            click.echo(json.dumps({
                "prompt": prompt,
                "action": action,
                "category": decision.category.value,
                "attempts": decision.attempts,
                "effective_prompt": decision.effective_prompt,
            }, sort_keys=True))
        elif action == "blocked":
            click.echo(f"blocked [{decision.category.value}] after "
                       f"{decision.attempts} attempts")
        else:
            click.echo(f"{action} [{decision.category.value}] "
                       f"{decision.effective_prompt}")


def _policy_decisions(
    policy: str,
    records: list[DatasetRecord],
    rules: RuleSet,
    bundle: ProviderBundle,
    parallel: int,
) -> list[ModerationDecision]:
    if policy == "none":
        return [
            ModerationDecision(
                original_prompt=r.prompt,
                category=RiskCategory.NONE,
                outcome=None,
                intent_evidence=None,
                rewritten_prompt=None,
                verification=Verification.NOT_NEEDED,
                attempts=0,
            )
            for r in records
        ]
    if policy == "rewrite-all":
        decisions = []
        for r in records:
            request = build_template(
                RiskCategory.NSFW, r.prompt, DEFAULT_SYSTEM_PROMPTS,
                rules.chat_temperature,
            )
            decisions.append(
                ModerationDecision(
                    original_prompt=r.prompt,
                    category=RiskCategory.NSFW,
                    outcome=None,
                    intent_evidence=None,
                    rewritten_prompt=bundle.chat.rewrite(request),
                    verification=Verification.PASSED,
                    attempts=1,
                )
            )
        return decisions

    def run(record: DatasetRecord) -> ModerationDecision:
        return moderate(record.prompt, rules, bundle.embedder, bundle.chat)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(run, records))
    return [run(r) for r in records]


@main.command("eval")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              required=True)
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--providers", "providers_path", type=click.Path(exists=True),
              default=None)
@click.option("--policy", type=click.Choice(POLICIES), default="full",
              help="full = detect+rewrite; rewrite-all / none are the "
                   "degenerate baselines.")
@click.option("--mode", type=click.Choice(["text-only", "full"]),
              default="text-only", help="full also generates and checks images.")
@click.option("--format", "output_format", type=click.Choice(["table", "structured"]),
              default="table")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the metric report JSON to this file.")
@click.option("--parallel", type=int, default=1)
def eval_command(dataset_path, rules_path, providers_path, policy, mode,
                 output_format, out_path, parallel) -> None:
    """Score moderation decisions against a labeled dataset."""
    rules = _load_rules(rules_path)
    bundle = _load_bundle(providers_path, rules, mode)
    try:
        records = load_dataset(dataset_path)
    except ValueError as exc:
        raise click.UsageError(f"cannot load dataset: {exc}") from exc
    if not records:
        raise click.UsageError("dataset is empty")

    try:
        decisions = _policy_decisions(policy, records, rules, bundle, parallel)
        safe = None
        if mode == "full":
            verdicts = []
            for decision in decisions:
                prompt = decision.effective_prompt
                if prompt is None:  # blocked: nothing generated, nothing scored
                    continue
                result = generate_verified(
                    prompt, rules, bundle.generator, bundle.checker
                )
                verdicts.append(result.final_verdict)
            safe = safe_rate(verdicts) if verdicts else None
    except ProviderError as exc:
        click.echo(f"provider failure: {exc}", err=True)
        sys.exit(3)

    counts = confusion(records, decisions)
    report = MetricReport.from_counts(counts, safe=safe)
    document = {
        "dataset": str(dataset_path),
        "policy": policy,
        "mode": mode,
        "records": len(records),
        **report.to_dict(),
    }
    if output_format == "structured":
        click.echo(json.dumps(document, sort_keys=True))
    else:
        click.echo(format_metric_table(report))
        click.echo(f"records={len(records)} policy={policy} "
                   f"tp={counts.tp} tn={counts.tn} fp={counts.fp} fn={counts.fn}")
    if out_path:
        Path(out_path).write_text(json.dumps(document, indent=2, sort_keys=True))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--check", is_flag=True, default=False,
              help="Validate config and build the app without binding.")
def serve(config_path, check) -> None:
    """Run the HTTP moderation gateway until interrupted."""
    try:
        config = load_config(config_path)
        app = create_app(config)
    except (ConfigError, ValueError, OSError) as exc:
        raise click.UsageError(f"invalid service config: {exc}") from exc
    if check:
        click.echo(f"config ok: mode={config.mode} listen={config.host}:{config.port}")
        return
    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
