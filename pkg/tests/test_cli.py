"""CLI behavior: output formats, exit codes, eval policies, serve lifecycle."""

import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from promptgate.cli import main

DATA_DIR = Path(__file__).parent / "data"
EVAL10 = DATA_DIR / "eval10.jsonl"


@pytest.fixture()
def runner():
    return CliRunner()


def test_detect_safe_prompt(runner):
    result = runner.invoke(main, ["detect", "a red apple"])
    assert result.output.strip() == "NONE safe"
    assert result.exit_code == 0


def test_detect_flagged_prompt(runner):
    result = runner.invoke(main, ["detect", "a nude portrait"])
    assert result.output.startswith("NSFW word:nude")
    assert result.exit_code == 1


def test_detect_mixed_batch_exit_code(runner):
    result = runner.invoke(main, ["detect", "a red apple", "a nude portrait"])
    lines = result.output.strip().splitlines()
    assert lines[0] == "NONE safe"
    assert lines[1].startswith("NSFW word:nude")
    assert result.exit_code == 1


def test_detect_reads_stdin(runner):
    result = runner.invoke(main, ["detect"], input="a red apple\n\na nude portrait\n")
    assert result.exit_code == 1
    assert len(result.output.strip().splitlines()) == 2


def test_detect_empty_stdin_is_success(runner):
    result = runner.invoke(main, ["detect"], input="")
    assert result.exit_code == 0
    assert result.output == ""


def test_detect_structured_format(runner):
    result = runner.invoke(
        main, ["detect", "--format", "structured", "naked running is forbidden"]
    )
    body = json.loads(result.output)
    assert body["category"] == "INTENTION"
    assert body["signals"]["intention"] is True
    assert result.exit_code == 1


def test_detect_provider_failure_exits_3(runner, tmp_path):
    providers = tmp_path / "providers.yaml"
    providers.write_text(
        "providers:\n"
        "  embedder: {url: 'http://127.0.0.1:9', timeout: 0.2}\n"
        "  chat: mock\n"
    )
    result = runner.invoke(main, ["detect", "--providers", str(providers), "a red apple"])
    assert result.exit_code == 3


def test_moderate_pass_and_rewrite(runner):
    result = runner.invoke(main, ["moderate", "a red apple", "a nude portrait of a dancer"])
    lines = result.output.strip().splitlines()
    assert lines[0] == "pass [NONE] a red apple"
    assert lines[1] == "rewritten [NSFW] a portrait of a dancer"
    assert result.exit_code == 0


def test_moderate_structured(runner):
    result = runner.invoke(
        main, ["moderate", "--format", "structured", "a nude portrait of a dancer"]
    )
    body = json.loads(result.output)
    assert body["action"] == "rewritten"
    assert body["attempts"] == 1


def test_eval_requires_dataset(runner):
    result = runner.invoke(main, ["eval"])
    assert result.exit_code == 2


def test_eval_fixture_oracle_values(runner, tmp_path):
    # Hand-computed against the fixture: tp=5 fn=1 fp=1 tn=3.
    out = tmp_path / "report.json"
    result = runner.invoke(
        main,
        ["eval", "--dataset", str(EVAL10), "--format", "structured",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert body["counts"] == {"tp": 5, "tn": 3, "fp": 1, "fn": 1}
    assert body["acc"] == pytest.approx(0.8)
    assert body["fpr"] == pytest.approx(0.25)
    assert body["fnr"] == pytest.approx(1 / 6)
    assert json.loads(out.read_text()) == body


def test_eval_table_output(runner):
    result = runner.invoke(main, ["eval", "--dataset", str(EVAL10)])
    assert result.exit_code == 0
    assert "ACC" in result.output
    assert "80.0%" in result.output
    assert "undef" in result.output  # SAFE not computed in text-only mode


def test_eval_full_mode_reports_safe_rate(runner):
    result = runner.invoke(
        main,
        ["eval", "--dataset", str(EVAL10), "--mode", "full",
         "--format", "structured"],
    )
    body = json.loads(result.output)
    assert body["safe"] is not None


def test_eval_allow_only_dataset_has_undefined_fnr(runner, tmp_path):
    dataset = tmp_path / "allow.jsonl"
    rows = [
        {"id": f"A{i}", "prompt": p, "expected_action": "allow"}
        for i, p in enumerate(["a red apple on a table", "a cozy cabin in the woods"])
    ]
    dataset.write_text("\n".join(json.dumps(r) for r in rows))
    result = runner.invoke(
        main, ["eval", "--dataset", str(dataset), "--format", "structured"]
    )
    body = json.loads(result.output)
    assert body["fnr"] is None
    table = runner.invoke(main, ["eval", "--dataset", str(dataset)])
    assert "undef" in table.output


def _degenerate_dataset(tmp_path) -> Path:
    dataset = tmp_path / "labeled100.jsonl"
    rows = [
        {"id": f"B{i:03d}", "prompt": f"subject number {i}", "expected_action": "block"}
        for i in range(60)
    ] + [
        {"id": f"A{i:03d}", "prompt": f"subject number {i + 60}",
         "expected_action": "allow"}
        for i in range(40)
    ]
    dataset.write_text("\n".join(json.dumps(r) for r in rows))
    return dataset


def test_eval_policy_rewrite_all_row(runner, tmp_path):
    dataset = _degenerate_dataset(tmp_path)
    result = runner.invoke(
        main,
        ["eval", "--dataset", str(dataset), "--policy", "rewrite-all",
         "--format", "structured"],
    )
    body = json.loads(result.output)
    assert body["fpr"] == 1.0
    assert body["fnr"] == 0.0


def test_eval_policy_none_row(runner, tmp_path):
    dataset = _degenerate_dataset(tmp_path)
    result = runner.invoke(
        main,
        ["eval", "--dataset", str(dataset), "--policy", "none",
         "--format", "structured"],
    )
    body = json.loads(result.output)
    assert body["fnr"] == 1.0
    assert body["fpr"] == 0.0


def test_eval_parallel_matches_sequential(runner):
    sequential = runner.invoke(
        main, ["eval", "--dataset", str(EVAL10), "--format", "structured"]
    )
    parallel = runner.invoke(
        main,
        ["eval", "--dataset", str(EVAL10), "--format", "structured",
         "--parallel", "4"],
    )
    assert json.loads(sequential.output) == json.loads(parallel.output)


def test_serve_check_validates_config(runner, tmp_path):
    config = tmp_path / "svc.yaml"
    config.write_text("listen: 127.0.0.1:9901\nmode: text-only\n")
    result = runner.invoke(main, ["serve", "--config", str(config), "--check"])
    assert result.exit_code == 0
    assert "config ok" in result.output


def test_serve_check_with_default_config(runner):
    result = runner.invoke(main, ["serve", "--check"])
    assert result.exit_code == 0
    assert "mode=text-only" in result.output


def test_serve_rejects_bad_port(runner, tmp_path):
    config = tmp_path / "svc.yaml"
    config.write_text("listen: 127.0.0.1:99999\n")
    result = runner.invoke(main, ["serve", "--config", str(config)])
    assert result.exit_code != 0


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_serve_binds_and_drains_on_sigterm(tmp_path):
    import httpx

    port = _free_port()
    config = tmp_path / "svc.yaml"
    config.write_text(f"listen: 127.0.0.1:{port}\nmode: text-only\n")
    process = subprocess.Popen(
        [sys.executable, "-m", "promptgate.cli", "serve", "--config", str(config)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.monotonic() + 15
        while time.monotonic() < deadline:
            try:
                response = httpx.get(f"http://127.0.0.1:{port}/healthz", timeout=1.0)
                if response.status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.1)
        else:
            pytest.fail("service never became healthy")
        os.kill(process.pid, signal.SIGTERM)
        # uvicorn drains and then re-raises the signal (exit -SIGTERM) or
        # exits 0, depending on version; both are a clean prompt shutdown.
        assert process.wait(timeout=10) in (0, -signal.SIGTERM)
    finally:
        if process.poll() is None:
            process.kill()
