"""Two-stage inference: hint generation, code-input assembly, code generation,
and sandboxed execution, against pluggable text-generation endpoints.

Endpoint wire contract: HTTP POST /generate with body
{"prompt": str, "max_new_tokens": int, "temperature": num} and response
{"text": str}, status 200 on success. Decoding is greedy (temperature 0) at
both stages so suites are reproducible.

Also implements the gold-hint mode: replace the hint stage with a prefix
fraction of verified teacher hints to measure how hint quality bounds code
accuracy.
"""

from __future__ import annotations

import json
import logging
import math
import os
import socket
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .core import (
    DEFAULT_TOLERANCE,
    EmptyHint,
    GfpError,
    NumericTolerance,
    Problem,
    build_code_input,
    numbers_match,
    sanitize_hint,
    split_hints,
    write_jsonl_atomic,
)
from .executor import (
    DEFAULT_SANDBOX,
    Category,
    ExecOutcome,
    ExecStatus,
    SandboxConfig,
    error_category,
    run_program,
)

log = logging.getLogger(__name__)

DEFAULT_HINT_MAX_NEW_TOKENS = 128
DEFAULT_CODE_MAX_NEW_TOKENS = 256


class EndpointError(GfpError):
    """A generation endpoint was unreachable or replied out of contract."""


class MissingGoldHints(GfpError):
    """Gold-hint mode was asked for a problem with no verified hints."""


@dataclass(frozen=True)
class StageEndpoint:
    url: str
    max_new_tokens: int = DEFAULT_HINT_MAX_NEW_TOKENS
    temperature: float = 0.0
    request_timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    @property
    def generate_url(self) -> str:
        base = self.url.rstrip("/")
        return base if base.endswith("/generate") else base + "/generate"


def hint_stage_endpoint(url: str, **kwargs) -> StageEndpoint:
    return StageEndpoint(url=url, **kwargs)


def code_stage_endpoint(url: str, **kwargs) -> StageEndpoint:
    kwargs.setdefault("max_new_tokens", DEFAULT_CODE_MAX_NEW_TOKENS)
    return StageEndpoint(url=url, **kwargs)


@dataclass(frozen=True)
class TwoStage:
    """Generate hints with the hint model, then code."""


@dataclass(frozen=True)
class GoldFraction:
    """Skip the hint model; use a prefix fraction of verified teacher hints."""

    fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {self.fraction}")


InferenceMode = TwoStage | GoldFraction


@dataclass(frozen=True)
class EvalRecord:
    """Per-item inference trace."""

    problem_id: str
    hints_used: list[str]
    hint_source: str  # "generated" or "gold"
    gold_fraction: float | None
    code: str
    outcome: ExecOutcome
    predicted: float | None
    correct: bool
    category: Category


def generate_text(prompt: str, ep: StageEndpoint) -> str:
    try:
        resp = requests.post(
            ep.generate_url,
            json={"prompt": prompt, "max_new_tokens": ep.max_new_tokens,
                  "temperature": ep.temperature},
            timeout=ep.request_timeout,
        )
    except requests.RequestException as exc:
        raise EndpointError(f"{ep.generate_url}: {type(exc).__name__}: {exc}") from exc
    if resp.status_code != 200:
        raise EndpointError(f"{ep.generate_url}: HTTP {resp.status_code}")
    try:
        text = resp.json()["text"]
    except (ValueError, KeyError, TypeError) as exc:
        raise EndpointError(f"{ep.generate_url}: response missing 'text'") from exc
    if not isinstance(text, str):
        raise EndpointError(f"{ep.generate_url}: 'text' is not a string")
    return text


def generate_hints(question: str, ep: StageEndpoint) -> list[str]:
    """Ask the hint endpoint for hints; an empty generation is not an error."""
    raw = generate_text(question, ep)
    hints = []
    for piece in split_hints(raw):
        try:
            hints.append(sanitize_hint(piece))
        except EmptyHint:
            continue
    if not hints:
        log.info("hint endpoint produced no usable hints for question %.40r", question)
    return hints


def _assemble(problem: Problem, hints: Sequence[str], hint_source: str,
              gold_fraction: float | None, code: str, outcome: ExecOutcome,
              tol: NumericTolerance) -> EvalRecord:
    predicted = outcome.value if outcome.status is ExecStatus.VALUE else None
    correct = predicted is not None and numbers_match(predicted, problem.gold_answer, tol)
    return EvalRecord(
        problem_id=problem.id,
        hints_used=list(hints),
        hint_source=hint_source,
        gold_fraction=gold_fraction,
        code=code,
        outcome=outcome,
        predicted=predicted,
        correct=correct,
        category=error_category(outcome, problem.gold_answer, tol),
    )


def _failed(problem: Problem, hints: Sequence[str], hint_source: str,
            gold_fraction: float | None, reason: str, tol: NumericTolerance) -> EvalRecord:
    outcome = ExecOutcome(status=ExecStatus.RUNTIME_ERROR,
                          stderr_excerpt=f"endpoint error: {reason}")
    return _assemble(problem, hints, hint_source, gold_fraction, "", outcome, tol)


def solve(problem: Problem, hint_ep: StageEndpoint, code_ep: StageEndpoint,
          sandbox: SandboxConfig = DEFAULT_SANDBOX,
          tol: NumericTolerance = DEFAULT_TOLERANCE) -> EvalRecord:
    """Full two-stage loop for one problem.

    Endpoint failures yield a failed record (empty code, compilation-error
    category) instead of raising, so long benchmark runs survive transient
    faults.
    """
    try:
        hints = generate_hints(problem.question, hint_ep)
    except EndpointError as exc:
        return _failed(problem, [], "generated", None, str(exc), tol)
    return _solve_code_stage(problem, hints, "generated", None, code_ep, sandbox, tol)


def solve_with_gold_hints(problem: Problem, gold_hints: Sequence[str], fraction: float,
                          code_ep: StageEndpoint,
                          sandbox: SandboxConfig = DEFAULT_SANDBOX,
                          tol: NumericTolerance = DEFAULT_TOLERANCE) -> EvalRecord:
    """Code stage only, with the first ceil(fraction * len) gold hints.

    Fraction 0 uses no hints at all, so the code input is the bare question.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    keep = math.ceil(fraction * len(gold_hints))
    hints = list(gold_hints[:keep])
    return _solve_code_stage(problem, hints, "gold", fraction, code_ep, sandbox, tol)


def _solve_code_stage(problem: Problem, hints: Sequence[str], hint_source: str,
                      gold_fraction: float | None, code_ep: StageEndpoint,
                      sandbox: SandboxConfig, tol: NumericTolerance) -> EvalRecord:
    code_input = build_code_input(problem.question, hints)
    try:
        code = generate_text(code_input, code_ep)
    except EndpointError as exc:
        return _failed(problem, hints, hint_source, gold_fraction, str(exc), tol)
    outcome = run_program(code, sandbox)
    return _assemble(problem, hints, hint_source, gold_fraction, code, outcome, tol)


def _probe(ep: StageEndpoint) -> None:
    """TCP reachability check; consumes no scripted mock responses."""
    parsed = urllib.parse.urlparse(ep.generate_url)
    port = parsed.port or (443 if parsed.scheme == "https" else 80)
    try:
        with socket.create_connection((parsed.hostname, port), timeout=5):
            pass
    except OSError as exc:
        raise EndpointError(f"endpoint {ep.url} unreachable: {exc}") from exc


def run_suite(problems: Sequence[Problem], mode: InferenceMode,
              hint_ep: StageEndpoint | None = None,
              code_ep: StageEndpoint | None = None,
              sandbox: SandboxConfig = DEFAULT_SANDBOX,
              tol: NumericTolerance = DEFAULT_TOLERANCE,
              gold_hints: Mapping[str, Sequence[str]] | None = None,
              out_path: str | os.PathLike | None = None) -> list[EvalRecord]:
    """Process every problem; output order matches input order.

    Per-item failures are contained as failed records. When out_path is given
    the records are written as JSONL and a run manifest (config snapshot plus
    counts) is written alongside as <out_path>.manifest.json.
    """
    if code_ep is None:
        raise ValueError("code endpoint is required")
    if isinstance(mode, TwoStage):
        if hint_ep is None:
            raise ValueError("two-stage mode requires a hint endpoint")
        _probe(hint_ep)
    else:
        if gold_hints is None:
            raise ValueError("gold-fraction mode requires a gold hints mapping")
    _probe(code_ep)

    records: list[EvalRecord] = []
    for problem in problems:
        if isinstance(mode, TwoStage):
            records.append(solve(problem, hint_ep, code_ep, sandbox, tol))
        else:
            hints = gold_hints.get(problem.id)
            if hints is None:
                reason = MissingGoldHints(f"problem {problem.id!r} has no verified hints")
                log.warning("%s", reason)
                records.append(_failed(problem, [], "gold", mode.fraction, str(reason), tol))
            else:
                records.append(solve_with_gold_hints(problem, hints, mode.fraction,
                                                     code_ep, sandbox, tol))
    if out_path is not None:
        write_eval_records(records, out_path)
        manifest = suite_manifest(records, mode, hint_ep, code_ep, sandbox, tol)
        manifest_path = Path(str(out_path) + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return records


def suite_manifest(records: Sequence[EvalRecord], mode: InferenceMode,
                   hint_ep: StageEndpoint | None, code_ep: StageEndpoint,
                   sandbox: SandboxConfig, tol: NumericTolerance) -> dict:
    counts = {c.value: 0 for c in Category}
    for r in records:
        counts[r.category.value] += 1
    return {
        "mode": mode_tag(mode),
        "n_items": len(records),
        "counts": counts,
        "hint_endpoint": None if hint_ep is None else {
            "url": hint_ep.url, "max_new_tokens": hint_ep.max_new_tokens,
            "temperature": hint_ep.temperature},
        "code_endpoint": {
            "url": code_ep.url, "max_new_tokens": code_ep.max_new_tokens,
            "temperature": code_ep.temperature},
        "sandbox": {"interpreter_command": list(sandbox.interpreter_command),
                    "timeout": sandbox.timeout,
                    "max_output_bytes": sandbox.max_output_bytes},
        "tolerance": {"absolute": tol.absolute, "relative": tol.relative},
    }


def mode_tag(mode: InferenceMode) -> str:
    if isinstance(mode, TwoStage):
        return "two_stage"
    return f"gold({mode.fraction:g})"


# --- prediction files --------------------------------------------------------
#
# JSONL, one EvalRecord per line, code stored verbatim. wall_time is kept out
# of the serialized form so identical runs produce byte-identical files.


def eval_record_to_json(record: EvalRecord) -> dict:
    return {
        "problem_id": record.problem_id,
        "hint_source": record.hint_source,
        "gold_fraction": record.gold_fraction,
        "hints_used": record.hints_used,
        "code": record.code,
        "outcome": {
            "status": record.outcome.status.value,
            "value": record.outcome.value,
            "stderr_excerpt": record.outcome.stderr_excerpt,
        },
        "predicted": record.predicted,
        "correct": record.correct,
        "category": record.category.value,
    }


def eval_record_from_json(obj: dict) -> EvalRecord:
    outcome = ExecOutcome(
        status=ExecStatus(obj["outcome"]["status"]),
        value=obj["outcome"]["value"],
        stderr_excerpt=obj["outcome"].get("stderr_excerpt", ""),
    )
    return EvalRecord(
        problem_id=str(obj["problem_id"]),
        hints_used=[str(h) for h in obj["hints_used"]],
        hint_source=obj["hint_source"],
        gold_fraction=obj["gold_fraction"],
        code=obj["code"],
        outcome=outcome,
        predicted=obj["predicted"],
        correct=bool(obj["correct"]),
        category=Category(obj["category"]),
    )


def write_eval_records(records: Sequence[EvalRecord], path: str | os.PathLike) -> None:
    write_jsonl_atomic((eval_record_to_json(r) for r in records), path)


def read_eval_records(path: str | os.PathLike) -> list[EvalRecord]:
    records: list[EvalRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(eval_record_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise GfpError(f"{path}: line {lineno}: bad prediction record: {exc}") from exc
    return records
