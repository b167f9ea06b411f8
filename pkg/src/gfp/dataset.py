"""Execution-verify synthesized drafts, drop failures, and emit the two-stage
training corpora plus filtering statistics.

A draft is kept only when running its code reproduces the gold answer within
tolerance. Removed drafts are counted in three buckets: wrong answer (the
program ran but its result was wrong, missing, or non-numeric), execution
failure (syntax error, crash, timeout), and synthesis failure (the teacher
call or its JSON reply failed).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    DEFAULT_TOLERANCE,
    GfpError,
    NumericTolerance,
    Problem,
    Stage,
    TrainPair,
    UnknownProblemId,
    build_code_input,
    index_problems,
    join_hints,
    numbers_match,
    write_jsonl_atomic,
)
from .executor import DEFAULT_SANDBOX, ExecOutcome, ExecStatus, SandboxConfig, run_batch, run_program
from .teacher import SynthDraft

log = logging.getLogger(__name__)


class SchemaError(GfpError):
    """A pair or record file contains a line that violates the schema."""


@dataclass(frozen=True)
class SynthRecord:
    """A draft plus its execution-verification verdict."""

    problem_id: str
    hints: list[str]
    code: str
    outcome: ExecOutcome | None
    verified: bool
    synthesis_error: str | None = None


@dataclass(frozen=True)
class BuildStats:
    total: int
    kept: int
    removed_wrong_answer: int
    removed_exec_failure: int
    removed_synthesis_failure: int

    def __post_init__(self) -> None:
        parts = (self.kept + self.removed_wrong_answer
                 + self.removed_exec_failure + self.removed_synthesis_failure)
        if parts != self.total:
            raise ValueError(f"stats buckets sum to {parts}, expected total {self.total}")

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "removed_wrong_answer": self.removed_wrong_answer,
            "removed_exec_failure": self.removed_exec_failure,
            "removed_synthesis_failure": self.removed_synthesis_failure,
        }


def verify_record(draft: SynthDraft, gold: float,
                  cfg: SandboxConfig = DEFAULT_SANDBOX,
                  tol: NumericTolerance = DEFAULT_TOLERANCE) -> SynthRecord:
    """Run the draft's code once and record whether it reproduces gold.

    No retry: generated code is deterministic, so a second run cannot change
    the verdict. Hints and code are never mutated.
    """
    if not draft.ok:
        return SynthRecord(draft.problem_id, [], "", None, False, draft.error)
    outcome = run_program(draft.code, cfg)
    return SynthRecord(
        problem_id=draft.problem_id,
        hints=list(draft.hints),
        code=draft.code,
        outcome=outcome,
        verified=_is_verified(outcome, gold, tol),
    )


def _is_verified(outcome: ExecOutcome, gold: float, tol: NumericTolerance) -> bool:
    return outcome.status is ExecStatus.VALUE and numbers_match(outcome.value, gold, tol)


def verify_corpus(drafts: Sequence[SynthDraft], problems: Iterable[Problem],
                  cfg: SandboxConfig = DEFAULT_SANDBOX,
                  tol: NumericTolerance = DEFAULT_TOLERANCE) -> list[SynthRecord]:
    """Verify all drafts, fanning executions out through the sandbox pool."""
    by_id = index_problems(problems)
    for draft in drafts:
        if draft.problem_id not in by_id:
            raise UnknownProblemId(f"draft references unknown problem {draft.problem_id!r}")
    runnable = [d for d in drafts if d.ok]
    outcomes = run_batch([d.code for d in runnable], cfg)
    outcome_by_id = {d.problem_id: o for d, o in zip(runnable, outcomes)}

    records: list[SynthRecord] = []
    for draft in drafts:
        if not draft.ok:
            records.append(SynthRecord(draft.problem_id, [], "", None, False, draft.error))
            continue
        outcome = outcome_by_id[draft.problem_id]
        gold = by_id[draft.problem_id].gold_answer
        records.append(SynthRecord(draft.problem_id, list(draft.hints), draft.code,
                                   outcome, _is_verified(outcome, gold, tol)))
    return records


def record_bucket(record: SynthRecord) -> str:
    """Stats bucket for one record: kept, wrong_answer, exec_failure, or
    synthesis_failure. Missing/non-numeric results count as wrong answers
    (the program ran but encoded the problem incorrectly), mirroring the
    understanding-vs-compilation split used at evaluation time."""
    if record.synthesis_error is not None:
        return "synthesis_failure"
    if record.verified:
        return "kept"
    if record.outcome.status in (ExecStatus.VALUE, ExecStatus.MISSING_RESULT,
                                 ExecStatus.NON_NUMERIC_RESULT):
        return "wrong_answer"
    return "exec_failure"


def build_training_sets(records: Sequence[SynthRecord], problems: Iterable[Problem] | Mapping[str, Problem],
                        ) -> tuple[list[TrainPair], list[TrainPair], BuildStats]:
    """Emit one hint-stage pair and one code-stage pair per verified record.

    Hint stage: input is the original question, target is the joined hints.
    Code stage: input is question + " ## " + joined hints, target is the code.
    Unverified records contribute to the stats buckets only. Pair order
    follows record order.
    """
    by_id = problems if isinstance(problems, Mapping) else index_problems(problems)
    hint_pairs: list[TrainPair] = []
    code_pairs: list[TrainPair] = []
    counts = {"kept": 0, "wrong_answer": 0, "exec_failure": 0, "synthesis_failure": 0}

    for record in records:
        problem = by_id.get(record.problem_id)
        if problem is None:
            raise UnknownProblemId(f"record references unknown problem {record.problem_id!r}")
        bucket = record_bucket(record)
        counts[bucket] += 1
        if bucket != "kept":
            continue
        hint_pairs.append(TrainPair(Stage.HINT_GEN, problem.question, join_hints(record.hints)))
        code_pairs.append(TrainPair(Stage.CODE_GEN,
                                    build_code_input(problem.question, record.hints),
                                    record.code))

    stats = BuildStats(
        total=len(records),
        kept=counts["kept"],
        removed_wrong_answer=counts["wrong_answer"],
        removed_exec_failure=counts["exec_failure"],
        removed_synthesis_failure=counts["synthesis_failure"],
    )
    log.info("kept %d of %d records (wrong answer %d, exec failure %d, synthesis failure %d)",
             stats.kept, stats.total, stats.removed_wrong_answer,
             stats.removed_exec_failure, stats.removed_synthesis_failure)
    return hint_pairs, code_pairs, stats


# --- file formats -----------------------------------------------------------
#
# Pair files are JSONL: {"stage": "hint"|"code", "input": str, "target": str}.
# Writes go through a temp file plus atomic rename.


def write_pairs(pairs: Iterable[TrainPair], path: str | os.PathLike) -> None:
    write_jsonl_atomic(
        ({"stage": p.stage.value, "input": p.input, "target": p.target} for p in pairs),
        path,
    )


def read_pairs(path: str | os.PathLike) -> list[TrainPair]:
    pairs: list[TrainPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                stage = Stage(obj["stage"])
                pair = TrainPair(stage, obj["input"], obj["target"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
            pairs.append(pair)
    return pairs


def record_to_json(record: SynthRecord) -> dict:
    # wall_time is deliberately not serialized: record files must be
    # byte-identical across reruns with identical inputs.
    return {
        "problem_id": record.problem_id,
        "hints": record.hints,
        "code": record.code,
        "status": record.outcome.status.value if record.outcome else None,
        "verified": record.verified,
        "error": record.synthesis_error,
    }


def write_records(records: Iterable[SynthRecord], path: str | os.PathLike) -> None:
    write_jsonl_atomic((record_to_json(r) for r in records), path)


def gold_hints_from_records(path: str | os.PathLike) -> dict[str, list[str]]:
    """Map problem id -> hints for every verified record in a records file."""
    hints: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if obj["verified"]:
                    hints[str(obj["problem_id"])] = [str(h) for h in obj["hints"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
    return hints


def write_stats(stats: BuildStats, path: str | os.PathLike) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(stats.to_dict(), indent=2) + "\n", encoding="utf-8")
