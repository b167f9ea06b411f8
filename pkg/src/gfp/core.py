"""Domain types plus the text-formatting and numeric-comparison rules shared
by every stage of the pipeline.

Everything in this module is a pure function over immutable values; it is safe
to call from any number of concurrent workers.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

# Separator grammar of the two-stage text format. Both tokens are exact byte
# sequences; hints must never contain them (see sanitize_hint).
HINT_SEPARATOR = " & "
SECTION_SEPARATOR = " ## "

GOLD_MARKER = "#### "

_WHITESPACE_RUN = re.compile(r"\s+")


class GfpError(Exception):
    """Base class for every operational error raised by this package."""


class EmptyHint(GfpError):
    """A hint became empty after sanitization."""


class NoMarkerAndNotNumeric(GfpError):
    """Gold-answer field has no '#### ' marker and is not a bare number."""


class UnparsableNumber(GfpError):
    """Gold-answer field has a marker but the payload is not a number."""


class InvalidProblem(GfpError):
    """A problem record violates a corpus invariant."""


class UnknownProblemId(GfpError):
    """A record references a problem id that is not in the loaded corpus."""


@dataclass(frozen=True)
class NumericTolerance:
    """Absolute/relative tolerance used for every predicted-vs-gold check."""

    absolute: float = 1e-6
    relative: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("absolute", "relative"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"tolerance.{name} must be finite and >= 0, got {v!r}")


DEFAULT_TOLERANCE = NumericTolerance()


@dataclass(frozen=True)
class Problem:
    """One benchmark item.

    ``reference_solution`` is present for training-split items (the teacher
    prompt needs it) and absent at inference time.
    """

    id: str
    question: str
    gold_answer: float
    reference_solution: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidProblem("problem id must be non-empty")
        if not self.question.strip():
            raise InvalidProblem(f"problem {self.id!r}: question is empty")
        if not math.isfinite(self.gold_answer):
            raise InvalidProblem(f"problem {self.id!r}: gold answer is not finite")


class Stage(str, Enum):
    """Which fine-tuning stage a training pair belongs to."""

    HINT_GEN = "hint"
    CODE_GEN = "code"


@dataclass(frozen=True)
class TrainPair:
    """One supervised example: model input text and target text."""

    stage: Stage
    input: str
    target: str

    def __post_init__(self) -> None:
        if not self.input or not self.target:
            raise ValueError("train pair input and target must be non-empty")


def sanitize_hint(raw: str) -> str:
    """Make a hint safe for the separator grammar.

    Whitespace runs are collapsed to single spaces, every occurrence of the
    hint separator " & " or the section separator " ## " is replaced by ", ",
    and the result is trimmed. Replacement repeats until neither token
    remains, so adjacent separators cannot recombine into a new one.
    """
    text = _WHITESPACE_RUN.sub(" ", raw)
    while HINT_SEPARATOR in text or SECTION_SEPARATOR in text:
        text = text.replace(SECTION_SEPARATOR, ", ").replace(HINT_SEPARATOR, ", ")
    text = text.strip()
    if not text:
        raise EmptyHint(f"hint {raw!r} is empty after sanitization")
    return text


def join_hints(hints: Sequence[str]) -> str:
    """Concatenate hints with the exact 3-character " & " separator."""
    return HINT_SEPARATOR.join(hints)


def split_hints(joined: str) -> list[str]:
    """Inverse of join_hints: split on " & ", trim pieces, drop empty ones."""
    return [piece for piece in (p.strip() for p in joined.split(HINT_SEPARATOR)) if piece]


def build_code_input(question: str, hints: Sequence[str]) -> str:
    """Assemble the code-stage input: question, " ## ", then joined hints.

    An empty hint list passes the question through unchanged so the input
    never carries a dangling separator.
    """
    if not hints:
        return question
    return question + SECTION_SEPARATOR + join_hints(hints)


def _parse_plain_number(text: str) -> float:
    """Parse an integer or float literal; raises ValueError otherwise."""
    try:
        value = float(int(text, 10))
    except ValueError:
        value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not a finite number")
    return value


def parse_gold_answer(answer_field: str) -> float:
    """Extract the gold number from a solution string.

    Accepts the common answer-field format whose final line is
    ``#### <number>`` (thousands-separator commas are dropped) as well as a
    bare numeric string.
    """
    if GOLD_MARKER in answer_field:
        tail = answer_field.rsplit(GOLD_MARKER, 1)[1]
        first_line = tail.splitlines()[0] if tail else ""
        candidate = first_line.strip().replace(",", "")
        try:
            return _parse_plain_number(candidate)
        except (ValueError, OverflowError) as exc:
            raise UnparsableNumber(
                f"text after {GOLD_MARKER!r} marker is not a number: {first_line!r}"
            ) from exc
    candidate = answer_field.strip().replace(",", "")
    try:
        return _parse_plain_number(candidate)
    except (ValueError, OverflowError) as exc:
        raise NoMarkerAndNotNumeric(
            f"no {GOLD_MARKER!r} marker and not a bare number: {answer_field!r}"
        ) from exc


def numbers_match(predicted: float, gold: float, tol: NumericTolerance = DEFAULT_TOLERANCE) -> bool:
    """True iff |predicted - gold| <= max(tol.absolute, tol.relative * |gold|)."""
    if not (math.isfinite(predicted) and math.isfinite(gold)):
        return False
    return abs(predicted - gold) <= max(tol.absolute, tol.relative * abs(gold))


# --- canonical problem corpus IO -------------------------------------------
#
# One JSON object per line, UTF-8, no trailing commas:
#   {"id": str, "question": str, "solution": str|null, "gold": number}


def problem_to_json(problem: Problem) -> dict:
    return {
        "id": problem.id,
        "question": problem.question,
        "solution": problem.reference_solution,
        "gold": problem.gold_answer,
    }


def problem_from_json(obj: dict) -> Problem:
    try:
        return Problem(
            id=str(obj["id"]),
            question=str(obj["question"]),
            gold_answer=float(obj["gold"]),
            reference_solution=obj.get("solution"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidProblem(f"bad problem record {obj!r}: {exc}") from exc


def load_problems(path: str | os.PathLike) -> list[Problem]:
    """Load a JSONL corpus, enforcing id uniqueness."""
    problems: list[Problem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidProblem(f"{path}: line {lineno}: not valid JSON") from exc
            problem = problem_from_json(obj)
            if problem.id in seen:
                raise InvalidProblem(f"{path}: line {lineno}: duplicate id {problem.id!r}")
            seen.add(problem.id)
            problems.append(problem)
    return problems


def write_problems(problems: Iterable[Problem], path: str | os.PathLike) -> None:
    write_jsonl_atomic((problem_to_json(p) for p in problems), path)


def index_problems(problems: Iterable[Problem]) -> dict[str, Problem]:
    return {p.id: p for p in problems}


def problem_from_gsm8k(problem_id: str, question: str, answer_field: str) -> Problem:
    """Build a Problem from a raw GSM8K-style record (question + answer text)."""
    return Problem(
        id=problem_id,
        question=question,
        gold_answer=parse_gold_answer(answer_field),
        reference_solution=answer_field,
    )


def write_jsonl_atomic(objects: Iterable[dict], path: str | os.PathLike) -> None:
    """Write one JSON object per line via a temp file and atomic rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=target.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for obj in objects:
                fh.write(json.dumps(obj, ensure_ascii=False))
                fh.write("\n")
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
