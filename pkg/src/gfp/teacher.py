"""Teacher-side data synthesis: prompt rendering, chat-endpoint client with
retries, JSON reply parsing, and checkpointed corpus-level fan-out.

The endpoint is any chat-completions-compatible HTTP service. The credential
comes from the TEACHER_API_KEY environment variable and is never logged.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import requests

from .core import EmptyHint, GfpError, Problem, sanitize_hint

log = logging.getLogger(__name__)

CREDENTIAL_ENV_VAR = "TEACHER_API_KEY"

_PLACEHOLDER = re.compile(r"<question>|<solution>")
_JSON_REMINDER = "\n\nYour previous reply was not valid JSON. Return ONLY the JSON object described above."


class MissingSolution(GfpError):
    """Prompt rendering needs a reference solution; this problem has none."""


class MissingCredential(GfpError):
    """TEACHER_API_KEY is not set."""


class ReplyParseError(GfpError):
    """Base for all teacher-reply schema violations."""


class MalformedJson(ReplyParseError):
    pass


class MissingKey(ReplyParseError):
    def __init__(self, key: str):
        super().__init__(f"reply object is missing key {key!r}")
        self.key = key


class WrongType(ReplyParseError):
    pass


class EmptyField(ReplyParseError):
    pass


class TransportError(GfpError):
    """Request kept failing after all retries were spent."""


class HttpStatusError(GfpError):
    def __init__(self, status_code: int, detail: str = ""):
        super().__init__(f"HTTP {status_code}: {detail}".rstrip(": "))
        self.status_code = status_code


@dataclass(frozen=True)
class TeacherConfig:
    endpoint_url: str
    model_name: str
    temperature: float = 0.0
    json_response: bool = True
    max_retries: int = 5
    initial_backoff: float = 1.0
    parallelism: int = 4
    request_timeout: float = 60.0
    # Parse failures are not retried by default: at temperature 0 a retry is
    # likely byte-identical. This flag allows one re-ask with a JSON reminder.
    retry_on_parse_error: bool = False

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class TeacherReply:
    hints: list[str]
    code: str


@dataclass(frozen=True)
class SynthDraft:
    """Per-problem synthesis result before execution verification."""

    problem_id: str
    hints: list[str] | None = None
    code: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@lru_cache(maxsize=1)
def default_template() -> str:
    return resources.files("gfp").joinpath("prompts/synthesis.txt").read_text(encoding="utf-8")


def render_prompt(problem: Problem, template: str | None = None) -> str:
    """Substitute <question> and <solution> tags in the prompt template.

    Substitution is tag-wise in a single pass, so tags are replaced
    independently and substituted text is never re-scanned.
    """
    if problem.reference_solution is None:
        raise MissingSolution(f"problem {problem.id!r} has no reference solution")
    text = template if template is not None else default_template()
    replacements = {"<question>": problem.question, "<solution>": problem.reference_solution}
    return _PLACEHOLDER.sub(lambda m: replacements[m.group()], text)


def parse_reply(raw: str) -> TeacherReply:
    """Parse the teacher's JSON reply: {"hints": [...], "code": "..."}.

    Hints are sanitized so they can never break the separator grammar.
    """
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise WrongType(f"reply must be a JSON object, got {type(obj).__name__}")
    for key in ("hints", "code"):
        if key not in obj:
            raise MissingKey(key)
    hints_raw = obj["hints"]
    code = obj["code"]
    if not isinstance(hints_raw, list) or not all(isinstance(h, str) for h in hints_raw):
        raise WrongType("'hints' must be an array of strings")
    if not isinstance(code, str):
        raise WrongType("'code' must be a string")
    if not hints_raw:
        raise EmptyField("'hints' array is empty")
    if not code.strip():
        raise EmptyField("'code' is empty")
    try:
        hints = [sanitize_hint(h) for h in hints_raw]
    except EmptyHint as exc:
        raise EmptyField(str(exc)) from exc
    return TeacherReply(hints=hints, code=code)


def _read_api_key(api_key: str | None) -> str:
    key = api_key if api_key is not None else os.environ.get(CREDENTIAL_ENV_VAR)
    if not key:
        raise MissingCredential(f"set {CREDENTIAL_ENV_VAR} in the environment")
    return key


def _chat_request(prompt: str, cfg: TeacherConfig, api_key: str) -> str:
    """One chat call with exponential backoff on transport faults, 429 and 5xx.

    Returns the assistant message content. 4xx statuses other than 429 are
    not retried.
    """
    body: dict = {"model": cfg.model_name, "temperature": cfg.temperature}
    if cfg.json_response:
        body["response_format"] = {"type": "json_object"}
    body["messages"] = [
        {"role": "system", "content": ""},
        {"role": "user", "content": prompt},
    ]
    headers = {"Authorization": f"Bearer {api_key}"}

    last_failure = "no attempt made"
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            time.sleep(cfg.initial_backoff * 2 ** (attempt - 1))
        try:
            resp = requests.post(cfg.endpoint_url, json=body, headers=headers,
                                 timeout=cfg.request_timeout)
        except requests.RequestException as exc:
            last_failure = f"{type(exc).__name__}: {exc}"
            log.warning("teacher request failed (attempt %d): %s", attempt + 1, last_failure)
            continue
        if resp.status_code == 200:
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedJson(f"response envelope missing assistant content: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            last_failure = f"HTTP {resp.status_code}"
            log.warning("teacher request rejected (attempt %d): %s", attempt + 1, last_failure)
            continue
        raise HttpStatusError(resp.status_code, resp.text[:200])
    raise TransportError(f"gave up after {cfg.max_retries + 1} attempts: {last_failure}")


def request_synthesis(problem: Problem, cfg: TeacherConfig,
                      template: str | None = None, api_key: str | None = None) -> TeacherReply:
    """Render the prompt, call the teacher once (with retries), parse the reply."""
    key = _read_api_key(api_key)
    prompt = render_prompt(problem, template)
    content = _chat_request(prompt, cfg, key)
    try:
        return parse_reply(content)
    except ReplyParseError:
        if not cfg.retry_on_parse_error:
            raise
        log.warning("unparsable reply for %s, re-asking once with a JSON reminder", problem.id)
        content = _chat_request(prompt + _JSON_REMINDER, cfg, key)
        return parse_reply(content)


def draft_to_json(draft: SynthDraft) -> dict:
    return {"id": draft.problem_id, "hints": draft.hints, "code": draft.code, "error": draft.error}


def draft_from_json(obj: dict) -> SynthDraft:
    return SynthDraft(
        problem_id=str(obj["id"]),
        hints=list(obj["hints"]) if obj.get("hints") is not None else None,
        code=obj.get("code"),
        error=obj.get("error"),
    )


def load_checkpoint(path: str | os.PathLike) -> dict[str, SynthDraft]:
    """Read an append-only draft checkpoint; later lines win on duplicate ids."""
    drafts: dict[str, SynthDraft] = {}
    path = Path(path)
    if not path.exists():
        return drafts
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            draft = draft_from_json(json.loads(line))
            drafts[draft.problem_id] = draft
    return drafts


def synthesize_corpus(problems: Sequence[Problem], cfg: TeacherConfig,
                      checkpoint_path: str | os.PathLike,
                      template: str | None = None,
                      api_key: str | None = None) -> list[SynthDraft]:
    """Synthesize hints+code for every problem, at most cfg.parallelism in flight.

    Per-problem failures become failed drafts instead of aborting the run.
    Drafts are appended to the checkpoint in input order as soon as every
    earlier problem has resolved, so an interrupted run can be resumed: ids
    already present in the checkpoint are not requested again.
    """
    key = _read_api_key(api_key)
    cached = load_checkpoint(checkpoint_path)
    todo = [p for p in problems if p.id not in cached]
    log.info("synthesizing %d problems (%d cached)", len(todo), len(cached))

    def one(problem: Problem) -> SynthDraft:
        try:
            reply = request_synthesis(problem, cfg, template=template, api_key=key)
            return SynthDraft(problem_id=problem.id, hints=reply.hints, code=reply.code)
        except Exception as exc:
            log.warning("synthesis failed for %s: %s", problem.id, exc)
            return SynthDraft(problem_id=problem.id, error=f"{type(exc).__name__}: {exc}")

    futures: dict[str, Future] = {}
    results: list[SynthDraft] = []
    checkpoint_path = Path(checkpoint_path)
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        for problem in todo:
            futures[problem.id] = pool.submit(one, problem)
        with open(checkpoint_path, "a", encoding="utf-8") as sink:
            for problem in problems:
                if problem.id in cached:
                    results.append(cached[problem.id])
                    continue
                draft = futures[problem.id].result()
                sink.write(json.dumps(draft_to_json(draft), ensure_ascii=False) + "\n")
                sink.flush()
                results.append(draft)
    return results
