"""Run candidate programs in an isolated interpreter process and classify the
outcome.

A program is expected to leave its final numeric answer in a variable named
``result``. The runner appends a fixed epilogue that prints the value behind a
sentinel token on stdout, so extraction works over a plain process boundary
and survives programs that print ordinary output themselves. If a program
prints the sentinel on its own, the last sentinel line wins.
"""

from __future__ import annotations

import math
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .core import GfpError, NumericTolerance, DEFAULT_TOLERANCE, numbers_match

SENTINEL = "GFP_RESULT_7f3a:"

# Appended after the candidate source. Prints the sentinel plus a repr-style
# full-precision rendering of `result`; deliberately silent when `result` is
# undefined (classified as MissingResult) and when the epilogue itself fails,
# so it can never turn a clean run into a runtime error.
_EPILOGUE = f"""
try:
    _gfp_result = result
except NameError:
    pass
else:
    try:
        import sys as _gfp_sys
        try:
            import numbers as _gfp_numbers
            if isinstance(_gfp_result, _gfp_numbers.Number) and not isinstance(_gfp_result, (bool, int)):
                _gfp_result = float(_gfp_result)
        except Exception:
            pass
        _gfp_sys.stdout.write("\\n{SENTINEL}" + repr(_gfp_result) + "\\n")
    except BaseException:
        pass
"""

_SYNTAX_ERROR_NAMES = ("SyntaxError", "IndentationError", "TabError")
_TRACEBACK_HEADER = "Traceback (most recent call last)"


class SandboxSpawnFailure(GfpError):
    """The interpreter process could not be started at all."""


@dataclass(frozen=True)
class SandboxConfig:
    """Limits and interpreter invocation for one program run.

    Network denial is best effort: the child gets a stripped environment
    (no credentials, no proxy settings); stronger isolation needs an OS-level
    sandbox around the whole process (see README).
    """

    interpreter_command: tuple[str, ...] = (sys.executable,)
    timeout: float = 10.0
    max_output_bytes: int = 64 * 1024
    max_concurrent: int = os.cpu_count() or 1

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("sandbox timeout must be > 0")
        if self.max_concurrent < 1:
            raise ValueError("sandbox max_concurrent must be >= 1")
        if not self.interpreter_command:
            raise ValueError("interpreter_command must be non-empty")


DEFAULT_SANDBOX = SandboxConfig()


class ExecStatus(str, Enum):
    VALUE = "value"
    COMPILE_ERROR = "compile_error"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    MISSING_RESULT = "missing_result"
    NON_NUMERIC_RESULT = "non_numeric_result"


@dataclass(frozen=True)
class ExecOutcome:
    """Classified result of one program run."""

    status: ExecStatus
    value: float | None = None
    stderr_excerpt: str = ""
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.status is ExecStatus.VALUE:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("Value outcome must carry a finite number")
        elif self.value is not None:
            raise ValueError(f"{self.status.value} outcome must not carry a value")


class Category(str, Enum):
    """Error taxonomy for scored runs."""

    CORRECT = "correct"
    UNDERSTANDING_ERROR = "understanding_error"
    COMPILATION_ERROR = "compilation_error"


def _child_env(run_dir: Path) -> dict[str, str]:
    # Whitelist, not scrub: nothing from the parent environment leaks except
    # PATH (needed to resolve bare interpreter names).
    return {
        "PATH": os.environ.get("PATH", "/usr/local/bin:/usr/bin:/bin"),
        "HOME": str(run_dir),
        "TMPDIR": str(run_dir),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "PYTHONIOENCODING": "utf-8",
        "PYTHONHASHSEED": "0",
        "PYTHONDONTWRITEBYTECODE": "1",
    }


def _tail_bytes(path: Path, limit: int) -> str:
    """Read at most `limit` bytes from the end of a capture file."""
    size = path.stat().st_size
    with open(path, "rb") as fh:
        if size > limit:
            fh.seek(size - limit)
        data = fh.read(limit)
    return data.decode("utf-8", errors="replace")


def _capture(path: Path, limit: int, run_dir: Path) -> str:
    # The interpreter absolutizes script paths, so tracebacks would embed the
    # per-run temp dir; strip it to keep diagnostics byte-stable across runs.
    return _tail_bytes(path, limit).replace(f"{run_dir}{os.sep}", "")


def _kill_process_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
    proc.wait()


def _looks_like_syntax_failure(stderr: str) -> bool:
    # Whole-file parse failures print the SyntaxError diagnostic without a
    # traceback header; a SyntaxError raised at runtime (e.g. from exec())
    # carries one and counts as a runtime error.
    if _TRACEBACK_HEADER in stderr:
        return False
    return any(name in stderr for name in _SYNTAX_ERROR_NAMES)


def _parse_sentinel_payload(payload: str) -> float | None:
    """Parse the epilogue's repr-style rendering; None if non-numeric."""
    text = payload.strip()
    if not text:
        return None
    try:
        value = float(int(text, 10))
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            return None
    except OverflowError:
        return None
    if not math.isfinite(value):
        return None
    return value


def run_program(code: str, cfg: SandboxConfig = DEFAULT_SANDBOX) -> ExecOutcome:
    """Execute program text in a fresh temp dir and classify the outcome.

    Classification:
      - syntax-stage failure (compile-only pre-pass)  -> CompileError
      - nonzero exit / uncaught exception             -> RuntimeError
      - wall clock over cfg.timeout (process killed)  -> Timeout
      - clean exit without a sentinel line            -> MissingResult
      - sentinel payload not a finite number          -> NonNumericResult
      - otherwise                                     -> Value(n)

    Raises SandboxSpawnFailure when the interpreter itself cannot be spawned;
    that is a configuration problem, distinct from program-level outcomes.
    """
    run_dir = Path(tempfile.mkdtemp(prefix="gfp-run-"))
    try:
        source_path = run_dir / "source.py"
        script_path = run_dir / "prog.py"
        source_path.write_text(code, encoding="utf-8")
        script_path.write_text(code + "\n" + _EPILOGUE, encoding="utf-8")
        env = _child_env(run_dir)

        compile_outcome = _compile_pre_pass(cfg, run_dir, env)
        if compile_outcome is not None:
            return compile_outcome
        return _run_script(cfg, run_dir, env)
    finally:
        shutil.rmtree(run_dir, ignore_errors=True)


def _spawn(cmd: Sequence[str], run_dir: Path, env: dict[str, str],
           stdout_path: Path, stderr_path: Path) -> subprocess.Popen:
    try:
        with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
            return subprocess.Popen(
                list(cmd),
                cwd=run_dir,
                env=env,
                stdin=subprocess.DEVNULL,
                stdout=out,
                stderr=err,
                start_new_session=True,
            )
    except OSError as exc:
        raise SandboxSpawnFailure(f"cannot spawn {cmd[0]!r}: {exc}") from exc


def _compile_pre_pass(cfg: SandboxConfig, run_dir: Path, env: dict[str, str]) -> ExecOutcome | None:
    """Syntax check of the candidate source alone (no epilogue).

    Returns a CompileError/Timeout outcome, or None when the source compiles
    (or when the interpreter has no compile-only mode, in which case the main
    run's stderr diagnostics decide).
    """
    out_path = run_dir / "compile.out"
    err_path = run_dir / "compile.err"
    cmd = [*cfg.interpreter_command, "-m", "py_compile", "source.py"]
    started = time.monotonic()
    proc = _spawn(cmd, run_dir, env, out_path, err_path)
    try:
        returncode = proc.wait(timeout=cfg.timeout)
    except subprocess.TimeoutExpired:
        _kill_process_group(proc)
        elapsed = time.monotonic() - started
        return ExecOutcome(
            status=ExecStatus.TIMEOUT,
            stderr_excerpt=_capture(err_path, cfg.max_output_bytes, run_dir),
            wall_time=elapsed,
        )
    if returncode == 0:
        return None
    stderr = _capture(err_path, cfg.max_output_bytes, run_dir)
    if any(name in stderr for name in _SYNTAX_ERROR_NAMES):
        return ExecOutcome(
            status=ExecStatus.COMPILE_ERROR,
            stderr_excerpt=stderr,
            wall_time=time.monotonic() - started,
        )
    # py_compile unavailable or failed for an unrelated reason; fall through.
    return None


def _run_script(cfg: SandboxConfig, run_dir: Path, env: dict[str, str]) -> ExecOutcome:
    out_path = run_dir / "run.out"
    err_path = run_dir / "run.err"
    cmd = [*cfg.interpreter_command, "prog.py"]
    started = time.monotonic()
    proc = _spawn(cmd, run_dir, env, out_path, err_path)
    try:
        returncode = proc.wait(timeout=cfg.timeout)
    except subprocess.TimeoutExpired:
        _kill_process_group(proc)
        return ExecOutcome(
            status=ExecStatus.TIMEOUT,
            stderr_excerpt=_capture(err_path, cfg.max_output_bytes, run_dir),
            wall_time=time.monotonic() - started,
        )
    wall_time = time.monotonic() - started
    stdout = _tail_bytes(out_path, cfg.max_output_bytes)
    stderr = _capture(err_path, cfg.max_output_bytes, run_dir)

    if returncode != 0:
        status = ExecStatus.COMPILE_ERROR if _looks_like_syntax_failure(stderr) else ExecStatus.RUNTIME_ERROR
        return ExecOutcome(status=status, stderr_excerpt=stderr, wall_time=wall_time)

    payload = None
    for line in stdout.splitlines():
        if line.startswith(SENTINEL):
            payload = line[len(SENTINEL):]
    if payload is None:
        return ExecOutcome(status=ExecStatus.MISSING_RESULT, stderr_excerpt=stderr, wall_time=wall_time)
    value = _parse_sentinel_payload(payload)
    if value is None:
        return ExecOutcome(status=ExecStatus.NON_NUMERIC_RESULT, stderr_excerpt=stderr, wall_time=wall_time)
    return ExecOutcome(status=ExecStatus.VALUE, value=value, stderr_excerpt=stderr, wall_time=wall_time)


def run_batch(codes: Sequence[str], cfg: SandboxConfig = DEFAULT_SANDBOX) -> list[ExecOutcome]:
    """Run programs with at most cfg.max_concurrent child processes.

    Output order matches input order; one program's failure never affects
    another's outcome. SandboxSpawnFailure aborts the whole batch.
    """
    if not codes:
        return []
    workers = min(cfg.max_concurrent, len(codes))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_program(c, cfg), codes))


def error_category(outcome: ExecOutcome, gold: float,
                   tol: NumericTolerance = DEFAULT_TOLERANCE) -> Category:
    """Classify a run against the gold answer.

    A program that ran to completion but produced a wrong, missing, or
    non-numeric result encoded the problem incorrectly (understanding error);
    one that failed to parse, raised, or timed out is a compilation error.
    """
    if outcome.status is ExecStatus.VALUE:
        if numbers_match(outcome.value, gold, tol):
            return Category.CORRECT
        return Category.UNDERSTANDING_ERROR
    if outcome.status in (ExecStatus.MISSING_RESULT, ExecStatus.NON_NUMERIC_RESULT):
        return Category.UNDERSTANDING_ERROR
    return Category.COMPILATION_ERROR


def format_number(value: float) -> str:
    """Render integral floats without the trailing .0 (5.0 -> "5")."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_outcome(outcome: ExecOutcome) -> str:
    """Human-readable one-liner, e.g. "Value(5)" or "Timeout"."""
    names = {
        ExecStatus.COMPILE_ERROR: "CompileError",
        ExecStatus.RUNTIME_ERROR: "RuntimeError",
        ExecStatus.TIMEOUT: "Timeout",
        ExecStatus.MISSING_RESULT: "MissingResult",
        ExecStatus.NON_NUMERIC_RESULT: "NonNumericResult",
    }
    if outcome.status is ExecStatus.VALUE:
        return f"Value({format_number(outcome.value)})"
    return names[outcome.status]
