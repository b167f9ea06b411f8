"""Single entry point exposing the pipeline as subcommands.

Subcommands: synthesize, build, infer, ablate, eval, exec. Every option can
come from a JSON config file (--config) with command-line flags taking
precedence; secrets come from the environment only. Exit codes: 0 success,
1 operational error, 2 usage error.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import click

from . import dataset, evaluator, figures, inference, teacher
from .core import (
    DEFAULT_TOLERANCE,
    GfpError,
    NumericTolerance,
    load_problems,
)
from .executor import DEFAULT_SANDBOX, SandboxConfig, format_outcome, run_program
from .inference import (
    GoldFraction,
    StageEndpoint,
    TwoStage,
    code_stage_endpoint,
    hint_stage_endpoint,
)
from .teacher import TeacherConfig

log = logging.getLogger(__name__)

DEFAULT_ABLATION_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)


class ConfigError(GfpError):
    """The config file is malformed or references a missing path."""


@dataclass(frozen=True)
class PipelineConfig:
    """Declarative configuration for the whole pipeline."""

    corpus: str | None = None
    test_corpus: str | None = None
    checkpoint: str | None = None
    out_dir: str = "out"
    teacher: TeacherConfig | None = None
    sandbox: SandboxConfig = DEFAULT_SANDBOX
    hint_endpoint: StageEndpoint | None = None
    code_endpoint: StageEndpoint | None = None
    tolerance: NumericTolerance = DEFAULT_TOLERANCE
    ablation_fractions: tuple[float, ...] = DEFAULT_ABLATION_FRACTIONS

    @staticmethod
    def from_dict(obj: dict) -> "PipelineConfig":
        def section(name: str, cls, post=None):
            raw = obj.get(name)
            if raw is None:
                return None
            if not isinstance(raw, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            if post:
                raw = post(dict(raw))
            try:
                return cls(**raw)
            except TypeError as exc:
                raise ConfigError(f"config section {name!r}: {exc}") from exc

        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def tupled(raw: dict) -> dict:
            if "interpreter_command" in raw:
                raw["interpreter_command"] = tuple(raw["interpreter_command"])
            return raw

        try:
            return PipelineConfig(
                corpus=obj.get("corpus"),
                test_corpus=obj.get("test_corpus"),
                checkpoint=obj.get("checkpoint"),
                out_dir=obj.get("out_dir", "out"),
                teacher=section("teacher", TeacherConfig),
                sandbox=section("sandbox", SandboxConfig, post=tupled) or DEFAULT_SANDBOX,
                hint_endpoint=section("hint_endpoint", StageEndpoint),
                code_endpoint=section("code_endpoint", code_stage_endpoint_from_dict),
                tolerance=section("tolerance", NumericTolerance) or DEFAULT_TOLERANCE,
                ablation_fractions=tuple(obj.get("ablation_fractions", DEFAULT_ABLATION_FRACTIONS)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        def section(value):
            return None if value is None else dataclasses.asdict(value)

        out = {
            "corpus": self.corpus,
            "test_corpus": self.test_corpus,
            "checkpoint": self.checkpoint,
            "out_dir": self.out_dir,
            "teacher": section(self.teacher),
            "sandbox": section(self.sandbox),
            "hint_endpoint": section(self.hint_endpoint),
            "code_endpoint": section(self.code_endpoint),
            "tolerance": section(self.tolerance),
            "ablation_fractions": list(self.ablation_fractions),
        }
        if out["sandbox"] is not None:
            out["sandbox"]["interpreter_command"] = list(out["sandbox"]["interpreter_command"])
        return out

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(obj, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        return PipelineConfig.from_dict(obj)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def code_stage_endpoint_from_dict(**raw) -> StageEndpoint:
    return code_stage_endpoint(**raw)


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} given (flag or config)")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _pick(flag_value, config_value, default=None):
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _endpoint(url_flag: str | None, configured: StageEndpoint | None,
              factory, what: str) -> StageEndpoint:
    if url_flag and configured:
        return dataclasses.replace(configured, url=url_flag)
    if url_flag:
        return factory(url_flag)
    if configured:
        return configured
    raise ConfigError(f"no {what} endpoint URL given (flag or config)")


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; flags override its values.")
@click.option("--quiet", is_flag=True, help="Only log errors.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, quiet: bool) -> None:
    """Two-stage hint-then-code pipeline for math word problems."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.ERROR if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    ctx.obj = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()


@cli.command()
@click.option("--corpus", type=click.Path(), default=None, help="Training corpus JSONL.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Synthesis checkpoint JSONL (appended, resumable).")
@click.option("--endpoint-url", default=None, help="Chat-completions endpoint URL.")
@click.option("--model", default=None, help="Teacher model name.")
@click.option("--parallelism", type=int, default=None)
@click.option("--template", "template_path", type=click.Path(), default=None,
              help="Prompt template file with <question>/<solution> tags.")
@click.pass_obj
def synthesize(cfg: PipelineConfig, corpus, out_path, endpoint_url, model,
               parallelism, template_path) -> None:
    """Generate hint+code drafts for a training corpus via the teacher."""
    corpus_path = _require_file(_pick(corpus, cfg.corpus), "corpus")
    checkpoint = Path(_pick(out_path, cfg.checkpoint, str(Path(cfg.out_dir) / "synthesis.jsonl")))
    tconf = cfg.teacher
    if tconf is None:
        if not endpoint_url or not model:
            raise ConfigError("teacher endpoint URL and model name are required "
                              "(--endpoint-url/--model or config)")
        tconf = TeacherConfig(endpoint_url=endpoint_url, model_name=model)
    else:
        if endpoint_url:
            tconf = dataclasses.replace(tconf, endpoint_url=endpoint_url)
        if model:
            tconf = dataclasses.replace(tconf, model_name=model)
    if parallelism is not None:
        tconf = dataclasses.replace(tconf, parallelism=parallelism)
    template = Path(template_path).read_text(encoding="utf-8") if template_path else None

    problems = load_problems(corpus_path)
    log.info("loaded %d problems from %s", len(problems), corpus_path)
    drafts = teacher.synthesize_corpus(problems, tconf, checkpoint, template=template)
    failed = sum(1 for d in drafts if not d.ok)
    log.info("synthesis finished: %d drafts (%d failed), checkpoint %s",
             len(drafts), failed, checkpoint)


@cli.command()
@click.option("--in", "in_path", type=click.Path(), default=None,
              help="Synthesis checkpoint JSONL.")
@click.option("--corpus", type=click.Path(), default=None, help="Training corpus JSONL.")
@click.option("--out-dir", type=click.Path(), default=None)
@click.pass_obj
def build(cfg: PipelineConfig, in_path, corpus, out_dir) -> None:
    """Verify drafts by execution and emit the two-stage training corpora."""
    checkpoint = _require_file(_pick(in_path, cfg.checkpoint), "synthesis checkpoint")
    corpus_path = _require_file(_pick(corpus, cfg.corpus), "corpus")
    out = Path(_pick(out_dir, cfg.out_dir))
    out.mkdir(parents=True, exist_ok=True)

    problems = load_problems(corpus_path)
    cached = teacher.load_checkpoint(checkpoint)
    drafts = [cached[p.id] for p in problems if p.id in cached]
    log.info("verifying %d drafts against %d problems", len(drafts), len(problems))

    records = dataset.verify_corpus(drafts, problems, cfg.sandbox, cfg.tolerance)
    hint_pairs, code_pairs, stats = dataset.build_training_sets(records, problems)

    dataset.write_pairs(hint_pairs, out / "hint_pairs.jsonl")
    dataset.write_pairs(code_pairs, out / "code_pairs.jsonl")
    dataset.write_records(records, out / "verified_records.jsonl")
    dataset.write_stats(stats, out / "stats.json")
    log.info("wrote %s (%d pairs each) and %s", out / "hint_pairs.jsonl",
             stats.kept, out / "stats.json")


@cli.command()
@click.option("--corpus", type=click.Path(), default=None, help="Test corpus JSONL.")
@click.option("--hint-url", default=None, help="Hint-stage /generate endpoint.")
@click.option("--code-url", default=None, help="Code-stage /generate endpoint.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Predictions JSONL (manifest written alongside).")
@click.pass_obj
def infer(cfg: PipelineConfig, corpus, hint_url, code_url, out_path) -> None:
    """Run the two-stage loop over a test corpus."""
    corpus_path = _require_file(_pick(corpus, cfg.test_corpus, cfg.corpus), "test corpus")
    hint_ep = _endpoint(hint_url, cfg.hint_endpoint, hint_stage_endpoint, "hint")
    code_ep = _endpoint(code_url, cfg.code_endpoint, code_stage_endpoint, "code")
    out = Path(_pick(out_path, None, str(Path(cfg.out_dir) / "predictions.jsonl")))
    out.parent.mkdir(parents=True, exist_ok=True)

    problems = load_problems(corpus_path)
    log.info("loaded %d problems from %s", len(problems), corpus_path)
    records = inference.run_suite(problems, TwoStage(), hint_ep=hint_ep, code_ep=code_ep,
                                  sandbox=cfg.sandbox, tol=cfg.tolerance, out_path=out)
    n_correct = sum(1 for r in records if r.correct)
    log.info("wrote %s: %d/%d correct", out, n_correct, len(records))


@cli.command()
@click.option("--corpus", type=click.Path(), default=None, help="Test corpus JSONL.")
@click.option("--hints", "hints_path", type=click.Path(), default=None,
              help="verified_records.jsonl with gold hints.")
@click.option("--code-url", default=None, help="Code-stage /generate endpoint.")
@click.option("--fractions", default=None,
              help="Comma-separated hint fractions, e.g. 0,0.25,0.5,0.75,1.0")
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--no-figure", is_flag=True, help="Skip the PNG figure.")
@click.pass_obj
def ablate(cfg: PipelineConfig, corpus, hints_path, code_url, fractions,
           out_dir, no_figure) -> None:
    """Sweep gold-hint fractions and emit the accuracy curve."""
    corpus_path = _require_file(_pick(corpus, cfg.test_corpus, cfg.corpus), "test corpus")
    records_path = _require_file(hints_path, "gold hints records file")
    code_ep = _endpoint(code_url, cfg.code_endpoint, code_stage_endpoint, "code")
    out = Path(_pick(out_dir, cfg.out_dir))
    out.mkdir(parents=True, exist_ok=True)
    if fractions is not None:
        grid = tuple(float(f) for f in fractions.split(","))
    else:
        grid = cfg.ablation_fractions

    problems = load_problems(corpus_path)
    gold = dataset.gold_hints_from_records(records_path)
    log.info("ablating over fractions %s on %d problems (%d with gold hints)",
             list(grid), len(problems), len(gold))

    by_fraction: dict[float, evaluator.Report] = {}
    for fraction in grid:
        preds_path = out / f"predictions_gold_{fraction:g}.jsonl"
        records = inference.run_suite(problems, GoldFraction(fraction), code_ep=code_ep,
                                      sandbox=cfg.sandbox, tol=cfg.tolerance,
                                      gold_hints=gold, out_path=preds_path)
        by_fraction[fraction] = evaluator.score(records, problems, cfg.tolerance,
                                                dataset_name=corpus_path.stem)
        log.info("fraction %g: accuracy %.2f", fraction, by_fraction[fraction].accuracy_percent)

    curve = evaluator.ablation_curve(by_fraction)
    (out / "ablation.csv").write_text(curve, encoding="utf-8")
    log.info("wrote %s", out / "ablation.csv")
    if not no_figure:
        figures.save_ablation_figure(evaluator.parse_ablation_csv(curve), out / "ablation.png")
        log.info("wrote %s", out / "ablation.png")


@cli.command("eval")
@click.option("--preds", multiple=True, type=click.Path(), help="Predictions JSONL (repeatable).")
@click.option("--corpus", "corpora", multiple=True, type=click.Path(),
              help="Corpus JSONL matching each --preds (repeatable).")
@click.option("--dataset-name", "names", multiple=True,
              help="Display name per --preds (defaults to the corpus file stem).")
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv", "both"]),
              default="both", show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--no-figure", is_flag=True, help="Skip the PNG figure.")
@click.pass_obj
def eval_cmd(cfg: PipelineConfig, preds, corpora, names, fmt, out_dir, no_figure) -> None:
    """Score prediction files and render the report."""
    if not preds:
        raise click.UsageError("at least one --preds file is required")
    if not corpora:
        corpora = tuple(filter(None, [cfg.test_corpus or cfg.corpus])) * len(preds)
    if len(corpora) == 1 and len(preds) > 1:
        corpora = corpora * len(preds)
    if len(corpora) != len(preds):
        raise click.UsageError("--corpus must be given once or once per --preds")
    out = Path(_pick(out_dir, cfg.out_dir))
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    for i, (pred_path, corpus_path) in enumerate(zip(preds, corpora)):
        pred_file = _require_file(pred_path, "predictions file")
        corpus_file = _require_file(corpus_path, "corpus")
        problems = load_problems(corpus_file)
        records = inference.read_eval_records(pred_file)
        name = names[i] if i < len(names) else corpus_file.stem
        reports.append(evaluator.score(records, problems, cfg.tolerance, dataset_name=name))

    if fmt in ("markdown", "both"):
        (out / "report.md").write_text(evaluator.render_report(reports, "markdown"),
                                       encoding="utf-8")
        log.info("wrote %s", out / "report.md")
    if fmt in ("csv", "both"):
        (out / "report.csv").write_text(evaluator.render_report(reports, "csv"),
                                        encoding="utf-8")
        log.info("wrote %s", out / "report.csv")
    if not no_figure:
        figures.save_report_figure(reports, out / "report.png")
        log.info("wrote %s", out / "report.png")
    for r in reports:
        log.info("%s: %d items, accuracy %.2f (understanding %d, compilation %d)",
                 r.dataset_name, r.n_items, r.accuracy_percent,
                 r.n_understanding_errors, r.n_compilation_errors)


@cli.command("exec")
@click.option("--file", "file_path", type=click.Path(), required=True,
              help="Program file expected to assign `result`.")
@click.option("--timeout", type=float, default=None)
@click.pass_obj
def exec_cmd(cfg: PipelineConfig, file_path, timeout) -> None:
    """Run one program in the sandbox and print its classified outcome."""
    path = _require_file(file_path, "program file")
    sandbox = cfg.sandbox
    if timeout is not None:
        sandbox = dataclasses.replace(sandbox, timeout=timeout)
    outcome = run_program(path.read_text(encoding="utf-8"), sandbox)
    click.echo(format_outcome(outcome))
    if outcome.value is None and outcome.stderr_excerpt:
        click.echo(outcome.stderr_excerpt.rstrip(), err=True)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI; returns the process exit code instead of raising."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 130
    except (GfpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
