"""Two-stage hint-then-code toolchain for math word problems.

Modules:
    core       shared types, text formatting, numeric comparison
    teacher    data-synthesis client (prompt rendering, retries, checkpoints)
    executor   sandboxed program execution and outcome classification
    dataset    execution verification and training-corpus building
    inference  two-stage inference loop and gold-hint mode
    evaluator  scoring, report tables, ablation curves
    figures    matplotlib rendering for the report path
    cli        `gfp` command-line entry point
"""

__version__ = "0.1.0"
