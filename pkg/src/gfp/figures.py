"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited output: an accuracy/error-taxonomy
panel for score reports and a line plot for gold-hint ablation curves.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluator import Report

_STYLE = {
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

ACCURACY_COLOR = "#2a6fbb"
TAXONOMY_COLORS = {
    "correct": "#4c9f70",
    "understanding error": "#e0a040",
    "compilation error": "#c0504d",
}


def save_report_figure(reports: Sequence[Report], path: str | os.PathLike) -> None:
    """Accuracy bars plus a stacked error-taxonomy panel, one bar per dataset."""
    with plt.rc_context(_STYLE):
        fig, (ax_acc, ax_tax) = plt.subplots(1, 2, figsize=(9, 3.6))
        names = [r.dataset_name for r in reports]
        xs = range(len(reports))

        ax_acc.bar(xs, [r.accuracy_percent for r in reports], color=ACCURACY_COLOR, width=0.6)
        ax_acc.set_xticks(list(xs), names, rotation=15)
        ax_acc.set_ylabel("accuracy (%)")
        ax_acc.set_ylim(0, 100)
        for x, r in zip(xs, reports):
            ax_acc.text(x, r.accuracy_percent + 1.5, f"{r.accuracy_percent:.2f}",
                        ha="center", fontsize=8)

        bottoms = [0] * len(reports)
        layers = [
            ("correct", [r.n_correct for r in reports]),
            ("understanding error", [r.n_understanding_errors for r in reports]),
            ("compilation error", [r.n_compilation_errors for r in reports]),
        ]
        for label, values in layers:
            ax_tax.bar(xs, values, bottom=bottoms, width=0.6,
                       label=label, color=TAXONOMY_COLORS[label])
            bottoms = [b + v for b, v in zip(bottoms, values)]
        ax_tax.set_xticks(list(xs), names, rotation=15)
        ax_tax.set_ylabel("items")
        ax_tax.legend(fontsize=8)

        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_ablation_figure(points: Sequence[tuple[float, float]], path: str | os.PathLike) -> None:
    """Accuracy as a function of the gold-hint fraction."""
    points = sorted(points)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", color=ACCURACY_COLOR)
        ax.set_xlabel("gold hint fraction")
        ax.set_ylabel("accuracy (%)")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(0, 100)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
