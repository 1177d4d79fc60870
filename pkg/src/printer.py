"""
Output formatting module for displaying experiment reports.
Handles all console printing of coverage and width reports.
"""
from __future__ import annotations
import logging
from typing import Sequence
from models import CoverageReport, ExperimentConfig, WidthReport
from utils import format_level, format_method

logger = logging.getLogger('SurvBand')

RULE = "─" * 60


class ReportPrinter:
    """Handles formatting and printing of experiment reports."""

    @classmethod
    def print_header(cls, cfg: ExperimentConfig, title: str = "Coverage Experiment") -> None:
        """Print a header line describing the experiment.

        Args:
            cfg: The experiment configuration.
            title: Heading text.
        """
        print(f"\n=== {title}: {cfg.setting_label} (n={cfg.n}, M={cfg.M}, B={cfg.B}, "
              f"R={cfg.R}, seed={cfg.master_seed}) ===")

    @classmethod
    def print_report(cls, report: CoverageReport) -> None:
        """Print coverage and mean width per method and level."""
        print(RULE)
        print(f"{'Method':<10}{'Level':>8}{'Coverage':>12}{'Mean width':>14}")
        print(RULE)
        for row in report.rows:
            print(f"{format_method(row.method):<10}{format_level(row.level):>8}"
                  f"{row.coverage:>12.3f}{row.mean_width:>14.4f}")
        print(RULE)
        print(f"Repetitions: {report.n_repetitions - report.n_failed} of {report.n_repetitions} succeeded")
        if report.failures:
            cls.print_failures(report.failures)

    @staticmethod
    def print_failures(failures: Sequence) -> None:
        """List failed repetitions with their messages."""
        print("Failed repetitions:")
        for rep_id, message in failures:
            print(f"  rep {rep_id}: {message}")

    @classmethod
    def print_width_report(cls, report: WidthReport) -> None:
        """Print mean band widths of the fold protocol."""
        print(RULE)
        print(f"{'Method':<10}{'Level':>8}{'Mean width':>14}{'Points':>10}")
        print(RULE)
        for row in report.rows:
            print(f"{format_method(row.method):<10}{format_level(row.level):>8}"
                  f"{row.mean_width:>14.4f}{row.n_points:>10}")
        print(RULE)
        print(f"Folds: {report.folds}")
