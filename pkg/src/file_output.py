"""
File output module for saving datasets, reports, band tables and plots.
Relative paths land in the configurable output folder; files carry no
timestamps so equal inputs give byte-identical outputs.
"""
from __future__ import annotations
import json
import os
import logging
from typing import Any, Dict, Mapping, Optional
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from models import BandKey, BandResult, CoverageReport, Dataset, TimeGrid, WidthReport
from utils import format_level, format_method
import settings

logger = logging.getLogger('SurvBand')

REPORT_COLUMNS = ('method', 'level', 'coverage', 'mean_width', 'n', 'M', 'B', 'R', 'setting', 'seed')
WIDTH_COLUMNS = ('method', 'level', 'mean_width', 'n_points', 'folds', 'M', 'B', 'seed')
BAND_COLORS = {'naive': '#d62728', 'ks': '#1f77b4', 'prop_ks': '#2ca02c'}

plt.rcParams['svg.hashsalt'] = 'survband'


class FileOutput:
    """Handles writing experiment artifacts to files."""

    @classmethod
    def ensure_output_folder(cls) -> str:
        """Ensure the output folder exists, creating it if necessary.

        Returns:
            The absolute path to the output folder.
        """
        output_path = os.path.join(str(settings.ROOT_DIR), settings.OUTPUT_FOLDER_NAME)
        os.makedirs(output_path, exist_ok=True)
        return output_path

    @classmethod
    def resolve(cls, path: str) -> str:
        """Absolute paths are kept; relative ones go into the output folder. Parent folders are created."""
        full = path if os.path.isabs(path) else os.path.join(cls.ensure_output_folder(), path)
        parent = os.path.dirname(full)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return full

    @staticmethod
    def _num(value: float) -> str:
        return repr(float(value))

    @classmethod
    def save_dataset(cls, ds: Dataset, path: str) -> str:
        """Write a dataset as CSV with the feature columns followed by time and event."""
        filepath = cls.resolve(path)
        frame = pd.DataFrame(ds.x, columns=ds.feature_names)
        frame['time'] = ds.time
        frame['event'] = ds.event.astype(int)
        frame.to_csv(filepath, index=False, lineterminator='\n')
        logger.info(f"Dataset of {ds.n} records saved to: {filepath}")
        return filepath

    @classmethod
    def save_sidecar(cls, data_path: str, meta: Dict[str, Any]) -> str:
        """Write <data_path>.meta.json next to a generated dataset."""
        filepath = cls.resolve(data_path) + '.meta.json'
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write('\n')
        logger.debug(f"Sidecar saved to: {filepath}")
        return filepath

    @classmethod
    def save_report(cls, report: CoverageReport, path: str) -> str:
        """Write a coverage report, one row per (method, level).

        Returns:
            The absolute filepath where the report was saved.

        Logs:
            Info: File save location.
        """
        filepath = cls.resolve(path)
        cfg = report.config
        with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
            f.write(','.join(REPORT_COLUMNS) + '\n')
            for row in report.rows:
                fields = [row.method, cls._num(row.level), cls._num(row.coverage), cls._num(row.mean_width)]
                if cfg is not None:
                    fields += [str(cfg.n), str(cfg.M), str(cfg.B), str(cfg.R), cfg.setting_label, str(cfg.master_seed)]
                else:
                    fields += [''] * 6
                f.write(','.join(fields) + '\n')
        logger.info(f"Coverage report saved to: {filepath}")
        return filepath

    @classmethod
    def save_width_report(cls, report: WidthReport, path: str) -> str:
        """Write a real-data width report."""
        filepath = cls.resolve(path)
        cfg = report.config
        with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
            f.write(','.join(WIDTH_COLUMNS) + '\n')
            for row in report.rows:
                fields = [row.method, cls._num(row.level), cls._num(row.mean_width), str(row.n_points),
                          str(report.folds)]
                fields += [str(cfg.M), str(cfg.B), str(cfg.master_seed)] if cfg is not None else [''] * 3
                f.write(','.join(fields) + '\n')
        logger.info(f"Width report saved to: {filepath}")
        return filepath

    @classmethod
    def save_band_table(cls, band: BandResult, path: str) -> str:
        """Write one band as CSV with columns t, lower, base, upper."""
        filepath = cls.resolve(path)
        frame = pd.DataFrame({'t': band.grid.points, 'lower': band.lower, 'base': band.base, 'upper': band.upper})
        frame.to_csv(filepath, index=False, lineterminator='\n')
        logger.debug(f"Band table saved to: {filepath}")
        return filepath

    @classmethod
    def save_curve_table(cls, grid: TimeGrid, curves: Mapping[str, np.ndarray], path: str) -> str:
        """Write named curves on a grid as CSV with a leading t column."""
        filepath = cls.resolve(path)
        frame = pd.DataFrame({'t': grid.points, **{name: np.asarray(v) for name, v in curves.items()}})
        frame.to_csv(filepath, index=False, lineterminator='\n')
        logger.debug(f"Curve table saved to: {filepath}")
        return filepath

    @classmethod
    def save_band_plot(cls, bands: Mapping[BandKey, BandResult], reference: Optional[np.ndarray],
                       out_dir: str, name: str, reference_label: str = 'truth') -> str:
        """SVG of the base curve with shaded bands and an optional reference curve.

        Args:
            bands: (method, level) -> band, all on one grid around one base curve.
            reference: True or Kaplan-Meier curve on the same grid, if any.
            out_dir: Output directory.
            name: File stem.
            reference_label: Legend entry of the reference curve.
        """
        filepath = cls.resolve(os.path.join(out_dir, f"{name}.svg"))
        first = next(iter(bands.values()))
        t = first.grid.points
        fig, ax = plt.subplots(figsize=(7, 4.5))
        # widest level drawn first so narrower ones stay visible
        for (method, level), band in sorted(bands.items(), key=lambda kv: -kv[0][1]):
            ax.fill_between(t, band.lower, band.upper, step='post', alpha=0.15 + 0.25 * (1 - level),
                            color=BAND_COLORS.get(method, 'grey'),
                            label=f"{format_method(method)} {format_level(level)}")
        ax.step(t, first.base, where='post', color='black', lw=1.2, label='estimate')
        if reference is not None:
            ax.plot(t, reference, color='black', ls='--', lw=1.0, label=reference_label)
        ax.set_xlabel('t')
        ax.set_ylabel('S(t | x)')
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc='lower left', fontsize='small')
        fig.tight_layout()
        fig.savefig(filepath, format='svg', metadata={'Date': None})
        plt.close(fig)
        logger.info(f"Band plot saved to: {filepath}")
        return filepath

    @classmethod
    def save_report_plot(cls, report: CoverageReport, out_dir: str) -> str:
        """SVG with coverage per (method, level) against the nominal levels, and mean widths."""
        filepath = cls.resolve(os.path.join(out_dir, 'coverage.svg'))
        fig, (ax_cov, ax_width) = plt.subplots(1, 2, figsize=(9, 4))
        methods = list(dict.fromkeys(r.method for r in report.rows))
        levels = sorted({r.level for r in report.rows})
        positions = np.arange(len(levels))
        step = 0.8 / max(len(methods), 1)
        for j, method in enumerate(methods):
            rows = [report.row(method, lv) for lv in levels]
            offset = positions - 0.4 + step * (j + 0.5)
            color = BAND_COLORS.get(method, 'grey')
            ax_cov.bar(offset, [r.coverage for r in rows], width=step, color=color, label=format_method(method))
            ax_width.bar(offset, [r.mean_width for r in rows], width=step, color=color)
        for k, level in enumerate(levels):
            ax_cov.hlines(level, k - 0.45, k + 0.45, colors='black', linestyles='dashed', lw=1)
        for ax, title in ((ax_cov, 'coverage'), (ax_width, 'mean width')):
            ax.set_xticks(positions)
            ax.set_xticklabels([format_level(lv) for lv in levels])
            ax.set_title(title)
        ax_cov.set_ylim(0, 1.05)
        ax_cov.legend(fontsize='small')
        fig.tight_layout()
        fig.savefig(filepath, format='svg', metadata={'Date': None})
        plt.close(fig)
        logger.info(f"Report plot saved to: {filepath}")
        return filepath
