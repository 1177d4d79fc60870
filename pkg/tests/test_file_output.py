import json
import os

import numpy as np
import pandas as pd
import pytest

import settings
from file_output import REPORT_COLUMNS, WIDTH_COLUMNS, FileOutput
from models import (BandResult, CoverageReport, CoverageRow, ExperimentConfig, TimeGrid, WidthReport,
                    WidthRow)
from printer import ReportPrinter

GRID = TimeGrid(np.array([1.0, 2.0, 3.0, 4.0]))


@pytest.fixture
def report():
    rows = [CoverageRow("naive", 0.9, 0.98, 0.081), CoverageRow("ks", 0.9, 0.9, 0.05),
            CoverageRow("prop_ks", 0.9, 0.88, 1 / 30)]
    cfg = ExperimentConfig(M=3, B=10, R=4, methods=("naive", "ks", "prop_ks"), levels=(0.9,))
    return CoverageReport(rows, cfg, n_repetitions=4, failures=[(2, "TrainingError: nan")])


@pytest.fixture
def band():
    base = np.array([0.9, 0.7, 0.5, 0.3])
    return BandResult(GRID, base - 0.05, np.minimum(base + 0.05, 1.0), base, "ks", 0.9, 0.05)


def test_relative_paths_go_to_output_folder(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "ROOT_DIR", tmp_path)
    path = FileOutput.resolve(os.path.join("nested", "r.csv"))
    assert path == os.path.join(str(tmp_path), settings.OUTPUT_FOLDER_NAME, "nested", "r.csv")
    assert os.path.isdir(os.path.dirname(path))


def test_report_columns_and_values(tmp_path, report):
    path = FileOutput.save_report(report, str(tmp_path / "report.csv"))
    frame = pd.read_csv(path)
    assert tuple(frame.columns) == REPORT_COLUMNS
    assert list(frame["method"]) == ["naive", "ks", "prop_ks"]
    assert frame["coverage"].tolist() == pytest.approx([0.98, 0.9, 0.88])
    assert frame["mean_width"].iloc[2] == pytest.approx(1 / 30, rel=1e-15)
    assert set(frame["setting"]) == {"S1"} and set(frame["R"]) == {4}


def test_report_bytes_are_reproducible(tmp_path, report):
    a = FileOutput.save_report(report, str(tmp_path / "a.csv"))
    b = FileOutput.save_report(report, str(tmp_path / "b.csv"))
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_width_report(tmp_path):
    cfg = ExperimentConfig(M=2, B=5)
    width = WidthReport([WidthRow("ks", 0.95, 0.044, 30)], cfg, folds=10)
    frame = pd.read_csv(FileOutput.save_width_report(width, str(tmp_path / "w.csv")))
    assert tuple(frame.columns) == WIDTH_COLUMNS
    assert frame.loc[0, "folds"] == 10 and frame.loc[0, "n_points"] == 30


def test_band_table(tmp_path, band):
    frame = pd.read_csv(FileOutput.save_band_table(band, str(tmp_path / "band.csv")))
    assert list(frame.columns) == ["t", "lower", "base", "upper"]
    np.testing.assert_allclose(frame["base"], band.base)
    assert np.all(frame["lower"] <= frame["upper"])


def test_curve_table(tmp_path):
    path = FileOutput.save_curve_table(GRID, {"base": np.ones(4), "km": np.linspace(1, 0.4, 4)},
                                       str(tmp_path / "curves.csv"))
    assert list(pd.read_csv(path).columns) == ["t", "base", "km"]


def test_dataset_and_sidecar(tmp_path, tiny_dataset):
    path = FileOutput.save_dataset(tiny_dataset, str(tmp_path / "sim.csv"))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["a", "b", "time", "event"]
    assert frame["event"].tolist() == [1, 1, 0, 1, 0, 1]
    meta = FileOutput.save_sidecar(str(tmp_path / "sim.csv"), {"setting": 1, "seed": 42})
    assert meta.endswith("sim.csv.meta.json")
    with open(meta, encoding="utf-8") as f:
        assert json.load(f) == {"seed": 42, "setting": 1}


def test_plots_are_svg(tmp_path, report, band):
    band_path = FileOutput.save_band_plot({("ks", 0.9): band}, band.base, str(tmp_path), "point0")
    report_path = FileOutput.save_report_plot(report, str(tmp_path))
    for path in (band_path, report_path):
        with open(path, encoding="utf-8") as f:
            assert "<svg" in f.read()


def test_printer_report(capsys, report):
    ReportPrinter.print_header(report.config)
    ReportPrinter.print_report(report)
    out = capsys.readouterr().out
    assert "S1" in out and "Prop-KS" in out and "90%" in out
    assert "3 of 4 succeeded" in out
    assert "rep 2: TrainingError: nan" in out


def test_printer_width_report(capsys):
    ReportPrinter.print_width_report(WidthReport([WidthRow("naive", 0.9, 0.075, 12)], None, folds=3))
    out = capsys.readouterr().out
    assert "Naive" in out and "0.0750" in out and "Folds: 3" in out
