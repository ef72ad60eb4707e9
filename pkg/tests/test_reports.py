import numpy as np
import pytest

from dualbn import figures, reports
from dualbn.errors import ConfigError
from dualbn.evaluation import CorruptionReport, FourierMap
from dualbn.train import LOG_COLUMNS, StepLog


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    reports.write_csv(path, ("a", "b"), [[1, 2.5], ["x", "nan"]])
    header, rows = reports.read_csv(path)
    assert header == ["a", "b"]
    assert rows == [["1", "2.5"], ["x", "nan"]]


def test_training_log_columns_and_nan_encoding(tmp_path):
    logs = [StepLog(0, 0, 0.1, 2.3, float("nan"), 2.3),
            StepLog(1, 0, 0.099, 2.2, 2.4, 2.3)]
    path = tmp_path / "log.csv"
    reports.write_training_log(path, logs)
    header, rows = reports.read_csv(path)
    assert tuple(header) == LOG_COLUMNS
    assert rows[0][4] == "nan"
    assert float(rows[1][4]) == 2.4
    # float fields round-trip exactly through repr
    assert float(rows[1][2]) == 0.099


def test_corruption_report_files(tmp_path):
    errors = np.array([[0.1, 0.2, 0.3, 0.4, 0.5],
                       [0.0, 0.0, 0.1, 0.1, 0.3]])
    rep = CorruptionReport(names=("noise", "blur"), errors=errors,
                           uce={"noise": 0.3, "blur": 0.1},
                           mean_uce=0.2, ce={"noise": 1.0, "blur": 0.5})
    csv_path, json_path = tmp_path / "c.csv", tmp_path / "c.json"
    reports.write_corruption_report(csv_path, json_path, rep)
    header, rows = reports.read_csv(csv_path)
    assert header == ["corruption", "severity", "error"]
    assert len(rows) == 10
    assert rows[0] == ["noise", "1", "0.1"]
    import json
    payload = json.loads(json_path.read_text())
    assert payload["mean_uce"] == 0.2
    assert payload["ce"]["blur"] == 0.5
    assert "provenance" in payload


def test_lambda_curve_with_and_without_uce(tmp_path):
    p = tmp_path / "l.csv"
    reports.write_lambda_curve(p, [(0.0, 0.9), (1.0, 0.8)])
    header, rows = reports.read_csv(p)
    assert header == ["lambda", "accuracy"]
    reports.write_lambda_curve(p, [(0.0, 0.9, 0.4)])
    header, rows = reports.read_csv(p)
    assert header == ["lambda", "accuracy", "mean_uce"]
    assert rows == [["0.0", "0.9", "0.4"]]


def test_fourier_csv_headers_center_zero(tmp_path):
    fmap = FourierMap(errors=np.zeros((4, 4)), r=8.0, n_images=2)
    p = tmp_path / "f.csv"
    reports.write_fourier_csv(p, fmap)
    header, rows = reports.read_csv(p)
    assert header == ["f-2", "f-1", "f0", "f1"]
    assert len(rows) == 4


def test_pgm_roundtrip_and_header(tmp_path):
    grid = np.array([[0.0, 0.5], [1.0, 0.25]])
    p = tmp_path / "m.pgm"
    reports.write_pgm(p, grid)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    pixels, maxval = reports.read_pgm(p)
    assert maxval == 255
    assert pixels.tolist() == [[0, 128], [255, 64]]


def test_pgm_clips_out_of_range(tmp_path):
    p = tmp_path / "m.pgm"
    reports.write_pgm(p, np.array([[-1.0, 2.0]]))
    pixels, _ = reports.read_pgm(p)
    assert pixels.tolist() == [[0, 255]]


def test_pgm_rejects_non_2d(tmp_path):
    with pytest.raises(ConfigError):
        reports.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))


def test_read_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "fake.pgm"
    p.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ConfigError):
        reports.read_pgm(p)


# ---------------------------------------------------------------------------
# figure rendering
# ---------------------------------------------------------------------------

def test_loss_curve_png_renders_and_is_deterministic(tmp_path):
    logs = [StepLog(i, 0, 0.1 * (1 - i / 10), 2.0 - 0.1 * i, float("nan"),
                    2.0 - 0.1 * i) for i in range(10)]
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    figures.loss_curve_png(p1, logs)
    figures.loss_curve_png(p2, logs)
    blob = p1.read_bytes()
    assert blob[:8] == b"\x89PNG\r\n\x1a\n"
    assert blob == p2.read_bytes()


def test_heatmap_and_curve_pngs_render(tmp_path):
    fmap = FourierMap(errors=np.random.default_rng(0).random((8, 8)), r=8.0, n_images=4)
    figures.fourier_heatmap_png(tmp_path / "f.png", fmap)
    errors = np.random.default_rng(1).random((7, 5))
    names = tuple(f"c{i}" for i in range(7))
    rep = CorruptionReport(names=names, errors=errors,
                           uce={n: 0.1 for n in names}, mean_uce=0.1)
    figures.corruption_heatmap_png(tmp_path / "c.png", rep)
    figures.lambda_curve_png(tmp_path / "l.png", [(0.0, 0.9), (0.5, 0.95), (1.0, 0.85)])
    figures.lowpass_curve_png(tmp_path / "lp.png", [(1, 0.3), (16, 0.8), (32, 0.9)])
    figures.affinity_bar_png(tmp_path / "a.png", [("none", 0.0), ("flip", -2.0)])
    for name in ("f.png", "c.png", "l.png", "lp.png", "a.png"):
        blob = (tmp_path / name).read_bytes()
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(blob) > 500
