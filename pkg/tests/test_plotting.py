import math
import re

import numpy as np
import pytest

from accperc.experiments import ExperimentError, Table
from accperc.plotting import PLOT_KINDS, emit_plot


def _write(tmp_path, name, header, rows):
    p = tmp_path / f"{name}.csv"
    p.write_bytes(Table(name, header, rows).to_csv_bytes())
    return p


def _phase_csv(tmp_path):
    alphas = [0.5, 1.0, 1.5, 2.0, 2.5]
    rows = [(a, 14, int(a * 14), a * (1 - math.log(a)), 0.9 * a * (1 - math.log(a)), 0.85 * a * (1 - math.log(a)), 0.01)
            for a in alphas]
    return _write(tmp_path, "phase_curve", ["alpha", "N", "k", "theta", "log_mean_over_n", "mean_log_z_over_n", "se"], rows)


def test_empty_csv_raises_and_writes_nothing(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_bytes(b"")
    svg = tmp_path / "empty.svg"
    with pytest.raises(ExperimentError, match="empty"):
        emit_plot(p, "phase-curve", svg)
    assert not svg.exists()


def test_header_only_csv_raises(tmp_path):
    p = tmp_path / "h.csv"
    p.write_bytes(b"alpha,theta,mean_log_z_over_n\r\n")
    with pytest.raises(ExperimentError):
        emit_plot(p, "phase-curve")
    assert not p.with_suffix(".svg").exists()


def test_malformed_row_is_reported_with_its_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_bytes(b"alpha,theta,mean_log_z_over_n\r\n1,1,0.8\r\n2,abc,0.3\r\n")
    with pytest.raises(ExperimentError, match=r"row 3|line 3"):
        emit_plot(p, "phase-curve")
    p.write_bytes(b"alpha,theta,mean_log_z_over_n\r\n1,1\r\n")
    with pytest.raises(ExperimentError):
        emit_plot(p, "phase-curve")


def test_missing_columns_and_unknown_kind(tmp_path):
    p = _write(tmp_path, "x", ["N", "k"], [(1, 2)])
    with pytest.raises(ExperimentError, match="missing columns"):
        emit_plot(p, "critical-exponent")
    with pytest.raises(ValueError):
        emit_plot(p, "histogram")


def test_phase_plot_has_theta_overlay_crossing_zero_at_e(tmp_path):
    svg = emit_plot(_phase_csv(tmp_path), "phase-curve")
    text = svg.read_text()
    assert 'id="theta-overlay"' in text and 'id="empirical"' in text
    assert "<text" not in text and "font-family" not in text  # glyphs are paths
    # the overlay is theta(alpha): its sign change lies at alpha = e
    grid = np.linspace(0.05, 3.2, 400)
    th = grid * (1 - np.log(grid))
    i = int(np.argmax(th < 0))
    assert grid[i - 1] < math.e <= grid[i]


def test_plot_is_byte_deterministic(tmp_path):
    csv = _phase_csv(tmp_path)
    a = emit_plot(csv, "phase-curve", tmp_path / "a.svg").read_bytes()
    b = emit_plot(csv, "phase-curve", tmp_path / "b.svg").read_bytes()
    assert a == b
    assert not re.search(rb"<dc:date>", a)


def test_critical_exponent_plot_annotates_slope(tmp_path):
    Ns = np.array([50, 100, 200, 400])
    p = _write(tmp_path, "ce", ["N", "survival"], [(int(n), float(3 * n ** -1.5)) for n in Ns])
    text = emit_plot(p, "critical-exponent").read_text()
    for gid in ("fit-line", "reference-line", "slope-annotation"):
        assert f'id="{gid}"' in text


@pytest.mark.parametrize("kind", sorted(PLOT_KINDS))
def test_every_kind_renders(tmp_path, kind):
    cols = PLOT_KINDS[kind]
    rows = []
    for i in range(1, 5):
        row = []
        for c in cols:
            row.append({"alpha": 3.0, "beta": 1.5, "N": 50 * i}.get(c, 0.1 * i))
        rows.append(tuple(row))
    p = _write(tmp_path, kind, list(cols), rows)
    svg = emit_plot(p, kind)
    assert svg.read_text().startswith("<?xml")
