"""Tests for metric representations, profiles and serialization."""

import logging
import math

import numpy as np
import pytest

from capdeform.errors import MetricError, PreconditionError
from capdeform.metrics import (
    BandMetric,
    RadialGrid,
    SymmetricForm,
    WarpedBallMetric,
    band_from_json,
    band_to_json,
    build_warped,
    flat_ball,
    from_samples,
    hemisphere,
    parse_profile,
    read_band_json,
    read_warped_csv,
    relative_eigen_range,
    round_cap,
    write_band_json,
    write_warped_csv,
)


# --- grids ---


def test_grid_spacing_and_index():
    g = RadialGrid(-1.0, 0.0, 11)
    assert g.spacing == pytest.approx(0.1)
    assert g.index_of(-0.5) == 5
    with pytest.raises(MetricError, match="slice outside grid"):
        g.index_of(-0.55)


def test_grid_too_small():
    with pytest.raises(MetricError, match="too few points"):
        RadialGrid(-1.0, 0.0, 5)


def test_grid_empty_interval():
    with pytest.raises(MetricError, match="empty radial interval"):
        RadialGrid(0.0, 0.0, 11)


def test_grid_from_samples_rejects_nonuniform():
    r = np.linspace(-1.0, 0.0, 11)
    r[4] += 0.01
    with pytest.raises(MetricError, match="non-uniform spacing"):
        RadialGrid.from_samples(r)


# --- warped balls ---


def test_flat_ball_profile():
    m = flat_ball(2.0, n_points=33)
    assert m.grid.r_min == -2.0
    assert m.pole_left and not m.pole_right
    assert m.warp[0] == 0.0
    assert m.warp[-1] == pytest.approx(2.0)


def test_round_cap_and_hemisphere():
    m = round_cap(math.pi / 4, n_points=65)
    assert m.warp[-1] == pytest.approx(math.sin(math.pi / 4))
    h = hemisphere(65)
    assert h.label == "hemisphere"
    assert h.warp[-1] == pytest.approx(1.0)


def test_round_cap_radius_range():
    with pytest.raises(PreconditionError, match="cap radius"):
        round_cap(2.0)


def test_warp_must_be_positive_inside():
    grid = RadialGrid(-1.0, 0.0, 11)
    w = grid.r + 1.0
    w[5] = -0.1
    with pytest.raises(MetricError, match="non-positive warp sample"):
        WarpedBallMetric(grid, w)


def test_rejected_warp_is_logged(caplog):
    grid = RadialGrid(-1.0, 0.0, 11)
    w = grid.r + 1.0
    w[5] = -0.1
    with caplog.at_level(logging.DEBUG, logger="capdeform.metrics"):
        with pytest.raises(MetricError):
            WarpedBallMetric(grid, w, label="dented")
    assert "rejected warp dented: non-positive warp sample" in caplog.text


def test_warp_is_read_only():
    m = flat_ball(n_points=17)
    with pytest.raises(ValueError):
        m.warp[3] = 1.0


def test_doubled_metric_needs_smooth_poles():
    grid = RadialGrid(-1.0, 1.0, 21)
    w = 2.0 * (1.0 - np.abs(grid.r))
    with pytest.raises(MetricError, match="pole is not smooth"):
        WarpedBallMetric(grid, w, doubled=True)


def test_half_of_doubled_metric():
    grid = RadialGrid(-math.pi / 2, math.pi / 2, 257)
    w = np.cos(grid.r)
    w[0] = w[-1] = 0.0
    m = WarpedBallMetric(grid, w, doubled=True)
    half = m.half()
    assert half.grid.n_points == 129
    assert half.grid.r_max == 0.0
    assert half.warp[-1] == pytest.approx(1.0)


def test_half_of_ball_is_an_error():
    with pytest.raises(PreconditionError, match="not a doubled metric"):
        flat_ball(n_points=17).half()


def test_interpolant_reproduces_samples():
    m = round_cap(1.0, n_points=129)
    x = np.linspace(-1.0, 0.0, 37)
    np.testing.assert_allclose(m.interpolant(x), np.sin(x + 1.0), atol=1e-10)


# --- profiles ---


def test_parse_profile():
    assert parse_profile("round_cap:1.047") == ("round_cap", [1.047])
    assert parse_profile("flat_ball") == ("flat_ball", [])
    with pytest.raises(PreconditionError, match="unknown profile"):
        parse_profile("torus")
    with pytest.raises(PreconditionError, match="must be numbers"):
        parse_profile("round_cap:abc")


def test_build_warped_with_params():
    m = build_warped("round_cap:0.5", n_points=33)
    assert m.grid.r_min == -0.5
    with pytest.raises(PreconditionError, match="bad parameters"):
        build_warped("hemisphere", 1.0, 2.0, n_points=33)


def test_csv_round_trip(tmp_path):
    m = round_cap(0.9, n_points=33)
    p = write_warped_csv(m, tmp_path / "m.csv")
    assert p.read_text().splitlines()[0] == "r,w"
    back = read_warped_csv(p)
    assert np.array_equal(back.warp, m.warp)
    assert build_warped(f"csv:{p}").grid == m.grid


def test_csv_missing_file(tmp_path):
    with pytest.raises(MetricError, match="metric file not found"):
        read_warped_csv(tmp_path / "none.csv")


def test_csv_boundary_must_be_at_zero(tmp_path):
    p = tmp_path / "m.csv"
    rows = ["r,w"] + [f"{r!r},{r + 2.0!r}" for r in np.linspace(-1.0, -0.5, 11).tolist()]
    p.write_text("\n".join(rows))
    with pytest.raises(MetricError, match="boundary must sit at r = 0"):
        read_warped_csv(p)


# --- bands and slice forms ---


def _annulus(n):
    return from_samples(np.linspace(-1.0, 0.0, n), np.linspace(1.0, 2.0, n))


def test_band_from_warped_shape():
    band = BandMetric.from_warped(_annulus(17), nx=6, ny=5)
    assert band.components.shape == (17, 6, 5, 2, 2)
    assert band.chart_spacing == (1 / 6, 1 / 5)


def test_band_rejects_asymmetric_components():
    grid = RadialGrid(-1.0, 0.0, 9)
    g = np.tile(np.eye(2), (9, 5, 5, 1, 1))
    g[..., 0, 1] = 0.1
    with pytest.raises(MetricError, match="not symmetric"):
        BandMetric(grid, g)


def test_band_rejects_indefinite_components():
    grid = RadialGrid(-1.0, 0.0, 9)
    g = np.tile(np.diag([1.0, -1.0]), (9, 5, 5, 1, 1))
    with pytest.raises(MetricError, match="not positive definite"):
        BandMetric(grid, g)


def test_band_json_round_trip(tmp_path):
    band = BandMetric.from_warped(_annulus(17), nx=5, ny=5)
    assert np.array_equal(band_from_json(band_to_json(band)).components, band.components)
    p = write_band_json(band, tmp_path / "band.json")
    assert np.array_equal(read_band_json(p).components, band.components)


def test_relative_eigen_range_round_and_chart():
    lo, hi = relative_eigen_range(SymmetricForm(np.array([-2.0, -1.0])), SymmetricForm(np.array([4.0, 1.0])))
    assert (lo, hi) == (-1.0, -0.5)
    a = SymmetricForm(np.diag([-3.0, -1.0]), "chart")
    g = SymmetricForm(np.diag([3.0, 2.0]), "chart")
    assert relative_eigen_range(a, g) == pytest.approx((-1.0, -0.5))


def test_relative_eigen_range_basis_mismatch():
    with pytest.raises(MetricError, match="different bases"):
        relative_eigen_range(SymmetricForm(np.float64(1.0)), SymmetricForm(np.eye(2), "chart"))


def test_metric_derivative_of_second_fundamental_form():
    ii = SymmetricForm(np.float64(-0.5))
    assert float(ii.metric_derivative().values) == 1.0
