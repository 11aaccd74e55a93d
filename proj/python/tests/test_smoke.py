import os
from pathlib import Path

import numpy as np
import pytest

import dyrect

SOURCE_DIR = Path(os.environ.get("DYRECT_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def small_scan(ppr=16, rotations=3):
    return dyrect.AcquisitionGeometry.circular(
        dyrect.BeamType.parallel, det_rows=6, det_cols=12, pixel_pitch=0.5,
        projections_per_rotation=ppr, n_views=ppr * rotations)


def test_volume_arrays_round_trip():
    grid = dyrect.VoxelGrid3.centered(6, 5, 4, 0.5)
    rng = np.random.default_rng(0)
    mu0, mu1 = rng.random(grid.shape), rng.random(grid.shape)
    tstar = np.full(grid.shape, 1.5)
    vol = dyrect.EventVolume(grid, mu0, mu1, tstar)
    assert vol.mu0.shape == (4, 5, 6)
    np.testing.assert_array_equal(vol.mu0, mu0)
    np.testing.assert_array_equal(vol.tstar, tstar)


def test_shape_mismatch_raises_data_error():
    grid = dyrect.VoxelGrid3.centered(4, 4, 4, 0.5)
    with pytest.raises(dyrect.DataError):
        dyrect.EventVolume(grid, np.zeros((4, 4, 3)), np.zeros((4, 4, 4)), np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        dyrect.reconstruct_dyrect(
            dyrect.ProjectionSet(small_scan(rotations=2), np.zeros((32, 6, 12))),
            dyrect.ReconParams(), dyrect.EventVolume.uniform(grid, 0, 0, 1))


def test_static_projection_matches_event_projection():
    grid = dyrect.VoxelGrid3.centered(8, 8, 4, 0.5)
    field = np.zeros(grid.shape)
    field[:, 2:6, 2:6] = 1.0
    geo = small_scan()
    static = dyrect.project_static(grid, field, geo)
    dynamic = dyrect.forward_project(dyrect.EventVolume(grid, field, field, np.full(grid.shape, 1.5)), geo)
    np.testing.assert_array_equal(static.data, dynamic.data)
    assert static.data.shape == (geo.n_views, 6, 12)
    assert static.data.max() > 0


def test_dyrect_moves_transition_times_towards_truth():
    grid = dyrect.VoxelGrid3.centered(8, 8, 4, 0.5)
    mu0 = np.zeros(grid.shape)
    mu0[:, 2:6, 2:6] = 1.0
    mu1 = mu0.copy()
    mu1[:, 3:5, 3:5] = 0.2
    truth = dyrect.EventVolume(grid, mu0, mu1, np.full(grid.shape, 1.2))
    measured = dyrect.forward_project(truth, small_scan(ppr=24))

    params = dyrect.ReconParams()
    params.n_iterations = 5
    params.fix_attenuations = True
    params.lambda_delta = params.lambda_mu = 20.0
    init = dyrect.EventVolume(grid, mu0, mu1, np.full(grid.shape, 1.5))
    rec, residuals = dyrect.reconstruct_dyrect(measured, params, init)
    assert len(residuals) == 5
    before = dyrect.mae_transition(truth, init)
    after = dyrect.mae_transition(truth, rec)
    assert after < before


def test_sirt_and_difference_sinogram():
    grid = dyrect.VoxelGrid3.centered(8, 8, 2, 0.5)
    field = np.zeros(grid.shape)
    field[:, 3:5, 3:5] = 1.0
    geo = small_scan()
    measured = dyrect.project_static(grid, field, geo)
    volume, residuals = dyrect.reconstruct_sirt(measured, grid, n_iterations=5)
    assert volume.shape == grid.shape
    assert residuals[-1] < residuals[0]
    diff = dyrect.difference_sinogram(measured)
    assert dyrect.detect_event_time(diff) is None


def test_io_round_trip(tmp_path):
    geo = small_scan()
    data = np.arange(geo.n_views * 6 * 12, dtype=float).reshape(geo.n_views, 6, 12) * 0.25
    dyrect.write_projections(tmp_path / "p", dyrect.ProjectionSet(geo, data))
    back = dyrect.read_projections(tmp_path / "p")
    np.testing.assert_array_equal(back.data, data)
    np.testing.assert_allclose(back.geometry.times, geo.times)


def test_pipeline_on_small_config(tmp_path):
    metrics = dyrect.run_pipeline(SOURCE_DIR / "configs" / "small.conf", output_dir=tmp_path)
    assert 0.0 <= metrics["mae_rotations"] < 1.0
    assert (tmp_path / "metrics.txt").exists()
