import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamimo.channel import NoiseSpec, add_noise, los_channel
from mamimo.dataio import BadMagicError
from mamimo.geometry import build_topology, grid_positions
from mamimo.localization import (
    FeatureConfig,
    FeatureMode,
    FingerprintDb,
    LocalizationReport,
    Weighting,
    build_fingerprints,
    evaluate_localizer,
    extract_features,
    knn_locate,
    leave_one_out_report,
    load_fingerprints,
    report_to_csv,
    save_fingerprints,
)
from mamimo.model import CsiSample, Position3, SampleGrid

# first-run regression baseline for the noisy distributed-array scenario below
DA_20DB_MEAN_BASELINE_MM = 0.8785874281986699


class TestExtractFeatures:
    def test_raw_mode_unit_norm(self, rng):
        h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        f = extract_features(CsiSample(h))
        assert f.shape == (2 * 4 * 6,)
        assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-12)

    def test_raw_mode_scale_invariant(self, rng):
        h = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        a = extract_features(CsiSample(h))
        b = extract_features(CsiSample(5.0 * h))
        assert np.allclose(a, b, atol=1e-15)

    def test_magnitude_mode(self, rng):
        h = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        f = extract_features(CsiSample(h), FeatureConfig(FeatureMode.MAGNITUDE_ONLY))
        assert f.shape == (6,)
        assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-12)
        assert np.all(f >= 0)

    def test_phase_mode_rotation_invariant(self, rng):
        h = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        cfg = FeatureConfig(FeatureMode.PHASE_RELATIVE)
        a = extract_features(CsiSample(h), cfg)
        b = extract_features(CsiSample(h * np.exp(1j * 2.1)), cfg)
        assert np.allclose(a, b, atol=1e-12)
        # cross-check one entry against direct angle arithmetic
        expected = np.angle(h[2, 1]) - np.angle(h[0, 1])
        expected = math.remainder(expected, 2 * math.pi)
        assert a.reshape(4, 3)[2, 1] == pytest.approx(expected, abs=1e-12)

    def test_zero_csi_rejected(self):
        with pytest.raises(ValueError):
            extract_features(CsiSample(np.zeros((2, 2))))

    @given(scale=st.floats(0.01, 100.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariance_property(self, scale):
        rng = np.random.default_rng(99)
        h = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        assert np.allclose(extract_features(CsiSample(h)),
                           extract_features(CsiSample(scale * h)), atol=1e-12)


def grid_samples(geometry, radio, grid):
    return [los_channel(geometry, p, radio, sample_id=f"{i:06d}")
            for i, p in enumerate(grid_positions(grid))]


class TestBuildFingerprints:
    def test_counts_and_order(self, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(-20, 1500, 1000), x_extent_mm=40,
                          y_extent_mm=40, resolution_mm=20)
        samples = grid_samples(ura_small, fast_radio, grid)
        db = build_fingerprints(samples, topology="ura")
        assert len(db) == 9
        assert db.topology == "ura"
        assert np.array_equal(db.labels_mm[0], samples[0].label.as_array())

    def test_empty_dataset(self):
        db = build_fingerprints([])
        assert len(db) == 0

    def test_unlabelled_sample_rejected(self):
        with pytest.raises(ValueError):
            build_fingerprints([CsiSample(np.ones((1, 1)))])

    def test_duplicate_positions_kept(self, fast_radio, ura_small):
        pos = Position3(0, 1500, 1000)
        s = los_channel(ura_small, pos, fast_radio)
        db = build_fingerprints([s, s])
        assert len(db) == 2


class TestKnnLocate:
    def test_exact_query_returns_stored_label(self, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(-20, 1500, 1000), x_extent_mm=40,
                          y_extent_mm=40, resolution_mm=10)
        samples = grid_samples(ura_small, fast_radio, grid)
        db = build_fingerprints(samples)
        est = knn_locate(db, samples[7], k=1)
        assert est.distance_mm(samples[7].label) == 0.0

    def test_two_equidistant_uniform_midpoint(self):
        db = build_fingerprints([
            CsiSample(np.array([[1.0 + 0j, 0.0]]), label=Position3(0, 0, 0)),
            CsiSample(np.array([[0.0, 1.0 + 0j]]), label=Position3(10, 0, 0)),
        ])
        query = CsiSample(np.array([[1.0 + 0j, 1.0 + 0j]]))
        est = knn_locate(db, query, k=2, weighting=Weighting.UNIFORM)
        assert est == Position3(5.0, 0.0, 0.0)

    def test_ties_resolved_by_database_order(self):
        # two identical fingerprints with different labels: k=1 takes the first
        h = np.array([[1.0 + 0j, 2.0 + 0j]])
        db = build_fingerprints([
            CsiSample(h, label=Position3(1, 1, 1)),
            CsiSample(h, label=Position3(9, 9, 9)),
        ])
        est = knn_locate(db, CsiSample(h), k=1)
        assert est == Position3(1, 1, 1)

    def test_k_validation(self, fast_radio, ura_small):
        s = los_channel(ura_small, Position3(0, 1500, 1000), fast_radio)
        db = build_fingerprints([s])
        with pytest.raises(ValueError):
            knn_locate(db, s, k=0)
        with pytest.raises(ValueError):
            knn_locate(db, s, k=2)

    def test_empty_db_rejected(self, fast_radio, ura_small):
        s = los_channel(ura_small, Position3(0, 1500, 1000), fast_radio)
        with pytest.raises(ValueError):
            knn_locate(build_fingerprints([]), s, k=1)


class TestEvaluateAndLeaveOneOut:
    def test_training_points_have_zero_error(self, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(-20, 1500, 1000), x_extent_mm=40,
                          y_extent_mm=40, resolution_mm=20)
        samples = grid_samples(ura_small, fast_radio, grid)
        db = build_fingerprints(samples)
        report = evaluate_localizer(db, samples, k=1)
        assert report.mean_mm == 0.0
        assert report.median_mm == 0.0

    def test_loo_matches_per_query_oracle(self, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(-25, 1500, 1000), x_extent_mm=50,
                          y_extent_mm=50, resolution_mm=10)
        samples = grid_samples(ura_small, fast_radio, grid)
        db = build_fingerprints(samples)
        report = leave_one_out_report(db, k=4)
        for i in (0, 9, 23, 35):
            keep = [j for j in range(len(db)) if j != i]
            reduced = FingerprintDb(db.features[keep], db.labels_mm[keep], db.config)
            est = knn_locate(reduced, samples[i], k=4)
            assert est.distance_mm(samples[i].label) == pytest.approx(report.errors_mm[i], abs=1e-9)

    def test_loo_interior_errors_within_one_grid_step_diagonal(self, radio, ura):
        # noiseless 5 mm patch: interior estimates stay within one diagonal;
        # perimeter nodes extrapolate and may exceed it
        grid = SampleGrid(origin=Position3(-25, 1500, 1000), x_extent_mm=50,
                          y_extent_mm=50, resolution_mm=5)
        samples = grid_samples(ura, radio, grid)
        db = build_fingerprints(samples)
        report = leave_one_out_report(db, k=4)
        diagonal = 5 * math.sqrt(2)
        errs = report.errors_mm.reshape(grid.ny, grid.nx)
        assert np.all(errs[1:-1, 1:-1] <= diagonal)
        assert report.mean_mm <= diagonal

    def test_da_noisy_regression_baseline(self, radio):
        da = build_topology("da")
        grid = SampleGrid(origin=Position3(-50.0, 2000.0, 1000.0),
                          x_extent_mm=100.0, y_extent_mm=100.0, resolution_mm=10.0)
        train = grid_samples(da, radio, grid)
        db = build_fingerprints(train, topology="da")
        queries = [add_noise(s, NoiseSpec(20.0, seed=4242 + i)) for i, s in enumerate(train)]
        report = evaluate_localizer(db, queries, k=5)
        assert report.mean_mm == pytest.approx(DA_20DB_MEAN_BASELINE_MM, rel=0.10)

    def test_empty_test_set_rejected(self, fast_radio, ura_small):
        s = los_channel(ura_small, Position3(0, 1500, 1000), fast_radio)
        db = build_fingerprints([s])
        with pytest.raises(ValueError):
            evaluate_localizer(db, [], k=1)

    def test_report_csv(self, tmp_path):
        report = LocalizationReport.from_errors([1.5, 0.0, 3.25], ["aaaaaa", "bbbbbb", "cccccc"])
        path = tmp_path / "report.csv"
        report_to_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "sample_id,err_mm"
        assert lines[1] == "aaaaaa,1.5"
        assert len(lines) == 4


class TestPersistence:
    def test_roundtrip(self, fast_radio, ura_small, tmp_path):
        grid = SampleGrid(origin=Position3(-20, 1500, 1000), x_extent_mm=40,
                          y_extent_mm=40, resolution_mm=20)
        db = build_fingerprints(grid_samples(ura_small, fast_radio, grid), topology="ura")
        path = tmp_path / "db.fpdb"
        save_fingerprints(db, path)
        loaded = load_fingerprints(path)
        assert np.array_equal(loaded.features, db.features)
        assert np.array_equal(loaded.labels_mm, db.labels_mm)
        assert loaded.config == db.config
        assert loaded.topology == "ura"

    def test_loaded_db_locates_identically(self, fast_radio, ura_small, tmp_path):
        grid = SampleGrid(origin=Position3(-20, 1500, 1000), x_extent_mm=40,
                          y_extent_mm=40, resolution_mm=10)
        samples = grid_samples(ura_small, fast_radio, grid)
        db = build_fingerprints(samples)
        path = tmp_path / "db.fpdb"
        save_fingerprints(db, path)
        loaded = load_fingerprints(path)
        query = add_noise(samples[3], NoiseSpec(15.0, seed=5))
        assert knn_locate(loaded, query, k=3) == knn_locate(db, query, k=3)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "db.fpdb"
        path.write_bytes(b"JUNK" + bytes(20))
        with pytest.raises(BadMagicError):
            load_fingerprints(path)
