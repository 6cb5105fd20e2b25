import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamimo.geometry import (
    build_topology,
    default_positioner_grids,
    geometry_from_csv,
    geometry_to_csv,
    grid_positions,
    load_config,
    parse_config_text,
    radio_config_from_mapping,
    topology_from_mapping,
)
from mamimo.model import Position3, SampleGrid, TopologyKind, Traversal


def min_pairwise_distance(points):
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    d[np.diag_indices(len(points))] = np.inf
    return d.min()


class TestBuildTopology:
    def test_ura_defaults(self):
        g = build_topology("ura")
        assert g.n_elements == 64
        assert min_pairwise_distance(g.positions_mm) == pytest.approx(70.0)
        assert np.mean(g.positions_mm[:, 2]) == pytest.approx(1000.0)
        assert np.all(g.positions_mm[:, 1] == 0.0)  # array plane is y = 0

    def test_ula_span(self):
        g = build_topology("ula")
        xs = g.positions_mm[:, 0]
        assert xs.max() - xs.min() == pytest.approx(63 * 70.0)  # 4410 mm centre span

    def test_da_shape(self):
        g = build_topology("da")
        assert g.n_elements == 64
        assert np.all(g.positions_mm[:, 2] == 1000.0)
        # all sub-arrays face the user-area centre (horizontal components)
        assert np.allclose(np.linalg.norm(g.facings, axis=1), 1.0, atol=1e-12)

    def test_da_zero_radius_rejected(self):
        with pytest.raises(ValueError):
            build_topology("da", octagon_radius_mm=0.0)

    def test_nonpositive_spacing_rejected(self):
        with pytest.raises(ValueError):
            build_topology("ura", spacing_mm=0.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            build_topology("hexagon")

    @pytest.mark.parametrize("kind", ["ura", "ula", "da"])
    def test_deterministic_bit_for_bit(self, kind):
        a = build_topology(kind)
        b = build_topology(kind)
        assert np.array_equal(a.positions_mm, b.positions_mm)
        assert np.array_equal(a.facings, b.facings)

    @pytest.mark.parametrize("kind", ["ura", "ula", "da"])
    def test_unit_facings(self, kind):
        g = build_topology(kind)
        assert np.all(np.abs(np.linalg.norm(g.facings, axis=1) - 1.0) <= 1e-12)


class TestGridPositions:
    def test_default_grid_node_count(self):
        assert len(grid_positions(SampleGrid())) == 63001

    def test_degenerate_grid(self):
        g = SampleGrid(origin=Position3(10, 20, 30), x_extent_mm=0, y_extent_mm=0)
        assert grid_positions(g) == [Position3(10, 20, 30)]

    def test_ten_by_five(self):
        g = SampleGrid(x_extent_mm=10, y_extent_mm=10, resolution_mm=5)
        assert len(grid_positions(g)) == 9

    def test_serpentine_two_by_two(self):
        g = SampleGrid(x_extent_mm=1, y_extent_mm=1, resolution_mm=1)
        order = [(p.x, p.y) for p in grid_positions(g, Traversal.SERPENTINE)]
        assert order == [(0, 0), (1, 0), (1, 1), (0, 1)]

    def test_raster_and_serpentine_same_nodes(self):
        g = SampleGrid(x_extent_mm=20, y_extent_mm=15, resolution_mm=5)
        raster = grid_positions(g, Traversal.RASTER)
        serp = grid_positions(g, Traversal.SERPENTINE)
        assert len(raster) == len(serp)
        assert set(raster) == set(serp)
        assert raster != serp

    def test_each_node_once(self):
        g = SampleGrid(x_extent_mm=25, y_extent_mm=10, resolution_mm=5)
        pts = grid_positions(g)
        assert len(set(pts)) == len(pts) == g.node_count

    @given(x_extent=st.floats(0, 200), y_extent=st.floats(0, 200),
           res=st.floats(0.5, 50))
    @settings(max_examples=50, deadline=None)
    def test_count_formula(self, x_extent, y_extent, res):
        g = SampleGrid(x_extent_mm=x_extent, y_extent_mm=y_extent, resolution_mm=res)
        expected = (int(x_extent // res) + 1) * (int(y_extent // res) + 1)
        assert len(grid_positions(g)) == expected


class TestDefaultArrangement:
    def test_number_of_distinct_positions(self):
        grids = default_positioner_grids()
        seen = set()
        for g in grids:
            seen.update((p.x, p.y) for p in grid_positions(g))
        assert len(seen) == 4 * 63001 == 252004

    def test_four_positioners(self):
        grids = default_positioner_grids()
        assert [g.positioner_id for g in grids] == [0, 1, 2, 3]
        assert all(g.node_count == 63001 for g in grids)


class TestConfigFiles:
    def test_parse_key_value(self):
        values = parse_config_text("# comment\ncarrier_hz = 3.5e9\n\nkind = ula # inline\n")
        assert values == {"carrier_hz": "3.5e9", "kind": "ula"}

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config_text("no equals sign here")

    def test_radio_from_mapping(self):
        r = radio_config_from_mapping({"carrier_hz": "3.5e9", "tx_power_dbm": "20"})
        assert r.carrier_hz == 3.5e9
        assert r.tx_power_dbm == 20.0
        assert r.total_subcarriers == 1200  # untouched default

    def test_topology_from_file(self, tmp_path):
        path = tmp_path / "topo.cfg"
        path.write_text("kind = ula\nspacing_mm = 50\n")
        geom = topology_from_mapping(load_config(path))
        assert geom.kind is TopologyKind.ULA
        xs = geom.positions_mm[:, 0]
        assert xs.max() - xs.min() == pytest.approx(63 * 50.0)


class TestCoordinateCsv:
    def test_roundtrip(self, tmp_path):
        g = build_topology("da")
        path = tmp_path / "coords.csv"
        geometry_to_csv(g, path)
        g2 = geometry_from_csv(path, "da")
        assert np.array_equal(g.positions_mm, g2.positions_mm)
        assert np.allclose(g.facings, g2.facings, atol=1e-15)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "coords.csv"
        path.write_text("0,0,0,0,0,1,0\n0,1,1,1,0,1,0\n")
        with pytest.raises(ValueError):
            geometry_from_csv(path)

    def test_rows_sorted_by_element_id(self, tmp_path):
        path = tmp_path / "coords.csv"
        path.write_text("1,10,0,0,0,1,0\n0,20,0,0,0,1,0\n")
        g = geometry_from_csv(path)
        assert g.positions_mm[0, 0] == 20.0
        assert g.positions_mm[1, 0] == 10.0
