import socket
import threading

import numpy as np
import pytest

from mamimo.campaign import (
    NAK,
    CampaignError,
    CampaignPlan,
    CaptureService,
    PositionerServer,
    SimulatedClock,
    TcpPositioner,
    TriggerMessage,
    TriggerResult,
    VirtualPositioner,
    default_campaign_plan,
    plan_full_campaign,
    plan_traversal,
    run_campaign,
    simulate_campaign,
    trigger_capture,
)
from mamimo.channel import los_channel
from mamimo.dataio import load_index, read_sample
from mamimo.geometry import default_positioner_grids
from mamimo.model import Position3, SampleGrid, Traversal


@pytest.fixture()
def fixed_source(fast_radio, ura_small):
    sample = los_channel(ura_small, Position3(0.0, 1500.0, 1000.0), fast_radio)
    return lambda: sample


class TestPlanning:
    def test_default_grid_counts_and_duration(self):
        grid = SampleGrid()
        plan = plan_traversal(grid)
        assert plan.waypoints_per_positioner == [63001]
        assert plan.duration_estimate_s == pytest.approx(63001 * 0.7)
        hours = plan.duration_estimate_s / 3600.0
        assert abs(hours - 12.5) / 12.5 < 0.05

    def test_full_campaign_counts(self):
        plan = default_campaign_plan()
        assert plan.waypoints_per_positioner == [63001] * 4
        assert plan.total_waypoints == 252004
        assert plan.duration_estimate_s == pytest.approx(63001 * 0.7)

    def test_serpentine_two_by_two_order(self):
        grid = SampleGrid(x_extent_mm=1, y_extent_mm=1, resolution_mm=1)
        plan = plan_traversal(grid, Traversal.SERPENTINE)
        assert [(p.x, p.y) for p in plan.waypoints[0]] == [(0, 0), (1, 0), (1, 1), (0, 1)]

    def test_raster_and_serpentine_same_nodes(self):
        grid = SampleGrid(x_extent_mm=15, y_extent_mm=10, resolution_mm=5)
        a = plan_traversal(grid, Traversal.RASTER)
        b = plan_traversal(grid, Traversal.SERPENTINE)
        assert set(a.waypoints[0]) == set(b.waypoints[0])

    def test_waypoint_outside_work_area_rejected(self):
        grid = SampleGrid(x_extent_mm=10, y_extent_mm=10)
        with pytest.raises(ValueError):
            CampaignPlan(waypoints=[[Position3(50.0, 0.0, 0.0)]], grids=[grid])

    def test_negative_timing_rejected(self):
        grid = SampleGrid(x_extent_mm=0, y_extent_mm=0)
        with pytest.raises(ValueError):
            plan_traversal(grid, dwell_s=-0.1)

    def test_at_most_four_positioners(self):
        grids = default_positioner_grids(extent_mm=10.0)
        with pytest.raises(ValueError):
            plan_full_campaign(grids + [SampleGrid(x_extent_mm=10, y_extent_mm=10)])

    def test_slot_schedule_round_robin(self):
        g = SampleGrid(x_extent_mm=5, y_extent_mm=0, resolution_mm=5)  # 2 nodes
        g1 = SampleGrid(x_extent_mm=0, y_extent_mm=0)  # 1 node
        plan = plan_full_campaign([g, g1])
        assert plan.slot_schedule() == [0, 1, 0]


class TestVirtualPositioner:
    def test_home_then_move(self):
        p = VirtualPositioner()
        assert p.execute("G28\n") == "ok\n"
        assert p.execute("G0 X100 Y200\n") == "ok\n"
        assert p.position_mm == (100.0, 200.0)

    def test_bounds_rejected_state_unchanged(self):
        p = VirtualPositioner(x_extent_mm=1250.0, y_extent_mm=1250.0)
        p.execute("G28\n")
        p.execute("G0 X10 Y10\n")
        assert p.execute("G0 X2000 Y0\n") == "error:bounds\n"
        assert p.position_mm == (10.0, 10.0)

    def test_parse_error(self):
        p = VirtualPositioner()
        assert p.execute("MOVE 1 2\n") == "error:parse\n"

    def test_unhomed_move_rejected(self):
        p = VirtualPositioner()
        assert p.execute("G0 X1 Y1\n") == "error:unhomed\n"

    def test_float_coordinates(self):
        p = VirtualPositioner()
        p.execute("G28\n")
        assert p.execute("G0 X12.5 Y0.25\n") == "ok\n"
        assert p.position_mm == (12.5, 0.25)

    def test_error_injection_bounded_and_seeded(self):
        a = VirtualPositioner(max_error_mm=0.1, seed=7)
        b = VirtualPositioner(max_error_mm=0.1, seed=7)
        for pos in (a, b):
            pos.execute("G28\n")
            pos.execute("G0 X100 Y100\n")
        assert a.actual_position_mm == b.actual_position_mm
        assert abs(a.actual_position_mm[0] - 100.0) <= 0.1
        assert abs(a.actual_position_mm[1] - 100.0) <= 0.1
        assert a.position_mm == (100.0, 100.0)  # commanded stays exact

    def test_injector_bound_capped(self):
        with pytest.raises(ValueError):
            VirtualPositioner(max_error_mm=0.2)


class TestTriggerMessage:
    def test_short_payload_rejected_before_send(self):
        with pytest.raises(ValueError):
            TriggerMessage("00042")

    def test_bad_charset_rejected(self):
        with pytest.raises(ValueError):
            TriggerMessage("00/042")

    def test_six_bytes(self):
        assert TriggerMessage("00Az_-").to_bytes() == b"00Az_-"


class TestCaptureService:
    def test_valid_trigger_writes_file_and_acks(self, tmp_path, fixed_source):
        with CaptureService(tmp_path, fixed_source) as service:
            assert trigger_capture(service.address, "000042") == TriggerResult.ACK
        assert (tmp_path / "000042.bin").exists()
        sample = read_sample(tmp_path / "000042.bin")
        assert sample.sample_id == "000042"

    def test_invalid_charset_naks_without_file(self, tmp_path, fixed_source):
        with CaptureService(tmp_path, fixed_source) as service:
            with socket.create_connection(service.address, timeout=5.0) as sock:
                sock.sendall(b"00/042")
                assert sock.recv(1) == NAK
        assert list(tmp_path.iterdir()) == []

    def test_failing_source_naks(self, tmp_path):
        def broken():
            raise RuntimeError("radio offline")

        with CaptureService(tmp_path, broken) as service:
            assert trigger_capture(service.address, "000000") == TriggerResult.NAK
        assert list(tmp_path.iterdir()) == []

    def test_write_failure_naks_and_leaves_nothing(self, tmp_path, fixed_source):
        blocker = tmp_path / "out"
        blocker.write_text("not a directory")
        with CaptureService(blocker, fixed_source) as service:
            assert trigger_capture(service.address, "000000") == TriggerResult.NAK
        assert blocker.read_text() == "not a directory"

    def test_sequential_triggers_in_order(self, tmp_path, fixed_source):
        with CaptureService(tmp_path, fixed_source) as service:
            for i in range(25):
                assert trigger_capture(service.address, f"{i:06d}") == TriggerResult.ACK
            assert service.captures == 25
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == [f"{i:06d}.bin" for i in range(25)]

    def test_retrigger_overwrites_atomically(self, tmp_path, fast_radio, ura_small):
        samples = iter([
            los_channel(ura_small, Position3(0.0, 1500.0, 1000.0), fast_radio),
            los_channel(ura_small, Position3(10.0, 1500.0, 1000.0), fast_radio),
        ])
        with CaptureService(tmp_path, lambda: next(samples)) as service:
            trigger_capture(service.address, "000001")
            first = (tmp_path / "000001.bin").read_bytes()
            trigger_capture(service.address, "000001")
            second = (tmp_path / "000001.bin").read_bytes()
        assert first != second
        assert [p.name for p in tmp_path.iterdir()] == ["000001.bin"]

    def test_connection_refused_on_closed_port(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        addr = probe.getsockname()
        probe.close()
        with pytest.raises(OSError):
            trigger_capture(addr, "000000", timeout=2.0)

    def test_timeout_when_server_never_replies(self, tmp_path):
        listener = socket.create_server(("127.0.0.1", 0))
        done = threading.Event()

        def mute_server():
            conn, _ = listener.accept()
            conn.recv(6)
            done.wait(2.0)  # hold the connection open, never reply
            conn.close()

        thread = threading.Thread(target=mute_server, daemon=True)
        thread.start()
        try:
            result = trigger_capture(listener.getsockname(), "000000", timeout=0.3)
            assert result == TriggerResult.TIMEOUT
        finally:
            done.set()
            thread.join()
            listener.close()


class TestRunCampaign:
    def test_five_by_five_end_to_end(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(-10.0, 1500.0, 1000.0),
                          x_extent_mm=20.0, y_extent_mm=20.0, resolution_mm=5.0)
        plan = plan_traversal(grid)
        index = simulate_campaign(plan, ura_small, fast_radio, tmp_path, topology="ura")
        assert len(index) == 25
        files = sorted(p.name for p in tmp_path.glob("*.bin"))
        assert files == [f"{i:06d}.bin" for i in range(25)]
        # labels equal the commanded waypoints exactly, in traversal order
        assert [r.label for r in index.records] == plan.waypoints[0]
        loaded = load_index(tmp_path / "index.csv")
        assert [r.label for r in loaded.records] == plan.waypoints[0]
        for rec, planned in zip(loaded.records, plan.waypoints[0]):
            sample = read_sample(rec.path, label=rec.label)
            assert sample.n_antennas == 4 and sample.n_subcarriers == 4

    def test_zero_waypoint_plan(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(x_extent_mm=0, y_extent_mm=0)
        plan = CampaignPlan(waypoints=[[]], grids=[grid])
        index = simulate_campaign(plan, ura_small, fast_radio, tmp_path)
        assert len(index) == 0
        assert list(tmp_path.glob("*.bin")) == []

    def test_labels_exact_despite_error_injection(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(0.0, 1500.0, 1000.0),
                          x_extent_mm=10.0, y_extent_mm=10.0, resolution_mm=5.0)
        plan = plan_traversal(grid)
        index = simulate_campaign(plan, ura_small, fast_radio, tmp_path,
                                  positioner_error_mm=0.05, seed=3)
        assert [r.label for r in index.records] == plan.waypoints[0]
        # but the recorded channels come from the jittered physical positions
        clean = tmp_path / "clean"
        clean.mkdir()
        reference = simulate_campaign(plan, ura_small, fast_radio, clean, seed=3)
        a = read_sample(index.records[0].path)
        b = read_sample(reference.records[0].path)
        assert not np.array_equal(a.h, b.h)

    def test_nak_aborts_with_waypoint_identified(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(0.0, 1500.0, 1000.0),
                          x_extent_mm=10.0, y_extent_mm=0.0, resolution_mm=5.0)
        plan = plan_traversal(grid)  # 3 waypoints
        calls = {"n": 0}
        good = los_channel(ura_small, Position3(0.0, 1500.0, 1000.0), fast_radio)

        def flaky():
            calls["n"] += 1
            if calls["n"] == 3:
                raise RuntimeError("capture failed")
            return good

        positioners = [VirtualPositioner(grid.x_extent_mm, grid.y_extent_mm)]
        with CaptureService(tmp_path, flaky) as service:
            with pytest.raises(CampaignError, match="waypoint 2"):
                run_campaign(plan, positioners, service.address, tmp_path)

    def test_multi_positioner_round_robin_users(self, tmp_path, fast_radio, ura_small):
        grids = default_positioner_grids(extent_mm=5.0, resolution_mm=5.0)[:2]
        plan = plan_full_campaign(grids)  # 4 nodes per positioner
        index = simulate_campaign(plan, ura_small, fast_radio, tmp_path, topology="ura")
        assert len(index) == 8
        assert [r.user_id for r in index.records] == [0, 1] * 4
        # slot 0 samples follow grid 0's traversal
        slot0 = [r.label for r in index.records if r.user_id == 0]
        assert slot0 == plan.waypoints[0]

    def test_simulated_clock_duration_is_exact(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(0.0, 1500.0, 1000.0),
                          x_extent_mm=10.0, y_extent_mm=10.0, resolution_mm=5.0)
        plan = plan_traversal(grid, dwell_s=0.5, step_s=0.7)
        clock = SimulatedClock()
        simulate_campaign(plan, ura_small, fast_radio, tmp_path, clock=clock)
        assert clock.now_s == pytest.approx(plan.duration_estimate_s)

    def test_rerun_is_idempotent(self, tmp_path, fast_radio, ura_small):
        grid = SampleGrid(origin=Position3(0.0, 1500.0, 1000.0),
                          x_extent_mm=5.0, y_extent_mm=5.0, resolution_mm=5.0)
        plan = plan_traversal(grid)
        simulate_campaign(plan, ura_small, fast_radio, tmp_path, seed=9)
        snapshot = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        simulate_campaign(plan, ura_small, fast_radio, tmp_path, seed=9)
        again = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
        assert snapshot == again


class TestPositionerOverTcp:
    def test_protocol_roundtrip(self):
        table = VirtualPositioner()
        with PositionerServer(table) as server:
            driver = TcpPositioner(server.address)
            assert driver.execute("G28") == "ok\n"
            assert driver.execute("G0 X12 Y34") == "ok\n"
            assert driver.execute("G0 X9999 Y0") == "error:bounds\n"
        assert table.position_mm == (12.0, 34.0)

    def test_campaign_through_tcp_positioner(self, tmp_path, fixed_source):
        grid = SampleGrid(origin=Position3(0.0, 1500.0, 1000.0),
                          x_extent_mm=5.0, y_extent_mm=0.0, resolution_mm=5.0)
        plan = plan_traversal(grid)
        table = VirtualPositioner(grid.x_extent_mm, grid.y_extent_mm)
        with PositionerServer(table) as pos_server:
            with CaptureService(tmp_path, fixed_source) as service:
                index = run_campaign(plan, [TcpPositioner(pos_server.address)],
                                     service.address, tmp_path)
        assert len(index) == 2
