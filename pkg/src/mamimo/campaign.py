"""Automated measurement-campaign simulation.

The moving parts mirror a real channel-sounding rig: xy-positioner tables
speaking a tiny G-code-style text protocol, a TCP capture service at the
base station that snapshots one CSI sample per 6-byte trigger and writes it
to disk, and a campaign runner that drives up to four positioners over
their grids round-robin, one in-flight trigger at a time. Runner and
capture service communicate only through the TCP trigger contract, so the
service can live in another thread or another process.

Timing is injectable: the default simulated clock makes a full campaign
instant while keeping the bookkeeping (dwell per node, average step time)
exact; a wall clock reproduces real pacing.
"""

from __future__ import annotations

import re
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import channel as chan
from .dataio import DatasetIndex, SampleRecord, save_index, write_sample
from .geometry import default_positioner_grids, grid_positions
from .model import (
    ArrayGeometry,
    CsiSample,
    Position3,
    RadioConfig,
    SAMPLE_ID_PATTERN,
    SampleGrid,
    Traversal,
)

ACK = b"\x06"
NAK = b"\x15"

#: Worst-case positioning error of the real tables, millimetres.
ACCURACY_BOUND_MM = 0.1

_MOVE_RE = re.compile(r"^G0\s+X(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s+Y(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)$")


class CampaignError(Exception):
    """A waypoint failed; the message identifies positioner and node."""


@dataclass(frozen=True, slots=True)
class TriggerMessage:
    """Exactly six bytes of [0-9A-Za-z_-]; doubles as the sample filename."""

    payload: str

    def __post_init__(self):
        if not SAMPLE_ID_PATTERN.match(self.payload):
            raise ValueError(f"trigger payload must be 6 chars of [0-9A-Za-z_-], got {self.payload!r}")

    def to_bytes(self) -> bytes:
        return self.payload.encode("ascii")


class SimulatedClock:
    """Instant clock: sleeping just advances the reading."""

    def __init__(self):
        self.now_s = 0.0

    def sleep(self, seconds: float) -> None:
        self.now_s += seconds


class WallClock:
    def __init__(self):
        self._t0 = time.monotonic()

    @property
    def now_s(self) -> float:
        return time.monotonic() - self._t0

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


# ---------------------------------------------------------------------------
# traversal planning
# ---------------------------------------------------------------------------

@dataclass
class CampaignPlan:
    """Waypoint lists (one per positioner slot) plus timing parameters."""

    waypoints: list[list[Position3]]
    grids: list[SampleGrid]
    dwell_s: float = 0.5
    step_s: float = 0.7

    def __post_init__(self):
        if self.dwell_s < 0 or self.step_s < 0:
            raise ValueError("dwell and step times must be nonnegative")
        if len(self.waypoints) != len(self.grids):
            raise ValueError("one waypoint list per grid required")
        if len(self.grids) > 4:
            raise ValueError("at most 4 positioners are supported")
        for wps, grid in zip(self.waypoints, self.grids):
            ox, oy = grid.origin.x, grid.origin.y
            x_hi, y_hi = ox + grid.x_extent_mm, oy + grid.y_extent_mm
            for p in wps:
                if not (ox <= p.x <= x_hi and oy <= p.y <= y_hi):
                    raise ValueError(
                        f"waypoint ({p.x}, {p.y}) outside positioner {grid.positioner_id} work area"
                    )

    @property
    def total_waypoints(self) -> int:
        return sum(len(w) for w in self.waypoints)

    @property
    def waypoints_per_positioner(self) -> list[int]:
        return [len(w) for w in self.waypoints]

    @property
    def duration_estimate_s(self) -> float:
        # positioners run concurrently; the longest traversal sets the pace
        longest = max((len(w) for w in self.waypoints), default=0)
        return longest * self.step_s

    def slot_schedule(self) -> list[int]:
        """Positioner slot used by the n-th trigger, in round-robin order."""
        longest = max((len(w) for w in self.waypoints), default=0)
        return [slot
                for step in range(longest)
                for slot, wps in enumerate(self.waypoints)
                if step < len(wps)]


def plan_traversal(grid: SampleGrid, pattern: Traversal = Traversal.SERPENTINE,
                   dwell_s: float = 0.5, step_s: float = 0.7) -> CampaignPlan:
    """Plan a scan of one positioner grid, visiting every node exactly once."""
    return CampaignPlan(waypoints=[grid_positions(grid, pattern)], grids=[grid],
                        dwell_s=dwell_s, step_s=step_s)


def plan_full_campaign(grids, pattern: Traversal = Traversal.SERPENTINE,
                       dwell_s: float = 0.5, step_s: float = 0.7) -> CampaignPlan:
    """Plan a scan of several positioner grids driven in the same run."""
    grids = list(grids)
    return CampaignPlan(waypoints=[grid_positions(g, pattern) for g in grids],
                        grids=grids, dwell_s=dwell_s, step_s=step_s)


def default_campaign_plan(pattern: Traversal = Traversal.SERPENTINE) -> CampaignPlan:
    """The full four-positioner dense scan at 5 mm resolution."""
    return plan_full_campaign(default_positioner_grids(), pattern)


# ---------------------------------------------------------------------------
# virtual positioner and its text protocol
# ---------------------------------------------------------------------------

class VirtualPositioner:
    """A positioner table driven by a G-code-style line protocol.

    Commands (LF-terminated ASCII): ``G28`` homes to (0, 0); ``G0 X<mm>
    Y<mm>`` moves within the work area. Replies are ``ok``, ``error:parse``,
    ``error:unhomed`` or ``error:bounds``, each LF-terminated. Coordinates
    are local to the table. An optional error injector (bounded by the real
    tables' 0.1 mm accuracy) perturbs the physical position while the
    commanded position stays exact.
    """

    def __init__(self, x_extent_mm: float = 1250.0, y_extent_mm: float = 1250.0,
                 max_error_mm: float = 0.0, seed: int = 0):
        if max_error_mm < 0 or max_error_mm > ACCURACY_BOUND_MM:
            raise ValueError(f"max_error_mm must be in [0, {ACCURACY_BOUND_MM}]")
        self.x_extent_mm = x_extent_mm
        self.y_extent_mm = y_extent_mm
        self.max_error_mm = max_error_mm
        self.homed = False
        self.position_mm = (0.0, 0.0)  # commanded, local frame
        self._jitter = (0.0, 0.0)
        self._rng = np.random.default_rng(seed)

    @property
    def actual_position_mm(self) -> tuple[float, float]:
        """Physical position: commanded plus the injected error, if any."""
        return (self.position_mm[0] + self._jitter[0], self.position_mm[1] + self._jitter[1])

    def _draw_jitter(self):
        if self.max_error_mm == 0.0:
            self._jitter = (0.0, 0.0)
        else:
            e = self._rng.uniform(-self.max_error_mm, self.max_error_mm, size=2)
            self._jitter = (float(e[0]), float(e[1]))

    def execute(self, command: str) -> str:
        line = command.rstrip("\r\n").strip()
        if line == "G28":
            self.position_mm = (0.0, 0.0)
            self.homed = True
            self._draw_jitter()
            return "ok\n"
        match = _MOVE_RE.match(line)
        if match is None:
            return "error:parse\n"
        if not self.homed:
            return "error:unhomed\n"
        x, y = float(match.group(1)), float(match.group(2))
        if not (0.0 <= x <= self.x_extent_mm and 0.0 <= y <= self.y_extent_mm):
            return "error:bounds\n"
        self.position_mm = (x, y)
        self._draw_jitter()
        return "ok\n"


class PositionerServer:
    """Serve one VirtualPositioner's text protocol over TCP, line by line."""

    def __init__(self, positioner: VirtualPositioner, address=("127.0.0.1", 0)):
        self.positioner = positioner
        self._listener = socket.create_server(address)
        self._listener.settimeout(0.05)
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def _serve(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                conn.settimeout(5.0)
                buf = b""
                try:
                    while not self._stop.is_set():
                        data = conn.recv(1024)
                        if not data:
                            break
                        buf += data
                        while b"\n" in buf:
                            line, buf = buf.split(b"\n", 1)
                            reply = self.positioner.execute(line.decode("ascii", errors="replace"))
                            conn.sendall(reply.encode("ascii"))
                except OSError:
                    pass

    def start(self) -> "PositionerServer":
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self._listener.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class TcpPositioner:
    """Client-side driver: same execute() surface as VirtualPositioner."""

    def __init__(self, address, timeout: float = 5.0):
        self.address = tuple(address)
        self.timeout = timeout

    def execute(self, command: str) -> str:
        if not command.endswith("\n"):
            command += "\n"
        with socket.create_connection(self.address, timeout=self.timeout) as sock:
            sock.sendall(command.encode("ascii"))
            reply = b""
            while not reply.endswith(b"\n"):
                data = sock.recv(64)
                if not data:
                    break
                reply += data
        return reply.decode("ascii")


# ---------------------------------------------------------------------------
# capture service and trigger client
# ---------------------------------------------------------------------------

class TriggerResult:
    ACK = "ack"
    NAK = "nak"
    TIMEOUT = "timeout"


class CaptureService:
    """TCP capture trigger service.

    Per connection: read exactly 6 bytes, validate the charset, snapshot the
    current CSI from ``channel_source`` (a zero-argument callable), write it
    atomically to ``<out_dir>/<payload>.bin`` and reply one ACK byte (0x06);
    any failure replies NAK (0x15) and leaves no file behind. Connections
    are handled strictly one at a time, in arrival order.
    """

    def __init__(self, out_dir, channel_source, address=("127.0.0.1", 0)):
        self.out_dir = out_dir
        self.channel_source = channel_source
        self._listener = socket.create_server(address)
        self._listener.settimeout(0.05)
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.captures = 0
        self.rejects = 0

    def _handle(self, conn: socket.socket):
        with conn:
            conn.settimeout(5.0)
            payload = b""
            try:
                while len(payload) < 6:
                    data = conn.recv(6 - len(payload))
                    if not data:
                        return  # client went away mid-payload
                    payload += data
            except OSError:
                return
            try:
                text = payload.decode("ascii")
                if not SAMPLE_ID_PATTERN.match(text):
                    raise ValueError(f"invalid trigger payload {payload!r}")
                sample = self.channel_source()
                sample = CsiSample(sample.h, label=sample.label,
                                   user_id=sample.user_id, sample_id=text)
                write_sample(Path(self.out_dir) / f"{text}.bin", sample)
            except Exception:
                self.rejects += 1
                try:
                    conn.sendall(NAK)
                except OSError:
                    pass
                return
            self.captures += 1
            try:
                conn.sendall(ACK)
            except OSError:
                pass

    def _serve(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            self._handle(conn)

    def start(self) -> "CaptureService":
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        """Blocking variant for standalone use; returns on KeyboardInterrupt."""
        try:
            self._serve()
        except KeyboardInterrupt:
            pass

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self._listener.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def trigger_capture(address, payload, timeout: float = 5.0) -> str:
    """One trigger round trip; returns TriggerResult.ACK / NAK / TIMEOUT.

    The payload is validated client-side before anything is sent. A closed
    port raises the usual connection error. Re-triggering the same payload
    overwrites the sample file atomically on the service side.
    """
    message = payload if isinstance(payload, TriggerMessage) else TriggerMessage(payload)
    try:
        with socket.create_connection(tuple(address), timeout=timeout) as sock:
            sock.settimeout(timeout)
            sock.sendall(message.to_bytes())
            reply = sock.recv(1)
    except socket.timeout:
        return TriggerResult.TIMEOUT
    if reply == ACK:
        return TriggerResult.ACK
    return TriggerResult.NAK


# ---------------------------------------------------------------------------
# synthetic channel source and the campaign runner
# ---------------------------------------------------------------------------

class SyntheticChannelSource:
    """Generates the CSI the base station would measure at trigger time.

    The channel is computed from the physical (error-injected) position of
    the positioner that the trigger sequence points at; the trigger order
    comes from the plan's round-robin slot schedule, which the runner
    follows deterministically. Noise, when enabled, is seeded per trigger
    so a rerun of the same campaign reproduces the dataset bit for bit.
    """

    def __init__(self, geometry: ArrayGeometry, radio: RadioConfig,
                 cfg: chan.ChannelConfig, positioners, grids, slot_schedule,
                 user_ids, scatterers=(), snr_db: float = float("inf"), seed: int = 0):
        self.geometry = geometry
        self.radio = radio
        self.cfg = cfg
        self.positioners = list(positioners)
        self.grids = list(grids)
        self.slot_schedule = list(slot_schedule)
        self.user_ids = list(user_ids)
        self.scatterers = list(scatterers)
        self.snr_db = snr_db
        self.seed = seed
        self._counter = 0

    def __call__(self) -> CsiSample:
        if self._counter >= len(self.slot_schedule):
            raise RuntimeError("more triggers than planned waypoints")
        slot = self.slot_schedule[self._counter]
        grid = self.grids[slot]
        lx, ly = self.positioners[slot].actual_position_mm
        pos = Position3(grid.origin.x + lx, grid.origin.y + ly, grid.origin.z)
        user_id = self.user_ids[slot]
        if self.scatterers:
            sample = chan.multipath_channel(self.geometry, pos, self.radio, self.cfg,
                                            self.scatterers, user_id=user_id)
        else:
            sample = chan.los_channel(self.geometry, pos, self.radio, self.cfg,
                                      user_id=user_id)
        sample = chan.add_noise(sample, chan.NoiseSpec(self.snr_db, self.seed + self._counter))
        self._counter += 1
        return sample


def run_campaign(plan: CampaignPlan, positioners, capture_address, out_dir,
                 topology: str = "", radio: RadioConfig | None = None,
                 user_ids=None, clock=None, timeout: float = 5.0,
                 index_name: str = "index.csv") -> DatasetIndex:
    """Drive the positioners over the plan, triggering one capture per node.

    ``positioners`` are objects with the text-protocol ``execute`` surface
    (in-process tables or TCP drivers), one per plan slot; the capture
    service is reached only through its TCP address. Sample ids are a
    zero-padded decimal counter over the whole run. Index labels are the
    commanded waypoint coordinates. Any positioner error or NAK aborts with
    the failing waypoint identified.
    """
    positioners = list(positioners)
    if len(positioners) != len(plan.waypoints):
        raise ValueError("one positioner per plan slot required")
    if user_ids is None:
        user_ids = list(range(len(positioners)))
    if clock is None:
        clock = SimulatedClock()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for slot, positioner in enumerate(positioners):
        reply = positioner.execute("G28\n")
        if reply != "ok\n":
            raise CampaignError(f"positioner {slot} failed to home: {reply.strip()!r}")

    records: list[SampleRecord] = []
    counter = 0
    longest = max((len(w) for w in plan.waypoints), default=0)
    for step in range(longest):
        active = [slot for slot, wps in enumerate(plan.waypoints) if step < len(wps)]
        # all positioners move to this step's node concurrently ...
        for slot in active:
            target = plan.waypoints[slot][step]
            grid = plan.grids[slot]
            lx, ly = target.x - grid.origin.x, target.y - grid.origin.y
            reply = positioners[slot].execute(f"G0 X{lx!r} Y{ly!r}\n")
            if reply != "ok\n":
                raise CampaignError(
                    f"positioner {slot} rejected waypoint {step} ({target.x}, {target.y}): "
                    f"{reply.strip()!r}"
                )
        # ... then everyone dwells while the captures are triggered in slot order
        clock.sleep(plan.dwell_s)
        for slot in active:
            target = plan.waypoints[slot][step]
            sample_id = f"{counter:06d}"
            result = trigger_capture(capture_address, sample_id, timeout=timeout)
            if result != TriggerResult.ACK:
                raise CampaignError(
                    f"capture trigger {sample_id} for positioner {slot} waypoint {step} "
                    f"returned {result}"
                )
            records.append(SampleRecord(sample_id, out_dir / f"{sample_id}.bin",
                                        target, user_ids[slot]))
            counter += 1
        clock.sleep(max(plan.step_s - plan.dwell_s, 0.0))

    index = DatasetIndex(records=records, topology=topology, radio=radio)
    save_index(out_dir / index_name, index)
    return index


def simulate_campaign(plan: CampaignPlan, geometry: ArrayGeometry, radio: RadioConfig,
                      out_dir, cfg: chan.ChannelConfig | None = None,
                      topology: str = "", scatterers=(), snr_db: float = float("inf"),
                      seed: int = 0, positioner_error_mm: float = 0.0,
                      user_ids=None, clock=None,
                      capture_address=("127.0.0.1", 0),
                      positioner_address=None) -> DatasetIndex:
    """End-to-end simulated campaign: positioners, capture service, runner.

    Spins up an in-process capture service bound to a synthetic channel
    source, drives the plan through it over real TCP and returns the dataset
    index (also written as ``index.csv`` beside the sample files). When
    ``positioner_address`` is given, the virtual tables are additionally
    exposed over TCP (one server per table on consecutive ports, port 0
    picks free ones) and the runner drives them through that protocol too.
    """
    if cfg is None:
        cfg = chan.ChannelConfig()
    if user_ids is None:
        user_ids = list(range(len(plan.grids)))
    positioners = [
        VirtualPositioner(g.x_extent_mm, g.y_extent_mm,
                          max_error_mm=positioner_error_mm, seed=seed + 1000 + i)
        for i, g in enumerate(plan.grids)
    ]
    source = SyntheticChannelSource(geometry, radio, cfg, positioners, plan.grids,
                                    plan.slot_schedule(), user_ids,
                                    scatterers=scatterers, snr_db=snr_db, seed=seed)
    servers: list[PositionerServer] = []
    drivers = positioners
    try:
        if positioner_address is not None:
            host, base_port = positioner_address
            for i, table in enumerate(positioners):
                port = base_port + i if base_port else 0
                servers.append(PositionerServer(table, (host, port)).start())
            drivers = [TcpPositioner(s.address) for s in servers]
        with CaptureService(out_dir, source, address=capture_address) as service:
            return run_campaign(plan, drivers, service.address, out_dir,
                                topology=topology, radio=radio, user_ids=user_ids,
                                clock=clock)
    finally:
        for server in servers:
            server.stop()
