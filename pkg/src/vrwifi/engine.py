"""Discrete-event simulation core: virtual clock, event queue, channel
contention between the AP (downlink video) and the client (uplink
controller traffic), and sweep orchestration across seeds.

Events are dispatched in (time, insertion ordinal) order so equal-time
events replay identically; one PCG64 stream per run keeps every run
reproducible and independent of any other.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from vrwifi import mac as mac_mod
from vrwifi import phy as phy_mod
from vrwifi import traffic as traffic_mod
from vrwifi.config import SimConfig, validate_config
from vrwifi.mac import AP, CLIENT, MacStation
from vrwifi.metrics import RunMetrics, TxRecord, ampdu_mark, vf_delay

EV_PKT = "pkt"          # packet handed to a station's transmit buffer
EV_ACCESS = "access"    # a backoff counter is due to expire
EV_END = "end"          # channel becomes idle (exchange or collision over)

SWEEP_AXES = {
    "fps": ("traffic", "fps"),
    "inter_batch_time": ("traffic", "inter_batch_time_ms"),
    "bitrate": ("traffic", "bitrate_bps"),
    "mcs_index": ("phy", "mcs_index"),
    "per": ("mac", "per"),
}


@dataclass
class RunResult:
    config_echo: SimConfig
    seed: int
    metrics: RunMetrics
    frames: list | None = None   # populated when keep_packets is requested


class _BufferTracker:
    """Time-weighted AP queue integrals, clipped to the measured window.

    A packet counts as buffered from admission until it is delivered or
    dropped; packets inside an in-flight A-MPDU still occupy the buffer.
    """

    def __init__(self, warmup_us: float, duration_us: float):
        self.warmup_us = warmup_us
        self.duration_us = duration_us
        self.last_t = 0.0
        self.qlen = 0
        self.level_integral = 0.0
        self.busy_us = 0.0

    def advance(self, now: float, new_qlen: int | None = None) -> None:
        a = max(self.last_t, self.warmup_us)
        b = min(now, self.duration_us)
        if b > a:
            self.level_integral += self.qlen * (b - a)
            if self.qlen > 0:
                self.busy_us += b - a
        self.last_t = now
        if new_qlen is not None:
            self.qlen = new_qlen


class _Sim:
    def __init__(self, cfg: SimConfig, seed: int, keep_packets: bool):
        self.cfg = cfg
        self.keep_packets = keep_packets
        self.rng = np.random.default_rng(seed)
        self.duration_us = cfg.duration_s * 1e6
        self.warmup_us = min(cfg.warmup_ms * 1e3, self.duration_us)
        self.now = 0.0
        self.ordinal = 0
        self.events: list = []
        self.epoch = 0
        self.busy = False
        self.in_flight = None   # (station, ampdu) or "collision"
        self.stations = {
            AP: mac_mod.make_station(AP, cfg.mac),
            CLIENT: mac_mod.make_station(CLIENT, cfg.mac),
        }
        self.metrics = RunMetrics(duration_us=self.duration_us,
                                  warmup_us=self.warmup_us,
                                  buffer_capacity=cfg.mac.ap_buffer)
        self.tracker = _BufferTracker(self.warmup_us, self.duration_us)
        self.ap_outstanding = 0
        self.drawn = {AP: -1, CLIENT: -1}
        # pre-computed timing constants
        m = cfg.mac
        self.slot = m.slot_us
        self.aifs = m.aifs_us
        self.back_air = phy_mod.back_airtime(cfg.phy)
        self.collision_busy = (phy_mod.rts_airtime(cfg.phy) + m.sifs_us
                               + phy_mod.cts_airtime(cfg.phy))

    # -- event queue ----------------------------------------------------

    def push(self, time_us: float, kind: str, payload) -> None:
        assert time_us >= self.now - 1e-6, "event scheduled in the past"
        heapq.heappush(self.events, (time_us, self.ordinal, kind, payload))
        self.ordinal += 1

    # -- contention -----------------------------------------------------

    def access_time(self, st: MacStation) -> float:
        return st.aifs_end_us + st.slots_left * self.slot

    def resolve(self) -> None:
        """(Re)arm the earliest pending backoff expiry while idle."""
        if self.busy:
            return
        best = None
        for st in self.stations.values():
            if not st.backlogged():
                continue
            if st.aifs_end_us is None:
                st.aifs_end_us = self.now + self.aifs
            if st.slots_left is None:
                if self.cfg.mac.cw_policy == "retry":
                    st.cw = mac_mod.cw_for_retry(st, st.buffer[0].retx_count)
                st.slots_left = mac_mod.draw_backoff(st, self.rng)
                self.drawn[st.role] = st.slots_left
                st.snapshot_len = len(st.buffer)
            t = self.access_time(st)
            if best is None or t < best:
                best = t
        if best is not None:
            self.epoch += 1
            self.push(best, EV_ACCESS, self.epoch)

    def freeze_loser(self, st: MacStation, tx_start: float) -> None:
        """Consume the slots a deferring station counted down before the
        channel went busy; it re-runs AIFS when the channel clears."""
        if st.aifs_end_us is None or st.slots_left is None:
            return
        elapsed = tx_start - st.aifs_end_us
        if elapsed > 0:
            st.slots_left = max(0, st.slots_left - int(elapsed / self.slot + 1e-9))
        st.aifs_end_us = None

    # -- channel accounting ----------------------------------------------

    def add_airtime(self, start: float, end: float) -> None:
        a, b = max(start, self.warmup_us), min(end, self.duration_us)
        if b > a:
            self.metrics.airtime_busy_us += b - a

    # -- event handlers ---------------------------------------------------

    def on_packet(self, payload) -> None:
        role, pkt = payload
        st = self.stations[role]
        if pkt.stream == traffic_mod.UL_STREAM:
            self.metrics.generated_ul += 1
        else:
            self.metrics.generated_video += 1
        outcome = mac_mod.enqueue(st, pkt, self.now)
        if outcome == "accepted":
            if role == AP:
                self.ap_outstanding += 1
                self.tracker.advance(self.now, self.ap_outstanding)
            self.resolve()

    def on_access(self, epoch_tag: int) -> None:
        if self.busy or epoch_tag != self.epoch:
            return
        winners = [
            st for st in self.stations.values()
            if st.backlogged() and st.aifs_end_us is not None
            and st.slots_left is not None
            and self.access_time(st) == self.now
        ]
        if not winners:
            return
        self.epoch += 1
        if len(winners) > 1:
            if self.cfg.mac.collisions_enabled:
                self.start_collision(winners)
                return
            winners.sort(key=lambda s: 0 if s.role == AP else 1)
        winner = winners[0]
        for st in self.stations.values():
            if st is not winner:
                self.freeze_loser(st, self.now)
        self.start_exchange(winner)

    def start_collision(self, stations: list[MacStation]) -> None:
        for st in stations:
            mac_mod.note_exchange_failure(st)
            st.slots_left = None
            st.aifs_end_us = None
        end = self.now + self.collision_busy
        self.add_airtime(self.now, end)
        if self.now >= self.warmup_us:
            self.metrics.collisions += 1
        self.metrics.tx_log.append(
            TxRecord("collision", self.now, end, 0, -1))
        self.busy = True
        self.in_flight = "collision"
        self.push(end, EV_END, None)

    def start_exchange(self, st: MacStation) -> None:
        limit = st.snapshot_len if self.cfg.mac.ampdu_snapshot else None
        ampdu = mac_mod.assemble_ampdu(st, self.now, self.cfg.mac.max_ampdu,
                                       limit, self.cfg.mac.max_ampdu_bytes)
        if ampdu is None:
            self.resolve()
            return
        if st.role == AP:
            if self.now >= self.warmup_us:
                self.metrics.record_attempt(ampdu)
            else:
                ampdu_mark(ampdu)
        else:
            ampdu_mark(ampdu)   # uplink aggregates stay out of ampdu_sizes
        dur = phy_mod.exchange_airtime(ampdu.total_bytes, len(ampdu),
                                       self.cfg.phy, self.cfg.mac, st.rts_cts)
        ampdu.tx_end_us = self.now + dur
        st.slots_left = None
        st.aifs_end_us = None
        self.add_airtime(self.now, ampdu.tx_end_us)
        self.metrics.tx_log.append(
            TxRecord(st.role, self.now, ampdu.tx_end_us, len(ampdu),
                     self.drawn[st.role]))
        self.busy = True
        self.in_flight = (st, ampdu)
        self.push(ampdu.tx_end_us, EV_END, None)

    def on_end(self) -> None:
        self.busy = False
        flight, self.in_flight = self.in_flight, None
        if flight == "collision":
            self.resolve()
            return
        st, ampdu = flight
        flags = mac_mod.apply_per(ampdu, self.cfg.mac.per, self.rng)
        delivered, requeued, dropped = mac_mod.handle_back(
            st, ampdu, flags, self.cfg.mac.max_retx)
        if st.role == AP and (delivered or dropped):
            self.ap_outstanding -= len(delivered) + len(dropped)
            self.tracker.advance(self.now, self.ap_outstanding)
        if self.cfg.mac.delivery_stamp == "back_end":
            stamp = self.now
        else:
            stamp = self.now - self.cfg.mac.sifs_us - self.back_air
        for pkt in delivered:
            pkt.delivery_time_us = stamp
            if pkt.stream == traffic_mod.UL_STREAM:
                self.metrics.delivered_ul += 1
            else:
                self.metrics.delivered_video += 1
            if pkt.enqueue_time_us >= self.warmup_us:
                self.metrics.record_delivery(pkt, ampdu)
        policy = self.cfg.mac.cw_policy
        if policy != "retry":
            if not delivered:
                mac_mod.note_exchange_failure(st)
            elif policy == "exchange_any" and (requeued or dropped):
                mac_mod.note_exchange_failure(st)
            else:
                mac_mod.note_exchange_success(st)
        self.resolve()

    # -- main loop --------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        frames = traffic_mod.generate_video_frames(
            cfg.traffic, self.rng, cfg.duration_s)
        for emit_us, pkt in traffic_mod.video_packet_emissions(frames, cfg.traffic):
            if emit_us < self.duration_us:
                self.push(emit_us, EV_PKT, (AP, pkt))
        if cfg.traffic.ul_enabled:
            for pkt in traffic_mod.ul_controller_stream(cfg.traffic, cfg.duration_s):
                self.push(pkt.gen_time_us, EV_PKT, (CLIENT, pkt))

        while self.events:
            t, _, kind, payload = heapq.heappop(self.events)
            if t > self.duration_us:
                break
            assert t >= self.now - 1e-6, "virtual clock went backwards"
            self.now = max(self.now, t)
            if kind == EV_PKT:
                self.on_packet(payload)
            elif kind == EV_ACCESS:
                self.on_access(payload)
            else:
                self.on_end()

        self.tracker.advance(self.duration_us)
        self.finalize_frames(frames)
        m = self.metrics
        m.buffer_busy_us = self.tracker.busy_us
        m.buffer_level_integral = self.tracker.level_integral
        m.dropped_retx = sum(s.drops_retx for s in self.stations.values())
        m.dropped_buffer = sum(s.drops_buffer for s in self.stations.values())
        in_flight_count = (len(self.in_flight[1].mpdus)
                           if isinstance(self.in_flight, tuple) else 0)
        m.residual = (sum(len(s.buffer) for s in self.stations.values())
                      + in_flight_count)
        return RunResult(config_echo=cfg, seed=self.seed_echo,
                         metrics=m,
                         frames=frames if self.keep_packets else None)

    def finalize_frames(self, frames) -> None:
        """Frame-level delays for every fully delivered post-warm-up frame."""
        for frame in frames:
            if frame.gen_time_us < self.warmup_us:
                continue
            packets = [p for b in frame.batches for p in b.packets]
            if not packets:
                continue
            try:
                self.metrics.vf_delays_us.append(vf_delay(frame, packets))
            except ValueError:
                self.metrics.incomplete_frames += 1
                continue
            deliveries = [p.delivery_time_us for p in packets]
            self.metrics.assembly_delays_us.append(
                max(deliveries) - min(deliveries))


def run_simulation(cfg: SimConfig, seed: int,
                   keep_packets: bool = False) -> RunResult:
    """Simulate cfg.duration_s of virtual time under one seed."""
    validate_config(cfg)
    sim = _Sim(cfg, seed, keep_packets)
    sim.seed_echo = seed
    return sim.run()


def run_seeds(cfg: SimConfig, seeds: list[int] | None = None,
              jobs: int = 1) -> list[RunResult]:
    """cfg.runs independent runs; run i uses seed cfg.seed + i unless an
    explicit seed list is given."""
    if seeds is None:
        seeds = [cfg.seed + i for i in range(cfg.runs)]
    return _execute([(cfg, s) for s in seeds], jobs)


def set_axis(cfg: SimConfig, axis: str, value) -> SimConfig:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis '{axis}'")
    section, name = SWEEP_AXES[axis]
    inner = dataclasses.replace(getattr(cfg, section), **{name: value})
    return validate_config(dataclasses.replace(cfg, **{section: inner}))


def run_sweep(base: SimConfig, axis: str, values: list, seeds: list[int],
              jobs: int = 1) -> dict:
    """Cartesian product of values x seeds, keyed by (value, seed).

    Every run is independent; execution order (or parallelism) cannot
    change any individual result.
    """
    tasks, keys = [], []
    for value in values:
        cfg = set_axis(base, axis, value)
        for seed in seeds:
            tasks.append((cfg, seed))
            keys.append((value, seed))
    results = _execute(tasks, jobs)
    return dict(zip(keys, results))


def _worker(task) -> RunResult:
    cfg, seed = task
    return run_simulation(cfg, seed)


def _execute(tasks, jobs: int) -> list[RunResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_worker, tasks))
