"""Collection and summarization of per-run statistics: packet and frame
delays, A-MPDU sizes, channel airtime, and buffer occupancy.

Percentiles are nearest-rank (no interpolation) so every implementation
of the same sample set reports identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from vrwifi.mac import Ampdu
from vrwifi.traffic import Packet, VideoFrame, UL_STREAM


@dataclass
class TxRecord:
    """One channel occupation: a data exchange or a collision."""

    role: str            # "ap", "client", or "collision"
    tx_start_us: float
    busy_end_us: float
    n_mpdus: int
    backoff_slots: int   # slots drawn for this access (-1 for collisions)


@dataclass
class RunMetrics:
    duration_us: float = 0.0
    warmup_us: float = 0.0
    # sample sets (all filtered to the post-warm-up window)
    dl_packet_delays_us: list = field(default_factory=list)
    ul_packet_delays_us: list = field(default_factory=list)
    vf_delays_us: list = field(default_factory=list)
    assembly_delays_us: list = field(default_factory=list)
    ampdu_sizes: list = field(default_factory=list)
    # channel / buffer aggregates over the measured window
    airtime_busy_us: float = 0.0
    buffer_busy_us: float = 0.0
    buffer_level_integral: float = 0.0   # integral of AP queue length, us
    buffer_capacity: int = 0
    # whole-run conservation counters (never warm-up filtered)
    generated_video: int = 0
    generated_ul: int = 0
    delivered_video: int = 0
    delivered_ul: int = 0
    dropped_buffer: int = 0
    dropped_retx: int = 0
    residual: int = 0
    incomplete_frames: int = 0
    collisions: int = 0
    tx_log: list = field(default_factory=list)

    @property
    def measured_us(self) -> float:
        return self.duration_us - self.warmup_us

    def record_attempt(self, ampdu: Ampdu) -> None:
        """Sample the A-MPDU size of one transmission attempt
        (retransmission attempts included)."""
        self.ampdu_sizes.append(len(ampdu))
        ampdu_mark(ampdu)

    def record_delivery(self, pkt: Packet, ampdu: Ampdu) -> None:
        """Append the packet's buffer delay; sample the carrying A-MPDU
        once regardless of how many of its MPDUs were delivered."""
        if not ampdu_marked(ampdu):
            self.record_attempt(ampdu)
        delay = pkt.delivery_time_us - pkt.enqueue_time_us
        if pkt.stream == UL_STREAM:
            self.ul_packet_delays_us.append(delay)
        else:
            self.dl_packet_delays_us.append(delay)


def ampdu_mark(ampdu: Ampdu) -> None:
    ampdu.sampled = True


def ampdu_marked(ampdu: Ampdu) -> bool:
    return getattr(ampdu, "sampled", False)


def vf_delay(frame: VideoFrame, packets: list[Packet]) -> float:
    """Frame delivery time in us: from the frame's first packet
    generation to the last packet's delivery.

    Raises ValueError if any packet is undelivered; callers exclude such
    frames and count them instead.
    """
    if any(p.delivery_time_us is None for p in packets):
        raise ValueError(f"frame {frame.frame_id} has undelivered packets")
    last = max(p.delivery_time_us for p in packets)
    first_gen = min(p.gen_time_us for p in packets)
    return last - first_gen


def summarize(samples_us: list) -> dict:
    """Nearest-rank summary: mean, p50, p99, p99.99, min, max."""
    if len(samples_us) == 0:
        raise ValueError("cannot summarize an empty sample list")
    s = sorted(samples_us)
    n = len(s)

    def rank(q):
        return s[max(0, math.ceil(q / 100.0 * n) - 1)]

    # fsum-then-clamp keeps mean inside [min, max] even at 1-ulp edges
    mean = min(max(math.fsum(s) / n, s[0]), s[-1])
    return {
        "mean": mean,
        "p50": rank(50.0),
        "p99": rank(99.0),
        "p99_99": rank(99.99),
        "min": s[0],
        "max": s[-1],
        "count": n,
    }


def ecdf(samples: list) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF evaluated at the sorted samples; probabilities span
    exactly [1/n, 1]."""
    if len(samples) == 0:
        raise ValueError("cannot build an ECDF from no samples")
    xs = np.sort(np.asarray(samples, dtype=float))
    ps = np.arange(1, len(xs) + 1) / len(xs)
    return xs, ps


def airtime_fraction(metrics: RunMetrics, duration_s: float | None = None) -> float:
    """Busy channel time (PPDUs, control frames, and the SIFS gaps inside
    exchanges) divided by the measured duration."""
    window_us = duration_s * 1e6 if duration_s is not None else metrics.measured_us
    if window_us <= 0:
        raise ValueError("duration must be positive")
    return metrics.airtime_busy_us / window_us


def buffer_occupancy(metrics: RunMetrics) -> float:
    """Fraction of measured time the AP transmit buffer is non-empty.

    The companion statistic buffer_mean_level gives the time-weighted
    mean queue length relative to capacity.
    """
    if metrics.measured_us <= 0:
        raise ValueError("no measured time")
    return metrics.buffer_busy_us / metrics.measured_us


def buffer_mean_level(metrics: RunMetrics) -> float:
    """Time-weighted mean AP queue length divided by buffer capacity."""
    if metrics.measured_us <= 0 or metrics.buffer_capacity <= 0:
        raise ValueError("no measured time or capacity")
    return (metrics.buffer_level_integral / metrics.measured_us
            / metrics.buffer_capacity)


def conservation_balance(metrics: RunMetrics) -> tuple[int, int]:
    """(generated, delivered + dropped + residual) over the whole run;
    equal iff no packet was lost track of."""
    generated = metrics.generated_video + metrics.generated_ul
    accounted = (metrics.delivered_video + metrics.delivered_ul
                 + metrics.dropped_buffer + metrics.dropped_retx
                 + metrics.residual)
    return generated, accounted


def metrics_summary(metrics: RunMetrics) -> dict:
    """JSON-ready digest of one run."""
    out = {
        "duration_s": metrics.duration_us / 1e6,
        "warmup_s": metrics.warmup_us / 1e6,
        "airtime_fraction": airtime_fraction(metrics),
        "buffer_occupancy": buffer_occupancy(metrics),
        "buffer_mean_level": buffer_mean_level(metrics),
        "collisions": metrics.collisions,
        "incomplete_frames": metrics.incomplete_frames,
        "conservation": dict(zip(("generated", "accounted"),
                                 conservation_balance(metrics))),
        "drops": {"buffer": metrics.dropped_buffer,
                  "retx": metrics.dropped_retx},
        "loss_rate": ((metrics.dropped_buffer + metrics.dropped_retx)
                      / max(1, metrics.generated_video + metrics.generated_ul)),
    }
    for name, samples, scale in (
        ("dl_packet_delay_ms", metrics.dl_packet_delays_us, 1e-3),
        ("ul_packet_delay_ms", metrics.ul_packet_delays_us, 1e-3),
        ("vf_delay_ms", metrics.vf_delays_us, 1e-3),
        ("assembly_delay_ms", metrics.assembly_delays_us, 1e-3),
        ("ampdu_size", metrics.ampdu_sizes, 1.0),
    ):
        if samples:
            out[name] = {k: (v * scale if k != "count" else v)
                         for k, v in summarize(samples).items()}
        else:
            out[name] = None
    return out
