import numpy as np
import pytest
from hypothesis import given, strategies as st

from vrwifi import metrics as mx
from vrwifi.mac import Ampdu
from vrwifi.traffic import Packet, VideoFrame, UL_STREAM, VIDEO_STREAM


def delivered_packet(pid, enqueue, delivery, stream=VIDEO_STREAM):
    return Packet(packet_id=pid, stream=stream, size_bytes=1243,
                  gen_time_us=enqueue, enqueue_time_us=enqueue,
                  delivery_time_us=delivery)


def test_summarize_basic():
    s = mx.summarize([1000.0, 2000.0, 3000.0, 4000.0])
    assert s["mean"] == 2500.0
    assert s["p50"] == 2000.0        # nearest rank, no interpolation
    assert s["min"] == 1000.0 and s["max"] == 4000.0
    assert s["count"] == 4


def test_summarize_all_equal():
    s = mx.summarize([7.0] * 50)
    assert s["p50"] == s["p99"] == s["p99_99"] == 7.0


def test_summarize_nearest_rank_known_values():
    samples = list(range(1, 101))       # 1..100
    s = mx.summarize(samples)
    assert s["p50"] == 50
    assert s["p99"] == 99
    assert s["p99_99"] == 100


def test_summarize_empty_errors():
    with pytest.raises(ValueError):
        mx.summarize([])


@given(st.lists(st.floats(min_value=0.1, max_value=1e7, allow_nan=False),
                min_size=1, max_size=500))
def test_summary_order_invariants(samples):
    s = mx.summarize(samples)
    assert s["min"] <= s["mean"] <= s["max"]
    assert s["p50"] <= s["p99"] <= s["p99_99"] <= s["max"]


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
                min_size=1, max_size=300))
def test_ecdf_monotone_normalized(samples):
    xs, ps = mx.ecdf(samples)
    assert np.all(np.diff(xs) >= 0)
    assert np.all(np.diff(ps) > 0)
    assert ps[0] == pytest.approx(1.0 / len(samples))
    assert ps[-1] == 1.0


def test_ecdf_empty_errors():
    with pytest.raises(ValueError):
        mx.ecdf([])


def test_record_delivery_appends_delay_and_samples_ampdu_once():
    m = mx.RunMetrics()
    p1 = delivered_packet(0, 10.0, 1210.0)
    p2 = delivered_packet(1, 10.0, 1210.0)
    ampdu = Ampdu(mpdus=[p1, p2], total_bytes=2 * 1243)
    m.record_delivery(p1, ampdu)
    m.record_delivery(p2, ampdu)
    assert m.dl_packet_delays_us == [1200.0, 1200.0]   # 1.2 ms each
    assert m.ampdu_sizes == [2]                        # sampled once


def test_record_delivery_routes_ul_stream():
    m = mx.RunMetrics()
    p = delivered_packet(0, 0.0, 500.0, stream=UL_STREAM)
    m.record_delivery(p, Ampdu(mpdus=[p], total_bytes=175))
    assert m.ul_packet_delays_us == [500.0]
    assert m.dl_packet_delays_us == []


def test_record_attempt_counts_retransmission_attempts():
    m = mx.RunMetrics()
    ampdu = Ampdu(mpdus=[delivered_packet(0, 0, 1)], total_bytes=1243)
    m.record_attempt(ampdu)
    retx = Ampdu(mpdus=[delivered_packet(0, 0, 2)], total_bytes=1243)
    m.record_attempt(retx)
    assert m.ampdu_sizes == [1, 1]


def test_vf_delay_single_packet_frame():
    frame = VideoFrame(frame_id=0, gen_time_us=100.0, size_bytes=1243,
                       n_batches=1, period_us=11111.0)
    pkt = delivered_packet(0, 100.0, 900.0)
    pkt.gen_time_us = 100.0
    assert mx.vf_delay(frame, [pkt]) == 800.0


def test_vf_delay_spans_first_gen_to_last_delivery():
    frame = VideoFrame(frame_id=0, gen_time_us=0.0, size_bytes=2486,
                       n_batches=2, period_us=11111.0)
    early = delivered_packet(0, 0.0, 700.0)
    late = delivered_packet(1, 5560.0, 6500.0)
    late.gen_time_us = 5560.0
    assert mx.vf_delay(frame, [early, late]) == 6500.0


def test_vf_delay_undelivered_raises():
    frame = VideoFrame(frame_id=3, gen_time_us=0.0, size_bytes=1243,
                       n_batches=1, period_us=11111.0)
    pkt = delivered_packet(0, 0.0, 700.0)
    pkt.delivery_time_us = None
    with pytest.raises(ValueError, match="frame 3"):
        mx.vf_delay(frame, [pkt])


def test_airtime_fraction_explicit_duration():
    m = mx.RunMetrics(duration_us=10e6, warmup_us=0.0, airtime_busy_us=3.5e6)
    assert mx.airtime_fraction(m, duration_s=10.0) == pytest.approx(0.35)
    assert mx.airtime_fraction(m) == pytest.approx(0.35)


def test_airtime_fraction_no_traffic():
    m = mx.RunMetrics(duration_us=10e6, warmup_us=0.0)
    assert mx.airtime_fraction(m) == 0.0


def test_buffer_statistics_constant_series():
    # queue pinned at 260 of 1000 for the whole window: the busy fraction
    # is 1.0 and the time-weighted mean level is 0.26
    m = mx.RunMetrics(duration_us=10e6, warmup_us=0.0, buffer_capacity=1000,
                      buffer_busy_us=10e6, buffer_level_integral=260 * 10e6)
    assert mx.buffer_occupancy(m) == pytest.approx(1.0)
    assert mx.buffer_mean_level(m) == pytest.approx(0.26)


def test_buffer_statistics_idle_series():
    m = mx.RunMetrics(duration_us=10e6, warmup_us=0.0, buffer_capacity=1000)
    assert mx.buffer_occupancy(m) == 0.0
    assert mx.buffer_mean_level(m) == 0.0


def test_metrics_summary_smoke():
    m = mx.RunMetrics(duration_us=1e6, warmup_us=0.0, buffer_capacity=1000)
    m.dl_packet_delays_us.extend([1000.0, 1100.0])
    m.generated_video = 2
    m.delivered_video = 2
    s = mx.metrics_summary(m)
    assert s["dl_packet_delay_ms"]["mean"] == pytest.approx(1.05)
    assert s["vf_delay_ms"] is None
    assert s["conservation"] == {"generated": 2, "accounted": 2}
    assert s["loss_rate"] == 0.0
