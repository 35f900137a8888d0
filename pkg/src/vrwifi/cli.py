"""Command-line front end: run simulations and sweeps, analyze traces,
and compare simulation output against trace analysis.

All outputs are machine-first (JSON summary + CSV dumps) and contain no
wall-clock timestamps, so identical inputs and seeds give byte-identical
files. Plot data is emitted for external tooling; nothing renders here.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from vrwifi import traceio
from vrwifi.config import (ConfigError, SimConfig, config_to_dict,
                           load_config, validate_config)
from vrwifi.engine import (SWEEP_AXES, run_seeds, run_simulation, run_sweep,
                           set_axis)
from vrwifi.metrics import ecdf, metrics_summary, summarize

OUTPUT_ENV = "VRWIFI_OUTPUT_DIR"

# ITU-T style QoS thresholds for VR service verdicts
QOS_RTT_MS = 20.0
QOS_JITTER_MS = 15.0
QOS_LOSS_RATE = 1e-5


def _outdir(args) -> Path:
    out = args.output or os.environ.get(OUTPUT_ENV) or "vrwifi-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_cfg(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else validate_config(SimConfig())
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_samples(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", header])
        writer.writerows(rows)


def _pooled(results, attr: str) -> list:
    out = []
    for r in results:
        out.extend(getattr(r.metrics, attr))
    return out


def _pooled_summary(results) -> dict:
    out = {}
    for name, attr, scale in (
        ("dl_packet_delay_ms", "dl_packet_delays_us", 1e-3),
        ("ul_packet_delay_ms", "ul_packet_delays_us", 1e-3),
        ("vf_delay_ms", "vf_delays_us", 1e-3),
        ("assembly_delay_ms", "assembly_delays_us", 1e-3),
        ("ampdu_size", "ampdu_sizes", 1.0),
    ):
        samples = _pooled(results, attr)
        out[name] = ({k: (v * scale if k != "count" else v)
                      for k, v in summarize(samples).items()}
                     if samples else None)
    airs = [metrics_summary(r.metrics)["airtime_fraction"] for r in results]
    bufs = [metrics_summary(r.metrics)["buffer_occupancy"] for r in results]
    out["airtime_fraction_mean"] = float(np.mean(airs))
    out["buffer_occupancy_mean"] = float(np.mean(bufs))
    gen = sum(r.metrics.generated_video + r.metrics.generated_ul
              for r in results)
    dropped = sum(r.metrics.dropped_buffer + r.metrics.dropped_retx
                  for r in results)
    out["loss_rate"] = dropped / gen if gen else 0.0
    return out


def _trace_metrics(records) -> dict:
    """Shared-vocabulary metrics computable from any packet trace."""
    labels = traceio.classify_streams(records)
    video = [r for r, l in zip(records, labels) if l == traceio.SRTP_VIDEO]
    out: dict = {}
    if not video:
        return out
    out["video_mean_packet_size_bytes"] = float(
        np.mean([r.length for r in video]))
    gaps = [(b.timestamp_s - a.timestamp_s) * 1e3
            for a, b in zip(video, video[1:])]
    if gaps:
        out["video_mean_inter_packet_ms"] = float(np.mean(gaps))
    batches = traceio.detect_batches(video)
    spacings = traceio.batch_spacings_ms(batches)
    if spacings:
        out["batch_spacing_modal_ms"] = traceio.modal_spacing_ms(spacings)
    if all(r.rtp_timestamp is not None for r in video):
        frames = traceio.reconstruct_frames(video)
        if len(frames) > 1:
            ift = traceio.inter_frame_times_ms(frames)
            out["inter_frame_time_mean_ms"] = float(np.mean(ift))
            out["fps_estimate"] = 1e3 / out["inter_frame_time_mean_ms"]
            out["frame_size_mean_bytes"] = float(
                np.mean([f.size_bytes for f in frames]))
            out["assembly_delay_mean_ms"] = float(
                np.mean(traceio.assembly_delays(frames)))
            out["batches_per_frame_mean"] = float(
                np.mean([f.n_batches for f in frames]))
    if len(video) >= 2:
        out["video_jitter_ms"] = traceio.interarrival_jitter(video)
    return out


def cmd_simulate(args) -> int:
    try:
        cfg = _load_cfg(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = _outdir(args)
    first = run_simulation(cfg, cfg.seed, keep_packets=True)
    rest = (run_seeds(dataclasses.replace(cfg, runs=cfg.runs - 1,
                                          seed=cfg.seed + 1),
                      jobs=args.jobs)
            if cfg.runs > 1 else [])
    results = [first] + rest

    traceio.write_trace(traceio.delivered_trace(first.frames),
                        outdir / "sim_trace.csv")
    # reparse the export so the metrics see exactly what analyze will see
    trace_records = traceio.parse_trace(outdir / "sim_trace.csv").records
    for attr, fname, header in (
        ("dl_packet_delays_us", "dl_delays.csv", "delay_us"),
        ("vf_delays_us", "vf_delays.csv", "delay_us"),
        ("ampdu_sizes", "ampdu_sizes.csv", "n_mpdus"),
    ):
        rows = [(r.seed, v) for r in results for v in getattr(r.metrics, attr)]
        _write_samples(outdir / fname, header, rows)

    pooled = _pooled_summary(results)
    loss_ok = pooled["loss_rate"] <= QOS_LOSS_RATE
    report = {
        "command": "simulate",
        "config": config_to_dict(cfg),
        "seeds": [r.seed for r in results],
        "per_run": [metrics_summary(r.metrics) for r in results],
        "pooled": pooled,
        "trace_metrics": _trace_metrics(trace_records),
        "qos_verdicts": {
            "loss_rate": {"value": pooled["loss_rate"],
                          "threshold": QOS_LOSS_RATE, "pass": loss_ok},
        },
        "outputs": ["summary.json", "sim_trace.csv", "dl_delays.csv",
                    "vf_delays.csv", "ampdu_sizes.csv"],
    }
    _write_json(outdir / "summary.json", report)
    dl = pooled["dl_packet_delay_ms"]
    print(f"simulate: {cfg.runs} run(s) x {cfg.duration_s}s, "
          f"fps={cfg.traffic.fps:g}, tau={cfg.traffic.inter_batch_time_ms}ms")
    if dl:
        print(f"  mean DL packet delay {dl['mean']:.3f} ms "
              f"(p99.99 {dl['p99_99']:.3f} ms)")
    if pooled["vf_delay_ms"]:
        print(f"  mean VF delay {pooled['vf_delay_ms']['mean']:.3f} ms")
    if pooled["ampdu_size"]:
        print(f"  mean A-MPDU size {pooled['ampdu_size']['mean']:.2f} pkts")
    print(f"  airtime {pooled['airtime_fraction_mean']:.3f}, "
          f"buffer occupancy {pooled['buffer_occupancy_mean']:.3f}")
    print(f"  loss rate {pooled['loss_rate']:.2e} "
          f"({'PASS' if loss_ok else 'FAIL'} vs {QOS_LOSS_RATE:.0e})")
    print(f"  outputs in {outdir}")
    return 0


def _parse_values(axis: str, text: str) -> list:
    if not text.strip():
        return []
    vals = []
    for item in text.split(","):
        v = float(item)
        vals.append(int(v) if axis == "mcs_index" else v)
    return vals


def cmd_sweep(args) -> int:
    try:
        cfg = _load_cfg(args)
        if args.axis not in SWEEP_AXES:
            raise ConfigError([f"unknown sweep axis '{args.axis}'"])
        values = _parse_values(args.axis, args.values)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = _outdir(args)
    seeds = [cfg.seed + i for i in range(cfg.runs)]
    results = run_sweep(cfg, args.axis, values, seeds, jobs=args.jobs)

    per_value = {}
    for value in values:
        runs = [results[(value, s)] for s in seeds]
        per_value[str(value)] = _pooled_summary(runs)
    with open(outdir / "sweep_table.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([args.axis, "seed", "dl_delay_mean_ms",
                         "dl_delay_p99_99_ms", "vf_delay_mean_ms",
                         "ampdu_mean", "airtime_fraction",
                         "buffer_occupancy"])
        for (value, seed), r in results.items():
            s = metrics_summary(r.metrics)
            writer.writerow([
                value, seed,
                s["dl_packet_delay_ms"]["mean"] if s["dl_packet_delay_ms"] else "",
                s["dl_packet_delay_ms"]["p99_99"] if s["dl_packet_delay_ms"] else "",
                s["vf_delay_ms"]["mean"] if s["vf_delay_ms"] else "",
                s["ampdu_size"]["mean"] if s["ampdu_size"] else "",
                s["airtime_fraction"], s["buffer_occupancy"],
            ])
    report = {
        "command": "sweep",
        "axis": args.axis,
        "values": values,
        "seeds": seeds,
        "config": config_to_dict(cfg),
        "per_value": per_value,
        "outputs": ["sweep.json", "sweep_table.csv"],
    }
    _write_json(outdir / "sweep.json", report)
    print(f"sweep over {args.axis}: {values} x {len(seeds)} seed(s)")
    for value in values:
        p = per_value[str(value)]
        parts = [f"{args.axis}={value}:"]
        if p["dl_packet_delay_ms"]:
            parts.append(f"dl={p['dl_packet_delay_ms']['mean']:.3f} ms")
        if p["vf_delay_ms"]:
            parts.append(f"vf={p['vf_delay_ms']['mean']:.3f} ms")
        if p["ampdu_size"]:
            parts.append(f"ampdu={p['ampdu_size']['mean']:.2f}")
        parts.append(f"airtime={p['airtime_fraction_mean']:.3f}")
        print("  " + " ".join(parts))
    print(f"  outputs in {outdir}")
    return 0


def cmd_analyze(args) -> int:
    try:
        parsed = traceio.parse_trace(args.trace)
    except (traceio.TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    records = parsed.records
    if not records:
        print("error: trace contains no parseable records", file=sys.stderr)
        return 2
    outdir = _outdir(args)
    labels = traceio.classify_streams(records)
    summaries = traceio.stream_summaries(records, labels)
    video = [r for r, l in zip(records, labels) if l == traceio.SRTP_VIDEO]

    frame_block = None
    if args.frames and not (video and all(r.rtp_timestamp is not None
                                          for r in video)):
        print("error: --frames requires rtp_timestamp values on the video "
              "stream; this trace has none (batch-level analysis still "
              "available without --frames)", file=sys.stderr)
        return 2
    batch_block = None
    if video:
        batches = traceio.detect_batches(video, args.gap_threshold)
        spacings = traceio.batch_spacings_ms(batches)
        batch_block = {
            "n_batches": len(batches),
            "gap_threshold_ms": args.gap_threshold,
            "modal_spacing_ms": (traceio.modal_spacing_ms(spacings)
                                 if spacings else None),
            "spacing_mean_ms": float(np.mean(spacings)) if spacings else None,
        }
        if all(r.rtp_timestamp is not None for r in video):
            frames = traceio.reconstruct_frames(video, args.gap_threshold)
            delays = traceio.assembly_delays(frames)
            ift = traceio.inter_frame_times_ms(frames)
            frame_block = {
                "n_frames": len(frames),
                "frame_size_mean_bytes": float(np.mean(
                    [f.size_bytes for f in frames])),
                "inter_frame_time_mean_ms": (float(np.mean(ift))
                                             if ift else None),
                "fps_estimate": (1e3 / float(np.mean(ift)) if ift else None),
                "batches_per_frame_mean": float(np.mean(
                    [f.n_batches for f in frames])),
                "assembly_delay_ms": {k: v for k, v in zip(
                    ("mean", "p50", "p99", "p99_99", "min", "max", "count"),
                    summarize(delays).values())} if delays else None,
            }

    jitter_ms = (traceio.interarrival_jitter(video)
                 if len(video) >= 2 else None)
    qos = {}
    if jitter_ms is not None:
        qos["jitter_ms"] = {"value": jitter_ms, "threshold": QOS_JITTER_MS,
                            "pass": jitter_ms < QOS_JITTER_MS}
    qos["rtt_ms"] = {"value": None, "threshold": QOS_RTT_MS, "pass": None}
    qos["loss_rate"] = {"value": None, "threshold": QOS_LOSS_RATE,
                        "pass": None}

    for summary in summaries:
        rows = sorted((r for r, l in zip(records, labels)
                       if l == summary.label), key=lambda r: r.timestamp_s)
        gaps = [(b.timestamp_s - a.timestamp_s) * 1e3
                for a, b in zip(rows, rows[1:])]
        if gaps:
            xs, ps = ecdf(gaps)
            safe = summary.label.lower().replace("-", "_")
            with open(outdir / f"ecdf_inter_packet_{safe}.csv", "w",
                      newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["inter_packet_ms", "probability"])
                writer.writerows(zip(xs, ps))

    report = {
        "command": "analyze",
        "trace": str(args.trace),
        "records": len(records),
        "skipped_rows": len(parsed.skipped),
        "streams": {s.label: dataclasses.asdict(s) for s in summaries},
        "batches": batch_block,
        "frames": frame_block,
        "trace_metrics": _trace_metrics(records),
        "qos_verdicts": qos,
    }
    _write_json(outdir / "analysis.json", report)
    print(f"analyze: {len(records)} records "
          f"({len(parsed.skipped)} skipped rows)")
    for s in summaries:
        print(f"  {s.label:12s} n={s.packet_count:<7d} "
              f"mean {s.mean_packet_size:7.1f} B  "
              f"gap {s.mean_inter_packet_ms:8.2f} ms  "
              f"load {s.load_mbps:7.3f} Mbps")
    if batch_block and batch_block["modal_spacing_ms"] is not None:
        print(f"  modal batch spacing {batch_block['modal_spacing_ms']:.2f} ms")
    if frame_block:
        print(f"  frames: {frame_block['n_frames']}, "
              f"fps ~ {frame_block['fps_estimate']:.2f}, "
              f"mean size {frame_block['frame_size_mean_bytes']:.0f} B, "
              f"mean assembly {frame_block['assembly_delay_ms']['mean']:.2f} ms")
    if jitter_ms is not None:
        print(f"  video jitter {jitter_ms:.2f} ms "
              f"({'PASS' if jitter_ms < QOS_JITTER_MS else 'FAIL'} "
              f"vs {QOS_JITTER_MS:g} ms)")
    print(f"  outputs in {outdir}")
    return 0


COMPARE_KEYS = [
    "video_mean_packet_size_bytes", "video_mean_inter_packet_ms",
    "batch_spacing_modal_ms", "inter_frame_time_mean_ms", "fps_estimate",
    "frame_size_mean_bytes", "assembly_delay_mean_ms",
    "batches_per_frame_mean", "video_jitter_ms",
]


def _load_report(path: Path, fallback: str) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / fallback
    with open(p, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_compare(args) -> int:
    try:
        sim = _load_report(Path(args.sim), "summary.json")
        trace = _load_report(Path(args.analysis), "analysis.json")
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = _outdir(args)
    sim_tm = sim.get("trace_metrics", {})
    trace_tm = trace.get("trace_metrics", {})
    rows = []
    for key in COMPARE_KEYS:
        a, b = sim_tm.get(key), trace_tm.get(key)
        if a is None and b is None:
            continue
        rel = (abs(a - b) / abs(b) if a is not None and b not in (None, 0)
               else None)
        rows.append({"metric": key, "sim": a, "trace": b,
                     "rel_diff": rel})
    # model-level vs trace-level frame completion delay
    sim_vf = (sim.get("pooled") or {}).get("vf_delay_ms")
    if sim_vf and trace_tm.get("assembly_delay_mean_ms") is not None:
        b = trace_tm["assembly_delay_mean_ms"]
        rows.append({"metric": "vf_delay_mean_ms (sim) vs "
                               "assembly_delay_mean_ms (trace)",
                     "sim": sim_vf["mean"], "trace": b,
                     "rel_diff": abs(sim_vf["mean"] - b) / abs(b) if b else None})
    report = {"command": "compare", "sim": str(args.sim),
              "analysis": str(args.analysis), "table": rows}
    _write_json(outdir / "compare.json", report)
    print(f"compare: {len(rows)} shared metric(s)")
    for row in rows:
        sim_v = "N/A" if row["sim"] is None else f"{row['sim']:.4g}"
        trace_v = "N/A" if row["trace"] is None else f"{row['trace']:.4g}"
        rel = ("N/A" if row["rel_diff"] is None
               else f"{100 * row['rel_diff']:.2f}%")
        print(f"  {row['metric']:<55s} sim={sim_v:>10s} "
              f"trace={trace_v:>10s} diff={rel}")
    print(f"  outputs in {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrwifi",
        description="802.11ax VR-traffic link simulator and trace analyzer")
    sub = parser.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="run one config across seeds")
    sim.add_argument("--config", help="YAML config path (defaults built in)")
    sim.add_argument("--seed", type=int, help="override base seed")
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--output", help=f"output dir (or ${OUTPUT_ENV})")
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="sweep one parameter axis")
    swp.add_argument("--config", help="YAML config path")
    swp.add_argument("--seed", type=int)
    swp.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    swp.add_argument("--values", required=True,
                     help="comma-separated values, e.g. 30,60,90")
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--output")
    swp.set_defaults(func=cmd_sweep)

    ana = sub.add_parser("analyze", help="analyze a trace CSV")
    ana.add_argument("trace")
    ana.add_argument("--gap-threshold", type=float, default=1.0,
                     help="batch gap threshold in ms (default 1.0)")
    ana.add_argument("--frames", action="store_true",
                     help="require RTP frame reconstruction")
    ana.add_argument("--output")
    ana.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare",
                          help="compare simulate output vs analyze output")
    cmp_.add_argument("sim", help="simulate output dir or summary.json")
    cmp_.add_argument("analysis", help="analyze output dir or analysis.json")
    cmp_.add_argument("--output")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
