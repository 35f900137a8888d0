"""Configuration types for the link simulator.

All durations carry their unit in the field name. Instances are frozen:
once validated, a config can be shared freely across concurrent runs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

VALID_CHANNEL_WIDTHS_MHZ = (20, 40, 80, 160)
VALID_GUARD_INTERVALS_NS = (800, 1600, 3200)
MAX_MCS_INDEX = 11


class ConfigError(ValueError):
    """Raised when a config fails validation; carries every violation."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class PhyConfig:
    """PHY link parameters plus the frame-timing constants used to build
    control/data PPDU durations.

    Control frames (RTS/CTS/BACK) go out at a legacy basic rate with a
    legacy preamble; data PPDUs use the HE SU preamble. Both are exposed
    here so the 0.374 ms single-packet anchor can be recalibrated without
    touching code.
    """

    mcs_index: int = 11
    channel_width_mhz: int = 80
    spatial_streams: int = 2
    guard_interval_ns: int = 800
    band_ghz: str = "5"
    # frame/timing constants
    control_rate_mbps: float = 12.0
    legacy_preamble_us: float = 20.0
    he_preamble_us: float = 44.0
    rts_bytes: int = 20
    cts_bytes: int = 14
    back_bytes: int = 32
    mpdu_delimiter_bytes: int = 4


@dataclass(frozen=True)
class MacConfig:
    """EDCA/CSMA-CA parameters for both stations.

    AIFS 34 us equals SIFS + 2 slots with the 5 GHz OFDM values
    (16 + 2 x 9), which is why those are the defaults.
    """

    aifs_us: float = 34.0
    sifs_us: float = 16.0
    slot_us: float = 9.0
    cw_min: int = 31
    cw_max: int = 1023
    max_ampdu: int = 256
    # aggregate byte bound applied on top of the packet-count bound; the
    # classic 64 KB A-MPDU limit, which caps full-size video packets at
    # ~52 per aggregate while leaving small-packet aggregation alone
    max_ampdu_bytes: int | None = 65535
    max_retx: int = 7
    per: float = 0.1
    ap_buffer: int = 1000
    client_buffer: int = 150
    rts_cts_enabled: bool = True
    ul_rts_cts_enabled: bool = True
    collisions_enabled: bool = True
    # contention-window policy:
    #   "retry"        - CW tracks the head-of-line packet's retry count
    #                    (per-frame DCF semantics)
    #   "exchange"     - CW doubles only when an entire A-MPDU is lost,
    #                    any delivered MPDU resets it
    #   "exchange_any" - CW doubles when any MPDU of the A-MPDU is lost
    cw_policy: str = "retry"
    # when True, an access attempt transmits only the packets that were
    # buffered when its backoff was armed; later arrivals wait for the
    # next attempt
    ampdu_snapshot: bool = True
    # timestamp for a delivered packet: end of the BACK ("back_end") or
    # end of the data PPDU ("data_end")
    delivery_stamp: str = "back_end"


@dataclass(frozen=True)
class TrafficConfig:
    """Generated-traffic parameters: paced downlink video plus the
    periodic uplink controller stream."""

    fps: float = 90.0
    bitrate_bps: float = 50e6
    packet_size_bytes: int = 1243
    inter_batch_time_ms: float = 5.56
    # the per-frame batch count is drawn from [1, ceil(T / this)], which
    # stays pinned to the structural 5.56 ms burst interval even when the
    # release spacing above is swept
    batch_count_interval_ms: float = 5.56
    intra_batch_gap_us: float = 5.0
    ul_period_ms: float = 4.16
    ul_packet_size_bytes: int = 175
    ul_enabled: bool = True
    # "frame": batch k of a frame is released at gen + k*tau.
    # "global": releases snap to the global k*tau grid.
    pacer_anchor: str = "frame"


@dataclass(frozen=True)
class SimConfig:
    phy: PhyConfig = field(default_factory=PhyConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    duration_s: float = 10.0
    runs: int = 10
    seed: int = 1
    warmup_ms: float = 500.0


def config_errors(cfg: SimConfig) -> list[str]:
    """Collect every violated invariant; empty list means valid."""
    errs = []
    phy, mac, tr = cfg.phy, cfg.mac, cfg.traffic

    if not 0 <= phy.mcs_index <= MAX_MCS_INDEX:
        errs.append("mcs_index out of range (0-11)")
    if phy.channel_width_mhz not in VALID_CHANNEL_WIDTHS_MHZ:
        errs.append("channel_width_mhz not one of 20/40/80/160")
    if not 1 <= phy.spatial_streams <= 8:
        errs.append("spatial_streams out of range (1-8)")
    if phy.guard_interval_ns not in VALID_GUARD_INTERVALS_NS:
        errs.append("guard_interval_ns not one of 800/1600/3200")
    if phy.control_rate_mbps <= 0:
        errs.append("control_rate_mbps must be positive")

    if not 0.0 <= mac.per <= 1.0:
        errs.append("per out of range")
    if mac.cw_min > mac.cw_max:
        errs.append("cw_min exceeds cw_max")
    if mac.cw_min < 0:
        errs.append("cw_min negative")
    if mac.max_ampdu < 1:
        errs.append("max_ampdu must be >= 1")
    if mac.max_ampdu_bytes is not None and mac.max_ampdu_bytes < 1:
        errs.append("max_ampdu_bytes must be >= 1 or null")
    if mac.max_retx < 0:
        errs.append("max_retx negative")
    if mac.ap_buffer < 1:
        errs.append("ap_buffer must be >= 1")
    if mac.client_buffer < 1:
        errs.append("client_buffer must be >= 1")
    for name in ("aifs_us", "sifs_us", "slot_us"):
        if getattr(mac, name) <= 0:
            errs.append(f"{name} must be positive")
    if mac.delivery_stamp not in ("back_end", "data_end"):
        errs.append("delivery_stamp must be back_end or data_end")
    if mac.cw_policy not in ("retry", "exchange", "exchange_any"):
        errs.append("cw_policy must be retry, exchange, or exchange_any")

    if tr.fps <= 0:
        errs.append("fps must be positive")
    if tr.bitrate_bps <= 0:
        errs.append("bitrate_bps must be positive")
    if tr.packet_size_bytes <= 0:
        errs.append("packet_size_bytes must be positive")
    if tr.inter_batch_time_ms <= 0:
        errs.append("inter_batch_time_ms must be positive")
    if tr.batch_count_interval_ms <= 0:
        errs.append("batch_count_interval_ms must be positive")
    if tr.intra_batch_gap_us < 0:
        errs.append("intra_batch_gap_us negative")
    if tr.ul_period_ms <= 0:
        errs.append("ul_period_ms must be positive")
    if tr.ul_packet_size_bytes <= 0:
        errs.append("ul_packet_size_bytes must be positive")
    if tr.pacer_anchor not in ("frame", "global"):
        errs.append("pacer_anchor must be frame or global")

    if cfg.duration_s <= 0:
        errs.append("duration_s must be positive")
    if cfg.runs < 1:
        errs.append("runs must be >= 1")
    if cfg.warmup_ms < 0:
        errs.append("warmup_ms negative")
    return errs


def validate_config(cfg: SimConfig) -> SimConfig:
    """Return cfg unchanged if every invariant holds, else raise
    ConfigError listing all violations (not only the first)."""
    errs = config_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


_SECTIONS = {"phy": PhyConfig, "mac": MacConfig, "traffic": TrafficConfig}
_TOP_FIELDS = ("duration_s", "runs", "seed", "warmup_ms")


def _build_section(cls, values: dict, section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(
            [f"unknown key '{section}.{k}'" for k in sorted(unknown)]
        )
    return cls(**values)


def load_config(path: str) -> SimConfig:
    """Load a YAML config; unspecified fields take the defaults above.

    The result always passes validate_config. Parse problems raise
    ConfigError with line context; nothing partial is ever returned.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            where = ""
            mark = getattr(exc, "problem_mark", None)
            if mark is not None:
                where = f" (line {mark.line + 1}, column {mark.column + 1})"
            raise ConfigError([f"cannot parse {path}{where}: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])

    unknown = set(raw) - set(_SECTIONS) - {"sim"}
    if unknown:
        raise ConfigError([f"unknown section '{k}'" for k in sorted(unknown)])

    kwargs: dict[str, Any] = {}
    for section, cls in _SECTIONS.items():
        values = raw.get(section, {}) or {}
        if not isinstance(values, dict):
            raise ConfigError([f"section '{section}' must be a mapping"])
        kwargs[section] = _build_section(cls, values, section)

    top = raw.get("sim", {}) or {}
    if not isinstance(top, dict):
        raise ConfigError(["section 'sim' must be a mapping"])
    unknown = set(top) - set(_TOP_FIELDS)
    if unknown:
        raise ConfigError([f"unknown key 'sim.{k}'" for k in sorted(unknown)])
    kwargs.update(top)

    return validate_config(SimConfig(**kwargs))


def config_to_dict(cfg: SimConfig) -> dict:
    return {
        "phy": dataclasses.asdict(cfg.phy),
        "mac": dataclasses.asdict(cfg.mac),
        "traffic": dataclasses.asdict(cfg.traffic),
        "sim": {
            "duration_s": cfg.duration_s,
            "runs": cfg.runs,
            "seed": cfg.seed,
            "warmup_ms": cfg.warmup_ms,
        },
    }


def save_config(cfg: SimConfig, path: str) -> None:
    """Write cfg as YAML such that load_config(path) == cfg."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
