"""802.11ax PHY timing: data rates, PPDU durations, and the composed
single-packet exchange latency.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from vrwifi.config import MacConfig, PhyConfig

# (modulation bits per subcarrier, coding rate) indexed by MCS
MCS_TABLE = (
    (1, 1 / 2),   # 0  BPSK
    (2, 1 / 2),   # 1  QPSK
    (2, 3 / 4),   # 2  QPSK
    (4, 1 / 2),   # 3  16-QAM
    (4, 3 / 4),   # 4  16-QAM
    (6, 2 / 3),   # 5  64-QAM
    (6, 3 / 4),   # 6  64-QAM
    (6, 5 / 6),   # 7  64-QAM
    (8, 3 / 4),   # 8  256-QAM
    (8, 5 / 6),   # 9  256-QAM
    (10, 3 / 4),  # 10 1024-QAM
    (10, 5 / 6),  # 11 1024-QAM
)

# HE data subcarriers per channel width (MHz)
DATA_SUBCARRIERS = {20: 234, 40: 468, 80: 980, 160: 1960}

BASE_SYMBOL_US = 12.8        # HE OFDM symbol, guard interval excluded
LEGACY_SYMBOL_US = 4.0       # non-HT OFDM symbol used by control frames
SERVICE_BITS = 16
TAIL_BITS = 6


class PhyError(ValueError):
    pass


def symbol_duration_us(phy: PhyConfig) -> float:
    return BASE_SYMBOL_US + phy.guard_interval_ns / 1000.0


def bits_per_symbol(phy: PhyConfig) -> float:
    """Data bits carried by one HE OFDM symbol across all streams."""
    if not 0 <= phy.mcs_index < len(MCS_TABLE):
        raise PhyError(f"unsupported MCS {phy.mcs_index}")
    if phy.channel_width_mhz not in DATA_SUBCARRIERS:
        raise PhyError(f"unsupported channel width {phy.channel_width_mhz}")
    bits, coding = MCS_TABLE[phy.mcs_index]
    subcarriers = DATA_SUBCARRIERS[phy.channel_width_mhz]
    return subcarriers * bits * coding * phy.spatial_streams


def phy_rate(phy: PhyConfig) -> float:
    """PHY data rate in bits/s for the configured MCS/width/streams/GI."""
    return bits_per_symbol(phy) / (symbol_duration_us(phy) * 1e-6)


def data_ppdu_airtime(total_mpdu_bytes: int, n_mpdus: int, phy: PhyConfig) -> float:
    """Duration in us of an HE SU data PPDU carrying an A-MPDU.

    Payload bits = service + tail + 8 * (MPDU bytes + one delimiter per
    MPDU), rounded up to whole OFDM symbols.
    """
    if n_mpdus < 1:
        raise PhyError("n_mpdus must be >= 1")
    payload_bits = SERVICE_BITS + TAIL_BITS + 8 * (
        total_mpdu_bytes + n_mpdus * phy.mpdu_delimiter_bytes
    )
    n_symbols = max(1, math.ceil(payload_bits / bits_per_symbol(phy)))
    return phy.he_preamble_us + n_symbols * symbol_duration_us(phy)


def control_frame_airtime(frame_bytes: int, phy: PhyConfig) -> float:
    """Duration in us of a control frame at the legacy basic rate."""
    payload_bits = SERVICE_BITS + TAIL_BITS + 8 * frame_bytes
    bits_per_legacy_symbol = phy.control_rate_mbps * LEGACY_SYMBOL_US
    n_symbols = math.ceil(payload_bits / bits_per_legacy_symbol)
    return phy.legacy_preamble_us + n_symbols * LEGACY_SYMBOL_US


def rts_airtime(phy: PhyConfig) -> float:
    return control_frame_airtime(phy.rts_bytes, phy)


def cts_airtime(phy: PhyConfig) -> float:
    return control_frame_airtime(phy.cts_bytes, phy)


def back_airtime(phy: PhyConfig) -> float:
    return control_frame_airtime(phy.back_bytes, phy)


def exchange_airtime(total_mpdu_bytes: int, n_mpdus: int, phy: PhyConfig,
                     mac: MacConfig, rts_cts: bool) -> float:
    """Busy time of one full data exchange, AIFS/backoff excluded.

    With RTS/CTS: RTS + SIFS + CTS + SIFS + DATA + SIFS + BACK.
    Without: DATA + SIFS + BACK.
    """
    data = data_ppdu_airtime(total_mpdu_bytes, n_mpdus, phy)
    busy = data + mac.sifs_us + back_airtime(phy)
    if rts_cts:
        busy += rts_airtime(phy) + cts_airtime(phy) + 2 * mac.sifs_us
    return busy


@dataclass(frozen=True)
class AirtimeBreakdown:
    """Per-component timing of one isolated packet exchange, in us."""

    aifs: float
    backoff: float
    rts: float
    cts: float
    data_ppdu: float
    back: float
    sifs_total: float

    @property
    def total(self) -> float:
        return (self.aifs + self.backoff + self.rts + self.cts
                + self.data_ppdu + self.back + self.sifs_total)


def single_packet_latency(packet_bytes: int, phy: PhyConfig, mac: MacConfig,
                          include_mean_backoff: bool = True) -> AirtimeBreakdown:
    """Latency of delivering one packet over an idle channel.

    Composes AIFS (+ mean backoff (cw_min/2)*slot when requested), the
    RTS/CTS handshake if enabled, the data PPDU, and the BACK. The total
    at the default parameters with mean backoff is the 0.374 ms benchmark
    used to sanity-check simulated delays; without backoff it is the hard
    lower bound on any delivered packet's delay.
    """
    backoff = (mac.cw_min / 2.0) * mac.slot_us if include_mean_backoff else 0.0
    if mac.rts_cts_enabled:
        rts, cts = rts_airtime(phy), cts_airtime(phy)
        sifs_total = 3 * mac.sifs_us
    else:
        rts = cts = 0.0
        sifs_total = mac.sifs_us
    return AirtimeBreakdown(
        aifs=mac.aifs_us,
        backoff=backoff,
        rts=rts,
        cts=cts,
        data_ppdu=data_ppdu_airtime(packet_bytes, 1, phy),
        back=back_airtime(phy),
        sifs_total=sifs_total,
    )
