"""Link-level replay: trajectory, SNR-threshold rate selection, saturated goodput.

Replays a fixed node against a moving node whose position is a step function
of the waypoint times (positions update at the trace resolution, nominally
once a second, with no interpolation). Each tick queries the propagation
engine once, computes the received power and SNR, picks an 802.11a PHY rate
from a static SNR-threshold table, and estimates saturated-UDP goodput from a
single-sender DCF timing budget:

    T_frame(us) = DIFS(34) + mean backoff(67.5 = 7.5 slots x 9 us)
                + T_data + SIFS(16) + T_ack(28)
    T_data(us)  = 20 + 4 * ceil((16 + 6 + 8*(payload+36)) / N_DBPS(rate))

The offered load is assumed to always exceed capacity, so goodput equals the
MAC estimate (no traffic cap), and a frame below the preamble detection cutoff
delivers nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import FileFormatError, ValidationError
from .propagation import LinkBudget, PropagationEngine, rx_power
from .traces import RadioConfig, Vec3, distance, noise_floor

TRAJECTORY_HEADER = "t_s,x,y,z"
LINKRUN_HEADER = "t_s,distance_m,loss_db,rx_power_dbm,snr_db,phy_rate_mbps,goodput_mbps"

# 802.11a OFDM data bits per symbol, by PHY rate in Mbit/s.
N_DBPS = {6: 24, 9: 36, 12: 48, 18: 72, 24: 96, 36: 144, 48: 192, 54: 216}

DIFS_US = 34.0
SIFS_US = 16.0
MEAN_BACKOFF_US = 67.5
ACK_US = 28.0
PHY_HEADER_US = 20.0
SYMBOL_US = 4.0
SERVICE_TAIL_BITS = 16 + 6
MAC_OVERHEAD_BYTES = 36


@dataclass(frozen=True)
class Trajectory:
    """Moving-node waypoints plus the fixed node's position."""

    waypoints: tuple  # ((t seconds, (x, y, z)), ...), times strictly increasing
    fixed_pos: Vec3

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("need at least one waypoint")
        times = [t for t, _ in self.waypoints]
        for earlier, later in zip(times, times[1:]):
            if later <= earlier:
                raise ValueError(f"waypoint times must be strictly increasing: {later} after {earlier}")


def position_at(traj: Trajectory, t: float) -> Vec3:
    """Step-function position: the latest waypoint at or before ``t``."""
    if t < traj.waypoints[0][0]:
        raise ValueError(f"t={t} is before the first waypoint at t={traj.waypoints[0][0]}")
    pos = traj.waypoints[0][1]
    for wt, wpos in traj.waypoints:
        if wt > t:
            break
        pos = wpos
    return pos


def read_trajectory(path, fixed_pos: Vec3) -> Trajectory:
    waypoints = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                if text != TRAJECTORY_HEADER:
                    raise FileFormatError(
                        f"bad header {text!r}, expected {TRAJECTORY_HEADER!r}", path=path, line=lineno
                    )
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != 4:
                raise FileFormatError(f"expected 4 fields, got {len(parts)}", path=path, line=lineno)
            try:
                t, x, y, z = (float(p) for p in parts)
            except ValueError:
                raise FileFormatError(f"not a number in {text!r}", path=path, line=lineno) from None
            if waypoints and t <= waypoints[-1][0]:
                raise ValidationError(
                    f"waypoint times must be strictly increasing: t={t} after t={waypoints[-1][0]}",
                    path=path, line=lineno,
                )
            waypoints.append((t, (x, y, z)))
    if not header_seen:
        raise FileFormatError(f"missing header {TRAJECTORY_HEADER!r}", path=path)
    try:
        return Trajectory(waypoints=tuple(waypoints), fixed_pos=fixed_pos)
    except ValueError as exc:
        raise ValidationError(str(exc), path=path) from None


def write_trajectory(traj: Trajectory, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for t, (x, y, z) in traj.waypoints:
            fh.write(f"{float(t)!r},{float(x)!r},{float(y)!r},{float(z)!r}\n")


@dataclass(frozen=True)
class RateTable:
    """SNR thresholds to PHY rates, plus the preamble detection cutoff."""

    entries: tuple  # ((min_snr dB, phy_rate Mbit/s), ...), both strictly increasing
    min_rx_power: float = -90.0  # dBm

    def __post_init__(self):
        if not self.entries:
            raise ValueError("rate table must have at least one entry")
        for (s1, r1), (s2, r2) in zip(self.entries, self.entries[1:]):
            if s2 <= s1 or r2 <= r1:
                raise ValueError("rate table thresholds and rates must be strictly increasing")


# Threshold defaults are tunable operating points, not measured constants.
DEFAULT_RATE_TABLE = RateTable(
    entries=(
        (6.0, 6.0), (8.0, 9.0), (9.0, 12.0), (11.0, 18.0),
        (17.0, 24.0), (19.0, 36.0), (24.0, 48.0), (25.0, 54.0),
    ),
    min_rx_power=-90.0,
)


def select_rate(snr: float, rx_power_dbm: float, table: RateTable = DEFAULT_RATE_TABLE) -> float:
    """Highest rate whose threshold the SNR clears; 0 when undetectable."""
    if rx_power_dbm < table.min_rx_power:
        return 0.0
    rate = 0.0
    for min_snr, phy_rate in table.entries:
        if snr >= min_snr:
            rate = phy_rate
        else:
            break
    return rate


def goodput_estimate(phy_rate: float, payload: int) -> float:
    """Saturated single-sender goodput (Mbit/s) for one payload size at one rate."""
    if phy_rate == 0:
        return 0.0
    n_dbps = N_DBPS.get(int(phy_rate)) if float(phy_rate).is_integer() else None
    if n_dbps is None:
        raise ValueError(f"unknown PHY rate {phy_rate} Mbit/s, expected one of {sorted(N_DBPS)}")
    if not payload > 0:
        raise ValueError(f"payload must be > 0 bytes, got {payload}")
    frame_bits = SERVICE_TAIL_BITS + 8 * (payload + MAC_OVERHEAD_BYTES)
    t_data = PHY_HEADER_US + SYMBOL_US * math.ceil(frame_bits / n_dbps)
    t_frame = DIFS_US + MEAN_BACKOFF_US + t_data + SIFS_US + ACK_US
    return 8.0 * payload / t_frame


@dataclass(frozen=True)
class SimConfig:
    budget: LinkBudget
    bandwidth: float  # MHz
    noise: RadioConfig
    payload: int  # bytes
    duration: float  # seconds
    tick: float = 1.0  # seconds
    seed: int = 0

    def __post_init__(self):
        if not self.tick > 0:
            raise ValueError(f"tick must be > 0 s, got {self.tick}")
        if not self.payload > 0:
            raise ValueError(f"payload must be > 0 bytes, got {self.payload}")


@dataclass(frozen=True)
class LinkRow:
    t: float
    distance: float
    loss: float
    rx_power: float
    snr: float
    phy_rate: float
    goodput: float


@dataclass(frozen=True)
class LinkRun:
    """Per-tick time series produced by one simulation run."""

    rows: tuple

    def total_useful_megabits(self, tick: float) -> float:
        return sum(row.goodput * tick for row in self.rows)


def run(traj: Trajectory, engine: PropagationEngine, cfg: SimConfig,
        rate_table: RateTable = DEFAULT_RATE_TABLE) -> LinkRun:
    """Replay the trajectory: one engine query, one row per tick in [0, duration]."""
    nf = noise_floor(cfg.bandwidth, cfg.noise)
    n_ticks = int(math.floor(cfg.duration / cfg.tick + 1e-9))
    rows = []
    for k in range(n_ticks + 1):
        t = k * cfg.tick
        pos = position_at(traj, t)
        d = distance(pos, traj.fixed_pos)
        loss = engine.total_loss(d)
        rx = rx_power(cfg.budget, loss)
        snr = rx - nf
        rate = select_rate(snr, rx, rate_table)
        goodput = goodput_estimate(rate, cfg.payload)
        rows.append(LinkRow(t=t, distance=d, loss=loss, rx_power=rx,
                            snr=snr, phy_rate=rate, goodput=goodput))
    return LinkRun(rows=tuple(rows))


def write_linkrun(linkrun: LinkRun, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LINKRUN_HEADER + "\n")
        for r in linkrun.rows:
            fields = (r.t, r.distance, r.loss, r.rx_power, r.snr, r.phy_rate, r.goodput)
            fh.write(",".join(repr(float(x)) for x in fields) + "\n")


def read_linkrun(path) -> LinkRun:
    rows = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                if text != LINKRUN_HEADER:
                    raise FileFormatError(
                        f"bad header {text!r}, expected {LINKRUN_HEADER!r}", path=path, line=lineno
                    )
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != 7:
                raise FileFormatError(f"expected 7 fields, got {len(parts)}", path=path, line=lineno)
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise FileFormatError(f"not a number in {text!r}", path=path, line=lineno) from None
            rows.append(LinkRow(*values))
    if not header_seen:
        raise FileFormatError(f"missing header {LINKRUN_HEADER!r}", path=path)
    return LinkRun(rows=tuple(rows))
