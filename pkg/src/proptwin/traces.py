"""Trace ingestion: CSV parsing, inter-node distance, and SNR-to-path-loss conversion.

Two interchange formats are supported, both plain UTF-8 CSV with fixed headers
and ``#``-prefixed comment lines:

* simple format, header ``distance_m,path_loss_db`` — one (distance, path loss)
  training pair per row;
* raw format, header ``t_s,tx_power_dbm,snr_db,tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,
  tx_gain_dbi,rx_gain_dbi,freq_mhz,bw_mhz`` — one measurement record per row.

Raw records carry SNR rather than path loss; ``record_to_sample`` recovers the
path loss through a link budget against a thermal noise floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import FileFormatError, ValidationError

THERMAL_NOISE_DBM_PER_HZ = -174.0

SIMPLE_HEADER = "distance_m,path_loss_db"
RAW_HEADER = (
    "t_s,tx_power_dbm,snr_db,tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,"
    "tx_gain_dbi,rx_gain_dbi,freq_mhz,bw_mhz"
)

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class RadioConfig:
    """Receiver-side constants needed to turn SNR into absolute power levels."""

    noise_figure: float = 7.0  # dB
    thermal_noise_density: float = THERMAL_NOISE_DBM_PER_HZ  # dBm/Hz

    def __post_init__(self):
        if self.noise_figure < 0:
            raise ValueError(f"noise figure must be >= 0 dB, got {self.noise_figure}")


@dataclass(frozen=True)
class TraceRecord:
    """One raw measurement: time, radio configuration, SNR, and node positions."""

    t: float  # seconds
    tx_power: float  # dBm
    snr: float  # dB
    tx_pos: Vec3  # metres
    rx_pos: Vec3  # metres
    tx_gain: float  # dBi
    rx_gain: float  # dBi
    freq: float  # MHz
    bandwidth: float  # MHz

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0 MHz, got {self.bandwidth}")
        if not self.freq > 0:
            raise ValueError(f"frequency must be > 0 MHz, got {self.freq}")


@dataclass(frozen=True)
class PathLossSample:
    """A (distance, path loss) training pair."""

    distance: float  # metres
    path_loss: float  # dB

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be > 0 m, got {self.distance}")
        if not math.isfinite(self.path_loss):
            raise ValueError(f"path loss must be finite, got {self.path_loss}")


def distance(tx_pos: Vec3, rx_pos: Vec3) -> float:
    """Euclidean distance between two 3-D positions, metres."""
    return math.dist(tx_pos, rx_pos)


def noise_floor(bandwidth: float, cfg: RadioConfig = RadioConfig()) -> float:
    """Thermal noise power over ``bandwidth`` MHz plus the receiver noise figure, dBm."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0 MHz, got {bandwidth}")
    return cfg.thermal_noise_density + 10.0 * math.log10(bandwidth * 1e6) + cfg.noise_figure


def record_to_sample(rec: TraceRecord, cfg: RadioConfig = RadioConfig()) -> PathLossSample:
    """Convert a raw record into a (distance, path loss) pair via the link budget.

    The logged SNR is referenced back to absolute received power using the
    noise floor, so the resulting path loss does not depend on the transmit
    power used during the capture:

        rx_power  = snr + noise_floor(bandwidth)
        path_loss = tx_power + tx_gain + rx_gain - rx_power
    """
    d = distance(rec.tx_pos, rec.rx_pos)
    if d <= 0:
        raise ValidationError(f"coincident nodes at t={rec.t}: distance must be > 0")
    rx_power = rec.snr + noise_floor(rec.bandwidth, cfg)
    path_loss = rec.tx_power + rec.tx_gain + rec.rx_gain - rx_power
    return PathLossSample(distance=d, path_loss=path_loss)


def records_to_samples(records, cfg: RadioConfig = RadioConfig()) -> list[PathLossSample]:
    return [record_to_sample(rec, cfg) for rec in records]


def _content_lines(path):
    """Yield (line_number, text) for non-blank, non-comment lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            yield lineno, text


def _split_row(text: str, n_fields: int, path, lineno: int) -> list[float]:
    parts = text.split(",")
    if len(parts) != n_fields:
        raise FileFormatError(
            f"expected {n_fields} fields, got {len(parts)}", path=path, line=lineno
        )
    values = []
    for part in parts:
        try:
            values.append(float(part))
        except ValueError:
            raise FileFormatError(f"not a number: {part!r}", path=path, line=lineno) from None
    return values


def _check_header(text: str, expected: str, path, lineno: int):
    if text != expected:
        raise FileFormatError(
            f"bad header {text!r}, expected {expected!r}", path=path, line=lineno
        )


def parse_simple(path) -> list[PathLossSample]:
    """Parse a simple-format CSV into path-loss samples, preserving row order."""
    samples = []
    header_seen = False
    for lineno, text in _content_lines(path):
        if not header_seen:
            _check_header(text, SIMPLE_HEADER, path, lineno)
            header_seen = True
            continue
        d, pl = _split_row(text, 2, path, lineno)
        try:
            samples.append(PathLossSample(distance=d, path_loss=pl))
        except ValueError as exc:
            raise ValidationError(str(exc), path=path, line=lineno) from None
    if not header_seen:
        raise FileFormatError(f"missing header {SIMPLE_HEADER!r}", path=path)
    return samples


def parse_raw(path) -> list[TraceRecord]:
    """Parse a raw-format CSV into trace records, preserving file order.

    Timestamps must be non-decreasing; the first offending row is reported.
    """
    records = []
    header_seen = False
    prev_t = None
    for lineno, text in _content_lines(path):
        if not header_seen:
            _check_header(text, RAW_HEADER, path, lineno)
            header_seen = True
            continue
        v = _split_row(text, 13, path, lineno)
        try:
            rec = TraceRecord(
                t=v[0],
                tx_power=v[1],
                snr=v[2],
                tx_pos=(v[3], v[4], v[5]),
                rx_pos=(v[6], v[7], v[8]),
                tx_gain=v[9],
                rx_gain=v[10],
                freq=v[11],
                bandwidth=v[12],
            )
        except ValueError as exc:
            raise ValidationError(str(exc), path=path, line=lineno) from None
        if prev_t is not None and rec.t < prev_t:
            raise ValidationError(
                f"timestamps must be non-decreasing: t={rec.t} after t={prev_t}",
                path=path,
                line=lineno,
            )
        prev_t = rec.t
        records.append(rec)
    if not header_seen:
        raise FileFormatError(f"missing header {RAW_HEADER!r}", path=path)
    return records


def write_simple(samples, path):
    """Write samples in the simple format. Floats use shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SIMPLE_HEADER + "\n")
        for s in samples:
            fh.write(f"{float(s.distance)!r},{float(s.path_loss)!r}\n")


def write_raw(records, path):
    """Write records in the raw format. Floats use shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RAW_HEADER + "\n")
        for r in records:
            fields = (
                r.t, r.tx_power, r.snr,
                r.tx_pos[0], r.tx_pos[1], r.tx_pos[2],
                r.rx_pos[0], r.rx_pos[1], r.rx_pos[2],
                r.tx_gain, r.rx_gain, r.freq, r.bandwidth,
            )
            fh.write(",".join(repr(float(x)) for x in fields) + "\n")
