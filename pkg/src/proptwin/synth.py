"""Synthetic raw-trace generation for closed-loop verification.

Builds raw records whose path loss is a known log-distance curve plus a known
fading draw, then encodes them as SNR through the same link budget the
ingestion step inverts. Training on such a trace can therefore be scored
against the exact generating formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import LogDistanceParams, log_distance_loss
from .fading import FadingFit
from .randvar import RngStream
from .traces import RadioConfig, TraceRecord, noise_floor

# Keeps analytic quantiles finite when a uniform draw lands exactly on 0.
_U_EPS = 1e-12


@dataclass(frozen=True)
class SynthConfig:
    pathloss: LogDistanceParams = LogDistanceParams(ref_distance=1.0, ref_loss=47.0, exponent=2.2)
    fading: FadingFit | None = field(default_factory=lambda: FadingFit("normal", (0.0, 4.0)))
    d_min: float = 2.0
    d_max: float = 24.0
    n_samples: int = 10_000
    tx_power: float = 7.0  # dBm
    tx_gain: float = -7.0  # dBi
    rx_gain: float = -7.0  # dBi
    freq: float = 5220.0  # MHz
    bandwidth: float = 20.0  # MHz
    noise: RadioConfig = RadioConfig()
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0 < self.d_min <= self.d_max:
            raise ValueError(f"need 0 < d_min <= d_max, got [{self.d_min}, {self.d_max}]")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")


def true_loss(cfg: SynthConfig, d: float) -> float:
    """The generator's deterministic path loss at distance ``d``."""
    return log_distance_loss(d, cfg.pathloss)


def sample_distances(cfg: SynthConfig) -> np.ndarray:
    """Linear sweep from d_min to d_max, one position per second of trace time."""
    if cfg.n_samples == 1:
        return np.array([cfg.d_min])
    return np.linspace(cfg.d_min, cfg.d_max, cfg.n_samples)


def generate_records(cfg: SynthConfig) -> list[TraceRecord]:
    """One record per second: mobile transmitter sweeping away from a fixed receiver."""
    rng = RngStream(cfg.seed, cfg.stream_id)
    nf = noise_floor(cfg.bandwidth, cfg.noise)
    records = []
    for i, d in enumerate(sample_distances(cfg)):
        loss = true_loss(cfg, float(d))
        if cfg.fading is not None:
            u = min(max(rng.uniform(), _U_EPS), 1.0 - _U_EPS)
            loss += float(cfg.fading.quantile(u))
        rx = cfg.tx_power + cfg.tx_gain + cfg.rx_gain - loss
        records.append(TraceRecord(
            t=float(i),
            tx_power=cfg.tx_power,
            snr=rx - nf,
            tx_pos=(float(d), 0.0, 0.0),
            rx_pos=(0.0, 0.0, 0.0),
            tx_gain=cfg.tx_gain,
            rx_gain=cfg.rx_gain,
            freq=cfg.freq,
            bandwidth=cfg.bandwidth,
        ))
    return records
