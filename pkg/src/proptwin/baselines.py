"""Closed-form propagation-loss baselines: Friis free space and Log-distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class LogDistanceParams:
    ref_distance: float  # metres
    ref_loss: float  # dB at ref_distance
    exponent: float

    def __post_init__(self):
        if not self.ref_distance > 0:
            raise ValueError(f"reference distance must be > 0 m, got {self.ref_distance}")
        if not self.exponent > 0:
            raise ValueError(f"path-loss exponent must be > 0, got {self.exponent}")


def friis_loss(d: float, freq: float) -> float:
    """Free-space path loss in dB at distance ``d`` metres and ``freq`` MHz.

    20*log10(4*pi*d*f/c) with unit system loss.
    """
    if not d > 0:
        raise ValueError(f"distance must be > 0 m, got {d}")
    if not freq > 0:
        raise ValueError(f"frequency must be > 0 MHz, got {freq}")
    return 20.0 * math.log10(4.0 * math.pi * d * freq * 1e6 / SPEED_OF_LIGHT)


def log_distance_loss(d: float, params: LogDistanceParams) -> float:
    """Log-distance path loss in dB: ref_loss + 10*n*log10(d/d0)."""
    if not d > 0:
        raise ValueError(f"distance must be > 0 m, got {d}")
    return params.ref_loss + 10.0 * params.exponent * math.log10(d / params.ref_distance)


def default_log_distance(freq: float, exponent: float = 3.0) -> LogDistanceParams:
    """Indoor-flavoured defaults: 1 m reference anchored to free space at ``freq``."""
    return LogDistanceParams(ref_distance=1.0, ref_loss=friis_loss(1.0, freq), exponent=exponent)
