"""Total propagation loss: a deterministic distance model plus optional fading.

An engine pairs one deterministic variant (trained tree model, Friis, or
Log-distance) with an optional stochastic fading source (CDF table + seeded
stream). Every total-loss query adds exactly one fading draw when fading is
configured, so two engines with equal models, tables and (seed, stream_id)
produce identical loss sequences for identical query sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import baselines, pathloss
from .fading import CdfTable
from .randvar import RngStream, sample_fading

VARIANTS = ("mlpl", "friis", "log-distance")


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float  # dBm
    tx_gain: float  # dBi
    rx_gain: float  # dBi

    def __post_init__(self):
        for name in ("tx_power", "tx_gain", "rx_gain"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")


def rx_power(budget: LinkBudget, loss: float) -> float:
    """Received power in dBm: tx_power + tx_gain + rx_gain - loss."""
    return budget.tx_power + budget.tx_gain + budget.rx_gain - loss


class PropagationEngine:
    """One deterministic loss variant plus an optional fading source.

    An engine with fading owns its RngStream and is single-owner; a
    fading-free engine is a pure function of distance and freely shareable.
    Construct through the ``mlpl``, ``friis`` or ``log_distance`` class
    methods.
    """

    def __init__(self, variant: str, *, model=None, freq=None, params=None, fading=None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        self.variant = variant
        self.model = model
        self.freq = freq
        self.params = params
        if fading is not None:
            table, rng = fading
            if not isinstance(table, CdfTable) or not isinstance(rng, RngStream):
                raise ValueError("fading must be a (CdfTable, RngStream) pair")
        self.fading = fading

    @classmethod
    def mlpl(cls, model: pathloss.PathLossModel, fading=None) -> "PropagationEngine":
        return cls("mlpl", model=model, fading=fading)

    @classmethod
    def friis(cls, freq: float, fading=None) -> "PropagationEngine":
        if not freq > 0:
            raise ValueError(f"frequency must be > 0 MHz, got {freq}")
        return cls("friis", freq=freq, fading=fading)

    @classmethod
    def log_distance(cls, params: baselines.LogDistanceParams, fading=None) -> "PropagationEngine":
        return cls("log-distance", params=params, fading=fading)

    def deterministic_loss(self, d: float) -> float:
        """The path-loss component only, dB."""
        if not d > 0:
            raise ValueError(f"distance must be > 0 m, got {d}")
        if self.variant == "mlpl":
            return pathloss.predict(self.model, d)
        if self.variant == "friis":
            return baselines.friis_loss(d, self.freq)
        return baselines.log_distance_loss(d, self.params)

    def total_loss(self, d: float) -> float:
        """Path loss plus one fading draw (0 dB when fading is absent).

        Deep fades below the deterministic loss pass through unclamped; the
        SNR computation downstream handles them naturally.
        """
        loss = self.deterministic_loss(d)
        if self.fading is not None:
            table, rng = self.fading
            loss += sample_fading(table, rng)
        return loss
