"""Seeded, replayable random streams and inverse-transform fading sampling.

Generator pin: numpy's PCG64 (O'Neill's permuted congruential generator,
128-bit state), one statistically independent stream per (seed, stream_id)
through ``SeedSequence(seed, spawn_key=(stream_id,))``. A stream's output is a
pure function of that pair, so simulations replay exactly; the draw count is
tracked so an interrupted stream can be restored mid-sequence.
"""

from __future__ import annotations

import numpy as np

from .fading import CdfTable


class RngStream:
    """Single-owner uniform stream. Never share one stream between threads."""

    def __init__(self, seed: int, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if seed < 0:
            raise ValueError(f"seed must be a non-negative 64-bit integer, got {seed}")
        if stream_id < 0:
            raise ValueError(f"stream_id must be non-negative, got {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        self.draw_count = 0
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def uniform(self) -> float:
        """One double in [0, 1); advances the stream by exactly one draw."""
        self.draw_count += 1
        return float(self._generator.random())

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1); advances the stream by exactly ``n`` draws."""
        self.draw_count += int(n)
        return self._generator.random(int(n))

    def state(self) -> tuple:
        """(seed, stream_id, draw_count) — everything needed to replay."""
        return (self.seed, self.stream_id, self.draw_count)

    @classmethod
    def restore(cls, seed: int, stream_id: int, draw_count: int) -> "RngStream":
        """Rebuild a stream positioned exactly after ``draw_count`` draws."""
        stream = cls(seed, stream_id)
        if draw_count:
            # One uniform double consumes one 64-bit PCG64 step.
            stream._generator.bit_generator.advance(int(draw_count))
            stream.draw_count = int(draw_count)
        return stream

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, draws={self.draw_count})"


def make_stream(seed: int, stream_id: int = 0) -> RngStream:
    return RngStream(seed, stream_id)


def interpolate_table(table: CdfTable, u):
    """Invert the CDF table at probability ``u`` with linear interpolation.

    Finds the bracket (l1, p1), (l2, p2) with p1 <= u < p2 and interpolates;
    probabilities tied with the bracket edge resolve to the first bracket.
    Anything below the first probability maps to the first loss.
    """
    u_arr = np.asarray(u, dtype=float)
    idx = np.searchsorted(table.probs, u_arr, side="right")
    idx = np.clip(idx, 1, len(table.probs) - 1)
    p1 = table.probs[idx - 1]
    p2 = table.probs[idx]
    l1 = table.losses[idx - 1]
    l2 = table.losses[idx]
    out = l1 + (u_arr - p1) * (l2 - l1) / (p2 - p1)
    out = np.where(u_arr < table.probs[0], table.losses[0], out)
    return float(out) if out.ndim == 0 else out


def sample_fading(table: CdfTable, rng: RngStream) -> float:
    """One fading draw (dB) from the table; consumes exactly one uniform."""
    return float(interpolate_table(table, rng.uniform()))


def sample_fading_many(table: CdfTable, rng: RngStream, n: int) -> np.ndarray:
    """``n`` fading draws; consumes exactly ``n`` uniforms."""
    return interpolate_table(table, rng.uniforms(n))
