"""Evaluation statistics: quantiles by distance bin, boxplot stats, data splits.

The quantile rule everywhere is linear interpolation on an (N-1) index
spacing, matching the convention of the usual numeric plotting stacks, so
independent oracles agree exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .traces import PathLossSample

EXTRAPOLATION = "extrapolation"
INTERPOLATION = "interpolation"
FULL_SET = "full-set"
SCENARIOS = (EXTRAPOLATION, INTERPOLATION, FULL_SET)

PERCENTILE_CURVE_HEADER = "bin_m,p25,p50,p75,count"
PERCENTILE_DIFF_HEADER = "bin_m,d25,d50,d75"
BOX_STATS_HEADER = "q1,median,q3,whisker_low,whisker_high,outliers"


def percentile(values, q: float) -> float:
    """Quantile at fraction ``q`` with linear interpolation between order stats."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("cannot take a percentile of an empty set")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    h = q * (len(vals) - 1)
    low = math.floor(h)
    high = math.ceil(h)
    if low == high:
        return vals[int(h)]
    return vals[low] + (h - low) * (vals[high] - vals[low])


@dataclass(frozen=True)
class PercentileBin:
    centre: float  # metres
    p25: float
    p50: float
    p75: float
    count: int


@dataclass(frozen=True)
class PercentileCurve:
    bins: tuple
    bin_width: float


def percentile_curve(samples, bin_width: float = 1.0) -> PercentileCurve:
    """Per-distance-bin 25th/50th/75th percentiles; empty bins are omitted.

    Bin k covers [k*bin_width, (k+1)*bin_width) and is reported at its centre.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    if not bin_width > 0:
        raise ValueError(f"bin width must be > 0 m, got {bin_width}")
    grouped: dict = {}
    for s in samples:
        grouped.setdefault(int(math.floor(s.distance / bin_width)), []).append(s.path_loss)
    bins = []
    for k in sorted(grouped):
        losses = grouped[k]
        bins.append(PercentileBin(
            centre=(k + 0.5) * bin_width,
            p25=percentile(losses, 0.25),
            p50=percentile(losses, 0.50),
            p75=percentile(losses, 0.75),
            count=len(losses),
        ))
    return PercentileCurve(bins=tuple(bins), bin_width=bin_width)


@dataclass(frozen=True)
class PercentileDiff:
    centre: float
    d25: float
    d50: float
    d75: float


def percentile_diff(model_curve: PercentileCurve, real_curve: PercentileCurve) -> list:
    """Absolute per-bin percentile differences, over bins present in both curves."""
    if model_curve.bin_width != real_curve.bin_width:
        raise ValueError(
            f"curves use different bin widths: {model_curve.bin_width} vs {real_curve.bin_width}"
        )
    real_by_centre = {b.centre: b for b in real_curve.bins}
    diffs = []
    for mb in model_curve.bins:
        rb = real_by_centre.get(mb.centre)
        if rb is None:
            continue
        diffs.append(PercentileDiff(
            centre=mb.centre,
            d25=abs(mb.p25 - rb.p25),
            d50=abs(mb.p50 - rb.p50),
            d75=abs(mb.p75 - rb.p75),
        ))
    if not diffs:
        warnings.warn("percentile curves share no distance bins", stacklevel=2)
    return diffs


@dataclass(frozen=True)
class BoxStats:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple


def box_stats(values) -> BoxStats:
    """Boxplot statistics with the 1.5 x IQR outlier rule.

    Whiskers are the extreme values inside [q1 - 1.5*IQR, q3 + 1.5*IQR];
    everything outside is an outlier.
    """
    vals = [float(v) for v in values]
    if len(vals) < 4:
        raise ValueError(f"need at least 4 values for box statistics, got {len(vals)}")
    q1 = percentile(vals, 0.25)
    median = percentile(vals, 0.50)
    q3 = percentile(vals, 0.75)
    iqr = q3 - q1
    fence_low = q1 - 1.5 * iqr
    fence_high = q3 + 1.5 * iqr
    inside = [v for v in vals if fence_low <= v <= fence_high]
    outliers = tuple(v for v in vals if not fence_low <= v <= fence_high)
    return BoxStats(
        q1=q1, median=median, q3=q3,
        whisker_low=min(inside), whisker_high=max(inside),
        outliers=outliers,
    )


@dataclass(frozen=True)
class ScenarioSplit:
    name: str
    train: list
    test: list


def _in_interpolation_train(d: float) -> bool:
    # Closed on the train side for the 10..15 m band, open at 5 and 20 m.
    return d < 5.0 or 10.0 <= d <= 15.0 or d > 20.0


def make_split(samples, scenario: str) -> ScenarioSplit:
    """Partition samples for an evaluation scenario.

    extrapolation: train below 10 m, test at 10 m and beyond.
    interpolation: train below 5 m, within [10, 15] m, and above 20 m;
                   test in the gaps.
    full-set:      train and test are both the complete sample set (an
                   external held-out run, when available, bypasses this split).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    name = scenario.strip().lower().replace("_", "-")
    if name == "fullset":
        name = FULL_SET
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")

    if name == FULL_SET:
        train, test = samples, samples
    elif name == EXTRAPOLATION:
        train = [s for s in samples if s.distance < 10.0]
        test = [s for s in samples if s.distance >= 10.0]
    else:
        train = [s for s in samples if _in_interpolation_train(s.distance)]
        test = [s for s in samples if not _in_interpolation_train(s.distance)]

    if not train:
        raise ValueError(f"{name} scenario has an empty training partition")
    if not test:
        raise ValueError(f"{name} scenario has an empty test partition")
    return ScenarioSplit(name=name, train=train, test=test)


def write_percentile_curve(curve: PercentileCurve, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PERCENTILE_CURVE_HEADER + "\n")
        for b in curve.bins:
            fh.write(f"{float(b.centre)!r},{float(b.p25)!r},{float(b.p50)!r},{float(b.p75)!r},{b.count}\n")


def write_percentile_diff(diffs, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PERCENTILE_DIFF_HEADER + "\n")
        for d in diffs:
            fh.write(f"{float(d.centre)!r},{float(d.d25)!r},{float(d.d50)!r},{float(d.d75)!r}\n")


def write_box_stats(stats: BoxStats, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(BOX_STATS_HEADER + "\n")
        outliers = ";".join(repr(float(v)) for v in stats.outliers)
        fh.write(
            f"{float(stats.q1)!r},{float(stats.median)!r},{float(stats.q3)!r},"
            f"{float(stats.whisker_low)!r},{float(stats.whisker_high)!r},{outliers}\n"
        )
