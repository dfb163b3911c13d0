"""Fast-fading isolation, distribution fitting, and CDF-table export.

The stochastic component of the propagation loss is isolated by subtracting,
from every sample, the mean path loss of its one-metre distance bin. Normal,
Rayleigh and Rician candidates are then fitted to the pooled residuals by
maximum likelihood, scored by the sum of squared errors between each fitted
density and a density-normalised histogram, and the winner is exported as a
(loss dB, cumulative probability) table for inverse-transform sampling.

Rayleigh and Rician use a location shift (and Rician a shape ``b``), matching
the common three-parameter convention, because fading residuals are signed and
centred near zero while both families have semi-infinite support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import rice

from .errors import FileFormatError, FitError, ValidationError

FAMILIES = ("normal", "rayleigh", "rician")
_PARAM_NAMES = {
    "normal": ("mean", "std"),
    "rayleigh": ("loc", "scale"),
    "rician": ("b", "loc", "scale"),
}

CDF_HEADER = "loss_db,cum_prob"
TAIL_QUANTILE = 1e-4

# Nelder-Mead settings shared by the Rayleigh and Rician refinements: at most
# 500 iterations, simplex tolerance 1e-8 on the parameters.
_NM_OPTIONS = {"maxiter": 500, "xatol": 1e-8, "fatol": 1e-10}

# A later family displaces an earlier one only when its SSE is smaller by this
# relative margin; near-equal scores (nested families fitting the same shape)
# resolve to the earlier family in FAMILIES order.
SSE_TIE_REL_TOL = 0.05


@dataclass(frozen=True, eq=False)
class Residuals:
    """Pooled fading residuals plus the per-metre mean they were measured against."""

    values: np.ndarray  # dB offsets, one per input sample, input order
    per_metre_mean: dict  # int metre bin -> mean path loss dB


def extract_residuals(samples) -> Residuals:
    """Subtract the per-metre mean path loss from every sample.

    Bins are floor(distance) in metres; bins exist only where samples exist.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    d = np.array([s.distance for s in samples], dtype=float)
    y = np.array([s.path_loss for s in samples], dtype=float)
    bins = np.floor(d).astype(int)
    per_metre = {int(b): float(y[bins == b].mean()) for b in np.unique(bins)}
    values = y - np.array([per_metre[int(b)] for b in bins])
    return Residuals(values=values, per_metre_mean=per_metre)


def _series_term_count(q_max: float) -> int:
    """Terms needed for the I0 power series to converge at q = z^2/4 = q_max."""
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        term *= q_max / (k * k)
        total += term
        if term <= 1e-17 * total:
            return k
    return 200


def _series_log_i0(q: np.ndarray) -> np.ndarray:
    """log of the I0 power series at q = z^2/4; fixed-count in-place summation."""
    if q.size == 0:
        return q.copy()
    n_terms = _series_term_count(float(q.max()))
    term = q.copy()
    total = 1.0 + term
    for k in range(2, n_terms + 1):
        term *= q
        term *= 1.0 / (k * k)
        total += term
    return np.log(total)


def _asymptotic_log_i0(zl: np.ndarray) -> np.ndarray:
    corr = (1.0 + 1.0 / (8.0 * zl) + 9.0 / (128.0 * zl**2)
            + 225.0 / (3072.0 * zl**3) + 11025.0 / (98304.0 * zl**4))
    return zl - 0.5 * np.log(2.0 * np.pi * zl) + np.log(corr)


def log_bessel_i0(z):
    """log(I0(z)) without overflow: power series below 30, asymptotic above."""
    arr = np.abs(np.asarray(z, dtype=float))
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)

    if not arr.size or arr.max() <= 30.0:  # common case: one series pass, no masks
        out = _series_log_i0(arr * arr / 4.0)
        return float(out[0]) if scalar else out

    out = np.empty_like(arr)
    small = arr <= 30.0
    zs = arr[small]
    out[small] = _series_log_i0(zs * zs / 4.0)
    out[~small] = _asymptotic_log_i0(arr[~small])
    return float(out[0]) if scalar else out


def normal_pdf(x, mean: float, std: float):
    x = np.asarray(x, dtype=float)
    z = (x - mean) / std
    return np.exp(-0.5 * z * z) / (std * math.sqrt(2.0 * math.pi))


def rayleigh_pdf(x, loc: float, scale: float):
    x = np.asarray(x, dtype=float)
    y = (x - loc) / scale
    out = np.zeros_like(y)
    pos = y > 0
    out[pos] = y[pos] * np.exp(-0.5 * y[pos] * y[pos]) / scale
    return out


def rician_pdf(x, b: float, loc: float, scale: float):
    x = np.asarray(x, dtype=float)
    y = (x - loc) / scale
    out = np.zeros_like(y)
    pos = y > 0
    yp = y[pos]
    log_pdf = np.log(yp) - 0.5 * (yp * yp + b * b) + log_bessel_i0(yp * b)
    out[pos] = np.exp(log_pdf) / scale
    return out


def normal_nll(values, mean: float, std: float) -> float:
    if not std > 0:
        return math.inf
    v = np.asarray(values, dtype=float)
    z = (v - mean) / std
    return float(0.5 * np.sum(z * z) + len(v) * (math.log(std) + 0.5 * math.log(2.0 * math.pi)))


def rayleigh_nll(values, loc: float, scale: float) -> float:
    if not scale > 0:
        return math.inf
    v = np.asarray(values, dtype=float)
    y = (v - loc) / scale
    if y.min() <= 0:
        return math.inf
    return float(np.sum(-np.log(y) + 0.5 * y * y) + len(v) * math.log(scale))


def rician_nll(values, b: float, loc: float, scale: float) -> float:
    if not scale > 0 or b < 0:
        return math.inf
    v = np.asarray(values, dtype=float)
    y = (v - loc) / scale
    if y.min() <= 0:
        return math.inf
    y_sq = y * y
    q = y_sq * (b * b / 4.0)  # (y*b)^2 / 4, the I0 series argument
    if q.size == 0 or q.max() <= 225.0:  # y*b <= 30 everywhere: one series pass
        log_i0_total = float(np.sum(_series_log_i0(q)))
    else:
        log_i0_total = float(np.sum(log_bessel_i0(y * b)))
    n = len(v)
    return float(
        0.5 * (np.sum(y_sq) + n * b * b)
        - np.sum(np.log(y))
        - log_i0_total
        + n * math.log(scale)
    )


@dataclass(frozen=True)
class FadingFit:
    """A fitted fading distribution: family tag, parameters, selection score."""

    family: str
    params: tuple
    sse: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if len(self.params) != len(_PARAM_NAMES[self.family]):
            raise ValueError(
                f"{self.family} takes parameters {_PARAM_NAMES[self.family]}, got {self.params}"
            )
        if not self.params[-1] > 0:  # std / scale is always last
            raise ValueError(f"scale must be > 0, got {self.params[-1]}")
        if self.family == "rician" and self.params[0] < 0:
            raise ValueError(f"rician shape b must be >= 0, got {self.params[0]}")
        if self.sse < 0:
            raise ValueError(f"sse must be >= 0, got {self.sse}")

    @property
    def param_names(self) -> tuple:
        return _PARAM_NAMES[self.family]

    def param_dict(self) -> dict:
        return dict(zip(self.param_names, self.params))

    def pdf(self, x):
        if self.family == "normal":
            return normal_pdf(x, *self.params)
        if self.family == "rayleigh":
            return rayleigh_pdf(x, *self.params)
        return rician_pdf(x, *self.params)

    def quantile(self, q):
        """Analytic inverse CDF at probability ``q`` (scalar or array)."""
        q = np.asarray(q, dtype=float)
        if self.family == "normal":
            mean, std = self.params
            out = mean + std * ndtri(q)
        elif self.family == "rayleigh":
            loc, scale = self.params
            out = loc + scale * np.sqrt(-2.0 * np.log1p(-q))
        else:
            b, loc, scale = self.params
            out = rice.ppf(q, b, loc=loc, scale=scale)
        return float(out) if out.ndim == 0 else out

    def nll(self, values) -> float:
        if self.family == "normal":
            return normal_nll(values, *self.params)
        if self.family == "rayleigh":
            return rayleigh_nll(values, *self.params)
        return rician_nll(values, *self.params)


def _checked_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError(f"need at least 2 values, got {v.size}")
    if v.max() == v.min():
        raise ValueError("degenerate input: all values are equal")
    return v


def fit_normal(values) -> FadingFit:
    """Closed-form maximum likelihood: sample mean and population (1/N) std."""
    v = _checked_values(values)
    mean = float(v.mean())
    std = float(np.sqrt(np.mean((v - mean) ** 2)))
    return FadingFit("normal", (mean, std))


def _refine(nll, x0, family: str) -> tuple:
    n_points = nll.n_points
    result = minimize(
        lambda p: nll(*p) / n_points, x0, method="Nelder-Mead", options=_NM_OPTIONS
    )
    params = tuple(float(p) for p in result.x)
    if not result.success:
        try:
            best = FadingFit(family, params)
        except ValueError:
            best = None
        raise FitError(
            f"{family} fit did not converge within {_NM_OPTIONS['maxiter']} iterations",
            best=best,
        )
    return params


class _Objective:
    """Wraps an NLL function with the sample array and records the sample count."""

    def __init__(self, fn, values):
        self._fn = fn
        self._values = values
        self.n_points = len(values)

    def __call__(self, *params):
        return self._fn(self._values, *params)


def fit_rayleigh(values) -> FadingFit:
    """Two-parameter (location, scale) maximum-likelihood Rayleigh fit.

    Location starts at min(values) minus a small margin, scale at its
    closed-form MLE given that location, then both are refined jointly by
    Nelder-Mead on the negative log-likelihood.
    """
    v = _checked_values(values)
    span = float(v.max() - v.min())
    loc0 = float(v.min()) - 0.01 * span
    scale0 = float(np.sqrt(np.mean((v - loc0) ** 2) / 2.0))
    params = _refine(_Objective(rayleigh_nll, v), [loc0, scale0], "rayleigh")
    return FadingFit("rayleigh", params)


def fit_rician(values) -> FadingFit:
    """Three-parameter (shape b, location, scale) maximum-likelihood Rician fit.

    Initialised by moments of the location-shifted data, refined by
    Nelder-Mead; log-domain Bessel evaluation keeps the likelihood finite for
    large shape values.
    """
    v = _checked_values(values)
    span = float(v.max() - v.min())
    loc0 = float(v.min()) - 0.01 * span
    z = v - loc0
    m1 = float(np.mean(z))
    m2 = float(np.mean(z * z))
    nu_sq = max(m1 * m1 - (m2 - m1 * m1), 0.0)
    scale0 = math.sqrt(max((m2 - nu_sq) / 2.0, m2 * 1e-4))
    b0 = math.sqrt(nu_sq) / scale0
    params = _refine(_Objective(rician_nll, v), [b0, loc0, scale0], "rician")
    return FadingFit("rician", params)


_FITTERS = (("normal", fit_normal), ("rayleigh", fit_rayleigh), ("rician", fit_rician))


def fit_all(values) -> list:
    """Fit every candidate family, scored by histogram SSE (see select_fading).

    Families whose optimizer fails to converge are skipped.
    """
    v = np.asarray(values, dtype=float)
    fits = []
    for _, fitter in _FITTERS:
        try:
            fits.append(fitter(v))
        except FitError:
            continue
    return fits


def select_fading(values, n_bins: int = 100, tie_rel_tol: float = SSE_TIE_REL_TOL) -> FadingFit:
    """Fit all families and return the one with minimum histogram SSE.

    The histogram is equal-width over [min, max] with ``n_bins`` bins,
    density-normalised; the SSE compares bin-centre densities against each
    fitted PDF. Near-equal scores resolve to the earlier family in FAMILIES
    order (Normal before Rayleigh before Rician).
    """
    v = np.asarray(values, dtype=float)
    if v.size < 30:
        raise ValueError(f"need at least 30 values to select a fading family, got {v.size}")
    hist, edges = np.histogram(v, bins=n_bins, range=(v.min(), v.max()), density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])

    scored = []
    for fit in fit_all(v):
        sse = float(np.sum((hist - fit.pdf(centres)) ** 2))
        scored.append(replace(fit, sse=sse))
    if not scored:
        raise FitError("no fading family could be fitted to the residuals")

    best = scored[0]
    for candidate in scored[1:]:
        if candidate.sse < best.sse * (1.0 - tie_rel_tol):
            best = candidate
    return best


@dataclass(frozen=True, eq=False)
class CdfTable:
    """Sampled (loss dB, cumulative probability) pairs for inverse sampling."""

    losses: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "probs", probs)
        if losses.shape != probs.shape or losses.ndim != 1:
            raise ValidationError("losses and probs must be 1-D arrays of equal length")
        if len(losses) < 2:
            raise ValidationError(f"need at least 2 points, got {len(losses)}")
        if not np.all(np.diff(losses) > 0):
            raise ValidationError("losses must be strictly increasing")
        if not np.all(np.diff(probs) >= 0):
            raise ValidationError("cumulative probabilities must be non-decreasing")
        if probs[0] != 0.0 or probs[-1] != 1.0:
            raise ValidationError("cumulative probabilities must start at 0 and end at 1")
        losses.setflags(write=False)
        probs.setflags(write=False)

    def __len__(self):
        return len(self.losses)

    @property
    def points(self) -> list:
        return list(zip(self.losses.tolist(), self.probs.tolist()))


def to_cdf_table(fit: FadingFit, n_points: int = 1000) -> CdfTable:
    """Export a fit as a CDF table on an even probability grid.

    Interior losses sit at the analytic inverse CDF of i/(n_points-1); the end
    losses are the 1e-4 and 1-1e-4 quantiles with their probabilities clamped
    to 0 and 1 so the table spans a valid, bounded sampling support.
    """
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    probs = np.linspace(0.0, 1.0, n_points)
    q = probs.copy()
    q[0] = TAIL_QUANTILE
    q[-1] = 1.0 - TAIL_QUANTILE
    losses = np.asarray(fit.quantile(q), dtype=float)
    return CdfTable(losses=losses, probs=probs)


def write_cdf_table(table: CdfTable, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CDF_HEADER + "\n")
        for loss, prob in zip(table.losses, table.probs):
            fh.write(f"{float(loss)!r},{float(prob)!r}\n")


def read_cdf_table(path) -> CdfTable:
    losses = []
    probs = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                if text != CDF_HEADER:
                    raise FileFormatError(
                        f"bad header {text!r}, expected {CDF_HEADER!r}", path=path, line=lineno
                    )
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise FileFormatError(f"expected 2 fields, got {len(parts)}", path=path, line=lineno)
            try:
                losses.append(float(parts[0]))
                probs.append(float(parts[1]))
            except ValueError:
                raise FileFormatError(f"not a number in {text!r}", path=path, line=lineno) from None
    if not header_seen:
        raise FileFormatError(f"missing header {CDF_HEADER!r}", path=path)
    try:
        return CdfTable(losses=np.array(losses), probs=np.array(probs))
    except ValidationError as exc:
        raise ValidationError(str(exc), path=path) from None
