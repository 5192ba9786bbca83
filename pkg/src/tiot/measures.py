"""Time series, discrete measures, and the two-part TiOT ground cost.

A time series ``(x_i, t_i)`` is lifted to a discrete measure in
feature x time space. Between two measures the cost is split into a
feature part ``Gamma_ij = ||x_i - y_j||_p^p`` and a temporal part
``Phi_ij = |t_i - s_j|^p``; the blended cost for a weight ``w`` in
[0, 1] is ``C(w) = w * Gamma + (1 - w) * Phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError

WEIGHT_SUM_TOL = 1e-9


def _readonly(arr: NDArray) -> NDArray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Ordered samples ``values[i]`` observed at ``timestamps[i]``.

    ``values`` is stored as an ``(m, d)`` float array; a 1-D input is
    treated as a univariate series. Timestamps need not be monotone.
    """

    values: NDArray[np.float64]
    timestamps: NDArray[np.float64]
    label: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise InvalidInputError(f"values must be 1-D or 2-D, got shape {values.shape}")
        times = np.array(self.timestamps, dtype=float).reshape(-1)
        if values.shape[0] == 0:
            raise InvalidInputError("time series must have at least one sample")
        if times.shape[0] != values.shape[0]:
            raise InvalidInputError(
                f"{values.shape[0]} values but {times.shape[0]} timestamps"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(times))):
            raise InvalidInputError("values and timestamps must be finite")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "timestamps", _readonly(times))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @classmethod
    def from_values(cls, values: ArrayLike, label: Optional[int] = None, start: int = 1):
        """Series with evenly spaced integer timestamps ``start, start+1, ...``."""
        values = np.asarray(values, dtype=float)
        return cls(values, np.arange(start, start + values.shape[0], dtype=float), label)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _zscore_columns(x: NDArray) -> NDArray:
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std (ddof=0)
    centered = x - mean
    out = np.zeros_like(centered)
    nz = std > 0
    out[:, nz] = centered[:, nz] / std[nz]
    return out


def zscore_normalize(series: TimeSeries) -> TimeSeries:
    """Standardize every feature dimension and the timestamps independently.

    Uses the population standard deviation. A dimension with zero
    variance becomes all zeros.
    """
    if len(series) == 0:
        raise InvalidInputError("cannot normalize an empty series")
    values = _zscore_columns(series.values)
    times = _zscore_columns(series.timestamps[:, None])[:, 0]
    return TimeSeries(values, times, series.label)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms ``sum_i a_i delta_(x_i, t_i)``."""

    features: NDArray[np.float64]
    times: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        times = np.array(self.times, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if not (feats.shape[0] == times.shape[0] == weights.shape[0]):
            raise InvalidInputError("features, times and weights must have equal length")
        if weights.shape[0] == 0:
            raise InvalidInputError("measure must have at least one atom")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise InvalidInputError("weights must be strictly positive")
        total = weights.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError(f"weights sum to {total!r}, expected 1")
        weights = weights / total
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "weights", _readonly(weights))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def points(self) -> list[tuple[NDArray, float]]:
        return [(self.features[i], float(self.times[i])) for i in range(len(self))]


def lift_to_measure(series: TimeSeries, weights: Optional[Sequence[float]] = None) -> DiscreteMeasure:
    """Turn a series into a measure; weights default to uniform ``1/m``."""
    m = len(series)
    if weights is None:
        w = np.full(m, 1.0 / m)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != m:
            raise InvalidInputError(f"{w.shape[0]} weights for a series of length {m}")
    return DiscreteMeasure(series.values, series.timestamps, w)


@dataclass(frozen=True)
class CostPair:
    """Feature cost ``gamma`` and temporal cost ``phi`` between two measures."""

    gamma: NDArray[np.float64]
    phi: NDArray[np.float64]
    p: float = 2.0
    c_inf: float = field(init=False)
    ctilde_inf: float = field(init=False)

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        phi = np.array(self.phi, dtype=float)
        if gamma.ndim != 2 or gamma.shape != phi.shape:
            raise InvalidInputError("gamma and phi must be matrices of equal shape")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(phi))):
            raise InvalidInputError("cost matrices must be finite")
        if np.any(gamma < 0) or np.any(phi < 0):
            raise InvalidInputError("cost matrices must be nonnegative")
        object.__setattr__(self, "gamma", _readonly(gamma))
        object.__setattr__(self, "phi", _readonly(phi))
        object.__setattr__(self, "c_inf", float(max(gamma.max(), phi.max())))
        object.__setattr__(self, "ctilde_inf", float(np.abs(gamma - phi).max()))

    @property
    def shape(self) -> tuple[int, int]:
        return self.gamma.shape

    @property
    def diff(self) -> NDArray[np.float64]:
        """``Gamma - Phi``, the derivative of ``C(w)`` in ``w``."""
        return self.gamma - self.phi

    def combine(self, w: float) -> NDArray[np.float64]:
        return combine(self, w)


def build_cost_pair(alpha: DiscreteMeasure, beta: DiscreteMeasure, p: float = 2.0) -> CostPair:
    if p < 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    if alpha.features.shape[1] != beta.features.shape[1]:
        raise InvalidInputError(
            f"feature dimensions differ: {alpha.features.shape[1]} vs {beta.features.shape[1]}"
        )
    diff = np.abs(alpha.features[:, None, :] - beta.features[None, :, :])
    dt = np.abs(alpha.times[:, None] - beta.times[None, :])
    if p == 2:
        gamma = np.einsum("ijk,ijk->ij", diff, diff)
        phi = dt * dt
    elif p == 1:
        gamma = diff.sum(axis=2)
        phi = dt
    else:
        gamma = (diff**p).sum(axis=2)
        phi = dt**p
    return CostPair(gamma, phi, float(p))


def combine(cp: CostPair, w: float) -> NDArray[np.float64]:
    """Blended cost ``w * Gamma + (1 - w) * Phi``."""
    if not 0.0 <= w <= 1.0:
        raise InvalidInputError(f"w must lie in [0, 1], got {w}")
    return w * cp.gamma + (1.0 - w) * cp.phi


def euclidean_dist(a: TimeSeries, b: TimeSeries) -> float:
    if a.values.shape != b.values.shape:
        raise InvalidInputError(
            f"series shapes differ: {a.values.shape} vs {b.values.shape}"
        )
    return float(np.linalg.norm(a.values - b.values))
