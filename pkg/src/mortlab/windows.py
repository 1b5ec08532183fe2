"""First differences, train-only standardization, and sliding windows.

The factor panel is differenced once (a velocity representation), scaled
to zero mean and unit variance using statistics fitted on training rows
only, and cut into overlapping windows of the last L scaled differences
with the following difference as the target.  A difference row carries the
year of its later level, so the split boundary is defined by target years.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientHistoryError, ScalingError
from .lilee import FactorPanel


@dataclass(frozen=True)
class DiffPanel:
    """First differences of a factor panel; row t is level[t] - level[t-1]
    and carries the year of level[t]."""

    years: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "years", np.asarray(self.years, dtype=int))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))
        if self.V.ndim != 2 or self.V.shape[0] != self.years.size:
            raise DimensionError("V must be (years, factors)")


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature mean and standard deviation fitted on training rows only."""

    mean: np.ndarray
    sd: np.ndarray
    train_end_year: int

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "sd", np.asarray(self.sd, dtype=float))
        if self.mean.shape != self.sd.shape or self.mean.ndim != 1:
            raise DimensionError("mean and sd must be matching vectors")
        if np.any(self.sd <= 0):
            raise ScalingError("scaler sd must be positive for every feature")


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window samples: X[s] holds rows s..s+L-1, Y[s] row s+L.

    sample_years carries the year of each target row, which defines the
    chronological train/validation split.
    """

    X: np.ndarray
    Y: np.ndarray
    sample_years: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "Y", np.asarray(self.Y, dtype=float))
        object.__setattr__(self, "sample_years", np.asarray(self.sample_years, dtype=int))
        if self.X.ndim != 3 or self.Y.ndim != 2:
            raise DimensionError("X must be (samples, L, features), Y (samples, features)")
        if not (self.X.shape[0] == self.Y.shape[0] == self.sample_years.size):
            raise DimensionError("sample counts disagree")

    @property
    def lookback(self) -> int:
        return self.X.shape[1]


def difference(panel: FactorPanel) -> DiffPanel:
    if panel.years.size < 2:
        raise InsufficientHistoryError("need at least 2 level rows to difference")
    return DiffPanel(years=panel.years[1:], V=np.diff(panel.values, axis=0))


def integrate(V: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Cumulative sum of difference rows on top of an origin level row;
    returns (len(V) + 1, features) levels starting at the origin."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    origin = np.asarray(origin, dtype=float)
    levels = np.empty((V.shape[0] + 1, origin.size))
    levels[0] = origin
    np.cumsum(V, axis=0, out=levels[1:])
    levels[1:] += origin
    return levels


def fit_scaler(diff: DiffPanel, train_end_year: int) -> ScalerParams:
    """Mean/sd (n-1 denominator) over rows with year <= train_end_year."""
    rows = diff.V[diff.years <= train_end_year]
    if rows.shape[0] < 2:
        raise InsufficientHistoryError("need at least 2 training rows to fit a scaler")
    sd = rows.std(axis=0, ddof=1)
    if np.any(sd == 0):
        bad = int(np.flatnonzero(sd == 0)[0])
        raise ScalingError(f"feature {bad} is constant on the training rows")
    return ScalerParams(mean=rows.mean(axis=0), sd=sd, train_end_year=train_end_year)


def transform(scaler: ScalerParams, V: np.ndarray) -> np.ndarray:
    return (np.asarray(V, dtype=float) - scaler.mean) / scaler.sd


def inverse_transform(scaler: ScalerParams, V: np.ndarray) -> np.ndarray:
    return np.asarray(V, dtype=float) * scaler.sd + scaler.mean


def make_windows(diff: DiffPanel, lookback: int) -> WindowedDataset:
    """Cut a (scaled) difference panel into chronological windows."""
    t = diff.V.shape[0]
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    if t <= lookback:
        raise InsufficientHistoryError(
            f"{t} difference rows cannot support lookback {lookback}"
        )
    n = t - lookback
    X = np.stack([diff.V[s : s + lookback] for s in range(n)])
    Y = diff.V[lookback:]
    return WindowedDataset(X=X, Y=Y.copy(), sample_years=diff.years[lookback:])


def split_windows(
    windows: WindowedDataset, train_end_year: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (train, validation) split by target year.  A window
    belongs to validation when its target falls after the boundary, even
    if its inputs reach back across it."""
    train = np.flatnonzero(windows.sample_years <= train_end_year)
    val = np.flatnonzero(windows.sample_years > train_end_year)
    return train, val
