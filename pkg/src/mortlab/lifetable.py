"""Mortality-curve reconstruction and period life tables.

Projected common-factor levels map back to death rates through
m_x = exp(alpha_x + B_x * K); the country-specific term is deliberately
omitted so long-horizon projections do not accumulate extra integration
drift from the specific indices.  Life tables use the standard mid-period
approximation q = m / (1 + 0.5 m) on a closed table with terminal age 90.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .lilee import LiLeeParams


@dataclass(frozen=True)
class LifeTable:
    ages: np.ndarray
    qx: np.ndarray
    px: np.ndarray
    lx: np.ndarray
    e0: float


@dataclass(frozen=True)
class MonotonicityResult:
    passed: bool
    first_violation_age: int | None

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def reconstruct_surface(
    params: LiLeeParams, country: int | str, k_value: float
) -> np.ndarray:
    """Death rates by age for one country at a given common-index level."""
    i = params.country_index(country)
    return np.exp(params.alpha[i] + params.B * float(k_value))


def _qx_batch(m: np.ndarray) -> np.ndarray:
    if np.any(m < 0):
        raise DomainError("death rates must be non-negative")
    q = m / (1.0 + 0.5 * m)
    if np.any(q > 1.0):
        # q = m/(1+0.5m) crosses 1 when m > 2; the approximation has broken
        # down, so cap at certain death rather than emit probabilities > 1.
        warnings.warn(
            "death rate above 2 encountered; q_x clamped to 1", RuntimeWarning
        )
        q = np.minimum(q, 1.0)
    return q


def _e0_batch(m: np.ndarray) -> np.ndarray:
    """Life expectancy at birth for a batch of (n, ages) rate curves."""
    q = _qx_batch(m)
    p = 1.0 - q
    lx = np.ones_like(p)
    np.cumprod(p[:, :-1], axis=1, out=lx[:, 1:])
    return lx.sum(axis=1) - 0.5


def life_table(m: np.ndarray) -> LifeTable:
    """Build a period life table for one rate curve on ages 0..len(m)-1.

    l_0 = 1, l_x is the survivorship product, and e0 sums survivorship over
    the closed table minus the half-year mid-period adjustment.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 1:
        raise DimensionError("expected one rate curve")
    q = _qx_batch(m[None, :])[0]
    p = 1.0 - q
    lx = np.ones_like(p)
    lx[1:] = np.cumprod(p[:-1])
    e0 = float(lx.sum() - 0.5)
    return LifeTable(ages=np.arange(m.size), qx=q, px=p, lx=lx, e0=e0)


def monotonicity_check(
    m: np.ndarray, age_range: tuple[int, int] = (30, 90)
) -> MonotonicityResult:
    """Check m_{x+1} >= m_x over the adult range (non-strict).

    The curve is indexed by age starting at 0.  Returns the first age where
    the rate drops, if any.
    """
    m = np.asarray(m, dtype=float)
    lo, hi = age_range
    if not 0 <= lo < hi < m.size + 1:
        raise ValueError("age_range outside the curve")
    for x in range(lo, min(hi, m.size - 1)):
        if m[x + 1] < m[x]:
            return MonotonicityResult(passed=False, first_violation_age=x)
    return MonotonicityResult(passed=True, first_violation_age=None)


def e0_at(params: LiLeeParams, country: int | str, k_value: float) -> float:
    """Life expectancy implied by one common-index level."""
    return float(_e0_batch(reconstruct_surface(params, country, k_value)[None, :])[0])


def e0_paths(ensemble, params: LiLeeParams, country: int | str) -> np.ndarray:
    """Per-path, per-horizon life expectancy from an ensemble's K levels.

    Returns (paths, horizon); the anchor row at horizon 0 is excluded.
    """
    i = params.country_index(country)
    k_vals = ensemble.levels[:, 1:, 0]  # (S, H)
    s, h = k_vals.shape
    m = np.exp(params.alpha[i][None, :] + np.outer(k_vals.ravel(), params.B))
    return _e0_batch(m).reshape(s, h)
