"""Attribution tools: temporal saliency and Shapley-value feature influence.

Temporal saliency averages exact absolute input gradients across features
and samples to isolate how much each lag of the window drives a chosen
output, normalized to percentages.

The Shapley explainer treats the flattened window (lag-major) as the
feature vector.  Missing features are replaced by the mean background
window, a single-reference simplification that keeps every coalition at
one model evaluation.  Exact enumeration is available for small feature
counts; otherwise coalitions are sampled from the Shapley kernel and
attributions solved by constrained weighted least squares, so the
efficiency identity base + sum(phi) = f(x) holds by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
import numpy as np

from .errors import DimensionError
from .lstm import NetworkParams, input_gradient, predict

EXACT_LIMIT = 16


@dataclass(frozen=True)
class ShapReport:
    """Raw per-sample attributions (samples, lag*features) plus the shared
    base value and per-sample model outputs."""

    phi: np.ndarray
    base_value: float
    fx: np.ndarray
    lookback: int
    n_features: int


def temporal_saliency(
    model: NetworkParams, windows: np.ndarray, output_index: int = 0
) -> np.ndarray:
    """Percentage importance of each lag for one output component.

    Per sample, the exact gradient of the output with respect to the input
    window is taken, absolute values are averaged over features, then over
    samples, and the profile is normalized to sum to 100.
    """
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3:
        raise DimensionError("windows must be (samples, lookback, features)")
    per_lag = np.zeros(windows.shape[1])
    for x in windows:
        g = input_gradient(model, x, output_index)
        per_lag += np.abs(g).mean(axis=1)
    per_lag /= windows.shape[0]
    total = per_lag.sum()
    if total == 0.0:
        raise DimensionError("saliency is identically zero; cannot normalize")
    return 100.0 * per_lag / total


def _as_predict_fn(model, output_index):
    if isinstance(model, NetworkParams):
        fn = lambda W: predict(model, W)  # noqa: E731
    elif callable(model):
        fn = model
    else:
        raise TypeError("model must be NetworkParams or a callable")

    def scalar_fn(W):
        out = np.asarray(fn(W), dtype=float)
        if out.ndim == 1:
            return out
        if output_index is None:
            raise ValueError("output_index required for multi-output models")
        return out[:, output_index]

    return scalar_fn


def kernel_shap(
    model,
    background: np.ndarray,
    X_test: np.ndarray,
    *,
    output_index: int | None = None,
    n_coalitions: int | None = None,
    seed: int = 0,
    mode: str = "auto",
) -> ShapReport:
    """Shapley attributions of one output over flattened input windows.

    `model` is a NetworkParams or any callable mapping (n, L, F) windows to
    outputs.  `mode` is "exact" (full enumeration, feature count <= 16),
    "sampled", or "auto" (exact when small enough).  The default sampling
    budget is 2*d + 2048; a budget covering all proper coalitions switches
    to full enumeration with analytic kernel weights.
    """
    background = np.asarray(background, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    if background.ndim != 3 or X_test.ndim != 3:
        raise DimensionError("background and test windows must be 3-d")
    if background.shape[0] < 1:
        raise ValueError("background must be non-empty")
    n_test, lookback, n_feat = X_test.shape
    d = lookback * n_feat
    fn = _as_predict_fn(model, output_index)

    b_flat = background.reshape(background.shape[0], d).mean(axis=0)
    base = float(fn(b_flat.reshape(1, lookback, n_feat))[0])
    if n_coalitions is None:
        n_coalitions = 2 * d + 2048

    if mode == "auto":
        mode = "exact" if d <= 12 else "sampled"
    if mode == "exact" and d > EXACT_LIMIT:
        raise ValueError(f"exact mode supports at most {EXACT_LIMIT} features, got {d}")
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")

    phi = np.empty((n_test, d))
    fx = np.empty(n_test)
    rng = np.random.default_rng(seed)
    for t, x in enumerate(X_test):
        x_flat = x.reshape(d)
        fx[t] = float(fn(x.reshape(1, lookback, n_feat))[0])
        if mode == "exact":
            phi[t] = _exact_shapley(fn, x_flat, b_flat, lookback, n_feat)
        else:
            phi[t] = _kernel_wls(
                fn, x_flat, b_flat, lookback, n_feat, fx[t], base, n_coalitions, rng
            )
    return ShapReport(
        phi=phi, base_value=base, fx=fx, lookback=lookback, n_features=n_feat
    )


def _eval_masked(fn, masks, x_flat, b_flat, lookback, n_feat):
    points = np.where(masks, x_flat[None, :], b_flat[None, :])
    return np.asarray(
        fn(points.reshape(points.shape[0], lookback, n_feat)), dtype=float
    )


def _exact_shapley(fn, x_flat, b_flat, lookback, n_feat):
    """Direct enumeration of all coalitions with factorial weights."""
    d = x_flat.size
    idx = np.arange(2**d, dtype=np.int64)
    masks = (idx[:, None] >> np.arange(d)) & 1
    fvals = _eval_masked(fn, masks.astype(bool), x_flat, b_flat, lookback, n_feat)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(i) for i in range(d + 1)]
    w_by_size = np.array(
        [fact[s] * fact[d - 1 - s] / fact[d] for s in range(d)]
    )
    phi = np.empty(d)
    for j in range(d):
        without = idx[(idx >> j) & 1 == 0]
        w = w_by_size[sizes[without]]
        phi[j] = float(np.sum(w * (fvals[without | (1 << j)] - fvals[without])))
    return phi


def _kernel_coalitions(d, n_coalitions, rng):
    """Proper coalitions (never empty/full) and their WLS weights.

    If the budget covers every proper coalition, enumerate them all with
    analytic Shapley-kernel weights; otherwise sample sizes from the kernel
    distribution and subsets uniformly, with unit weights.
    """
    total_proper = 2**d - 2
    if n_coalitions >= total_proper:
        idx = np.arange(1, 2**d - 1, dtype=np.int64)
        Z = ((idx[:, None] >> np.arange(d)) & 1).astype(float)
        sizes = Z.sum(axis=1).astype(int)
        weights = np.array(
            [(d - 1) / (math.comb(d, s) * s * (d - s)) for s in sizes]
        )
        return Z, weights
    sizes = np.arange(1, d)
    size_p = (d - 1) / (sizes * (d - sizes))
    size_p = size_p / size_p.sum()
    drawn = rng.choice(sizes, size=n_coalitions, p=size_p)
    Z = np.zeros((n_coalitions, d))
    for row, s in enumerate(drawn):
        Z[row, rng.permutation(d)[:s]] = 1.0
    return Z, np.ones(n_coalitions)


def _kernel_wls(fn, x_flat, b_flat, lookback, n_feat, fx, base, n_coalitions, rng):
    d = x_flat.size
    Z, w = _kernel_coalitions(d, n_coalitions, rng)
    fvals = _eval_masked(fn, Z.astype(bool), x_flat, b_flat, lookback, n_feat)
    y = fvals - base

    # eliminate the efficiency constraint sum(phi) = fx - base via the last
    # feature; the full and empty coalitions reduce to zero rows under this
    # substitution, which is why they never need to be sampled
    y_adj = y - Z[:, -1] * (fx - base)
    Zt = Z[:, :-1] - Z[:, [-1]]
    A = Zt.T @ (w[:, None] * Zt)
    rhs = Zt.T @ (w * y_adj)
    try:
        rest = np.linalg.solve(A, rhs)
        if not np.all(np.isfinite(rest)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn(
            "singular Shapley WLS system; falling back to ridge 1e-8",
            RuntimeWarning,
        )
        rest = np.linalg.solve(A + 1e-8 * np.eye(d - 1), rhs)
    phi = np.empty(d)
    phi[:-1] = rest
    phi[-1] = (fx - base) - rest.sum()
    return phi


def aggregate_country_influence(report: ShapReport) -> np.ndarray:
    """One influence score per factor: mean over samples and lags of the
    absolute attributions."""
    reshaped = np.abs(report.phi).reshape(
        report.phi.shape[0], report.lookback, report.n_features
    )
    return reshaped.mean(axis=(0, 1))
