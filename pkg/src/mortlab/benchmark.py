"""Out-of-sample benchmarking, ablations, and lookback sensitivity.

The comparison protocol: factors are extracted once from the full
observation period, every forecaster is estimated strictly on the training
years, and both produce level forecasts over the validation years.  The
mean-bias correction - the network's validation bias vector, one constant
per factor - is applied to BOTH sides: the network adds it in its scaled
output space, the linear benchmark receives the identical vector mapped to
unscaled difference units.  Both contenders therefore get the same
constant adjustment and the comparison isolates structural adaptability.

Forecasts are fully recursive by default (each model feeds its own
predictions forward); a teacher-forced one-step mode is available for
diagnostics.  RMSE is reported per country on the specific-factor levels,
or on the common factor for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSeriesError, InsufficientHistoryError
from .forecast import ForecastModel, fit_forecaster, forecast_deterministic
from .lilee import FactorPanel, fit_ar1, fit_rwd
from .lstm import TrainConfig, predict, train
from .windows import (
    DiffPanel,
    fit_scaler,
    make_windows,
    split_windows,
    transform,
)


@dataclass(frozen=True)
class BenchmarkRow:
    country: str
    rmse_lilee: float
    rmse_hybrid: float

    @property
    def improvement_pct(self) -> float:
        return (self.rmse_lilee - self.rmse_hybrid) / self.rmse_lilee * 100.0


@dataclass(frozen=True)
class HybridConfig:
    lookback: int = 10
    hidden: tuple[int, int] = (32, 16)
    dropout_rate: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class AblationResult:
    name: str
    rmse_kt: float
    degradation_pct: float


@dataclass(frozen=True)
class SweepResult:
    lookback: int
    rmse_kt: float | None
    n_train: int
    n_val: int
    skipped: bool = False
    note: str = ""


def rmse(forecast: np.ndarray, actual: np.ndarray) -> float:
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    return float(np.sqrt(np.mean((forecast - actual) ** 2)))


def _split_panel(panel: FactorPanel, split_year: int):
    train_rows = panel.years <= split_year
    val_rows = panel.years > split_year
    if train_rows.sum() < 3 or val_rows.sum() < 1:
        raise InsufficientHistoryError("split leaves too little data on one side")
    return train_rows, val_rows


def linear_benchmark_forecast(
    panel: FactorPanel,
    split_year: int,
    bias: np.ndarray | None = None,
    mode: str = "recursive",
) -> np.ndarray:
    """Drift/AR(1) level forecasts over the validation years.

    The drift and AR coefficients come from the training years only.
    `bias` is the shared mean-bias correction in unscaled difference units
    (the network's validation bias vector mapped through the scaler), added
    to every per-step difference so both contenders receive the identical
    adjustment; None means zero.
    """
    train_rows, val_rows = _split_panel(panel, split_year)
    values = panel.values
    n_factors = values.shape[1]
    train_vals = values[train_rows]
    if bias is None:
        bias = np.zeros(n_factors)
    bias = np.asarray(bias, dtype=float)

    rwd = fit_rwd(train_vals[:, 0])
    phis = np.zeros(n_factors - 1)
    for i in range(n_factors - 1):
        try:
            phis[i] = fit_ar1(train_vals[:, 1 + i]).phi
        except DegenerateSeriesError:
            phis[i] = 0.0

    val_idx = np.flatnonzero(val_rows)
    horizon = val_idx.size
    out = np.empty((horizon, n_factors))
    if mode == "recursive":
        state = values[train_rows][-1].copy()
        for h in range(horizon):
            state = state.copy()
            state[0] += rwd.drift + bias[0]
            state[1:] = phis * state[1:] + bias[1:]
            out[h] = state
    elif mode == "one_step":
        for row, t in enumerate(val_idx):
            prev = values[t - 1]
            out[row, 0] = prev[0] + rwd.drift + bias[0]
            out[row, 1:] = phis * prev[1:] + bias[1:]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def hybrid_validation_forecast(
    model: ForecastModel, panel: FactorPanel, split_year: int, mode: str = "recursive"
) -> np.ndarray:
    """Network level forecasts over the validation years."""
    train_rows, val_rows = _split_panel(panel, split_year)
    horizon = int(val_rows.sum())
    if mode == "recursive":
        history = FactorPanel(
            years=panel.years[train_rows],
            values=panel.values[train_rows],
            labels=panel.labels,
        )
        full = forecast_deterministic(model, history, horizon)
        return full.values[-horizon:]
    if mode == "one_step":
        values = panel.values
        val_idx = np.flatnonzero(val_rows)
        out = np.empty((horizon, values.shape[1]))
        need = model.lookback + 1
        for row, t in enumerate(val_idx):
            recent = values[t - need : t]
            diffs = np.diff(recent, axis=0)
            x = transform(model.scaler, diffs)
            pred = predict(model.net, x[None])[0] + model.mbc
            step = pred * model.scaler.sd + model.scaler.mean
            out[row] = values[t - 1] + step
        return out
    raise ValueError(f"unknown mode {mode!r}")


def validate(
    panel: FactorPanel,
    model: ForecastModel,
    split_year: int,
    *,
    rmse_target: str = "specific_factors",
    mode: str = "recursive",
) -> list[BenchmarkRow]:
    """Benchmark rows comparing the linear and hybrid forecasters.

    The network's bias vector, mapped to unscaled difference units, is the
    single shared correction applied to both forecast paths."""
    _, val_rows = _split_panel(panel, split_year)
    actual = panel.values[val_rows]
    shared_bias = model.mbc * model.scaler.sd
    ll = linear_benchmark_forecast(panel, split_year, bias=shared_bias, mode=mode)
    hy = hybrid_validation_forecast(model, panel, split_year, mode=mode)

    if rmse_target == "specific_factors":
        return [
            BenchmarkRow(
                country=panel.labels[1 + i],
                rmse_lilee=rmse(ll[:, 1 + i], actual[:, 1 + i]),
                rmse_hybrid=rmse(hy[:, 1 + i], actual[:, 1 + i]),
            )
            for i in range(panel.n_factors - 1)
        ]
    if rmse_target == "common_factor":
        return [
            BenchmarkRow(
                country="K",
                rmse_lilee=rmse(ll[:, 0], actual[:, 0]),
                rmse_hybrid=rmse(hy[:, 0], actual[:, 0]),
            )
        ]
    raise ValueError(f"unknown rmse_target {rmse_target!r}")


def train_hybrid(
    panel: FactorPanel, split_year: int, cfg: HybridConfig
) -> ForecastModel:
    model, _, _, _ = fit_forecaster(
        panel,
        split_year,
        cfg.lookback,
        hidden=cfg.hidden,
        dropout_rate=cfg.dropout_rate,
        train_config=cfg.train,
    )
    return model


def _rmse_kt_recursive(model: ForecastModel, panel: FactorPanel, split_year: int) -> float:
    _, val_rows = _split_panel(panel, split_year)
    actual_k = panel.values[val_rows][:, 0]
    hy = hybrid_validation_forecast(model, panel, split_year, mode="recursive")
    return rmse(hy[:, 0], actual_k)


def _levels_variant_rmse(panel: FactorPanel, split_year: int, cfg: HybridConfig) -> float:
    """Retrain on absolute levels instead of differences, identical
    architecture and seeds; bias correction stays on, computed in the
    scaled level space."""
    level_panel = DiffPanel(years=panel.years, V=panel.values)
    scaler = fit_scaler(level_panel, split_year)
    scaled = DiffPanel(years=panel.years, V=transform(scaler, panel.values))
    windows = make_windows(scaled, cfg.lookback)
    train_idx, val_idx = split_windows(windows, split_year)
    if train_idx.size < 1 or val_idx.size < 1:
        raise InsufficientHistoryError("split leaves no usable level windows")
    net, _ = train(
        windows.X[train_idx],
        windows.Y[train_idx],
        windows.X[val_idx],
        windows.Y[val_idx],
        cfg.train,
        hidden=cfg.hidden,
        dropout_rate=cfg.dropout_rate,
    )
    mbc = (windows.Y[val_idx] - predict(net, windows.X[val_idx])).mean(axis=0)

    _, val_rows = _split_panel(panel, split_year)
    horizon = int(val_rows.sum())
    window = transform(scaler, panel.values[panel.years <= split_year][-cfg.lookback :])
    out = np.empty((horizon, panel.n_factors))
    for h in range(horizon):
        pred = predict(net, window[None])[0] + mbc
        out[h] = pred * scaler.sd + scaler.mean
        window = np.vstack([window[1:], pred])
    actual_k = panel.values[val_rows][:, 0]
    return rmse(out[:, 0], actual_k)


def ablate(
    panel: FactorPanel,
    split_year: int,
    cfg: HybridConfig,
    variants: tuple[str, ...] = ("baseline", "no_mbc", "no_differences"),
) -> dict[str, AblationResult]:
    """Common-factor RMSE per design variant, with degradation vs baseline."""
    model = train_hybrid(panel, split_year, cfg)
    base = _rmse_kt_recursive(model, panel, split_year)
    out = {"baseline": AblationResult("baseline", base, 0.0)}
    for name in variants:
        if name == "baseline":
            continue
        if name == "no_mbc":
            stripped = replace(model, mbc=np.zeros_like(model.mbc))
            r = _rmse_kt_recursive(stripped, panel, split_year)
        elif name == "no_differences":
            r = _levels_variant_rmse(panel, split_year, cfg)
        else:
            raise ValueError(f"unknown ablation variant {name!r}")
        out[name] = AblationResult(name, r, (r - base) / base * 100.0)
    return out


def lookback_sweep(
    panel: FactorPanel,
    split_year: int,
    cfg: HybridConfig,
    lookbacks: tuple[int, ...] = (5, 10, 15),
) -> list[SweepResult]:
    """Retrain with identical seed policy per window length."""
    results = []
    n_diffs = panel.values.shape[0] - 1
    for lb in lookbacks:
        sub = replace(cfg, lookback=lb)
        try:
            model, _, windows, (train_idx, val_idx) = fit_forecaster(
                panel,
                split_year,
                lb,
                hidden=sub.hidden,
                dropout_rate=sub.dropout_rate,
                train_config=sub.train,
            )
        except InsufficientHistoryError as exc:
            results.append(
                SweepResult(
                    lookback=lb,
                    rmse_kt=None,
                    n_train=0,
                    n_val=0,
                    skipped=True,
                    note=f"skipped: {exc} ({n_diffs} difference rows)",
                )
            )
            continue
        results.append(
            SweepResult(
                lookback=lb,
                rmse_kt=_rmse_kt_recursive(model, panel, split_year),
                n_train=int(train_idx.size),
                n_val=int(val_idx.size),
            )
        )
    return results
