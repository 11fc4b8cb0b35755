"""Vehicle-availability and demand-density predictors used by relocation policies.

Availability predictors answer "how many idle cars will zone i hold h slots from
now" from a per-zone history buffer; demand predictors answer "how much demand
will originate in zone i at slot t + h". Both are queried once per decision slot.
"""

from __future__ import annotations

import csv
import math

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DataError, check_count, check_positive, check_series

SLOT_MINUTES = 15.0
SLOTS_PER_DAY = 96


# --- linear autoregression ---------------------------------------------------------


def lag_matrix(series, window: int, horizon: int):
    """Design matrix of lagged values and the matching ``horizon``-ahead targets.

    Row ``r`` holds ``x[t], x[t-1], ..., x[t-window+1]`` for ``t = window - 1 + r``
    and the target is ``x[t + horizon]``.
    """
    x = np.asarray(series, dtype=float)
    n_rows = x.size - window - horizon + 1
    if n_rows < 1:
        raise ValueError(f"series of length {x.size} too short for window={window}, horizon={horizon}")
    # sliding_window_view gives oldest-first windows; flip to most-recent-first
    lags = np.lib.stride_tricks.sliding_window_view(x, window)[:n_rows, ::-1]
    y = x[window - 1 + horizon : window - 1 + horizon + n_rows]
    return np.ascontiguousarray(lags), y


@numba.njit(cache=True)
def _lasso_cd(X, y, alpha, tol, max_sweeps):
    # minimizes (1 / 2n) ||y - X w||^2 + alpha ||w||_1 for centered X, y
    n, p = X.shape
    w = np.zeros(p)
    resid = y.copy()
    sq = np.zeros(p)
    for k in range(p):
        s = 0.0
        for r in range(n):
            s += X[r, k] * X[r, k]
        sq[k] = s / n
    for _ in range(max_sweeps):
        max_step = 0.0
        max_w = 0.0
        for k in range(p):
            if sq[k] == 0.0:
                continue
            rho = 0.0
            for r in range(n):
                rho += X[r, k] * resid[r]
            rho = rho / n + sq[k] * w[k]
            if rho > alpha:
                new = (rho - alpha) / sq[k]
            elif rho < -alpha:
                new = (rho + alpha) / sq[k]
            else:
                new = 0.0
            step = new - w[k]
            if step != 0.0:
                for r in range(n):
                    resid[r] -= step * X[r, k]
                w[k] = new
            if abs(step) > max_step:
                max_step = abs(step)
            if abs(new) > max_w:
                max_w = abs(new)
        if max_step <= tol * max(max_w, 1.0):
            break
    return w


def fit_linear(history, window: int, horizon: int, penalty: str = "l1", strength: float = 1.0,
               tol: float = 1e-6, max_sweeps: int = 10_000) -> np.ndarray:
    """Fit ``y[t+h] = w0 + sum_i w_i * x[t-i+1]`` on one series.

    Parameters
    ----------
    history : array_like
        Observed series, oldest first.
    window : int
        Number of lags; lag 1 is the most recent value.
    horizon : int
        Steps ahead of the target.
    penalty : {"l1", "l2"}
        ``l1`` minimizes ``(1/2n)·RSS + strength·|w|_1`` by cyclic coordinate
        descent; ``l2`` minimizes ``RSS + strength·|w|^2`` in closed form.
        The intercept is never penalized.
    strength : float
        Regularization strength (>= 0).

    Returns
    -------
    ndarray of shape (window + 1,)
        ``[w0, w1, ..., w_window]``.
    """
    window = check_count(window, "window", 1)
    horizon = check_count(horizon, "horizon", 1)
    check_positive(strength, "strength", strict=False)
    if penalty not in ("l1", "l2"):
        raise ValueError(f"penalty must be 'l1' or 'l2', got {penalty!r}")
    x = check_series(history, "history", min_length=window + horizon + 1)
    X, y = lag_matrix(x, window, horizon)
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc, yc = X - x_mean, y - y_mean
    if not Xc.any():
        return np.concatenate([[y_mean], np.zeros(window)])
    if penalty == "l2":
        gram = Xc.T @ Xc + strength * np.eye(window)
        if strength == 0 and np.linalg.matrix_rank(gram) < window:
            raise DataError("singular design matrix; use strength > 0")
        w = np.linalg.solve(gram, Xc.T @ yc)
    else:
        if strength == 0 and np.linalg.matrix_rank(Xc) < window:
            raise DataError("singular design matrix; use strength > 0")
        w = _lasso_cd(np.ascontiguousarray(Xc), yc, float(strength), tol, max_sweeps)
    return np.concatenate([[y_mean - x_mean @ w], w])


class LinearAR(BaseEstimator, RegressorMixin):
    """Per-series linear autoregressor with an sklearn-style interface.

    ``fit`` takes a single series; ``predict`` takes a 2-D array of lag windows
    (most recent value first) and returns the forecasts.
    """

    def __init__(self, window=672, horizon=2, penalty="l1", strength=1.0):
        self.window = window
        self.horizon = horizon
        self.penalty = penalty
        self.strength = strength

    def fit(self, X, y=None):
        coef = fit_linear(X, self.window, self.horizon, self.penalty, self.strength)
        self.intercept_ = coef[0]
        self.coef_ = coef[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.coef_.size:
            raise DataError(f"expected {self.coef_.size} lags, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_


def regression_scores(y_true, y_pred) -> dict:
    """r², mse, rmse, max error, median absolute error and mae."""
    y_true = np.asarray(y_true, dtype=float)
    err = y_true - np.asarray(y_pred, dtype=float)
    ss_tot = ((y_true - y_true.mean()) ** 2).sum()
    mse = float((err**2).mean())
    abs_err = np.abs(err)
    return {
        "r2": float(1.0 - (err**2).sum() / ss_tot) if ss_tot > 0 else math.nan,
        "mse": mse,
        "rmse": math.sqrt(mse),
        "maxe": float(abs_err.max()),
        "med": float(np.median(abs_err)),
        "mae": float(abs_err.mean()),
    }


# --- availability predictors -------------------------------------------------------


class SeriesBuffer:
    """Fixed-capacity per-zone ring buffer of vehicle counts, oldest first."""

    def __init__(self, n_zones: int, capacity: int, history=None):
        self.n_zones = check_count(n_zones, "n_zones", 1)
        self.capacity = check_count(capacity, "capacity", 1)
        self._data = np.zeros((self.capacity, self.n_zones))
        self._head = 0  # next write position
        self.size = 0
        if history is not None:
            self.extend(history)

    def extend(self, rows):
        rows = np.asarray(rows, dtype=float).reshape(-1, self.n_zones)
        for row in rows[-self.capacity :]:
            self.push(row)

    def push(self, row):
        self._data[self._head] = row
        self._head = (self._head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def last(self, k: int) -> np.ndarray:
        """Most recent ``k`` rows as a ``(k, n_zones)`` array, most recent first."""
        if k > self.size:
            raise DataError(f"buffer holds {self.size} observations, {k} required")
        idx = (self._head - 1 - np.arange(k)) % self.capacity
        return self._data[idx]

    def copy(self) -> SeriesBuffer:
        out = SeriesBuffer.__new__(SeriesBuffer)
        out.__dict__.update(self.__dict__)
        out._data = self._data.copy()
        return out


class LastObservation:
    """Persistence forecast: the most recent count."""

    name = "last"
    window = 1

    def fit(self, history):
        return self

    def predict(self, buf: SeriesBuffer) -> np.ndarray:
        return np.maximum(buf.last(1)[0], 0.0)


class MovingAverage:
    def __init__(self, w: int = 4):
        self.w = check_count(w, "w", 1)
        self.window = self.w
        self.name = f"ma{self.w}"

    def fit(self, history):
        return self

    def predict(self, buf: SeriesBuffer) -> np.ndarray:
        return np.maximum(buf.last(self.w).mean(axis=0), 0.0)


class LinearAvailability:
    """One :func:`fit_linear` model per zone, fitted on historical series."""

    def __init__(self, window=672, horizon=2, penalty="l1", strength=1.0):
        self.window = window
        self.horizon = horizon
        self.penalty = penalty
        self.strength = strength
        self.name = f"linear-{penalty}"

    def fit(self, history):
        """``history`` has shape ``(length, n_zones)``."""
        history = np.asarray(history, dtype=float)
        self.coef_ = np.stack(
            [fit_linear(history[:, i], self.window, self.horizon, self.penalty, self.strength)
             for i in range(history.shape[1])]
        )
        return self

    def predict(self, buf: SeriesBuffer) -> np.ndarray:
        try:
            lags = buf.last(self.window)
        except DataError as exc:
            raise DataError(f"zone 0: insufficient history for linear predictor ({exc})") from None
        pred = self.coef_[:, 0] + np.einsum("kz,zk->z", lags, self.coef_[:, 1:])
        return np.maximum(pred, 0.0)


def make_availability(kind: str, window=672, horizon=2, strength=1.0):
    """Build an availability predictor from a short name: last, ma<w>, linear-l1, linear-l2."""
    if kind == "last":
        return LastObservation()
    if kind.startswith("ma"):
        return MovingAverage(int(kind[2:] or 4))
    if kind in ("linear-l1", "linear-l2"):
        return LinearAvailability(window, horizon, kind[-2:], strength)
    raise ValueError(f"unknown availability predictor {kind!r}")


def predict_availability(buf: SeriesBuffer, predictor) -> np.ndarray:
    return predictor.predict(buf)


# --- demand density ----------------------------------------------------------------


class LambdaDemand:
    """Expected departures per slot from the calibrated intensity tensor.

    The row sum over destinations is taken at query time; slots past the end
    of the day wrap around.
    """

    name = "lambda"

    def __init__(self, lam_by_slot):
        # lam_by_slot has shape (P, N, N): slot-major copy of the intensity tensor
        self.lam_by_slot = lam_by_slot

    def predict(self, t: int) -> np.ndarray:
        return self.lam_by_slot[t % self.lam_by_slot.shape[0]].sum(axis=1)


def kde_day_density(event_slots, bandwidth: float = 4.0, n_slots: int = SLOTS_PER_DAY,
                    dt: float = SLOT_MINUTES) -> np.ndarray:
    """Gaussian KDE over time-of-day, evaluated at every slot.

    Event positions are fractional slot indices in ``[0, n_slots)``. The kernel
    wraps around midnight. The result is scaled so ``sum(density) * dt == 1``.
    """
    pos = np.asarray(event_slots, dtype=float).ravel()
    if pos.size == 0:
        raise DataError("kernel density needs at least one event")
    check_positive(bandwidth, "bandwidth")
    grid = np.arange(n_slots, dtype=float)
    diff = grid[:, None] - pos[None, :]
    diff = (diff + n_slots / 2) % n_slots - n_slots / 2
    dens = np.exp(-0.5 * (diff / bandwidth) ** 2).sum(axis=1)
    return dens / (dens.sum() * dt)


class KDEDemand:
    """Per-zone time-of-day demand density from historical event times."""

    name = "kde"

    def __init__(self, bandwidth: float = 4.0):
        self.bandwidth = bandwidth

    def fit(self, events_per_zone):
        """``events_per_zone``: list of arrays of fractional slot positions."""
        rows = []
        for i, ev in enumerate(events_per_zone):
            if len(ev) == 0:
                raise DataError(f"zone {i}: kernel density needs at least one event")
            rows.append(kde_day_density(ev, self.bandwidth))
        self.density_ = np.stack(rows, axis=1)  # (P, N)
        return self

    def predict(self, t: int) -> np.ndarray:
        return self.density_[t % self.density_.shape[0]]


def predict_demand_density(mode: str, source, i, t: int, bandwidth: float = 4.0):
    """Single-zone convenience wrapper around the demand predictors.

    ``source`` is the ``(N, N, P)`` intensity tensor for ``mode="lambda"`` or a
    list of per-zone event positions (fractional slots) for ``mode="kde"``.
    """
    if mode == "lambda":
        lam = np.asarray(source, dtype=float)
        return float(lam[i, :, t % lam.shape[2]].sum())
    if mode == "kde":
        return float(kde_day_density(source[i], bandwidth)[t % SLOTS_PER_DAY])
    raise ValueError(f"unknown demand mode {mode!r}")


def events_from_epochs(epochs, tz_offset_s: float = 0.0, dt: float = SLOT_MINUTES):
    """Convert epoch seconds into fractional time-of-day slot positions."""
    sec = (np.asarray(epochs, dtype=float) + tz_offset_s) % 86400.0
    return sec / (dt * 60.0)


# --- file formats -----------------------------------------------------------------


def write_coefficients(path, coef):
    coef = np.asarray(coef, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zone_id"] + [f"w{k}" for k in range(coef.shape[1])])
        for i, row in enumerate(coef):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_coefficients(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    rows.sort(key=lambda r: int(r[0]))
    return np.array([[float(v) for v in r[1:]] for r in rows])


def read_events_csv(path, n_zones: int):
    """Read ``zone_id,epoch_seconds`` rows into per-zone slot positions."""
    per_zone = [[] for _ in range(n_zones)]
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            per_zone[int(row["zone_id"])].append(float(row["epoch_seconds"]))
    return [events_from_epochs(ev) for ev in per_zone]
