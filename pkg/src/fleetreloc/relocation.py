"""Ranking-based relocation policy.

Every slot the policy predicts, per zone, the idle-car count ``x_hat`` and the
expected demand ``p_hat`` ``h`` slots ahead and forms the imbalance

    U[i] = x_hat[i] - w_d * p_hat[i].

Staff in zone ``i`` whose imbalance is at least ``r_th`` each drive one car to
the zone minimizing ``U[j] + w_tt * T[i, j, t]``. Staff left without a car to
move ride a scooter to the zone maximizing ``U[j] - w_tt * T[i, j, t]``,
provided that beats staying. After every pick the destination's score is
nudged so consecutive picks spread over zones.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import DataError
from .predictors import KDEDemand, LambdaDemand, SeriesBuffer, make_availability


def imbalance(x_hat, p_hat, w_d) -> np.ndarray:
    return np.asarray(x_hat, dtype=float) - w_d * np.asarray(p_hat, dtype=float)


def relocation_ranking(U, T_row, w_tt) -> np.ndarray:
    return np.asarray(U, dtype=float) + w_tt * np.asarray(T_row, dtype=float)


def transit_ranking(U, T_row, w_tt) -> np.ndarray:
    return np.asarray(U, dtype=float) - w_tt * np.asarray(T_row, dtype=float)


def schedule_relocation(U, x_v, x_s, T, w_tt, r_th, paper_literal_update=False):
    """Greedy relocation picks for one slot.

    Parameters
    ----------
    U : ndarray
        Imbalance per zone; updated in place as destinations are chosen.
        Sources are the zones at or above ``r_th`` before any pick, so a
        zone that only reaches the threshold by receiving cars stays put.
    x_v, x_s : ndarray
        Idle cars and idle staff per zone.
    T : ndarray of shape (N, N)
        Travel minutes for the current slot.

    Returns
    -------
    list of (src, dst) pairs, one per relocated car.
    """
    step = -1.0 if paper_literal_update else 1.0
    moves = []
    for i in np.flatnonzero((x_s > 0) & (x_v > 0) & (U >= r_th)):
        R = U + w_tt * T[i]
        R[i] = np.inf
        for _ in range(min(x_v[i], x_s[i])):
            j = int(np.argmin(R))
            moves.append((int(i), j))
            R[j] += step
            if not paper_literal_update:
                U[j] += 1.0
    return moves


def schedule_transits(U, x_v, x_s, T, w_tt, r_th):
    """Greedy scooter transits for staff with nothing to relocate locally.

    ``x_s`` is the idle staff left after relocations. Eligible zones have no
    idle car or an imbalance below ``r_th``. A staff member moves only if the
    best destination's score exceeds the imbalance of the current zone.
    """
    moves = []
    eligible = (x_s > 0) & ((x_v == 0) | (U < r_th))
    for i in np.flatnonzero(eligible):
        R = U - w_tt * T[i]
        R[i] = -np.inf
        for _ in range(x_s[i]):
            j = int(np.argmax(R))
            if not R[j] > U[i]:
                break
            moves.append((int(i), j))
            R[j] -= 1.0
            U[j] -= 1.0
    return moves


def _as_arrays(moves):
    if not moves:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    arr = np.asarray(moves, dtype=np.int64)
    return arr[:, 0], arr[:, 1], np.ones(len(moves), dtype=np.int64)


class PredictorPolicy(BaseEstimator):
    """Shared predictor plumbing for policies that act on the imbalance ``U``."""

    def _build_predictors(self, ctx, sc):
        N = ctx.n_zones
        kind = self.availability
        self.avail_ = make_availability(kind, self.window, self.h, self.strength)
        cap = max(self.avail_.window, 1)
        if kind.startswith("linear"):
            if ctx.history is None:
                raise DataError("linear availability predictor needs a history in the context")
            key = ("avail", kind, self.window, self.h, self.strength)
            if key not in ctx.cache:
                ctx.cache[key] = self.avail_.fit(ctx.history).coef_
            self.avail_.coef_ = ctx.cache[key]
        self.buffer_ = SeriesBuffer(N, cap)
        if ctx.history is not None and len(ctx.history) >= cap - 1:
            self.buffer_.extend(ctx.history[-cap:])
        else:
            # without history the buffer starts filled with the initial counts
            self.buffer_.extend(np.repeat(sc.x_v0[None, :], cap, axis=0))
        if self.demand == "lambda":
            if ctx.lam is None:
                raise DataError("lambda demand predictor needs an intensity tensor in the context")
            self.demand_ = LambdaDemand(ctx.lam_by_slot)
        elif self.demand == "kde":
            if ctx.events is None:
                raise DataError("kde demand predictor needs event times in the context")
            key = ("kde", self.kde_bandwidth)
            if key not in ctx.cache:
                ctx.cache[key] = KDEDemand(self.kde_bandwidth).fit(ctx.events).density_
            self.demand_ = KDEDemand(self.kde_bandwidth)
            self.demand_.density_ = ctx.cache[key]
        else:
            raise ValueError(f"unknown demand predictor {self.demand!r}")

    def current_imbalance(self, t, x_v):
        self.buffer_.push(x_v)
        x_hat = self.avail_.predict(self.buffer_)
        p_hat = self.demand_.predict(t + self.h)
        return imbalance(x_hat, p_hat, self.w_d)


class RankingPolicy(PredictorPolicy):
    """Greedy ranking policy.

    Parameters
    ----------
    w_tt : float
        Weight of travel minutes in the rankings.
    w_d : float
        Scale applied to predicted demand in the imbalance.
    r_th : float
        Zones with imbalance below this keep their cars.
    h : int
        Prediction horizon in slots.
    availability : str
        ``last``, ``ma<w>``, ``linear-l1`` or ``linear-l2``.
    demand : str
        ``lambda`` (intensity row sums) or ``kde``.
    paper_literal_update : bool
        Lower the chosen destination's relocation score by one after a pick
        (and leave ``U`` untouched) instead of raising both.
    scooter_factor : float
        Scooter travel time as a multiple of car travel time.
    """

    def __init__(self, w_tt=0.07, w_d=280.32, r_th=-17.35, h=2, availability="last", demand="lambda",
                 paper_literal_update=False, scooter_factor=1.0, kde_bandwidth=4.0, window=672,
                 strength=1.0):
        self.w_tt = w_tt
        self.w_d = w_d
        self.r_th = r_th
        self.h = h
        self.availability = availability
        self.demand = demand
        self.paper_literal_update = paper_literal_update
        self.scooter_factor = scooter_factor
        self.kde_bandwidth = kde_bandwidth
        self.window = window
        self.strength = strength

    @property
    def name(self):
        return "RB"

    def start(self, ctx, sc):
        if self.w_tt < 0 or self.w_d < 0:
            raise ValueError("w_tt and w_d must be nonnegative")
        self.ctx_ = ctx
        self._build_predictors(ctx, sc)
        self.U_ = None

    def relocate(self, t, x_v, x_s):
        U = self.current_imbalance(t, x_v)
        moves = schedule_relocation(U, x_v, x_s, self.ctx_.travel_by_slot[t], self.w_tt, self.r_th,
                                    self.paper_literal_update)
        self.U_ = U
        return _as_arrays(moves)

    def transit(self, t, x_v, x_s):
        T = self.ctx_.travel_by_slot[t] * self.scooter_factor
        return _as_arrays(schedule_transits(self.U_, x_v, x_s, T, self.w_tt, self.r_th))


class NoOpPolicy:
    """Explicit do-nothing policy (same as running without a policy)."""

    name = "NoOpt"
    scooter_factor = 1.0

    def start(self, ctx, sc):
        pass

    def relocate(self, t, x_v, x_s):
        return None

    def transit(self, t, x_v, x_s):
        return None
