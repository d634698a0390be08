"""Closed-form bound curves, sparsity statistics and the step-size integrals.

``C(t) = int_0^t exp(M(x) - M(t)) n(x)^2 dx`` with ``n = mu * eta`` and
``M(t) = int_0^t n``.  It is evaluated on increasing grids with the recurrence

    C(b) = C(a) exp(M(a) - M(b)) + int_a^b exp(M(x) - M(b)) n(x)^2 dx

so no exponential of ``M`` itself is ever formed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate

from .data import Dataset
from .objectives import Objective


class QuadratureError(RuntimeError):
    pass


# -- sparsity ---------------------------------------------------------------

@dataclass(frozen=True)
class SparsityStats:
    D: int
    delta_bar: int
    delta_bar_D: float
    collision: float
    mean_support: float

    def inequality_holds(self) -> bool:
        """``Dbar_D <= E|D_xi| + D - 1``.

        ``Dbar_D <= Dbar`` is not checked: it fails whenever ``D`` does not divide
        the support sizes (size 3, ``D = 2`` gives ``4 > 3``).
        """
        eps = 1e-12 * max(1.0, self.delta_bar)
        return self.delta_bar_D <= self.mean_support + self.D - 1 + eps


def _support_sizes_and_counts(source):
    if isinstance(source, Objective):
        ev = source.engine_view()
        sizes = np.diff(ev.indptr)
        counts = np.bincount(ev.idx, minlength=ev.dim)
        return sizes, counts, ev.n
    if isinstance(source, Dataset):
        return source.support_sizes(), np.bincount(source.indices, minlength=source.dim), source.n
    supports = [np.unique(np.asarray(s, dtype=np.int64)) for s in source]
    sizes = np.array([len(s) for s in supports])
    flat = np.concatenate(supports) if supports else np.zeros(0, dtype=np.int64)
    counts = np.bincount(flat) if len(flat) else np.zeros(1, dtype=np.int64)
    return sizes, counts, len(supports)


def sparsity_stats(source, D: int = 1) -> SparsityStats:
    """Exact finite-sum statistics of the gradient supports.

    ``source`` is a :class:`Dataset` (example supports), an :class:`Objective`
    (its engine component supports) or a list of index collections.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    sizes, counts, n = _support_sizes_and_counts(source)
    if n == 0:
        raise ValueError("no examples")
    # integer ceil avoids any float rounding in ceil(|supp| / D)
    ceil_sizes = -(-sizes // D)
    return SparsityStats(D=D, delta_bar=int(sizes.max()),
                         delta_bar_D=float(D * ceil_sizes.sum() / n),
                         collision=float(counts.max() / n),
                         mean_support=float(sizes.sum() / n))


# -- bound curves -----------------------------------------------------------

def theorem2_threshold(mu: float, L: float, N: float, w0_dist_sq: float) -> float:
    if N <= 0:
        raise ValueError("the SGD bound needs N > 0")
    return 4 * L / mu * max(L * mu / N * w0_dist_sq, 1.0) - 4 * L / mu


def theorem2_bound(t, mu: float, L: float, N: float, w0_dist_sq: float):
    """``16 N / mu^2 / (t - T + E)`` with ``alpha = 2``, ``E = 4L/mu``.

    Values of ``t`` below the threshold ``T`` get the value at ``T``.
    """
    T = theorem2_threshold(mu, L, N, w0_dist_sq)
    E = 4 * L / mu
    tt = np.maximum(np.asarray(t, dtype=np.float64), T)
    out = 4 * 2.0 ** 2 * N / mu ** 2 / (tt - T + E)
    return float(out) if np.ndim(t) == 0 else out


def hogwild_bound(t, alpha: float, mu: float, N: float, D: int, E: float):
    """Leading term ``4 alpha^2 D N / mu^2 * t / (t + E - 1)^2``."""
    t = np.asarray(t, dtype=np.float64)
    out = 4 * alpha ** 2 * D * N / mu ** 2 * t / (t + E - 1) ** 2
    return float(out) if out.ndim == 0 else out


def hogwild_remainder(t, E: float, const: float = 1.0):
    """Envelope ``const * ln t / (t + E - 1)^2`` for the unspecified remainder (t >= 1)."""
    t = np.asarray(t, dtype=np.float64)
    out = const * np.log(np.maximum(t, 1.0)) / (t + E - 1) ** 2
    return float(out) if out.ndim == 0 else out


def hogwild_bound_t_prime(t_prime, alpha: float, mu: float, N: float, delta_bar_D: float):
    """Leading term in coordinate-write units: ``4 alpha^2 Dbar_D N / (mu^2 t')``."""
    tp = np.asarray(t_prime, dtype=np.float64)
    out = 4 * alpha ** 2 * delta_bar_D * N / mu ** 2 / tp
    return float(out) if out.ndim == 0 else out


def thresholds(alpha: float, mu: float, L: float, N: float, D: int, collision: float,
               w0_dist_sq: float) -> tuple[float, float]:
    """``(T0, T1)``: past ``T0`` the delay terms, past ``T1`` the initial-distance term,
    fall below the leading term.  For streaming objectives use ``collision = 1``."""
    if not 0 <= collision <= 1:
        raise ValueError("collision probability must be in [0, 1]")
    T0 = math.exp(2 * math.sqrt(collision) * (1 + (L + mu) * alpha / mu))
    T1 = mu ** 2 / (alpha ** 2 * N * D) * w0_dist_sq
    return T0, T1


@dataclass(frozen=True)
class BoundCurve:
    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, t):
        p = dict(self.params)
        if self.family == "sgd_theorem2":
            return theorem2_bound(t, p["mu"], p["L"], p["N"], p["w0_dist_sq"])
        if self.family == "hogwild_theorem4":
            return hogwild_bound(t, p["alpha"], p["mu"], p["N"], p["D"], p["E"])
        raise ValueError(f"unknown bound family {self.family!r}")


BOUND_FAMILIES = ("sgd_theorem2", "hogwild_theorem4")


# -- n(t), M(t), C(t) -------------------------------------------------------

def n_of_t(schedule, t, mu: float):
    return mu * schedule.eta(t)


def _quad(f, a, b, epsabs, epsrel):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=200, full_output=1)
    if len(res) == 4:
        raise QuadratureError(f"quadrature on [{a:g}, {b:g}] failed: {res[3]}")
    return res[0]


def _panels(a: float, b: float) -> np.ndarray:
    """Break points refined geometrically away from both ends of ``[a, b]``."""
    width = b - a
    if width <= 0:
        return np.array([a, b])
    steps = 2.0 ** np.arange(0, max(int(math.log2(width)), 0) + 1)
    steps = steps[steps < width]
    pts = np.concatenate([[a, b], a + steps, b - steps])
    return np.unique(pts)


class _Cumulative:
    """``M(t)``: closed form when the schedule has one, else panel quadrature."""

    def __init__(self, schedule, mu, epsabs, epsrel):
        self.s, self.mu, self.ea, self.er = schedule, mu, epsabs, epsrel
        self.closed = schedule.cumulative(1.0) is not None
        self.cache = {0.0: 0.0}

    def __call__(self, t: float) -> float:
        if self.closed:
            return self.mu * float(self.s.cumulative(float(t)))
        t = float(t)
        if t not in self.cache:
            base = max(k for k in self.cache if k <= t)
            acc = self.cache[base]
            pts = _panels(base, t)
            for a, b in zip(pts[:-1], pts[1:]):
                acc += _quad(lambda x: self.mu * float(self.s.eta(x)), a, b, self.ea, self.er)
            self.cache[t] = acc
        return self.cache[t]


def M_of_t(schedule, t, mu: float, epsabs: float = 1e-9, epsrel: float = 1e-12):
    M = _Cumulative(schedule, mu, epsabs, epsrel)
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.array([M(x) for x in np.sort(tt)])[np.argsort(np.argsort(tt))]
    return float(out[0]) if np.ndim(t) == 0 else out


def C_of_t(schedule, t, mu: float, epsabs: float = 1e-9, epsrel: float = 1e-12):
    """``C(t)`` for scalar or array ``t >= 0`` (any order)."""
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(tt < 0):
        raise ValueError("t must be nonnegative")
    M = _Cumulative(schedule, mu, epsabs, epsrel)
    order = np.argsort(tt)
    out = np.empty(len(tt))
    c_prev, t_prev = 0.0, 0.0
    for k in order:
        b = float(tt[k])
        Mb = M(b)
        acc = c_prev * math.exp(M(t_prev) - Mb)
        pts = _panels(t_prev, b)
        for lo, hi in zip(pts[:-1], pts[1:]):
            acc += _quad(lambda x: math.exp(M(x) - Mb) * (mu * float(schedule.eta(x))) ** 2,
                         lo, hi, epsabs, epsrel)
        out[k] = acc
        c_prev, t_prev = acc, b
    return float(out[0]) if np.ndim(t) == 0 else out


def crossover_count(schedule, t_grid, mu: float) -> int:
    """Number of sign changes of ``C(t) - n(t)`` along ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    diff = C_of_t(schedule, t_grid, mu) - n_of_t(schedule, t_grid, mu)
    s = np.sign(diff)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def schedule_race(schedules: Mapping[str, object], t_grid, mu: float) -> dict:
    """``C`` of each schedule on ``t_grid`` and the name of the smallest at each t."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    names = list(schedules)
    table = {name: C_of_t(schedules[name], t_grid, mu) for name in names}
    stacked = np.vstack([table[name] for name in names])
    winners = [names[j] for j in np.argmin(stacked, axis=0)]
    return {"t": t_grid, "C": table, "winner": winners}


def exact_C_constant(c: float, t):
    """Closed form for constant ``n = c``: ``c (1 - exp(-c t))``."""
    return c * (1 - np.exp(-c * np.asarray(t, dtype=np.float64)))

