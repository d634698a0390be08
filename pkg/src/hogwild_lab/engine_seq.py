"""Sequential engines: plain SGD, filtered SGD and mini-batch filtered SGD.

Every run owns three independent random streams spawned from one seed (example
draws, filter draws, mask draws).  The inner loops live in :mod:`._kernels` and
are shared with the delay simulator and the parallel workers, which is what makes
the reductions between engines exact.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .objectives import Objective
from .schedules import StepSchedule, check_batch_admissible

MODES = ("sgd", "filtered", "batch")


class DivergenceError(FloatingPointError):
    """Raised when an iterate becomes non-finite or exceeds 1e100 in magnitude."""

    def __init__(self, message: str, t: int, trace: "Trace | None" = None):
        super().__init__(message)
        self.t = t
        self.trace = trace


@dataclass
class Streams:
    examples: np.random.Generator
    filters: np.random.Generator
    masks: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int, worker: int = 0) -> "Streams":
        ss = np.random.SeedSequence(seed, spawn_key=(worker,))
        return cls(*(np.random.default_rng(s) for s in ss.spawn(3)))


@dataclass
class RunState:
    w: np.ndarray
    streams: Streams
    t: int = 0
    coord_updates: int = 0

    @classmethod
    def start(cls, obj: Objective, seed: int = 0, w0=None) -> "RunState":
        w = np.zeros(obj.dim) if w0 is None else np.array(w0, dtype=np.float64)
        return cls(w, Streams.from_seed(seed))


@dataclass(frozen=True, eq=False)
class Trace:
    """Metrics recorded at iterations ``t`` (strictly increasing)."""
    t: np.ndarray
    t_prime: np.ndarray
    loss: np.ndarray
    dist_sq: np.ndarray
    wall_time: np.ndarray
    n: int
    w_final: np.ndarray
    iterates: np.ndarray | None = None
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def epoch(self) -> np.ndarray:
        return self.t / self.n

    def __len__(self):
        return len(self.t)


class _Work:
    """Scratch buffers sized for one engine view."""

    def __init__(self, ev):
        sizes = np.diff(ev.indptr)
        m = max(int(sizes.max()) if len(sizes) else 1, 1)
        big = max(m, ev.dim)
        self.wv = np.zeros(m)
        self.sel = np.zeros(big, dtype=np.int64)
        self.perm = np.zeros(big, dtype=np.int64)
        self.pos = np.full(ev.dim, -1, dtype=np.int64)
        self.uni = np.zeros(ev.dim, dtype=np.int64)
        self.acc = np.zeros(ev.dim)
        self.cut = np.zeros(m, dtype=np.int64)
        self.stats = np.zeros(1, dtype=np.int64)


def _fmode(v):
    return (K.PARTITION, 1.0) if v is None else (K.FRACTION, float(v))


def advance(state: RunState, ev, work: _Work, etas: np.ndarray, D: int = 1, v=None,
            batch_k: int = 0, enumerate_all: bool = False) -> int:
    """Apply ``len(etas)`` iterations in place; returns the kernel status."""
    t0, t1 = state.t, state.t + len(etas)
    work.stats[0] = state.coord_updates
    s = state.streams
    if batch_k > 0 or enumerate_all:
        t_end, status = K.batch_segment(
            state.w, t0, t1, etas, D, batch_k, enumerate_all, ev.indptr, ev.idx, ev.xv, ev.y,
            ev.rw, ev.lam, ev.kind, ev.n, s.examples, s.filters, work.wv, work.sel, work.perm,
            work.pos, work.uni, work.acc, work.stats)
    else:
        fmode, fv = _fmode(v)
        t_end, status = K.seq_segment(
            state.w, t0, t1, etas, D, fmode, fv, ev.indptr, ev.idx, ev.xv, ev.y, ev.rw,
            ev.lam, ev.kind, ev.n, s.examples, s.filters, work.wv, work.sel, work.perm,
            work.stats)
    state.t = int(t_end)
    state.coord_updates = int(work.stats[0])
    return int(status)


def _single(state, obj, schedule, **kw):
    ev = obj.engine_view()
    etas = schedule.eta_array(state.t, state.t + 1)
    if advance(state, ev, _Work(ev), etas, **kw) != K.OK:
        raise DivergenceError(f"divergence at t={state.t}", state.t)
    return state


def sgd_step(state: RunState, obj: Objective, schedule: StepSchedule) -> RunState:
    """One step ``w <- w - eta_t grad f_xi(w)`` with the full component gradient."""
    return _single(state, obj, schedule, D=1)


def filtered_step(state: RunState, obj: Objective, schedule: StepSchedule, D: int) -> RunState:
    """One step updating a uniformly drawn partition set, scaled by its count ``d``."""
    return _single(state, obj, schedule, D=D)


def fraction_step(state: RunState, obj: Objective, schedule: StepSchedule, v: float) -> RunState:
    return _single(state, obj, schedule, v=v)


def batch_step(state: RunState, obj: Objective, schedule: StepSchedule, k: int, D: int = 1,
               enumerate_all: bool = False) -> RunState:
    if not enumerate_all and not 1 <= k <= obj.n:
        raise ValueError(f"batch size {k} outside [1, {obj.n}]")
    return _single(state, obj, schedule, D=D, batch_k=k, enumerate_all=enumerate_all)


def batch_gradient(obj: Objective, w, batch) -> np.ndarray:
    """Mean engine-component gradient over ``batch`` (repeats allowed), dense."""
    g = np.zeros(obj.dim)
    for i in batch:
        idx, vals = obj.support_grad(w, int(i))
        g[idx] += vals
    return g / len(batch)


def record_points(T: int, record_every: int) -> np.ndarray:
    pts = np.arange(0, T + 1, max(int(record_every), 1), dtype=np.int64)
    if pts[-1] != T:
        pts = np.append(pts, T)
    return pts


class Recorder:
    def __init__(self, obj, w_star, keep_iterates):
        self.obj = obj
        self.w_star = None if w_star is None else np.asarray(w_star, dtype=np.float64)
        self.keep = keep_iterates
        self.rows = []
        self.iterates = []
        self.t_start = time.perf_counter()

    def __call__(self, t, t_prime, w):
        with np.errstate(over="ignore", invalid="ignore"):
            loss = self.obj.full_objective(w)
            dist = float(np.sum((w - self.w_star) ** 2)) if self.w_star is not None else np.nan
        self.rows.append((t, t_prime, loss, dist, time.perf_counter() - self.t_start))
        if self.keep:
            self.iterates.append(np.array(w, copy=True))

    def trace(self, w_final, diverged=False, meta=None) -> Trace:
        a = np.array(self.rows, dtype=np.float64).reshape(-1, 5)
        its = np.array(self.iterates) if self.keep else None
        return Trace(a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2], a[:, 3],
                     a[:, 4], self.obj.n, np.array(w_final, copy=True), its, diverged,
                     dict(meta or {}))


def run(obj: Objective, schedule: StepSchedule, T: int, *, mode: str = "filtered", D: int = 1,
        v: float | None = None, batch_k: int = 1, enumerate_all: bool = False, seed: int = 0,
        w0=None, w_star=None, record_every: int | None = None, L: float | None = None,
        keep_iterates: bool = False) -> Trace:
    """Run ``T`` iterations and record metrics every ``record_every`` (default n/10).

    ``mode`` is ``sgd`` (D forced to 1), ``filtered`` (partition filter with ``D``
    sets, or a random fraction ``v`` of the support when ``v`` is given) or
    ``batch`` (``batch_k`` i.i.d. examples per step).  Passing ``L`` enables the
    batch-mode step-size admissibility check.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if T < 0 or D < 1:
        raise ValueError("need T >= 0 and D >= 1")
    if mode == "sgd":
        D, v = 1, None
    if mode == "batch":
        if L is not None:
            check_batch_admissible(schedule, L, D)
        if not enumerate_all and not 1 <= batch_k <= obj.n:
            raise ValueError(f"batch size {batch_k} outside [1, {obj.n}]")
    else:
        batch_k, enumerate_all = 0, False
    if v is not None and not 0 < v <= 1:
        raise ValueError("fraction v must be in (0, 1]")
    if record_every is None:
        record_every = max(obj.n // 10, 1)

    ev = obj.engine_view()
    work = _Work(ev)
    state = RunState.start(obj, seed, w0)
    rec = Recorder(obj, w_star, keep_iterates)
    meta = {"engine": mode, "seed": seed, "D": D, "v": v, "schedule": schedule.family}
    rec(0, 0, state.w)
    pts = record_points(T, record_every)
    for a, b in zip(pts[:-1], pts[1:]):
        status = advance(state, ev, work, schedule.eta_array(int(a), int(b)), D, v,
                         batch_k, enumerate_all)
        rec(state.t, state.coord_updates, state.w)
        if status != K.OK:
            tr = rec.trace(state.w, True, meta)
            raise DivergenceError(f"iterate diverged (non-finite or |w| > 1e100) at "
                                  f"t={state.t}, eta_t={schedule.eta(state.t - 1):.4g}",
                                  state.t, tr)
    return rec.trace(state.w, False, meta)
