"""Asynchronous recursion: lock-free shared-memory workers and a delay simulator.

Parallel mode runs ``P`` numba workers (GIL released) on a :class:`SharedModel`
whose cells are only touched through the atomic load/add primitives of the C
shim ``_atomic``.  A global atomic counter hands out the iteration index ``t``
when an update is about to be applied, which fixes ``eta_t``.  Metrics in this
mode come from snapshots read one cell at a time by whichever worker claims a
record iteration, so they are themselves inconsistent reads.

The delay simulator is single threaded and deterministic.  It keeps
``committed = w_{t-tau}`` plus a ring buffer of the last ``tau`` updates, and forms
each read vector by adding a masked subset of the pending updates.
"""
from __future__ import annotations

import ctypes
import threading
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _atomic
from . import _kernels as K
from .engine_seq import DivergenceError, Recorder, Streams, Trace, _Work, record_points
from .objectives import Objective
from .schedules import StepSchedule, sqrt_tL_tau

MASK_POLICIES = {"all_in": K.ALL_IN, "none_in": K.NONE_IN, "bernoulli": K.BERNOULLI,
                 "per_coordinate_random": K.PER_COORDINATE}

_lib = ctypes.CDLL(_atomic.__file__)
_addr = ctypes.c_ssize_t


def _bind(name, restype, *argtypes):
    f = getattr(_lib, name)
    f.restype = restype
    f.argtypes = list(argtypes)
    return f


hw_load = _bind("hw_load", ctypes.c_double, _addr, ctypes.c_int64)
hw_store = _bind("hw_store", None, _addr, ctypes.c_int64, ctypes.c_double)
hw_add = _bind("hw_add", ctypes.c_double, _addr, ctypes.c_int64, ctypes.c_double)
hw_add_many = _bind("hw_add_many", ctypes.c_int64, _addr, _addr, _addr, ctypes.c_int64)
hw_fetch_add = _bind("hw_fetch_add_i64", ctypes.c_int64, _addr, ctypes.c_int64)
hw_load_i64 = _bind("hw_load_i64", ctypes.c_int64, _addr)


class SharedModel:
    """Fixed-length vector of doubles with indivisible per-cell load and add."""

    def __init__(self, init):
        init = np.asarray(init, dtype=np.float64)
        if init.ndim == 0:
            init = np.zeros(int(init))
        self.cells = np.array(init, dtype=np.float64, copy=True)
        self.addr = self.cells.ctypes.data

    @property
    def dim(self) -> int:
        return len(self.cells)

    def load(self, i: int) -> float:
        return hw_load(self.addr, int(i))

    def store(self, i: int, v: float) -> None:
        hw_store(self.addr, int(i), float(v))

    def add(self, i: int, delta: float) -> float:
        return hw_add(self.addr, int(i), float(delta))

    def add_many(self, idx, deltas) -> int:
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        deltas = np.ascontiguousarray(deltas, dtype=np.float64)
        if np.any((idx < 0) | (idx >= self.dim)):
            raise IndexError("cell index out of range")
        return hw_add_many(self.addr, idx.ctypes.data, deltas.ctypes.data, len(idx))

    def snapshot(self) -> np.ndarray:
        """Cell-by-cell atomic reads; not a consistent view under concurrency."""
        return np.array([hw_load(self.addr, i) for i in range(self.dim)])


class AtomicCounter:
    def __init__(self, value: int = 0):
        self.cell = np.array([value], dtype=np.int64)
        self.addr = self.cell.ctypes.data

    def fetch_add(self, inc: int = 1) -> int:
        return hw_fetch_add(self.addr, int(inc))

    def load(self) -> int:
        return hw_load_i64(self.addr)


@njit(nogil=True)
def _hammer(cells, idx, deltas):
    a = cells.ctypes.data
    for k in range(len(idx)):
        hw_add(a, idx[k], deltas[k])


def issue_updates(model: SharedModel, idx_per_worker, deltas_per_worker) -> None:
    """Apply each worker's (index, delta) list concurrently, one thread per worker."""
    jobs = [(np.ascontiguousarray(i, dtype=np.int64), np.ascontiguousarray(d, dtype=np.float64))
            for i, d in zip(idx_per_worker, deltas_per_worker)]
    for i, _ in jobs:
        if len(i) and (i.min() < 0 or i.max() >= model.dim):
            raise IndexError("cell index out of range")
    threads = [threading.Thread(target=_hammer, args=(model.cells, i, d)) for i, d in jobs]
    for th in threads:
        th.start()
    for th in threads:
        th.join()


@njit(nogil=True)
def _worker(cells, counter, writes, flag, T, etas, D, fmode, v, indptr, idx, xv, y, rw, lam,
            kind, n, ex_rng, filt_rng, wv, sel, perm, record_every, snaps, snap_writes, snapped):
    ca = cells.ctypes.data
    cnt_a = counter.ctypes.data
    wr_a = writes.ctypes.data
    fl_a = flag.ctypes.data
    dim = cells.shape[0]
    while hw_load_i64(fl_a) == 0:
        i = ex_rng.integers(0, n)
        lo = indptr[i]
        m = indptr[i + 1] - lo
        cnt = 0
        mult = 1.0
        if m > 0:
            for k in range(m):
                wv[k] = hw_load(ca, idx[lo + k])
            cnt, mult = K.choose_filter(m, D, fmode, v, filt_rng, sel, perm)
        t = hw_fetch_add(cnt_a, 1)
        if t >= T:
            return
        if t % record_every == 0:
            r = t // record_every
            snap_writes[r] = hw_load_i64(wr_a)
            for h in range(dim):
                snaps[r, h] = hw_load(ca, h)
            snapped[r] = 1
        if m == 0:
            continue
        coef = K.margin_coef(kind, y[i], xv, lo, wv, m)
        step = etas[t] * mult
        for j in range(cnt):
            k = sel[j]
            h = idx[lo + k]
            g = coef * xv[lo + k] + (lam * rw[h]) * wv[k]
            delta = -(step * g)
            old = hw_add(ca, h, delta)
            if K._bad(old + delta):
                hw_fetch_add(fl_a, 1)
        hw_fetch_add(wr_a, cnt)


def run_parallel(obj: Objective, schedule: StepSchedule, T: int, *, D: int = 1, P: int = 1,
                 v: float | None = None, seed: int = 0, w0=None, w_star=None,
                 record_every: int | None = None) -> Trace:
    """Lock-free Hogwild run with ``P`` worker threads over ``T`` global iterations.

    Worker ``p`` draws from the streams of ``Streams.from_seed(seed, p)``, so with
    ``P = 1`` the run repeats the sequential filtered engine exactly.
    """
    if P < 1 or D < 1 or T < 0:
        raise ValueError("need P >= 1, D >= 1, T >= 0")
    if record_every is None:
        record_every = max(obj.n // 10, 1)
    ev = obj.engine_view()
    fmode, fv = (K.PARTITION, 1.0) if v is None else (K.FRACTION, float(v))
    model = SharedModel(np.zeros(obj.dim) if w0 is None else w0)
    counter, writes, flag = (np.zeros(1, dtype=np.int64) for _ in range(3))
    etas = schedule.eta_array(0, T)
    nsnap = (T - 1) // record_every + 1 if T > 0 else 0
    snaps = np.zeros((nsnap, obj.dim))
    snap_writes = np.zeros(nsnap, dtype=np.int64)
    snapped = np.zeros(nsnap, dtype=np.int64)
    t_start = time.perf_counter()
    threads = []
    for p in range(P):
        s = Streams.from_seed(seed, p)
        wk = _Work(ev)
        args = (model.cells, counter, writes, flag, T, etas, D, fmode, fv, ev.indptr, ev.idx,
                ev.xv, ev.y, ev.rw, ev.lam, ev.kind, ev.n, s.examples, s.filters, wk.wv, wk.sel,
                wk.perm, record_every, snaps, snap_writes, snapped)
        threads.append(threading.Thread(target=_worker, args=args))
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - t_start

    rec = Recorder(obj, w_star, keep_iterates=False)
    for r in np.flatnonzero(snapped):
        rec(int(r * record_every), int(snap_writes[r]), snaps[r])
    diverged = bool(flag[0])
    t_final = min(int(counter[0]), T)
    final = model.snapshot()
    if not rec.rows or rec.rows[-1][0] != t_final:
        rec(t_final, int(writes[0]), final)
    rows = np.array(rec.rows)
    rows[:, 4] = np.nan
    rows[-1, 4] = elapsed
    rec.rows = [tuple(r) for r in rows]
    meta = {"engine": "parallel", "seed": seed, "D": D, "P": P, "v": v,
            "schedule": schedule.family, "metrics": "inconsistent-read"}
    tr = rec.trace(final, diverged, meta)
    if diverged:
        raise DivergenceError(f"parallel run diverged before t={t_final}", t_final, tr)
    return tr


# -- delay simulator -------------------------------------------------------

@dataclass
class DelaySimState:
    committed: np.ndarray
    shadow: np.ndarray
    ring_idx: np.ndarray
    ring_val: np.ndarray
    ring_len: np.ndarray
    ring_iter: np.ndarray
    ring_state: np.ndarray  # (head, count)
    t: int = 0
    coord_updates: int = 0

    @classmethod
    def start(cls, w0, capacity: int, width: int) -> "DelaySimState":
        w0 = np.array(w0, dtype=np.float64)
        return cls(w0.copy(), w0.copy(), np.zeros((capacity, width), dtype=np.int64),
                   np.zeros((capacity, width)), np.zeros(capacity, dtype=np.int64),
                   np.zeros(capacity, dtype=np.int64), np.zeros(2, dtype=np.int64))

    @property
    def pending(self) -> int:
        return int(self.ring_state[1])

    def pending_updates(self):
        """Pending updates oldest first, as (iteration, indices, deltas)."""
        cap = len(self.ring_len)
        head, count = self.ring_state
        out = []
        for r in range(count):
            s = (head + r) % cap
            k = self.ring_len[s]
            out.append((int(self.ring_iter[s]), self.ring_idx[s, :k].copy(),
                        self.ring_val[s, :k].copy()))
        return out

    def true_w(self) -> np.ndarray:
        """``committed`` plus every pending update, added in chronological order."""
        w = self.committed.copy()
        for _, idx, val in self.pending_updates():
            w[idx] += val
        return w


def _delay_run(obj, schedule, T, tau_of, *, D, v, mask_policy, mask_p, seed, w0, w_star,
               record_every, keep_iterates, log_reads, engine):
    if mask_policy not in MASK_POLICIES:
        raise ValueError(f"unknown mask policy {mask_policy!r}")
    if not 0 <= mask_p <= 1:
        raise ValueError("mask probability must be in [0, 1]")
    if D < 1 or T < 0:
        raise ValueError("need D >= 1 and T >= 0")
    if record_every is None:
        record_every = max(obj.n // 10, 1)
    ev = obj.engine_view()
    work = _Work(ev)
    fmode, fv = (K.PARTITION, 1.0) if v is None else (K.FRACTION, float(v))
    all_taus = np.asarray(tau_of(np.arange(T + 1)), dtype=np.int64)
    if np.any(all_taus < 0):
        raise ValueError("delays must be nonnegative")
    cap = int(all_taus.max()) + 1
    state = DelaySimState.start(np.zeros(obj.dim) if w0 is None else w0, cap, len(work.wv))
    streams = Streams.from_seed(seed)
    read_log = np.full((T if log_reads else 1, obj.dim), np.nan)
    rec = Recorder(obj, w_star, keep_iterates)
    rec(0, 0, state.true_w())
    pts = record_points(T, record_every)
    meta = {"engine": engine, "seed": seed, "D": D, "v": v, "mask_policy": mask_policy,
            "schedule": schedule.family, "tau_max": cap - 1}
    for a, b in zip(pts[:-1], pts[1:]):
        a, b = int(a), int(b)
        work.stats[0] = state.coord_updates
        log_view = read_log[a:b] if log_reads else read_log
        t_end, status = K.delay_segment(
            state.committed, state.shadow, a, b, schedule.eta_array(a, b), all_taus[a:b + 1],
            D, fmode, fv, MASK_POLICIES[mask_policy], float(mask_p), ev.indptr, ev.idx, ev.xv,
            ev.y, ev.rw, ev.lam, ev.kind, ev.n, streams.examples, streams.filters,
            streams.masks, state.ring_idx, state.ring_val, state.ring_len, state.ring_iter,
            state.ring_state, work.wv, work.sel, work.perm, work.pos, work.cut, work.stats,
            log_view, log_reads)
        state.t = int(t_end)
        state.coord_updates = int(work.stats[0])
        rec(state.t, state.coord_updates, state.true_w())
        if status != K.OK:
            tr = rec.trace(state.true_w(), True, meta)
            raise DivergenceError(f"delay simulation diverged at t={state.t}", state.t, tr)
    if log_reads:
        meta["read_log"] = read_log
    meta["state"] = state
    return rec.trace(state.true_w(), False, meta)


def run_delay_sim(obj: Objective, schedule: StepSchedule, T: int, *, D: int = 1, tau: int = 0,
                  mask_policy: str = "bernoulli", mask_p: float = 0.5, v: float | None = None,
                  seed: int = 0, w0=None, w_star=None, record_every: int | None = None,
                  keep_iterates: bool = False, log_reads: bool = False) -> Trace:
    """Deterministic simulation of reads that miss up to ``tau`` recent updates.

    Recorded metrics use the true iterate ``w_t``.  With ``log_reads`` the read
    vector of every iteration is kept in ``trace.meta["read_log"]`` (NaN where the
    coordinate was not read).  ``trace.meta["state"]`` is the final simulator state.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    k_offset = getattr(schedule, "k_offset", None)
    if k_offset is not None and k_offset < 3 * tau:
        raise ValueError(f"schedule k_offset = {k_offset} < 3*tau = {3 * tau}")
    return _delay_run(obj, schedule, T, lambda t: np.full(len(t), tau), D=D, v=v,
                      mask_policy=mask_policy, mask_p=mask_p, seed=seed, w0=w0, w_star=w_star,
                      record_every=record_every, keep_iterates=keep_iterates,
                      log_reads=log_reads, engine="delay_sim")


def run_delay_sim_growing_tau(obj: Objective, schedule: StepSchedule, T: int, *, tau_fn=None,
                              D: int = 1, mask_policy: str = "bernoulli", mask_p: float = 0.5,
                              v: float | None = None, seed: int = 0, w0=None, w_star=None,
                              record_every: int | None = None, keep_iterates: bool = False,
                              log_reads: bool = False) -> Trace:
    """Delay simulation where iteration ``t`` may miss the last ``tau_fn(t)`` updates.

    ``tau_fn`` defaults to the schedule's own ``taus`` when it has one, else to
    ``floor(sqrt(t L(t)))``; it must be non-decreasing.
    """
    if tau_fn is None:
        tau_fn = getattr(schedule, "taus", sqrt_tL_tau)

    def tau_of(t):
        taus = np.asarray(tau_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64)
        taus = np.broadcast_to(taus, np.shape(t))
        if np.any(np.diff(taus) < 0):
            raise ValueError("tau_fn must be non-decreasing")
        return np.floor(taus).astype(np.int64)

    return _delay_run(obj, schedule, T, tau_of, D=D, v=v, mask_policy=mask_policy,
                      mask_p=mask_p, seed=seed, w0=w0, w_star=w_star,
                      record_every=record_every, keep_iterates=keep_iterates,
                      log_reads=log_reads, engine="delay_sim_growing")


def expected_writes_per_iteration(obj: Objective, D: int = 1, v: float | None = None) -> float:
    """Exact ``E|S_u|`` for the engine's filter over uniform examples."""
    m = np.diff(obj.engine_view().indptr).astype(np.float64)
    if v is not None:
        size = np.where(m > 0, np.maximum(1, np.floor(v * m + 0.5)), 0)
        return float(np.mean(np.minimum(size, m)))
    d = np.minimum(D, np.maximum(m, 1))
    return float(np.mean(m / d))


def coordinate_update_count(trace: Trace, obj: Objective | None = None, D: int = 1,
                            v: float | None = None) -> dict:
    """Actual cumulative writes ``t'`` next to their expectations.

    ``expected`` is ``t E|S_u|`` (exact mean set size); ``theorem`` is the upper
    estimate ``t Dbar_D / D`` with ``Dbar_D = D mean(ceil(|supp|/D))``.
    """
    out = {"t": trace.t.copy(), "actual": trace.t_prime.copy()}
    if obj is not None:
        m = np.diff(obj.engine_view().indptr)
        out["expected"] = trace.t * expected_writes_per_iteration(obj, D, v)
        out["theorem"] = trace.t * float(np.mean(np.ceil(m / D)))
    return out
