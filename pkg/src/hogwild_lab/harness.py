"""Experiment configs, synthetic problems, multi-seed runs and CSV output.

A config is a flat TOML table (see ``RunConfig`` for the keys).  ``run_config``
runs every seed, aligns the traces on their recorded iterations and aggregates
mean and population standard deviation across the seeds that did not diverge.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import tomli

from . import engine_hogwild as EH
from . import engine_seq as ES
from . import schedules as S
from . import theory
from .data import Dataset, load, subsample
from .objectives import (Objective, ProblemConstants, estimate_L, estimate_mu, estimate_N,
                         solve_reference)

log = logging.getLogger(__name__)

ENGINES = ("seq", "filtered", "batch", "parallel", "delay_sim", "delay_sim_growing")
SCHEDULES = ("theorem_sgd", "hogwild", "hogwild_as", "power", "stepped", "growing_tau",
             "constant", "classic")
PRESETS = ("quadratic", "two_function", "sparse_logistic")
CSV_HEADER = ["t", "t_prime", "epoch", "loss_mean", "loss_std", "dist_mean", "dist_std", "bound"]
SEED_HEADER = ["t", "t_prime", "epoch", "loss", "dist_sq", "wall_time"]
FRACTIONS = (1.0, 3 / 4, 2 / 3, 1 / 2, 1 / 3, 1 / 4)


class ConfigError(ValueError):
    pass


class AllSeedsDiverged(RuntimeError):
    pass


# -- synthetic problems ------------------------------------------------------

K_BLOWUP = 1e100


class TwoFunctionProblem:
    """``f_1(w) = w^2/2`` and ``f_2(w) = w`` with equal probability.

    ``F(w) = (w^2/2 + w)/2`` has ``w* = -1``, ``mu = 1/2``; each ``f_i`` is 1-smooth
    and ``N = 2 E|f_i'(w*)|^2 = 2``.  The component gradient ``f_1'(w) = w`` is
    unbounded along SGD paths.
    """
    n = 2
    dim = 1
    w_star = np.array([-1.0])

    def full_objective(self, w) -> float:
        w = float(np.asarray(w).reshape(-1)[0])
        return 0.5 * (0.5 * w * w + w)

    def full_grad(self, w) -> np.ndarray:
        return 0.5 * (np.asarray(w, dtype=np.float64) + 1.0)

    def component_grad(self, w, i: int) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return w.copy() if i == 0 else np.ones_like(w)

    def second_moment(self, w) -> float:
        w = float(np.asarray(w).reshape(-1)[0])
        return 0.5 * (w * w + 1.0)

    def constants(self) -> ProblemConstants:
        return ProblemConstants(mu=0.5, L=1.0, N=2.0 * self.second_moment(self.w_star),
                                w_star=self.w_star.copy(),
                                w_star_F=self.full_objective(self.w_star))

    def run_sgd(self, schedule, T: int, seed: int = 0, w0=None, record_every: int = 1,
                keep_iterates: bool = False) -> ES.Trace:
        streams = ES.Streams.from_seed(seed)
        w = np.array([0.0] if w0 is None else w0, dtype=np.float64).reshape(1)
        rec = ES.Recorder(self, self.w_star, keep_iterates)
        rec(0, 0, w)
        etas = schedule.eta_array(0, T)
        for t in range(T):
            i = int(streams.examples.integers(0, 2))
            w = w - etas[t] * self.component_grad(w, i)
            if not np.all(np.abs(w) < K_BLOWUP):
                raise ES.DivergenceError(f"diverged at t={t + 1}", t + 1)
            if (t + 1) % record_every == 0 or t + 1 == T:
                rec(t + 1, t + 1, w)
        return rec.trace(w, meta={"engine": "seq", "seed": seed, "schedule": schedule.family})


def _quadratic(n=200, dim=10, lam=0.1, row_norm_sq=0.45, anisotropy=10.0, noise=0.5,
               seed=0, design="random", targets=None):
    rng = np.random.default_rng(seed)
    if design == "identity":
        X = np.sqrt(row_norm_sq) * np.eye(dim)
        y = rng.standard_normal(dim) if targets is None else np.asarray(targets, dtype=np.float64)
        y = np.sqrt(row_norm_sq) * y
    elif design == "random":
        scales = np.geomspace(1.0, 1.0 / anisotropy, dim)
        X = rng.standard_normal((n, dim)) * scales
        X *= np.sqrt(row_norm_sq) / np.linalg.norm(X, axis=1, keepdims=True)
        w_true = rng.standard_normal(dim)
        y = X @ w_true + noise * rng.standard_normal(n)
    else:
        raise ConfigError(f"unknown quadratic design {design!r}")
    ds = Dataset.from_dense(X, y)
    obj = Objective("least_squares", ds, lam=lam, family="dense")
    m = ds.n
    H = 2.0 * X.T @ X / m + lam * np.eye(dim)
    w_star = np.linalg.solve(H, 2.0 * X.T @ y / m)
    eig = np.linalg.eigvalsh(H)
    mu = lam if lam > 0 else float(eig[0])
    consts = ProblemConstants(mu=mu, L=estimate_L(obj), N=estimate_N(obj, w_star),
                              w_star=w_star, w_star_F=obj.full_objective(w_star),
                              info={"mu_exact": float(eig[0]), "L_full": float(eig[-1]),
                                    "hessian": H})
    return obj, consts


def _sparse_logistic(n=5000, dim=50, nnz=10, row_norm_sq=1.0, flip=0.1, lam=None, seed=0,
                     family="support", tol=1e-10):
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(dim)
    indptr = np.arange(0, (n + 1) * nnz, nnz)
    idx = np.concatenate([np.sort(rng.choice(dim, nnz, replace=False)) for _ in range(n)])
    vals = rng.standard_normal(n * nnz).reshape(n, nnz)
    vals *= np.sqrt(row_norm_sq) / np.linalg.norm(vals, axis=1, keepdims=True)
    vals = vals.ravel()
    margins = np.add.reduceat(vals * w_true[idx], indptr[:-1])
    y = np.where(margins >= 0, 1.0, -1.0)
    y[rng.random(n) < flip] *= -1
    ds = Dataset(dim, y, indptr, idx, vals)
    obj = Objective("logistic", ds, lam=lam, family=family)
    w_star, F_star = solve_reference(obj, tol)
    consts = ProblemConstants(mu=estimate_mu(obj), L=estimate_L(obj), N=estimate_N(obj, w_star),
                              w_star=w_star, w_star_F=F_star)
    return obj, consts


def synthetic_problem(preset: str, **params):
    """``(objective, ProblemConstants)`` for a named preset.

    ``quadratic``: least squares with rows of fixed squared norm ``row_norm_sq``,
    column scales spanning ``anisotropy``, ridge ``lam`` and noisy targets, so
    ``L = 2 row_norm_sq + lam`` and ``N > 0``; ``design="identity"`` uses an
    identity design (with ``lam = 0`` then ``w* = targets``).
    ``two_function``: the 1-d two-component problem (returns a TwoFunctionProblem).
    ``sparse_logistic``: sparse logistic surrogate with planted labels.
    """
    if preset == "quadratic":
        return _quadratic(**params)
    if preset == "two_function":
        if params:
            raise ConfigError("two_function preset takes no parameters")
        p = TwoFunctionProblem()
        return p, p.constants()
    if preset == "sparse_logistic":
        return _sparse_logistic(**params)
    raise ConfigError(f"unknown synthetic preset {preset!r}")


# -- config -------------------------------------------------------------------

@dataclass
class RunConfig:
    # problem
    dataset: str | None = None
    dim: int | None = None
    subsample: int | None = None
    subsample_seed: int = 0
    synthetic: str | None = None
    synthetic_params: dict = field(default_factory=dict)
    objective: str = "logistic"
    lam: float | None = None
    family: str = "support"
    # engine
    engine: str = "filtered"
    D: int = 1
    tau: int = 0
    v: float | None = None
    mask_policy: str = "bernoulli"
    mask_p: float = 0.5
    P: int = 1
    batch_k: int = 1
    # schedule
    schedule: str = "hogwild"
    mu: float | None = None
    L: float | None = None
    alpha: float | None = None
    alpha_t: Any = "constant"
    beta: float = 1.0
    k_offset: float | None = None
    q: float = 1.0
    K: float | None = None
    E: float | None = None
    eta: float | None = None
    c: float | None = None
    t0: float = 1.0
    nonconvex: bool = False
    # run
    T: int | None = None
    epochs: float | None = None
    seeds: list = field(default_factory=lambda: list(range(10)))
    record_every: int | None = None
    w0: float = 0.0
    bound: str = "none"
    remainder_const: float = 0.0
    solve_tol: float = 1e-10
    out: str | None = None

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        flat = dict(mapping)
        params = flat.pop("synthetic_params", {})
        # dotted overrides and [synthetic_params] tables both land here
        for k in [k for k in flat if k.startswith("synthetic_params.")]:
            params[k.split(".", 1)[1]] = flat.pop(k)
        unknown = sorted(set(flat) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**flat, synthetic_params=dict(params))
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"config parse error: {e}") from None
        return cls.from_mapping(data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_toml(fh.read())

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_mapping(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        lines, tables = [], []
        for k, v in self.to_dict().items():
            if v is None:
                continue
            if isinstance(v, dict):
                tables.append((k, v))
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        for name, table in tables:
            if table:
                lines.append(f"\n[{name}]")
                lines += [f"{k} = {_toml_value(v)}" for k, v in table.items()]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out", None)
        d.pop("seeds", None)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self) -> None:
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("set exactly one of 'dataset' and 'synthetic'")
        if self.synthetic is not None and self.synthetic not in PRESETS:
            raise ConfigError(f"unknown synthetic preset {self.synthetic!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}; choose from {ENGINES}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if self.objective not in ("logistic", "least_squares"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.family not in ("support", "dense"):
            raise ConfigError(f"unknown family {self.family!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if (self.T is None) == (self.epochs is None):
            raise ConfigError("set exactly one of 'T' and 'epochs'")
        if (self.T is not None and self.T < 0) or (self.epochs is not None and self.epochs < 0):
            raise ConfigError("T and epochs must be nonnegative")
        if self.D < 1 or self.P < 1 or self.tau < 0 or self.batch_k < 1:
            raise ConfigError("need D >= 1, P >= 1, tau >= 0, batch_k >= 1")
        if self.v is not None and not 0 < self.v <= 1:
            raise ConfigError("fraction v must be in (0, 1]")
        if self.mask_policy not in EH.MASK_POLICIES:
            raise ConfigError(f"unknown mask policy {self.mask_policy!r}")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.bound not in ("none",) + theory.BOUND_FAMILIES:
            raise ConfigError(f"unknown bound family {self.bound!r}")
        if self.schedule == "hogwild_as" and self.k_offset is not None \
                and self.k_offset < 3 * self.tau:
            raise ConfigError(f"hogwild_as needs k_offset >= 3*tau = {3 * self.tau}")
        if (self.schedule == "growing_tau") != (self.engine == "delay_sim_growing"):
            raise ConfigError("the growing_tau schedule and the delay_sim_growing engine "
                              "go together")
        if self.synthetic == "two_function" and self.engine != "seq":
            raise ConfigError("the two_function preset only runs with engine = 'seq'")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` where value is read as a TOML value (bare words become strings)."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} is not key=value")
    key = key.strip()
    try:
        value = tomli.loads(f"x = {raw.strip()}")["x"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return key, value


# -- problem and schedule construction ----------------------------------------

@dataclass
class Problem:
    obj: Any
    constants: ProblemConstants

    @property
    def n(self) -> int:
        return self.obj.n


def build_problem(cfg: RunConfig) -> Problem:
    if cfg.synthetic is not None:
        params = dict(cfg.synthetic_params)
        if cfg.synthetic == "sparse_logistic":
            params.setdefault("family", cfg.family)
            params.setdefault("tol", cfg.solve_tol)
            if cfg.lam is not None:
                params.setdefault("lam", cfg.lam)
        elif cfg.synthetic == "quadratic" and cfg.lam is not None:
            params.setdefault("lam", cfg.lam)
        try:
            obj, consts = synthetic_problem(cfg.synthetic, **params)
        except TypeError as e:
            raise ConfigError(f"bad synthetic_params: {e}") from None
        return Problem(obj, consts)
    ds = load(cfg.dataset, cfg.dim)
    if cfg.subsample is not None:
        ds = subsample(ds, cfg.subsample, cfg.subsample_seed)
    obj = Objective(cfg.objective, ds, lam=cfg.lam, family=cfg.family)
    w_star, F_star = solve_reference(obj, cfg.solve_tol)
    consts = ProblemConstants(mu=estimate_mu(obj), L=estimate_L(obj), N=estimate_N(obj, w_star),
                              w_star=w_star, w_star_F=F_star)
    return Problem(obj, consts)


def build_schedule(cfg: RunConfig, consts: ProblemConstants) -> S.StepSchedule:
    mu = cfg.mu if cfg.mu is not None else consts.mu
    L = cfg.L if cfg.L is not None else consts.L
    name = cfg.schedule
    try:
        if name == "theorem_sgd":
            return S.theorem_sgd_schedule(mu, L, cfg.alpha or 2.0, cfg.nonconvex)
        if name == "hogwild":
            return S.hogwild_schedule(mu, L, cfg.D, cfg.tau, cfg.alpha or 4.0, cfg.alpha_t,
                                      cfg.nonconvex)
        if name == "hogwild_as":
            k = cfg.k_offset if cfg.k_offset is not None else max(3 * cfg.tau, 1)
            return S.hogwild_as_schedule(L, cfg.D, cfg.beta, k, cfg.tau, cfg.nonconvex, mu)
        if name == "power":
            return S.power_schedule(cfg.q, L, cfg.K)
        if name == "stepped":
            E = cfg.E if cfg.E is not None else 4 * L * (cfg.alpha or 8.0) * cfg.D / mu
            return S.stepped_schedule(mu, E, L, cfg.D)
        if name == "growing_tau":
            a = cfg.alpha or 12.0
            at = a if cfg.alpha_t in ("constant", "alpha") else float(cfg.alpha_t)
            return S.growing_tau_schedule(mu, L, cfg.D, a, at, nonconvex=cfg.nonconvex)
        if name == "constant":
            if cfg.eta is None:
                raise ConfigError("constant schedule needs 'eta'")
            return S.constant_schedule(cfg.eta)
        if cfg.c is None:
            raise ConfigError("classic schedule needs 'c'")
        return S.classic_schedule(cfg.c, cfg.t0)
    except S.ScheduleError as e:
        raise ConfigError(f"schedule not admissible: {e}") from None


def bound_curve(cfg: RunConfig, consts: ProblemConstants, schedule,
                w0: np.ndarray) -> theory.BoundCurve | None:
    if cfg.bound == "none":
        return None
    mu = cfg.mu if cfg.mu is not None else consts.mu
    L = cfg.L if cfg.L is not None else consts.L
    if cfg.bound == "sgd_theorem2":
        d0 = float(np.sum((w0 - consts.w_star) ** 2))
        return theory.BoundCurve("sgd_theorem2", {"mu": mu, "L": L, "N": consts.N,
                                                  "w0_dist_sq": d0})
    alpha = cfg.alpha or 4.0
    E = getattr(schedule, "E", None)
    if E is None:
        raise ConfigError("hogwild_theorem4 bound needs a schedule with a fixed E")
    return theory.BoundCurve("hogwild_theorem4", {"alpha": alpha, "mu": mu, "N": consts.N,
                                                  "D": cfg.D, "E": E})


# -- running -------------------------------------------------------------------

@dataclass
class AggregateTrace:
    t: np.ndarray
    t_prime: np.ndarray
    epoch: np.ndarray
    loss_mean: np.ndarray
    loss_std: np.ndarray
    dist_mean: np.ndarray
    dist_std: np.ndarray
    bound: np.ndarray
    per_seed: dict = field(default_factory=dict)
    diverged: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def columns(self) -> dict:
        return {k: getattr(self, k) for k in CSV_HEADER}


def run_seed(cfg: RunConfig, problem: Problem, schedule, seed: int) -> ES.Trace:
    obj, consts = problem.obj, problem.constants
    n = obj.n
    T = cfg.T if cfg.T is not None else int(round(cfg.epochs * n))
    record_every = cfg.record_every or max(n // 10, 1)
    w0 = np.full(obj.dim, float(cfg.w0))
    common = dict(seed=seed, w0=w0, w_star=consts.w_star, record_every=record_every)
    if isinstance(obj, TwoFunctionProblem):
        return obj.run_sgd(schedule, T, seed, w0, record_every)
    if cfg.engine in ("seq", "filtered", "batch"):
        mode = {"seq": "sgd"}.get(cfg.engine, cfg.engine)
        L = cfg.L if cfg.L is not None else consts.L
        return ES.run(obj, schedule, T, mode=mode, D=cfg.D, v=cfg.v, batch_k=cfg.batch_k,
                      L=L, **common)
    if cfg.engine == "parallel":
        return EH.run_parallel(obj, schedule, T, D=cfg.D, P=cfg.P, v=cfg.v, **common)
    if cfg.engine == "delay_sim":
        return EH.run_delay_sim(obj, schedule, T, D=cfg.D, tau=cfg.tau,
                                mask_policy=cfg.mask_policy, mask_p=cfg.mask_p, v=cfg.v,
                                **common)
    return EH.run_delay_sim_growing_tau(obj, schedule, T, D=cfg.D, mask_policy=cfg.mask_policy,
                                        mask_p=cfg.mask_p, v=cfg.v, **common)


def aggregate(traces: dict, n: int, bound=None, diverged=None, meta=None) -> AggregateTrace:
    """Mean and population std over traces sharing the same recorded ``t``."""
    good = {s: tr for s, tr in traces.items() if not tr.diverged}
    if not good:
        raise AllSeedsDiverged("every seed diverged")
    ref = next(iter(good.values())).t
    for s, tr in good.items():
        if not np.array_equal(tr.t, ref):
            raise ValueError(f"seed {s} recorded different iterations; cannot align")
    loss = np.vstack([tr.loss for tr in good.values()])
    dist = np.vstack([tr.dist_sq for tr in good.values()])
    tp = np.vstack([tr.t_prime for tr in good.values()]).astype(np.float64)
    b = bound(ref) if bound is not None else np.full(len(ref), np.nan)
    return AggregateTrace(ref.copy(), tp.mean(axis=0), ref / n, loss.mean(axis=0),
                          loss.std(axis=0), dist.mean(axis=0), dist.std(axis=0),
                          np.asarray(b, dtype=np.float64), dict(traces), list(diverged or []),
                          dict(meta or {}))


def run_config(cfg: RunConfig, problem: Problem | None = None) -> AggregateTrace:
    cfg.validate()
    problem = problem or build_problem(cfg)
    schedule = build_schedule(cfg, problem.constants)
    if cfg.engine == "batch":
        try:
            S.check_batch_admissible(schedule, cfg.L or problem.constants.L, cfg.D)
        except S.ScheduleError as e:
            raise ConfigError(str(e)) from None
    traces, diverged = {}, []
    for seed in cfg.seeds:
        try:
            traces[seed] = run_seed(cfg, problem, schedule, int(seed))
        except ES.DivergenceError as e:
            log.warning("seed %s diverged: %s", seed, e)
            diverged.append(seed)
            if e.trace is not None:
                traces[seed] = e.trace
    w0 = np.full(problem.obj.dim, float(cfg.w0))
    curve = bound_curve(cfg, problem.constants, schedule, w0)
    meta = {"config_hash": cfg.config_hash(), "schedule": schedule.describe(),
            "mu": problem.constants.mu, "L": problem.constants.L, "N": problem.constants.N}
    return aggregate(traces, problem.n, curve, diverged, meta)


# -- CSV ---------------------------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _fmt_int(x) -> str:
    return str(int(x))


def emit_csv(trace: AggregateTrace | None, path) -> None:
    """Write the aggregate columns; blank cells mean "not available"."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    if trace is not None:
        cols = trace.columns()
        for r in range(len(trace)):
            w.writerow([_fmt_int(cols["t"][r])] + [_fmt(cols[k][r]) for k in CSV_HEADER[1:]])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def emit_seed_csv(trace: ES.Trace, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEED_HEADER)
    for r in range(len(trace)):
        w.writerow([_fmt_int(trace.t[r]), _fmt_int(trace.t_prime[r]), _fmt(trace.epoch[r]),
                    _fmt(trace.loss[r]), _fmt(trace.dist_sq[r]), _fmt(trace.wall_time[r])])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> dict:
    """Columns of a CSV written by this module, as float arrays (blank -> NaN)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty CSV file")
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        out[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in body],
                             dtype=np.float64)
    return out


def write_outputs(cfg: RunConfig, agg: AggregateTrace, out_dir) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "aggregate.csv")]
    emit_csv(agg, paths[0])
    for seed, tr in agg.per_seed.items():
        p = os.path.join(out_dir, f"seed_{seed}.csv")
        emit_seed_csv(tr, p)
        paths.append(p)
    info = {"config": cfg.to_dict(), "config_hash": agg.meta.get("config_hash"),
            "diverged_seeds": agg.diverged, "schedule": agg.meta.get("schedule"),
            "constants": {k: agg.meta.get(k) for k in ("mu", "L", "N")}}
    p = os.path.join(out_dir, "run.json")
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    paths.append(p)
    return paths


def fraction_sweep(cfg: RunConfig, fractions=FRACTIONS, tau: int = 10) -> list[RunConfig]:
    """The experiment grid: one delay-simulated config per support fraction."""
    return [cfg.replace(engine="delay_sim", v=float(v), tau=tau) for v in fractions]
