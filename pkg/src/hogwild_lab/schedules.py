"""Diminishing step-size families.

Every schedule is an immutable value.  ``eta(t)`` accepts scalars or arrays of
(possibly real) iteration indices starting at 0; ``cumulative(t)`` is the
closed-form integral of ``eta`` over ``[0, t]`` when one exists.  Constructors
reject parameters whose initial step exceeds the family's admissible cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np

_SLACK = 1e-12


class ScheduleError(ValueError):
    pass


def _as_float_array(t):
    return np.asarray(t, dtype=np.float64)


def _scalar_or_array(t, values):
    return float(values) if np.ndim(t) == 0 else values


@dataclass(frozen=True)
class StepSchedule:
    family: ClassVar[str] = "base"
    cap: float | None = field(default=None, kw_only=True)

    def _eta(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eta(self, t):
        return _scalar_or_array(t, self._eta(_as_float_array(t)))

    def eta_array(self, t0: int, t1: int) -> np.ndarray:
        """Step sizes for iterations ``t0 .. t1-1``."""
        return self._eta(np.arange(t0, t1, dtype=np.float64))

    def cumulative(self, t):
        """Integral of eta over [0, t]; None when no closed form is known."""
        return None

    @property
    def eta0(self) -> float:
        return self.eta(0)

    def _check_cap(self):
        if self.eta0 <= 0 or not math.isfinite(self.eta0):
            raise ScheduleError(f"{self.family}: initial step {self.eta0} is not positive")
        if self.cap is not None and self.eta0 > self.cap * (1 + _SLACK):
            raise ScheduleError(f"{self.family}: eta_0 = {self.eta0:.6g} exceeds cap "
                                f"{self.cap:.6g}")

    def describe(self) -> dict:
        out = {"family": self.family}
        for k, v in self.__dict__.items():
            if k != "label" and not callable(v):
                out[k] = v
        return out


@dataclass(frozen=True)
class ConstantSchedule(StepSchedule):
    value: float
    family: ClassVar[str] = "constant"

    def __post_init__(self):
        self._check_cap()

    def _eta(self, t):
        return np.full_like(t, self.value, dtype=np.float64)

    def cumulative(self, t):
        return _scalar_or_array(t, self.value * _as_float_array(t))


@dataclass(frozen=True)
class ClassicSchedule(StepSchedule):
    """``eta_t = c / (t + t0)``."""
    c: float
    t0: float = 1.0
    family: ClassVar[str] = "classic"

    def __post_init__(self):
        if self.c <= 0 or self.t0 <= 0:
            raise ScheduleError("classic schedule needs c > 0 and t0 > 0")
        self._check_cap()

    def _eta(self, t):
        return self.c / (t + self.t0)

    def cumulative(self, t):
        t = _as_float_array(t)
        return _scalar_or_array(t, self.c * np.log((t + self.t0) / self.t0))


@dataclass(frozen=True)
class InverseTimeSchedule(StepSchedule):
    """``eta_t = alpha_t / (mu (t + E))`` with a constant ``alpha_t``."""
    alpha_t: float
    mu: float
    E: float
    label: str = "inverse_time"

    @property
    def family(self) -> str:
        return self.label

    def __post_init__(self):
        self._check_cap()

    def _eta(self, t):
        return self.alpha_t / (self.mu * (t + self.E))

    def cumulative(self, t):
        t = _as_float_array(t)
        return _scalar_or_array(t, self.alpha_t / self.mu * np.log((t + self.E) / self.E))


@dataclass(frozen=True)
class HogwildASSchedule(StepSchedule):
    """``eta_t = 1 / (L D kappa (2 + beta)(k + t))``."""
    L: float
    D: int
    beta: float
    k_offset: float
    tau: int
    kappa: float = 1.0
    family: ClassVar[str] = "hogwild_as"

    def __post_init__(self):
        if self.beta <= 0:
            raise ScheduleError("beta must be positive")
        if self.k_offset < 3 * self.tau:
            raise ScheduleError(f"k_offset = {self.k_offset} < 3*tau = {3 * self.tau}")
        if self.k_offset <= 0:
            raise ScheduleError("k_offset must be positive")
        self._check_cap()
        if not self.eta0 < self.cap:
            raise ScheduleError(f"hogwild_as: eta_0 = {self.eta0:.6g} not < 1/(4LD) = "
                                f"{self.cap:.6g}; increase k_offset or beta")

    @property
    def scale(self) -> float:
        return 1.0 / (self.L * self.D * self.kappa * (2.0 + self.beta))

    def _eta(self, t):
        return self.scale / (self.k_offset + t)

    def cumulative(self, t):
        t = _as_float_array(t)
        return _scalar_or_array(t, self.scale * np.log((self.k_offset + t) / self.k_offset))


@dataclass(frozen=True)
class PowerSchedule(StepSchedule):
    """``eta_t = 1 / (K + t)^q``."""
    q: float
    K: float
    family: ClassVar[str] = "power"

    def __post_init__(self):
        if self.q <= 0 or self.K <= 0:
            raise ScheduleError("power schedule needs q > 0 and K > 0")
        self._check_cap()

    def _eta(self, t):
        return 1.0 / np.power(self.K + t, self.q)

    def cumulative(self, t):
        t = _as_float_array(t)
        if self.q == 1.0:
            v = np.log((self.K + t) / self.K)
        else:
            v = (np.power(self.K + t, 1 - self.q) - self.K ** (1 - self.q)) / (1 - self.q)
        return _scalar_or_array(t, v)


def _dyadic_exponent(x: np.ndarray) -> np.ndarray:
    """floor(log2(x)) for x >= 1, exact at powers of two."""
    _, e = np.frexp(x)
    return (e - 1).astype(np.float64)


@dataclass(frozen=True)
class SteppedSchedule(StepSchedule):
    """``eta_t = 4 / (mu 2^h)`` for ``t + E`` in ``[2^h, 2^{h+1})``."""
    mu: float
    E: float
    family: ClassVar[str] = "stepped"

    def __post_init__(self):
        if self.E < 1:
            raise ScheduleError("stepped schedule needs E >= 1")
        self._check_cap()

    def block(self, t):
        return _scalar_or_array(t, _dyadic_exponent(_as_float_array(t) + self.E))

    def _eta(self, t):
        return 4.0 / (self.mu * np.exp2(_dyadic_exponent(t + self.E)))

    def implied_alpha(self, t):
        t = _as_float_array(t)
        return _scalar_or_array(t, 4.0 * (t + self.E) / np.exp2(_dyadic_exponent(t + self.E)))

    def cumulative(self, t):
        t = _as_float_array(t)
        out = np.empty(t.shape)
        for pos, tv in np.ndenumerate(t):
            total, x = 0.0, 0.0
            while x < tv:
                h = math.floor(math.log2(x + self.E))
                if 2.0 ** h > x + self.E:
                    h -= 1
                while 2.0 ** (h + 1) <= x + self.E:
                    h += 1
                end = min(tv, 2.0 ** (h + 1) - self.E)
                total += (end - x) * 4.0 / (self.mu * 2.0 ** h)
                x = end
            out[pos] = total
        return _scalar_or_array(t, out)


def log_tau_rate(t):
    """``L(t) = 1/ln t - 1/(ln t)^2``, the derivative of ``t / ln t``."""
    lt = np.log(_as_float_array(t))
    return 1.0 / lt - 1.0 / lt ** 2


def sqrt_tL_tau(t, floor: int = 0):
    """Largest admissible delay ``floor(sqrt(t L(t)))``; ``t < 3`` uses ``t = 3``."""
    t = np.maximum(_as_float_array(t), 3.0)
    tau = np.floor(np.sqrt(t * log_tau_rate(t)))
    tau = np.maximum(tau, floor).astype(np.int64)
    return int(tau) if tau.ndim == 0 else tau


@dataclass(frozen=True)
class GrowingTauSchedule(StepSchedule):
    """``eta_t = alpha_t / (mu (t + E(t)))`` with ``E(t) = max(2 tau(t), 4 L alpha D / mu)``."""
    mu: float
    L: float
    D: int
    alpha: float
    alpha_t: float
    tau_fn: Callable
    family: ClassVar[str] = "hogwild_growing"

    def __post_init__(self):
        if not 12 <= self.alpha_t <= self.alpha:
            raise ScheduleError("growing-tau mode needs 12 <= alpha_t <= alpha")
        self._check_cap()

    def taus(self, t) -> np.ndarray:
        t = _as_float_array(t)
        return np.asarray(self.tau_fn(t), dtype=np.float64)

    def E_of_t(self, t):
        t = _as_float_array(t)
        return _scalar_or_array(t, np.maximum(2.0 * self.taus(t),
                                              4 * self.L * self.alpha * self.D / self.mu))

    def _eta(self, t):
        return self.alpha_t / (self.mu * (t + self.E_of_t(t)))


# -- constructors ---------------------------------------------------------

def theorem_sgd_schedule(mu: float, L: float, alpha: float = 2.0,
                         nonconvex: bool = False) -> InverseTimeSchedule:
    """``eta_t = alpha / (mu (t + E))`` with ``E = 2 alpha L / mu`` so ``eta_0 = 1/(2L)``."""
    if mu <= 0 or L < mu:
        raise ScheduleError("need mu > 0 and L >= mu")
    if alpha < 2:
        raise ScheduleError("theorem_sgd requires alpha >= 2")
    kappa = L / mu if nonconvex else 1.0
    E = 2 * alpha * L * kappa / mu
    return InverseTimeSchedule(alpha, mu, E, label="theorem_sgd", cap=1 / (2 * L * kappa))


def hogwild_schedule(mu: float, L: float, D: int, tau: int, alpha: float = 4.0,
                     alpha_t_rule="constant", nonconvex: bool = False) -> StepSchedule:
    """``eta_t = alpha_t / (mu (t + E))`` with ``E = max(2 tau, 4 L alpha D / mu)``.

    ``alpha_t_rule`` is ``"constant"`` (alpha_t = 4), ``"alpha"`` (alpha_t = alpha),
    ``"stepped"`` (dyadic piecewise-constant steps, needs alpha >= 8) or a number
    in ``[4, alpha]``.
    """
    if alpha < 4:
        raise ScheduleError("hogwild schedule requires alpha >= 4")
    if mu <= 0 or L <= 0 or D < 1 or tau < 0:
        raise ScheduleError("need mu > 0, L > 0, D >= 1, tau >= 0")
    kappa = L / mu if nonconvex else 1.0
    E = max(2.0 * tau, 4 * L * kappa * alpha * D / mu)
    cap = 1 / (4 * L * kappa * D)
    if alpha_t_rule == "stepped":
        if alpha < 8:
            raise ScheduleError("stepped alpha_t ranges over [4, 8): needs alpha >= 8")
        return SteppedSchedule(mu, E, cap=cap)
    if alpha_t_rule == "constant":
        alpha_t = 4.0
    elif alpha_t_rule == "alpha":
        alpha_t = float(alpha)
    else:
        alpha_t = float(alpha_t_rule)
    if not 4 <= alpha_t <= alpha:
        raise ScheduleError(f"alpha_t = {alpha_t} outside [4, {alpha}]")
    return InverseTimeSchedule(alpha_t, mu, E, label="hogwild_expected", cap=cap)


def hogwild_as_schedule(L: float, D: int, beta: float, k_offset: float, tau: int,
                        nonconvex: bool = False, mu: float | None = None) -> HogwildASSchedule:
    kappa = 1.0
    if nonconvex:
        if mu is None:
            raise ScheduleError("nonconvex variant needs mu")
        kappa = L / mu
    return HogwildASSchedule(L, D, beta, k_offset, tau, kappa, cap=1 / (4 * L * D * kappa))


def power_schedule(q: float, L: float, K: float | None = None) -> PowerSchedule:
    """``1/(K + t)^q`` with ``eta_0 <= 1/(2L)``; ``K`` defaults to the smallest
    admissible offset ``(2L)^(1/q)``."""
    if K is None:
        K = (2 * L) ** (1 / q)
    return PowerSchedule(q, K, cap=1 / (2 * L))


def stepped_schedule(mu: float, E: float, L: float | None = None,
                     D: int = 1) -> SteppedSchedule:
    cap = None if L is None else 1 / (4 * L * D)
    return SteppedSchedule(mu, E, cap=cap)


def growing_tau_schedule(mu: float, L: float, D: int = 1, alpha: float = 12.0,
                         alpha_t: float = 12.0, tau_fn: Callable = sqrt_tL_tau,
                         nonconvex: bool = False) -> GrowingTauSchedule:
    kappa = L / mu if nonconvex else 1.0
    return GrowingTauSchedule(mu, L * kappa, D, alpha, alpha_t, tau_fn,
                              cap=1 / (4 * L * kappa * D))


def constant_schedule(value: float, cap: float | None = None) -> ConstantSchedule:
    return ConstantSchedule(value, cap=cap)


def classic_schedule(c: float, t0: float = 1.0, cap: float | None = None) -> ClassicSchedule:
    return ClassicSchedule(c, t0, cap=cap)


def check_batch_admissible(s: StepSchedule, L: float, D: int) -> None:
    """Batch mode needs ``eta_t <= 1/(2LD)``; schedules are non-increasing."""
    if s.eta0 > (1 + _SLACK) / (2 * L * D):
        raise ScheduleError(f"batch mode needs eta_0 <= 1/(2LD) = {1 / (2 * L * D):.6g}")


def eta(s: StepSchedule, t):
    return s.eta(t)
