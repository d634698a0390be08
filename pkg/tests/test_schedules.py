import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hogwild_lab import schedules as S


def test_theorem_sgd_values():
    s = S.theorem_sgd_schedule(0.01, 1.0)
    assert s.E == pytest.approx(400.0)
    assert s.eta0 == pytest.approx(0.5)
    assert s.eta(100) == pytest.approx(2 / (0.01 * 500))
    with pytest.raises(S.ScheduleError):
        S.theorem_sgd_schedule(0.01, 1.0, alpha=1.5)


def test_hogwild_values():
    s = S.hogwild_schedule(0.01, 1.0, 1, 10)
    assert s.E == pytest.approx(1600.0) and s.eta0 == pytest.approx(0.25)
    assert S.hogwild_schedule(1.0, 1.0, 1, 10).E == 20.0
    # 2 tau dominates once the delay is large
    assert S.hogwild_schedule(1.0, 1.0, 1, 100).E == 200.0
    with pytest.raises(S.ScheduleError):
        S.hogwild_schedule(1.0, 1.0, 1, 0, alpha=3)
    with pytest.raises(S.ScheduleError):
        S.hogwild_schedule(1.0, 1.0, 1, 0, alpha=6, alpha_t_rule=7)


def test_hogwild_cap_respected_on_grid():
    for mu in (0.01, 0.1, 1.0):
        for L in (1.0, 3.0):
            for D in (1, 2, 5):
                for tau in (0, 5, 50):
                    for alpha in (4, 6):
                        s = S.hogwild_schedule(mu, L, D, tau, alpha)
                        assert s.eta0 <= 1 / (4 * L * D) * (1 + 1e-12)
                        nc = S.hogwild_schedule(mu, max(L, mu), D, tau, alpha, nonconvex=True)
                        assert nc.eta0 <= mu / (4 * max(L, mu) ** 2 * D) * (1 + 1e-12)


def test_hogwild_as():
    s = S.hogwild_as_schedule(1.0, 1, 1.0, 30, 10)
    assert s.eta0 == pytest.approx(1 / 90)
    with pytest.raises(S.ScheduleError):
        S.hogwild_as_schedule(1.0, 1, 1.0, 20, 10)      # k < 3 tau
    with pytest.raises(S.ScheduleError):
        S.hogwild_as_schedule(1.0, 1, 0.1, 1, 0)        # (2+beta)k <= 4


@given(st.integers(2, 60), st.floats(0.1, 4.0), st.integers(1, 4))
@settings(max_examples=80, deadline=None)
def test_hogwild_as_admissible_when_k_at_least_3tau(tau, beta, D):
    s = S.hogwild_as_schedule(1.0, D, beta, 3 * tau, tau)
    assert s.eta0 < 1 / (4 * D)


def test_power_and_stepped():
    assert S.power_schedule(0.5, 1.0, K=4.0).eta0 == pytest.approx(0.5)
    assert S.power_schedule(0.75, 1.0).eta0 == pytest.approx(0.5)
    with pytest.raises(S.ScheduleError):
        S.power_schedule(0.75, 1.0, K=2.0)
    st_ = S.stepped_schedule(1.0, 8.0)
    np.testing.assert_allclose(st_.eta([0, 7, 8, 23, 24]), [0.5, 0.5, 0.25, 0.25, 0.125])
    alpha = st_.implied_alpha(np.arange(0, 500))
    assert alpha.min() >= 4 and alpha.max() < 8


@pytest.mark.parametrize("s", [
    S.constant_schedule(0.1),
    S.classic_schedule(2.0, 3.0),
    S.theorem_sgd_schedule(0.5, 1.0),
    S.hogwild_as_schedule(1.0, 2, 1.0, 12, 4),
    S.power_schedule(0.6, 1.0),
    S.power_schedule(1.0, 1.0),
    S.stepped_schedule(1.0, 5.0),
])
def test_cumulative_matches_quadrature(s):
    for t in (0.5, 3.0, 40.0, 1234.5):
        ref, _ = integrate.quad(lambda x: s.eta(x), 0, t, limit=500,
                                points=[p for p in 2.0 ** np.arange(12) - getattr(s, "E", 0) if 0 < p < t]
                                or None)
        assert s.cumulative(t) == pytest.approx(ref, rel=1e-8)


def test_schedules_non_increasing():
    for s in (S.theorem_sgd_schedule(0.1, 1.0), S.power_schedule(0.5, 2.0),
              S.stepped_schedule(0.5, 3.0), S.growing_tau_schedule(1.0, 1.0)):
        e = s.eta_array(0, 5000)
        assert np.all(np.diff(e) <= 0)


def test_log_tau_rate_and_floor():
    t = math.exp(4)
    assert S.log_tau_rate(t) == pytest.approx(0.1875)
    assert S.sqrt_tL_tau(t) == 3
    assert S.sqrt_tL_tau(1.0) == S.sqrt_tL_tau(3.0)
    assert S.sqrt_tL_tau(1.0, floor=2) == 2
    taus = S.sqrt_tL_tau(np.arange(1, 20000))
    assert np.all(np.diff(taus) >= 0)


def test_growing_tau_schedule():
    s = S.growing_tau_schedule(1.0, 1.0)
    assert s.E_of_t(0) == 48.0
    t = 1e8
    assert s.E_of_t(t) == pytest.approx(max(2 * S.sqrt_tL_tau(t), 48.0))
    with pytest.raises(S.ScheduleError):
        S.growing_tau_schedule(1.0, 1.0, alpha=12, alpha_t=8)


def test_batch_admissibility():
    S.check_batch_admissible(S.constant_schedule(0.25), 1.0, 2)
    with pytest.raises(S.ScheduleError):
        S.check_batch_admissible(S.constant_schedule(0.3), 1.0, 2)
