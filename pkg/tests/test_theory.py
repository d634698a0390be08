import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from hogwild_lab import schedules as S
from hogwild_lab import theory as TH
from hogwild_lab.data import Dataset


# -- sparsity ---------------------------------------------------------------

def test_sparsity_uniform_size_four():
    st_ = TH.sparsity_stats([[0, 1, 2, 3], [2, 3, 4, 5], [6, 7, 8, 9]], D=2)
    assert st_.delta_bar == 4 and st_.delta_bar_D == 4.0


def test_sparsity_size_three_is_tight():
    st_ = TH.sparsity_stats([[0, 1, 2], [3, 4, 5]], D=2)
    assert st_.delta_bar_D == 4.0
    assert st_.delta_bar_D == st_.mean_support + st_.D - 1
    assert st_.inequality_holds()
    # the bound by the largest support does not hold when D does not divide it
    assert st_.delta_bar_D > st_.delta_bar


def test_sparsity_disjoint_collision():
    n = 7
    st_ = TH.sparsity_stats([[2 * i, 2 * i + 1] for i in range(n)], D=1)
    assert st_.collision == pytest.approx(1 / n, rel=0, abs=0)


def test_sparsity_dataset_and_list_agree():
    X = np.array([[1, 0, 2, 0], [0, 0, 3, 1], [1, 1, 1, 1]], float)
    ds = Dataset.from_dense(X, [1, -1, 1])
    a = TH.sparsity_stats(ds, 3)
    b = TH.sparsity_stats([[0, 2], [2, 3], [0, 1, 2, 3]], 3)
    assert a == b
    assert TH.sparsity_stats(ds, a.delta_bar).delta_bar_D == a.delta_bar


def test_sparsity_bad_D():
    with pytest.raises(ValueError):
        TH.sparsity_stats([[0]], 0)


@given(st.lists(st.sets(st.integers(0, 30), min_size=1, max_size=20), min_size=1, max_size=25),
       st.integers(1, 25))
@settings(max_examples=200, deadline=None)
def test_sparsity_brute_force(supports, D):
    res = TH.sparsity_stats([sorted(s) for s in supports], D)
    n = len(supports)
    assert res.delta_bar == max(len(s) for s in supports)
    total = 0
    for s in supports:
        total += math.ceil(len(s) / D)
    assert res.delta_bar_D == D * total / n
    hits = max(sum(j in s for s in supports) for j in range(31))
    assert res.collision == hits / n
    assert res.inequality_holds()
    assert TH.sparsity_stats([sorted(s) for s in supports], res.delta_bar).delta_bar_D == res.delta_bar


# -- bounds -----------------------------------------------------------------

def test_theorem2_plug_in():
    t = np.array([0.0, 1.0, 10.0, 1000.0])
    np.testing.assert_allclose(TH.theorem2_bound(t, 1.0, 1.0, 1.0, 0.0), 16 / (t + 4), rtol=1e-15)
    assert TH.theorem2_threshold(1.0, 1.0, 1.0, 0.0) == 0.0


def test_theorem2_clamp_and_threshold():
    mu, L, N, r = 0.5, 2.0, 0.25, 3.0
    T = TH.theorem2_threshold(mu, L, N, r)
    assert T == pytest.approx(4 * L / mu * (L * mu / N * r) - 4 * L / mu)
    assert TH.theorem2_bound(T / 2, mu, L, N, r) == TH.theorem2_bound(T, mu, L, N, r)
    with pytest.raises(ValueError):
        TH.theorem2_bound(1.0, mu, L, 0.0, r)


def test_theorem2_small_noise_limit():
    # T grows like 1/N while the value at a fixed t past T shrinks
    Ns = [1e-1, 1e-2, 1e-3, 1e-4]
    Ts = [TH.theorem2_threshold(1.0, 1.0, N, 1.0) for N in Ns]
    vals = [TH.theorem2_bound(1e6, 1.0, 1.0, N, 1.0) for N in Ns]
    assert all(a < b for a, b in zip(Ts, Ts[1:]))
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_hogwild_bound_plug_in():
    assert TH.hogwild_bound(100, 4, 1, 1, 1, 16) == pytest.approx(64 * 100 / 115 ** 2, rel=1e-15)


@given(st.floats(1, 1e8), st.integers(1, 64))
def test_hogwild_bound_linear_in_D(t, D):
    one = TH.hogwild_bound(t, 4.0, 0.3, 2.0, 1, 50.0)
    assert TH.hogwild_bound(t, 4.0, 0.3, 2.0, D, 50.0) == pytest.approx(D * one, rel=1e-14)


def test_hogwild_bound_limit_and_shape():
    t = 1e12
    assert TH.hogwild_bound(t, 4, 0.5, 2, 3, 40) * t == pytest.approx(4 * 16 * 3 * 2 / 0.25, rel=1e-9)
    tt = np.arange(1.0, 1e4)
    b = TH.hogwild_bound(tt, 4, 1, 1, 1, 16)
    assert np.all(b > 0)
    assert np.all(np.diff(b[tt >= 16]) < 0)


def test_hogwild_t_prime_form_matches_t_form():
    # with t' = t * Dbar_D / D the two forms agree asymptotically
    t, D, dbd = 1e9, 2, 7.0
    a = TH.hogwild_bound(t, 4, 1, 1, D, 16)
    b = TH.hogwild_bound_t_prime(t * dbd / D, 4, 1, 1, dbd)
    assert a == pytest.approx(b, rel=1e-7)


def test_remainder_envelope():
    assert TH.hogwild_remainder(1.0, 16) == 0.0
    assert TH.hogwild_remainder(np.e, 1.0, 2.0) == pytest.approx(2 / np.e ** 2)


def test_thresholds():
    T0, T1 = TH.thresholds(4, 1, 1, 1, 1, 1.0, 0.0)
    assert T0 == pytest.approx(math.exp(18), rel=1e-15)
    assert T1 == 0.0
    T0, T1 = TH.thresholds(4, 1, 1, 2, 3, 0.0, 5.0)
    assert T0 == 1.0
    assert T1 == pytest.approx(5 / (16 * 2 * 3))
    with pytest.raises(ValueError):
        TH.thresholds(4, 1, 1, 1, 1, 1.5, 0.0)


def test_bound_curve_families():
    c = TH.BoundCurve("hogwild_theorem4", {"alpha": 4, "mu": 1, "N": 1, "D": 1, "E": 16})
    assert c(100) == TH.hogwild_bound(100, 4, 1, 1, 1, 16)
    c = TH.BoundCurve("sgd_theorem2", {"mu": 1, "L": 1, "N": 1, "w0_dist_sq": 0})
    assert c(4.0) == 2.0
    with pytest.raises(ValueError):
        TH.BoundCurve("nope")(1.0)


# -- C(t) -------------------------------------------------------------------

def test_M_closed_form_and_quadrature_agree():
    s = S.power_schedule(0.75, 1.0)

    class NoClosed:
        def eta(self, t):
            return s.eta(t)

        def cumulative(self, t):
            return None

    t = np.array([10.0, 1.0, 1e4, 500.0])
    np.testing.assert_allclose(TH.M_of_t(NoClosed(), t, 0.7), TH.M_of_t(s, t, 0.7), rtol=1e-10)


@pytest.mark.parametrize("c", [1e-3, 0.1, 0.5])
def test_C_constant_closed_form(c):
    t = np.array([0.0, 0.5, 3.0, 100.0, 1e4])
    got = TH.C_of_t(S.constant_schedule(c), t, 1.0)
    want = TH.exact_C_constant(c, t)
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=0)


def test_C_matches_ode_oracle():
    s = S.power_schedule(0.75, 1.0)
    mu = 0.8
    t = np.array([1.0, 10.0, 100.0, 1000.0])
    f = lambda x, c: mu * s.eta(x) * (mu * s.eta(x) - c)
    sol = solve_ivp(f, (0, 1000), [0.0], t_eval=t, rtol=1e-11, atol=1e-14, method="DOP853")
    np.testing.assert_allclose(TH.C_of_t(s, t, mu), sol.y[0], rtol=1e-7)


def test_C_order_independent():
    s = S.power_schedule(0.5, 1.0)
    t = np.array([50.0, 5.0, 5000.0, 500.0])
    np.testing.assert_array_equal(TH.C_of_t(s, t, 1.0), TH.C_of_t(s, np.sort(t), 1.0)[[1, 0, 3, 2]])
    with pytest.raises(ValueError):
        TH.C_of_t(s, [-1.0], 1.0)


def test_C_two_over_t_ratio():
    s = S.classic_schedule(2.0, 2.0)
    t = 1e6
    ratio = TH.C_of_t(s, t, 1.0) / TH.n_of_t(s, t, 1.0)
    assert ratio == pytest.approx(2 * t / (t + 2), rel=1e-6)
    assert abs(ratio - 2) <= 0.1


@pytest.mark.parametrize("q", [0.5, 0.75, 1.0])
def test_single_crossover(q):
    s = S.power_schedule(q, 1.0)
    grid = np.geomspace(1, 1e6, 120)
    assert TH.crossover_count(s, grid, 1.0) == 1
    C = TH.C_of_t(s, grid, 1.0)
    n = TH.n_of_t(s, grid, 1.0)
    assert C[0] < n[0] and C[-1] > n[-1]
    after = C[C > n]
    assert np.all(np.diff(after[len(after) // 2:]) < 0)


def test_schedule_race():
    scheds = {f"q={q}": S.power_schedule(q, 1.0) for q in (1.0, 0.75, 0.5)}
    res = TH.schedule_race(scheds, [1e5], 1.0)
    assert res["winner"] == ["q=1.0"]
    assert res["C"]["q=1.0"][0] < res["C"]["q=0.5"][0]
    assert res["C"]["q=1.0"][0] < res["C"]["q=0.75"][0]
    solo = TH.schedule_race({"only": scheds["q=0.5"]}, [10.0, 1e3], 1.0)
    assert solo["winner"] == ["only", "only"]


def test_quadrature_failure_raises():
    class Wild:
        def eta(self, t):
            return 1.0 + math.sin(1e7 * t) / (abs(t - 0.5) + 1e-30) ** 0.99

        def cumulative(self, t):
            return None

    with pytest.raises(TH.QuadratureError):
        TH.C_of_t(Wild(), 1.0, 1.0)
