import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hogwild_lab import engine_hogwild as EH
from hogwild_lab import engine_seq as E
from hogwild_lab import harness as H
from hogwild_lab import schedules as S
from hogwild_lab.data import Dataset
from hogwild_lab.objectives import Objective

SCHED = S.constant_schedule(0.02)


# -- shared model -----------------------------------------------------------

def test_shared_model_primitives():
    m = EH.SharedModel(4)
    assert m.add(2, 1.5) == 0.0
    assert m.load(2) == 1.5
    m.store(0, -3.0)
    assert m.add_many([0, 2, 2], [1.0, 1.0, 0.25]) == 0
    np.testing.assert_array_equal(m.snapshot(), [-2.0, 0.0, 2.75, 0.0])
    with pytest.raises(IndexError):
        m.add_many([4], [1.0])
    c = EH.AtomicCounter(5)
    assert c.fetch_add(3) == 5 and c.load() == 8


def test_disjoint_partitions_exact():
    m = EH.SharedModel(64)
    rng = np.random.default_rng(0)
    idx, dl = [], []
    for p in range(8):
        idx.append(rng.integers(0, 8, 50_000) + 8 * p)
        dl.append(rng.standard_normal(50_000))
    EH.issue_updates(m, idx, dl)
    expected = np.zeros(64)
    for i, d in zip(idx, dl):
        for cell in np.unique(i):
            # one writer per cell: its own sequential order is the only order
            acc = 0.0
            for v in d[i == cell]:
                acc += v
            expected[cell] = acc
    np.testing.assert_array_equal(m.snapshot(), expected)


def test_overlapping_integer_deltas_exact():
    m = EH.SharedModel(16)
    rng = np.random.default_rng(1)
    idx = [rng.integers(0, 16, 40_000) for _ in range(6)]
    dl = [rng.integers(-1000, 1001, 40_000).astype(float) for _ in range(6)]
    EH.issue_updates(m, idx, dl)
    expected = np.zeros(16)
    for i, d in zip(idx, dl):
        np.add.at(expected, i, d)
    np.testing.assert_array_equal(m.snapshot(), expected)


# -- parallel engine --------------------------------------------------------

@pytest.mark.parametrize("D, v", [(1, None), (3, None), (1, 0.5)])
def test_parallel_single_worker_equals_sequential(logistic_fixture, D, v):
    a = EH.run_parallel(logistic_fixture, SCHED, 3000, D=D, v=v, P=1, seed=7, record_every=50)
    b = E.run(logistic_fixture, SCHED, 3000, D=D, v=v, seed=7, record_every=50)
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_array_equal(a.loss, b.loss)
    np.testing.assert_array_equal(a.t_prime, b.t_prime)
    np.testing.assert_array_equal(a.w_final, b.w_final)
    assert a.meta["metrics"] == "inconsistent-read"


def test_parallel_many_workers_close_to_single():
    obj, c = H.synthetic_problem("sparse_logistic", n=1000, dim=30, nnz=6)
    s = S.hogwild_schedule(c.mu, c.L, 1, 10)
    T = 20 * obj.n
    one = EH.run_parallel(obj, s, T, P=1, seed=3)
    four = EH.run_parallel(obj, s, T, P=4, seed=3)
    assert four.t[-1] == T
    assert abs(four.loss[-1] - one.loss[-1]) <= 0.1 * one.loss[-1]
    # each update writes |D_xi| coordinates when D = 1
    assert four.t_prime[-1] == T * 6


def test_parallel_divergence_flag():
    X = np.array([[1.0]])
    obj = Objective("least_squares", Dataset.from_dense(X, [1.0]), lam=0.0)
    with pytest.raises(E.DivergenceError):
        EH.run_parallel(obj, S.constant_schedule(5.0), 5000, P=2, record_every=100)


# -- delay simulator ----------------------------------------------------------

@pytest.mark.parametrize("policy", list(EH.MASK_POLICIES))
@pytest.mark.parametrize("D, v", [(1, None), (4, None), (1, 0.5)])
def test_tau0_equals_filtered(logistic_fixture, policy, D, v):
    a = EH.run_delay_sim(logistic_fixture, SCHED, 2000, D=D, v=v, tau=0, mask_policy=policy,
                         seed=3, record_every=1, keep_iterates=True)
    b = E.run(logistic_fixture, SCHED, 2000, D=D, v=v, seed=3, record_every=1, keep_iterates=True)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    np.testing.assert_array_equal(a.t_prime, b.t_prime)


def _reads_vs_iterates(obj, tau, policy, T=400, D=2):
    tr = EH.run_delay_sim(obj, SCHED, T, D=D, tau=tau, mask_policy=policy, seed=5,
                          record_every=1, keep_iterates=True, log_reads=True)
    return tr.meta["read_log"], tr.iterates


def test_all_in_reads_current_iterate(logistic_fixture):
    reads, its = _reads_vs_iterates(logistic_fixture, 5, "all_in")
    mask = ~np.isnan(reads)
    assert mask.any()
    np.testing.assert_array_equal(reads[mask], its[:-1][mask])


def test_none_in_reads_stale_iterate(logistic_fixture):
    tau = 5
    reads, its = _reads_vs_iterates(logistic_fixture, tau, "none_in")
    T = len(reads)
    stale = its[np.maximum(np.arange(T) - tau, 0)]
    mask = ~np.isnan(reads)
    np.testing.assert_array_equal(reads[mask], stale[mask])
    assert not np.array_equal(reads[mask], its[:-1][mask])


def test_bernoulli_extremes_match_exact_policies(logistic_fixture):
    run = lambda pol, p: EH.run_delay_sim(logistic_fixture, SCHED, 1500, D=2, tau=7,
                                          mask_policy=pol, mask_p=p, seed=2).w_final
    np.testing.assert_array_equal(run("bernoulli", 1.0), run("all_in", 0.5))
    np.testing.assert_array_equal(run("bernoulli", 0.0), run("none_in", 0.5))


def test_reads_lie_between_stale_and_current_per_update(logistic_fixture):
    # every read coordinate equals committed plus a subset of pending deltas
    reads, its = _reads_vs_iterates(logistic_fixture, 3, "per_coordinate_random", T=300)
    mask = ~np.isnan(reads)
    lo = np.minimum.reduce([its[np.maximum(np.arange(300) - k, 0)] for k in range(4)])
    hi = np.maximum.reduce([its[np.maximum(np.arange(300) - k, 0)] for k in range(4)])
    assert np.all(reads[mask] >= lo[mask] - 1e-12) and np.all(reads[mask] <= hi[mask] + 1e-12)


@given(st.integers(0, 12), st.sampled_from(list(EH.MASK_POLICIES)), st.integers(1, 4),
       st.integers(0, 50), st.integers(1, 300))
@settings(max_examples=40, deadline=None)
def test_shadow_consistency(tau, policy, D, seed, T):
    obj = _small()
    tr = EH.run_delay_sim(obj, SCHED, T, D=D, tau=tau, mask_policy=policy, seed=seed,
                          record_every=max(T // 3, 1))
    state = tr.meta["state"]
    assert state.pending <= tau
    np.testing.assert_array_equal(state.true_w(), state.shadow)
    assert [it for it, _, _ in state.pending_updates()] == list(range(T - state.pending, T))


_SMALL = {}


def _small():
    if "obj" not in _SMALL:
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 12)) * (rng.random((40, 12)) < 0.3)
        X[:, 0] += 1.0
        _SMALL["obj"] = Objective("logistic", Dataset.from_dense(X, np.sign(rng.standard_normal(40))))
    return _SMALL["obj"]


def test_delay_sim_determinism_and_seed_sensitivity(logistic_fixture):
    a = EH.run_delay_sim(logistic_fixture, SCHED, 1000, tau=10, seed=1)
    b = EH.run_delay_sim(logistic_fixture, SCHED, 1000, tau=10, seed=1)
    c = EH.run_delay_sim(logistic_fixture, SCHED, 1000, tau=10, seed=2)
    np.testing.assert_array_equal(a.loss, b.loss)
    assert not np.array_equal(a.loss, c.loss)


def test_k_offset_checked_against_tau(logistic_fixture):
    s = S.hogwild_as_schedule(1.0, 1, 1.0, 12, 4)
    EH.run_delay_sim(logistic_fixture, s, 10, tau=4)
    with pytest.raises(ValueError):
        EH.run_delay_sim(logistic_fixture, s, 10, tau=5)


def test_growing_tau_constant_matches_fixed(logistic_fixture):
    a = EH.run_delay_sim_growing_tau(logistic_fixture, SCHED, 1500,
                                     tau_fn=lambda t: np.full(np.shape(t), 6), D=2, seed=4)
    b = EH.run_delay_sim(logistic_fixture, SCHED, 1500, tau=6, D=2, seed=4)
    np.testing.assert_array_equal(a.loss, b.loss)
    np.testing.assert_array_equal(a.w_final, b.w_final)


def test_growing_tau_rejects_decreasing(logistic_fixture):
    with pytest.raises(ValueError):
        EH.run_delay_sim_growing_tau(logistic_fixture, SCHED, 50, tau_fn=lambda t: 50 - t)


def test_growing_tau_run():
    obj, c = H.synthetic_problem("sparse_logistic", n=2000, dim=30, nnz=6)
    s = S.growing_tau_schedule(c.mu, c.L)
    T = 10 ** 5
    tr = EH.run_delay_sim_growing_tau(obj, s, T, seed=0, w_star=c.w_star, record_every=1000)
    assert tr.meta["tau_max"] == S.sqrt_tL_tau(T)
    assert np.all(np.isfinite(tr.loss))
    assert tr.dist_sq[-1] < tr.dist_sq[0]
    assert tr.dist_sq[-1] < tr.dist_sq[len(tr) // 10]


def test_coordinate_update_count():
    rows = [[1, 1, 1, 0, 0], [1, 1, 1, 1, 1], [0, 1, 0, 0, 0]]
    obj = Objective("logistic", Dataset.from_dense(np.array(rows, float), [1, -1, 1]))
    for D in (1, 2, 5):
        tr = EH.run_delay_sim(obj, SCHED, 30_000, D=D, tau=2, seed=1, record_every=10_000)
        cnt = EH.coordinate_update_count(tr, obj, D)
        exact = np.mean([m / min(D, m) for m in (3, 5, 1)])
        np.testing.assert_allclose(cnt["expected"], cnt["t"] * exact)
        assert np.all(cnt["expected"] <= cnt["theorem"] + 1e-9)
        sd = np.sqrt(30_000) * 3.0
        assert abs(cnt["actual"][-1] - cnt["expected"][-1]) < 4 * sd
    tr = EH.run_delay_sim(obj, SCHED, 100, D=1, seed=0, record_every=100)
    assert EH.coordinate_update_count(tr, obj, 1)["theorem"][-1] == pytest.approx(100 * 3.0)
    tr = EH.run_delay_sim(obj, SCHED, 100, D=5, seed=0, record_every=100)
    assert tr.t_prime[-1] == 100


def test_bad_arguments(logistic_fixture):
    with pytest.raises(ValueError):
        EH.run_delay_sim(logistic_fixture, SCHED, 10, tau=-1)
    with pytest.raises(ValueError):
        EH.run_delay_sim(logistic_fixture, SCHED, 10, mask_policy="some")
    with pytest.raises(ValueError):
        EH.run_parallel(logistic_fixture, SCHED, 10, P=0)
