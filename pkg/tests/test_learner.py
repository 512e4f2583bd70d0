import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_ctx
from oracles import PHI_HAT_50_PLAYS, RADIUS_2_PLAYS
from lago.learner import LearnerState, Strategy, log_slot, tuned_radius, ucb1_radius
from lago.model import Decision, Feedback, SystemConstants

UNIT = SystemConstants(n_fog=1, a_max=1, l_max=1.0, w_max=1.0, r_min=1.0, f_min=1.0, eta_max=1.0, kappa_max=1.0)



def learner_with(mean_phi, counts, strategy=Strategy.UCB1):
    s = LearnerState(2, strategy=strategy)
    s.mean_phi[1] = mean_phi
    s.counts[1] = counts
    return s


def test_zero_radius_at_first_slot():
    assert learner_with(0.4, 5).snapshot_estimates(1, UNIT).phi_hat[1] == 0.4
    assert learner_with(0.4, 5).snapshot_estimates(0, UNIT).phi_hat[1] == 0.4


def test_ucb1_estimate_hand_value():
    est = learner_with(0.5, 50).snapshot_estimates(100, UNIT)
    assert est.phi_hat[1] == pytest.approx(PHI_HAT_50_PLAYS, rel=1e-9)


def test_ucb1_estimate_clamped():
    assert ucb1_radius(1.0, 100, np.array([2]))[0] == pytest.approx(RADIUS_2_PLAYS, rel=1e-9)
    assert learner_with(0.1, 2).snapshot_estimates(100, UNIT).phi_hat[1] == 0.0


def test_unvisited_nodes_keep_zero_estimate():
    s = LearnerState(4)
    s.mean_phi[:] = [0.3, 0.0, 0.2, 0.0]
    s.counts[:] = [10, 0, 10, 0]
    est = s.snapshot_estimates(1000, UNIT)
    assert est.phi_hat[1] == 0.0 and est.phi_hat[3] == 0.0


def test_log_clamp():
    assert log_slot(0) == 0.0 and log_slot(1) == 0.0
    assert log_slot(100) == math.log(100)


def one_task_slot(t, node, inv_f, inv_r=None):
    kappa = {0: 2e-10} if node == 0 else {0: 2e-10, node: 1e-8}
    eta = {} if node == 0 else {node: 1e-7}
    ctx = make_ctx(t, [(1.0, 1.0)], kappa, eta)
    d_tr = 0.0 if node == 0 else inv_r
    rate = np.nan if node == 0 else 1 / inv_r
    return ctx, Decision(np.array([node])), Feedback(np.array([rate]), np.array([1 / inv_f]),
                                                     np.array([d_tr]), np.array([inv_f]))


def test_record_recurrence_hand_value():
    s = learner_with(0.5, 4)
    s.record(*one_task_slot(7, 1, 0.7, 0.2))
    assert s.counts[1] == 5
    assert s.mean_phi[1] == pytest.approx(0.54, rel=1e-9)


def test_record_leaves_unplayed_nodes():
    s = LearnerState(3)
    s.mean_phi[:] = [0.1, 0.2, 0.3]
    s.mean_rho[:] = [0.0, 0.4, 0.5]
    s.counts[:] = [1, 2, 3]
    s.record(*one_task_slot(0, 0, 0.9))
    assert s.counts.tolist() == [2, 2, 3]
    assert s.mean_phi[1:].tolist() == [0.2, 0.3]
    assert s.mean_rho.tolist() == [0.0, 0.4, 0.5]


def test_recurrence_matches_batch_average():
    rng = np.random.default_rng(5)
    s = LearnerState(2)
    obs_f, obs_r = [], []
    for t in range(100_000):
        f, r = rng.uniform(0.1, 1.0, 2)
        s.record(*one_task_slot(t, 1, f, r))
        obs_f.append(f)
        obs_r.append(r)
    assert s.counts[1] == 100_000
    assert s.mean_phi[1] == pytest.approx(math.fsum(obs_f) / len(obs_f), rel=1e-9)
    assert s.mean_rho[1] == pytest.approx(math.fsum(obs_r) / len(obs_r), rel=1e-9)


def test_multi_task_slot_update():
    ctx = make_ctx(3, [(2.0, 4.0), (1.0, 1.0), (3.0, 3.0)], {0: 1e-10, 2: 1e-8}, {2: 1e-7})
    fb = Feedback(np.array([np.nan, 2.0, 4.0]), np.array([8.0, 2.0, 6.0]),
                  np.array([0.0, 0.5, 0.75]), np.array([0.5, 0.5, 0.5]))
    s = LearnerState(3)
    s.record(ctx, Decision(np.array([0, 2, 2])), fb)
    assert s.counts.tolist() == [1, 0, 2]
    assert s.mean_phi[0] == pytest.approx(1 / 8)
    assert s.mean_phi[2] == pytest.approx((1 / 2 + 1 / 6) / 2)
    assert s.mean_rho[2] == pytest.approx((1 / 2 + 1 / 4) / 2)


@given(mean=st.floats(0.0, 1.0), t=st.integers(2, 10**6), h=st.integers(1, 10**5))
def test_estimate_ordering(mean, t, h):
    lo = learner_with(mean, h).snapshot_estimates(t, UNIT).phi_hat[1]
    hi = learner_with(mean, h + 1).snapshot_estimates(t, UNIT).phi_hat[1]
    assert 0.0 <= lo <= hi <= mean


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6), st.integers(0, 1000))
def test_nconfr_returns_means(means, t):
    s = LearnerState(len(means), strategy=Strategy.NCONFR)
    s.mean_phi[:] = means
    s.mean_rho[1:] = means[1:]
    s.counts[:] = 3
    est = s.snapshot_estimates(t, UNIT)
    assert np.array_equal(est.phi_hat, s.mean_phi) and np.array_equal(est.rho_hat, s.mean_rho)


def test_tuned_radius_hand_evaluation():
    obs = [0.2, 0.4, 0.9]
    h, t = len(obs), 50
    mean = sum(obs) / h
    var = sum(o * o for o in obs) / h - mean * mean
    v = var + math.sqrt(2 * math.log(t) / h)
    expected = math.sqrt(math.log(t) / h * min(0.25, v))
    got = tuned_radius(1.0, t, np.array([h]), np.array([mean]), np.array([sum(o * o for o in obs)]))[0]
    assert got == pytest.approx(expected, rel=1e-9)
    # scale-equivariant: observations in s/cycle normalized by phi_max
    scaled = tuned_radius(1e-9, t, np.array([h]), np.array([mean * 1e-9]), np.array([sum(o * o for o in obs) * 1e-18]))[0]
    assert scaled == pytest.approx(expected * 1e-9, rel=1e-9)


def test_ucbt_learner_tracks_squares():
    s = LearnerState(2, strategy=Strategy.UCBT)
    for t, f in enumerate((0.2, 0.4, 0.9)):
        s.record(*one_task_slot(t, 1, f, 0.1))
    assert s.sq_phi[1] == pytest.approx(0.2**2 + 0.4**2 + 0.9**2)
    est = s.snapshot_estimates(50, UNIT)
    assert 0.0 <= est.phi_hat[1] <= s.mean_phi[1]


def test_consistency_round_robin(small_env):
    env = small_env(n_fog=3, n_a=3, count=4, seed=11)
    s = LearnerState(env.n_nodes)
    for t in range(100_000):
        ctx = env.next_slot(t)
        nodes = np.array([(4 * t + i) % 4 for i in range(4)])
        s.record(ctx, Decision(nodes), env.realize(ctx, Decision(nodes)))
    phi = env.true_means().phi
    c = env.constants
    for n in range(4):
        assert abs(s.mean_phi[n] - phi[n]) < 3 * c.phi_max / math.sqrt(s.counts[n])
    assert s.counts.sum() == 400_000


def test_state_round_trip():
    s = learner_with(0.3, 7, Strategy.UCBT)
    r = LearnerState.from_state_dict(s.state_dict())
    assert r.strategy is Strategy.UCBT and np.array_equal(r.mean_phi, s.mean_phi) and np.array_equal(r.counts, s.counts)


def test_strategy_parse():
    assert Strategy.parse("eps") is Strategy.EPS_GREEDY
    assert Strategy.parse("UCB1") is Strategy.UCB1
    with pytest.raises(ValueError):
        Strategy.parse("thompson")
