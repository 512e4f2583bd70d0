import math

import numpy as np
import pytest

from conftest import make_ctx, small_constants, small_profiles
from oracles import PHI_5E9_15E9, RHO_1E7_1E8
from lago.environment import (
    ArrivalSpec,
    MetaDistributions,
    NodeProfile,
    TaskSpec,
    build_environment,
    draw_profiles,
    reciprocal_uniform_mean,
)
from lago.model import ConfigError, Decision


def test_reciprocal_mean_closed_form():
    assert reciprocal_uniform_mean(1e7, 1e8) == pytest.approx(RHO_1E7_1E8, rel=1e-9)
    assert reciprocal_uniform_mean(5e9, 1.5e10) == pytest.approx(PHI_5E9_15E9, rel=1e-9)
    assert reciprocal_uniform_mean(3e9, 3e9) == 1 / 3e9


def test_reciprocal_mean_matches_monte_carlo():
    rng = np.random.default_rng(2024)
    for a, b in ((1e7, 1e8), (5e9, 1.5e10)):
        mc = np.mean(1.0 / rng.uniform(a, b, 1_000_000))
        assert mc == pytest.approx(reciprocal_uniform_mean(a, b), rel=5e-3)


def test_reference_env_same_seed_same_first_slot(reference_config):
    a = reference_config.replace(seed=42).build_environment()
    b = reference_config.replace(seed=42).build_environment()
    sa, sb = a.next_slot(0), b.next_slot(0)
    assert sa.accessible == sb.accessible
    assert np.array_equal(sa.sizes, sb.sizes)
    assert sa.kappa == sb.kappa and sa.eta == sb.eta


def test_n_a_above_n_fog_rejected():
    with pytest.raises(ConfigError, match="n_a"):
        build_environment(small_profiles(20), small_constants(20), ArrivalSpec(), 25, 0)


def test_slot_shape_reference_defaults(reference_config):
    env = reference_config.build_environment()
    for t in range(20):
        ctx = env.next_slot(t)
        assert len(ctx.tasks) == 10
        assert len(ctx.accessible) == 11 and ctx.accessible[0] == 0
        assert set(ctx.eta) == set(ctx.accessible) - {0}
        ctx.check_bounds(reference_config.constants)
        assert np.all(ctx.works == 1000 * ctx.sizes)


def test_out_of_order_slot_rejected(small_env):
    env = small_env()
    for t in range(6):
        env.next_slot(t)
    with pytest.raises(ConfigError, match="in order"):
        env.next_slot(5)


def test_realize_hand_example(small_env):
    env = small_env()
    ctx = make_ctx(0, [(1e6, 1e9)], {0: 2e-10, 1: 1e-8}, {1: 1e-7})
    env.rate_low[1] = env.rate_high[1] = 1e7
    env.freq_low[1] = env.freq_high[1] = 1e10
    fb = env.realize(ctx, Decision(np.array([1])))
    assert fb.d_tr[0] == pytest.approx(0.1, rel=1e-12)
    assert fb.d_pr[0] == pytest.approx(0.1, rel=1e-12)
    assert fb.latency[0] == pytest.approx(0.2, rel=1e-12)
    fb0 = env.realize(ctx, Decision(np.array([0])))
    assert fb0.d_tr[0] == 0.0 and math.isnan(fb0.rate[0])


def test_realize_rejects_inaccessible(small_env):
    env = small_env()
    ctx = env.next_slot(0)
    missing = next(n for n in range(1, 5) if n not in ctx.accessible)
    with pytest.raises(ConfigError):
        env.realize(ctx, Decision(np.full(len(ctx.tasks), missing)))


def test_feedback_streams_bit_identical(small_env):
    def stream(env):
        out = []
        for t in range(50):
            ctx = env.next_slot(t)
            nodes = np.array([ctx.accessible[i % len(ctx.accessible)] for i in range(len(ctx.tasks))])
            fb = env.realize(ctx, Decision(nodes))
            out.append((fb.d_tr.tobytes(), fb.d_pr.tobytes(), ctx.sizes.tobytes()))
        return out

    assert stream(small_env(seed=9)) == stream(small_env(seed=9))
    assert stream(small_env(seed=9)) != stream(small_env(seed=10))


def test_true_means(small_env):
    env = small_env()
    means = env.true_means()
    assert 0 not in means.rho
    assert set(means.phi) == set(range(5))
    c = env.constants
    for n, p in enumerate(env.profiles):
        assert 0 < means.phi[n] <= c.phi_max
        if n:
            assert means.rho[n] == reciprocal_uniform_mean(p.rate_low, p.rate_high)
            assert 0 < means.rho[n] <= c.rho_max


def test_support_containment(reference_config):
    env = reference_config.build_environment()
    c = reference_config.constants
    for t in range(300):
        ctx = env.next_slot(t)
        nodes = np.array([ctx.accessible[i % len(ctx.accessible)] for i in range(len(ctx.tasks))])
        fb = env.realize(ctx, Decision(nodes))
        off = nodes > 0
        assert np.all(fb.rate[off] >= env.rate_low[nodes[off]]) and np.all(fb.rate[off] <= env.rate_high[nodes[off]])
        assert np.all(fb.freq >= env.freq_low[nodes]) and np.all(fb.freq <= env.freq_high[nodes])
        assert np.all(1 / fb.rate[off] <= c.rho_max) and np.all(1 / fb.freq <= c.phi_max)


def test_subset_uniformity(reference_config):
    env = reference_config.build_environment()
    slots = 10_000
    hits = np.zeros(21)
    for t in range(slots):
        hits[list(env.next_slot(t).accessible)] += 1
    p = 10 / 20
    se = math.sqrt(p * (1 - p) / slots)
    assert hits[0] == slots
    assert np.all(np.abs(hits[1:] / slots - p) <= 3 * se)


def test_empirical_reciprocal_mean_per_node(small_env):
    env = small_env(n_fog=2, n_a=2, count=10)
    rng = env._rngs["rates"]
    draws = rng.uniform(env.rate_low[1], env.rate_high[1], 1_000_000)
    assert np.mean(1 / draws) == pytest.approx(env.true_means().rho[1], rel=5e-3)


def test_profile_invariants():
    with pytest.raises(ConfigError, match="rate"):
        NodeProfile(1, 5e9, 1e10, 5e-9, 1.5e-8, 0.5, rate_low=2e7, rate_high=1e7, eta_low=1e-7, eta_high=1e-6)
    with pytest.raises(ConfigError, match="budget"):
        NodeProfile(0, 1e9, 1e10, 1e-10, 5e-10, 0.0)
    p = NodeProfile(1, 5e8, 1e10, 5e-9, 1.5e-8, 0.5, rate_low=1e7, rate_high=1e8, eta_low=1e-7, eta_high=1e-6)
    with pytest.raises(ConfigError, match="f_min"):
        p.check_bounds(small_constants(1))


def test_profiles_drawn_from_meta_ranges():
    meta = MetaDistributions()
    profiles = draw_profiles(meta, 20, seed=3)
    assert profiles == draw_profiles(meta, 20, seed=3)
    for p in profiles[1:]:
        assert meta.rate_low[0] <= p.rate_low <= meta.rate_low[1]
        assert meta.rate_high[0] <= p.rate_high <= meta.rate_high[1]
        assert meta.freq_low[0] <= p.freq_low <= meta.freq_low[1]
        assert meta.freq_high[0] <= p.freq_high <= meta.freq_high[1]
    assert (profiles[0].freq_low, profiles[0].freq_high) == (1e9, 1e10)


def test_poisson_arrivals_capped(small_env):
    env = build_environment(small_profiles(4), small_constants(4, a_max=5), ArrivalSpec("poisson", rate=4.0, cap=5), 2, 0)
    counts = [len(env.next_slot(t).tasks) for t in range(500)]
    assert max(counts) <= 5 and min(counts) >= 0
    assert 3.0 < np.mean(counts) < 4.5


def test_task_sizes_within_bounds():
    sampler = TaskSpec("loguniform", 1e4, 4e5)
    sizes = sampler.draw(np.random.default_rng(0), 100_000)
    assert sizes.min() >= 1e4 and sizes.max() <= 4e5


def test_per_node_coefficients_fixed(small_env):
    env = small_env(n_fog=4, n_a=4, coefficient_mode="per_node")
    a, b = env.next_slot(0), env.next_slot(1)
    assert a.kappa == b.kappa and a.eta == b.eta
    env2 = small_env(n_fog=4, n_a=4)
    c, d = env2.next_slot(0), env2.next_slot(1)
    assert c.kappa != d.kappa
