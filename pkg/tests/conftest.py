import numpy as np
import pytest

from lago.config import default_config
from lago.environment import ArrivalSpec, NodeProfile, TaskSpec, build_environment
from lago.model import SlotContext, SystemConstants, Task


def make_ctx(t, tasks, kappa, eta):
    """Hand-built slot: ``tasks`` is a list of (size_bits, work_cycles)."""
    return SlotContext(
        t=t,
        tasks=tuple(Task((t, i), float(L), float(W)) for i, (L, W) in enumerate(tasks)),
        accessible=tuple(sorted(kappa)),
        eta=dict(eta),
        kappa=dict(kappa),
    )


def small_profiles(n_fog, budget=0.5):
    profiles = [NodeProfile(0, 1e9, 1e10, 1e-10, 5e-10, budget)]
    for n in range(1, n_fog + 1):
        profiles.append(NodeProfile(
            n, freq_low=5e9 + 2e8 * n, freq_high=2e10, kappa_low=5e-9, kappa_high=1.5e-8, budget=budget,
            rate_low=5e6 + 1e6 * n, rate_high=1e8, eta_low=1e-7, eta_high=1e-6,
        ))
    return profiles


def small_constants(n_fog, a_max=10, l_max=4e5):
    return SystemConstants(n_fog=n_fog, a_max=a_max, l_max=l_max, w_max=1000 * l_max, r_min=5e6,
                           f_min=1e9, eta_max=1e-6, kappa_max=1.5e-8)


@pytest.fixture
def small_env():
    def factory(n_fog=4, n_a=2, count=3, seed=1, **kw):
        return build_environment(small_profiles(n_fog), small_constants(n_fog, a_max=max(count, 1)),
                                 ArrivalSpec("fixed", count), n_a, seed, TaskSpec(), **kw)
    return factory


@pytest.fixture
def reference_config():
    return default_config()


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = rep.longreprtext.strip().splitlines()[-1] if rep.longreprtext else "error"
    item.config.stash[ACCEPTANCE][number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
