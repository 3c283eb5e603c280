import dataclasses

import numpy as np
import pytest

from rssicount import _fallback, synth

try:
    from rssicount import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_fallback, id="python")]
if _kernels is not None:
    BACKENDS.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def make_corpus(per_group=50, seed=11, **overrides):
    """Balanced labeled corpus, group order shuffled, one crossing after another."""
    params = dict(
        quiet_sigma=0.5, active_sigma_base=4.0, sigma_per_person=1.0, duration_per_person=8, rng_seed=seed
    )
    params.update(overrides)
    cfg = synth.SynthConfig(**params)
    rng = np.random.default_rng(seed)
    sizes = rng.permutation(np.repeat([1, 2, 3, 4, 5], per_group)).tolist()
    events, n = synth.layout_events(cfg, sizes)
    cfg = dataclasses.replace(cfg, n_samples=n)
    return synth.generate(cfg, events)


def separable_trace(seed=1, n_events=8):
    cfg = synth.SynthConfig(quiet_sigma=0.3, active_sigma_base=5.0, sigma_per_person=0.0, duration_per_person=0,
                            duration_base=40, rng_seed=seed)
    events, n = synth.layout_events(cfg, [1] * n_events, gap=80)
    cfg = dataclasses.replace(cfg, n_samples=n)
    return synth.generate(cfg, events)


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


# -- acceptance reporting ------------------------------------------------------

CRITERIA = {
    1: "band probability fidelity",
    2: "F from Wilks lambda",
    3: "canonical correlation and variance share",
    4: "discriminant score fidelity",
    5: "confusion arithmetic and synthetic pipeline accuracy",
    6: "fusion discards one injected detection",
    7: "oracle equivalences",
    8: "invariance suite",
}
_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    k = mark.args[0]
    if rep.when == "call" or rep.failed:
        _outcomes.setdefault(k, []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        results = _outcomes.get(k)
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status:7s} {CRITERIA[k]}")
