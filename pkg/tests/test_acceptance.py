"""Acceptance criteria 1-8. A per-criterion PASS/FAIL summary is printed at the end of the run."""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from rssicount import _fallback, detect, lda, pipeline, synth
from rssicount.detect import DetectionEvent, DetectorConfig
from rssicount.trace import ReceiverStream, Trace, format_trace, parse_trace
from conftest import BACKENDS, make_corpus, separable_trace

crit = pytest.mark.criterion

REF_COEF = np.array(
    [
        [0.260, -0.837, -1.033, 0.999, 17.142, 3.964, 0.298, 0.306, 0.011, 0.002],
        [0.863, -1.044, -1.023, 1.046, 17.026, -6.788, 0.225, -0.203, 0.017, -0.003],
    ]
)
REF_CONST = np.array([-10.805, -2.414])
REF_CONFUSION = np.array(
    [[47, 3, 0, 0, 0], [3, 46, 1, 0, 0], [0, 3, 44, 2, 1], [0, 3, 7, 31, 9], [0, 0, 0, 14, 36]]
)


def normal_pdf(x, mu, sigma):
    return math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def f_pdf(x, d1, d2):
    logb = math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2)
    return math.exp(
        0.5 * d1 * math.log(d1) + 0.5 * d2 * math.log(d2) + (0.5 * d1 - 1) * math.log(x)
        - 0.5 * (d1 + d2) * math.log(d2 + d1 * x) - logb
    )


# -- 1 ------------------------------------------------------------------------

@crit(1)
@pytest.mark.parametrize("backend", BACKENDS)
def test_c1_prob_in_band(backend):
    assert backend.prob_in_band(np.array([0.2727]), np.array([4.6280]))[0] == pytest.approx(0.17078, abs=1e-3)
    assert detect.prob_in_band(0.2727, 4.6280) == pytest.approx(0.17078, abs=1e-3)


# -- 2 ------------------------------------------------------------------------

@crit(2)
@pytest.mark.parametrize("lam,f", [(0.256, 178.008), (0.485, 65.034), (0.773, 17.986)])
def test_c2_f_from_lambda(lam, f):
    assert lda.f_from_lambda(lam, 250, 5) == pytest.approx(f, abs=0.01)


# -- 3 ------------------------------------------------------------------------

@crit(3)
@pytest.mark.parametrize("ev,r", [(5.717, 0.923), (0.952, 0.698), (0.146, 0.357), (0.084, 0.279)])
def test_c3_canonical_correlation(ev, r):
    assert lda.canonical_correlation(ev) == pytest.approx(r, abs=5e-4)


@crit(3)
def test_c3_variance_percentages():
    pct = lda.variance_percentages([5.717, 0.952, 0.146, 0.084])
    np.testing.assert_allclose(pct, [82.9, 13.8, 2.1, 1.2], atol=0.1, rtol=0)


# -- 4 ------------------------------------------------------------------------

def _reference_model():
    nan = np.full(2, np.nan)
    return lda.LdaModel(REF_COEF, REF_CONST, np.zeros((3, 2)), nan, nan, nan, np.zeros((10, 2)), (1, 2, 3))


@crit(4)
def test_c4_zero_vector_scores():
    d = lda.score(_reference_model(), np.zeros(10))
    assert d[0] == -10.805 and d[1] == -2.414


@crit(4)
def test_c4_unit_probes():
    m = _reference_model()
    for j in range(10):
        e = np.zeros(10)
        e[j] = 1.0
        np.testing.assert_allclose(lda.score(m, e), REF_COEF[:, j] + REF_CONST, rtol=0, atol=1e-9)


# -- 5 ------------------------------------------------------------------------

@crit(5)
def test_c5a_reference_confusion_arithmetic():
    assert round(pipeline.group_accuracy(REF_CONFUSION), 3) == 0.816
    actual, predicted = pipeline.head_counts(REF_CONFUSION)
    assert round(pipeline.head_count_accuracy(predicted, actual), 3) == 0.979


@crit(5)
def test_c5b_synthetic_pipeline_accuracy():
    t0 = time.perf_counter()
    trace, truth = make_corpus(per_group=50, seed=7)
    assert len(truth) == 250
    data = pipeline.build_training_set(trace, truth)
    model = lda.fit(data)
    report = pipeline.run_count(trace, model, truth=truth)
    elapsed = time.perf_counter() - t0
    ev = report.evaluation
    print(f"group accuracy {ev.group_accuracy:.4f}, head-count accuracy {ev.head_count_accuracy:.4f}, {elapsed:.2f} s")
    assert ev.group_accuracy >= 0.90
    assert ev.head_count_accuracy >= 0.97
    assert elapsed < 30


# -- 6 ------------------------------------------------------------------------

@crit(6)
def test_c6_injected_event_list():
    trace, _ = separable_trace(seed=1, n_events=6)
    cfg = DetectorConfig()
    _, _, ev1 = detect.detect_stream(trace["R1"], cfg)
    _, _, ev2 = detect.detect_stream(trace["R2"], cfg)
    base = detect.fuse_receivers(ev1, ev2)
    assert len(base.pairs) == 6 and base.discarded == []
    # unmatched detection far from every R2 event, like the extra spike on one link
    last = max(e.end_seq for e in ev2)
    fake = DetectionEvent("R1", 10**6, 10**6 + 8, "std", None, last + 200, last + 208)
    injected = detect.fuse_receivers(sorted(ev1 + [fake], key=lambda e: e.start_seq), ev2)
    assert injected.pairs == base.pairs
    assert injected.discarded == [fake]


@crit(6)
def test_c6_injected_trace_burst():
    trace, truth = separable_trace(seed=1, n_events=4)
    r1 = trace["R1"]
    rssi = r1.rssi_dbm.copy()
    quiet_start = truth[-1].extent[1] + 30
    burst = np.random.default_rng(0).integers(-8, 9, size=25)
    rssi[quiet_start : quiet_start + 25] = np.clip(rssi[quiet_start] + burst, -127, 0)
    noisy = Trace({"R1": ReceiverStream("R1", r1.seq, r1.timestamp_ms, rssi), "R2": trace["R2"]})
    clean = pipeline.detect_pairs(trace)
    dirty = pipeline.detect_pairs(noisy)
    assert dirty.pairs == clean.pairs
    assert len(clean.discarded) == 0 and len(dirty.discarded) == 1


# -- 7 ------------------------------------------------------------------------

@crit(7)
def test_c7_oracle_equivalences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)

    for _ in range(5):
        p = 6
        A = rng.normal(size=(p, p))
        X = np.vstack([rng.normal(size=(40, p)) @ A, rng.normal(size=(30, p)) @ A + rng.normal(size=p)])
        y = np.r_[np.ones(40, int), np.full(30, 2)]
        m = lda.fit(X, y)
        sw = sum((X[y == k] - X[y == k].mean(0)).T @ (X[y == k] - X[y == k].mean(0)) for k in (1, 2))
        ref = np.linalg.solve(sw, X[y == 1].mean(0) - X[y == 2].mean(0))
        v = m.coefficients[0]
        assert abs(v @ ref) / (np.linalg.norm(v) * np.linalg.norm(ref)) > 1 - 1e-9

    X = np.vstack([rng.normal(loc=3 * k, size=(30, 4)) for k in range(5)])
    y = np.repeat([1, 2, 3, 4, 5], 30)
    m = lda.fit(X, y)
    probe = rng.normal(scale=6, size=(500, 4)) + 6
    D = probe @ m.coefficients.T + m.constants
    for x, d, got in zip(probe, D, lda.classify_many(m, probe)):
        dist = [sum((a - b) ** 2 for a, b in zip(c, d)) for c in m.centroids]
        assert got == m.group_labels[dist.index(min(dist))]
        assert lda.classify(m, x) == got

    for mu, sigma in [(0.2727, 4.628), (0.3, 0.6325), (1.5, 0.2), (0.0, 1.0), (-2.0, 3.0), (5.0, 0.7)]:
        oracle = quad(normal_pdf, -1, 1, args=(mu, sigma), epsabs=1e-13)[0]
        for backend in BACKENDS:
            assert backend.values[0].prob_in_band(np.array([mu]), np.array([sigma]))[0] == pytest.approx(oracle, abs=1e-6)

    for f, d1, d2 in [(2.5, 4, 245), (178.008, 4, 245), (17.986, 4, 245), (0.3, 2, 20), (1.0, 1, 10)]:
        oracle = quad(f_pdf, f, math.inf, args=(d1, d2), epsabs=1e-14, limit=200)[0]
        assert lda.f_sf(f, d1, d2) == pytest.approx(oracle, abs=1e-6)

    values = rng.integers(-12, 13, size=3000).astype(float)
    for backend in BACKENDS:
        k = backend.values[0]
        for n in (2, 10, 37):
            mean, std = k.window_stats(values, n)
            assert len(mean) == len(values) - n + 1
            for j in range(len(mean)):
                w = values[j : j + n]
                assert mean[j] == pytest.approx(w.mean(), abs=1e-9)
                assert std[j] == pytest.approx(w.std(ddof=1), abs=1e-9)

    assert time.perf_counter() - t0 < 10


# -- 8 ------------------------------------------------------------------------

@crit(8)
def test_c8_invariance_suite(tmp_path):
    t0 = time.perf_counter()
    trace, truth = separable_trace(seed=1)

    for method in ("prob", "std"):
        cfg = DetectorConfig(method=method)
        base = {rid: detect.detect_stream(trace[rid], cfg) for rid in trace.receiver_ids}
        for offset in (-30, -5, 12):
            shifted = trace.with_offset(offset)
            for rid in trace.receiver_ids:
                s, d, e = detect.detect_stream(shifted[rid], cfg)
                s0, d0, e0 = base[rid]
                assert np.array_equal(d, d0) and e == e0

    a = make_corpus(per_group=4, seed=9)
    b = make_corpus(per_group=4, seed=9)
    assert a[0].streams == b[0].streams and a[1] == b[1]
    assert pipeline.detect_pairs(a[0]).pairs == pipeline.detect_pairs(b[0]).pairs

    text = format_trace(trace)
    again = parse_trace(text)
    assert again.streams == trace.streams and again.inter_packet_interval_ms == trace.inter_packet_interval_ms
    assert format_trace(again) == text

    res = detect.window_sweep(trace, truth, [2, 4, 6, 10, 15, 20])
    rates = res.error_rates()
    assert rates[10] == 0.0
    assert rates[2] > rates[10]

    assert time.perf_counter() - t0 < 10
