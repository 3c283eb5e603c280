"""End-to-end counting: trace -> detections -> fusion -> features -> group sizes."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lda
from .detect import DetectionEvent, DetectorConfig, detect_stream, fuse_receivers
from .errors import ConfigError
from .features import EventFeatureVector, extract
from .synth import TruthEvent
from .trace import Trace

GROUPS = (1, 2, 3, 4, 5)


@dataclass
class Evaluation:
    """Confusion matrix indexed by group size; size 0 means "no event".

    Row 0 holds detections with no true crossing, column 0 holds true
    crossings that were missed, so both count toward the total.
    """

    confusion: np.ndarray
    sizes: tuple = (0,) + GROUPS

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def group_accuracy(self) -> float:
        return group_accuracy(self.confusion)

    @property
    def actual_head_count(self) -> int:
        return int(np.dot(self.confusion.sum(axis=1), self.sizes))

    @property
    def predicted_head_count(self) -> int:
        return int(np.dot(self.confusion.sum(axis=0), self.sizes))

    @property
    def head_count_accuracy(self) -> float:
        return head_count_accuracy(self.predicted_head_count, self.actual_head_count)


def group_accuracy(confusion) -> float:
    """Fraction of events on the diagonal, excluding the empty (0, 0) cell."""
    cm = np.asarray(confusion)
    total = cm.sum()
    if total == 0:
        return 1.0
    diag = np.trace(cm)
    if cm.shape[0] == len(GROUPS) + 1:
        diag -= cm[0, 0]
    return float(diag / total)


def head_count_accuracy(predicted: int, actual: int) -> float:
    if predicted == actual:
        return 1.0
    return min(predicted, actual) / max(predicted, actual)


def head_counts(confusion, sizes: Sequence[int] = GROUPS) -> tuple[int, int]:
    """(actual, predicted) head counts from a rows=actual, cols=predicted matrix."""
    cm = np.asarray(confusion)
    sizes = np.asarray(sizes)
    return int(cm.sum(axis=1) @ sizes), int(cm.sum(axis=0) @ sizes)


def _overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)


def match_by_overlap(
    detected: Sequence[tuple[int, int]], truth: Sequence[tuple[int, int]]
) -> list[tuple[int | None, int | None]]:
    """Pair detected spans with true spans, largest overlap first.

    Returns (detected_index, truth_index) tuples; ``None`` on one side
    marks a spurious detection or a missed crossing.
    """
    cands = []
    for i, d in enumerate(detected):
        for j, t in enumerate(truth):
            ov = _overlap(d, t)
            if ov > 0:
                cands.append((-ov, i, j))
    cands.sort()
    used_d, used_t, out = set(), set(), []
    for _, i, j in cands:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        out.append((i, j))
    out += [(i, None) for i in range(len(detected)) if i not in used_d]
    out += [(None, j) for j in range(len(truth)) if j not in used_t]
    return out


def _pair_span(pair: tuple[DetectionEvent, DetectionEvent]) -> tuple[int, int]:
    a, b = pair
    if a.start_seq is not None and b.start_seq is not None:
        return min(a.start_seq, b.start_seq), max(a.end_seq, b.end_seq)
    return min(a.start_index, b.start_index), max(a.end_index, b.end_index)


def evaluate(
    predictions: Sequence[tuple[tuple[int, int], int]], truth: Sequence[TruthEvent], groups: Sequence[int] = GROUPS
) -> Evaluation:
    """Score predicted (span, size) events against ground truth matched by temporal overlap."""
    g = max(groups)
    cm = np.zeros((g + 1, g + 1), dtype=np.int64)
    matches = match_by_overlap([span for span, _ in predictions], [t.extent for t in truth])
    for i, j in matches:
        actual = truth[j].group_size if j is not None else 0
        pred = predictions[i][1] if i is not None else 0
        cm[actual, pred] += 1
    return Evaluation(cm, tuple(range(g + 1)))


@dataclass
class CountedEvent:
    start_seq: int
    end_seq: int
    start_ms: int
    end_ms: int
    predicted: int
    scores: tuple = ()


@dataclass
class CountReport:
    receivers: tuple[str, str]
    events: list[CountedEvent] = field(default_factory=list)
    discarded: int = 0
    evaluation: Evaluation | None = None
    period_ms: int | None = None

    @property
    def predicted_head_count(self) -> int:
        return sum(e.predicted for e in self.events)

    @property
    def group_accuracy(self) -> float | None:
        return None if self.evaluation is None else self.evaluation.group_accuracy

    @property
    def head_count_accuracy(self) -> float | None:
        return None if self.evaluation is None else self.evaluation.head_count_accuracy

    def period_counts(self, period_ms: int | None = None) -> dict[int, int]:
        """Head count per analysis period, keyed by period number."""
        period_ms = period_ms or self.period_ms
        if not period_ms:
            return {0: self.predicted_head_count}
        out: dict[int, int] = {}
        for e in self.events:
            k = e.start_ms // period_ms
            out[k] = out.get(k, 0) + e.predicted
        return out

    def summary(self) -> dict:
        d = {
            "type": "summary",
            "receivers": list(self.receivers),
            "events": len(self.events),
            "predicted_head_count": self.predicted_head_count,
            "discarded_false_positives": self.discarded,
        }
        if self.evaluation is not None:
            ev = self.evaluation
            d.update(
                actual_head_count=ev.actual_head_count,
                group_accuracy=ev.group_accuracy,
                head_count_accuracy=ev.head_count_accuracy,
                confusion_matrix=ev.confusion.tolist(),
            )
        if self.period_ms:
            d["period_ms"] = self.period_ms
            d["period_head_counts"] = {str(k): v for k, v in sorted(self.period_counts().items())}
        return d

    def to_jsonl(self) -> str:
        lines = []
        for k, e in enumerate(self.events):
            lines.append(
                json.dumps(
                    {
                        "type": "event",
                        "event": k,
                        "start_seq": e.start_seq,
                        "end_seq": e.end_seq,
                        "start_ms": e.start_ms,
                        "end_ms": e.end_ms,
                        "predicted_group_size": e.predicted,
                    },
                    sort_keys=True,
                )
            )
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("event", "start_seq", "end_seq", "start_ms", "end_ms", "predicted_group_size"))
        for k, e in enumerate(self.events):
            w.writerow((k, e.start_seq, e.end_seq, e.start_ms, e.end_ms, e.predicted))
        return buf.getvalue()

    def to_text(self) -> str:
        r1, r2 = self.receivers
        lines = [f"Receivers {r1}-{r2}: {len(self.events)} crossings, {self.discarded} unconfirmed detections discarded"]
        for k, e in enumerate(self.events):
            lines.append(
                f"  #{k:<3} seq {e.start_seq}-{e.end_seq}  t {e.start_ms / 1000:.2f}-{e.end_ms / 1000:.2f} s  size {e.predicted}"
            )
        lines.append(f"Predicted head count: {self.predicted_head_count}")
        if self.period_ms:
            for k, v in sorted(self.period_counts().items()):
                lines.append(f"  period {k}: {v}")
        if self.evaluation is not None:
            ev = self.evaluation
            lines.append(f"Actual head count: {ev.actual_head_count}")
            lines.append(f"Group accuracy: {ev.group_accuracy:.4f}")
            lines.append(f"Head-count accuracy: {ev.head_count_accuracy:.4f}")
            lines.append("Confusion matrix (rows actual, cols predicted, 0 = none):")
            for size, row in zip(ev.sizes, ev.confusion):
                lines.append(f"  {size}: " + " ".join(f"{v:4d}" for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class PairDetections:
    receivers: tuple[str, str]
    pairs: list[tuple[DetectionEvent, DetectionEvent]]
    discarded: list[DetectionEvent]


def _default_pair(trace: Trace) -> tuple[str, str]:
    ids = trace.receiver_ids
    if len(ids) < 2:
        raise ConfigError("counting needs at least two receivers")
    return ids[0], ids[1]


def detect_pairs(trace: Trace, config: DetectorConfig = DetectorConfig(), receivers=None) -> PairDetections:
    receivers = tuple(receivers) if receivers else _default_pair(trace)
    for rid in receivers:
        if rid not in trace.streams:
            raise ConfigError(f"receiver {rid!r} not in trace (have {trace.receiver_ids})")
    _, _, ev1 = detect_stream(trace[receivers[0]], config)
    _, _, ev2 = detect_stream(trace[receivers[1]], config)
    fused = fuse_receivers(ev1, ev2, config.pairing_window)
    return PairDetections(receivers, fused.pairs, fused.discarded)


def _timestamp(trace: Trace, rid: str, seq: int) -> int:
    s = trace[rid]
    k = min(int(np.searchsorted(s.seq, seq)), len(s) - 1)
    return int(s.timestamp_ms[k])


def label_pairs(pairs, truth: Sequence[TruthEvent]) -> list[int | None]:
    """Ground-truth group size for each pair, None when it matches no crossing."""
    labels: list[int | None] = [None] * len(pairs)
    for i, j in match_by_overlap([_pair_span(p) for p in pairs], [t.extent for t in truth]):
        if i is not None and j is not None:
            labels[i] = truth[j].group_size
    return labels


def build_training_set(
    trace: Trace, truth: Sequence[TruthEvent], config: DetectorConfig = DetectorConfig(), receivers=None
) -> list[EventFeatureVector]:
    det = detect_pairs(trace, config, receivers)
    labels = label_pairs(det.pairs, truth)
    return [extract(p, lab) for p, lab in zip(det.pairs, labels) if lab is not None]


def count_pairs(
    trace: Trace,
    det: PairDetections,
    model: lda.LdaModel,
    truth: Sequence[TruthEvent] | None = None,
    period_ms: int | None = None,
) -> CountReport:
    feats = [extract(p) for p in det.pairs]
    if feats:
        X = np.array([f.as_array() for f in feats])
        preds = lda.classify_many(model, X)
        scores = lda.score(model, X).reshape(len(feats), model.n_functions)
    else:
        preds, scores = [], []
    r1 = det.receivers[0]
    events = []
    for pair, pred, sc in zip(det.pairs, preds, scores):
        s, e = _pair_span(pair)
        events.append(CountedEvent(s, e, _timestamp(trace, r1, s), _timestamp(trace, r1, e), int(pred), tuple(map(float, sc))))
    events.sort(key=lambda ev: (ev.start_seq, ev.end_seq))
    report = CountReport(det.receivers, events, len(det.discarded), period_ms=period_ms)
    if truth is not None:
        report.evaluation = evaluate([((e.start_seq, e.end_seq), e.predicted) for e in events], truth)
    return report


def run_count(
    trace: Trace,
    model: lda.LdaModel,
    config: DetectorConfig = DetectorConfig(),
    receivers=None,
    truth: Sequence[TruthEvent] | None = None,
    period_ms: int | None = None,
) -> CountReport:
    """Detect, fuse, featurize and classify crossings on one receiver pair."""
    if model.p != 10:
        raise lda.DimensionError(f"model expects {model.p} features, pipeline produces 10")
    det = detect_pairs(trace, config, receivers)
    return count_pairs(trace, det, model, truth, period_ms)


@dataclass
class ZoneReport:
    pair_reports: dict
    combined: tuple[str, str]

    @property
    def combined_report(self) -> CountReport:
        return self.pair_reports[self.combined]


def run_zone(
    trace: Trace,
    models,
    pairs: Sequence[tuple[str, str]],
    config: DetectorConfig = DetectorConfig(),
    truth: Sequence[TruthEvent] | None = None,
    period_ms: int | None = None,
) -> ZoneReport:
    """Count on several receiver pairs of one zone (e.g. R1-R2 and R3-R2).

    ``models`` is one model for every pair or a mapping from pair to model.
    The combined result is the pair whose model had the higher training
    accuracy (first pair on ties).
    """
    reports = {}
    chosen, best = None, -1.0
    for pair in pairs:
        pair = tuple(pair)
        model = models[pair] if isinstance(models, Mapping) else models
        reports[pair] = run_count(trace, model, config, pair, truth, period_ms)
        acc = model.training_accuracy if model.training_accuracy == model.training_accuracy else 0.0
        if acc > best:
            chosen, best = pair, acc
    return ZoneReport(reports, chosen)
