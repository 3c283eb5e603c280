"""Movement detection from RSSI fluctuations.

A fluctuation is the RSSI difference between consecutively received
packets. Over a trailing window of ``n`` fluctuations we keep the mean,
the sample std and the Gaussian probability mass in [-1, 1] dB; either
statistic can flag movement. Positive runs become events, and events on
two receivers of the same zone are cross-checked to drop false positives.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import InsufficientDataError
from .trace import ReceiverStream, Trace

PROB_THRESHOLD = 0.3
STD_THRESHOLD = 2.0
DEFAULT_WINDOW = 10
DEFAULT_MIN_DURATION = 3
DEFAULT_MERGE_GAP = 2
DEFAULT_PAIRING_WINDOW = 30
METHODS = ("prob", "std")


@dataclass(frozen=True, eq=False)
class FluctuationSeries:
    values: np.ndarray
    aligned_to: str = ""
    seq: np.ndarray | None = None  # seq of the later packet of each difference

    def __len__(self):
        return int(self.values.shape[0])


@dataclass(frozen=True)
class WindowStats:
    index: int
    mean: float
    std: float
    prob_in_band: float


@dataclass(frozen=True, eq=False)
class WindowSeries:
    """Per-sample window statistics, stored column-wise.

    ``index[j]`` is the fluctuation index the window ends on; the first
    ``n - 1`` fluctuations are warm-up and carry no entry.
    """

    index: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    prob: np.ndarray
    seq: np.ndarray | None = None
    receiver_id: str = ""
    window: int = DEFAULT_WINDOW

    def __len__(self):
        return int(self.index.shape[0])

    def __getitem__(self, item):
        if isinstance(item, slice):
            return WindowSeries(
                self.index[item],
                self.mean[item],
                self.std[item],
                self.prob[item],
                None if self.seq is None else self.seq[item],
                self.receiver_id,
                self.window,
            )
        return WindowStats(int(self.index[item]), float(self.mean[item]), float(self.std[item]), float(self.prob[item]))

    def __iter__(self):
        for j in range(len(self)):
            yield self[j]

    def to_csv(self, decisions: np.ndarray | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "mean", "std", "prob", "decision"))
        dec = np.zeros(len(self), dtype=bool) if decisions is None else np.asarray(decisions, dtype=bool)
        for i, m, s, p, d in zip(self.index.tolist(), self.mean.tolist(), self.std.tolist(), self.prob.tolist(), dec.tolist()):
            w.writerow((i, repr(m), repr(s), repr(p), int(d)))
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DetectionEvent:
    receiver_id: str
    start_index: int
    end_index: int
    method: str = "std"
    window_stats_slice: WindowSeries | None = None
    start_seq: int | None = None
    end_seq: int | None = None

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError("start_index > end_index")

    @property
    def duration(self) -> int:
        return self.end_index - self.start_index + 1

    @property
    def std_series(self) -> np.ndarray:
        if self.window_stats_slice is None:
            return np.zeros(0)
        return self.window_stats_slice.std

    def span(self, axis: str = "index") -> tuple[int, int]:
        if axis == "seq":
            return self.start_seq, self.end_seq
        return self.start_index, self.end_index

    def key(self):
        return (self.receiver_id, self.start_index, self.end_index, self.method, self.start_seq, self.end_seq)

    def __eq__(self, other):
        if not isinstance(other, DetectionEvent):
            return NotImplemented
        return self.key() == other.key() and np.array_equal(self.std_series, other.std_series)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"DetectionEvent({self.receiver_id!r}, [{self.start_index}, {self.end_index}], {self.method})"


@dataclass(frozen=True)
class DetectorConfig:
    method: str = "std"
    window: int = DEFAULT_WINDOW
    prob_threshold: float = PROB_THRESHOLD
    std_threshold: float = STD_THRESHOLD
    min_duration: int = DEFAULT_MIN_DURATION
    merge_gap: int = DEFAULT_MERGE_GAP
    pairing_window: int = DEFAULT_PAIRING_WINDOW

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.window < 2:
            raise ValueError("window must be >= 2")


def fluctuations(samples) -> FluctuationSeries:
    """Differences between consecutively received RSSI readings.

    Accepts a :class:`ReceiverStream` or a plain sequence of RSSI values.
    """
    if isinstance(samples, ReceiverStream):
        rssi, rid, seq = samples.rssi_dbm, samples.receiver_id, samples.seq
    else:
        rssi, rid, seq = np.asarray(samples), "", None
    if rssi.shape[0] < 2:
        raise InsufficientDataError("insufficient data: need at least 2 samples for a fluctuation")
    values = np.diff(rssi.astype(np.float64))
    return FluctuationSeries(values, rid, None if seq is None else np.asarray(seq)[1:])


def window_stats(f: FluctuationSeries, n: int = DEFAULT_WINDOW) -> WindowSeries:
    if n < 2:
        raise ValueError("window size must be >= 2")
    if len(f) < n:
        raise InsufficientDataError(f"insufficient data: {len(f)} fluctuations for window {n}")
    mean, std = kernels.window_stats(np.ascontiguousarray(f.values, dtype=np.float64), n)
    prob = kernels.prob_in_band(mean, std)
    index = np.arange(n - 1, len(f), dtype=np.int64)
    seq = None if f.seq is None else f.seq[n - 1 :]
    return WindowSeries(index, mean, std, prob, seq, f.aligned_to, n)


def prob_in_band(mean: float, std: float, lo: float = -1.0, hi: float = 1.0) -> float:
    """Probability that N(mean, std^2) falls in [lo, hi]; a point mass when std is 0."""
    if std < 0:
        raise ValueError("standard deviation must be non-negative")
    return float(kernels.prob_in_band(np.array([mean], dtype=np.float64), np.array([std], dtype=np.float64), lo, hi)[0])


def _column(stats, name):
    if isinstance(stats, WindowSeries):
        return getattr(stats, name)
    attr = "prob_in_band" if name == "prob" else name
    return np.array([getattr(s, attr) for s in stats], dtype=np.float64)


def detect_probability(stats, threshold: float = PROB_THRESHOLD) -> np.ndarray:
    return _column(stats, "prob") < threshold


def detect_std(stats, threshold: float = STD_THRESHOLD) -> np.ndarray:
    return _column(stats, "std") > threshold


def decide(stats: WindowSeries, config: DetectorConfig) -> np.ndarray:
    if config.method == "prob":
        return detect_probability(stats, config.prob_threshold)
    return detect_std(stats, config.std_threshold)


def segment_events(
    decisions,
    stats: WindowSeries | None = None,
    min_duration: int = DEFAULT_MIN_DURATION,
    merge_gap: int = DEFAULT_MERGE_GAP,
    method: str = "std",
    receiver_id: str | None = None,
) -> list[DetectionEvent]:
    dec = np.ascontiguousarray(np.asarray(decisions, dtype=bool).view(np.uint8))
    if stats is not None and len(stats) != dec.shape[0]:
        raise ValueError("decisions and stats lengths differ")
    starts, ends = kernels.segment(dec, int(min_duration), int(merge_gap))
    rid = receiver_id if receiver_id is not None else (stats.receiver_id if stats is not None else "")
    events = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        if stats is None:
            events.append(DetectionEvent(rid, s, e, method))
            continue
        sl = stats[s : e + 1]
        seqs = (None, None) if stats.seq is None else (int(stats.seq[s]), int(stats.seq[e]))
        events.append(DetectionEvent(rid, int(stats.index[s]), int(stats.index[e]), method, sl, *seqs))
    return events


def detect_stream(stream: ReceiverStream, config: DetectorConfig = DetectorConfig()):
    """Fluctuations, window stats, decisions and events for one receiver."""
    stats = window_stats(fluctuations(stream), config.window)
    decisions = decide(stats, config)
    events = segment_events(decisions, stats, config.min_duration, config.merge_gap, config.method, stream.receiver_id)
    return stats, decisions, events


@dataclass
class FusionResult:
    pairs: list[tuple[DetectionEvent, DetectionEvent]] = field(default_factory=list)
    discarded: list[DetectionEvent] = field(default_factory=list)


def _gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Samples strictly between two inclusive intervals; 0 when they touch or overlap."""
    return max(0, max(a[0], b[0]) - min(a[1], b[1]) - 1)


def fuse_receivers(
    events_a: Sequence[DetectionEvent],
    events_b: Sequence[DetectionEvent],
    pairing_window: int = DEFAULT_PAIRING_WINDOW,
    axis: str = "auto",
) -> FusionResult:
    """Keep only events confirmed by the other receiver.

    Candidates are event pairs that overlap or lie within ``pairing_window``
    samples of each other; they are matched greedily by smallest start
    difference. ``axis`` picks the shared sample axis: ``"seq"`` (packet
    sequence numbers, shared by receivers of one transmitter), ``"index"``,
    or ``"auto"`` (seq when every event carries it).
    """
    if axis == "auto":
        everything = list(events_a) + list(events_b)
        axis = "seq" if everything and all(e.start_seq is not None for e in everything) else "index"
    spans_a = [e.span(axis) for e in events_a]
    spans_b = [e.span(axis) for e in events_b]
    candidates = []
    for i, sa in enumerate(spans_a):
        for j, sb in enumerate(spans_b):
            if _gap(sa, sb) <= pairing_window:
                candidates.append((abs(sa[0] - sb[0]), sa[0], sb[0], i, j))
    candidates.sort()
    used_a, used_b = set(), set()
    matched = []
    for _, _, _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matched.append((i, j))
    matched.sort(key=lambda ij: (min(spans_a[ij[0]][0], spans_b[ij[1]][0]), ij))
    result = FusionResult()
    result.pairs = [(events_a[i], events_b[j]) for i, j in matched]
    result.discarded = [e for i, e in enumerate(events_a) if i not in used_a]
    result.discarded += [e for j, e in enumerate(events_b) if j not in used_b]
    return result


@dataclass
class SweepRow:
    window: int
    errors: int
    scored: int
    total: int

    @property
    def error_rate(self) -> float:
        return self.errors / self.scored if self.scored else 0.0

    @property
    def coverage(self) -> float:
        return self.scored / self.total if self.total else 0.0


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def best_window(self) -> int:
        return min(self.rows, key=lambda r: (r.error_rate, r.window)).window

    def error_rates(self) -> dict[int, float]:
        return {r.window: r.error_rate for r in self.rows}


def fluctuation_labels(trace: Trace, truth) -> dict[str, np.ndarray]:
    """Per receiver, True for fluctuations whose later packet lies inside a crossing."""
    from .synth import truth_mask

    return {rid: truth_mask(truth, rid, s.seq[1:]) for rid, s in trace.streams.items()}


def window_sweep(
    trace: Trace,
    labels,
    n_values: Sequence[int],
    method: str = "std",
    prob_threshold: float = PROB_THRESHOLD,
    std_threshold: float = STD_THRESHOLD,
    receivers: Sequence[str] | None = None,
) -> SweepResult:
    """Per-sample detection error rate for each window size.

    ``labels`` is either a list of truth events or a mapping from receiver
    id to a boolean array over that receiver's fluctuations. A window that
    straddles a labeled transition mixes both regimes and is not scored.
    """
    if not isinstance(labels, Mapping):
        labels = fluctuation_labels(trace, labels)
    receivers = list(receivers) if receivers is not None else trace.receiver_ids
    cfg_kw = dict(prob_threshold=prob_threshold, std_threshold=std_threshold)
    rows = []
    for n in n_values:
        config = DetectorConfig(method=method, window=int(n), **cfg_kw)
        errors = scored = total = 0
        for rid in receivers:
            lab = np.asarray(labels[rid], dtype=bool)
            stats = window_stats(fluctuations(trace[rid]), n)
            dec = decide(stats, config)
            if lab.shape[0] != len(stats) + n - 1:
                raise ValueError(f"labels for {rid!r} do not match its fluctuation count")
            csum = np.concatenate(([0], np.cumsum(lab)))
            ones = csum[n:] - csum[:-n]
            pure = (ones == 0) | (ones == n)
            target = lab[n - 1 :]
            errors += int(np.sum((dec != target) & pure))
            scored += int(pure.sum())
            total += len(stats)
        rows.append(SweepRow(int(n), errors, scored, total))
    return SweepResult(rows)


def write_events_csv(events: Sequence[DetectionEvent], pair_ids: Sequence[int] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["receiver_id", "start_index", "end_index", "start_seq", "end_seq", "method", "std_series"]
    if pair_ids is not None:
        head.insert(0, "pair_id")
    w.writerow(head)
    for k, ev in enumerate(events):
        row = [
            ev.receiver_id,
            ev.start_index,
            ev.end_index,
            "" if ev.start_seq is None else ev.start_seq,
            "" if ev.end_seq is None else ev.end_seq,
            ev.method,
            " ".join(repr(float(v)) for v in ev.std_series),
        ]
        if pair_ids is not None:
            row.insert(0, pair_ids[k])
        w.writerow(row)
    return buf.getvalue()


def _event_from_row(row: Mapping[str, str]) -> DetectionEvent:
    std = np.array([float(v) for v in row["std_series"].split()], dtype=np.float64)
    start, end = int(row["start_index"]), int(row["end_index"])
    s_seq = int(row["start_seq"]) if row["start_seq"] else None
    e_seq = int(row["end_seq"]) if row["end_seq"] else None
    sl = None
    if std.shape[0]:
        n = std.shape[0]
        nan = np.full(n, np.nan)
        sl = WindowSeries(np.arange(start, start + n, dtype=np.int64), nan, std, nan, None, row["receiver_id"])
    return DetectionEvent(row["receiver_id"], start, end, row["method"], sl, s_seq, e_seq)


def read_events_csv(text: str) -> list[DetectionEvent]:
    return [_event_from_row(row) for row in csv.DictReader(io.StringIO(text))]


def read_pairs_csv(text: str) -> list[tuple[DetectionEvent, DetectionEvent]]:
    groups: dict[str, list[DetectionEvent]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        groups.setdefault(row["pair_id"], []).append(_event_from_row(row))
    pairs = []
    for pid, evs in groups.items():
        if len(evs) != 2:
            raise ValueError(f"pair {pid} has {len(evs)} events, expected 2")
        pairs.append((evs[0], evs[1]))
    return pairs


def write_pairs_csv(pairs: Sequence[tuple[DetectionEvent, DetectionEvent]]) -> str:
    flat = [ev for pair in pairs for ev in pair]
    ids = [k for k in range(len(pairs)) for _ in range(2)]
    return write_events_csv(flat, ids)
