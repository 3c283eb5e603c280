"""Synthetic labeled RSSI traces for one transmitter and two receivers.

Each receiver sees integer RSSI fluctuations drawn from a zero-mean
discretized Gaussian. Outside crossings the fluctuation std is
``quiet_sigma``; inside a crossing by ``k`` people it is
``active_sigma_base + sigma_per_person * (k - 1)``. The fluctuations are
integrated onto the baseline RSSI (reflected at +-``wander_db`` so the
level never drifts off), which keeps fluctuation statistics exact.
"""

from __future__ import annotations

import csv
import functools
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .trace import RSSI_MAX, RSSI_MIN, ReceiverStream, Trace

SCENARIO_HEADER = ("start_sample", "group_size", "delay_r2", "duration_r1", "duration_r2")
TRUTH_HEADER = ("event_id", "group_size", "receiver_id", "start_seq", "end_seq")
MAX_GROUP = 5


@dataclass(frozen=True)
class CrossingEvent:
    """A group crossing both links.

    The near link (first receiver) is disturbed over
    ``[start_sample, start_sample + duration_r1 - 1]``; the far link over
    the same window shifted by ``delay_r2`` with length ``duration_r2``.
    """

    start_sample: int
    group_size: int
    delay_r2: int
    duration_r1: int
    duration_r2: int

    def __post_init__(self):
        if not 1 <= self.group_size <= MAX_GROUP:
            raise ConfigError(f"group_size {self.group_size} outside [1, {MAX_GROUP}]")
        if self.duration_r1 < 1 or self.duration_r2 < 1:
            raise ConfigError("durations must be positive")
        if self.group_size > 1 and self.duration_r2 < self.duration_r1:
            raise ConfigError("far-link duration shorter than near-link duration for a group")

    def spans(self) -> tuple[tuple[int, int], tuple[int, int]]:
        s1 = self.start_sample
        s2 = self.start_sample + self.delay_r2
        return (s1, s1 + self.duration_r1 - 1), (s2, s2 + self.duration_r2 - 1)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 2000
    baseline_rssi_dbm: int = -60
    quiet_sigma: float = 0.5
    active_sigma_base: float = 4.0
    sigma_per_person: float = 1.0
    duration_base: int = 20
    duration_per_person: int = 8
    rng_seed: int = 0
    interval_ms: int = 150
    receivers: tuple[str, str] = ("R1", "R2")
    wander_db: int = 15
    loss_prob: float = 0.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.quiet_sigma < 0:
            raise ConfigError("quiet_sigma must be non-negative")
        if not self.quiet_sigma < 2 < self.active_sigma_base:
            raise ConfigError("need quiet_sigma < 2 < active_sigma_base")
        if self.sigma_per_person < 0 or self.duration_per_person < 0 or self.duration_base < 1:
            raise ConfigError("per-person increments must be non-negative, duration_base >= 1")
        lo = self.baseline_rssi_dbm - self.wander_db
        hi = self.baseline_rssi_dbm + self.wander_db
        if lo < RSSI_MIN or hi > RSSI_MAX:
            raise ConfigError("baseline +- wander_db leaves the valid RSSI range")
        if len(set(self.receivers)) != 2:
            raise ConfigError("need two distinct receiver ids")
        if not 0 <= self.loss_prob < 1:
            raise ConfigError("loss_prob must lie in [0, 1)")

    def active_sigma(self, group_size: int) -> float:
        return self.active_sigma_base + self.sigma_per_person * (group_size - 1)

    def make_event(self, start_sample: int, group_size: int) -> CrossingEvent:
        """Event with the configured durations; the far link starts earlier and ends later."""
        d1 = self.duration_base
        d2 = self.duration_base + self.duration_per_person * (group_size - 1)
        return CrossingEvent(start_sample, group_size, -((d2 - d1) // 2), d1, d2)


@dataclass(frozen=True)
class TruthEvent:
    event_id: int
    group_size: int
    spans: dict = field(default_factory=dict)  # receiver_id -> (start_seq, end_seq)

    @property
    def extent(self) -> tuple[int, int]:
        return min(s for s, _ in self.spans.values()), max(e for _, e in self.spans.values())


def _rounded_variance(s: float) -> float:
    k = np.arange(1, int(math.ceil(12 * s)) + 2)
    pk = ndtr((k + 0.5) / s) - ndtr((k - 0.5) / s)
    return float(2.0 * np.sum(k * k * pk))


@functools.lru_cache(maxsize=64)
def discrete_scale(sigma: float) -> float:
    """Continuous std whose integer rounding has standard deviation ``sigma``."""
    if sigma == 0:
        return 0.0
    lo, hi = 1e-9, sigma + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _rounded_variance(mid) < sigma * sigma:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def layout_events(
    config: SynthConfig, group_sizes: Sequence[int], gap: int = 60, lead: int = 40
) -> tuple[list[CrossingEvent], int]:
    """Place one event per group size back to back; returns events and the trace length needed."""
    events = []
    cursor = lead
    for gs in group_sizes:
        ev = config.make_event(0, gs)
        start = cursor - ev.delay_r2
        ev = config.make_event(start, gs)
        events.append(ev)
        cursor = max(e for _, e in ev.spans()) + 1 + gap
    return events, cursor + lead


def _check_events(config: SynthConfig, events: Sequence[CrossingEvent]) -> None:
    for ri in range(2):
        spans = sorted(ev.spans()[ri] for ev in events)
        for s, e in spans:
            if s < 1 or e > config.n_samples - 1:
                raise ConfigError(f"event span [{s}, {e}] exceeds trace of {config.n_samples} samples")
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 <= e0:
                raise ConfigError(f"overlapping events [{s0}, {e0}] and [{s1}, {e1}]")


def generate(config: SynthConfig, events: Sequence[CrossingEvent]) -> tuple[Trace, list[TruthEvent]]:
    _check_events(config, events)
    rng = np.random.default_rng(config.rng_seed)
    n = config.n_samples
    q_scale = discrete_scale(float(config.quiet_sigma))
    streams = {}
    for ri, rid in enumerate(config.receivers):
        scale = np.full(n - 1, q_scale)
        for ev in events:
            s, e = ev.spans()[ri]
            # fluctuation k sits between packets k and k+1
            scale[s - 1 : e] = discrete_scale(float(config.active_sigma(ev.group_size)))
        steps = np.rint(rng.standard_normal(n - 1) * scale).astype(np.int64)
        rssi = np.empty(n, dtype=np.int64)
        level = config.baseline_rssi_dbm
        rssi[0] = level
        lo = config.baseline_rssi_dbm - config.wander_db
        hi = config.baseline_rssi_dbm + config.wander_db
        for k, step in enumerate(steps.tolist()):
            if not lo <= level + step <= hi:
                step = -step
                if not lo <= level + step <= hi:
                    step = 0
            level += step
            rssi[k + 1] = level
        seq = np.arange(n, dtype=np.int64)
        if config.loss_prob > 0:
            keep = rng.random(n) >= config.loss_prob
            keep[0] = keep[-1] = True
            seq, rssi = seq[keep], rssi[keep]
        streams[rid] = ReceiverStream(rid, seq, seq * config.interval_ms, rssi)

    truth = [
        TruthEvent(i, ev.group_size, dict(zip(config.receivers, ev.spans())))
        for i, ev in enumerate(events)
    ]
    meta = {"generator": "rssicount.synth", "seed": str(config.rng_seed)}
    return Trace(streams, config.interval_ms, meta), truth


def read_scenario(path: str | os.PathLike) -> list[CrossingEvent]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(row for row in fh if not row.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SCENARIO_HEADER:
            raise ConfigError(f"scenario header must be {','.join(SCENARIO_HEADER)}")
        events = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                events.append(CrossingEvent(*(int(v) for v in row)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"scenario line {lineno}: {exc}") from None
    return events


def write_scenario(events: Sequence[CrossingEvent], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_HEADER)
        for ev in events:
            w.writerow((ev.start_sample, ev.group_size, ev.delay_r2, ev.duration_r1, ev.duration_r2))


def write_truth(truth: Sequence[TruthEvent], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for ev in truth:
            for rid, (s, e) in ev.spans.items():
                w.writerow((ev.event_id, ev.group_size, rid, s, e))


def read_truth(path: str | os.PathLike) -> list[TruthEvent]:
    by_id: dict[int, TruthEvent] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRUTH_HEADER:
            raise ConfigError(f"truth header must be {','.join(TRUTH_HEADER)}")
        for row in reader:
            eid = int(row["event_id"])
            ev = by_id.setdefault(eid, TruthEvent(eid, int(row["group_size"]), {}))
            ev.spans[row["receiver_id"]] = (int(row["start_seq"]), int(row["end_seq"]))
    return [by_id[k] for k in sorted(by_id)]


def truth_mask(truth: Sequence[TruthEvent], receiver_id: str, seq: np.ndarray) -> np.ndarray:
    """Boolean per packet: True where the packet lies inside a crossing on that receiver."""
    mask = np.zeros(seq.shape[0], dtype=bool)
    for ev in truth:
        if receiver_id in ev.spans:
            s, e = ev.spans[receiver_id]
            mask |= (seq >= s) & (seq <= e)
    return mask
