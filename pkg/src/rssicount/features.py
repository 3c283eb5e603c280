"""Per-crossing feature vectors for group-size classification.

Each paired detection contributes, for both receivers, summary statistics
of the windowed fluctuation-std series inside the event: mean, std,
coefficient of variation, duration (samples) and trapezoidal area.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detect import DetectionEvent
from .errors import RssiCountError, TrainingError

FEATURE_NAMES = (
    "r1_mean",
    "r2_mean",
    "r1_std",
    "r2_std",
    "r1_cv",
    "r2_cv",
    "r1_duration",
    "r2_duration",
    "r1_area",
    "r2_area",
)
CSV_HEADER = ("label",) + FEATURE_NAMES
CV_GUARD = 1e-9


@dataclass(frozen=True)
class EventFeatureVector:
    r1_mean: float
    r2_mean: float
    r1_std: float
    r2_std: float
    r1_cv: float
    r2_cv: float
    r1_duration: int
    r2_duration: int
    r1_area: float
    r2_area: float
    label: int | None = None
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    def with_label(self, label: int | None) -> "EventFeatureVector":
        return EventFeatureVector(*(getattr(self, n) for n in FEATURE_NAMES), label=label, degenerate=self.degenerate)

    @classmethod
    def from_array(cls, values, label=None) -> "EventFeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {len(values)}")
        values[6], values[7] = int(round(values[6])), int(round(values[7]))
        return cls(*values, label=label)


def series_summary(series) -> tuple[float, float, float, float, bool]:
    """mean, sample std, cv, unit-spacing trapezoid area and a degenerate flag."""
    y = np.asarray(series, dtype=np.float64)
    if y.shape[0] == 0:
        raise RssiCountError("empty event slice")
    mean = float(y.mean())
    std = float(y.std(ddof=1)) if y.shape[0] > 1 else 0.0
    area = float(np.sum((y[1:] + y[:-1]) * 0.5))
    if abs(mean) < CV_GUARD:
        return mean, std, 0.0, area, True
    return mean, std, std / mean, area, False


def extract(pair: tuple[DetectionEvent, DetectionEvent], label: int | None = None) -> EventFeatureVector:
    first, second = pair
    m1, s1, cv1, a1, d1 = series_summary(first.std_series)
    m2, s2, cv2, a2, d2 = series_summary(second.std_series)
    return EventFeatureVector(
        m1, m2, s1, s2, cv1, cv2, first.duration, second.duration, a1, a2, label=label, degenerate=d1 or d2
    )


def as_matrix(dataset: Sequence[EventFeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([v.as_array() for v in dataset], dtype=np.float64).reshape(len(dataset), len(FEATURE_NAMES))
    y = np.array([-1 if v.label is None else v.label for v in dataset], dtype=np.int64)
    return X, y


def group_means(dataset: Sequence[EventFeatureVector], groups: Sequence[int] = (1, 2, 3, 4, 5)) -> np.ndarray:
    """g x 10 matrix of per-group feature means, rows ordered as ``groups``."""
    X, y = as_matrix(dataset)
    bad = sorted(set(y.tolist()) - set(groups))
    if bad:
        raise TrainingError(f"labels {bad} outside groups {list(groups)}")
    rows = []
    for g in groups:
        mask = y == g
        if not mask.any():
            raise TrainingError(f"group {g} has no samples")
        rows.append(X[mask].mean(axis=0))
    return np.vstack(rows)


def format_features(dataset: Sequence[EventFeatureVector]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for v in dataset:
        row = ["" if v.label is None else v.label]
        for name in FEATURE_NAMES:
            val = getattr(v, name)
            row.append(val if isinstance(val, int) else repr(float(val)))
        w.writerow(row)
    return buf.getvalue()


def parse_features(text: str) -> list[EventFeatureVector]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise RssiCountError(f"feature header must be {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise RssiCountError(f"line {lineno}: expected {len(CSV_HEADER)} columns")
        try:
            label = int(row[0]) if row[0].strip() else None
            out.append(EventFeatureVector.from_array(row[1:], label=label))
        except ValueError:
            raise RssiCountError(f"line {lineno}: non-numeric field") from None
    return out


def write_features(dataset: Sequence[EventFeatureVector], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_features(dataset))


def read_features(path: str | os.PathLike) -> list[EventFeatureVector]:
    with open(path, encoding="utf-8") as fh:
        return parse_features(fh.read())
