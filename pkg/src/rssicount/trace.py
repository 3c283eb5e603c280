"""RSSI packet trace model and CSV reader/writer.

File layout::

    # interval_ms=150
    receiver_id,seq,timestamp_ms,rssi_dbm
    R1,0,0,-60
    R1,1,150,-61

Comment lines (``#``) before the header carry ``key=value`` metadata.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import IntegrityError, ParseError, EmptyInputError

HEADER = ("receiver_id", "seq", "timestamp_ms", "rssi_dbm")
RSSI_MIN, RSSI_MAX = -127, 0
DEFAULT_INTERVAL_MS = 150
INT_LIMIT = 2**62


@dataclass(frozen=True)
class PacketSample:
    receiver_id: str
    seq: int
    timestamp_ms: int
    rssi_dbm: int


@dataclass(frozen=True, eq=False)
class ReceiverStream:
    """One receiver's samples as parallel integer arrays, ordered by seq."""

    receiver_id: str
    seq: np.ndarray
    timestamp_ms: np.ndarray
    rssi_dbm: np.ndarray

    def __post_init__(self):
        for name in ("seq", "timestamp_ms", "rssi_dbm"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        validate_stream(self)

    def __len__(self):
        return int(self.seq.shape[0])

    def __eq__(self, other):
        if not isinstance(other, ReceiverStream):
            return NotImplemented
        return (
            self.receiver_id == other.receiver_id
            and np.array_equal(self.seq, other.seq)
            and np.array_equal(self.timestamp_ms, other.timestamp_ms)
            and np.array_equal(self.rssi_dbm, other.rssi_dbm)
        )

    def samples(self) -> list[PacketSample]:
        return [
            PacketSample(self.receiver_id, int(s), int(t), int(r))
            for s, t, r in zip(self.seq, self.timestamp_ms, self.rssi_dbm)
        ]

    def shifted(self, offset_db: int) -> "ReceiverStream":
        return ReceiverStream(self.receiver_id, self.seq, self.timestamp_ms, self.rssi_dbm + offset_db)

    @classmethod
    def from_samples(cls, samples: Iterable[PacketSample]) -> "ReceiverStream":
        samples = sorted(samples, key=lambda s: s.seq)
        if not samples:
            raise IntegrityError("receiver stream is empty")
        rid = samples[0].receiver_id
        if any(s.receiver_id != rid for s in samples):
            raise IntegrityError("mixed receiver ids in one stream")
        return cls(
            rid,
            np.array([s.seq for s in samples]),
            np.array([s.timestamp_ms for s in samples]),
            np.array([s.rssi_dbm for s in samples]),
        )


def validate_receiver_id(rid: str) -> None:
    if not rid or rid != rid.strip() or any(c in rid for c in ",\n\r") or rid.startswith("#"):
        raise IntegrityError(f"invalid receiver id {rid!r}")


def validate_stream(stream: ReceiverStream) -> None:
    validate_receiver_id(stream.receiver_id)
    n = len(stream)
    if n == 0:
        raise IntegrityError(f"receiver {stream.receiver_id!r} has no samples")
    if not (stream.timestamp_ms.shape[0] == stream.rssi_dbm.shape[0] == n):
        raise IntegrityError(f"receiver {stream.receiver_id!r}: column lengths differ")
    if (stream.seq < 0).any() or (stream.timestamp_ms < 0).any():
        raise IntegrityError(f"receiver {stream.receiver_id!r}: negative seq or timestamp")
    dseq = np.diff(stream.seq)
    if (dseq == 0).any():
        dup = int(stream.seq[1:][dseq == 0][0])
        raise IntegrityError(f"receiver {stream.receiver_id!r}: duplicate seq {dup}")
    if (dseq < 0).any():
        raise IntegrityError(f"receiver {stream.receiver_id!r}: seq not increasing")
    if (np.diff(stream.timestamp_ms) < 0).any():
        raise IntegrityError(f"receiver {stream.receiver_id!r}: timestamps decrease")
    if (stream.rssi_dbm < RSSI_MIN).any() or (stream.rssi_dbm > RSSI_MAX).any():
        raise IntegrityError(
            f"receiver {stream.receiver_id!r}: rssi outside [{RSSI_MIN}, {RSSI_MAX}] dBm"
        )


@dataclass(frozen=True)
class Trace:
    streams: Mapping[str, ReceiverStream]
    inter_packet_interval_ms: int = DEFAULT_INTERVAL_MS
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.streams:
            raise IntegrityError("trace has no receivers")
        for rid, stream in self.streams.items():
            if rid != stream.receiver_id:
                raise IntegrityError(f"stream key {rid!r} != receiver id {stream.receiver_id!r}")
            validate_stream(stream)
        object.__setattr__(self, "streams", dict(self.streams))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def receiver_ids(self) -> list[str]:
        return list(self.streams)

    def __getitem__(self, receiver_id: str) -> ReceiverStream:
        return self.streams[receiver_id]

    def __len__(self):
        return sum(len(s) for s in self.streams.values())

    def with_offset(self, offset_db: int) -> "Trace":
        return Trace(
            {rid: s.shifted(offset_db) for rid, s in self.streams.items()},
            self.inter_packet_interval_ms,
            self.metadata,
        )


def _parse_meta(line: str, meta: dict) -> None:
    body = line.lstrip("#").strip()
    for token in body.split():
        if "=" in token:
            key, value = token.split("=", 1)
            meta[key.strip()] = value.strip()


def parse_trace(text: str) -> Trace:
    """Parse trace CSV text. Raises a :class:`~rssicount.errors.TraceError` subclass on bad input."""
    if not text.strip():
        raise EmptyInputError("empty trace file")
    meta: dict[str, str] = {}
    grouped: dict[str, list[tuple[int, int, int]]] = {}
    seen_header = False
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if seen_header:
                raise ParseError(f"line {lineno}: comment after header")
            _parse_meta(stripped, meta)
            continue
        fields = [f.strip() for f in stripped.split(",")]
        if not seen_header:
            if tuple(fields) != HEADER:
                raise ParseError(f"line {lineno}: expected header {','.join(HEADER)}")
            seen_header = True
            continue
        if len(fields) != 4:
            raise ParseError(f"line {lineno}: expected 4 columns, got {len(fields)}")
        rid = fields[0]
        if not rid:
            raise ParseError(f"line {lineno}: empty receiver_id")
        try:
            seq, ts, rssi = (int(f) for f in fields[1:])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer field") from None
        if not (0 <= seq <= INT_LIMIT and 0 <= ts <= INT_LIMIT):
            raise ParseError(f"line {lineno}: seq or timestamp out of range")
        if not RSSI_MIN <= rssi <= RSSI_MAX:
            raise ParseError(f"line {lineno}: rssi {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")
        grouped.setdefault(rid, []).append((seq, ts, rssi))
    if not seen_header:
        raise EmptyInputError("trace file has no header")
    if not grouped:
        raise EmptyInputError("trace file has no samples")

    streams = {}
    for rid, rows in grouped.items():
        rows.sort(key=lambda r: r[0])
        arr = np.array(rows, dtype=np.int64)
        streams[rid] = ReceiverStream(rid, arr[:, 0], arr[:, 1], arr[:, 2])
    raw_interval = meta.pop("interval_ms", DEFAULT_INTERVAL_MS)
    try:
        interval = int(raw_interval)
    except ValueError:
        raise ParseError(f"bad interval_ms metadata {raw_interval!r}") from None
    return Trace(streams, interval, meta)


def read_trace(path: str | os.PathLike) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def format_trace(trace: Trace) -> str:
    buf = io.StringIO()
    meta = dict(trace.metadata)
    meta["interval_ms"] = str(trace.inter_packet_interval_ms)
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    buf.write(",".join(HEADER) + "\n")
    for rid, stream in trace.streams.items():
        for s, t, r in zip(stream.seq.tolist(), stream.timestamp_ms.tolist(), stream.rssi_dbm.tolist()):
            buf.write(f"{rid},{s},{t},{r}\n")
    return buf.getvalue()


def write_trace(trace: Trace, path: str | os.PathLike) -> None:
    for stream in trace.streams.values():
        validate_stream(stream)
    text = format_trace(trace)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
