"""Event records, stream reading/writing, and time windowing."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

BINARY_MAGIC = b"EVJ1"
UNLABELED = 255

# fixed-width little-endian record used by the .evj binary format
_EVENT_DTYPE = np.dtype(
    [("x", "<f8"), ("y", "<f8"), ("t", "<f8"), ("p", "<i1"), ("label", "<u1")]
)


class FormatError(ValueError):
    """Malformed event file or record."""


class Event(NamedTuple):
    """One sensor event: pixel location, time in seconds, polarity in {-1, +1}."""

    x: float
    y: float
    t: float
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel grid of the sensor (width x height)."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def npixels(self) -> int:
        return self.width * self.height


class Events:
    """Column-oriented event stream: parallel x, y, t, p arrays.

    Coordinates are real-valued so the same container carries raw and
    warped events. Iterating yields ``Event`` records in stream order.
    """

    __slots__ = ("x", "y", "t", "p")

    def __init__(self, x, y, t, p, validate: bool = True):
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.t = np.ascontiguousarray(t, dtype=np.float64)
        self.p = np.ascontiguousarray(p, dtype=np.int8)
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = self.x.shape[0]
        if not (self.y.shape[0] == self.t.shape[0] == self.p.shape[0] == n):
            raise ValueError("event columns have mismatched lengths")
        if n == 0:
            return
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("event coordinates must be finite")
        if not np.all(np.isfinite(self.t)) or np.any(self.t < 0.0):
            raise ValueError("timestamps must be finite and non-negative")
        if not np.all((self.p == 1) | (self.p == -1)):
            raise ValueError("polarity must be -1 or +1")

    @classmethod
    def empty(cls) -> "Events":
        return cls([], [], [], [], validate=False)

    @classmethod
    def from_records(cls, records) -> "Events":
        recs = list(records)
        if not recs:
            return cls.empty()
        x, y, t, p = zip(*((r.x, r.y, r.t, r.p) for r in recs))
        return cls(x, y, t, p)

    @classmethod
    def concatenate(cls, streams) -> "Events":
        streams = list(streams)
        if not streams:
            return cls.empty()
        return cls(
            np.concatenate([s.x for s in streams]),
            np.concatenate([s.y for s in streams]),
            np.concatenate([s.t for s in streams]),
            np.concatenate([s.p for s in streams]),
            validate=False,
        )

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Event(float(self.x[idx]), float(self.y[idx]), float(self.t[idx]), int(self.p[idx]))
        return Events(self.x[idx], self.y[idx], self.t[idx], self.p[idx], validate=False)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Events):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    def take(self, mask_or_index) -> "Events":
        return self[np.asarray(mask_or_index)]

    @property
    def positions(self) -> np.ndarray:
        """(N, 2) array of x, y coordinates."""
        return np.stack([self.x, self.y], axis=1)

    def is_time_sorted(self) -> bool:
        return len(self) < 2 or bool(np.all(np.diff(self.t) >= 0.0))

    def sorted_by_time(self):
        """Stable time sort. Returns (events, permutation)."""
        order = np.argsort(self.t, kind="stable")
        return self.take(order), order


@dataclass(frozen=True)
class EventWindow:
    """Time-bounded slice of a stream plus sensor geometry and reference time."""

    events: Events
    geometry: SensorGeometry
    t_start: float
    t_end: float
    t_ref: float

    def __post_init__(self) -> None:
        if not (self.t_start <= self.t_ref <= self.t_end):
            raise ValueError("t_ref must lie within [t_start, t_end]")
        if len(self.events) > 0:
            if not self.events.is_time_sorted():
                raise ValueError("window events must be sorted by time")
            if self.events.t[0] < self.t_start or self.events.t[-1] > self.t_end:
                raise ValueError("window events fall outside [t_start, t_end]")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def positions(self) -> np.ndarray:
        return self.events.positions

    @property
    def times(self) -> np.ndarray:
        return self.events.t


class LoadedStream(NamedTuple):
    events: Events
    labels: np.ndarray | None
    geometry: SensorGeometry | None


def detect_format(path) -> str:
    """Pick 'csv' or 'binary' from the extension, falling back to magic bytes."""
    p = Path(path)
    ext = p.suffix.lower()
    if ext in (".csv", ".txt"):
        return "csv"
    if ext in (".evj", ".bin"):
        return "binary"
    try:
        with open(p, "rb") as f:
            head = f.read(4)
    except OSError:
        return "csv"
    return "binary" if head == BINARY_MAGIC else "csv"


def _parse_csv(path) -> LoadedStream:
    xs: list[float] = []
    ys: list[float] = []
    ts: list[float] = []
    ps: list[int] = []
    labels: list[int] = []
    ncols = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [s.strip() for s in line.split(",")]
            if ncols is None:
                # optional header line
                try:
                    float(parts[0])
                except ValueError:
                    continue
            try:
                vals = [float(s) for s in parts]
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: unparseable field ({exc})") from None
            if len(vals) not in (4, 5):
                raise FormatError(f"{path}: line {lineno}: expected 4 or 5 fields, got {len(vals)}")
            if ncols is None:
                ncols = len(vals)
            elif len(vals) != ncols:
                raise FormatError(f"{path}: line {lineno}: inconsistent field count")
            x, y, t, p = vals[:4]
            if p not in (-1.0, 1.0):
                raise FormatError(f"{path}: line {lineno}: polarity must be -1 or 1, got {p:g}")
            if not np.isfinite(t) or t < 0.0:
                raise FormatError(f"{path}: line {lineno}: bad timestamp {t!r}")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise FormatError(f"{path}: line {lineno}: non-finite coordinates")
            xs.append(x)
            ys.append(y)
            ts.append(t)
            ps.append(int(p))
            if len(vals) == 5:
                lab = vals[4]
                if lab not in (0.0, 1.0):
                    raise FormatError(f"{path}: line {lineno}: label must be 0 or 1, got {lab:g}")
                labels.append(int(lab))
    events = Events(xs, ys, ts, ps, validate=False)
    lab_arr = np.asarray(labels, dtype=bool) if ncols == 5 else None
    return LoadedStream(events, lab_arr, None)


def _parse_binary(path) -> LoadedStream:
    with open(path, "rb") as f:
        header = f.read(20)
        if len(header) < 20 or header[:4] != BINARY_MAGIC:
            raise FormatError(f"{path}: not an event binary (bad magic/header)")
        width, height, count = struct.unpack("<IIQ", header[4:])
        records = np.fromfile(f, dtype=_EVENT_DTYPE)
    if records.shape[0] != count:
        raise FormatError(
            f"{path}: header promises {count} events, file holds {records.shape[0]}"
        )
    try:
        geometry = SensorGeometry(int(width), int(height))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    try:
        events = Events(records["x"], records["y"], records["t"], records["p"])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    raw_labels = records["label"]
    if np.all(raw_labels == UNLABELED):
        labels = None
    else:
        if np.any((raw_labels > 1) & (raw_labels != UNLABELED)):
            raise FormatError(f"{path}: label bytes must be 0, 1, or {UNLABELED}")
        if np.any(raw_labels == UNLABELED):
            raise FormatError(f"{path}: mixed labeled and unlabeled records")
        labels = raw_labels.astype(bool)
    return LoadedStream(events, labels, geometry)


def read_events(path, fmt: str | None = None, sort: bool = False) -> LoadedStream:
    """Read an event stream from a CSV or binary file.

    Timestamps must be non-decreasing; pass ``sort=True`` to stable-sort
    instead of rejecting. Labels and geometry are returned when the file
    carries them (binary always has geometry, CSV never does).
    """
    fmt = fmt or detect_format(path)
    if fmt == "csv":
        loaded = _parse_csv(path)
    elif fmt == "binary":
        loaded = _parse_binary(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    events, labels, geometry = loaded
    if not events.is_time_sorted():
        if not sort:
            raise FormatError(f"{path}: timestamps are not non-decreasing (use sort=True)")
        events, order = events.sorted_by_time()
        if labels is not None:
            labels = labels[order]
    return LoadedStream(events, labels, geometry)


def write_events(
    events: Events,
    path,
    labels: np.ndarray | None = None,
    geometry: SensorGeometry | None = None,
    fmt: str | None = None,
) -> None:
    """Write an event stream to CSV or binary.

    Binary round-trips are bit exact and require ``geometry``; CSV uses
    shortest-roundtrip decimal text, so it round-trips exactly as well.
    """
    if labels is not None:
        labels = np.asarray(labels, dtype=bool)
        if labels.shape[0] != len(events):
            raise ValueError("labels must parallel the event list")
    if fmt is None:
        ext = Path(path).suffix.lower()
        fmt = "csv" if ext in (".csv", ".txt") else "binary"
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as f:
            f.write("x,y,t,p,label\n" if labels is not None else "x,y,t,p\n")
            for i in range(len(events)):
                row = (
                    f"{float(events.x[i])!r},{float(events.y[i])!r},"
                    f"{float(events.t[i])!r},{int(events.p[i])}"
                )
                if labels is not None:
                    row += f",{int(labels[i])}"
                f.write(row + "\n")
    elif fmt == "binary":
        if geometry is None:
            raise ValueError("binary format requires sensor geometry")
        records = np.empty(len(events), dtype=_EVENT_DTYPE)
        records["x"] = events.x
        records["y"] = events.y
        records["t"] = events.t
        records["p"] = events.p
        records["label"] = labels.astype(np.uint8) if labels is not None else UNLABELED
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(struct.pack("<IIQ", geometry.width, geometry.height, len(events)))
            records.tofile(f)
    else:
        raise ValueError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class FixedDuration:
    """Split a stream into consecutive windows of equal duration (seconds)."""

    seconds: float

    def __post_init__(self) -> None:
        if not (self.seconds > 0):
            raise ValueError("window duration must be positive")


@dataclass(frozen=True)
class FixedCount:
    """Split a stream into consecutive windows of N events each."""

    count: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("window count must be at least 1")


def window_stream(events: Events, geometry: SensorGeometry, policy) -> list[EventWindow]:
    """Partition a time-sorted stream into non-overlapping windows.

    Every event lands in exactly one window; the final partial window is
    retained and empty stretches produce no windows. Each window's
    reference time is its midpoint.
    """
    if not events.is_time_sorted():
        raise ValueError("events must be sorted by time before windowing")
    if len(events) == 0:
        return []
    windows: list[EventWindow] = []
    if isinstance(policy, FixedDuration):
        t0 = float(events.t[0])
        idx = np.floor((events.t - t0) / policy.seconds).astype(np.int64)
        for k in np.unique(idx):
            chunk = events.take(idx == k)
            t_start = t0 + k * policy.seconds
            t_end = t_start + policy.seconds
            windows.append(
                EventWindow(chunk, geometry, t_start, t_end, 0.5 * (t_start + t_end))
            )
    elif isinstance(policy, FixedCount):
        for lo in range(0, len(events), policy.count):
            chunk = events[lo : lo + policy.count]
            t_start = float(chunk.t[0])
            t_end = float(chunk.t[-1])
            windows.append(
                EventWindow(chunk, geometry, t_start, t_end, 0.5 * (t_start + t_end))
            )
    else:
        raise TypeError(f"unknown windowing policy {policy!r}")
    return windows
