"""Event ingestion, filtering, train/test splitting and monthly tabulation."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence, TextIO

import numpy as np

from .geo import GeoPoint, LonFrame

if TYPE_CHECKING:
    from .partition import Partition

CSV_COLUMNS = ("id", "timestamp", "lat", "lon", "total_activities", "assets_dispatched", "group", "category")
REQUIRED_COLUMNS = ("id", "timestamp", "lat", "lon")


class DataError(ValueError):
    """Raised when input data cannot be used (as opposed to a bad config)."""


def to_month(value) -> np.datetime64:
    """Coerce ``'YYYY-MM'``, a datetime or a datetime64 to a month scalar."""
    if isinstance(value, datetime):
        if value.tzinfo is not None:
            value = value.astimezone(timezone.utc).replace(tzinfo=None)
        return np.datetime64(value, "M")
    return np.datetime64(value, "M")


def month_range(start, end) -> np.ndarray:
    """Inclusive range of calendar months."""
    start, end = to_month(start), to_month(end)
    return np.arange(start, end + 1, dtype="datetime64[M]")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class DemandEvent:
    id: str
    timestamp: datetime
    location: GeoPoint
    total_activities: int = 1
    assets_dispatched: int = 0
    group: str | None = None
    category: str = ""

    def __post_init__(self):
        if self.total_activities < 1:
            raise ValueError(f"event {self.id}: total_activities must be >= 1")
        if self.assets_dispatched < 0:
            raise ValueError(f"event {self.id}: assets_dispatched must be >= 0")

    @property
    def month(self) -> np.datetime64:
        return to_month(self.timestamp)


@dataclass(frozen=True)
class EventDataset:
    """Immutable ordered collection of events over an inclusive month span.

    Column arrays (``lat``, ``lon``, ``activities`` ...) are built lazily and
    cached; treat them as read-only.
    """

    events: tuple[DemandEvent, ...]
    time_span: tuple[np.datetime64, np.datetime64]
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        start, end = to_month(self.time_span[0]), to_month(self.time_span[1])
        object.__setattr__(self, "time_span", (start, end))
        if self.events:
            m = self.months
            if m.min() < start or m.max() > end:
                raise DataError("event timestamps fall outside the dataset time span")

    @classmethod
    def from_events(cls, events: Iterable[DemandEvent], time_span=None, provenance=None) -> "EventDataset":
        events = tuple(events)
        if time_span is None:
            if not events:
                raise ValueError("time_span is required for an empty dataset")
            months = [e.month for e in events]
            time_span = (min(months), max(months))
        return cls(events, time_span, dict(provenance or {}))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @cached_property
    def lat(self) -> np.ndarray:
        return np.array([e.location.lat_deg for e in self.events], dtype=float)

    @cached_property
    def lon(self) -> np.ndarray:
        return np.array([e.location.lon_deg for e in self.events], dtype=float)

    @cached_property
    def activities(self) -> np.ndarray:
        return np.array([e.total_activities for e in self.events], dtype=float)

    @cached_property
    def assets(self) -> np.ndarray:
        return np.array([e.assets_dispatched for e in self.events], dtype=float)

    @cached_property
    def months(self) -> np.ndarray:
        return np.array([e.month for e in self.events], dtype="datetime64[M]")

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.events]

    def replace(self, events: Iterable[DemandEvent], time_span=None, **provenance) -> "EventDataset":
        prov = dict(self.provenance)
        prov.update(provenance)
        return EventDataset(tuple(events), time_span or self.time_span, prov)


@dataclass(frozen=True)
class ParseConfig:
    max_reject_fraction: float = 0.10
    time_span: tuple[str, str] | None = None
    source: str = "<stream>"


@dataclass
class Reject:
    row: int
    reason: str


def parse_events(source: TextIO, config: ParseConfig | None = None) -> tuple[EventDataset, list[Reject]]:
    """Read events from a CSV stream.

    Rows that fail validation are collected as :class:`Reject` entries keyed
    by their file line number (the header is line 1).  Raises
    :class:`DataError` when the reject fraction exceeds the configured limit.
    """
    config = config or ParseConfig()
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"CSV header lacks required columns: {', '.join(missing)}")
    for optional, default in (("total_activities", 1), ("assets_dispatched", 0)):
        if optional not in header:
            warnings.warn(f"column {optional!r} absent; defaulting to {default}", stacklevel=2)

    span = None
    if config.time_span is not None:
        span = (to_month(config.time_span[0]), to_month(config.time_span[1]))

    events: list[DemandEvent] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    n_rows = 0
    for n_rows, row in enumerate(reader, start=1):
        line = n_rows + 1
        try:
            event = _parse_row(row)
        except (ValueError, TypeError) as exc:
            rejects.append(Reject(line, str(exc)))
            continue
        if event.id in seen:
            rejects.append(Reject(line, f"duplicate id {event.id}"))
            continue
        if span is not None and not span[0] <= event.month <= span[1]:
            rejects.append(Reject(line, "timestamp outside configured range"))
            continue
        seen.add(event.id)
        events.append(event)

    if n_rows and len(rejects) / n_rows > config.max_reject_fraction:
        raise DataError(
            f"{len(rejects)} of {n_rows} rows rejected, above the "
            f"{config.max_reject_fraction:.0%} limit (first: row {rejects[0].row}: {rejects[0].reason})"
        )
    provenance = {"source": config.source, "rows": n_rows, "accepted": len(events), "rejected": len(rejects)}
    if span is None and not events:
        raise DataError("no valid events and no configured time span")
    return EventDataset.from_events(events, span, provenance), rejects


def _field(row: dict, name: str) -> str:
    value = row.get(name)
    return "" if value is None else value.strip()


def _parse_row(row: dict) -> DemandEvent:
    if None in row:
        raise ValueError("too many fields")
    event_id = _field(row, "id")
    if not event_id:
        raise ValueError("missing id")
    lat_s, lon_s = _field(row, "lat"), _field(row, "lon")
    if not lat_s or not lon_s:
        raise ValueError("missing GPS coordinates")
    try:
        lat, lon = float(lat_s), float(lon_s)
    except ValueError:
        raise ValueError("unparseable GPS coordinates") from None
    if not (math.isfinite(lat) and math.isfinite(lon)) or not -90 <= lat <= 90 or not -180 <= lon <= 180:
        raise ValueError("GPS coordinates out of range")
    ts_s = _field(row, "timestamp")
    try:
        ts = parse_timestamp(ts_s)
    except ValueError:
        raise ValueError(f"bad timestamp {ts_s!r}") from None
    activities = _int_field(row, "total_activities", 1)
    assets = _int_field(row, "assets_dispatched", 0)
    group = _field(row, "group") or None
    return DemandEvent(event_id, ts, GeoPoint(lat, lon), activities, assets, group, _field(row, "category"))


def _int_field(row: dict, name: str, default: int) -> int:
    text = _field(row, name)
    if not text:
        return default
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"{name} is not an integer: {text!r}") from None


def write_events(ds: EventDataset, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in ds.events:
        writer.writerow([
            e.id, format_timestamp(e.timestamp), repr(e.location.lat_deg), repr(e.location.lon_deg),
            e.total_activities, e.assets_dispatched, e.group or "", e.category,
        ])


def write_rejects(rejects: Sequence[Reject], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("row", "reason"))
    for r in rejects:
        writer.writerow((r.row, r.reason))


def read_events_csv(path, config: ParseConfig | None = None) -> tuple[EventDataset, list[Reject]]:
    config = config or ParseConfig(source=str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_events(fh, config)


def events_from_string(text: str, **kwargs) -> tuple[EventDataset, list[Reject]]:
    return parse_events(io.StringIO(text), ParseConfig(**kwargs))


@dataclass(frozen=True)
class Box:
    """Closed lat/lon rectangle; longitudes are in a frame's unwrapped coordinates."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"degenerate box {self}")

    def contains(self, lat, ulon):
        return (lat >= self.lat_min) & (lat <= self.lat_max) & (ulon >= self.lon_min) & (ulon <= self.lon_max)

    @classmethod
    def from_seq(cls, seq) -> "Box":
        return cls(*map(float, seq))


@dataclass(frozen=True)
class FilterRules:
    exclude_categories: tuple[str, ...] = ()
    region: tuple[Box, ...] | None = None
    frame: LonFrame = LonFrame()


def filter_events(ds: EventDataset, rules: FilterRules) -> EventDataset:
    """Keep the events passing every rule; removal counts go to provenance."""
    keep = np.ones(len(ds), dtype=bool)
    removed = {}
    if rules.exclude_categories:
        excluded = set(rules.exclude_categories)
        by_cat = np.array([e.category in excluded for e in ds.events], dtype=bool)
        removed["category"] = int(by_cat.sum())
        keep &= ~by_cat
    if rules.region is not None:
        inside = np.zeros(len(ds), dtype=bool)
        if len(ds):
            ulon = rules.frame.unwrap(ds.lon)
            for box in rules.region:
                inside |= box.contains(ds.lat, ulon)
        out = ~inside & keep
        removed["region"] = int(out.sum())
        keep &= inside
    if len(ds) and not keep.any():
        warnings.warn("filter removed every event", stacklevel=2)
    prior = ds.provenance.get("filter_removed", {})
    merged = {k: prior.get(k, 0) + removed.get(k, 0) for k in sorted(set(prior) | set(removed))}
    return ds.replace([e for e, k in zip(ds.events, keep) if k], filter_removed=merged)


def split_by_date(ds: EventDataset, cutoff) -> tuple[EventDataset, EventDataset]:
    """Split into events before the cutoff month and events at or after it."""
    cutoff = to_month(cutoff)
    start, end = ds.time_span
    if not start < cutoff <= end:
        raise ValueError(f"cutoff {cutoff} must fall inside ({start}, {end}]")
    before = ds.months < cutoff if len(ds) else np.zeros(0, dtype=bool)
    train = ds.replace([e for e, b in zip(ds.events, before) if b], (start, cutoff - 1), split="train")
    test = ds.replace([e for e, b in zip(ds.events, before) if not b], (cutoff, end), split="test")
    if len(test) == 0:
        warnings.warn("no events at or after the cutoff; test set is empty", stacklevel=2)
    return train, test


@dataclass(frozen=True)
class MonthlySeries:
    zones: tuple[int, ...]
    months: np.ndarray
    counts: np.ndarray  # shape (zones, months)

    def __post_init__(self):
        if self.counts.shape != (len(self.zones), len(self.months)):
            raise ValueError("counts shape does not match zones x months")

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def monthly_counts(ds: EventDataset, p: "Partition", months=None) -> MonthlySeries:
    """Tabulate assigned events per zone and calendar month (zero-filled)."""
    from .partition import assign_many

    if months is None:
        months = ds.time_span
    if not isinstance(months, np.ndarray):
        months = month_range(*months)
    months = months.astype("datetime64[M]")
    n_zones = len(p.zones)
    counts = np.zeros((n_zones, len(months)), dtype=np.int64)
    if len(ds) == 0:
        return MonthlySeries(tuple(range(n_zones)), months, counts)
    col = (ds.months - months[0]).astype(int)
    bad = (col < 0) | (col >= len(months))
    if bad.any():
        ids = [ds.events[i].id for i in np.flatnonzero(bad)]
        raise DataError(f"events outside the month range: {', '.join(ids[:20])}")
    zone_ids, _ = assign_many(p, ds)
    np.add.at(counts, (zone_ids, col), 1)
    return MonthlySeries(tuple(range(n_zones)), months, counts)
