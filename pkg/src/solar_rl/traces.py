"""Light-intensity traces: CSV ingest, synthetic placements, fleet augmentation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY
DEFAULT_RESOLUTION = 60
MAX_GAP_SECONDS = 3600

# Monday 2018-08-06 00:00 UTC.
DEFAULT_START = 1533513600


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    pass


class TraceGapError(TraceError):
    pass


class TraceOrderError(TraceError):
    pass


class TraceRangeError(IndexError):
    pass


@dataclass(frozen=True, eq=False)
class LightTrace:
    """Uniformly sampled illuminance for one node placement.

    ``lux[i]`` is the reading at ``start + i * resolution`` (UTC seconds).
    The array is made read-only on construction so a trace can be shared
    between simulations.
    """

    node_id: str
    start: int
    resolution: int
    lux: np.ndarray
    utc_offset_hours: float = 0.0

    def __post_init__(self):
        lux = np.array(self.lux, dtype=np.float64)
        if lux.ndim != 1:
            raise TraceError("lux must be one-dimensional")
        if self.resolution <= 0 or SECONDS_PER_DAY % self.resolution:
            raise TraceError(f"resolution {self.resolution} s does not divide a day")
        if not np.all(np.isfinite(lux)) or np.any(lux < 0):
            raise TraceError(f"{self.node_id}: illuminance must be finite and >= 0")
        if lux.size == 0 or lux.size % self.samples_per_day:
            raise TraceError(f"{self.node_id}: trace must cover whole days")
        lux.setflags(write=False)
        object.__setattr__(self, "lux", lux)

    @property
    def samples_per_day(self) -> int:
        return SECONDS_PER_DAY // self.resolution

    @property
    def days(self) -> int:
        return self.lux.size // self.samples_per_day

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + self.resolution * np.arange(self.lux.size, dtype=np.int64)

    @property
    def end(self) -> int:
        return self.start + self.resolution * self.lux.size

    def crop_days(self, first: int, count: int) -> "LightTrace":
        if first < 0 or count < 1 or first + count > self.days:
            raise TraceRangeError(f"days [{first}, {first + count}) outside trace of {self.days} days")
        spd = self.samples_per_day
        return replace(
            self,
            start=self.start + first * SECONDS_PER_DAY,
            lux=self.lux[first * spd:(first + count) * spd],
        )

    def __eq__(self, other):
        if not isinstance(other, LightTrace):
            return NotImplemented
        return (
            self.node_id == other.node_id
            and self.start == other.start
            and self.resolution == other.resolution
            and self.utc_offset_hours == other.utc_offset_hours
            and np.array_equal(self.lux, other.lux)
        )

    __hash__ = None


# --------------------------------------------------------------------------
# CSV ingest


def _parse_timestamp(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def format_timestamp(seconds: float) -> str:
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_trace(path, resolution: int = DEFAULT_RESOLUTION, node_id: str | None = None,
               utc_offset_hours: float = 0.0) -> LightTrace:
    """Read a ``timestamp,lux`` CSV and resample it onto a uniform grid.

    Samples are mean-aggregated into ``resolution``-second bins; empty bins
    (gaps shorter than an hour) are linearly interpolated. The result is
    padded with its last value or truncated to the nearest whole day.
    """
    path = Path(path)
    times, values = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "lux"]:
            raise TraceParseError(f"{path}: expected header 'timestamp,lux', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise TraceParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                t = _parse_timestamp(row[0])
                lux = float(row[1])
            except ValueError as exc:
                raise TraceParseError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(lux) or lux < 0:
                raise TraceParseError(f"{path}:{lineno}: lux must be a non-negative number")
            if times and t <= times[-1]:
                raise TraceOrderError(f"{path}:{lineno}: timestamp not after previous row")
            times.append(t)
            values.append(lux)
    if not times:
        raise TraceParseError(f"{path}: no data rows")

    t = np.asarray(times)
    v = np.asarray(values)
    gaps = np.diff(t)
    if gaps.size and gaps.max() >= MAX_GAP_SECONDS:
        i = int(np.argmax(gaps))
        raise TraceGapError(f"{path}: {gaps[i]:.0f} s gap after {format_timestamp(t[i])}")

    start = int(t[0] // resolution) * resolution
    bins = ((t - start) // resolution).astype(np.int64)
    nbins = int(bins[-1]) + 1
    sums = np.bincount(bins, weights=v, minlength=nbins)
    counts = np.bincount(bins, minlength=nbins)
    filled = counts > 0
    grid = np.empty(nbins)
    grid[filled] = sums[filled] / counts[filled]
    if not filled.all():
        idx = np.arange(nbins)
        grid[~filled] = np.interp(idx[~filled], idx[filled], grid[filled])

    spd = SECONDS_PER_DAY // resolution
    days = max(1, int(round(nbins / spd)))
    want = days * spd
    if nbins < want:
        grid = np.concatenate([grid, np.full(want - nbins, grid[-1])])
    else:
        grid = grid[:want]
    return LightTrace(node_id or path.stem, start, resolution, grid, utc_offset_hours)


def write_trace(trace: LightTrace, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("timestamp,lux\n")
        for ts, lux in zip(trace.timestamps.tolist(), trace.lux.tolist()):
            fh.write(f"{format_timestamp(ts)},{lux:.6g}\n")


# --------------------------------------------------------------------------
# Calendar and slot access


def is_weekend(timestamp: float, utc_offset_hours: float = 0.0) -> bool:
    local = datetime.fromtimestamp(timestamp, tz=timezone.utc) + timedelta(hours=utc_offset_hours)
    return local.weekday() >= 5


def weekend_mask(timestamps: np.ndarray, utc_offset_hours: float = 0.0) -> np.ndarray:
    """Vectorised :func:`is_weekend`."""
    local = np.asarray(timestamps, dtype=np.float64) + utc_offset_hours * 3600.0
    # 1970-01-01 was a Thursday (weekday 3).
    weekday = (np.floor(local / SECONDS_PER_DAY).astype(np.int64) + 3) % 7
    return weekday >= 5


def slot_lux(trace: LightTrace, slot_index: int, slot_seconds: int = 900) -> float:
    per_slot = _samples_per_slot(trace, slot_seconds)
    n_slots = trace.lux.size // per_slot
    if not 0 <= slot_index < n_slots:
        raise TraceRangeError(f"slot {slot_index} outside trace of {n_slots} slots")
    lo = slot_index * per_slot
    return float(trace.lux[lo:lo + per_slot].mean())


def slot_series(trace: LightTrace, slot_seconds: int = 900) -> np.ndarray:
    """Mean lux of every slot in the trace."""
    per_slot = _samples_per_slot(trace, slot_seconds)
    return trace.lux.reshape(-1, per_slot).mean(axis=1)


def slot_weekend(trace: LightTrace, slot_seconds: int = 900) -> np.ndarray:
    n = trace.lux.size * trace.resolution // slot_seconds
    starts = trace.start + slot_seconds * np.arange(n, dtype=np.int64)
    return weekend_mask(starts, trace.utc_offset_hours)


def _samples_per_slot(trace: LightTrace, slot_seconds: int) -> int:
    if slot_seconds % trace.resolution or SECONDS_PER_DAY % slot_seconds:
        raise TraceError(f"slot of {slot_seconds} s incompatible with resolution {trace.resolution} s")
    return slot_seconds // trace.resolution


def weekly_mean_lux(trace: LightTrace, week_index: int = 0) -> float:
    per_week = SECONDS_PER_WEEK // trace.resolution
    lo = week_index * per_week
    if week_index < 0 or lo + per_week > trace.lux.size:
        raise TraceRangeError(f"week {week_index} not covered by {trace.days}-day trace")
    return float(trace.lux[lo:lo + per_week].mean())


# --------------------------------------------------------------------------
# Synthetic placements


class Placement(str, Enum):
    WINDOW = "Window"
    DOOR = "Door"
    MIDDLE_OFFICE = "MiddleOffice"
    CONFERENCE_ROOM = "ConferenceRoom"
    STAIR_ACCESS = "StairAccess"


@dataclass(frozen=True)
class PlacementArchetype:
    """Shape parameters for one synthetic placement.

    Hours are local. ``daylight_lux`` scales a sunrise-to-sunset half sine,
    ``peak_lux`` is the artificial light level while occupied, and
    ``burst_rate`` is the expected number of meetings per weekday (used by
    the conference room only).
    """

    kind: Placement
    peak_lux: float
    daylight_lux: float = 0.0
    sunrise: float = 7.0
    sunset: float = 19.0
    active_start: float = 8.0
    active_end: float = 18.0
    arrival_jitter: float = 1.0
    burst_rate: float = 0.0
    burst_minutes: tuple[float, float] = (30.0, 90.0)
    weekend_factor: float = 1.0
    cloud_min: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Placement(self.kind))
        if self.peak_lux <= 0:
            raise ValueError("peak_lux must be > 0")
        for name in ("sunrise", "sunset", "active_start", "active_end"):
            hour = getattr(self, name)
            if not 0 <= hour < 24:
                raise ValueError(f"{name}={hour} outside [0, 24)")
        if self.sunrise >= self.sunset or self.active_start >= self.active_end:
            raise ValueError("window start must precede its end")
        if not 0 <= self.cloud_min <= 1 or self.weekend_factor < 0 or self.burst_rate < 0:
            raise ValueError("invalid modulation parameters")


DEFAULT_ARCHETYPES = {
    Placement.WINDOW: PlacementArchetype(
        Placement.WINDOW, peak_lux=1800.0, daylight_lux=1800.0, sunrise=7.0, sunset=19.0,
        cloud_min=0.6,
    ),
    Placement.DOOR: PlacementArchetype(
        Placement.DOOR, peak_lux=250.0, daylight_lux=450.0, sunrise=7.5, sunset=18.5,
        active_start=8.0, active_end=18.0, weekend_factor=1.0, cloud_min=0.7,
    ),
    Placement.MIDDLE_OFFICE: PlacementArchetype(
        Placement.MIDDLE_OFFICE, peak_lux=700.0, active_start=8.0, active_end=18.0,
        arrival_jitter=1.0, weekend_factor=0.0,
    ),
    Placement.CONFERENCE_ROOM: PlacementArchetype(
        Placement.CONFERENCE_ROOM, peak_lux=1000.0, active_start=9.0, active_end=17.0,
        burst_rate=4.0, burst_minutes=(30.0, 120.0), weekend_factor=0.0,
    ),
    Placement.STAIR_ACCESS: PlacementArchetype(Placement.STAIR_ACCESS, peak_lux=400.0),
}


def archetype(kind, **overrides) -> PlacementArchetype:
    base = DEFAULT_ARCHETYPES[Placement(kind)]
    return replace(base, **overrides) if overrides else base


def generate_synthetic(arch: PlacementArchetype, days: int, seed: int, *,
                       start: int = DEFAULT_START, resolution: int = DEFAULT_RESOLUTION,
                       utc_offset_hours: float = 0.0, node_id: str | None = None) -> LightTrace:
    """Deterministic synthetic trace for one placement.

    ``start`` should be a local midnight; day boundaries and the weekend
    flag are taken in local time.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng(seed)
    spd = SECONDS_PER_DAY // resolution
    hours = (np.arange(spd) + 0.5) * resolution / 3600.0
    local_start = start + utc_offset_hours * 3600.0
    out = np.zeros((days, spd))

    for d in range(days):
        weekday = int((local_start // SECONDS_PER_DAY + d + 3) % 7)
        weekend = weekday >= 5
        out[d] = _day_profile(arch, hours, weekend, rng)
    return LightTrace(node_id or arch.kind.value, start, resolution, out.ravel(), utc_offset_hours)


def _daylight(arch, hours, rng):
    if arch.daylight_lux <= 0:
        return np.zeros_like(hours)
    cloud = rng.uniform(arch.cloud_min, 1.0)
    phase = (hours - arch.sunrise) / (arch.sunset - arch.sunrise)
    bell = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    return arch.daylight_lux * cloud * bell


def _day_profile(arch: PlacementArchetype, hours, weekend, rng) -> np.ndarray:
    kind = arch.kind
    if kind is Placement.STAIR_ACCESS:
        return np.full_like(hours, arch.peak_lux)
    if kind is Placement.WINDOW:
        light = _daylight(arch, hours, rng)
        return light * (arch.weekend_factor if weekend else 1.0)

    occupied = np.zeros_like(hours)
    occupancy = arch.weekend_factor if weekend else 1.0
    if kind is Placement.CONFERENCE_ROOM:
        n = rng.poisson(arch.burst_rate * occupancy) if occupancy > 0 else 0
        for _ in range(n):
            begin = rng.uniform(arch.active_start, arch.active_end)
            length = rng.uniform(*arch.burst_minutes) / 60.0
            occupied[(hours >= begin) & (hours < begin + length)] = arch.peak_lux
        return occupied

    if occupancy > 0:
        arrive = arch.active_start + rng.uniform(-arch.arrival_jitter, arch.arrival_jitter)
        leave = arch.active_end + rng.uniform(-arch.arrival_jitter, arch.arrival_jitter)
        occupied[(hours >= arrive) & (hours < leave)] = arch.peak_lux * occupancy
    if kind is Placement.DOOR:
        return occupied + _daylight(arch, hours, rng)
    return occupied


# --------------------------------------------------------------------------
# Fleet augmentation


@dataclass(frozen=True)
class Augmentation:
    scale: float
    shift_steps: int


def draw_augmentations(count: int, seed: int, resolution: int = DEFAULT_RESOLUTION,
                       scale_range: float = 0.3, shift_hours: float = 3.0) -> list[Augmentation]:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    scales = rng.uniform(1.0 - scale_range, 1.0 + scale_range, size=count)
    shifts = rng.uniform(-shift_hours * 3600.0, shift_hours * 3600.0, size=count)
    steps = np.rint(shifts / resolution).astype(np.int64)
    return [Augmentation(float(s), int(k)) for s, k in zip(scales, steps)]


def apply_augmentation(base: LightTrace, aug: Augmentation, node_id: str | None = None) -> LightTrace:
    """Scale intensity and circularly shift the trace in time.

    A positive shift delays the light pattern (events happen later).
    """
    lux = np.roll(base.lux, aug.shift_steps) * aug.scale
    return replace(base, node_id=node_id or base.node_id, lux=lux)


def augment_trace(base: LightTrace, count: int, seed: int, **kw) -> list[LightTrace]:
    augs = draw_augmentations(count, seed, base.resolution, **kw)
    return [apply_augmentation(base, a, f"{base.node_id}-{i:03d}") for i, a in enumerate(augs)]
