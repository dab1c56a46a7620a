"""Angular free-space priors and search-grid masking.

A prior labels every azimuth as free (searched) or obstructed (skipped).
It is stored as a normalized list of half-open degree intervals that
partition [0, 360), either written by hand from expert knowledge or
derived from per-heading semantic-segmentation statistics.
"""

from __future__ import annotations

import bisect
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Semantic classes counted as walkable/free space, with placeholder
# fraction thresholds; tune per deployment.
DEFAULT_FREE_CLASSES: dict[str, float] = {
    "floor": 0.2,
    "desk": 0.1,
    "table": 0.1,
    "chair": 0.1,
    "tv": 0.05,
}
DEFAULT_FRUSTUM_DEG = 10.0

# Interval endpoints are snapped to this many decimals so that grid
# angles converted between radians and degrees hit boundaries exactly.
_SNAP_DECIMALS = 9


def _norm_deg(angle: float) -> float:
    """Map an angle to [0, 360) with boundary snapping."""
    a = round(float(angle) % 360.0, _SNAP_DECIMALS)
    return 0.0 if a >= 360.0 else a


@dataclass(frozen=True)
class PriorMap:
    """Total map from azimuth (degrees) to free (1) / obstructed (0).

    intervals are half-open [start, end) triples (start_deg, end_deg, z),
    sorted, non-overlapping, jointly covering [0, 360) exactly.  Build via
    :func:`expert_prior`, :func:`prior_from_segmentation`,
    :meth:`PriorMap.all_free` or :func:`load_prior`.
    """

    intervals: tuple[tuple[float, float, int], ...]
    source: str = "none"

    def __post_init__(self):
        ivals = tuple(
            (round(float(s), _SNAP_DECIMALS), round(float(e), _SNAP_DECIMALS), int(z))
            for s, e, z in self.intervals
        )
        if not ivals:
            raise ValueError("prior map needs at least one interval")
        if ivals[0][0] != 0.0 or ivals[-1][1] != 360.0:
            raise ValueError("intervals must cover [0, 360) exactly")
        for (s, e, z) in ivals:
            if not 0.0 <= s < e <= 360.0:
                raise ValueError(f"bad interval [{s}, {e})")
            if z not in (0, 1):
                raise ValueError(f"z must be 0 or 1, got {z}")
        for (_, e_prev, _), (s_next, _, _) in zip(ivals, ivals[1:]):
            if e_prev != s_next:
                raise ValueError(
                    f"intervals must tile [0, 360); gap or overlap at {e_prev}"
                )
        object.__setattr__(self, "intervals", ivals)

    @classmethod
    def all_free(cls, source: str = "none") -> "PriorMap":
        return cls(((0.0, 360.0, 1),), source)

    def is_free(self, azimuth_deg: float) -> bool:
        """Z query: True when the azimuth falls in a free interval."""
        a = _norm_deg(azimuth_deg)
        starts = [iv[0] for iv in self.intervals]
        idx = bisect.bisect_right(starts, a) - 1
        return self.intervals[idx][2] == 1

    def free_arcs(self) -> list[tuple[float, float]]:
        return [(s, e) for s, e, z in self.intervals if z == 1]

    def free_fraction(self) -> float:
        return sum(e - s for s, e, z in self.intervals if z == 1) / 360.0

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "intervals": [
                {"start_deg": s, "end_deg": e, "z": z} for s, e, z in self.intervals
            ],
        }


def _normalize(marks: Iterable[tuple[float, float]], source: str) -> PriorMap:
    """Build a normalized PriorMap from free arcs (degrees, may wrap)."""
    # Split wrap-around arcs at 0/360, then sweep boundary points.
    pieces: list[tuple[float, float]] = []
    for start, end in marks:
        if float(start) == float(end):
            raise ValueError(f"degenerate arc at {start}..{end}")
        s, e = _norm_deg(start), _norm_deg(end)
        if s == e:
            # start and end coincide modulo 360: the arc is the full circle
            pieces.append((0.0, 360.0))
        elif s < e:
            pieces.append((s, e))
        else:
            pieces.append((s, 360.0))
            if e > 0.0:
                pieces.append((0.0, e))
    bounds = sorted({0.0, 360.0, *(p for arc in pieces for p in arc)})
    intervals: list[tuple[float, float, int]] = []
    for lo, hi in zip(bounds, bounds[1:]):
        z = int(any(s <= lo and hi <= e for s, e in pieces))
        if intervals and intervals[-1][2] == z:
            intervals[-1] = (intervals[-1][0], hi, z)
        else:
            intervals.append((lo, hi, z))
    return PriorMap(tuple(intervals), source)


def expert_prior(free_arcs_deg: Sequence[tuple[float, float]]) -> PriorMap:
    """Prior from hand-listed free arcs; everything else is obstructed.

    Arcs are half-open [start, end) in degrees and may wrap through 0
    (start > end).  A zero-length arc (start == end) is rejected.
    """
    if not free_arcs_deg:
        raise ValueError("expert prior needs at least one free arc")
    return _normalize(free_arcs_deg, source="expert")


@dataclass(frozen=True)
class SegmentationFrame:
    """Class-fraction statistics for one camera heading.

    heading_deg is the camera heading relative to array zero; the frame
    covers the frustum [heading - frustum/2, heading + frustum/2).
    """

    heading_deg: float
    class_fractions: Mapping[str, float] = field(default_factory=dict)
    frustum_deg: float = DEFAULT_FRUSTUM_DEG

    def __post_init__(self):
        if not 0.0 <= self.heading_deg < 360.0:
            raise ValueError("heading must lie in [0, 360)")
        if self.frustum_deg <= 0:
            raise ValueError("frustum width must be positive")
        total = 0.0
        for name, frac in self.class_fractions.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"fraction for {name!r} outside [0, 1]")
            total += frac
        if total > 1.0 + 1e-6:
            raise ValueError("class fractions sum to more than 1")
        object.__setattr__(self, "class_fractions", dict(self.class_fractions))


def frame_is_free(
    frame: SegmentationFrame,
    thresholds: Mapping[str, float] | None = None,
    rule: str = "any",
) -> bool:
    """Threshold test deciding whether one heading shows free space.

    rule 'any': some configured class reaches its threshold (default).
    rule 'all': every configured class reaches its threshold.
    rule 'sum': the summed fraction over configured classes reaches the
    summed thresholds.  Comparisons are inclusive (>=).
    """
    th = DEFAULT_FREE_CLASSES if thresholds is None else thresholds
    if not th:
        raise ValueError("no free-space classes configured")
    hits = [frame.class_fractions.get(name, 0.0) >= level for name, level in th.items()]
    if rule == "any":
        return any(hits)
    if rule == "all":
        return all(hits)
    if rule == "sum":
        total = sum(frame.class_fractions.get(name, 0.0) for name in th)
        return total >= sum(th.values())
    raise ValueError(f"unknown free rule {rule!r}")


def _coverage_gaps(frames: Sequence[SegmentationFrame]) -> list[float]:
    headings = sorted(f.heading_deg for f in frames)
    widths = {f.heading_deg: f.frustum_deg for f in frames}
    gaps = []
    for a, b in zip(headings, headings[1:] + [headings[0] + 360.0]):
        spacing = b - a
        reach = widths[a % 360.0] / 2.0 + widths[b % 360.0] / 2.0
        if spacing - reach > 1e-9:
            gaps.append(spacing - reach)
    return gaps


def prior_from_segmentation(
    frames: Sequence[SegmentationFrame],
    thresholds: Mapping[str, float] | None = None,
    rule: str = "any",
    on_coverage_gap: str = "warn",
) -> PriorMap:
    """Visual prior from per-heading class-fraction statistics.

    Each frame passing :func:`frame_is_free` contributes its frustum arc
    as free space; the union of contributions is free, the remainder
    obstructed.  Headings whose frusta leave uncovered gaps trigger a
    warning (or an error with on_coverage_gap='error').
    """
    if not frames:
        raise ValueError("no segmentation frames given")
    if on_coverage_gap not in ("warn", "error", "ignore"):
        raise ValueError("on_coverage_gap must be warn, error or ignore")
    gaps = _coverage_gaps(frames)
    if gaps and on_coverage_gap != "ignore":
        msg = (
            f"{len(gaps)} angular gap(s) not covered by any frustum "
            f"(largest {max(gaps):.1f} deg)"
        )
        if on_coverage_gap == "error":
            raise ValueError(msg)
        warnings.warn(msg, stacklevel=2)
    arcs = [
        (f.heading_deg - f.frustum_deg / 2.0, f.heading_deg + f.frustum_deg / 2.0)
        for f in frames
        if frame_is_free(f, thresholds, rule)
    ]
    if not arcs:
        return PriorMap(((0.0, 360.0, 0),), source="visual")
    prior = _normalize(arcs, source="visual")
    return prior


def mask_grid(grid, prior: PriorMap | None):
    """Restrict a candidate grid to angles the prior marks free.

    Ordering is preserved.  A None prior is the identity.  Raises when
    every candidate is obstructed; the caller decides the fallback.
    """
    if prior is None:
        return grid
    keep = np.fromiter(
        (prior.is_free(a) for a in np.degrees(grid.angles_rad)),
        dtype=bool,
        count=len(grid.angles_rad),
    )
    if not keep.any():
        raise ValueError("prior obstructs every candidate angle")
    return grid.restrict(keep)


def save_prior(path, prior: PriorMap) -> None:
    with open(path, "w") as fh:
        json.dump(prior.to_dict(), fh, indent=2)
        fh.write("\n")


def load_prior(path) -> PriorMap:
    """Read a prior JSON file; validates partition and z values."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        intervals = tuple(
            (float(iv["start_deg"]), float(iv["end_deg"]), int(iv["z"]))
            for iv in doc["intervals"]
        )
        source = str(doc.get("source", "none"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed prior file {path}: {exc}") from exc
    sorted_ivals = tuple(sorted(intervals, key=lambda iv: iv[0]))
    try:
        return PriorMap(sorted_ivals, source)
    except ValueError as exc:
        raise ValueError(f"invalid prior file {path}: {exc}") from exc


def load_segmentation_frames(path) -> list[SegmentationFrame]:
    """Read segmentation statistics: a JSON list of heading records."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError(f"segmentation file {path} must hold a JSON list")
    frames = []
    for rec in doc:
        try:
            frames.append(
                SegmentationFrame(
                    heading_deg=float(rec["heading_deg"]),
                    class_fractions={
                        str(k): float(v) for k, v in rec["fractions"].items()
                    },
                    frustum_deg=float(rec.get("frustum_deg", DEFAULT_FRUSTUM_DEG)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed segmentation record in {path}: {exc}") from exc
    return frames


def load_thresholds(path) -> tuple[dict[str, float], str]:
    """Read a threshold config: {"classes": {...}, "rule": "any"}."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        classes = {str(k): float(v) for k, v in doc["classes"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed threshold file {path}: {exc}") from exc
    rule = str(doc.get("rule", "any"))
    return classes, rule
