"""Shared domain types and annotation ingestion.

Annotations come in two accepted layouts, both UTF-8 JSON:

* ``native_json``: an array of objects
  ``{image_id, image_path, category, count, points?, width, height}``.
* ``points_json``: an object keyed by image_id whose values carry a
  ``points`` list (count is derived as its length) plus ``category``,
  ``width``, ``height`` and an optional ``image_path``.

Unknown fields are ignored with a warning.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DuplicateImageId,
    MalformedAnnotation,
    UncoveredCount,
    UnknownCategory,
)

logger = logging.getLogger(__name__)

NATIVE_FIELDS = {"image_id", "image_path", "category", "count", "points", "width", "height"}
POINTS_FIELDS = {"image_path", "category", "points", "width", "height"}


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class AnnotationFormat(str, enum.Enum):
    NATIVE_JSON = "native_json"
    POINTS_JSON = "points_json"


@dataclass(frozen=True)
class CountRange:
    """Inclusive integer count interval; ``upper=None`` means unbounded above."""

    lower: int
    upper: int | None

    def __post_init__(self) -> None:
        if self.lower < 0:
            raise ValueError(f"lower bound must be >= 0, got {self.lower}")
        if self.upper is not None and self.lower > self.upper:
            raise ValueError(f"invalid range [{self.lower}, {self.upper}]")

    def contains(self, count: int) -> bool:
        if count < self.lower:
            return False
        return self.upper is None or count <= self.upper

    def width(self) -> int:
        """Upper minus lower; only defined for bounded ranges."""
        if self.upper is None:
            raise ValueError("unbounded range has no width")
        return self.upper - self.lower

    def __str__(self) -> str:
        upper = "inf" if self.upper is None else str(self.upper)
        return f"[{self.lower},{upper}]"


class BandName(str, enum.Enum):
    SPARSE = "sparse"
    MEDIUM = "medium"
    DENSE = "dense"
    EXTREMELY_DENSE = "extremely_dense"


@dataclass(frozen=True)
class DensityBand:
    """A named ground-truth count bucket used for breakdown reporting."""

    name: BandName
    bounds: CountRange


#: Default banding: sparse up to 20 objects, dense above 100, extremely
#: dense above 300; medium fills the gap so every count maps to one band.
DEFAULT_BANDING: tuple[DensityBand, ...] = (
    DensityBand(BandName.SPARSE, CountRange(0, 20)),
    DensityBand(BandName.MEDIUM, CountRange(21, 100)),
    DensityBand(BandName.DENSE, CountRange(101, 300)),
    DensityBand(BandName.EXTREMELY_DENSE, CountRange(301, None)),
)


@dataclass(frozen=True)
class ImageRecord:
    """One annotated image with its image-level object count."""

    image_id: str
    image_path: str
    category: str
    count: int
    width: int
    height: int
    points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if not self.category:
            raise ValueError("category must be non-empty")
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"dimensions must be positive, got {self.width}x{self.height}")
        if self.points is not None and len(self.points) != self.count:
            raise ValueError(
                f"count {self.count} disagrees with {len(self.points)} points"
            )


@dataclass(frozen=True)
class AnnotationSet:
    """All records of one split; image_id is unique within the set."""

    records: tuple[ImageRecord, ...]
    split: Split = Split.TRAIN
    dataset_name: str = ""
    _by_id: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        by_id: dict[str, ImageRecord] = {}
        for rec in self.records:
            if rec.image_id in by_id:
                raise DuplicateImageId(f"image_id {rec.image_id!r} appears twice")
            by_id[rec.image_id] = rec
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, image_id: str) -> ImageRecord | None:
        return self._by_id.get(image_id)

    def categories(self) -> list[str]:
        return sorted({rec.category for rec in self.records})

    def records_of(self, category: str) -> list[ImageRecord]:
        return [rec for rec in self.records if rec.category == category]


def _require(payload: dict, key: str, kind, index: int):
    if key not in payload:
        raise MalformedAnnotation(f"missing field {key!r}", index)
    value = payload[key]
    if kind is int and isinstance(value, bool):
        raise MalformedAnnotation(f"field {key!r} must be {kind.__name__}", index)
    if not isinstance(value, kind):
        raise MalformedAnnotation(
            f"field {key!r} must be {kind.__name__}, got {type(value).__name__}", index
        )
    return value


def _parse_points(raw, index: int) -> tuple[tuple[float, float], ...]:
    if not isinstance(raw, list):
        raise MalformedAnnotation("field 'points' must be a list", index)
    points = []
    for pt in raw:
        if not isinstance(pt, (list, tuple)) or len(pt) != 2:
            raise MalformedAnnotation("each point must be an [x, y] pair", index)
        x, y = pt
        if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
            raise MalformedAnnotation("point coordinates must be numbers", index)
        points.append((float(x), float(y)))
    return tuple(points)


def _warn_unknown(payload: dict, known: set[str], seen: set[str]) -> None:
    for key in payload:
        if key not in known and key not in seen:
            seen.add(key)
            logger.warning("ignoring unknown annotation field %r", key)


def _native_record(payload: dict, index: int, seen_unknown: set[str]) -> ImageRecord:
    if not isinstance(payload, dict):
        raise MalformedAnnotation("record must be an object", index)
    _warn_unknown(payload, NATIVE_FIELDS, seen_unknown)
    points = None
    if payload.get("points") is not None:
        points = _parse_points(payload["points"], index)
    count = (
        len(points)
        if points is not None and "count" not in payload
        else _require(payload, "count", int, index)
    )
    try:
        return ImageRecord(
            image_id=_require(payload, "image_id", str, index),
            image_path=_require(payload, "image_path", str, index),
            category=_require(payload, "category", str, index),
            count=count,
            width=_require(payload, "width", int, index),
            height=_require(payload, "height", int, index),
            points=points,
        )
    except ValueError as exc:
        raise MalformedAnnotation(str(exc), index) from exc


def _points_record(image_id: str, payload: dict, index: int, seen_unknown: set[str]) -> ImageRecord:
    if not isinstance(payload, dict):
        raise MalformedAnnotation("record must be an object", index)
    _warn_unknown(payload, POINTS_FIELDS, seen_unknown)
    if "points" not in payload:
        raise MalformedAnnotation("missing field 'points'", index)
    points = _parse_points(payload["points"], index)
    try:
        return ImageRecord(
            image_id=image_id,
            image_path=payload.get("image_path", image_id),
            category=_require(payload, "category", str, index),
            count=len(points),
            width=_require(payload, "width", int, index),
            height=_require(payload, "height", int, index),
            points=points,
        )
    except ValueError as exc:
        raise MalformedAnnotation(str(exc), index) from exc


def load_annotations(
    path: str | Path,
    format: AnnotationFormat | str = AnnotationFormat.NATIVE_JSON,
    split: Split | str = Split.TRAIN,
    dataset_name: str = "",
) -> AnnotationSet:
    """Load an annotation file into an AnnotationSet.

    ``points_json`` records derive their count from the number of points.
    Raises MalformedAnnotation (with the record index) on schema problems
    and DuplicateImageId when two records share an id.
    """
    format = AnnotationFormat(format)
    split = Split(split)
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedAnnotation(f"{path} is not valid JSON: {exc}") from exc

    seen_unknown: set[str] = set()
    records: list[ImageRecord] = []
    if format is AnnotationFormat.NATIVE_JSON:
        if not isinstance(data, list):
            raise MalformedAnnotation("native_json file must be a JSON array")
        for index, payload in enumerate(data):
            records.append(_native_record(payload, index, seen_unknown))
    else:
        if not isinstance(data, dict):
            raise MalformedAnnotation("points_json file must be a JSON object")
        for index, (image_id, payload) in enumerate(data.items()):
            records.append(_points_record(image_id, payload, index, seen_unknown))

    name = dataset_name or path.stem
    return AnnotationSet(records=tuple(records), split=split, dataset_name=name)


def annotation_to_dict(rec: ImageRecord) -> dict:
    """Normalized native_json representation of one record."""
    out: dict = {
        "image_id": rec.image_id,
        "image_path": rec.image_path,
        "category": rec.category,
        "count": rec.count,
        "width": rec.width,
        "height": rec.height,
    }
    if rec.points is not None:
        out["points"] = [[x, y] for x, y in rec.points]
    return out


def save_annotations(annotations: AnnotationSet, path: str | Path) -> None:
    """Serialize to the normalized native_json layout."""
    payload = [annotation_to_dict(rec) for rec in annotations.records]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def band_of(count: int, scheme: tuple[DensityBand, ...] = DEFAULT_BANDING) -> DensityBand:
    """Return the unique band of the scheme containing ``count``."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    for band in scheme:
        if band.bounds.contains(count):
            return band
    raise UncoveredCount(f"no band covers count {count}")


def category_count_extrema(annotations: AnnotationSet, category: str) -> CountRange:
    """Min/max count over all records of one category."""
    counts = [rec.count for rec in annotations.records if rec.category == category]
    if not counts:
        raise UnknownCategory(f"no records for category {category!r}")
    return CountRange(min(counts), max(counts))
