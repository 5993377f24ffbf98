import json

import pytest

from countforge.core import AnnotationSet, ImageRecord, Split


def record(image_id, category="oranges", count=10, width=640, height=480, **kwargs):
    return ImageRecord(
        image_id=image_id,
        image_path=kwargs.pop("image_path", f"{image_id}.jpg"),
        category=category,
        count=count,
        width=width,
        height=height,
        **kwargs,
    )


@pytest.fixture
def tiny_set():
    return AnnotationSet(
        records=(
            record("a1", "apples", 3),
            record("a2", "apples", 50),
            record("a3", "apples", 403),
            record("o1", "oranges", 7),
            record("o2", "oranges", 24),
            record("c1", "cars", 12),
        ),
        split=Split.TRAIN,
        dataset_name="tiny",
    )


@pytest.fixture
def spread_set():
    """One category whose counts land in all four quartile groups."""
    counts = [3, 8, 15, 110, 120, 150, 210, 230, 260, 330, 360, 403]
    records = tuple(
        record(f"s{i:02d}", "bottles", c) for i, c in enumerate(counts)
    )
    return AnnotationSet(records=records, split=Split.TRAIN, dataset_name="spread")


@pytest.fixture
def native_annotation_file(tmp_path):
    payload = [
        {
            "image_id": "img_001",
            "image_path": "img_001.jpg",
            "category": "oranges",
            "count": 24,
            "width": 640,
            "height": 480,
        },
        {
            "image_id": "img_002",
            "image_path": "img_002.jpg",
            "category": "oranges",
            "count": 7,
            "width": 640,
            "height": 480,
        },
        {
            "image_id": "img_003",
            "image_path": "img_003.jpg",
            "category": "cars",
            "count": 120,
            "width": 1000,
            "height": 750,
        },
    ]
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path
