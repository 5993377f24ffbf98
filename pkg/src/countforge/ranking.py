"""Compare-and-rank training set construction.

A ranking sample is a small set of images with pairwise distinct object
counts, presented in shuffled order; the target answer lists the presented
indices back in ascending-count order. Count-stratified sampling draws one
image per count interval of a category so sparse and dense scenes are both
covered; the other modes exist as ablation variants (uniform in-category
sampling, cross-category pools, semantic-group pools, and the
self-contained central-crop sets where the ordering proxy is retained
area rather than an annotated count).
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AnnotationSet, ImageRecord, category_count_extrema
from .errors import DegenerateCrop, EmptyCategory, InsufficientDiversity, UnknownCategory
from .imageops import TileSpec, central_crop
from .templates import TemplateKind, render

#: Category token used in ranking questions when the pool mixes categories.
MIXED_POOL_OBJ = "objects"

DEFAULT_SCRCO_FRACTIONS = (1.0, 0.75, 0.5, 0.25)

MAX_RESAMPLE_ATTEMPTS = 32


class CrcoMode(str, enum.Enum):
    STRATIFIED = "stratified"
    RANDOM = "random"
    CROSS_CATEGORY = "cross_category"
    SEMI_CROSS = "semi_cross"
    SCRCO = "scrco"


@dataclass(frozen=True)
class CrcoConfig:
    k: int = 4
    mode: CrcoMode = CrcoMode.STRATIFIED
    grouping_file: str | None = None
    sets_per_category: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"set size k must be >= 2, got {self.k}")
        if self.sets_per_category < 1:
            raise ValueError("sets_per_category must be >= 1")
        if CrcoMode(self.mode) is CrcoMode.SEMI_CROSS and not self.grouping_file:
            raise ValueError("semi_cross mode requires a grouping file")


@dataclass(frozen=True)
class RankingSet:
    """One ranking sample.

    ``members`` is the sampled set in ascending-count order;
    ``permutation`` holds, per presented position, the 1-based index of
    the member shown there; ``answer`` lists presented positions in the
    order that restores ascending counts.
    """

    members: tuple[tuple[str, int], ...]
    permutation: tuple[int, ...]
    question: str
    answer: str
    category_scope: str
    crops: tuple[TileSpec, ...] | None = None

    def __post_init__(self) -> None:
        counts = [count for _, count in self.members]
        if any(a >= b for a, b in zip(counts, counts[1:])):
            raise ValueError(f"member counts must be strictly increasing, got {counts}")
        if sorted(self.permutation) != list(range(1, len(self.members) + 1)):
            raise ValueError(f"permutation {self.permutation} is not a bijection")

    def presented_members(self) -> list[tuple[str, int]]:
        return [self.members[i - 1] for i in self.permutation]


def rng_stream(seed: int, *tokens) -> np.random.Generator:
    """Independent generator derived stably from (seed, tokens)."""
    material = "\x1f".join(str(t) for t in (seed, *tokens))
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def load_grouping(path: str | Path) -> dict[str, list[str]]:
    """Read a semantic grouping file: JSON object {group_name: [category, ...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(
        isinstance(v, list) and all(isinstance(c, str) for c in v) for v in data.values()
    ):
        raise ValueError(f"{path} is not a {{group: [categories]}} object")
    return {str(k): list(v) for k, v in data.items()}


def bundled_grouping_path() -> Path:
    """Path of the packaged semantic grouping for common counting categories."""
    return Path(__file__).parent / "data" / "semantic_groups.json"


def assign_groups(annotations: AnnotationSet, category: str, k: int) -> list[int]:
    """Group index for each record of the category, in annotation order.

    The category's count span [min, max] is cut into k equal-length
    intervals, half-open except the last; a record's group is the interval
    holding its count. Integer arithmetic keeps boundaries exact. With a
    degenerate span every record lands in group 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    extrema = category_count_extrema(annotations, category)  # raises UnknownCategory
    span = extrema.upper - extrema.lower
    groups = []
    for rec in annotations.records:
        if rec.category != category:
            continue
        if span == 0:
            groups.append(0)
        else:
            groups.append(min(k - 1, (rec.count - extrema.lower) * k // span))
    return groups


def _ascending_answer(permutation: tuple[int, ...]) -> str:
    positions = {member: pos for pos, member in enumerate(permutation, start=1)}
    order = [positions[member] for member in sorted(positions)]
    return render(TemplateKind.CRCO_RANK_ANSWER, order=order)


def _finalize(
    picked: list[ImageRecord],
    scope: str,
    obj: str,
    rng: np.random.Generator,
) -> RankingSet:
    picked = sorted(picked, key=lambda r: r.count)
    members = tuple((rec.image_id, rec.count) for rec in picked)
    permutation = tuple(int(i) + 1 for i in rng.permutation(len(members)))
    return RankingSet(
        members=members,
        permutation=permutation,
        question=render(TemplateKind.CRCO_RANK_QUESTION, obj=obj, k=len(members)),
        answer=_ascending_answer(permutation),
        category_scope=scope,
    )


def _sample_distinct_counts(
    pool: list[ImageRecord], k: int, rng: np.random.Generator, scope: str
) -> list[ImageRecord]:
    if not pool:
        raise EmptyCategory(f"no records in scope {scope!r}")
    if len(pool) < k:
        raise InsufficientDiversity(
            f"scope {scope!r} has {len(pool)} records, need {k}"
        )
    draw: list[ImageRecord] = []
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        idx = rng.choice(len(pool), size=k, replace=False)
        draw = [pool[int(i)] for i in idx]
        if len({rec.count for rec in draw}) == k:
            return draw
    # Ties persisted: drop duplicates from the last draw and emit a smaller set.
    seen: dict[int, ImageRecord] = {}
    for rec in draw:
        seen.setdefault(rec.count, rec)
    if len(seen) < 2:
        raise InsufficientDiversity(
            f"scope {scope!r} cannot produce two distinct counts"
        )
    return list(seen.values())


def sample_set(
    annotations: AnnotationSet,
    category: str,
    cfg: CrcoConfig,
    rng: np.random.Generator,
    grouping: dict[str, list[str]] | None = None,
) -> RankingSet:
    """Draw one ranking set for a category under the configured mode.

    Stratified mode samples one image per non-empty count interval (a
    smaller set is emitted when intervals are empty, minimum two); the
    other modes draw k images with pairwise distinct counts from their
    respective pools, retrying on ties and shrinking as a last resort.
    """
    mode = CrcoMode(cfg.mode)
    if mode is CrcoMode.SCRCO:
        raise ValueError("scrco sets are built per record via build_scrco_set")

    if mode is CrcoMode.STRATIFIED:
        records = annotations.records_of(category)
        if not records:
            raise EmptyCategory(f"no records for category {category!r}")
        groups = assign_groups(annotations, category, cfg.k)
        buckets: dict[int, list[ImageRecord]] = {}
        for rec, group in zip(records, groups):
            buckets.setdefault(group, []).append(rec)
        if len(buckets) < 2:
            raise InsufficientDiversity(
                f"category {category!r} has {len(buckets)} non-empty count "
                f"interval(s), need at least 2"
            )
        picked = [
            bucket[int(rng.integers(len(bucket)))]
            for _, bucket in sorted(buckets.items())
        ]
        return _finalize(picked, category, category, rng)

    if mode is CrcoMode.RANDOM:
        pool = annotations.records_of(category)
        if not pool:
            raise EmptyCategory(f"no records for category {category!r}")
        picked = _sample_distinct_counts(pool, cfg.k, rng, category)
        return _finalize(picked, category, category, rng)

    if mode is CrcoMode.CROSS_CATEGORY:
        pool = list(annotations.records)
        picked = _sample_distinct_counts(pool, cfg.k, rng, "all")
        return _finalize(picked, "all", MIXED_POOL_OBJ, rng)

    # semi_cross
    if grouping is None:
        if cfg.grouping_file is None:
            raise ValueError("semi_cross mode requires a grouping")
        grouping = load_grouping(cfg.grouping_file)
    group_name = next(
        (name for name, cats in grouping.items() if category in cats), None
    )
    if group_name is None:
        raise UnknownCategory(f"category {category!r} absent from the grouping file")
    member_cats = set(grouping[group_name])
    pool = [rec for rec in annotations.records if rec.category in member_cats]
    picked = _sample_distinct_counts(pool, cfg.k, rng, group_name)
    return _finalize(picked, group_name, MIXED_POOL_OBJ, rng)


def build_scrco_set(
    record: ImageRecord,
    fractions: tuple[float, ...] = DEFAULT_SCRCO_FRACTIONS,
    rng: np.random.Generator | None = None,
) -> RankingSet:
    """Ranking set of one image and its central crops, ordered by retained area.

    Fractions must be strictly decreasing in (0, 1]. Members carry rank
    indices instead of object counts: the smallest crop ranks first, the
    full view last. Without an rng the presentation order is the identity.
    """
    if any(not 0 < f <= 1 for f in fractions):
        raise ValueError(f"fractions must lie in (0, 1], got {fractions}")
    if any(a <= b for a, b in zip(fractions, fractions[1:])):
        raise ValueError(f"fractions must be strictly decreasing, got {fractions}")
    for f in fractions:
        # Sub-pixel extents are rejected even where rounding would save them.
        if f * record.width < 1 or f * record.height < 1:
            raise DegenerateCrop(
                f"fraction {f} of {record.width}x{record.height} is below one pixel"
            )

    ascending = tuple(reversed(fractions))
    crops = tuple(
        central_crop(record.width, record.height, f) for f in ascending
    )  # raises DegenerateCrop
    members = tuple(
        (f"{record.image_id}#frac={f:g}", rank)
        for rank, f in enumerate(ascending, start=1)
    )
    k = len(members)
    if rng is None:
        permutation = tuple(range(1, k + 1))
    else:
        permutation = tuple(int(i) + 1 for i in rng.permutation(k))
    return RankingSet(
        members=members,
        permutation=permutation,
        question=render(TemplateKind.CRCO_RANK_QUESTION, obj=record.category, k=k),
        answer=_ascending_answer(permutation),
        category_scope=record.category,
        crops=crops,
    )
