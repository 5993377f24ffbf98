"""Dialogue synthesis from ground-truth counts.

Three sample families: plain count question/answer pairs, multi-round
divide-and-discern dialogues that halve a count range until it is narrow
relative to the true count, and the single-round variant that asks for the
correct sub-range out of a fixed partition.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .core import CountRange, ImageRecord
from .errors import CountOutsideRange
from .templates import TemplateKind, render


class TurnKind(str, enum.Enum):
    RANGE_PROBE = "range_probe"
    RANGE_SELECT = "range_select"
    FINAL_COUNT = "final_count"


@dataclass(frozen=True)
class D3TConfig:
    """Knobs for divide-and-discern dialogue generation.

    The dialogue stops once the range width drops below
    ``max(delta_ratio * count, min_delta)``; the floor guarantees
    termination for counts small enough that the ratio alone would
    never be reached on integer ranges.
    """

    initial_range: CountRange = CountRange(1, 2000)
    delta_ratio: float = 0.2
    min_delta: float = 1.0
    per_category_range: bool = False
    clamp: bool = False

    def __post_init__(self) -> None:
        if self.initial_range.upper is None:
            raise ValueError("dialogue generation needs a bounded initial range")
        if self.initial_range.lower < 1:
            raise ValueError("initial range lower bound must be >= 1")
        if not 0 < self.delta_ratio < 1:
            raise ValueError(f"delta_ratio must be in (0, 1), got {self.delta_ratio}")
        if self.min_delta <= 0:
            raise ValueError(f"min_delta must be positive, got {self.min_delta}")


@dataclass(frozen=True)
class SingleRoundConfig:
    """Sub-range classification: the initial range cut into slices of ``interval``."""

    interval: int = 300
    initial_range: CountRange = CountRange(1, 2000)

    def __post_init__(self) -> None:
        if self.interval < 1:
            raise ValueError(f"interval must be >= 1, got {self.interval}")
        if self.initial_range.upper is None:
            raise ValueError("sub-range enumeration needs a bounded initial range")


@dataclass(frozen=True)
class DialogueTurn:
    question: str
    answer: str
    turn_kind: TurnKind
    range_before: CountRange | None = None
    midpoint: int | None = None


@dataclass(frozen=True)
class DialogueTranscript:
    """Ordered question/answer turns for one training sample."""

    image_id: str
    category: str
    gt_count: int
    turns: tuple[DialogueTurn, ...]


def _effective_range(count: int, cfg: D3TConfig) -> CountRange:
    rng = cfg.initial_range
    if rng.contains(count):
        return rng
    if cfg.clamp and count >= 1:
        return CountRange(min(rng.lower, count), max(rng.upper, count))
    reason = "clamp disabled" if not cfg.clamp else "lower bound must stay >= 1"
    raise CountOutsideRange(f"count {count} outside initial range {rng} ({reason})")


def generate_d3t(record: ImageRecord, cfg: D3TConfig | None = None) -> DialogueTranscript:
    """Build the multi-round range dialogue for one record.

    Each round asks whether the count exceeds the current range midpoint;
    the range shrinks to the half containing the true count, and once the
    width falls under the stopping threshold a final turn asks for the
    exact count.
    """
    cfg = cfg or D3TConfig()
    count = record.count
    rng = _effective_range(count, cfg)
    threshold = max(cfg.delta_ratio * count, cfg.min_delta)

    turns: list[DialogueTurn] = []
    lower, upper = rng.lower, rng.upper
    while (upper - lower) >= threshold:
        tau = (lower + upper) // 2
        exceeds = count > tau
        turns.append(
            DialogueTurn(
                question=render(TemplateKind.D3T_RANGE_QUESTION, tau=tau, obj=record.category),
                answer=render(TemplateKind.D3T_YES if exceeds else TemplateKind.D3T_NO),
                turn_kind=TurnKind.RANGE_PROBE,
                range_before=CountRange(lower, upper),
                midpoint=tau,
            )
        )
        if exceeds:
            lower = tau + 1
        else:
            upper = tau

    turns.append(
        DialogueTurn(
            question=render(TemplateKind.D3T_FINAL_QUESTION, obj=record.category),
            answer=render(TemplateKind.D3T_FINAL_ANSWER, num=count, obj=record.category),
            turn_kind=TurnKind.FINAL_COUNT,
            range_before=CountRange(lower, upper),
        )
    )
    return DialogueTranscript(
        image_id=record.image_id,
        category=record.category,
        gt_count=count,
        turns=tuple(turns),
    )


def enumerate_subranges(initial_range: CountRange, interval: int) -> list[tuple[int, int]]:
    """Slice the range into consecutive intervals; the last one is clamped."""
    subranges = []
    lower = initial_range.lower
    while lower <= initial_range.upper:
        upper = min(lower + interval - 1, initial_range.upper)
        subranges.append((lower, upper))
        lower = upper + 1
    return subranges


def generate_single_round(
    record: ImageRecord, cfg: SingleRoundConfig | None = None
) -> DialogueTranscript:
    """Build the one-turn sub-range classification sample for one record."""
    cfg = cfg or SingleRoundConfig()
    count = record.count
    if not cfg.initial_range.contains(count):
        raise CountOutsideRange(
            f"count {count} outside initial range {cfg.initial_range}"
        )
    subranges = enumerate_subranges(cfg.initial_range, cfg.interval)
    containing = next((lo, hi) for lo, hi in subranges if lo <= count <= hi)
    turn = DialogueTurn(
        question=render(
            TemplateKind.SINGLE_ROUND_RANGE_QUESTION,
            obj=record.category,
            ranges=subranges,
        ),
        answer=f"[{containing[0]},{containing[1]}]",
        turn_kind=TurnKind.RANGE_SELECT,
        range_before=cfg.initial_range,
    )
    return DialogueTranscript(
        image_id=record.image_id,
        category=record.category,
        gt_count=count,
        turns=(turn,),
    )


def generate_baseline(record: ImageRecord) -> DialogueTranscript:
    """Single-turn count question/answer for one record."""
    turn = DialogueTurn(
        question=render(TemplateKind.BASELINE_QUESTION, obj=record.category),
        answer=render(TemplateKind.BASELINE_ANSWER, num=record.count, obj=record.category),
        turn_kind=TurnKind.FINAL_COUNT,
    )
    return DialogueTranscript(
        image_id=record.image_id,
        category=record.category,
        gt_count=record.count,
        turns=(turn,),
    )


def with_range(cfg: D3TConfig, rng: CountRange) -> D3TConfig:
    """Copy of the config with a different initial range."""
    return replace(cfg, initial_range=rng)
