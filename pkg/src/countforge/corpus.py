"""Conversation-JSON corpus assembly for the generation subcommands.

A corpus file is a JSON array of samples shaped for multimodal
instruction-tuning trainers:

    {"id": ..., "images": [path, ...],
     "conversations": [{"from": "human"|"gpt", "value": ...}, ...],
     "meta": {...}}

``meta`` always carries the task name, the run's config fingerprint and
the tool version; task-specific fields (ground-truth count, permutation,
crop geometry) sit alongside. Multi-image samples list image paths in
presented order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .core import AnnotationSet, CountRange, ImageRecord, category_count_extrema
from .dialogue import (
    D3TConfig,
    DialogueTranscript,
    SingleRoundConfig,
    generate_baseline,
    generate_d3t,
    generate_single_round,
)
from .errors import EmptyCategory, InsufficientDiversity
from .ranking import (
    CrcoConfig,
    CrcoMode,
    DEFAULT_SCRCO_FRACTIONS,
    RankingSet,
    build_scrco_set,
    load_grouping,
    rng_stream,
    sample_set,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorpusSample:
    id: str
    images: tuple[str, ...]
    conversations: tuple[dict, ...]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "images": list(self.images),
            "conversations": [dict(turn) for turn in self.conversations],
            "meta": dict(self.meta),
        }


def _base_meta(task: str, fingerprint: str) -> dict:
    return {"task": task, "fingerprint": fingerprint, "version": __version__}


def transcript_sample(
    transcript: DialogueTranscript,
    record: ImageRecord,
    task: str,
    fingerprint: str,
) -> CorpusSample:
    conversations = []
    for turn in transcript.turns:
        conversations.append({"from": "human", "value": turn.question})
        conversations.append({"from": "gpt", "value": turn.answer})
    meta = _base_meta(task, fingerprint)
    meta["image_id"] = transcript.image_id
    meta["category"] = transcript.category
    meta["gt_count"] = transcript.gt_count
    return CorpusSample(
        id=f"{task}/{transcript.image_id}",
        images=(record.image_path,),
        conversations=tuple(conversations),
        meta=meta,
    )


def build_baseline_corpus(
    annotations: AnnotationSet, fingerprint: str = ""
) -> list[CorpusSample]:
    """One count question/answer sample per record."""
    return [
        transcript_sample(generate_baseline(rec), rec, "baseline", fingerprint)
        for rec in annotations.records
    ]


def _effective_d3t_config(
    cfg: D3TConfig, annotations: AnnotationSet, category: str
) -> D3TConfig:
    if not cfg.per_category_range:
        return cfg
    extrema = category_count_extrema(annotations, category)
    lower = max(1, extrema.lower)
    upper = max(lower, extrema.upper)
    return replace(cfg, initial_range=CountRange(lower, upper))


def build_d3t_corpus(
    annotations: AnnotationSet, cfg: D3TConfig | None = None, fingerprint: str = ""
) -> list[CorpusSample]:
    """One multi-round range dialogue per record.

    A count outside the configured range aborts the build (annotation
    bugs should be loud); enable clamping on the config to widen the
    range instead.
    """
    cfg = cfg or D3TConfig()
    per_category: dict[str, D3TConfig] = {}
    samples = []
    for rec in annotations.records:
        rec_cfg = per_category.get(rec.category)
        if rec_cfg is None:
            rec_cfg = _effective_d3t_config(cfg, annotations, rec.category)
            per_category[rec.category] = rec_cfg
        transcript = generate_d3t(rec, rec_cfg)  # raises CountOutsideRange
        samples.append(transcript_sample(transcript, rec, "d3t", fingerprint))
    return samples


def build_single_round_corpus(
    annotations: AnnotationSet,
    cfg: SingleRoundConfig | None = None,
    fingerprint: str = "",
) -> list[CorpusSample]:
    """One sub-range classification sample per record."""
    cfg = cfg or SingleRoundConfig()
    samples = []
    for rec in annotations.records:
        transcript = generate_single_round(rec, cfg)
        samples.append(
            transcript_sample(transcript, rec, "d3t_single_round", fingerprint)
        )
    return samples


def ranking_sample(
    rset: RankingSet,
    images: tuple[str, ...],
    sample_id: str,
    task: str,
    fingerprint: str,
) -> CorpusSample:
    meta = _base_meta(task, fingerprint)
    meta["category_scope"] = rset.category_scope
    meta["members"] = [
        {"image_id": image_id, "count": count} for image_id, count in rset.members
    ]
    meta["permutation"] = list(rset.permutation)
    if rset.crops is not None:
        meta["crops"] = [
            {"x": t.x, "y": t.y, "w": t.w, "h": t.h} for t in rset.crops
        ]
    return CorpusSample(
        id=sample_id,
        images=images,
        conversations=(
            {"from": "human", "value": rset.question},
            {"from": "gpt", "value": rset.answer},
        ),
        meta=meta,
    )


def build_crco_corpus(
    annotations: AnnotationSet,
    cfg: CrcoConfig | None = None,
    fingerprint: str = "",
    scrco_fractions: tuple[float, ...] | None = None,
) -> list[CorpusSample]:
    """Ranking samples across categories.

    Categories are visited in sorted order with an independent random
    stream per (seed, category, set index), so output is reproducible and
    insensitive to scheduling. Categories that cannot produce a valid set
    are skipped with a warning.
    """
    cfg = cfg or CrcoConfig()
    mode = CrcoMode(cfg.mode)
    if mode is CrcoMode.SCRCO:
        return _build_scrco_corpus(annotations, cfg, fingerprint, scrco_fractions)

    grouping = load_grouping(cfg.grouping_file) if cfg.grouping_file else None
    path_of = {rec.image_id: rec.image_path for rec in annotations.records}
    samples = []
    for category in annotations.categories():
        for set_index in range(cfg.sets_per_category):
            rng = rng_stream(cfg.seed, category, set_index)
            try:
                rset = sample_set(annotations, category, cfg, rng, grouping=grouping)
            except (EmptyCategory, InsufficientDiversity) as exc:
                logger.warning("skipping %s[%d]: %s", category, set_index, exc)
                break
            images = tuple(
                path_of[image_id] for image_id, _ in rset.presented_members()
            )
            samples.append(
                ranking_sample(
                    rset,
                    images,
                    sample_id=f"crco/{category}/{set_index:04d}",
                    task="crco",
                    fingerprint=fingerprint,
                )
            )
    return samples


def _build_scrco_corpus(
    annotations: AnnotationSet,
    cfg: CrcoConfig,
    fingerprint: str,
    fractions: tuple[float, ...] | None = None,
) -> list[CorpusSample]:
    # Self-contained sets: one per record, ground truth is area order only.
    samples = []
    for rec in annotations.records:
        rng = rng_stream(cfg.seed, "scrco", rec.image_id)
        rset = build_scrco_set(rec, fractions or DEFAULT_SCRCO_FRACTIONS, rng=rng)
        presented = rset.presented_members()
        crop_of = dict(zip((m[0] for m in rset.members), rset.crops))
        meta_sample = ranking_sample(
            rset,
            images=tuple(rec.image_path for _ in presented),
            sample_id=f"scrco/{rec.image_id}",
            task="scrco",
            fingerprint=fingerprint,
        )
        # Presented-order crop geometry: consumers materialize these crops.
        meta = dict(meta_sample.meta)
        meta["presented_crops"] = [
            {
                "member": member_id,
                "x": crop_of[member_id].x,
                "y": crop_of[member_id].y,
                "w": crop_of[member_id].w,
                "h": crop_of[member_id].h,
            }
            for member_id, _ in presented
        ]
        samples.append(
            CorpusSample(
                id=meta_sample.id,
                images=meta_sample.images,
                conversations=meta_sample.conversations,
                meta=meta,
            )
        )
    return samples


def write_corpus(samples: list[CorpusSample], path: str | Path) -> None:
    payload = [sample.to_dict() for sample in samples]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def read_corpus(path: str | Path) -> list[CorpusSample]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        CorpusSample(
            id=entry["id"],
            images=tuple(entry.get("images", ())),
            conversations=tuple(entry.get("conversations", ())),
            meta=entry.get("meta", {}),
        )
        for entry in data
    ]
