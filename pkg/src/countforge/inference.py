"""Global/local counting inference: density gate, tile fan-out, fusion.

Every image first gets a whole-image count query. Sparse scenes (global
count under the dense threshold) keep that count as the prediction. Dense
scenes are cut into an LxL grid; each tile is queried independently, the
tile counts are summed, and the prediction is the average of the global
count and the tile sum. The optional count-tiered mode picks the grid size
from the global count instead of using one fixed grid.
"""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .client import VisionClient, VisionQuery, parse_count
from .core import AnnotationSet, ImageRecord
from .errors import (
    AllQueriesFailed,
    ClientError,
    CountforgeError,
    NoCountFound,
)
from .imageops import TileSpec, extract_and_encode, full_tile, grid_partition
from .templates import TemplateKind, render

logger = logging.getLogger(__name__)


class FusionMode(str, enum.Enum):
    MEAN = "mean"
    GLOBAL_ONLY = "global_only"
    LOCAL_ONLY = "local_only"


@dataclass(frozen=True)
class GlceConfig:
    """Gate threshold, grid size, optional count tiers, and fusion mode."""

    dense_threshold: int = 100
    grid_l: int = 2
    adaptive_tiers: tuple[tuple[int, int], ...] | None = None
    fusion: FusionMode = FusionMode.MEAN

    def __post_init__(self) -> None:
        if self.dense_threshold < 1:
            raise ValueError("dense_threshold must be positive")
        if self.grid_l < 1:
            raise ValueError("grid_l must be >= 1")
        if self.adaptive_tiers is not None:
            bounds = [b for b, _ in self.adaptive_tiers]
            if not bounds or bounds[0] != 0:
                raise ValueError("adaptive tiers must start at bound 0")
            if bounds != sorted(bounds) or len(set(bounds)) != len(bounds):
                raise ValueError("adaptive tier bounds must be strictly increasing")
            if any(grid < 1 for _, grid in self.adaptive_tiers):
                raise ValueError("adaptive tier grids must be >= 1")


@dataclass(frozen=True)
class InferenceResult:
    """Per-image prediction record with diagnostics."""

    image_id: str
    global_count: int
    fused: float
    used_glce: bool
    tile_counts: tuple[int, ...] | None = None
    local_sum: int | None = None
    tile_specs: tuple[TileSpec, ...] | None = None
    parse_failures: int = 0
    error: str | None = None


def _query_count(client: VisionClient, query: VisionQuery) -> tuple[int, int]:
    """Count from one query; one re-query on unparseable text, then 0 + flag."""
    reply = client.query(query)
    try:
        return parse_count(reply.text), 0
    except NoCountFound:
        pass
    reply = client.query(query)
    try:
        return parse_count(reply.text), 0
    except NoCountFound:
        logger.warning("unparseable reply %r; recording 0", reply.text[:80])
        return 0, 1


def _grid_for(global_count: int, cfg: GlceConfig) -> int:
    if cfg.adaptive_tiers is not None:
        grid = 1
        for bound, tier_grid in cfg.adaptive_tiers:
            if global_count >= bound:
                grid = tier_grid
        return grid
    return cfg.grid_l if global_count >= cfg.dense_threshold else 1


def infer_count(
    record: ImageRecord,
    client: VisionClient,
    cfg: GlceConfig | None = None,
    image_root: str | Path = ".",
    tile_workers: int = 8,
    max_tokens: int = 64,
    temperature: float = 0.0,
) -> InferenceResult:
    """Predict the object count of one image.

    Raises AllQueriesFailed when the image cannot be decoded or the global
    query fails unrecoverably; tile-level failures degrade to a zero
    contribution plus a parse-failure flag instead of aborting the image.
    Decoding is greedy by default; both sampling knobs pass through to the
    client untouched.
    """
    cfg = cfg or GlceConfig()
    path = Path(image_root) / record.image_path
    prompt = render(TemplateKind.INFERENCE_QUESTION, obj=record.category)

    def make_query(data: bytes, media: str) -> VisionQuery:
        return VisionQuery(
            images=((data, media),),
            prompt=prompt,
            max_tokens=max_tokens,
            temperature=temperature,
        )

    try:
        data, media = extract_and_encode(path, full_tile(record.width, record.height))
        global_count, failures = _query_count(client, make_query(data, media))
    except (ClientError, CountforgeError) as exc:
        raise AllQueriesFailed(f"{record.image_id}: global query failed: {exc}") from exc

    grid = _grid_for(global_count, cfg)
    if cfg.fusion is FusionMode.GLOBAL_ONLY or grid <= 1:
        return InferenceResult(
            image_id=record.image_id,
            global_count=global_count,
            fused=float(global_count),
            used_glce=False,
            parse_failures=failures,
        )

    tiles = tuple(grid_partition(record.width, record.height, grid))

    def tile_count(tile: TileSpec) -> tuple[int, int]:
        try:
            tile_data, tile_media = extract_and_encode(path, tile)
            return _query_count(client, make_query(tile_data, tile_media))
        except (ClientError, CountforgeError) as exc:
            logger.warning("%s tile %s failed: %s", record.image_id, tile.box(), exc)
            return 0, 1

    with ThreadPoolExecutor(max_workers=min(len(tiles), tile_workers)) as pool:
        outcomes = list(pool.map(tile_count, tiles))
    tile_counts = tuple(count for count, _ in outcomes)
    failures += sum(flag for _, flag in outcomes)
    local_sum = sum(tile_counts)

    if cfg.fusion is FusionMode.LOCAL_ONLY:
        fused = float(local_sum)
    else:
        fused = (global_count + local_sum) / 2.0
    return InferenceResult(
        image_id=record.image_id,
        global_count=global_count,
        fused=fused,
        used_glce=True,
        tile_counts=tile_counts,
        local_sum=local_sum,
        tile_specs=tiles,
        parse_failures=failures,
    )


def run_benchmark(
    annotations: AnnotationSet,
    client: VisionClient,
    cfg: GlceConfig | None = None,
    image_root: str | Path = ".",
    jobs: int = 1,
    max_tokens: int = 64,
    temperature: float = 0.0,
) -> list[InferenceResult]:
    """One InferenceResult per record, in input order.

    Per-image unrecoverable failures become error records rather than
    aborting the run; the failure tally is logged at the end.
    """
    cfg = cfg or GlceConfig()

    def one(record: ImageRecord) -> InferenceResult:
        try:
            return infer_count(
                record,
                client,
                cfg,
                image_root=image_root,
                max_tokens=max_tokens,
                temperature=temperature,
            )
        except AllQueriesFailed as exc:
            return InferenceResult(
                image_id=record.image_id,
                global_count=0,
                fused=0.0,
                used_glce=False,
                parse_failures=1,
                error=str(exc),
            )

    if jobs <= 1:
        results = [one(rec) for rec in annotations.records]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, annotations.records))

    failed = sum(1 for r in results if r.error)
    flagged = sum(r.parse_failures for r in results)
    logger.info(
        "benchmark finished: %d images, %d failed outright, %d parse failures",
        len(results),
        failed,
        flagged,
    )
    return results


def result_to_dict(result: InferenceResult) -> dict:
    out: dict = {
        "image_id": result.image_id,
        "global_count": result.global_count,
        "fused": result.fused,
        "used_glce": result.used_glce,
        "parse_failures": result.parse_failures,
    }
    if result.tile_counts is not None:
        out["tile_counts"] = list(result.tile_counts)
        out["local_sum"] = result.local_sum
        out["tile_specs"] = [
            [t.x, t.y, t.w, t.h, t.row, t.col] for t in result.tile_specs or ()
        ]
    if result.error is not None:
        out["error"] = result.error
    return out


def result_from_dict(payload: dict) -> InferenceResult:
    tile_counts = payload.get("tile_counts")
    tile_specs = payload.get("tile_specs")
    return InferenceResult(
        image_id=payload["image_id"],
        global_count=int(payload["global_count"]),
        fused=float(payload["fused"]),
        used_glce=bool(payload["used_glce"]),
        tile_counts=tuple(tile_counts) if tile_counts is not None else None,
        local_sum=payload.get("local_sum"),
        tile_specs=tuple(
            TileSpec(x=t[0], y=t[1], w=t[2], h=t[3], row=t[4], col=t[5])
            for t in tile_specs
        )
        if tile_specs
        else None,
        parse_failures=int(payload.get("parse_failures", 0)),
        error=payload.get("error"),
    )


def write_results_jsonl(
    results: list[InferenceResult],
    path: str | Path,
    fingerprint: str = "",
    version: str = "",
) -> None:
    """One JSON object per line; every line carries the run fingerprint."""
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            payload = result_to_dict(result)
            if fingerprint:
                payload["fingerprint"] = fingerprint
            if version:
                payload["version"] = version
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")


def read_results_jsonl(path: str | Path) -> list[InferenceResult]:
    results = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                results.append(result_from_dict(json.loads(line)))
    return results
