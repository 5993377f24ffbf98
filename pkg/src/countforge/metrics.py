"""MAE/RMSE evaluation with density-band and per-category breakdowns.

Bands are assigned from the ground-truth count, never the prediction, so a
result's band does not depend on model quality. Parse-failure results
(prediction 0, flagged upstream) are included by default; pass
``exclude_parse_failures=True`` for the companion report that drops them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import AnnotationSet, DensityBand, DEFAULT_BANDING, band_of
from .errors import EmptyResults, MissingGroundTruth
from .inference import InferenceResult


@dataclass(frozen=True)
class MetricCell:
    mae: float
    rmse: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    overall: MetricCell
    per_band: dict[str, MetricCell]
    per_category: dict[str, MetricCell]
    parse_failure_count: int
    config_fingerprint: str = ""


def _cell(preds: list[float], gts: list[float]) -> MetricCell:
    diff = np.asarray(preds, dtype=np.float64) - np.asarray(gts, dtype=np.float64)
    mae = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff * diff)))
    # Power-mean inequality; the epsilon absorbs float roundoff only.
    if rmse < mae - 1e-9:
        raise AssertionError(f"rmse {rmse} < mae {mae}")
    return MetricCell(mae=mae, rmse=rmse, n=len(preds))


def evaluate(
    results: list[InferenceResult],
    truth: AnnotationSet,
    scheme: tuple[DensityBand, ...] = DEFAULT_BANDING,
    exclude_parse_failures: bool = False,
    config_fingerprint: str = "",
) -> EvalReport:
    """Score fused predictions against ground-truth counts.

    Raises MissingGroundTruth when a result references an image_id the
    truth set does not contain, and EmptyResults when nothing is left to
    score.
    """
    if not results:
        raise EmptyResults("no inference results to evaluate")

    parse_failure_count = sum(1 for r in results if r.parse_failures > 0)
    if exclude_parse_failures:
        results = [r for r in results if r.parse_failures == 0]
        if not results:
            raise EmptyResults("every result was excluded as a parse failure")

    preds: list[float] = []
    gts: list[float] = []
    bands: list[str] = []
    categories: list[str] = []
    for result in results:
        record = truth.get(result.image_id)
        if record is None:
            raise MissingGroundTruth(
                f"image_id {result.image_id!r} absent from the annotation set"
            )
        preds.append(result.fused)
        gts.append(float(record.count))
        bands.append(band_of(record.count, scheme).name.value)
        categories.append(record.category)

    per_band: dict[str, MetricCell] = {}
    for band in scheme:
        name = band.name.value
        idx = [i for i, b in enumerate(bands) if b == name]
        if idx:
            per_band[name] = _cell([preds[i] for i in idx], [gts[i] for i in idx])

    per_category: dict[str, MetricCell] = {}
    for category in sorted(set(categories)):
        idx = [i for i, c in enumerate(categories) if c == category]
        per_category[category] = _cell([preds[i] for i in idx], [gts[i] for i in idx])

    return EvalReport(
        overall=_cell(preds, gts),
        per_band=per_band,
        per_category=per_category,
        parse_failure_count=parse_failure_count,
        config_fingerprint=config_fingerprint,
    )


def report_to_dict(report: EvalReport) -> dict:
    def cell(c: MetricCell) -> dict:
        return {"mae": c.mae, "rmse": c.rmse, "n": c.n}

    return {
        "overall": cell(report.overall),
        "per_band": {k: cell(v) for k, v in report.per_band.items()},
        "per_category": {k: cell(v) for k, v in report.per_category.items()},
        "parse_failure_count": report.parse_failure_count,
        "config_fingerprint": report.config_fingerprint,
    }


def _rows(report: EvalReport) -> list[tuple[str, str, str, str]]:
    rows = [("overall", f"{report.overall.mae:.2f}", f"{report.overall.rmse:.2f}",
             str(report.overall.n))]
    for name, cell in report.per_band.items():
        rows.append((f"band:{name}", f"{cell.mae:.2f}", f"{cell.rmse:.2f}", str(cell.n)))
    for name in sorted(report.per_category):
        cell = report.per_category[name]
        rows.append((f"category:{name}", f"{cell.mae:.2f}", f"{cell.rmse:.2f}", str(cell.n)))
    return rows


def render_table(report: EvalReport, format: str = "markdown") -> str:
    """Deterministic table of the report: markdown, csv, or json."""
    if format == "json":
        return json.dumps(report_to_dict(report), ensure_ascii=False, indent=2)
    header = ("scope", "MAE", "RMSE", "n")
    rows = _rows(report)
    if format == "csv":
        lines = [",".join(header)]
        lines += [",".join(row) for row in rows]
        return "\n".join(lines)
    if format == "markdown":
        widths = [
            max(len(header[i]), max(len(row[i]) for row in rows))
            for i in range(4)
        ]

        def fmt(cells: tuple[str, str, str, str]) -> str:
            padded = [cells[0].ljust(widths[0])] + [
                cells[i].rjust(widths[i]) for i in (1, 2, 3)
            ]
            return "| " + " | ".join(padded) + " |"

        divider = "|-" + "-|-".join("-" * w for w in widths) + "-|"
        return "\n".join([fmt(header), divider] + [fmt(row) for row in rows])
    raise ValueError(f"unknown table format {format!r}")
