import math

import numpy as np
import pytest

from countforge.core import AnnotationSet, BandName, CountRange, DensityBand
from countforge.errors import EmptyResults, MissingGroundTruth
from countforge.inference import InferenceResult
from countforge.metrics import EvalReport, MetricCell, evaluate, render_table, report_to_dict

from conftest import record


def result(image_id, fused, parse_failures=0):
    return InferenceResult(
        image_id=image_id,
        global_count=int(fused),
        fused=float(fused),
        used_glce=False,
        parse_failures=parse_failures,
    )


def fsum_metrics(preds, gts):
    """Independent accumulation: math.fsum over exact per-pair terms."""
    abs_errors = [abs(p - g) for p, g in zip(preds, gts)]
    sq_errors = [(p - g) ** 2 for p, g in zip(preds, gts)]
    n = len(preds)
    return math.fsum(abs_errors) / n, math.sqrt(math.fsum(sq_errors) / n)


@pytest.fixture
def truth_set():
    return AnnotationSet(
        records=(
            record("i1", "apples", 12),
            record("i2", "apples", 25),
            record("i3", "cars", 130),
        )
    )


class TestEvaluate:
    def test_hand_example(self, truth_set):
        results = [result("i1", 14), result("i2", 30), result("i3", 100)]
        report = evaluate(results, truth_set)
        assert report.overall.mae == pytest.approx(37 / 3, abs=1e-12)
        assert report.overall.rmse == pytest.approx(math.sqrt(929 / 3), abs=1e-12)
        assert report.overall.n == 3

    def test_perfect_predictions(self, truth_set):
        results = [result("i1", 12), result("i2", 25), result("i3", 130)]
        report = evaluate(results, truth_set)
        assert report.overall.mae == 0.0 and report.overall.rmse == 0.0

    def test_single_pair(self):
        truth = AnnotationSet(records=(record("only", "x", 10),))
        report = evaluate([result("only", 0)], truth)
        assert report.overall.mae == 10.0 and report.overall.rmse == 10.0

    def test_banding_uses_ground_truth(self, truth_set):
        # Wild prediction does not move i1 out of the sparse band.
        results = [result("i1", 900), result("i2", 30), result("i3", 100)]
        report = evaluate(results, truth_set)
        assert report.per_band["sparse"].n == 1
        assert report.per_band["medium"].n == 1
        assert report.per_band["dense"].n == 1
        assert "extremely_dense" not in report.per_band

    def test_band_sizes_sum_to_overall(self, truth_set):
        results = [result("i1", 1), result("i2", 2), result("i3", 3)]
        report = evaluate(results, truth_set)
        assert sum(cell.n for cell in report.per_band.values()) == report.overall.n

    def test_per_category(self, truth_set):
        results = [result("i1", 14), result("i2", 30), result("i3", 100)]
        report = evaluate(results, truth_set)
        assert report.per_category["apples"].n == 2
        assert report.per_category["cars"].mae == pytest.approx(30.0)

    def test_missing_ground_truth(self, truth_set):
        with pytest.raises(MissingGroundTruth):
            evaluate([result("stranger", 5)], truth_set)

    def test_empty_results(self, truth_set):
        with pytest.raises(EmptyResults):
            evaluate([], truth_set)

    def test_parse_failures_included_by_default(self, truth_set):
        results = [result("i1", 0, parse_failures=1), result("i2", 25), result("i3", 130)]
        report = evaluate(results, truth_set)
        assert report.overall.n == 3
        assert report.parse_failure_count == 1
        strict = evaluate(results, truth_set, exclude_parse_failures=True)
        assert strict.overall.n == 2
        assert strict.overall.mae == 0.0

    def test_all_failures_excluded_is_empty(self, truth_set):
        results = [result("i1", 0, parse_failures=1)]
        with pytest.raises(EmptyResults):
            evaluate(results, truth_set, exclude_parse_failures=True)

    def test_rmse_at_least_mae_on_random_cells(self):
        rng = np.random.default_rng(31)
        records = tuple(
            record(f"r{i}", f"cat{i % 5}", int(c))
            for i, c in enumerate(rng.integers(0, 400, size=200))
        )
        truth = AnnotationSet(records=records)
        results = [
            result(rec.image_id, float(max(0, rec.count + rng.normal(0, 25))))
            for rec in records
        ]
        report = evaluate(results, truth)
        cells = [report.overall, *report.per_band.values(), *report.per_category.values()]
        for cell in cells:
            assert cell.rmse >= cell.mae - 1e-9

    def test_matches_independent_accumulation(self):
        rng = np.random.default_rng(32)
        n = 50_000
        gts = rng.integers(0, 500, size=n).astype(float)
        preds = np.maximum(0.0, gts + rng.normal(0, 30, size=n))
        records = tuple(
            record(f"r{i}", "bulk", int(g)) for i, g in enumerate(gts)
        )
        truth = AnnotationSet(records=records)
        results = [result(f"r{i}", float(p)) for i, p in enumerate(preds)]
        report = evaluate(results, truth)
        mae, rmse = fsum_metrics(list(preds), list(gts))
        assert report.overall.mae == pytest.approx(mae, rel=1e-9)
        assert report.overall.rmse == pytest.approx(rmse, rel=1e-9)

    def test_custom_scheme(self):
        scheme = (
            DensityBand(BandName.SPARSE, CountRange(0, 50)),
            DensityBand(BandName.DENSE, CountRange(51, None)),
        )
        truth = AnnotationSet(records=(record("a", "x", 10), record("b", "x", 100)))
        report = evaluate([result("a", 10), result("b", 90)], truth, scheme=scheme)
        assert set(report.per_band) == {"sparse", "dense"}


class TestRenderTable:
    @pytest.fixture
    def report(self, truth_set):
        results = [result("i1", 14), result("i2", 30), result("i3", 100)]
        return evaluate(results, truth_set, config_fingerprint="deadbeef")

    def test_markdown_two_decimals(self, report):
        table = render_table(report, "markdown")
        lines = table.splitlines()
        assert lines[0].startswith("| scope")
        assert "12.33" in table and "17.60" in table
        assert table == render_table(report, "markdown")

    def test_band_rows_fixed_order(self, report):
        table = render_table(report, "markdown")
        sparse = table.index("band:sparse")
        medium = table.index("band:medium")
        dense = table.index("band:dense")
        assert sparse < medium < dense

    def test_csv_header_first(self, report):
        table = render_table(report, "csv")
        lines = table.splitlines()
        assert lines[0] == "scope,MAE,RMSE,n"
        assert lines[1].startswith("overall,12.33,17.60,3")

    def test_json_round_trips(self, report):
        import json

        payload = json.loads(render_table(report, "json"))
        assert payload["overall"]["n"] == 3
        assert payload["config_fingerprint"] == "deadbeef"

    def test_overall_only_when_no_categories(self):
        report = EvalReport(
            overall=MetricCell(1.0, 1.0, 1),
            per_band={},
            per_category={},
            parse_failure_count=0,
        )
        table = render_table(report, "markdown")
        assert "overall" in table and "category:" not in table

    def test_unknown_format(self, report):
        with pytest.raises(ValueError):
            render_table(report, "xml")


def test_report_to_dict_shape(truth_set):
    results = [result("i1", 14), result("i2", 30), result("i3", 100)]
    report = evaluate(results, truth_set, config_fingerprint="fp")
    payload = report_to_dict(report)
    assert payload["config_fingerprint"] == "fp"
    assert payload["per_band"]["sparse"]["n"] == 1
