from countforge.core import AnnotationSet
from countforge.figures import save_band_errors, save_pred_scatter, save_report_figures
from countforge.inference import InferenceResult
from countforge.metrics import evaluate

from conftest import record


def make_inputs():
    records = tuple(
        record(f"i{i}", "birds", count) for i, count in enumerate([5, 40, 150, 320])
    )
    truth = AnnotationSet(records=records)
    results = [
        InferenceResult(
            image_id=rec.image_id,
            global_count=rec.count,
            fused=float(rec.count) * 0.9,
            used_glce=False,
        )
        for rec in records
    ]
    return results, truth


def test_save_report_figures(tmp_path):
    results, truth = make_inputs()
    report = evaluate(results, truth)
    paths = save_report_figures(report, results, truth, tmp_path, stem="demo")
    assert [p.name for p in paths] == ["demo_band_errors.png", "demo_pred_scatter.png"]
    for path in paths:
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000


def test_individual_figure_helpers(tmp_path):
    results, truth = make_inputs()
    report = evaluate(results, truth)
    band_path = save_band_errors(report, tmp_path / "bands.png")
    scatter_path = save_pred_scatter(results, truth, tmp_path / "scatter.png")
    assert band_path.exists() and scatter_path.exists()
