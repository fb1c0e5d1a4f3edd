import pytest

from tokcomp.errors import FormatError
from tokcomp.metrics import (CompressionReport, LayerCount, aggregate_reports,
                             layer_flops, pipeline_flops, reduction_ratio)


def llm_trace(visual_counts, text=0, base=None):
    base = base if base is not None else max(visual_counts)
    return [LayerCount("llm", i, v, text, base) for i, v in enumerate(visual_counts)]


def test_layer_flops_value():
    assert layer_flops(100, 64) == 1_049_600


def test_layer_flops_zero_tokens():
    assert layer_flops(0, 64) == 0


def test_quadratic_term_scales_4x():
    d = 16
    full = layer_flops(200, d) - 200 * d * d
    half = layer_flops(100, d) - 100 * d * d
    assert full == 4 * half


def test_layer_flops_monotone():
    assert layer_flops(10, 8) < layer_flops(11, 8) < layer_flops(11, 9)


def test_pipeline_flops_constant_trace():
    trace = llm_trace([32, 32, 32], text=4, base=32)
    base, compressed = pipeline_flops(trace, 8)
    assert base == compressed == 3 * layer_flops(36, 8)


def test_pipeline_flops_drop_at_layer():
    trace = llm_trace([64, 64, 0, 0], text=0, base=64)
    base, compressed = pipeline_flops(trace, 4)
    assert base == 4 * layer_flops(64, 4)
    assert compressed == 2 * layer_flops(64, 4)


def test_reduction_no_compression():
    retention, pruning = reduction_ratio(llm_trace([256] * 4, base=256))
    assert retention == 1.0 and pruning == 0.0


def test_reduction_half_average():
    retention, pruning = reduction_ratio(llm_trace([256, 256, 0, 0], base=256))
    assert retention == pytest.approx(0.5)
    assert pruning == pytest.approx(0.5)


def test_reduction_mixed_stage_trace():
    trace = [LayerCount("encoder", 0, 16, 0, 16),
             LayerCount("encoder", 1, 9, 0, 16),
             LayerCount("llm", 0, 9, 4, 16),
             LayerCount("llm", 1, 2, 4, 16)]
    retention, pruning = reduction_ratio(trace)
    # hand-computed: (16 + 9 + 9 + 2) / 4 = 9, base 16
    assert retention == pytest.approx(9 / 16)
    assert pruning == pytest.approx(7 / 16)


def test_counts_must_be_non_negative():
    with pytest.raises(ValueError):
        LayerCount("llm", 0, -1, 0, 4)


def report_fixture():
    trace = tuple(llm_trace([8, 4, 0], text=2, base=8))
    base, compressed = pipeline_flops(trace, 4)
    retention, pruning = reduction_ratio(trace)
    return CompressionReport(trace, base, compressed, retention, pruning, 12,
                             {"total_ms": 1.5})


def test_report_round_trip(tmp_path):
    report = report_fixture()
    path = tmp_path / "report.json"
    report.save(path)
    back = CompressionReport.load(path)
    assert back == report


def test_report_validates_ratio_sum():
    with pytest.raises(ValueError):
        CompressionReport((), 10, 5, 0.9, 0.2, 0)


def test_report_rejects_flops_inflation():
    with pytest.raises(ValueError):
        CompressionReport((), 5, 10, 0.5, 0.5, 0)


def test_report_rejects_bad_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": 99}')
    with pytest.raises(FormatError):
        CompressionReport.load(path)


def make_report(visual_counts, base):
    trace = tuple(llm_trace(visual_counts, base=base))
    b, c = pipeline_flops(trace, 4)
    retention, pruning = reduction_ratio(trace)
    return CompressionReport(trace, b, c, retention, pruning, 0)


def test_aggregate_reports_both_conventions():
    # run A: 2 layers at 1/2 retention; run B: 4 layers at 1/4 retention
    run_a = make_report([8, 0], base=8)
    run_b = make_report([8, 0, 0, 0], base=8)
    agg = aggregate_reports([run_a, run_b])
    assert agg["runs"] == 2
    assert agg["retention_mean_of_runs"] == pytest.approx((0.5 + 0.25) / 2)
    # pooled: (8+0+8+0+0+0) / 6 over base 8
    assert agg["retention_pooled"] == pytest.approx(16 / 6 / 8)
    assert agg["pruning_pooled"] + agg["retention_pooled"] == pytest.approx(1.0)


def test_aggregate_requires_reports():
    with pytest.raises(ValueError):
        aggregate_reports([])
