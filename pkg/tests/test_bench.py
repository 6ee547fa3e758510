import pytest

from ngmeet.bench import band_scaling, scaling_summary
from ngmeet.pipeline import NgmeetConfig


def test_band_scaling_rows():
    rows = band_scaling(bands=(8, 12), rows=20, cols=20, sigma=30, rank=3, repeats=1, config=NgmeetConfig(max_iter=2))
    assert [r["bands"] for r in rows] == [8, 12]
    for r in rows:
        assert r["iterations"] == 2 and r["final_rank"] == 5
        assert r["total"] >= r["stage_a"] + r["stage_b"] > 0


def test_scaling_summary_arithmetic():
    rows = [
        {"bands": 64, "stage_b": 1.2, "total": 4.0},
        {"bands": 32, "stage_b": 1.0, "total": 2.0},
    ]
    s = scaling_summary(rows)
    assert s["stage_b_spread"] == pytest.approx(0.2)
    assert s["total_ratio_max"] == pytest.approx(2.0)
