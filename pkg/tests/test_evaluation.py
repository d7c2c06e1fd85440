import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinemorph.errors import InsufficientDataError, NoOverlapError, SchemaError
from spinemorph.evaluation import (
    AnnotationTable,
    evaluate,
    icc,
    icc_details,
    load_predictions,
    load_reference,
    mae,
)
from spinemorph.morphometry import DIMENSION_NAMES, measure_spine
from spinemorph.report import write_report

from oracles import SHROUT_FLEISS, SHROUT_FLEISS_ICC21, icc21_direct


# --- mae ----------------------------------------------------------------------------


def test_mae_basics():
    assert mae([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert mae([1, 2], [2, 4]) == 1.5
    with pytest.raises(ValueError, match="length mismatch"):
        mae([1, 2], [1])
    with pytest.raises(InsufficientDataError):
        mae([], [])


def test_mae_matches_loop_on_spine(straight_spine, random_spines):
    spine = random_spines[5]
    results = measure_spine(spine.model)
    pred, truth = [], []
    for label, res in results.items():
        for name in DIMENSION_NAMES:
            pred.append(getattr(res.measurements, name))
            truth.append(getattr(spine.truth[label].measurements, name))
    total = 0.0
    for p, t in zip(pred, truth):
        total += abs(p - t)
    assert mae(pred, truth) == total / len(pred)


# --- icc ----------------------------------------------------------------------------


def test_icc_published_example():
    assert icc(SHROUT_FLEISS) == pytest.approx(SHROUT_FLEISS_ICC21, abs=0.005)
    assert icc(SHROUT_FLEISS) == pytest.approx(icc21_direct(SHROUT_FLEISS), abs=1e-12)


def test_icc_perfect_agreement():
    col = np.array([3.0, 7.0, 1.0, 9.0, 4.0])
    assert icc(np.column_stack([col, col, col])) == 1.0


def test_icc_zero_variance_flagged():
    res = icc_details(np.full((4, 3), 2.5))
    assert res.value == 1.0 and res.degenerate


def test_icc_insufficient():
    with pytest.raises(InsufficientDataError):
        icc([[1.0, 2.0]])
    with pytest.raises(InsufficientDataError):
        icc([[1.0], [2.0]])
    with pytest.raises(InsufficientDataError):
        icc([[1.0, np.nan], [2.0, 3.0]])


def test_icc_random_matrices_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        m = rng.normal(30, 5, size=(6, 3)) + rng.normal(0, 4, size=(6, 1))
        assert abs(icc(m) - icc21_direct(m.tolist())) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(
    m=arrays(np.float64, (6, 3), elements=st.floats(1, 100)),
    a=st.floats(0.01, 100),
    b=st.floats(-1000, 1000),
)
def test_icc_affine_invariance(m, a, b):
    res = icc_details(m)
    if res.degenerate or np.ptp(m) < 1e-3:
        return
    assert abs(icc(a * m + b) - res.value) <= 1e-9


def test_icc_simulation_recovers_variance_ratio():
    rng = np.random.default_rng(99)
    n, k = 1000, 3
    target = rng.normal(0, 2.0, size=(n, 1))
    noise = rng.normal(0, 1.0, size=(n, k))
    # var(target) / (var(target) + var(noise)) = 4 / 5
    assert icc(50 + target + noise) == pytest.approx(0.8, abs=0.05)


# --- tables ---------------------------------------------------------------------------


def _long_csv(path, rows):
    lines = ["spine_id,label,rater_id,dimension,value_mm"]
    lines += [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _three_rater_table(tmp_path):
    rng = np.random.default_rng(5)
    rows, preds = [], {}
    for s in range(3):
        for label in ("L1", "L2", "L3", "L4"):
            key = (f"s{s}", label)
            preds[key] = {}
            for dim in DIMENSION_NAMES:
                base = rng.uniform(20, 50)
                vals = base + rng.normal(0, 0.5, size=3)
                for r, v in enumerate(vals):
                    rows.append((key[0], label, f"r{r}", dim, repr(float(v))))
                preds[key][dim] = float(np.mean(vals))
    path = tmp_path / "ann.csv"
    _long_csv(path, rows)
    return path, preds


def test_predictions_equal_rater_means(tmp_path):
    path, preds = _three_rater_table(tmp_path)
    report = evaluate(preds, load_reference(path))
    assert report.raters == ["r0", "r1", "r2"]
    for dim, s in report.dimensions.items():
        assert s.mae_mm == pytest.approx(0.0, abs=1e-12)
        assert s.icc_with_method >= s.icc_raters
        assert s.n == 12
    assert report.overall_mae_mm == pytest.approx(0.0, abs=1e-12)


def test_with_method_icc_matches_oracle(tmp_path):
    path, preds = _three_rater_table(tmp_path)
    ref = load_reference(path)
    report = evaluate(preds, ref)
    dim = "height_central"
    keys = sorted(ref.values)
    rows = [[ref.values[k][dim][r] for r in ("r0", "r1", "r2")] + [preds[k][dim]] for k in keys]
    assert report.dimensions[dim].icc_with_method == pytest.approx(icc21_direct(rows), abs=1e-12)
    assert report.dimensions[dim].icc_raters == pytest.approx(
        icc21_direct([r[:3] for r in rows]), abs=1e-12
    )


def test_missing_column_named(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("spine_id,label,rater_id,value_mm\ns,L1,r,3\n")
    with pytest.raises(SchemaError, match="dimension"):
        load_reference(path)


def test_wide_table_missing_dimension(tmp_path):
    path = tmp_path / "gt.csv"
    cols = ["spine_id", "label"] + [d for d in DIMENSION_NAMES if d != "depth_lower"]
    path.write_text(",".join(cols) + "\n")
    with pytest.raises(SchemaError, match="depth_lower"):
        load_reference(path)


def test_empty_annotation_file(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("")
    with pytest.raises(SchemaError):
        load_reference(path)
    path.write_text("spine_id,label,rater_id,dimension,value_mm\n")
    with pytest.raises(SchemaError, match="no reference rows"):
        load_reference(path)


def test_bad_rows(tmp_path):
    path = tmp_path / "ann.csv"
    _long_csv(path, [("s", "L1", "r", "width_upper", "abc")])
    with pytest.raises(SchemaError, match=":2:"):
        load_reference(path)
    _long_csv(path, [("s", "L1", "r", "girth", "3")])
    with pytest.raises(SchemaError, match="girth"):
        load_reference(path)
    _long_csv(path, [("s", "L1", "r", "width_upper", "3"), ("s", "L1", "r", "width_upper", "4")])
    with pytest.raises(SchemaError, match="duplicate"):
        load_reference(path)


def test_no_overlap():
    ref = AnnotationTable()
    ref.add("a", "L1", "r", "width_upper", 40.0)
    with pytest.raises(NoOverlapError):
        evaluate({("b", "L1"): {d: 1.0 for d in DIMENSION_NAMES}}, ref)


def test_single_rater_truth_omits_rater_icc(tmp_path, straight_spine):
    results = measure_spine(straight_spine.model)
    write_report(results, tmp_path / "pred", "spine_000", with_csv=True)
    from spinemorph.synthetic import GROUND_TRUTH_COLUMNS, ground_truth_rows

    import csv

    with open(tmp_path / "gt.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GROUND_TRUTH_COLUMNS)
        w.writeheader()
        w.writerows(ground_truth_rows("spine_000", straight_spine))
    ref = load_reference(tmp_path / "gt.csv")
    assert ref.raters == ["truth"]
    for source in (tmp_path / "pred", tmp_path / "pred" / "spine_000.json", tmp_path / "pred" / "spine_000.csv"):
        report = evaluate(load_predictions(source), ref)
        assert report.overall_mae_mm < 1e-6
        assert all(s.icc_raters is None for s in report.dimensions.values())
        assert report.n_vertebrae == 5
    doc = report.to_dict()
    json.dumps(doc)
    lines = report.to_csv().splitlines()
    assert lines[0] == "dimension,mae_mm,icc_raters,icc_with_method,n"
    assert lines[-1].startswith("overall,")
    assert "overall MAE" in report.table()


def test_predictions_skip_failed_vertebrae(tmp_path):
    doc = {
        "spine_id": "s",
        "vertebrae": {
            "L1": {"error": {"type": "EmptyBodyError", "message": "x"}},
            "L2": {"dimensions_mm": {d: 30.0 for d in DIMENSION_NAMES}},
        },
    }
    (tmp_path / "s.json").write_text(json.dumps(doc))
    (tmp_path / "s.timings.json").write_text("{}")
    assert list(load_predictions(tmp_path)) == [("s", "L2")]


def test_predictions_not_a_report(tmp_path):
    (tmp_path / "x.json").write_text("[1, 2]")
    with pytest.raises(SchemaError):
        load_predictions(tmp_path / "x.json")
