"""
Agreement statistics: mean absolute error against a reference and the
two-way random-effects intraclass correlation ICC(2,1).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, NoOverlapError, SchemaError
from .morphometry import DIMENSION_NAMES

ICC_FORM = "ICC(2,1): two-way random effects, absolute agreement, single measurement"


def mae(predicted, truth) -> float:
    """Mean absolute difference between paired values."""
    p = np.asarray(predicted, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} references")
    if len(p) == 0:
        raise InsufficientDataError("mae of empty input")
    return float(np.mean(np.abs(p - t)))


@dataclass(frozen=True)
class IccResult:
    value: float
    ms_rows: float
    ms_cols: float
    ms_error: float
    n: int
    k: int
    degenerate: bool = False


def icc_details(ratings) -> IccResult:
    """
    ICC(2,1) with its ANOVA mean squares.

    Parameters
    ----------
    ratings : (n, k) array_like
      One row per target, one column per rater.

    A matrix with no variance at all is defined to have ICC 1.0 and is
    flagged ``degenerate``.
    """
    y = np.asarray(ratings, dtype=np.float64)
    if y.ndim != 2:
        raise InsufficientDataError("ratings must be a 2D (targets x raters) matrix")
    n, k = y.shape
    if n < 2 or k < 2:
        raise InsufficientDataError(f"need at least 2 targets and 2 raters, got {n}x{k}")
    if not np.isfinite(y).all():
        raise InsufficientDataError("ratings contain missing or non-finite values")
    grand = y.mean()
    ss_rows = k * np.sum((y.mean(axis=1) - grand) ** 2)
    ss_cols = n * np.sum((y.mean(axis=0) - grand) ** 2)
    ss_total = np.sum((y - grand) ** 2)
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    denom = msr + (k - 1) * mse + k * (msc - mse) / n
    scale = max(abs(msr), abs(msc), abs(mse))
    if ss_total <= 1e-24 * max(1.0, grand * grand) * y.size or abs(denom) <= 1e-15 * scale:
        return IccResult(1.0, msr, msc, mse, n, k, degenerate=True)
    if (y == y[:, :1]).all():
        # identical raters: error and rater terms vanish exactly
        return IccResult(1.0, msr, 0.0, 0.0, n, k)
    return IccResult(float((msr - mse) / denom), msr, msc, mse, n, k)


def icc(ratings) -> float:
    """ICC(2,1) of an (n targets x k raters) matrix."""
    return icc_details(ratings).value


# --- tables -----------------------------------------------------------------------

ANNOTATION_COLUMNS = ("spine_id", "label", "rater_id", "dimension", "value_mm")


@dataclass
class AnnotationTable:
    """Reference measurements keyed by (spine_id, label) then dimension, rater."""

    values: dict = field(default_factory=dict)

    def add(self, spine_id: str, label: str, rater_id: str, dimension: str, value: float):
        slot = self.values.setdefault((spine_id, label), {}).setdefault(dimension, {})
        if rater_id in slot:
            raise SchemaError(f"duplicate rating for {spine_id}/{label}/{rater_id}/{dimension}")
        if not value > 0:
            raise SchemaError(f"non-positive value for {spine_id}/{label}/{rater_id}/{dimension}")
        slot[rater_id] = float(value)

    @property
    def raters(self) -> list[str]:
        out = set()
        for dims in self.values.values():
            for by_rater in dims.values():
                out.update(by_rater)
        return sorted(out)


def _read_csv(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"table not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not header:
        raise SchemaError(f"{path}: empty table")
    return header, rows


def _parse_float(text, where: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: {text!r} is not a number") from None


def load_reference(path) -> AnnotationTable:
    """
    Read either a long-format annotation CSV (one row per rating) or a
    wide ground-truth CSV (one row per vertebra, one column per dimension),
    which is treated as a single rater named ``truth``.
    """
    header, rows = _read_csv(path)
    table = AnnotationTable()
    if "rater_id" in header or "dimension" in header:
        missing = [c for c in ANNOTATION_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        for i, r in enumerate(rows, 2):
            if r["dimension"] not in DIMENSION_NAMES:
                raise SchemaError(f"{path}:{i}: unknown dimension {r['dimension']!r}")
            table.add(r["spine_id"], r["label"], r["rater_id"], r["dimension"],
                      _parse_float(r["value_mm"], f"{path}:{i}"))
    else:
        missing = [c for c in ("spine_id", "label", *DIMENSION_NAMES) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        for i, r in enumerate(rows, 2):
            for dim in DIMENSION_NAMES:
                table.add(r["spine_id"], r["label"], "truth", dim, _parse_float(r[dim], f"{path}:{i}"))
    if not table.values:
        raise SchemaError(f"{path}: no reference rows")
    return table


def load_predictions(path) -> dict:
    """
    Predictions as ``{(spine_id, label): {dimension: value}}``.

    ``path`` may be a report JSON, a flat prediction CSV, or a directory
    of report JSON files (timing sidecars are skipped). A report's spine
    id is its ``spine_id`` field, falling back to the file stem.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.glob("*.json") if not p.name.endswith(".timings.json"))
        if not files:
            raise SchemaError(f"{path}: no report files")
    elif path.is_file():
        files = [path]
    else:
        raise FileNotFoundError(f"predictions not found: {path}")
    out = {}
    for f in files:
        if f.suffix.lower() == ".csv":
            header, rows = _read_csv(f)
            missing = [c for c in ("spine_id", "label", *DIMENSION_NAMES) if c not in header]
            if missing:
                raise SchemaError(f"{f}: missing column(s) {', '.join(missing)}")
            for i, r in enumerate(rows, 2):
                if r.get("error"):
                    continue
                out[(r["spine_id"], r["label"])] = {
                    d: _parse_float(r[d], f"{f}:{i}") for d in DIMENSION_NAMES
                }
            continue
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{f}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict) or "vertebrae" not in doc:
            raise SchemaError(f"{f}: not a measurement report")
        spine_id = doc.get("spine_id") or f.stem
        for label, entry in doc["vertebrae"].items():
            dims = entry.get("dimensions_mm")
            if not dims:
                continue
            missing = [d for d in DIMENSION_NAMES if d not in dims]
            if missing:
                raise SchemaError(f"{f}: {label} lacks dimension(s) {', '.join(missing)}")
            out[(spine_id, label)] = {d: float(dims[d]) for d in DIMENSION_NAMES}
    return out


@dataclass
class DimensionSummary:
    mae_mm: float | None
    icc_raters: float | None
    icc_with_method: float | None
    n: int


@dataclass
class EvaluationReport:
    dimensions: dict
    overall_mae_mm: float | None
    n_vertebrae: int
    raters: list
    residuals: list
    warnings: list = field(default_factory=list)
    icc_form: str = ICC_FORM

    def to_dict(self) -> dict:
        return {
            "icc_form": self.icc_form,
            "n_vertebrae": self.n_vertebrae,
            "raters": self.raters,
            "overall_mae_mm": self.overall_mae_mm,
            "dimensions": {k: vars(v) for k, v in self.dimensions.items()},
            "residuals": self.residuals,
            "warnings": self.warnings,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dimension", "mae_mm", "icc_raters", "icc_with_method", "n"])
        for name, s in self.dimensions.items():
            w.writerow([name, _fmt(s.mae_mm), _fmt(s.icc_raters), _fmt(s.icc_with_method), s.n])
        w.writerow(["overall", _fmt(self.overall_mae_mm), "", "", self.n_vertebrae])
        return buf.getvalue()

    def table(self) -> str:
        """Text table with one column per dimension."""
        short = {
            "width_upper": "wu1wu2", "width_lower": "wl1wl2",
            "depth_upper": "du1du2", "depth_lower": "dl1dl2",
            "height_central": "h1h2", "height_anterior": "du1dl1",
            "height_posterior": "du2dl2", "height_left": "wu1wl1",
            "height_right": "wu2wl2",
        }
        names = list(self.dimensions)
        lines = ["%-14s" % "metric" + "".join("%9s" % short[n] for n in names)]
        for title, attr in (("MAE [mm]", "mae_mm"), ("ICC raters", "icc_raters"),
                            ("ICC +method", "icc_with_method")):
            cells = [getattr(self.dimensions[n], attr) for n in names]
            if all(c is None for c in cells):
                continue
            lines.append("%-14s" % title + "".join(
                "%9s" % ("-" if c is None else "%.2f" % c) for c in cells))
        if self.overall_mae_mm is not None:
            lines.append(f"overall MAE: {self.overall_mae_mm:.3f} mm over {self.n_vertebrae} vertebrae")
        return "\n".join(lines)


def _fmt(v):
    return "" if v is None else repr(float(v))


def _clip_icc(value: float, where: str, warnings: list) -> float:
    if value < -1 or value > 1:
        warnings.append(f"{where}: ICC {value:.3f} outside [-1, 1], clipped")
        return float(np.clip(value, -1, 1))
    return value


def evaluate(predictions: dict, reference: AnnotationTable) -> EvaluationReport:
    """
    Compare predictions against reference ratings.

    The reference value for each vertebra and dimension is the mean over
    raters. ICC is reported over the raters alone (when there are at
    least two) and over the raters plus the method as an extra rater,
    using only vertebrae every rater scored.
    """
    keys = sorted(set(predictions) & set(reference.values))
    if not keys:
        raise NoOverlapError("predictions and reference share no (spine_id, label) pair")
    raters = reference.raters
    warnings: list[str] = []
    dims = {}
    residuals = []
    abs_all = []
    for dim in DIMENSION_NAMES:
        pred, ref, rows_raters = [], [], []
        for key in keys:
            by_rater = reference.values[key].get(dim)
            if not by_rater:
                continue
            pred.append(predictions[key][dim])
            ref.append(np.mean(list(by_rater.values())))
            if all(r in by_rater for r in raters):
                rows_raters.append([by_rater[r] for r in raters] + [predictions[key][dim]])
        if not pred:
            dims[dim] = DimensionSummary(None, None, None, 0)
            continue
        resid = np.asarray(pred) - np.asarray(ref)
        abs_all.extend(np.abs(resid))
        icc_r = icc_m = None
        m = np.asarray(rows_raters)
        if len(m) >= 2:
            if len(raters) >= 2:
                res = icc_details(m[:, :-1])
                icc_r = _clip_icc(res.value, f"{dim} raters", warnings)
                if res.degenerate:
                    warnings.append(f"{dim}: raters-only ratings have zero variance; ICC set to 1")
            res = icc_details(m)
            icc_m = _clip_icc(res.value, f"{dim} with method", warnings)
            if res.degenerate:
                warnings.append(f"{dim}: ratings have zero variance; ICC set to 1")
        dims[dim] = DimensionSummary(mae(pred, ref), icc_r, icc_m, len(pred))
        for key, p, r in zip([k for k in keys if reference.values[k].get(dim)], pred, ref):
            residuals.append({
                "spine_id": key[0], "label": key[1], "dimension": dim,
                "predicted_mm": float(p), "reference_mm": float(r), "residual_mm": float(p - r),
            })
    overall = float(np.mean(abs_all)) if abs_all else None
    return EvaluationReport(
        dimensions=dims,
        overall_mae_mm=overall,
        n_vertebrae=len(keys),
        raters=raters,
        residuals=residuals,
        warnings=warnings,
    )
