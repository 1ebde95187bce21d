"""Standard monocular-depth error metrics, masking, alignment and reports.

The seven statistics are the usual suite: AbsRel, SqRel, RMSE, RMSE(log)
and the three accuracy-under-threshold fractions delta < 1.25^k. The
threshold comparison is strict ('<'), the log is natural, and SqRel uses
(pred - gt)^2 / gt. Relative-depth predictors can be aligned first, either
by median scaling or by an affine fit in inverse-depth space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, EvaluationError, ShapeError
from .render import DepthMap

ALIGN_NONE = "none"
ALIGN_MEDIAN = "median-scale"
ALIGN_AFFINE = "affine-inverse-depth"
ALIGN_MODES = (ALIGN_NONE, ALIGN_MEDIAN, ALIGN_AFFINE)


@dataclass(frozen=True)
class MetricReport:
    """The seven Table-style statistics plus pixel count and alignment mode."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    valid_pixel_count: int
    alignment: str = ALIGN_NONE

    def __post_init__(self):
        if self.valid_pixel_count < 1:
            raise EvaluationError("a metric report needs at least one pixel")
        for name in ("abs_rel", "sq_rel", "rmse", "rmse_log"):
            if getattr(self, name) < 0:
                raise EvaluationError("%s must be >= 0" % name)
        d1, d2, d3 = self.delta1, self.delta2, self.delta3
        if not (0.0 <= d1 <= d2 <= d3 <= 1.0):
            raise EvaluationError("delta fractions must be increasing and in [0, 1]")
        if self.alignment not in ALIGN_MODES:
            raise EvaluationError("unknown alignment mode %r" % self.alignment)

    def as_tuple(self):
        return (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                self.delta1, self.delta2, self.delta3)


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, DepthMap) else np.asarray(x, dtype=np.float64)


def valid_mask(gt, pred, near_clip: float | None = None,
               far_clip: float | None = None) -> np.ndarray:
    """Pixels where metrics are defined: ground truth valid (nonzero, inside
    the clips when given) and prediction finite and positive."""
    g = _values(gt)
    p = _values(pred)
    if g.shape != p.shape:
        raise ShapeError("gt %s and pred %s differ in shape" % (g.shape, p.shape))
    mask = (g > 0.0) & np.isfinite(g) & np.isfinite(p) & (p > 0.0)
    if near_clip is not None:
        mask &= g > near_clip
    if far_clip is not None:
        mask &= g <= far_clip
    return mask


def compute_metrics(gt, pred, mask, alignment: str = ALIGN_NONE) -> MetricReport:
    """Evaluate the seven statistics over the masked pixels."""
    g = _values(gt)
    p = _values(pred)
    m = np.asarray(mask, dtype=bool)
    if g.shape != p.shape or g.shape != m.shape:
        raise ShapeError("gt/pred/mask shapes differ")
    if not m.any():
        raise EvaluationError("mask selects no pixels")
    d = g[m]
    dh = p[m]
    if np.any(d <= 0) or np.any(dh <= 0):
        raise EvaluationError("masked depths must be strictly positive")

    err = dh - d
    abs_rel = float(np.mean(np.abs(err) / d))
    sq_rel = float(np.mean(err ** 2 / d))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    rmse_log = float(np.sqrt(np.mean((np.log(dh) - np.log(d)) ** 2)))
    ratio = np.maximum(dh / d, d / dh)
    delta1 = float(np.mean(ratio < 1.25))
    delta2 = float(np.mean(ratio < 1.25 ** 2))
    delta3 = float(np.mean(ratio < 1.25 ** 3))
    return MetricReport(abs_rel, sq_rel, rmse, rmse_log, delta1, delta2, delta3,
                        valid_pixel_count=int(d.size), alignment=alignment)


def align_prediction(gt, pred, mask, mode: str = ALIGN_NONE):
    """Normalize a relative-depth prediction against ground truth.

    none: prediction returned unchanged.
    median-scale: prediction times median(gt / pred) over the mask.
    affine-inverse-depth: prediction values are treated as inverse depth;
        (a, b) minimizing sum((a*p + b - 1/gt)^2) over the mask is solved by
        least squares and the output depth is 1/(a*p + b), with nonpositive
        or non-finite results invalidated to 0.

    Returns a DepthMap when given one, else an ndarray.
    """
    if mode not in ALIGN_MODES:
        raise AlignmentError("unknown alignment mode %r" % mode)
    p = _values(pred)
    if mode == ALIGN_NONE:
        return pred
    g = _values(gt)
    m = np.asarray(mask, dtype=bool)
    if g.shape != p.shape or g.shape != m.shape:
        raise ShapeError("gt/pred/mask shapes differ")
    if not m.any():
        raise AlignmentError("mask selects no pixels")

    if mode == ALIGN_MEDIAN:
        if np.any(p[m] <= 0) or np.any(g[m] <= 0):
            raise AlignmentError("median scaling needs positive masked depths")
        scale = float(np.median(g[m] / p[m]))
        out = p * scale
    else:
        pm = p[m]
        if np.any(g[m] <= 0):
            raise AlignmentError("affine alignment needs positive masked ground truth")
        if np.ptp(pm) == 0.0:
            raise AlignmentError("prediction is constant over the mask; affine fit is degenerate")
        target = 1.0 / g[m]
        A = np.column_stack([pm, np.ones_like(pm)])
        (a, b), residual, rank, _ = np.linalg.lstsq(A, target, rcond=None)
        if rank < 2:
            raise AlignmentError("affine system is rank-deficient")
        inv = a * p + b
        out = np.zeros_like(p)
        ok = np.isfinite(inv) & (inv > 0.0) & np.isfinite(p)
        out[ok] = 1.0 / inv[ok]
    if isinstance(pred, DepthMap):
        return DepthMap(np.where(np.isfinite(out) & (out > 0), out, 0.0))
    return out


def aggregate_report(reports, weights=None) -> MetricReport:
    """Pixel-weighted pooling equal to evaluating the concatenated pixel
    set: plain means pool by weighted mean, the RMSE family pools by
    weighted mean of squares then root. Pass equal weights for
    frame-averaged aggregation."""
    reports = list(reports)
    if not reports:
        raise EvaluationError("cannot aggregate zero reports")
    if len(reports) == 1:
        return reports[0]
    if weights is None:
        weights = [r.valid_pixel_count for r in reports]
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(reports) or np.any(w < 0) or w.sum() == 0:
        raise EvaluationError("aggregation weights must be non-negative and not all zero")
    total = float(w.sum())

    # raw weights with a single final division keep constant inputs exact
    # (pooling fifty deltas of exactly 1.0 must stay exactly 1.0)
    def pool(vals):
        return float(np.dot(w, vals) / total)

    return MetricReport(
        abs_rel=pool([r.abs_rel for r in reports]),
        sq_rel=pool([r.sq_rel for r in reports]),
        rmse=float(np.sqrt(pool([r.rmse ** 2 for r in reports]))),
        rmse_log=float(np.sqrt(pool([r.rmse_log ** 2 for r in reports]))),
        delta1=min(pool([r.delta1 for r in reports]), 1.0),
        delta2=min(pool([r.delta2 for r in reports]), 1.0),
        delta3=min(pool([r.delta3 for r in reports]), 1.0),
        valid_pixel_count=int(sum(r.valid_pixel_count for r in reports)),
        alignment=reports[0].alignment,
    )


REPORT_COLUMNS = ("Abs Rel", "Sq Rel", "RMSE", "RMSElog",
                  "d<1.25", "d<1.25^2", "d<1.25^3")


def format_report(report: MetricReport, name: str = "method") -> str:
    """Two-line table: column header plus one row, values at four decimals
    separated by single spaces."""
    return format_table([(name, report)])


def format_table(named_reports) -> str:
    """One row per method in Table column order."""
    name_width = max([len("Method")] + [len(n) for n, _ in named_reports])
    lines = ["%-*s %s" % (name_width, "Method", " ".join(REPORT_COLUMNS))]
    for name, rep in named_reports:
        row = " ".join("%.4f" % v for v in rep.as_tuple())
        lines.append("%-*s %s" % (name_width, name, row))
    return "\n".join(lines)


def report_to_dict(report: MetricReport) -> dict:
    return {
        "abs_rel": report.abs_rel,
        "sq_rel": report.sq_rel,
        "rmse": report.rmse,
        "rmse_log": report.rmse_log,
        "delta1": report.delta1,
        "delta2": report.delta2,
        "delta3": report.delta3,
        "valid_pixel_count": report.valid_pixel_count,
        "alignment": report.alignment,
    }
