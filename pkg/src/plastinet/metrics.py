"""Binary-classification metrics: confusion counts, derived ratios, ROC-AUC.

Ratios are formed as exact fractions from the integer counts and only turned
into floats at the end; a ratio with a zero denominator is reported as
``None`` (undefined) rather than 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class EvalReport:
    cm: ConfusionMatrix
    threshold: float
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    ppv: float | None
    npv: float | None
    f1: float | None
    auc: float | None = None
    exact: dict = field(default_factory=dict, repr=False)

    RATIO_FIELDS = ("accuracy", "sensitivity", "specificity", "ppv", "npv", "f1")

    def rounded(self, digits: int = 4) -> dict[str, float | None]:
        out = {}
        for name in self.RATIO_FIELDS + ("auc",):
            v = getattr(self, name)
            out[name] = None if v is None else round(v, digits)
        return out


def _check_pair(labels, probs):
    labels = np.asarray(labels).astype(int).ravel()
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if labels.size != probs.size:
        raise ValueError(f"length mismatch: {labels.size} labels vs {probs.size} scores")
    if labels.size == 0:
        raise ValueError("need at least one sample")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    return labels, probs


def confusion(labels, probs, threshold: float = 0.5) -> ConfusionMatrix:
    labels, probs = _check_pair(labels, probs)
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pred = probs >= threshold
    pos = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def _ratio(num: int, den: int) -> Fraction | None:
    return Fraction(num, den) if den else None


def exact_ratios(cm: ConfusionMatrix) -> dict[str, Fraction | None]:
    tp, tn, fp, fn = cm.tp, cm.tn, cm.fp, cm.fn
    return {
        "accuracy": _ratio(tp + tn, cm.total),
        "sensitivity": _ratio(tp, tp + fn),
        "specificity": _ratio(tn, tn + fp),
        "ppv": _ratio(tp, tp + fp),
        "npv": _ratio(tn, tn + fn),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
    }


def derive(cm: ConfusionMatrix, threshold: float = 0.5) -> EvalReport:
    exact = exact_ratios(cm)
    floats = {k: (None if v is None else float(v)) for k, v in exact.items()}
    return EvalReport(cm=cm, threshold=threshold, exact=exact, **floats)


def auc_roc(labels, probs) -> float:
    """Mann-Whitney AUC from midranks; ties between classes count one half."""
    labels, probs = _check_pair(labels, probs)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    order = np.argsort(probs, kind="mergesort")
    sorted_scores = probs[order]
    ranks = np.empty(labels.size, dtype=np.float64)
    # midrank over each run of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], labels.size]
    mid = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mid, ends - starts)
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(labels, probs) -> list[tuple[float, float]]:
    """ROC staircase from (0,0) to (1,1), one vertex per distinct score threshold."""
    labels, probs = _check_pair(labels, probs)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative sample")
    order = np.argsort(-probs, kind="mergesort")
    s, y = probs[order], labels[order]
    tps = np.cumsum(y)
    fps = np.cumsum(1 - y)
    last = np.r_[s[1:] != s[:-1], True]
    pts = [(0.0, 0.0)]
    pts += [(fp / n_neg, tp / n_pos) for fp, tp in zip(fps[last], tps[last])]
    return pts


def trapezoid_area(points) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def evaluate(labels, probs, threshold: float = 0.5) -> EvalReport:
    report = derive(confusion(labels, probs, threshold), threshold)
    try:
        report.auc = auc_roc(labels, probs)
    except UndefinedMetricError:
        report.auc = None
    return report


# --- emitters ---------------------------------------------------------------

def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.6f}"


def write_report(path, report: EvalReport) -> None:
    lines = [f"threshold = {report.threshold:.6f}"]
    for k in ("tp", "tn", "fp", "fn"):
        lines.append(f"{k} = {getattr(report.cm, k)}")
    for k in EvalReport.RATIO_FIELDS + ("auc",):
        lines.append(f"{k} = {_fmt(getattr(report, k))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def write_confusion_csv(path, cm: ConfusionMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actual", "predicted_negative", "predicted_positive"])
        w.writerow(["negative", cm.tn, cm.fp])
        w.writerow(["positive", cm.fn, cm.tp])


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="") as fh:
        rows = {r["actual"]: r for r in csv.DictReader(fh)}
    return ConfusionMatrix(
        tp=int(rows["positive"]["predicted_positive"]),
        tn=int(rows["negative"]["predicted_negative"]),
        fp=int(rows["negative"]["predicted_positive"]),
        fn=int(rows["positive"]["predicted_negative"]),
    )


def write_report_csv(path, report: EvalReport) -> None:
    keys = ["threshold", "tp", "tn", "fp", "fn", *EvalReport.RATIO_FIELDS, "auc"]
    vals = [f"{report.threshold:.6f}", report.cm.tp, report.cm.tn, report.cm.fp, report.cm.fn]
    vals += [_fmt(getattr(report, k)) for k in EvalReport.RATIO_FIELDS + ("auc",)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        w.writerow(vals)


def roc_svg(points, auc: float | None = None, width: int = 640, height: int = 480) -> str:
    margin = 50
    pw, ph = width - 2 * margin, height - 2 * margin

    def xy(fpr, tpr):
        return f"{margin + fpr * pw:.2f},{height - margin - tpr * ph:.2f}"

    poly = " ".join(xy(x, y) for x, y in points)
    title = "ROC" if auc is None else f"ROC (AUC = {auc:.4f})"
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{margin}" stroke="gray" stroke-dasharray="4 4"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="14">false positive rate</text>',
        f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="14" transform="rotate(-90 16 {height / 2})">true positive rate</text>',
        f'<text x="{width / 2}" y="30" text-anchor="middle" font-size="16">{title}</text>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{poly}"/>',
        "</svg>",
        "",
    ])


def curves_svg(series: dict[str, list[float]], epochs: list[int], width: int = 640, height: int = 480) -> str:
    """Per-epoch polylines on a shared [0, 1] axis; a single epoch is drawn as point markers.

    Series that leave [0, 1] (the learning rate) are scaled by their maximum and the legend says so.
    """
    margin = 50
    pw, ph = width - 2 * margin, height - 2 * margin
    colours = ["steelblue", "darkorange", "seagreen", "firebrick", "purple"]
    lo, hi = (min(epochs), max(epochs)) if epochs else (0, 1)
    span = max(hi - lo, 1)

    def xy(e, v):
        return f"{margin + (e - lo) / span * pw:.2f},{height - margin - v * ph:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="14">epoch</text>',
    ]
    for i, (name, values) in enumerate(series.items()):
        colour = colours[i % len(colours)]
        finite = [v for v in values if np.isfinite(v)]
        top = max(finite) if finite else 1.0
        label = name
        if finite and (top > 1.0 or min(finite) < 0.0 or name == "lr"):
            values = [v / top if top else 0.0 for v in values]
            label = f"{name} (/ {top:.3g})"
        pts = [(e, v) for e, v in zip(epochs, values) if np.isfinite(v)]
        if len(pts) == 1:
            x, y = xy(*pts[0]).split(",")
            out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="{colour}"/>')
        elif pts:
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" '
                       f'points="{" ".join(xy(e, v) for e, v in pts)}"/>')
        out.append(f'<text x="{width - margin - 150}" y="{margin + 18 * i}" font-size="13" fill="{colour}">{label}</text>')
    out += ["</svg>", ""]
    return "\n".join(out)
