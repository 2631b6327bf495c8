"""Evaluation metrics: accuracy, confidence intervals, FAR/FRR curves, AUC.

Detection curves plot false alarm rate (negatives accepted) against
false reject rate (positives rejected) while sweeping an acceptance
threshold over the keyword posterior.  Per-keyword curves are combined
by vertical averaging: each curve is interpolated onto a shared
false-alarm grid and the false-reject values are averaged pointwise.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_THRESHOLDS = np.linspace(0.0, 1.0, 101)


class EvalError(ValueError):
    """Metric preconditions violated (empty input, degenerate classes...)."""


@dataclass
class PosteriorRecord:
    example_id: str
    true_class: int
    posterior: np.ndarray


@dataclass
class RocCurve:
    """Threshold sweep of (false alarm, false reject) rates for one label."""

    label: str
    thresholds: np.ndarray
    false_alarm: np.ndarray
    false_reject: np.ndarray


def accuracy(records) -> float:
    """Fraction of records whose posterior argmax matches the true class.

    Ties break toward the lowest class index.
    """
    if not records:
        raise EvalError("accuracy of an empty record set is undefined")
    correct = sum(int(np.argmax(r.posterior)) == r.true_class for r in records)
    return correct / len(records)


def confidence_interval(run_values) -> tuple[float, float]:
    """Student-t 95% confidence interval: (mean, halfwidth) over runs."""
    values = np.asarray(run_values, dtype=np.float64)
    if values.size < 2:
        raise EvalError("confidence interval needs at least 2 runs")
    n = values.size
    halfwidth = stats.t.ppf(0.975, n - 1) * values.std(ddof=1) / np.sqrt(n)
    return float(values.mean()), float(halfwidth)


def roc_keyword(records, keyword_class: int, thresholds=None) -> RocCurve:
    """FAR/FRR sweep for one keyword; all other classes are negatives."""
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLDS
    thresholds = np.asarray(thresholds, dtype=np.float64)
    scores = np.array([r.posterior[keyword_class] for r in records])
    positive = np.array([r.true_class == keyword_class for r in records])
    n_pos = int(positive.sum())
    n_neg = int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvalError(
            f"keyword class {keyword_class} needs both positives and negatives "
            f"(got {n_pos} / {n_neg})"
        )
    accepted = scores[None, :] >= thresholds[:, None]
    far = (accepted & ~positive).sum(axis=1) / n_neg
    frr = (~accepted & positive).sum(axis=1) / n_pos
    return RocCurve(f"class{keyword_class}", thresholds, far, frr)


def roc_overall(curves, far_grid=None) -> RocCurve:
    """Vertical average of per-keyword curves on a shared false-alarm grid."""
    if not curves:
        raise EvalError("no curves to average")
    ref = curves[0].thresholds
    for c in curves:
        if c.thresholds.shape != ref.shape or not np.allclose(c.thresholds, ref):
            raise EvalError("curves must share the same threshold grid")
    if far_grid is None:
        far_grid = np.linspace(0.0, 1.0, 101)
    far_grid = np.asarray(far_grid, dtype=np.float64)
    stacked = []
    for c in curves:
        order = np.argsort(c.false_alarm, kind="stable")
        stacked.append(np.interp(far_grid, c.false_alarm[order], c.false_reject[order]))
    return RocCurve(
        "overall",
        np.full_like(far_grid, np.nan),
        far_grid,
        np.mean(stacked, axis=0),
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area of the false-reject rate over the false-alarm axis."""
    far, frr = curve.false_alarm, curve.false_reject
    diffs = np.diff(far)
    if np.all(diffs >= 0):
        pass
    elif np.all(diffs <= 0):
        far, frr = far[::-1], frr[::-1]
    else:
        raise EvalError("curve points are not sorted by false alarm rate")
    return float(np.trapezoid(frr, far))


def write_posteriors(path, records):
    """One tab-separated line per example: id, true class, posteriors."""
    with open(path, "w") as fh:
        for r in records:
            probs = "\t".join(f"{p:.8g}" for p in r.posterior)
            fh.write(f"{r.example_id}\t{r.true_class}\t{probs}\n")


def read_posteriors(path):
    records = []
    with open(path) as fh:
        for line in fh:
            fields = line.rstrip("\n").split("\t")
            records.append(
                PosteriorRecord(
                    fields[0], int(fields[1]), np.array([float(v) for v in fields[2:]])
                )
            )
    return records


def write_roc(path, curve: RocCurve):
    """Tab-separated threshold, FAR, FRR rows for external plotting."""
    with open(path, "w") as fh:
        fh.write("threshold\tfalse_alarm\tfalse_reject\n")
        for th, fa, fr in zip(curve.thresholds, curve.false_alarm, curve.false_reject):
            fh.write(f"{th:.8g}\t{fa:.8g}\t{fr:.8g}\n")
