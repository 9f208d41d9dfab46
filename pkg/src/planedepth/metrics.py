"""Error metrics for depth/disparity maps against ground truth.

Only pixels with a valid ground-truth value are evaluated. The bad-pixel
percentage counts errors strictly larger than the threshold, so ties at the
threshold count as good. Sums use exactly-rounded accumulation so reported
values do not depend on traversal order.
"""

import math
from dataclasses import dataclass

import numpy as np


class NoGroundTruth(ValueError):
    """No valid ground-truth pixel to evaluate against."""


@dataclass(frozen=True)
class MetricReport:
    bad: dict
    avgerr: float
    rms: float
    count: int

    def as_text(self) -> str:
        """Flat key=value block, one metric per line."""
        lines = [f"bad{_fmt_thr(t)}={v}" for t, v in self.bad.items()]
        lines.append(f"avgerr={self.avgerr}")
        lines.append(f"rms={self.rms}")
        lines.append(f"count={self.count}")
        return "\n".join(lines)

    def csv_header(self) -> str:
        cols = [f"bad{_fmt_thr(t)}" for t in self.bad] + ["avgerr", "rms", "count"]
        return ",".join(cols)

    def csv_row(self) -> str:
        vals = [str(v) for v in self.bad.values()]
        vals += [str(self.avgerr), str(self.rms), str(self.count)]
        return ",".join(vals)


def _fmt_thr(t: float) -> str:
    return f"{t:g}"


def evaluate(pred, gt, thresholds, gt_valid=None) -> MetricReport:
    """Compare a predicted grid against ground truth.

    Args:
        pred: H x W predicted values.
        gt: H x W ground-truth values.
        thresholds: iterable of bad-pixel thresholds, in the units of the
            compared quantity.
        gt_valid: optional validity mask for gt; defaults to finite entries.

    Returns:
        MetricReport with bad-pixel percentages, avgerr, rms and the number
        of evaluated pixels.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth dims must match")
    if gt_valid is None:
        gt_valid = np.isfinite(gt)
    else:
        gt_valid = np.asarray(gt_valid, dtype=bool)
    count = int(gt_valid.sum())
    if count == 0:
        raise NoGroundTruth("no valid ground-truth pixels")

    err = np.abs(pred[gt_valid] - gt[gt_valid])
    bad = {float(t): 100.0 * int(np.sum(err > t)) / count for t in thresholds}
    avgerr = math.fsum(err) / count
    rms = math.sqrt(math.fsum(err * err) / count)
    return MetricReport(bad, avgerr, rms, count)


def binarize_confidence(m, threshold: float):
    """Binary mask: 1.0 where m >= threshold, else 0.0."""
    return np.where(np.asarray(m, dtype=np.float64) >= threshold, 1.0, 0.0)
