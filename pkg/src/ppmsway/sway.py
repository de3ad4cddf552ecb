"""Sway metrics of a COP series and the pose-grouping test protocol.

The per-axis "standard error" used throughout is the mean absolute deviation
of the total COP from its mean, in millimetres.  It is deliberately not the
SD-based standard error of the mean.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .frameio import Pose
from .stats import DegenerateTest, Sidedness, TTestResult, paired_t_test

AXES = ("AP", "ML")
METRICS_COLUMNS = ["subject", "pose", "repeat", "se_ap_mm", "se_ml_mm", "mean_ap_mm", "mean_ml_mm", "n_frames"]


class SwayError(ValueError):
    pass


@dataclass(frozen=True)
class SwayMetrics:
    se_ap: float
    se_ml: float
    mean_cop: tuple[float, float]  # (AP, ML) mm
    n_frames: int

    def se(self, axis: str) -> float:
        return self.se_ap if axis.upper() == "AP" else self.se_ml


def _total_cop(series) -> np.ndarray:
    cop = getattr(series, "cop_total", series)
    cop = np.asarray(cop, dtype=np.float64)
    if cop.ndim != 2 or cop.shape[1] != 2:
        raise SwayError(f"expected (n, 2) COP samples, got shape {cop.shape}")
    return cop


def _axis_mean(cop: np.ndarray) -> np.ndarray:
    # anchored on the first sample so a constant axis has an exact mean
    return cop[0] + np.mean(cop - cop[0], axis=0)


def mean_cop(series) -> tuple[float, float]:
    cop = _total_cop(series)
    if len(cop) == 0:
        raise SwayError("empty series")
    m = _axis_mean(cop)
    return float(m[0]), float(m[1])


def standard_error(series) -> SwayMetrics:
    cop = _total_cop(series)
    if len(cop) < 2:
        raise SwayError("insufficient samples")
    m = _axis_mean(cop)
    se = np.mean(np.abs(cop - m), axis=0)
    return SwayMetrics(float(se[0]), float(se[1]), (float(m[0]), float(m[1])), len(cop))


def radial_deviation(series) -> float:
    """Mean Euclidean distance from the mean COP (diagnostic only)."""
    cop = _total_cop(series)
    if len(cop) < 2:
        raise SwayError("insufficient samples")
    return float(np.mean(np.hypot(*(cop - _axis_mean(cop)).T)))


def average_repeats(metrics: list[SwayMetrics]) -> SwayMetrics:
    if not metrics:
        raise SwayError("no repeats to average")
    k = len(metrics)
    return SwayMetrics(
        sum(m.se_ap for m in metrics) / k,
        sum(m.se_ml for m in metrics) / k,
        (sum(m.mean_cop[0] for m in metrics) / k, sum(m.mean_cop[1] for m in metrics) / k),
        round(sum(m.n_frames for m in metrics) / k),
    )


@dataclass(frozen=True)
class MetricsRow:
    subject: str
    pose: Pose
    repeat: int
    metrics: SwayMetrics


def metrics_table(rows) -> dict[str, dict[Pose, SwayMetrics]]:
    """Average repeats per (subject, pose) into the grouping input table."""
    buckets: dict[tuple[str, Pose], list[SwayMetrics]] = defaultdict(list)
    for r in rows:
        buckets[(r.subject, Pose(r.pose))].append(r.metrics)
    table: dict[str, dict[Pose, SwayMetrics]] = defaultdict(dict)
    for (subject, pose) in sorted(buckets):
        table[subject][pose] = average_repeats(buckets[(subject, pose)])
    return dict(table)


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            m = r.metrics
            writer.writerow([r.subject, f"T{int(r.pose)}", r.repeat, repr(m.se_ap), repr(m.se_ml),
                             repr(m.mean_cop[0]), repr(m.mean_cop[1]), m.n_frames])


def read_metrics_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_COLUMNS:
            raise SwayError(f"unexpected metrics header {reader.fieldnames}")
        for rec in reader:
            rows.append(MetricsRow(
                rec["subject"], Pose.parse(rec["pose"]), int(rec["repeat"]),
                SwayMetrics(float(rec["se_ap_mm"]), float(rec["se_ml_mm"]),
                            (float(rec["mean_ap_mm"]), float(rec["mean_ml_mm"])), int(rec["n_frames"]))))
    return rows


# ---------------------------------------------------------------------------
# pose grouping


@dataclass(frozen=True)
class GroupingStep:
    label: str
    test: TTestResult
    decision: str  # "merged", "kept apart", "reference", "significant", "not significant"


@dataclass(frozen=True)
class GroupingOutcome:
    axis: str
    alpha: float
    steps: list[GroupingStep]
    group: tuple[Pose, ...]  # balanced poses pooled before the final test
    final_test: TTestResult
    merges_succeeded: bool = field(default=False)

    @property
    def discriminates(self) -> bool:
        return self.final_test.p_value < self.alpha

    @property
    def pattern_held(self) -> bool:
        """All balanced poses pooled and the imbalanced pose significantly higher."""
        return self.merges_succeeded and self.discriminates

    def to_dict(self) -> dict:
        def test(t: TTestResult):
            return {"t": _finite(t.t_stat), "dof": t.dof, "p": t.p_value, "sidedness": t.sidedness.value,
                    "n_pairs": t.n_pairs, "mean_difference_mm": t.mean_difference}

        return {
            "axis": self.axis,
            "alpha": self.alpha,
            "steps": [{"test": s.label, **test(s.test), "decision": s.decision} for s in self.steps],
            "group": [f"T{int(p)}" for p in self.group],
            "final": test(self.final_test),
            "merges_succeeded": self.merges_succeeded,
            "discriminates": self.discriminates,
            "pattern_held": self.pattern_held,
            "summary": self.summary(),
        }

    def summary(self) -> str:
        group = "+".join(f"T{int(p)}" for p in self.group)
        verdict = ("T7 significantly higher" if self.discriminates
                   else "no significant difference detected")
        return f"{self.axis}: group {group} vs T7, p={self.final_test.p_value:.4g} -> {verdict}"


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _test(a, b, sidedness: Sidedness) -> TTestResult:
    try:
        return paired_t_test(a, b, sidedness)
    except DegenerateTest:
        # every subject shifted by the same amount: an infinitely sharp effect
        d = float(np.mean(np.asarray(a) - np.asarray(b)))
        t = math.copysign(math.inf, d)
        if sidedness is Sidedness.TWO_SIDED:
            p = 0.0
        else:
            p = 0.0 if d > 0 else 1.0
        return TTestResult(t, len(a) - 1, p, sidedness, len(a), d)


def pose_grouping(table: Mapping[str, Mapping[Pose, SwayMetrics]], axis: str = "ML",
                  alpha: float = 0.05) -> GroupingOutcome:
    """Pool the balanced poses and test the imbalanced pose against them.

    1. Two-sided paired tests T1 vs T2..T6; T2..T5 join the group when
       no significant difference is detected (p >= alpha).  T1 vs T6 is
       recorded for reference only.
    2. Two-sided paired test group vs T6; T6 joins on p >= alpha.
    3. One-sided paired test T7 > group.

    Per-subject group values are the mean over member poses.
    """
    axis = axis.upper()
    if axis not in AXES:
        raise ValueError(f"axis must be AP or ML, got {axis!r}")
    subjects = sorted(table)
    if len(subjects) < 2:
        raise SwayError("pose grouping needs at least two subjects")
    for s in subjects:
        missing = [p for p in Pose if p not in table[s]]
        if missing:
            raise SwayError(f"incomplete design: subject {s} lacks {', '.join(f'T{int(p)}' for p in missing)}")
    values = {p: np.array([table[s][p].se(axis) for s in subjects]) for p in Pose}

    steps: list[GroupingStep] = []
    group = [Pose.T1]
    all_merged = True
    for p in (Pose.T2, Pose.T3, Pose.T4, Pose.T5, Pose.T6):
        res = _test(values[Pose.T1], values[p], Sidedness.TWO_SIDED)
        if p is Pose.T6:
            steps.append(GroupingStep("T1 vs T6", res, "reference"))
            continue
        if res.p_value >= alpha:
            group.append(p)
            steps.append(GroupingStep(f"T1 vs T{int(p)}", res, "merged"))
        else:
            all_merged = False
            steps.append(GroupingStep(f"T1 vs T{int(p)}", res, "kept apart"))

    def group_values(members):
        return np.mean([values[p] for p in members], axis=0)

    label = "+".join(f"T{int(p)}" for p in group)
    res = _test(group_values(group), values[Pose.T6], Sidedness.TWO_SIDED)
    if res.p_value >= alpha:
        group.append(Pose.T6)
        steps.append(GroupingStep(f"{label} vs T6", res, "merged"))
    else:
        all_merged = False
        steps.append(GroupingStep(f"{label} vs T6", res, "kept apart"))

    label = "+".join(f"T{int(p)}" for p in group)
    final = _test(values[Pose.T7], group_values(group), Sidedness.ONE_SIDED_GREATER)
    steps.append(GroupingStep(f"T7 > {label}", final,
                              "significant" if final.p_value < alpha else "not significant"))
    return GroupingOutcome(axis, alpha, steps, tuple(group), final, all_merged)


def pose_summary(table: Mapping[str, Mapping[Pose, SwayMetrics]], axis: str) -> dict[Pose, tuple[float, float]]:
    """Per-pose mean over subjects and the mean absolute difference between subjects."""
    out = {}
    for p in Pose:
        vals = np.array([table[s][p].se(axis) for s in sorted(table) if p in table[s]])
        if len(vals):
            m = float(vals.mean())
            out[p] = (m, float(np.mean(np.abs(vals - m))))
    return out
