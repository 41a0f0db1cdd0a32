"""Evaluation metrics over prediction logs, plus distribution summaries.

Conventions pinned here:

* balanced accuracy averages per-class recall over classes that actually
  occur in the true labels (zero-support classes are excluded, otherwise the
  average is 0/0);
* macro F1 uses the same exclusion; weighted F1 weights by true support;
* Cohen's kappa uses expected agreement from marginal products, with the
  degenerate p_e == 1 case resolved to 1.0 for perfect agreement and 0.0
  otherwise;
* percentiles use linear interpolation between closest ranks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DivisionByZero,
    EmptyInput,
    EmptyLog,
    MismatchedInputs,
    ParseError,
    UnknownLabel,
    ValidationError,
)
from .manifest import LabelSpace, Manifest, WindowRef

LOG_ROLES = ("val", "test", "heldout")
LOG_HEADER = ["split_id", "role", "subject_id", "recording_id", "window_index", "true_label", "predicted_label"]
METRIC_NAMES = ("balanced_accuracy", "weighted_f1", "macro_f1", "cohen_kappa")


class PredictionRow(NamedTuple):
    window: WindowRef
    true_label: str
    predicted_label: str


@dataclass(frozen=True)
class PredictionLog:
    """Outcome record for one split and one role."""

    split_id: str
    role: str
    rows: tuple[PredictionRow, ...]

    def __post_init__(self):
        if self.role not in LOG_ROLES:
            raise ValidationError(f"log role must be one of {LOG_ROLES}, got {self.role!r}")
        if not self.rows:
            raise ValidationError(f"log for split {self.split_id!r} has no rows")


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i][j] = windows of true class i predicted as class j."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return int(sum(sum(row) for row in self.counts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def confusion(log: PredictionLog, ls: LabelSpace) -> ConfusionMatrix:
    k = ls.n_classes
    counts = np.zeros((k, k), dtype=np.int64)
    index = {c: i for i, c in enumerate(ls.classes)}
    for row in log.rows:
        try:
            i = index[row.true_label]
            j = index[row.predicted_label]
        except KeyError as exc:
            raise UnknownLabel(f"label {exc.args[0]!r} not in label space") from None
        counts[i, j] += 1
    return ConfusionMatrix(labels=ls.classes, counts=tuple(tuple(int(x) for x in r) for r in counts))


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class recall over classes with at least one true instance."""
    a = cm.as_array()
    support = a.sum(axis=1)
    if support.sum() == 0:
        raise EmptyLog("confusion matrix has no entries")
    present = support > 0
    recalls = a.diagonal()[present] / support[present]
    return float(recalls.mean())


def _per_class_f1(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    support = a.sum(axis=1)
    predicted = a.sum(axis=0)
    tp = a.diagonal()
    f1 = np.zeros(len(a), dtype=float)
    denom = support + predicted  # 2TP + FN + FP
    nz = denom > 0
    f1[nz] = 2.0 * tp[nz] / denom[nz]
    return f1, support


def weighted_f1(cm: ConfusionMatrix) -> float:
    a = cm.as_array()
    if a.sum() == 0:
        raise EmptyLog("confusion matrix has no entries")
    f1, support = _per_class_f1(a)
    return float((f1 * support).sum() / support.sum())


def macro_f1(cm: ConfusionMatrix) -> float:
    a = cm.as_array()
    if a.sum() == 0:
        raise EmptyLog("confusion matrix has no entries")
    f1, support = _per_class_f1(a)
    present = support > 0
    return float(f1[present].mean())


def cohen_kappa(cm: ConfusionMatrix) -> float:
    a = cm.as_array()
    n = a.sum()
    if n == 0:
        raise EmptyLog("confusion matrix has no entries")
    p_o = a.diagonal().sum() / n
    p_e = float((a.sum(axis=1) / n) @ (a.sum(axis=0) / n))
    if p_e >= 1.0 - 1e-15:
        # Single-class logs: agreement is either trivially perfect or absent.
        return 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


@dataclass(frozen=True)
class SummaryStats:
    median: float
    q25: float
    q75: float
    iqr: float
    min: float
    max: float
    n: int


def summarize(values) -> SummaryStats:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise EmptyInput("cannot summarize an empty list")
    q25, med, q75 = (float(x) for x in np.percentile(vals, [25, 50, 75], method="linear"))
    return SummaryStats(
        median=med,
        q25=q25,
        q75=q75,
        iqr=q75 - q25,
        min=float(vals.min()),
        max=float(vals.max()),
        n=int(vals.size),
    )


def pct_change(reference: float, new: float) -> float:
    """Relative change from reference to new, in percent."""
    if reference == 0:
        raise DivisionByZero("pct_change needs a nonzero reference")
    return 100.0 * (new - reference) / reference


# -- per-split reports -------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    split_id: str
    role: str
    outer_index: int | None
    inner_index: int | None
    subject: str | None
    balanced_accuracy: float
    weighted_f1: float
    macro_f1: float
    cohen_kappa: float

    def value(self, metric: str) -> float:
        if metric not in METRIC_NAMES:
            raise MismatchedInputs(f"unknown metric {metric!r}")
        return getattr(self, metric)


@dataclass(frozen=True)
class MetricReport:
    manifest_fingerprint: str
    scheme: str
    rows: tuple[MetricRow, ...]

    def values(self, metric: str = "balanced_accuracy") -> list[float]:
        return [r.value(metric) for r in self.rows]


def score_log(log: PredictionLog, ls: LabelSpace) -> dict[str, float]:
    cm = confusion(log, ls)
    return {
        "balanced_accuracy": balanced_accuracy(cm),
        "weighted_f1": weighted_f1(cm),
        "macro_f1": macro_f1(cm),
        "cohen_kappa": cohen_kappa(cm),
    }


def score_report(m: Manifest, plan, logs: list[PredictionLog]) -> MetricReport:
    """One MetricRow per log, annotated with the split's grouping keys."""
    split_by_id = {s.split_id: s for s in plan.splits}
    rows = []
    for log in logs:
        split = split_by_id.get(log.split_id)
        if split is None:
            raise MismatchedInputs(f"log references unknown split {log.split_id!r}")
        vals = score_log(log, m.label_space)
        subjects = {r.window.subject_id for r in log.rows}
        rows.append(
            MetricRow(
                split_id=log.split_id,
                role=log.role,
                outer_index=split.outer_index,
                inner_index=split.inner_index,
                subject=next(iter(subjects)) if len(subjects) == 1 else None,
                **vals,
            )
        )
    return MetricReport(
        manifest_fingerprint=plan.manifest_fingerprint,
        scheme=plan.scheme.value,
        rows=tuple(rows),
    )


# -- file formats ------------------------------------------------------------


def logs_to_csv(logs: list[PredictionLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for log in logs:
        for row in log.rows:
            w.writerow(
                [
                    log.split_id,
                    log.role,
                    row.window.subject_id,
                    row.window.recording_id,
                    row.window.window_index,
                    row.true_label,
                    row.predicted_label,
                ]
            )
    return buf.getvalue()


def write_logs(logs: list[PredictionLog], path: str | Path) -> None:
    Path(path).write_text(logs_to_csv(logs), encoding="utf-8")


def logs_from_csv(text: str, m: Manifest) -> list[PredictionLog]:
    """Parse prediction logs, resolving window labels against the manifest."""
    label_of: dict[tuple[str, str, int], str] = {}
    from .manifest import enumerate_windows

    for ref in enumerate_windows(m):
        label_of[(ref.subject_id, ref.recording_id, ref.window_index)] = ref.label

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty prediction-log file") from None
    if header != LOG_HEADER:
        raise ParseError(f"unexpected log header {header!r}")
    grouped: dict[tuple[str, str], list[PredictionRow]] = {}
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(LOG_HEADER):
            raise ParseError(f"line {lineno}: expected {len(LOG_HEADER)} fields, got {len(rec)}")
        split_id, role, sid, rid, idx, true_label, pred = rec
        try:
            idx = int(idx)
        except ValueError:
            raise ParseError(f"line {lineno}: window_index must be an integer") from None
        key = (sid, rid, idx)
        if key not in label_of:
            raise ParseError(f"line {lineno}: window {key} not in manifest")
        ref = WindowRef(sid, rid, idx, label_of[key])
        grouped.setdefault((split_id, role), []).append(PredictionRow(ref, true_label, pred))
    return [
        PredictionLog(split_id=split_id, role=role, rows=tuple(rows))
        for (split_id, role), rows in grouped.items()
    ]


def read_logs(path: str | Path, m: Manifest) -> list[PredictionLog]:
    return logs_from_csv(Path(path).read_text(encoding="utf-8"), m)


def report_to_dict(report: MetricReport) -> dict:
    return {
        "manifest_fingerprint": report.manifest_fingerprint,
        "scheme": report.scheme,
        "rows": [
            {
                "split_id": r.split_id,
                "role": r.role,
                "outer_index": r.outer_index,
                "inner_index": r.inner_index,
                "subject": r.subject,
                "balanced_accuracy": r.balanced_accuracy,
                "weighted_f1": r.weighted_f1,
                "macro_f1": r.macro_f1,
                "cohen_kappa": r.cohen_kappa,
            }
            for r in report.rows
        ],
    }


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def report_to_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split_id", "role", "outer_index", "inner_index", "subject", *METRIC_NAMES])
    for r in report.rows:
        w.writerow(
            [
                r.split_id,
                r.role,
                "" if r.outer_index is None else r.outer_index,
                "" if r.inner_index is None else r.inner_index,
                "" if r.subject is None else r.subject,
                repr(r.balanced_accuracy),
                repr(r.weighted_f1),
                repr(r.macro_f1),
                repr(r.cohen_kappa),
            ]
        )
    return buf.getvalue()


def write_report(report: MetricReport, path: str | Path, fmt: str = "json") -> None:
    text = report_to_json(report) if fmt == "json" else report_to_csv(report)
    Path(path).write_text(text, encoding="utf-8")


def load_report(text: str) -> MetricReport:
    try:
        doc = json.loads(text)
        rows = tuple(
            MetricRow(
                split_id=r["split_id"],
                role=r["role"],
                outer_index=r["outer_index"],
                inner_index=r["inner_index"],
                subject=r["subject"],
                balanced_accuracy=float(r["balanced_accuracy"]),
                weighted_f1=float(r["weighted_f1"]),
                macro_f1=float(r["macro_f1"]),
                cohen_kappa=float(r["cohen_kappa"]),
            )
            for r in doc["rows"]
        )
        return MetricReport(
            manifest_fingerprint=doc["manifest_fingerprint"],
            scheme=doc["scheme"],
            rows=rows,
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"metric report malformed: {exc}") from exc


def read_report(path: str | Path) -> MetricReport:
    return load_report(Path(path).read_text(encoding="utf-8"))
