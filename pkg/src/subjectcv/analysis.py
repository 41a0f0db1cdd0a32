"""Cross-scheme comparisons, bias estimation, and the partitioning advisor."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateInput,
    MismatchedInputs,
    MissingLog,
    TooFewSubjects,
)
from .manifest import Manifest
from .metrics import (
    MetricReport,
    PredictionLog,
    SummaryStats,
    balanced_accuracy,
    confusion,
    pct_change,
    summarize,
)
from .partition import FoldPlan, PlanParams, Scheme, count_instances


@dataclass(frozen=True)
class ComparisonReport:
    metric: str
    scheme_a: str
    scheme_b: str
    stats_a: SummaryStats
    stats_b: SummaryStats
    median_delta: float
    iqr_delta: float


def compare_cv(a: MetricReport, b: MetricReport, metric: str = "balanced_accuracy") -> ComparisonReport:
    """Summaries of two reports plus median/IQR differences (a minus b)."""
    if a.manifest_fingerprint != b.manifest_fingerprint:
        raise MismatchedInputs("reports were scored against different manifests")
    stats_a = summarize(a.values(metric))
    stats_b = summarize(b.values(metric))
    return ComparisonReport(
        metric=metric,
        scheme_a=a.scheme,
        scheme_b=b.scheme,
        stats_a=stats_a,
        stats_b=stats_b,
        median_delta=stats_a.median - stats_b.median,
        iqr_delta=stats_a.iqr - stats_b.iqr,
    )


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r2_adj: float
    n_points: int


def regress_nested(pairs) -> RegressionFit:
    """Ordinary least squares y = slope*x + intercept with adjusted R^2.

    Points pair each nested test accuracy with the plain-CV accuracy of its
    aligned outer fold.
    """
    pts = np.asarray(list(pairs), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise DegenerateInput("regression needs at least 3 (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    n = len(x)
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx == 0.0:
        raise DegenerateInput("all x values are identical")
    slope = float(((x - x.mean()) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if sst == 0.0 else 1.0 - float((resid**2).sum()) / sst
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return RegressionFit(slope=slope, intercept=intercept, r2_adj=r2_adj, n_points=n)


def paired_nested_values(
    plain_report: MetricReport,
    nested_report: MetricReport,
    alignment: list[tuple[int, int]],
    metric: str = "balanced_accuracy",
    median_per_outer: bool = False,
) -> list[tuple[float, float]]:
    """Build (plain, nested) value pairs from two reports via an outer alignment.

    By default every nested split contributes one point; with
    median_per_outer each outer fold contributes its median instead.
    """
    if plain_report.manifest_fingerprint != nested_report.manifest_fingerprint:
        raise MismatchedInputs("reports were scored against different manifests")
    plain_by_fold = {r.outer_index: r.value(metric) for r in plain_report.rows}
    nested_by_outer: dict[int, list[float]] = {}
    for r in nested_report.rows:
        nested_by_outer.setdefault(r.outer_index, []).append(r.value(metric))
    pairs = []
    for fold, outer in alignment:
        if fold not in plain_by_fold or outer not in nested_by_outer:
            raise AlignmentError(f"alignment references missing fold {fold} or outer {outer}")
        x = plain_by_fold[fold]
        ys = nested_by_outer[outer]
        if median_per_outer:
            pairs.append((x, float(np.median(ys))))
        else:
            pairs.extend((x, y) for y in ys)
    return pairs


@dataclass(frozen=True)
class DuelRow:
    subject_id: str
    loso_value: float
    nloso_median: float
    nloso_iqr: float


@dataclass(frozen=True)
class DuelReport:
    metric: str
    rows: tuple[DuelRow, ...]
    win_count: int
    tie_count: int
    loss_count: int
    median_pct_change: float
    iqr_pct_change: float | None  # None when the reference IQR is zero

    @property
    def n_subjects(self) -> int:
        return len(self.rows)


def subject_duel(loso: MetricReport, nloso: MetricReport, metric: str = "balanced_accuracy") -> DuelReport:
    """Per-subject comparison of single-subject folds vs their nested runs.

    A subject "wins" when its nested median strictly exceeds its plain value.
    Also reports percentage changes of the overall medians and IQRs
    (plain CV as reference).
    """
    if loso.manifest_fingerprint != nloso.manifest_fingerprint:
        raise MismatchedInputs("reports were scored against different manifests")
    loso_by_subject: dict[str, float] = {}
    for r in loso.rows:
        if r.subject is None:
            raise AlignmentError(f"split {r.split_id}: fold evaluates more than one subject")
        if r.subject in loso_by_subject:
            raise AlignmentError(f"subject {r.subject!r} appears in two folds")
        loso_by_subject[r.subject] = r.value(metric)
    nested_by_subject: dict[str, list[float]] = {}
    for r in nloso.rows:
        if r.subject is None:
            raise AlignmentError(f"split {r.split_id}: test set covers more than one subject")
        nested_by_subject.setdefault(r.subject, []).append(r.value(metric))
    if set(loso_by_subject) != set(nested_by_subject):
        raise AlignmentError("plain and nested reports cover different subjects")

    rows, wins, ties, losses = [], 0, 0, 0
    for sid, plain_value in loso_by_subject.items():
        stats = summarize(nested_by_subject[sid])
        rows.append(DuelRow(sid, plain_value, stats.median, stats.iqr))
        if stats.median > plain_value:
            wins += 1
        elif stats.median == plain_value:
            ties += 1
        else:
            losses += 1
    overall_plain = summarize(list(loso_by_subject.values()))
    overall_nested = summarize(nloso.values(metric))
    iqr_change = (
        pct_change(overall_plain.iqr, overall_nested.iqr) if overall_plain.iqr != 0 else None
    )
    return DuelReport(
        metric=metric,
        rows=tuple(sorted(rows, key=lambda r: r.subject_id)),
        win_count=wins,
        tie_count=ties,
        loss_count=losses,
        median_pct_change=pct_change(overall_plain.median, overall_nested.median),
        iqr_pct_change=iqr_change,
    )


@dataclass(frozen=True)
class BiasReport:
    scheme: str
    biases: tuple[float, ...]
    mean: float
    std: float

    @property
    def n(self) -> int:
        return len(self.biases)


def estimate_bias(
    m: Manifest,
    plan: FoldPlan,
    eval_logs: list[PredictionLog],
    heldout_logs: list[PredictionLog],
) -> BiasReport:
    """Per-split (eval minus heldout) balanced-accuracy differences.

    A positive mean means the scheme reports better numbers than it achieves
    on fully excluded subjects, i.e. it underestimates generalization error.
    Std uses the sample (n-1) convention.
    """
    if plan.scheme != Scheme.BIAS_NESTED:
        raise MismatchedInputs("bias estimation needs a BIAS_NESTED plan")
    eval_by_split = {log.split_id: log for log in eval_logs}
    heldout_by_split = {log.split_id: log for log in heldout_logs}
    biases = []
    for s in plan.splits:
        ev = eval_by_split.get(s.split_id)
        ho = heldout_by_split.get(s.split_id)
        if ev is None or ho is None:
            raise MissingLog(f"split {s.split_id}: missing {'eval' if ev is None else 'heldout'} log")
        ba_eval = balanced_accuracy(confusion(ev, m.label_space))
        ba_held = balanced_accuracy(confusion(ho, m.label_space))
        biases.append(ba_eval - ba_held)
    arr = np.asarray(biases, dtype=float)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return BiasReport(
        scheme=plan.params.base_scheme.value,
        biases=tuple(float(b) for b in biases),
        mean=float(arr.mean()),
        std=std,
    )


@dataclass(frozen=True)
class Advice:
    scheme: Scheme
    params: PlanParams
    training_instance_count: int
    rationale: str


def advise(n_subjects: int) -> Advice:
    """Recommend a nested partitioning for a dataset of the given size.

    Breakpoints: up to 20 subjects, every ordered subject pair is affordable;
    up to 50, single-subject outer folds with 10 inner folds; beyond that a
    fixed 10x10 nesting caps the cost at 100 training instances.
    """
    if n_subjects < 3:
        raise TooFewSubjects("nested subject-based CV needs at least 3 subjects")
    if n_subjects <= 20:
        return Advice(
            scheme=Scheme.NLOSO,
            params=PlanParams(),
            training_instance_count=n_subjects * (n_subjects - 1),
            rationale=(
                f"{n_subjects} subjects: every (test, val) subject pair is affordable "
                "and gives the best estimate for small datasets"
            ),
        )
    if n_subjects <= 50:
        params = PlanParams(n_outer=n_subjects, n_inner=10)
        return Advice(
            scheme=Scheme.NLNSO,
            params=params,
            training_instance_count=count_instances(Scheme.NLNSO, params, n_subjects),
            rationale=(
                f"{n_subjects} subjects: single-subject outer folds with 10 inner folds; "
                "stopping on a subject group generalizes better than on one subject"
            ),
        )
    params = PlanParams(n_outer=10, n_inner=10)
    return Advice(
        scheme=Scheme.NLNSO,
        params=params,
        training_instance_count=100,
        rationale=(
            f"{n_subjects} subjects: 10-outer/10-inner nesting caps cost at 100 "
            "training instances with a good bias-variance compromise"
        ),
    )


# -- serialization ---------------------------------------------------------


def _stats_dict(s: SummaryStats) -> dict:
    return {
        "median": s.median,
        "q25": s.q25,
        "q75": s.q75,
        "iqr": s.iqr,
        "min": s.min,
        "max": s.max,
        "n": s.n,
    }


def comparison_to_dict(c: ComparisonReport) -> dict:
    return {
        "metric": c.metric,
        "scheme_a": c.scheme_a,
        "scheme_b": c.scheme_b,
        "stats_a": _stats_dict(c.stats_a),
        "stats_b": _stats_dict(c.stats_b),
        "median_delta": c.median_delta,
        "iqr_delta": c.iqr_delta,
    }


def duel_to_dict(d: DuelReport) -> dict:
    return {
        "metric": d.metric,
        "win_count": d.win_count,
        "tie_count": d.tie_count,
        "loss_count": d.loss_count,
        "n_subjects": d.n_subjects,
        "median_pct_change": d.median_pct_change,
        "iqr_pct_change": d.iqr_pct_change,
        "rows": [
            {
                "subject_id": r.subject_id,
                "loso_value": r.loso_value,
                "nloso_median": r.nloso_median,
                "nloso_iqr": r.nloso_iqr,
            }
            for r in d.rows
        ],
    }


def regression_to_dict(r: RegressionFit) -> dict:
    return {
        "slope": r.slope,
        "intercept": r.intercept,
        "r2_adj": r.r2_adj,
        "n_points": r.n_points,
    }


def bias_to_dict(b: BiasReport) -> dict:
    return {
        "scheme": b.scheme,
        "mean": b.mean,
        "std": b.std,
        "n": b.n,
        "biases": list(b.biases),
    }


def advice_to_dict(a: Advice) -> dict:
    return {
        "scheme": a.scheme.value,
        "n_outer": a.params.n_outer,
        "n_inner": a.params.n_inner,
        "training_instance_count": a.training_instance_count,
        "rationale": a.rationale,
    }


def to_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def comparison_to_csv(c: ComparisonReport) -> str:
    header = "scheme,metric,median,q25,q75,iqr,min,max,n"
    lines = [header]
    for scheme, s in ((c.scheme_a, c.stats_a), (c.scheme_b, c.stats_b)):
        lines.append(
            f"{scheme},{c.metric},{s.median!r},{s.q25!r},{s.q75!r},{s.iqr!r},"
            f"{s.min!r},{s.max!r},{s.n}"
        )
    lines.append(f"delta,{c.metric},{c.median_delta!r},,,{c.iqr_delta!r},,,")
    return "\n".join(lines) + "\n"


def duel_to_csv(d: DuelReport) -> str:
    lines = ["subject_id,loso_value,nloso_median,nloso_iqr"]
    for r in d.rows:
        lines.append(f"{r.subject_id},{r.loso_value!r},{r.nloso_median!r},{r.nloso_iqr!r}")
    return "\n".join(lines) + "\n"


def bias_to_csv(b: BiasReport) -> str:
    lines = ["run_index,bias"]
    for i, v in enumerate(b.biases):
        lines.append(f"{i},{v!r}")
    return "\n".join(lines) + "\n"


def regression_to_csv(r: RegressionFit) -> str:
    return (
        "slope,intercept,r2_adj,n_points\n"
        f"{r.slope!r},{r.intercept!r},{r.r2_adj!r},{r.n_points}\n"
    )
