"""Leakage and integrity auditing for fold plans and prediction logs.

Findings carry their evidence (subject/window ids) so every error is
reproducible from the report alone. Verdict mapping: any error-severity
finding makes the verdict "leaking"; warnings alone yield "warnings".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import FingerprintMismatch, UnknownSplit, ValidationError
from .manifest import Manifest, WindowRef, enumerate_windows, fingerprint
from .metrics import PredictionLog
from .partition import (
    SUBJECT_BASED,
    FoldPlan,
    Scheme,
    Split,
    eval_role,
    split_window_refs,
)


class FindingKind(str, Enum):
    SAMPLE_LEVEL_LEAKAGE = "SAMPLE_LEVEL_LEAKAGE"
    SUBJECT_OVERLAP = "SUBJECT_OVERLAP"
    NO_INDEPENDENT_TEST = "NO_INDEPENDENT_TEST"
    EARLY_STOP_ON_EVAL = "EARLY_STOP_ON_EVAL"
    EMPTY_CLASS_IN_SPLIT = "EMPTY_CLASS_IN_SPLIT"
    COVERAGE_GAP = "COVERAGE_GAP"
    DUPLICATE_PREDICTION = "DUPLICATE_PREDICTION"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    severity: Severity
    detail: str
    split_id: str | None = None


@dataclass(frozen=True)
class AuditReport:
    findings: tuple[Finding, ...]

    @property
    def verdict(self) -> str:
        if any(f.severity == Severity.ERROR for f in self.findings):
            return "leaking"
        if any(f.severity == Severity.WARNING for f in self.findings):
            return "warnings"
        return "clean"

    def by_kind(self, kind: FindingKind) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.kind == kind)


def _fmt_ids(ids, limit: int = 5) -> str:
    ids = sorted(ids)
    shown = ", ".join(map(str, ids[:limit]))
    if len(ids) > limit:
        shown += f", ... ({len(ids)} total)"
    return shown


def _scheme_is_subject_based(p: FoldPlan) -> bool:
    if p.scheme == Scheme.BIAS_NESTED:
        return p.params.base_scheme in SUBJECT_BASED
    return p.scheme in SUBJECT_BASED


def audit_plan(m: Manifest, p: FoldPlan, early_stop_split: str = "val") -> AuditReport:
    """Check a fold plan against the leakage taxonomy.

    early_stop_split declares where the external training loop performs early
    stopping ("val", "test", or "none"); the auditor cannot observe the loop
    itself.
    """
    if early_stop_split not in ("val", "test", "none"):
        raise ValidationError(f"early_stop_split must be val|test|none, got {early_stop_split!r}")
    if p.manifest_fingerprint != fingerprint(m):
        raise FingerprintMismatch("plan does not reference this manifest")

    findings: list[Finding] = []
    has_test = any(s.test_subjects is not None for s in p.splits)
    if early_stop_split == "test" and not has_test:
        raise ValidationError("early_stop_split=test but the plan has no test sets")

    if not has_test and early_stop_split == "val":
        findings.append(
            Finding(
                kind=FindingKind.NO_INDEPENDENT_TEST,
                severity=Severity.WARNING,
                detail=(
                    "validation sets both stop the training and report the metric; "
                    "without an independent test set the reported score is optimistic"
                ),
            )
        )
    if has_test and early_stop_split == "test":
        findings.append(
            Finding(
                kind=FindingKind.EARLY_STOP_ON_EVAL,
                severity=Severity.ERROR,
                detail="early stopping monitors the test set that also reports the metric",
            )
        )

    subject_based = _scheme_is_subject_based(p)
    cache: dict = {}
    classes = m.label_space.classes
    for s in p.splits:
        train, val, test = split_window_refs(m, s, cache)
        roles = {"train": train, "val": val}
        if test is not None:
            roles["test"] = test

        # Recording-level mixing: one recording feeding two roles.
        rec_roles: dict[tuple[str, str], set[str]] = {}
        for role, refs in roles.items():
            for ref in refs:
                rec_roles.setdefault((ref.subject_id, ref.recording_id), set()).add(role)
        mixed = {k: v for k, v in rec_roles.items() if len(v) > 1}
        if mixed:
            findings.append(
                Finding(
                    kind=FindingKind.SAMPLE_LEVEL_LEAKAGE,
                    severity=Severity.WARNING,
                    split_id=s.split_id,
                    detail=(
                        "recordings contribute windows to multiple roles: "
                        + _fmt_ids(f"{sid}/{rid}" for sid, rid in mixed)
                        + "; fine for within-subject analysis, invalid for "
                        "cross-subject claims"
                    ),
                )
            )

        if subject_based:
            pairs = [("train", "val"), ("train", "test"), ("val", "test")]
            subject_sets = {role: {r.subject_id for r in refs} for role, refs in roles.items()}
            for a, b in pairs:
                if a in subject_sets and b in subject_sets:
                    overlap = subject_sets[a] & subject_sets[b]
                    if overlap:
                        findings.append(
                            Finding(
                                kind=FindingKind.SUBJECT_OVERLAP,
                                severity=Severity.ERROR,
                                split_id=s.split_id,
                                detail=f"subjects shared between {a} and {b}: {_fmt_ids(overlap)}",
                            )
                        )

        for role, refs in roles.items():
            present = {r.label for r in refs}
            for cls in classes:
                if cls not in present:
                    findings.append(
                        Finding(
                            kind=FindingKind.EMPTY_CLASS_IN_SPLIT,
                            severity=Severity.WARNING,
                            split_id=s.split_id,
                            detail=f"class {cls!r} has no windows in {role}",
                        )
                    )
    return AuditReport(findings=tuple(findings))


def _heldout_refs(m: Manifest, split: Split, cache: dict) -> tuple[WindowRef, ...]:
    refs = cache.get("refs")
    if refs is None:
        refs = cache["refs"] = enumerate_windows(m)
    held = set(split.heldout_subjects or ())
    return tuple(r for r in refs if r.subject_id in held)


def audit_predictions(m: Manifest, p: FoldPlan, logs: list[PredictionLog]) -> AuditReport:
    """Check prediction logs for coverage, duplication, and label validity."""
    if p.manifest_fingerprint != fingerprint(m):
        raise FingerprintMismatch("plan does not reference this manifest")
    split_by_id = {s.split_id: s for s in p.splits}
    for log in logs:
        if log.split_id not in split_by_id:
            raise UnknownSplit(f"log references unknown split {log.split_id!r}")

    classes = set(m.label_space.classes)
    findings: list[Finding] = []
    cache: dict = {}
    grouped: dict[tuple[str, str], list[PredictionLog]] = {}
    for log in logs:
        grouped.setdefault((log.split_id, log.role), []).append(log)

    for (split_id, role), role_logs in grouped.items():
        split = split_by_id[split_id]
        train, val, test = split_window_refs(m, split, cache)
        if role == "val":
            expected = set(val)
        elif role == "test":
            expected = set(test or ())
        elif role == "heldout":
            expected = set(_heldout_refs(m, split, cache))
        else:
            raise ValidationError(f"unknown log role {role!r}")

        seen: dict[WindowRef, int] = {}
        for log in role_logs:
            for row in log.rows:
                if row.true_label not in classes:
                    raise ValidationError(
                        f"split {split_id}: true label {row.true_label!r} not in label space"
                    )
                if row.predicted_label not in classes:
                    raise ValidationError(
                        f"split {split_id}: predicted label {row.predicted_label!r} not in label space"
                    )
                if row.window not in expected:
                    raise ValidationError(
                        f"split {split_id}: prediction for window outside its {role} set: {row.window}"
                    )
                seen[row.window] = seen.get(row.window, 0) + 1
        dupes = [w for w, c in seen.items() if c > 1]
        if dupes:
            findings.append(
                Finding(
                    kind=FindingKind.DUPLICATE_PREDICTION,
                    severity=Severity.ERROR,
                    split_id=split_id,
                    detail=f"{role} windows predicted more than once: "
                    + _fmt_ids((w.subject_id, w.recording_id, w.window_index) for w in dupes),
                )
            )
        missing = expected - set(seen)
        if missing:
            findings.append(
                Finding(
                    kind=FindingKind.COVERAGE_GAP,
                    severity=Severity.ERROR,
                    split_id=split_id,
                    detail=f"{role} windows without predictions: "
                    + _fmt_ids((w.subject_id, w.recording_id, w.window_index) for w in missing),
                )
            )

    # Splits with no eval-role log at all are coverage gaps too.
    for s in p.splits:
        role = eval_role(s)
        if (s.split_id, role) not in grouped:
            findings.append(
                Finding(
                    kind=FindingKind.COVERAGE_GAP,
                    severity=Severity.ERROR,
                    split_id=s.split_id,
                    detail=f"no {role} predictions logged for this split",
                )
            )
    return AuditReport(findings=tuple(findings))


def report_to_dict(report: AuditReport) -> dict:
    return {
        "verdict": report.verdict,
        "findings": [
            {
                "kind": f.kind.value,
                "severity": f.severity.value,
                "split_id": f.split_id,
                "detail": f.detail,
            }
            for f in report.findings
        ],
    }


def report_to_json(report: AuditReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
