import dataclasses

import pytest

from conftest import make_manifest
from subjectcv.audit import (
    FindingKind,
    Severity,
    audit_plan,
    audit_predictions,
    report_to_json,
)
from subjectcv.errors import FingerprintMismatch, UnknownSplit, ValidationError
from subjectcv.manifest import enumerate_windows
from subjectcv.metrics import PredictionLog, PredictionRow
from subjectcv.partition import PlanParams, Scheme, eval_role, plan, split_window_refs


def perfect_logs(m, p):
    """One eval log per split predicting the true label everywhere."""
    logs = []
    cache = {}
    for s in p.splits:
        _, val, test = split_window_refs(m, s, cache)
        role = eval_role(s)
        refs = test if role == "test" else val
        rows = tuple(PredictionRow(r, r.label, r.label) for r in refs)
        logs.append(PredictionLog(split_id=s.split_id, role=role, rows=rows))
    return logs


def test_kfold_flags_sample_leakage_and_no_test(trial_manifest):
    p = plan(trial_manifest, Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3), seed=7)
    report = audit_plan(trial_manifest, p, early_stop_split="val")
    kinds = {f.kind for f in report.findings}
    assert FindingKind.SAMPLE_LEVEL_LEAKAGE in kinds
    assert FindingKind.NO_INDEPENDENT_TEST in kinds
    assert report.verdict == "warnings"  # warnings only, never leaking


def test_nlnso_with_val_early_stop_is_clean(trial_manifest):
    p = plan(trial_manifest, Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2), seed=7)
    report = audit_plan(trial_manifest, p, early_stop_split="val")
    assert report.verdict == "clean"
    assert report.findings == ()


def test_early_stop_on_test_is_error(trial_manifest):
    p = plan(trial_manifest, Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2), seed=7)
    report = audit_plan(trial_manifest, p, early_stop_split="test")
    assert report.verdict == "leaking"
    assert report.by_kind(FindingKind.EARLY_STOP_ON_EVAL)


def test_early_stop_none_suppresses_no_independent_test(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    report = audit_plan(trial_manifest, p, early_stop_split="none")
    assert not report.by_kind(FindingKind.NO_INDEPENDENT_TEST)


def test_early_stop_on_missing_test_rejected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    with pytest.raises(ValidationError):
        audit_plan(trial_manifest, p, early_stop_split="test")


def test_forged_subject_overlap_detected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    bad_split = p.splits[1]
    # move a validation subject into training as well
    leaked = dataclasses.replace(
        bad_split, train_subjects=bad_split.train_subjects + (bad_split.val_subjects[0],)
    )
    forged = dataclasses.replace(p, splits=(p.splits[0], leaked, p.splits[2]))
    report = audit_plan(trial_manifest, forged, early_stop_split="none")
    overlaps = report.by_kind(FindingKind.SUBJECT_OVERLAP)
    assert report.verdict == "leaking"
    assert overlaps and overlaps[0].split_id == bad_split.split_id
    assert bad_split.val_subjects[0] in overlaps[0].detail


def test_empty_class_in_split_warning():
    # subject-constant labels with single-subject val folds: val misses a class
    m = make_manifest(6, wps=2, subject_constant=True)
    p = plan(m, Scheme.LOSO, PlanParams(), seed=0)
    report = audit_plan(m, p, early_stop_split="none")
    empties = report.by_kind(FindingKind.EMPTY_CLASS_IN_SPLIT)
    assert empties
    assert all(f.severity == Severity.WARNING for f in empties)


def test_audit_rejects_fingerprint_mismatch(trial_manifest):
    other = make_manifest(7, wps=6, classes=("A", "B", "C"), subject_constant=False)
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    with pytest.raises(FingerprintMismatch):
        audit_plan(other, p)


def test_complete_logs_are_clean(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    report = audit_predictions(trial_manifest, p, perfect_logs(trial_manifest, p))
    assert report.verdict == "clean"


def test_missing_window_is_coverage_gap(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    logs = perfect_logs(trial_manifest, p)
    dropped = logs[1].rows[0]
    logs[1] = PredictionLog(logs[1].split_id, logs[1].role, logs[1].rows[1:])
    report = audit_predictions(trial_manifest, p, logs)
    gaps = report.by_kind(FindingKind.COVERAGE_GAP)
    assert report.verdict == "leaking"
    assert gaps and gaps[0].split_id == logs[1].split_id
    assert dropped.window.subject_id in gaps[0].detail


def test_missing_split_log_is_coverage_gap(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    logs = perfect_logs(trial_manifest, p)[:-1]
    report = audit_predictions(trial_manifest, p, logs)
    assert report.by_kind(FindingKind.COVERAGE_GAP)


def test_duplicate_prediction_detected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    logs = perfect_logs(trial_manifest, p)
    logs[0] = PredictionLog(logs[0].split_id, logs[0].role, logs[0].rows + logs[0].rows[:1])
    report = audit_predictions(trial_manifest, p, logs)
    assert report.by_kind(FindingKind.DUPLICATE_PREDICTION)


def test_unknown_predicted_label_rejected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    logs = perfect_logs(trial_manifest, p)
    bad_row = PredictionRow(logs[0].rows[0].window, logs[0].rows[0].true_label, "Z")
    logs[0] = PredictionLog(logs[0].split_id, logs[0].role, (bad_row,) + logs[0].rows[1:])
    with pytest.raises(ValidationError, match="not in label space"):
        audit_predictions(trial_manifest, p, logs)


def test_unknown_split_rejected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    refs = enumerate_windows(trial_manifest)
    rogue = PredictionLog("nope-0", "val", (PredictionRow(refs[0], refs[0].label, refs[0].label),))
    with pytest.raises(UnknownSplit):
        audit_predictions(trial_manifest, p, [rogue])


def test_prediction_outside_role_set_rejected(trial_manifest):
    p = plan(trial_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=7)
    logs = perfect_logs(trial_manifest, p)
    cache = {}
    train, _, _ = split_window_refs(trial_manifest, p.splits[0], cache)
    alien = PredictionRow(train[0], train[0].label, train[0].label)
    logs[0] = PredictionLog(logs[0].split_id, logs[0].role, logs[0].rows + (alien,))
    with pytest.raises(ValidationError, match="outside"):
        audit_predictions(trial_manifest, p, logs)


def test_audit_is_pure(trial_manifest):
    p = plan(trial_manifest, Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3), seed=7)
    r1 = audit_plan(trial_manifest, p)
    r2 = audit_plan(trial_manifest, p)
    assert r1 == r2
    assert report_to_json(r1) == report_to_json(r2)


def test_generator_soundness_sampled():
    # freshly planned partitions never trip subject purity or coverage
    import random

    rng = random.Random(20250810)
    cases = 0
    for _ in range(25):
        n = rng.randint(6, 12)
        m = make_manifest(n, wps=rng.randint(1, 4), subject_constant=rng.choice([True, False]))
        for scheme, params in [
            (Scheme.LNSO, PlanParams(n_folds=3)),
            (Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2)),
            (Scheme.LOSO, PlanParams()),
        ]:
            p = plan(m, scheme, params, seed=rng.getrandbits(64))
            plan_report = audit_plan(m, p, early_stop_split="none")
            assert not plan_report.by_kind(FindingKind.SUBJECT_OVERLAP)
            logs_report = audit_predictions(m, p, perfect_logs(m, p))
            assert not logs_report.by_kind(FindingKind.COVERAGE_GAP)
            cases += 1
    assert cases == 75
