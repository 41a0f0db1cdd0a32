import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_manifest
from subjectcv.errors import (
    AlignmentError,
    EmptyManifest,
    FingerprintMismatch,
    InsufficientSubjects,
    InvalidParams,
    ParseError,
    ValidationError,
)
from subjectcv.manifest import Manifest, RecordingEntry, SubjectEntry, enumerate_windows
from subjectcv.partition import (
    FoldPlan,
    PlanParams,
    Scheme,
    align_outer,
    chunk_sizes,
    count_instances,
    eval_role,
    load_plan,
    plan,
    plan_to_json,
    split_window_ids,
    split_window_refs,
)


def test_chunk_sizes_balance():
    assert chunk_sizes(88, 10) == [9, 9, 9, 9, 9, 9, 9, 9, 8, 8]
    assert chunk_sizes(10, 10) == [1] * 10
    assert chunk_sizes(7, 3) == [3, 2, 2]


# -- count_instances -------------------------------------------------------


def test_count_instances_formulas():
    assert count_instances(Scheme.KFOLD_SAMPLE, PlanParams(n_folds=10), 88) == 10
    assert count_instances(Scheme.LNSO, PlanParams(n_folds=10), 88) == 10
    assert count_instances(Scheme.LOSO, PlanParams(), 81) == 81
    assert count_instances(Scheme.NLNSO, PlanParams(n_outer=10, n_inner=10), 106) == 100
    assert count_instances(Scheme.NLOSO, PlanParams(), 20) == 380
    assert count_instances(Scheme.NLOSO, PlanParams(), 81) == 6480


def test_count_instances_bias_nested():
    params = PlanParams(n_folds=10, n_repetitions=10, heldout_fraction=0.1, base_scheme=Scheme.LNSO)
    assert count_instances(Scheme.BIAS_NESTED, params, 40) == 100
    # subject-count-dependent base: uneven heldout groups change per-rep counts
    params = PlanParams(n_repetitions=4, heldout_fraction=0.25, base_scheme=Scheme.LOSO)
    # 10 subjects -> heldout sizes [3, 3, 2, 2] -> LOSO counts 7 + 7 + 8 + 8
    assert count_instances(Scheme.BIAS_NESTED, params, 10) == 30


def test_out_of_range_seed_rejected(pathology_manifest):
    with pytest.raises(InvalidParams):
        plan(pathology_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=-1)
    with pytest.raises(InvalidParams):
        plan(pathology_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=2**64)


def test_invalid_params_rejected():
    with pytest.raises(InvalidParams):
        count_instances(Scheme.LNSO, PlanParams(n_folds=1), 10)
    with pytest.raises(InvalidParams):
        count_instances(Scheme.NLNSO, PlanParams(n_outer=10), 30)
    with pytest.raises(InvalidParams):
        count_instances(
            Scheme.BIAS_NESTED,
            PlanParams(n_repetitions=10, heldout_fraction=0.5, base_scheme=Scheme.LNSO, n_folds=5),
            20,
        )


# -- per-scheme plan shapes --------------------------------------------------


def test_lnso_group_sizes_88_subjects():
    m = make_manifest(88, wps=2)
    p = plan(m, Scheme.LNSO, PlanParams(n_folds=10), seed=83136297)
    sizes = sorted((len(s.val_subjects) for s in p.splits), reverse=True)
    assert sizes == [9] * 8 + [8] * 2


def test_loso_is_deterministic_and_ignores_seed(pathology_manifest):
    p1 = plan(pathology_manifest, Scheme.LOSO, PlanParams(), seed=1)
    p2 = plan(pathology_manifest, Scheme.LOSO, PlanParams(), seed=2)
    assert [s.val_subjects for s in p1.splits] == [s.val_subjects for s in p2.splits]
    assert [s.val_subjects for s in p1.splits] == [(sid,) for sid in pathology_manifest.subject_ids]


def test_nloso_ordered_pairs():
    m = make_manifest(3, wps=2)
    p = plan(m, Scheme.NLOSO, PlanParams(), seed=0)
    pairs = [(s.test_subjects[0], s.val_subjects[0]) for s in p.splits]
    a, b, c = m.subject_ids
    assert pairs == [(a, b), (a, c), (b, a), (b, c), (c, a), (c, b)]


def test_nlnso_10x10_has_100_splits():
    m = make_manifest(88, wps=1)
    p = plan(m, Scheme.NLNSO, PlanParams(n_outer=10, n_inner=10), seed=83136297)
    assert len(p.splits) == 100


def test_kfold_fold_sizes_near_equal(trial_manifest):
    p = plan(trial_manifest, Scheme.KFOLD_SAMPLE, PlanParams(n_folds=4), seed=9)
    sizes = [len(s.val_window_ids) for s in p.splits]
    assert max(sizes) - min(sizes) <= 1
    assert sum(sizes) == trial_manifest.total_windows


def test_insufficient_subjects():
    m = make_manifest(10, wps=2)
    with pytest.raises(InsufficientSubjects):
        plan(m, Scheme.LNSO, PlanParams(n_folds=12), seed=0)
    two = make_manifest(2, wps=2)
    with pytest.raises(InsufficientSubjects):
        plan(two, Scheme.LOSO, PlanParams(), seed=0)
    with pytest.raises(InsufficientSubjects):
        plan(two, Scheme.NLOSO, PlanParams(), seed=0)


def test_empty_manifest_rejected():
    m = Manifest(
        dataset_id="empty",
        task_name="none",
        label_space=make_manifest(2).label_space,
        subjects=tuple(
            SubjectEntry(f"s{i}", "A", (RecordingEntry("r", 0),)) for i in range(3)
        ),
        window_seconds=4.0,
    )
    with pytest.raises(EmptyManifest):
        plan(m, Scheme.LOSO, PlanParams(), seed=0)


def test_zero_window_subject_rejected_for_subject_based_schemes():
    base = make_manifest(5, wps=2)
    subjects = list(base.subjects)
    subjects[2] = SubjectEntry(subjects[2].subject_id, subjects[2].subject_label,
                               (RecordingEntry("rec-0", 0),))
    m = Manifest(base.dataset_id, base.task_name, base.label_space, tuple(subjects), 4.0)
    with pytest.raises(ValidationError, match="none declared"):
        plan(m, Scheme.LOSO, PlanParams(), seed=0)
    # sample-level folding is unaffected: the subject simply contributes nothing
    p = plan(m, Scheme.KFOLD_SAMPLE, PlanParams(n_folds=2), seed=0)
    assert len(p.splits) == 2


def test_bias_nested_heldout_groups_partition_subjects():
    m = make_manifest(40, wps=2)
    params = PlanParams(n_folds=10, n_repetitions=10, heldout_fraction=0.1, base_scheme=Scheme.LNSO)
    p = plan(m, Scheme.BIAS_NESTED, params, seed=83136297)
    assert len(p.splits) == 100
    groups = {}
    for s in p.splits:
        groups.setdefault(s.repetition_index, set()).update(s.heldout_subjects)
    assert len(groups) == 10
    all_held = [sid for g in groups.values() for sid in g]
    assert sorted(all_held) == sorted(m.subject_ids)  # disjoint cover
    for s in p.splits:
        held = set(s.heldout_subjects)
        assert held.isdisjoint(s.train_subjects)
        assert held.isdisjoint(s.val_subjects)


# -- determinism ---------------------------------------------------------------


@pytest.mark.parametrize(
    "scheme,params",
    [
        (Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3)),
        (Scheme.LNSO, PlanParams(n_folds=3)),
        (Scheme.LOSO, PlanParams()),
        (Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2)),
        (Scheme.NLOSO, PlanParams()),
        (
            Scheme.BIAS_NESTED,
            PlanParams(n_folds=2, n_repetitions=3, heldout_fraction=0.2, base_scheme=Scheme.LNSO),
        ),
    ],
)
def test_plan_deterministic(scheme, params):
    m = make_manifest(10, wps=3, subject_constant=False, classes=("A", "B"))
    p1 = plan(m, scheme, params, seed=424242)
    p2 = plan(m, scheme, params, seed=424242)
    assert p1 == p2
    assert plan_to_json(p1, m) == plan_to_json(p2, m)


def test_different_seed_changes_shuffled_schemes():
    m = make_manifest(10, wps=2)
    a = plan(m, Scheme.LNSO, PlanParams(n_folds=5), seed=1)
    b = plan(m, Scheme.LNSO, PlanParams(n_folds=5), seed=2)
    assert [s.val_subjects for s in a.splits] != [s.val_subjects for s in b.splits]


# -- partition / purity properties ------------------------------------------


SCHEME_STRATEGY = st.sampled_from(
    [
        (Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3)),
        (Scheme.LNSO, PlanParams(n_folds=3)),
        (Scheme.LOSO, PlanParams()),
        (Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2)),
        (Scheme.NLOSO, PlanParams()),
    ]
)


@settings(max_examples=60, deadline=None)
@given(
    n_subjects=st.integers(min_value=6, max_value=12),
    wps=st.integers(min_value=1, max_value=5),
    subject_constant=st.booleans(),
    seed=st.integers(min_value=0, max_value=2**64 - 1),
    scheme_params=SCHEME_STRATEGY,
)
def test_partition_and_purity_properties(n_subjects, wps, subject_constant, seed, scheme_params):
    scheme, params = scheme_params
    m = make_manifest(n_subjects, wps=wps, subject_constant=subject_constant)
    p = plan(m, scheme, params, seed)
    assert len(p.splits) == count_instances(scheme, params, n_subjects)

    all_ids = set(range(m.total_windows))
    eval_union: list[int] = []
    cache: dict = {}
    seen_outer = set()
    for s in p.splits:
        train, val, test = split_window_ids(m, s, cache)
        # pairwise disjoint, train and val non-empty
        assert train and val
        assert not (set(train) & set(val))
        if test is not None:
            assert not (set(train) & set(test))
            assert not (set(val) & set(test))
        # subject purity for subject-based schemes
        if scheme != Scheme.KFOLD_SAMPLE:
            assert not (set(s.train_subjects) & set(s.val_subjects))
            if s.test_subjects is not None:
                assert not (set(s.train_subjects) & set(s.test_subjects))
                assert not (set(s.val_subjects) & set(s.test_subjects))
        # one evaluation set per round partitions the manifest
        if eval_role(s) == "test":
            if s.outer_index not in seen_outer:
                seen_outer.add(s.outer_index)
                eval_union.extend(test)
        else:
            eval_union.extend(val)
    assert sorted(eval_union) == sorted(all_ids)
    assert len(eval_union) == len(all_ids)  # no duplicates


@settings(max_examples=30, deadline=None)
@given(
    n_subjects=st.integers(min_value=8, max_value=16),
    seed=st.integers(min_value=0, max_value=2**64 - 1),
    base=st.sampled_from([Scheme.KFOLD_SAMPLE, Scheme.LNSO, Scheme.LOSO]),
)
def test_bias_nested_partitions_non_heldout_windows_per_repetition(n_subjects, seed, base):
    m = make_manifest(n_subjects, wps=2)
    params = PlanParams(n_folds=2, n_repetitions=3, heldout_fraction=0.2, base_scheme=base)
    p = plan(m, Scheme.BIAS_NESTED, params, seed)
    assert len(p.splits) == count_instances(Scheme.BIAS_NESTED, params, n_subjects)
    cache: dict = {}
    by_rep: dict[int, list] = {}
    for s in p.splits:
        by_rep.setdefault(s.repetition_index, []).append(s)
    for rep, splits in by_rep.items():
        held = set(splits[0].heldout_subjects)
        assert all(set(s.heldout_subjects) == held for s in splits)
        expected = [
            i
            for i, ref in enumerate(enumerate_windows(m))
            if ref.subject_id not in held
        ]
        eval_union: list[int] = []
        for s in splits:
            train, val, test = split_window_ids(m, s, cache)
            eval_union.extend(test if test is not None else val)
            held_ids = {
                i for i, ref in enumerate(enumerate_windows(m)) if ref.subject_id in held
            }
            assert held_ids.isdisjoint(train)
            assert held_ids.isdisjoint(val)
            if test is not None:
                assert held_ids.isdisjoint(test)
        assert sorted(eval_union) == expected


@settings(max_examples=30, deadline=None)
@given(
    n_subjects=st.integers(min_value=8, max_value=14),
    seed=st.integers(min_value=0, max_value=2**64 - 1),
)
def test_nlnso_inner_groups_partition_non_test_subjects(n_subjects, seed):
    m = make_manifest(n_subjects, wps=1)
    p = plan(m, Scheme.NLNSO, PlanParams(n_outer=4, n_inner=3), seed)
    by_outer: dict[int, list] = {}
    for s in p.splits:
        by_outer.setdefault(s.outer_index, []).append(s)
    for outer, splits in by_outer.items():
        test = set(splits[0].test_subjects)
        non_test = [sid for sid in m.subject_ids if sid not in test]
        val_union = [sid for s in splits for sid in s.val_subjects]
        assert sorted(val_union) == sorted(non_test)


def test_fold_balance_property():
    m = make_manifest(11, wps=1)
    p = plan(m, Scheme.LNSO, PlanParams(n_folds=4), seed=5)
    sizes = [len(s.val_subjects) for s in p.splits]
    assert max(sizes) - min(sizes) <= 1


# -- alignment ---------------------------------------------------------------


def test_align_outer_lnso_nlnso():
    m = make_manifest(14, wps=2)
    lnso = plan(m, Scheme.LNSO, PlanParams(n_folds=4), seed=83136297)
    nlnso = plan(m, Scheme.NLNSO, PlanParams(n_outer=4, n_inner=3), seed=83136297)
    mapping = align_outer(lnso, nlnso)
    assert sorted(mapping) == [(i, i) for i in range(4)]


def test_align_outer_mismatched_seed():
    m = make_manifest(14, wps=2)
    lnso = plan(m, Scheme.LNSO, PlanParams(n_folds=4), seed=83136297)
    nlnso = plan(m, Scheme.NLNSO, PlanParams(n_outer=4, n_inner=3), seed=83136298)
    with pytest.raises(AlignmentError):
        align_outer(lnso, nlnso)


def test_align_outer_loso_nloso(pathology_manifest):
    loso = plan(pathology_manifest, Scheme.LOSO, PlanParams(), seed=0)
    nloso = plan(pathology_manifest, Scheme.NLOSO, PlanParams(), seed=0)
    mapping = align_outer(loso, nloso)
    assert len(mapping) == pathology_manifest.n_subjects
    assert mapping == [(i, i) for i in range(pathology_manifest.n_subjects)]


def test_align_outer_rejects_wrong_pairing(pathology_manifest):
    loso = plan(pathology_manifest, Scheme.LOSO, PlanParams(), seed=0)
    kfold = plan(pathology_manifest, Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3), seed=0)
    with pytest.raises(AlignmentError):
        align_outer(loso, kfold)


# -- serialization -------------------------------------------------------------


@pytest.mark.parametrize(
    "scheme,params",
    [
        (Scheme.KFOLD_SAMPLE, PlanParams(n_folds=3)),
        (Scheme.LNSO, PlanParams(n_folds=3)),
        (Scheme.NLNSO, PlanParams(n_outer=3, n_inner=2)),
        (Scheme.NLOSO, PlanParams()),
        (
            Scheme.BIAS_NESTED,
            PlanParams(n_folds=3, n_repetitions=2, heldout_fraction=0.2, base_scheme=Scheme.KFOLD_SAMPLE),
        ),
    ],
)
def test_plan_round_trip(scheme, params):
    m = make_manifest(10, wps=3, subject_constant=False)
    p = plan(m, scheme, params, seed=99)
    text = plan_to_json(p, m)
    again = load_plan(text, m)
    assert again == p
    # expansion identical too
    for s1, s2 in zip(p.splits, again.splits):
        assert split_window_refs(m, s1) == split_window_refs(m, s2)


def test_load_plan_rejects_other_manifest():
    m = make_manifest(6, wps=2)
    other = make_manifest(7, wps=2)
    p = plan(m, Scheme.LOSO, PlanParams(), seed=0)
    text = plan_to_json(p, m)
    with pytest.raises(FingerprintMismatch):
        load_plan(text, other)


def test_load_plan_rejects_garbage():
    m = make_manifest(6, wps=2)
    with pytest.raises(ParseError):
        load_plan("{not json", m)
    with pytest.raises(ParseError):
        load_plan('{"format": "something-else"}', m)


def test_load_plan_rejects_unknown_subject():
    import json

    m = make_manifest(6, wps=2)
    p = plan(m, Scheme.LNSO, PlanParams(n_folds=3), seed=0)
    doc = json.loads(plan_to_json(p, m))
    doc["splits"][0]["val_subjects"].append("sub-99")
    with pytest.raises(ParseError, match="unknown subject"):
        load_plan(json.dumps(doc), m)


def test_plan_records_rng_identity(pathology_manifest):
    p = plan(pathology_manifest, Scheme.LNSO, PlanParams(n_folds=3), seed=1)
    assert p.rng_algorithm_id == "splitmix64/fisher-yates-v1"
    assert isinstance(p, FoldPlan)
