"""Deterministic, seeded fold plans for the five CV schemes plus bias probing.

Scheme semantics:

* KFOLD_SAMPLE: windows shuffled once, chunked into near-equal folds; fold k
  is the validation set, the rest trains. Windows of one recording can land
  on both sides, which is exactly the leakage the auditor flags.
* LNSO: whole subjects shuffled once and chunked; fold k's subjects validate.
* LOSO: one subject per fold, manifest order, seed ignored.
* NLNSO: outer folds are exactly the LNSO folds for the same seed; for each
  outer fold the remaining subjects are re-shuffled with a derived sub-seed
  and chunked into inner folds. Split (o, i): test = outer group o,
  val = inner group i, train = rest.
* NLOSO: every ordered pair of distinct subjects (test, val), deterministic.
* BIAS_NESTED: repeats a base scheme N_R times, each run excluding a held-out
  subject group (~heldout_fraction of the subjects, disjoint across runs) used
  afterwards to measure generalization bias.

Plans store subject sets per role (window sets are reconstructed against the
manifest); sample-based splits additionally store their explicit validation
window references. Plan files are byte-reproducible for a given
(manifest, scheme, params, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import (
    AlignmentError,
    EmptyManifest,
    FingerprintMismatch,
    InsufficientSubjects,
    InvalidParams,
    ParseError,
    ValidationError,
)
from .manifest import Manifest, WindowRef, enumerate_windows, fingerprint
from .rng import RNG_ALGORITHM_ID, SeededRng, derive_seed

PLAN_FORMAT = "subjectcv-plan-v1"


class Scheme(str, Enum):
    KFOLD_SAMPLE = "KFOLD_SAMPLE"
    LNSO = "LNSO"
    LOSO = "LOSO"
    NLNSO = "NLNSO"
    NLOSO = "NLOSO"
    BIAS_NESTED = "BIAS_NESTED"


#: Schemes whose folds are built over whole subjects.
SUBJECT_BASED = frozenset({Scheme.LNSO, Scheme.LOSO, Scheme.NLNSO, Scheme.NLOSO})


@dataclass(frozen=True)
class PlanParams:
    """Scheme parameters; unused fields stay None.

    For BIAS_NESTED, base_scheme names the CV being bias-probed and the
    remaining fields parameterize it.
    """

    n_folds: int | None = None
    n_outer: int | None = None
    n_inner: int | None = None
    n_repetitions: int | None = None
    heldout_fraction: float | None = None
    base_scheme: Scheme | None = None


@dataclass(frozen=True)
class Split:
    """One train/val(/test) assignment.

    Subject tuples are in manifest order. Sample-based splits carry their
    explicit validation window ids (indices into the canonical window
    enumeration); subject-based splits are fully determined by the subject
    tuples. heldout_subjects is only set on bias-probe splits.
    """

    split_id: str
    train_subjects: tuple[str, ...]
    val_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...] | None = None
    outer_index: int | None = None
    inner_index: int | None = None
    repetition_index: int | None = None
    heldout_subjects: tuple[str, ...] | None = None
    val_window_ids: tuple[int, ...] | None = None

    @property
    def is_sample_based(self) -> bool:
        return self.val_window_ids is not None


@dataclass(frozen=True)
class FoldPlan:
    scheme: Scheme
    params: PlanParams
    seed: int
    manifest_fingerprint: str
    splits: tuple[Split, ...]
    rng_algorithm_id: str = RNG_ALGORITHM_ID


def chunk_sizes(n: int, k: int) -> list[int]:
    """Near-equal chunk sizes; the first n % k chunks get the extra item."""
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def _chunk(items: list, k: int) -> list[list]:
    out, pos = [], 0
    for size in chunk_sizes(len(items), k):
        out.append(items[pos : pos + size])
        pos += size
    return out


def _subject_order_key(m: Manifest) -> dict[str, int]:
    return {sid: i for i, sid in enumerate(m.subject_ids)}


def _in_manifest_order(subjects: list[str] | set[str], order: dict[str, int]) -> tuple[str, ...]:
    return tuple(sorted(subjects, key=order.__getitem__))


def _require(cond: bool, err: type[Exception], msg: str) -> None:
    if not cond:
        raise err(msg)


def _validate_params(scheme: Scheme, params: PlanParams) -> None:
    if scheme in (Scheme.KFOLD_SAMPLE, Scheme.LNSO):
        _require(params.n_folds is not None and params.n_folds >= 2, InvalidParams,
                 f"{scheme.value} requires n_folds >= 2")
    elif scheme == Scheme.NLNSO:
        _require(params.n_outer is not None and params.n_outer >= 2, InvalidParams,
                 "NLNSO requires n_outer >= 2")
        _require(params.n_inner is not None and params.n_inner >= 2, InvalidParams,
                 "NLNSO requires n_inner >= 2")
    elif scheme == Scheme.BIAS_NESTED:
        _require(params.base_scheme is not None, InvalidParams,
                 "BIAS_NESTED requires base_scheme")
        _require(params.base_scheme != Scheme.BIAS_NESTED, InvalidParams,
                 "base_scheme cannot itself be BIAS_NESTED")
        n_rep = params.n_repetitions
        frac = params.heldout_fraction
        _require(n_rep is not None and n_rep >= 1, InvalidParams,
                 "BIAS_NESTED requires n_repetitions >= 1")
        _require(frac is not None and 0.0 < frac < 1.0, InvalidParams,
                 "BIAS_NESTED requires 0 < heldout_fraction < 1")
        _require(n_rep * frac <= 1.0 + 1e-9, InvalidParams,
                 "heldout groups would overlap: n_repetitions * heldout_fraction > 1")
        _validate_params(params.base_scheme, params)


def _heldout_group_sizes(n_subjects: int, params: PlanParams) -> list[int]:
    take = round(params.n_repetitions * params.heldout_fraction * n_subjects)
    take = min(take, n_subjects)
    if take < params.n_repetitions:
        raise InsufficientSubjects(
            f"cannot carve {params.n_repetitions} non-empty heldout groups "
            f"out of {n_subjects} subjects at fraction {params.heldout_fraction}"
        )
    return chunk_sizes(take, params.n_repetitions)


def count_instances(scheme: Scheme, params: PlanParams, n_subjects: int) -> int:
    """Number of training instances (splits) a plan will contain."""
    _validate_params(scheme, params)
    if scheme in (Scheme.KFOLD_SAMPLE, Scheme.LNSO):
        return params.n_folds
    if scheme == Scheme.LOSO:
        return n_subjects
    if scheme == Scheme.NLNSO:
        return params.n_outer * params.n_inner
    if scheme == Scheme.NLOSO:
        return n_subjects * (n_subjects - 1)
    # BIAS_NESTED: base counts can depend on how many subjects remain after
    # excluding each heldout group, so sum per repetition.
    sizes = _heldout_group_sizes(n_subjects, params)
    return sum(count_instances(params.base_scheme, params, n_subjects - g) for g in sizes)


def _plan_kfold(m: Manifest, params: PlanParams, seed: int) -> list[Split]:
    refs = enumerate_windows(m)
    n = len(refs)
    _require(n >= params.n_folds, InvalidParams,
             f"KFOLD_SAMPLE with n_folds={params.n_folds} needs at least that many windows, got {n}")
    ids = list(range(n))
    SeededRng(seed).shuffle(ids)
    folds = _chunk(ids, params.n_folds)
    order = _subject_order_key(m)
    splits = []
    for k, fold in enumerate(folds):
        val_ids = tuple(sorted(fold))
        val_set = frozenset(val_ids)
        val_subjects = {refs[i].subject_id for i in val_ids}
        train_subjects = {refs[i].subject_id for i in range(n) if i not in val_set}
        splits.append(
            Split(
                split_id=f"kfold-{k}",
                train_subjects=_in_manifest_order(train_subjects, order),
                val_subjects=_in_manifest_order(val_subjects, order),
                outer_index=k,
                val_window_ids=val_ids,
            )
        )
    return splits


def _subject_groups(m: Manifest, n_folds: int, seed: int) -> list[list[str]]:
    subjects = list(m.subject_ids)
    SeededRng(seed).shuffle(subjects)
    return _chunk(subjects, n_folds)


def _plan_lnso(m: Manifest, params: PlanParams, seed: int) -> list[Split]:
    _require(m.n_subjects >= params.n_folds, InsufficientSubjects,
             f"LNSO with n_folds={params.n_folds} needs at least that many subjects, got {m.n_subjects}")
    groups = _subject_groups(m, params.n_folds, seed)
    order = _subject_order_key(m)
    all_subjects = set(m.subject_ids)
    splits = []
    for k, group in enumerate(groups):
        val = set(group)
        splits.append(
            Split(
                split_id=f"lnso-{k}",
                train_subjects=_in_manifest_order(all_subjects - val, order),
                val_subjects=_in_manifest_order(val, order),
                outer_index=k,
            )
        )
    return splits


def _plan_loso(m: Manifest) -> list[Split]:
    _require(m.n_subjects >= 3, InsufficientSubjects,
             f"LOSO needs at least 3 subjects, got {m.n_subjects}")
    subjects = m.subject_ids
    return [
        Split(
            split_id=f"loso-{k}",
            train_subjects=tuple(s for s in subjects if s != sid),
            val_subjects=(sid,),
            outer_index=k,
        )
        for k, sid in enumerate(subjects)
    ]


def _plan_nlnso(m: Manifest, params: PlanParams, seed: int) -> list[Split]:
    _require(m.n_subjects >= params.n_outer, InsufficientSubjects,
             f"NLNSO with n_outer={params.n_outer} needs at least that many subjects, got {m.n_subjects}")
    # Outer folds must coincide with the LNSO folds for the same seed: that
    # overlap is what makes nested-vs-plain comparisons well-defined.
    outer_groups = _subject_groups(m, params.n_outer, seed)
    order = _subject_order_key(m)
    splits = []
    for o, outer in enumerate(outer_groups):
        test = set(outer)
        remaining = [s for s in m.subject_ids if s not in test]
        if len(remaining) < params.n_inner:
            raise InsufficientSubjects(
                f"outer fold {o} leaves {len(remaining)} subjects for "
                f"{params.n_inner} inner folds"
            )
        shuffled = list(remaining)
        SeededRng(derive_seed(seed, "outer", o)).shuffle(shuffled)
        inner_groups = _chunk(shuffled, params.n_inner)
        for i, inner in enumerate(inner_groups):
            val = set(inner)
            train = set(remaining) - val
            splits.append(
                Split(
                    split_id=f"nlnso-o{o}-i{i}",
                    train_subjects=_in_manifest_order(train, order),
                    val_subjects=_in_manifest_order(val, order),
                    test_subjects=_in_manifest_order(test, order),
                    outer_index=o,
                    inner_index=i,
                )
            )
    return splits


def _plan_nloso(m: Manifest) -> list[Split]:
    _require(m.n_subjects >= 3, InsufficientSubjects,
             f"NLOSO needs at least 3 subjects, got {m.n_subjects}")
    subjects = m.subject_ids
    splits = []
    for o, test_sid in enumerate(subjects):
        rest = [s for s in subjects if s != test_sid]
        for i, val_sid in enumerate(rest):
            splits.append(
                Split(
                    split_id=f"nloso-o{o}-i{i}",
                    train_subjects=tuple(s for s in rest if s != val_sid),
                    val_subjects=(val_sid,),
                    test_subjects=(test_sid,),
                    outer_index=o,
                    inner_index=i,
                )
            )
    return splits


def _restrict_manifest(m: Manifest, keep: set[str]) -> Manifest:
    return Manifest(
        dataset_id=m.dataset_id,
        task_name=m.task_name,
        label_space=m.label_space,
        subjects=tuple(s for s in m.subjects if s.subject_id in keep),
        window_seconds=m.window_seconds,
    )


def _plan_bias(m: Manifest, params: PlanParams, seed: int) -> list[Split]:
    sizes = _heldout_group_sizes(m.n_subjects, params)
    shuffled = list(m.subject_ids)
    SeededRng(seed).shuffle(shuffled)
    order = _subject_order_key(m)
    ref_index = {ref: i for i, ref in enumerate(enumerate_windows(m))}
    splits: list[Split] = []
    pos = 0
    for r, size in enumerate(sizes):
        heldout = set(shuffled[pos : pos + size])
        pos += size
        remaining = set(m.subject_ids) - heldout
        sub_manifest = _restrict_manifest(m, remaining)
        base = plan(sub_manifest, params.base_scheme, params, derive_seed(seed, "rep", r))
        sub_refs = enumerate_windows(sub_manifest)
        for s in base.splits:
            val_ids = None
            if s.val_window_ids is not None:
                # Remap sample-level ids from the reduced enumeration to the
                # full manifest's enumeration.
                val_ids = tuple(sorted(ref_index[sub_refs[i]] for i in s.val_window_ids))
            splits.append(
                Split(
                    split_id=f"rep{r}-{s.split_id}",
                    train_subjects=s.train_subjects,
                    val_subjects=s.val_subjects,
                    test_subjects=s.test_subjects,
                    outer_index=s.outer_index,
                    inner_index=s.inner_index,
                    repetition_index=r,
                    heldout_subjects=_in_manifest_order(heldout, order),
                    val_window_ids=val_ids,
                )
            )
    return splits


def plan(m: Manifest, scheme: Scheme, params: PlanParams, seed: int) -> FoldPlan:
    """Materialize a seeded fold plan. Same inputs, byte-identical plan."""
    _validate_params(scheme, params)
    if not 0 <= seed < 2**64:
        raise InvalidParams("seed must be a 64-bit unsigned integer")
    if m.total_windows == 0:
        raise EmptyManifest("manifest declares no windows")
    if scheme != Scheme.KFOLD_SAMPLE:
        # a zero-window subject would make some evaluation set empty
        empty = [s.subject_id for s in m.subjects if s.n_windows == 0]
        if empty:
            raise ValidationError(
                f"subject-based partitioning needs windows for every subject; "
                f"none declared for: {', '.join(empty[:5])}"
            )
    if scheme == Scheme.KFOLD_SAMPLE:
        splits = _plan_kfold(m, params, seed)
    elif scheme == Scheme.LNSO:
        splits = _plan_lnso(m, params, seed)
    elif scheme == Scheme.LOSO:
        splits = _plan_loso(m)
    elif scheme == Scheme.NLNSO:
        splits = _plan_nlnso(m, params, seed)
    elif scheme == Scheme.NLOSO:
        splits = _plan_nloso(m)
    elif scheme == Scheme.BIAS_NESTED:
        splits = _plan_bias(m, params, seed)
    else:  # pragma: no cover - closed enumeration
        raise InvalidParams(f"unknown scheme {scheme!r}")
    return FoldPlan(
        scheme=scheme,
        params=params,
        seed=seed,
        manifest_fingerprint=fingerprint(m),
        splits=tuple(splits),
    )


# -- window-set expansion ------------------------------------------------


def _subject_window_ids(m: Manifest) -> dict[str, tuple[int, ...]]:
    ids: dict[str, list[int]] = {sid: [] for sid in m.subject_ids}
    for i, ref in enumerate(enumerate_windows(m)):
        ids[ref.subject_id].append(i)
    return {sid: tuple(v) for sid, v in ids.items()}


def split_window_ids(
    m: Manifest, split: Split, _cache: dict | None = None
) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...] | None]:
    """Expand a split into (train, val, test) window ids.

    Ids index the canonical window enumeration of the manifest and are
    returned in ascending order. The optional cache dict lets callers reuse
    the per-subject id table across many splits of one manifest.
    """
    if _cache is None:
        _cache = {}
    table = _cache.get("subject_ids")
    if table is None:
        table = _cache["subject_ids"] = _subject_window_ids(m)

    def ids_of(subjects) -> tuple[int, ...]:
        out = []
        for sid in subjects:
            out.extend(table[sid])
        return tuple(sorted(out))

    if split.is_sample_based:
        val = split.val_window_ids
        if split.heldout_subjects:
            universe = set()
            for sid in m.subject_ids:
                if sid not in split.heldout_subjects:
                    universe.update(table[sid])
        else:
            universe = set(range(m.total_windows))
        train = tuple(sorted(universe - set(val)))
        return train, val, None
    train = ids_of(split.train_subjects)
    val = ids_of(split.val_subjects)
    test = ids_of(split.test_subjects) if split.test_subjects is not None else None
    return train, val, test


def split_window_refs(
    m: Manifest, split: Split, _cache: dict | None = None
) -> tuple[tuple[WindowRef, ...], tuple[WindowRef, ...], tuple[WindowRef, ...] | None]:
    """Expand a split into (train, val, test) WindowRef tuples."""
    if _cache is None:
        _cache = {}
    refs = _cache.get("refs")
    if refs is None:
        refs = _cache["refs"] = enumerate_windows(m)
    train, val, test = split_window_ids(m, split, _cache)
    pick = lambda ids: tuple(refs[i] for i in ids)
    return pick(train), pick(val), pick(test) if test is not None else None


def eval_role(split: Split) -> str:
    """Which set a model is reported on: test when present, else val."""
    return "test" if split.test_subjects is not None else "val"


# -- alignment -------------------------------------------------------------


def align_outer(plain: FoldPlan, nested: FoldPlan) -> list[tuple[int, int]]:
    """Match each plain-CV fold to the nested outer fold with identical subjects.

    Valid pairings are (LNSO, NLNSO) with the same seed and n_folds == n_outer,
    and (LOSO, NLOSO). Returns (plain_fold_index, outer_index) pairs covering
    every fold; any mismatch means the plans were not built consistently.
    """
    if plain.manifest_fingerprint != nested.manifest_fingerprint:
        raise AlignmentError("plans were built from different manifests")
    pairings = {
        (Scheme.LNSO, Scheme.NLNSO),
        (Scheme.LOSO, Scheme.NLOSO),
    }
    if (plain.scheme, nested.scheme) not in pairings:
        raise AlignmentError(
            f"cannot align {plain.scheme.value} against {nested.scheme.value}"
        )
    outer_sets: dict[frozenset[str], int] = {}
    for s in nested.splits:
        outer_sets.setdefault(frozenset(s.test_subjects), s.outer_index)
    mapping = []
    used = set()
    for s in plain.splits:
        key = frozenset(s.val_subjects)
        o = outer_sets.get(key)
        if o is None:
            raise AlignmentError(
                f"fold {s.split_id}: validation subjects {sorted(key)} match no "
                "nested outer test set (mismatched seed or parameters?)"
            )
        mapping.append((s.outer_index, o))
        used.add(o)
    if len(used) != len(outer_sets):
        raise AlignmentError("outer folds left unmatched")
    return mapping


# -- serialization ---------------------------------------------------------


def plan_to_dict(p: FoldPlan, m: Manifest) -> dict:
    refs = enumerate_windows(m)
    splits = []
    for s in p.splits:
        d = {
            "split_id": s.split_id,
            "outer_index": s.outer_index,
            "inner_index": s.inner_index,
            "repetition_index": s.repetition_index,
            "train_subjects": list(s.train_subjects),
            "val_subjects": list(s.val_subjects),
            "test_subjects": list(s.test_subjects) if s.test_subjects is not None else None,
            "heldout_subjects": list(s.heldout_subjects) if s.heldout_subjects is not None else None,
            "val_windows": (
                [[refs[i].subject_id, refs[i].recording_id, refs[i].window_index] for i in s.val_window_ids]
                if s.val_window_ids is not None
                else None
            ),
        }
        splits.append(d)
    return {
        "format": PLAN_FORMAT,
        "scheme": p.scheme.value,
        "params": {
            "n_folds": p.params.n_folds,
            "n_outer": p.params.n_outer,
            "n_inner": p.params.n_inner,
            "n_repetitions": p.params.n_repetitions,
            "heldout_fraction": p.params.heldout_fraction,
            "base_scheme": p.params.base_scheme.value if p.params.base_scheme else None,
        },
        "seed": p.seed,
        "rng_algorithm_id": p.rng_algorithm_id,
        "manifest_fingerprint": p.manifest_fingerprint,
        "splits": splits,
    }


def plan_to_json(p: FoldPlan, m: Manifest) -> str:
    return json.dumps(plan_to_dict(p, m), indent=2, sort_keys=True) + "\n"


def write_plan(p: FoldPlan, m: Manifest, path: str | Path) -> None:
    Path(path).write_text(plan_to_json(p, m), encoding="utf-8")


def load_plan(text: str, m: Manifest) -> FoldPlan:
    """Parse a plan file and rebuild window sets against the manifest."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"plan is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != PLAN_FORMAT:
        raise ParseError(f"not a {PLAN_FORMAT} document")
    fp = doc.get("manifest_fingerprint")
    if fp != fingerprint(m):
        raise FingerprintMismatch(
            "plan was built from a different manifest "
            f"(plan {str(fp)[:12]}..., manifest {fingerprint(m)[:12]}...)"
        )
    try:
        pd = doc["params"]
        params = PlanParams(
            n_folds=pd.get("n_folds"),
            n_outer=pd.get("n_outer"),
            n_inner=pd.get("n_inner"),
            n_repetitions=pd.get("n_repetitions"),
            heldout_fraction=pd.get("heldout_fraction"),
            base_scheme=Scheme(pd["base_scheme"]) if pd.get("base_scheme") else None,
        )
        ref_index = {
            (ref.subject_id, ref.recording_id, ref.window_index): i
            for i, ref in enumerate(enumerate_windows(m))
        }
        known = set(m.subject_ids)

        def checked(subjects) -> tuple[str, ...]:
            for sid in subjects:
                if sid not in known:
                    raise ParseError(f"plan references unknown subject {sid!r}")
            return tuple(subjects)

        splits = []
        for sd in doc["splits"]:
            val_windows = sd.get("val_windows")
            val_ids = None
            if val_windows is not None:
                val_ids = tuple(sorted(ref_index[(w[0], w[1], int(w[2]))] for w in val_windows))
            splits.append(
                Split(
                    split_id=sd["split_id"],
                    train_subjects=checked(sd["train_subjects"]),
                    val_subjects=checked(sd["val_subjects"]),
                    test_subjects=checked(sd["test_subjects"]) if sd.get("test_subjects") is not None else None,
                    outer_index=sd.get("outer_index"),
                    inner_index=sd.get("inner_index"),
                    repetition_index=sd.get("repetition_index"),
                    heldout_subjects=checked(sd["heldout_subjects"]) if sd.get("heldout_subjects") is not None else None,
                    val_window_ids=val_ids,
                )
            )
        return FoldPlan(
            scheme=Scheme(doc["scheme"]),
            params=params,
            seed=int(doc["seed"]),
            manifest_fingerprint=fp,
            splits=tuple(splits),
            rng_algorithm_id=doc["rng_algorithm_id"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"plan document malformed: {exc}") from exc


def read_plan(path: str | Path, m: Manifest) -> FoldPlan:
    return load_plan(Path(path).read_text(encoding="utf-8"), m)
