"""Read subjectcv manifest + plan files and yield per-split index sets.

This module deliberately re-implements the file-format contract instead of
importing the planning engine: training code gets split indices from two
small documents and nothing else. Indices refer to the canonical window
enumeration of the manifest (subjects in file order, recordings in order,
windows by index), which is also the row order of exported feature files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

PLAN_FORMAT = "subjectcv-plan-v1"


class ParseError(Exception):
    """Document malformed or not of the expected format."""


class FingerprintMismatch(Exception):
    """The plan was built from a different manifest than the one supplied."""


@dataclass(frozen=True)
class SplitIndices:
    """Window indices for one split, ascending, disjoint across roles."""

    split_id: str
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...] | None = None


def _load_json(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return doc


def _canonical_manifest(doc: dict) -> dict:
    """Normalize a manifest document to the fingerprint's canonical shape."""
    try:
        return {
            "dataset_id": str(doc["dataset_id"]),
            "task_name": str(doc["task_name"]),
            "classes": [str(c) for c in doc["classes"]],
            "window_seconds": float(doc["window_seconds"]),
            "subjects": [
                {
                    "id": str(s["id"]),
                    "label": str(s["label"]) if s.get("label") is not None else None,
                    "recordings": [
                        {
                            "id": str(r["id"]),
                            "n_windows": int(r["n_windows"]),
                            "labels": [str(x) for x in r["labels"]]
                            if r.get("labels") is not None
                            else None,
                        }
                        for r in s["recordings"]
                    ],
                }
                for s in doc["subjects"]
            ],
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"manifest document malformed: {exc}") from exc


def manifest_fingerprint(doc: dict) -> str:
    canonical = json.dumps(_canonical_manifest(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _window_table(doc: dict):
    """Canonical enumeration: per-subject index lists plus a ref lookup."""
    per_subject: dict[str, list[int]] = {}
    ref_to_index: dict[tuple[str, str, int], int] = {}
    i = 0
    for s in doc["subjects"]:
        ids = per_subject.setdefault(str(s["id"]), [])
        for r in s["recordings"]:
            for w in range(int(r["n_windows"])):
                ref_to_index[(str(s["id"]), str(r["id"]), w)] = i
                ids.append(i)
                i += 1
    return per_subject, ref_to_index, i


def iter_splits(manifest_path: str | Path, plan_path: str | Path) -> list[SplitIndices]:
    """Expand every split of a plan into index sets, in plan order."""
    manifest_doc = _load_json(manifest_path)
    plan_doc = _load_json(plan_path)
    if plan_doc.get("format") != PLAN_FORMAT:
        raise ParseError(f"{plan_path}: not a {PLAN_FORMAT} document")
    fp = manifest_fingerprint(manifest_doc)
    plan_fp = plan_doc.get("manifest_fingerprint")
    if plan_fp != fp:
        raise FingerprintMismatch(
            f"plan references manifest {str(plan_fp)[:12]}..., "
            f"supplied manifest is {fp[:12]}..."
        )
    per_subject, ref_to_index, total = _window_table(manifest_doc)

    def subjects_to_ids(subjects) -> tuple[int, ...]:
        out: list[int] = []
        for sid in subjects:
            if sid not in per_subject:
                raise ParseError(f"plan references unknown subject {sid!r}")
            out.extend(per_subject[sid])
        return tuple(sorted(out))

    splits = []
    try:
        for sd in plan_doc["splits"]:
            val_windows = sd.get("val_windows")
            if val_windows is not None:
                # sample-based split: explicit val list, train is the rest of
                # the universe (all windows minus any held-out subjects)
                val = tuple(
                    sorted(ref_to_index[(str(w[0]), str(w[1]), int(w[2]))] for w in val_windows)
                )
                heldout = set(sd.get("heldout_subjects") or ())
                universe = set(range(total))
                for sid in heldout:
                    universe.difference_update(per_subject.get(sid, ()))
                train = tuple(sorted(universe - set(val)))
                test = None
            else:
                train = subjects_to_ids(sd["train_subjects"])
                val = subjects_to_ids(sd["val_subjects"])
                test = (
                    subjects_to_ids(sd["test_subjects"])
                    if sd.get("test_subjects") is not None
                    else None
                )
            splits.append(
                SplitIndices(split_id=str(sd["split_id"]), train=train, val=val, test=test)
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"plan document malformed: {exc}") from exc
    return splits
