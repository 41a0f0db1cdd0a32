"""Experiment data model: subjects, recordings, fixed-length windows, labels.

The manifest is the only ground truth for partitioning. It is an immutable
value after load; every other module consumes it read-only. Labels live at
window granularity internally: subject-constant labels (pathology-style
tasks) are expanded onto windows at load time so trial-based and
subject-constant tasks share one model.

Manifest file format (UTF-8 JSON):

    {
      "dataset_id": "...",
      "task_name": "...",
      "classes": ["A", "B", ...],
      "window_seconds": 4.0,
      "subjects": [
        {"id": "sub-01",
         "label": "A",                      # subject-constant tasks only
         "recordings": [
           {"id": "rec-01", "n_windows": 3,
            "labels": ["A", "B", "A"]}      # trial-based tasks only
         ]}
      ]
    }

Exactly one of subject ``label`` / recording ``labels`` must be present for
each subject.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DomainError, ParseError, ValidationError


@dataclass(frozen=True)
class LabelSpace:
    """Ordered set of class names; K = number of classes."""

    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValidationError("label space needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValidationError("class names must be unique")
        if any(not c for c in self.classes):
            raise ValidationError("class names must be non-empty")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ValidationError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class RecordingEntry:
    recording_id: str
    n_windows: int
    window_labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SubjectEntry:
    subject_id: str
    subject_label: str | None
    recordings: tuple[RecordingEntry, ...]

    @property
    def n_windows(self) -> int:
        return sum(r.n_windows for r in self.recordings)


@dataclass(frozen=True)
class WindowRef:
    """Address of one window: (subject, recording, 0-based index) plus label."""

    subject_id: str
    recording_id: str
    window_index: int
    label: str


@dataclass(frozen=True)
class Manifest:
    dataset_id: str
    task_name: str
    label_space: LabelSpace
    subjects: tuple[SubjectEntry, ...]
    window_seconds: float

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(s.subject_id for s in self.subjects)

    @property
    def total_windows(self) -> int:
        return sum(s.n_windows for s in self.subjects)

    def subject(self, subject_id: str) -> SubjectEntry:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise ValidationError(f"unknown subject {subject_id!r}")


def window_count(duration_seconds: float, window_seconds: float) -> int:
    """Number of non-overlapping windows that fit in a recording.

    The trailing remainder shorter than one window is dropped.
    """
    if window_seconds <= 0:
        raise DomainError("window_seconds must be positive")
    if duration_seconds < 0:
        raise DomainError("duration_seconds must be nonnegative")
    return math.floor(duration_seconds / window_seconds)


def _validate(m: Manifest) -> Manifest:
    if len(m.subjects) < 2:
        raise ValidationError("manifest needs at least 2 subjects")
    if m.window_seconds <= 0:
        raise ValidationError("window_seconds must be positive")
    seen_subjects = set()
    for s in m.subjects:
        if s.subject_id in seen_subjects:
            raise ValidationError(f"duplicate subject_id {s.subject_id!r}")
        seen_subjects.add(s.subject_id)
        if s.subject_label is not None and s.subject_label not in m.label_space.classes:
            raise ValidationError(
                f"subject {s.subject_id!r}: label {s.subject_label!r} not in label space"
            )
        seen_recordings = set()
        for r in s.recordings:
            if r.recording_id in seen_recordings:
                raise ValidationError(
                    f"subject {s.subject_id!r}: duplicate recording_id {r.recording_id!r}"
                )
            seen_recordings.add(r.recording_id)
            if r.n_windows < 0:
                raise ValidationError(
                    f"recording {r.recording_id!r}: n_windows must be nonnegative"
                )
            # Label mode: window labels XOR an inherited subject label.
            if r.window_labels is not None:
                if s.subject_label is not None:
                    raise ValidationError(
                        f"subject {s.subject_id!r}: recording {r.recording_id!r} carries "
                        "window labels but the subject also has a subject-level label"
                    )
                if len(r.window_labels) != r.n_windows:
                    raise ValidationError(
                        f"recording {r.recording_id!r}: {len(r.window_labels)} labels "
                        f"for {r.n_windows} windows"
                    )
                for lab in r.window_labels:
                    if lab not in m.label_space.classes:
                        raise ValidationError(
                            f"recording {r.recording_id!r}: label {lab!r} not in label space"
                        )
            elif s.subject_label is None and r.n_windows > 0:
                raise ValidationError(
                    f"recording {r.recording_id!r}: no window labels and subject "
                    f"{s.subject_id!r} has no subject-level label"
                )
    return m


def enumerate_windows(m: Manifest) -> tuple[WindowRef, ...]:
    """Canonical window order: subjects, then recordings, then window index.

    This order is the reference frame for feature files and index-based
    split expansion; re-running always yields the identical sequence.
    """
    refs = []
    for s in m.subjects:
        for r in s.recordings:
            for i in range(r.n_windows):
                label = r.window_labels[i] if r.window_labels is not None else s.subject_label
                refs.append(WindowRef(s.subject_id, r.recording_id, i, label))
    return tuple(refs)


def _from_dict(doc: dict) -> Manifest:
    try:
        classes = tuple(str(c) for c in doc["classes"])
        subjects = []
        for sd in doc["subjects"]:
            recordings = tuple(
                RecordingEntry(
                    recording_id=str(rd["id"]),
                    n_windows=int(rd["n_windows"]),
                    window_labels=tuple(str(x) for x in rd["labels"]) if "labels" in rd and rd["labels"] is not None else None,
                )
                for rd in sd["recordings"]
            )
            subjects.append(
                SubjectEntry(
                    subject_id=str(sd["id"]),
                    subject_label=str(sd["label"]) if sd.get("label") is not None else None,
                    recordings=recordings,
                )
            )
        m = Manifest(
            dataset_id=str(doc["dataset_id"]),
            task_name=str(doc["task_name"]),
            label_space=LabelSpace(classes),
            subjects=tuple(subjects),
            window_seconds=float(doc["window_seconds"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"manifest document malformed: {exc}") from exc
    return _validate(m)


def load_manifest(text: str) -> Manifest:
    """Parse and validate a manifest document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("manifest document must be a JSON object")
    return _from_dict(doc)


def read_manifest(path: str | Path) -> Manifest:
    return load_manifest(Path(path).read_text(encoding="utf-8"))


def manifest_to_dict(m: Manifest) -> dict:
    return {
        "dataset_id": m.dataset_id,
        "task_name": m.task_name,
        "classes": list(m.label_space.classes),
        "window_seconds": m.window_seconds,
        "subjects": [
            {
                "id": s.subject_id,
                "label": s.subject_label,
                "recordings": [
                    {
                        "id": r.recording_id,
                        "n_windows": r.n_windows,
                        "labels": list(r.window_labels) if r.window_labels is not None else None,
                    }
                    for r in s.recordings
                ],
            }
            for s in m.subjects
        ],
    }


def manifest_to_json(m: Manifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2, sort_keys=True) + "\n"


def write_manifest(m: Manifest, path: str | Path) -> None:
    Path(path).write_text(manifest_to_json(m), encoding="utf-8")


def fingerprint(m: Manifest) -> str:
    """Content hash of the manifest; recorded in every derived artifact."""
    canonical = json.dumps(manifest_to_dict(m), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
