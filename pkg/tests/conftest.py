import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subjectcv.manifest import (
    LabelSpace,
    Manifest,
    RecordingEntry,
    SubjectEntry,
)


def make_manifest(
    n_subjects: int,
    wps: int = 4,
    classes: tuple[str, ...] = ("A", "B"),
    subject_constant: bool = True,
    dataset_id: str = "toy",
) -> Manifest:
    subjects = []
    k = len(classes)
    for i in range(n_subjects):
        if subject_constant:
            entry = SubjectEntry(
                subject_id=f"sub-{i:02d}",
                subject_label=classes[i % k],
                recordings=(RecordingEntry("rec-0", wps),),
            )
        else:
            entry = SubjectEntry(
                subject_id=f"sub-{i:02d}",
                subject_label=None,
                recordings=(
                    RecordingEntry("rec-0", wps, tuple(classes[w % k] for w in range(wps))),
                ),
            )
        subjects.append(entry)
    return Manifest(
        dataset_id=dataset_id,
        task_name="toy-task",
        label_space=LabelSpace(classes),
        subjects=tuple(subjects),
        window_seconds=4.0,
    )


@pytest.fixture
def pathology_manifest() -> Manifest:
    return make_manifest(6, wps=4, subject_constant=True)


@pytest.fixture
def trial_manifest() -> Manifest:
    return make_manifest(6, wps=6, classes=("A", "B", "C"), subject_constant=False)
