"""Synthetic subject-clustered datasets and a desk-scale iterative learner.

The generator plants a per-subject centroid (the subject signature), an
optional per-class direction, and isotropic noise, so leakage inflation can
be demonstrated end-to-end in seconds: with no class signal at all, any
sample-level CV still scores highly by recognizing subjects, while
subject-based CVs collapse to chance.

The learner is a nearest-prototype classifier with a bank of prototypes per
class, trained LVQ-style: each epoch, every misclassified training window
pulls the nearest prototype of its true class toward itself by lr. Training
follows the standard early-stopping contract (patience on the validation
loss, best weights restored).

Also houses the in-scope signal operations (DC removal, z-scoring,
non-overlapping window extraction) used when preparing real recordings.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    EmptyMatrix,
    EmptySplit,
    FingerprintMismatch,
    InvalidConfig,
    MismatchedInputs,
    ParseError,
    ZeroVariance,
)
from .manifest import (
    LabelSpace,
    Manifest,
    RecordingEntry,
    SubjectEntry,
    enumerate_windows,
    fingerprint,
)
from .metrics import PredictionLog, PredictionRow
from .partition import FoldPlan, eval_role, split_window_ids
from .rng import derive_seed


# -- signal operations -------------------------------------------------------


def dc_remove(x: np.ndarray) -> np.ndarray:
    """Subtract each channel's mean so every row sums to zero."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] < 1:
        raise EmptyMatrix("expected a channels x samples matrix with at least one sample")
    return x - x.mean(axis=1, keepdims=True)


def zscore(x: np.ndarray) -> np.ndarray:
    """Standardize each channel to mean 0 and population std 1."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] < 1:
        raise EmptyMatrix("expected a channels x samples matrix with at least one sample")
    std = x.std(axis=1, keepdims=True)
    if np.any(std == 0):
        flat = np.flatnonzero(std.ravel() == 0)
        raise ZeroVariance(f"constant channel(s): {flat.tolist()}")
    return (x - x.mean(axis=1, keepdims=True)) / std


def extract_windows(signal: np.ndarray, window_len: int) -> list[np.ndarray]:
    """Split a channels x samples matrix into non-overlapping windows.

    The trailing remainder shorter than window_len is dropped.
    """
    if window_len < 1:
        raise DomainError("window_len must be >= 1")
    signal = np.asarray(signal)
    if signal.ndim != 2:
        raise EmptyMatrix("expected a channels x samples matrix")
    n = signal.shape[1] // window_len
    return [signal[:, i * window_len : (i + 1) * window_len].copy() for i in range(n)]


# -- synthetic datasets --------------------------------------------------------


LABEL_MODES = ("subject_constant", "within_subject")


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int
    classes: tuple[str, ...]
    windows_per_subject: int
    feature_dim: int = 16
    subject_sigma: float = 3.0
    class_sigma: float = 1.0
    noise_sigma: float = 1.0
    label_mode: str = "subject_constant"

    def __post_init__(self):
        if self.n_subjects < 2:
            raise InvalidConfig("need at least 2 subjects")
        if len(self.classes) < 2 or len(set(self.classes)) != len(self.classes):
            raise InvalidConfig("classes must be >= 2 distinct names")
        if self.windows_per_subject < 2:
            raise InvalidConfig("windows_per_subject must be >= 2")
        if self.feature_dim < 1:
            raise InvalidConfig("feature_dim must be >= 1")
        if min(self.subject_sigma, self.class_sigma, self.noise_sigma) < 0:
            raise InvalidConfig("sigmas must be nonnegative")
        if self.label_mode not in LABEL_MODES:
            raise InvalidConfig(f"label_mode must be one of {LABEL_MODES}")


@dataclass(frozen=True, eq=False)
class SynthDataset:
    manifest: Manifest
    features: np.ndarray  # one row per window, canonical enumeration order

    def __post_init__(self):
        if len(self.features) != self.manifest.total_windows:
            raise InvalidConfig("feature matrix does not match the manifest's window count")


def generate(cfg: SynthConfig, seed: int) -> SynthDataset:
    """Build a manifest plus feature matrix from the cluster model.

    Subject labels (subject_constant mode) and window labels (within_subject
    mode, round-robin) are assigned deterministically; all draws come from a
    single seeded generator in a fixed order.
    """
    k = len(cfg.classes)
    rng = np.random.default_rng(seed)
    centroids = rng.normal(0.0, cfg.subject_sigma, (cfg.n_subjects, cfg.feature_dim))
    class_dirs = rng.normal(0.0, cfg.class_sigma, (k, cfg.feature_dim))

    subjects = []
    rows = []
    for i in range(cfg.n_subjects):
        if cfg.label_mode == "subject_constant":
            label_idx = np.full(cfg.windows_per_subject, i % k)
            entry = SubjectEntry(
                subject_id=f"sub-{i:03d}",
                subject_label=cfg.classes[i % k],
                recordings=(RecordingEntry("rec-0", cfg.windows_per_subject),),
            )
        else:
            label_idx = np.arange(cfg.windows_per_subject) % k
            entry = SubjectEntry(
                subject_id=f"sub-{i:03d}",
                subject_label=None,
                recordings=(
                    RecordingEntry(
                        "rec-0",
                        cfg.windows_per_subject,
                        tuple(cfg.classes[j] for j in label_idx),
                    ),
                ),
            )
        noise = rng.normal(0.0, cfg.noise_sigma, (cfg.windows_per_subject, cfg.feature_dim))
        rows.append(centroids[i] + class_dirs[label_idx] + noise)
        subjects.append(entry)

    manifest = Manifest(
        dataset_id="synth",
        task_name=f"synthetic-{cfg.label_mode}",
        label_space=LabelSpace(cfg.classes),
        subjects=tuple(subjects),
        window_seconds=4.0,
    )
    return SynthDataset(manifest=manifest, features=np.vstack(rows))


# -- prototype learner ---------------------------------------------------------


@dataclass(frozen=True)
class TrainHyper:
    max_epochs: int = 100
    patience: int = 15
    lr: float = 0.1
    prototypes_per_class: int = 32


@dataclass(eq=False)
class LearnerState:
    prototypes: np.ndarray  # (n_classes * prototypes_per_class, feature_dim)
    prototype_classes: np.ndarray
    epoch: int
    best_epoch: int
    best_val_loss: float
    best_weights: np.ndarray
    patience_counter: int
    val_losses: tuple[float, ...]

    def predict(self, x: np.ndarray) -> np.ndarray:
        d = _sq_dists(np.asarray(x, dtype=float), self.best_weights)
        return self.prototype_classes[d.argmin(axis=1)]


def _sq_dists(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    # ||x - p||^2 without forming the (n, m, d) broadcast tensor.
    return (
        (x**2).sum(axis=1, keepdims=True)
        - 2.0 * (x @ p.T)
        + (p**2).sum(axis=1)[None, :]
    )


def _hinge_loss(x: np.ndarray, y: np.ndarray, protos: np.ndarray, pclass: np.ndarray, k: int) -> float:
    d = _sq_dists(x, protos)
    scores = np.full((len(x), k), -np.inf)
    for c in range(k):
        mask = pclass == c
        if mask.any():
            scores[:, c] = -d[:, mask].min(axis=1)
    true_scores = scores[np.arange(len(x)), y]
    scores_wo = scores.copy()
    scores_wo[np.arange(len(x)), y] = -np.inf
    runner_up = scores_wo.max(axis=1)
    return float(np.maximum(0.0, 1.0 + runner_up - true_scores).mean())


def train_learner(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    n_classes: int,
    hyper: TrainHyper = TrainHyper(),
    seed: int = 0,
) -> LearnerState:
    """Fit prototypes with per-epoch LVQ updates and early stopping.

    Each epoch: misclassification is assessed with the epoch's starting
    prototypes, then misclassified samples are visited in a seeded shuffled
    order, each pulling the currently nearest prototype of its true class
    toward itself by lr. Validation loss is the mean multiclass hinge on
    prototype scores; training halts after `patience` consecutive
    non-improving epochs (at least one) and the best epoch's weights are
    kept.
    """
    train_x = np.asarray(train_x, dtype=float)
    val_x = np.asarray(val_x, dtype=float)
    train_y = np.asarray(train_y, dtype=int)
    val_y = np.asarray(val_y, dtype=int)
    if len(train_x) == 0 or len(val_x) == 0:
        raise EmptySplit("train and val sets must be non-empty")

    rng = np.random.default_rng(seed)
    ppc = hyper.prototypes_per_class
    dim = train_x.shape[1]
    protos = np.zeros((n_classes * ppc, dim))
    pclass = np.repeat(np.arange(n_classes), ppc)
    for c in range(n_classes):
        idx = np.flatnonzero(train_y == c)
        if len(idx):
            pick = rng.choice(idx, size=ppc, replace=len(idx) < ppc)
            protos[c * ppc : (c + 1) * ppc] = train_x[pick]

    best_loss = np.inf
    best_weights = protos.copy()
    best_epoch = -1
    bad_epochs = 0
    losses: list[float] = []
    stop_after = max(1, hyper.patience)
    epoch = 0
    for epoch in range(hyper.max_epochs):
        d = _sq_dists(train_x, protos)
        pred = pclass[d.argmin(axis=1)]
        wrong = np.flatnonzero(pred != train_y)
        rng.shuffle(wrong)
        for i in wrong:
            c = train_y[i]
            block = slice(c * ppc, (c + 1) * ppc)
            dd = ((protos[block] - train_x[i]) ** 2).sum(axis=1)
            j = c * ppc + int(dd.argmin())
            protos[j] += hyper.lr * (train_x[i] - protos[j])
        loss = _hinge_loss(val_x, val_y, protos, pclass, n_classes)
        losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_weights = protos.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= stop_after:
                break
    return LearnerState(
        prototypes=protos,
        prototype_classes=pclass,
        epoch=epoch,
        best_epoch=best_epoch,
        best_val_loss=float(best_loss),
        best_weights=best_weights,
        patience_counter=bad_epochs,
        val_losses=tuple(losses),
    )


# -- studies ---------------------------------------------------------------


def _labels_as_ints(ds: SynthDataset) -> np.ndarray:
    index = {c: i for i, c in enumerate(ds.manifest.label_space.classes)}
    return np.asarray([index[r.label] for r in enumerate_windows(ds.manifest)], dtype=int)


def _predict_log(ds, state, ids, refs, split_id, role) -> PredictionLog:
    classes = ds.manifest.label_space.classes
    pred = state.predict(ds.features[list(ids)])
    rows = tuple(
        PredictionRow(refs[i], refs[i].label, classes[p]) for i, p in zip(ids, pred)
    )
    return PredictionLog(split_id=split_id, role=role, rows=rows)


def _train_for_split(ds: SynthDataset, plan: FoldPlan, split, hyper: TrainHyper, cache: dict):
    train_ids, val_ids, test_ids = split_window_ids(ds.manifest, split, cache)
    y = cache.get("labels")
    if y is None:
        y = cache["labels"] = _labels_as_ints(ds)
    if len(train_ids) == 0 or len(val_ids) == 0:
        raise EmptySplit(f"split {split.split_id} has an empty train or val set")
    state = train_learner(
        ds.features[list(train_ids)],
        y[list(train_ids)],
        ds.features[list(val_ids)],
        y[list(val_ids)],
        n_classes=ds.manifest.label_space.n_classes,
        hyper=hyper,
        seed=derive_seed(plan.seed, "train", split.split_id),
    )
    return state, (train_ids, val_ids, test_ids)


def run_study(ds: SynthDataset, plan: FoldPlan, hyper: TrainHyper = TrainHyper()) -> list[PredictionLog]:
    """Train one model per split and log predictions on its evaluation set.

    Early stopping always monitors the validation set; the logged role is
    "test" when the split has an independent test set, "val" otherwise.
    """
    if plan.manifest_fingerprint != fingerprint(ds.manifest):
        raise FingerprintMismatch("plan was not built from this dataset's manifest")
    cache: dict = {}
    refs = enumerate_windows(ds.manifest)
    logs = []
    for split in plan.splits:
        state, (train_ids, val_ids, test_ids) = _train_for_split(ds, plan, split, hyper, cache)
        role = eval_role(split)
        ids = test_ids if role == "test" else val_ids
        logs.append(_predict_log(ds, state, ids, refs, split.split_id, role))
    return logs


def run_bias_study(
    ds: SynthDataset, plan: FoldPlan, hyper: TrainHyper = TrainHyper()
) -> tuple[list[PredictionLog], list[PredictionLog]]:
    """run_study plus predictions on each split's held-out subject group."""
    if plan.manifest_fingerprint != fingerprint(ds.manifest):
        raise FingerprintMismatch("plan was not built from this dataset's manifest")
    if any(not s.heldout_subjects for s in plan.splits):
        raise MismatchedInputs("bias studies need a BIAS_NESTED plan with held-out groups")
    refs = enumerate_windows(ds.manifest)
    id_of = {ref: i for i, ref in enumerate(refs)}
    cache: dict = {}
    eval_logs, heldout_logs = [], []
    for split in plan.splits:
        state, (train_ids, val_ids, test_ids) = _train_for_split(ds, plan, split, hyper, cache)
        role = eval_role(split)
        ids = test_ids if role == "test" else val_ids
        eval_logs.append(_predict_log(ds, state, ids, refs, split.split_id, role))
        held = set(split.heldout_subjects)
        held_ids = tuple(id_of[r] for r in refs if r.subject_id in held)
        heldout_logs.append(_predict_log(ds, state, held_ids, refs, split.split_id, "heldout"))
    return eval_logs, heldout_logs


# -- feature files -----------------------------------------------------------


def features_to_csv(ds: SynthDataset) -> str:
    dim = ds.features.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "recording_id", "window_index", "label", *(f"f{i}" for i in range(dim))])
    for ref, row in zip(enumerate_windows(ds.manifest), ds.features):
        w.writerow([ref.subject_id, ref.recording_id, ref.window_index, ref.label, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def write_features(ds: SynthDataset, path: str | Path) -> None:
    Path(path).write_text(features_to_csv(ds), encoding="utf-8")


def read_features(path: str | Path, m: Manifest) -> SynthDataset:
    """Load a feature file and align it to the manifest's window order."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty feature file") from None
    if header[:4] != ["subject_id", "recording_id", "window_index", "label"]:
        raise ParseError(f"unexpected feature header {header[:4]!r}")
    dim = len(header) - 4
    by_key: dict[tuple[str, str, int], np.ndarray] = {}
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 4 + dim:
            raise ParseError(f"line {lineno}: expected {4 + dim} fields, got {len(rec)}")
        key = (rec[0], rec[1], int(rec[2]))
        by_key[key] = np.asarray([float(v) for v in rec[4:]], dtype=float)
    refs = enumerate_windows(m)
    rows = []
    for ref in refs:
        key = (ref.subject_id, ref.recording_id, ref.window_index)
        if key not in by_key:
            raise ParseError(f"feature file is missing window {key}")
        rows.append(by_key[key])
    return SynthDataset(manifest=m, features=np.vstack(rows))
