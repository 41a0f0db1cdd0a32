"""Thin training-loop client for subjectcv manifest and plan files."""

from .guard import CONTINUE, STOP, EarlyStopGuard
from .plans import (
    FingerprintMismatch,
    ParseError,
    SplitIndices,
    iter_splits,
    manifest_fingerprint,
)

__version__ = "0.1.0"


def early_stop_guard(patience: int = 15, mode: str = "min") -> EarlyStopGuard:
    return EarlyStopGuard(patience=patience, mode=mode)
