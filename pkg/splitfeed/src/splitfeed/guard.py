"""Early-stopping guard for external training loops.

Feed it one monitored value per epoch; it answers "continue" or "stop" and
remembers which epoch was best so the caller can restore those weights.
"""

from __future__ import annotations

CONTINUE = "continue"
STOP = "stop"


class EarlyStopGuard:
    """Patience-based early stopping with best-epoch tracking.

    mode="min" treats smaller values as better (losses), mode="max" larger
    (accuracies). An improvement must be strict. Stopping triggers after
    `patience` consecutive non-improving epochs (at least one, so patience=0
    stops at the first epoch that fails to improve).
    """

    def __init__(self, patience: int = 15, mode: str = "min"):
        if patience < 0:
            raise ValueError("patience must be >= 0")
        if mode not in ("min", "max"):
            raise ValueError("mode must be 'min' or 'max'")
        self.patience = patience
        self.mode = mode
        self.best_value: float | None = None
        self.best_epoch: int = -1
        self.epoch: int = -1
        self.stopped: bool = False
        self._bad_epochs = 0

    def _improved(self, value: float) -> bool:
        if self.best_value is None:
            return True
        if self.mode == "min":
            return value < self.best_value
        return value > self.best_value

    def update(self, value: float) -> str:
        """Record one epoch's monitored value; returns "continue" or "stop"."""
        if self.stopped:
            return STOP
        self.epoch += 1
        if self._improved(value):
            self.best_value = value
            self.best_epoch = self.epoch
            self._bad_epochs = 0
            return CONTINUE
        self._bad_epochs += 1
        if self._bad_epochs >= max(1, self.patience):
            self.stopped = True
            return STOP
        return CONTINUE

    @property
    def should_restore(self) -> bool:
        """True when the current weights are not the best seen."""
        return self.best_epoch >= 0 and self.best_epoch != self.epoch
