import pytest

from splitfeed import CONTINUE, STOP, early_stop_guard


def feed(guard, losses):
    outcomes = []
    for loss in losses:
        outcomes.append(guard.update(loss))
        if outcomes[-1] == STOP:
            break
    return outcomes


def test_stops_after_patience_non_improving_epochs():
    g = early_stop_guard(patience=2)
    outcomes = feed(g, [3, 2, 1, 1, 1, 1])
    assert outcomes == [CONTINUE, CONTINUE, CONTINUE, CONTINUE, STOP]
    assert g.best_epoch == 2
    assert g.best_value == 1
    assert g.should_restore  # current epoch (4) is not the best (2)


def test_never_stops_on_strictly_decreasing_losses():
    g = early_stop_guard(patience=2)
    outcomes = feed(g, [10 - i for i in range(50)])
    assert all(o == CONTINUE for o in outcomes)
    assert g.best_epoch == 49
    assert not g.should_restore


def test_recovery_resets_patience():
    g = early_stop_guard(patience=2)
    outcomes = feed(g, [1, 2, 0.5])
    assert outcomes == [CONTINUE, CONTINUE, CONTINUE]
    assert g.best_epoch == 2
    assert not g.stopped


def test_patience_zero_stops_at_first_non_improvement():
    g = early_stop_guard(patience=0)
    assert g.update(1.0) == CONTINUE
    assert g.update(1.0) == STOP
    assert g.best_epoch == 0


def test_max_mode_tracks_largest():
    g = early_stop_guard(patience=1, mode="max")
    assert g.update(0.5) == CONTINUE
    assert g.update(0.7) == CONTINUE
    assert g.update(0.6) == STOP
    assert g.best_epoch == 1
    assert g.best_value == 0.7


def test_update_after_stop_keeps_stopping():
    g = early_stop_guard(patience=0)
    g.update(1.0)
    assert g.update(2.0) == STOP
    assert g.update(0.1) == STOP  # guard is latched


def test_invalid_arguments():
    with pytest.raises(ValueError):
        early_stop_guard(patience=-1)
    with pytest.raises(ValueError):
        early_stop_guard(mode="median")
