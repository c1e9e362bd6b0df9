from types import SimpleNamespace

import numpy as np
import pytest

from kslab.blowup import (
    BLOWUP,
    NO_BLOWUP,
    BlowupCriterion,
    accelerating,
    detect_blowup,
    detect_blowup_arrays,
)


def test_finite_time_singularity_is_flagged():
    t = np.linspace(0.0, 0.999, 200)
    v = detect_blowup_arrays(t, 1.0 / (1.0 - t))
    assert v.kind == BLOWUP
    assert v.time == pytest.approx(0.9, abs=0.01)


def test_exact_exponential_growth_counts_as_accelerating():
    t = np.linspace(0.0, 5.0, 101)
    v = detect_blowup_arrays(t, np.exp(t))
    assert v.suspected
    assert np.exp(v.time) >= 10.0


def test_decelerating_growth_is_not_flagged():
    t = np.linspace(0.0, 10.0, 200)
    v = detect_blowup_arrays(t, 1.0 + 20.0 * (1.0 - np.exp(-t)))
    assert v.kind == NO_BLOWUP


def test_bounded_series_not_flagged():
    t = np.linspace(0.0, 10.0, 50)
    assert detect_blowup_arrays(t, 2.0 + np.sin(t)).kind == NO_BLOWUP


def test_slope_tolerance_suppresses_exponential():
    t = np.linspace(0.0, 5.0, 101)
    assert not detect_blowup_arrays(t, np.exp(t), BlowupCriterion(10.0, 0.0, 0.5)).suspected


def test_time_step_floor():
    t = np.linspace(0.0, 1.0, 10)
    dts = np.full(10, 1e-3)
    dts[6] = 1e-12
    v = detect_blowup_arrays(t, np.ones(10), BlowupCriterion(10.0, 1e-10), dts)
    assert v.suspected
    assert v.index == 6
    assert "floor" in v.reason


def test_detect_blowup_on_series_object():
    t = np.linspace(0.0, 0.99, 100)
    series = SimpleNamespace(times=list(t), n_inf=list(1.0 / (1.0 - t)))
    assert detect_blowup(series, BlowupCriterion(10.0)).suspected


def test_accelerating_short_series():
    assert not accelerating([0.0, 1.0], [1.0, 2.0])
    assert accelerating([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], np.exp(np.arange(8.0) ** 2))


@pytest.mark.parametrize("kwargs", [{"growth_factor": 1.0}, {"dt_floor": -1.0}])
def test_criterion_validation(kwargs):
    with pytest.raises(ValueError):
        BlowupCriterion(**kwargs)


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        detect_blowup_arrays([], [])
