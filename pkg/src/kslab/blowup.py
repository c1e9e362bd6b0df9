"""Numerical blow-up flag shared by the periodic and the radial simulators.

A run is flagged ``BlowupSuspected`` at the first sample where

* ``sup n`` has reached ``growth_factor`` times its initial value and the
  growth is accelerating: the log-slope fitted over the last quarter of the
  samples so far is at least the log-slope over the first quarter plus
  ``slope_tolerance`` (default 0, so exactly geometric growth counts), or
* the adaptive time step has fallen below ``dt_floor``.

This is a heuristic flag. It cannot certify blow-up.
"""

from dataclasses import dataclass

import numpy as np

BLOWUP = "BlowupSuspected"
NO_BLOWUP = "NoBlowup"
INCONCLUSIVE = "Inconclusive"

# equal slopes that differ only by rounding still count as ">="
_SLOPE_RTOL = 1e-9


@dataclass(frozen=True)
class BlowupCriterion:
    growth_factor: float = 10.0
    dt_floor: float = 0.0
    slope_tolerance: float = 0.0

    def __post_init__(self):
        if not self.growth_factor > 1.0:
            raise ValueError(f"growth_factor must exceed 1, got {self.growth_factor}")
        if self.dt_floor < 0.0:
            raise ValueError("dt_floor must be nonnegative")


@dataclass(frozen=True)
class BlowupVerdict:
    kind: str
    time: float = float("nan")
    index: int = -1
    reason: str = ""

    @property
    def suspected(self):
        return self.kind == BLOWUP


def _log_slope(t, y):
    if t.size < 2 or np.ptp(t) == 0.0:
        return 0.0
    return float(np.polyfit(t, np.log(y), 1)[0])


def accelerating(times, values, slope_tolerance=0.0):
    """Compare first- and last-quarter log-slopes of a positive sample sequence."""
    t = np.asarray(times, dtype=np.float64)
    y = np.maximum(np.asarray(values, dtype=np.float64), np.finfo(float).tiny)
    m = t.size
    if m < 3:
        return False
    quarter = max(2, m // 4)
    first = _log_slope(t[:quarter], y[:quarter])
    last = _log_slope(t[-quarter:], y[-quarter:])
    slack = _SLOPE_RTOL * max(abs(first), abs(last), 1.0)
    return last - first >= slope_tolerance - slack


def suspected_at(times, sup_values, index, criterion, dts=None):
    """Evaluate the flag on the prefix ``[0, index]``; returns a reason string or ''."""
    if dts is not None and criterion.dt_floor > 0.0 and dts[index] < criterion.dt_floor:
        return f"time step {dts[index]:.3g} below floor {criterion.dt_floor:.3g}"
    y0 = sup_values[0]
    if sup_values[index] >= criterion.growth_factor * y0 and accelerating(
        times[: index + 1], sup_values[: index + 1], criterion.slope_tolerance
    ):
        return f"sup n grew by {sup_values[index] / y0:.3g}x with accelerating log-slope"
    return ""


def detect_blowup(series, criterion=None):
    """Scan a series exposing ``times``, ``n_inf`` and optionally ``dt``.

    Returns the verdict at the first flagged sample, or ``NoBlowup``.
    """
    return detect_blowup_arrays(series.times, series.n_inf, criterion, getattr(series, "dt", None))


def detect_blowup_arrays(times, sup_values, criterion=None, dts=None):
    criterion = criterion or BlowupCriterion()
    times = np.asarray(times, dtype=np.float64)
    sup_values = np.asarray(sup_values, dtype=np.float64)
    if times.size == 0:
        raise ValueError("series is empty")
    if dts is not None:
        dts = np.asarray(dts, dtype=np.float64)
    for j in range(times.size):
        reason = suspected_at(times, sup_values, j, criterion, dts)
        if reason:
            return BlowupVerdict(BLOWUP, float(times[j]), j, reason)
    return BlowupVerdict(NO_BLOWUP)
