"""
Non-Markovianity of the electron coherence.

``measure_exact`` sums the coherence gain over every interval on which the
Bloch length grows (trace-distance / information back-flow measure for pure
dephasing). ``measure_modified`` and ``measure_modified_from_data`` give the
contrast-scaled telescoped variant, which averages out point-wise noise in
finite records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .spin_model import (
    DephasingEnvelope,
    HyperfineCoupling,
    NmModelParams,
    bloch_length,
    bloch_length_phi,
    contrast_eval,
    nitrogen_populations,
    population_eval,
)
from .trace import CoherenceTrace

DEFAULT_GRID_POINTS = 20001
REFINE_TOL = 1e-9  # us
_FD_STEP = 1e-7


@dataclass(frozen=True)
class Trajectory:
    """Bloch-length trajectory, either sampled or evaluable at any time.

    Build with :meth:`sampled`, :meth:`analytic` or :meth:`from_function`.
    """

    horizon: float
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    func: Callable | None = field(default=None, compare=False)

    @classmethod
    def sampled(cls, times, values, value_tol=1e-9) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValidationError("times and values must be 1-D arrays of equal length")
        if times.size < 2:
            raise ValidationError("a trajectory needs at least 2 samples")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if np.any(values < -value_tol) or np.any(values > 1.0 + value_tol):
            raise ValidationError("Bloch length values must lie in [0, 1]")
        return cls(horizon=float(times[-1] - times[0]), times=times, values=values)

    @classmethod
    def from_trace(cls, trace: CoherenceTrace, value_tol=np.inf) -> "Trajectory":
        """Sampled trajectory from a record; noisy magnitudes may leave [0, 1]."""
        return cls.sampled(trace.times, trace.magnitude, value_tol=value_tol)

    @classmethod
    def analytic(cls, p, phi, coupling: HyperfineCoupling,
                 envelope: DephasingEnvelope | None = None, horizon: float = 1.0) -> "Trajectory":
        state = nitrogen_populations(p, phi)
        return cls.from_function(lambda t: bloch_length(state, coupling, envelope, t), horizon)

    @classmethod
    def from_function(cls, func, horizon: float) -> "Trajectory":
        if not horizon > 0:
            raise ValidationError(f"horizon must be positive, got {horizon!r}")
        return cls(horizon=float(horizon), func=func)

    @property
    def is_analytic(self) -> bool:
        return self.func is not None

    def grid(self, grid_step=None):
        """Return (times, values) on the evaluation grid."""
        if not self.is_analytic:
            return self.times, self.values
        if grid_step is None:
            n = DEFAULT_GRID_POINTS
        else:
            n = int(np.ceil(self.horizon / grid_step)) + 1
        if n < 2:
            raise ValidationError("evaluation grid needs at least 2 points")
        t = np.linspace(0.0, self.horizon, n)
        return t, np.asarray(self.func(t), dtype=float)


@dataclass(frozen=True)
class NmReport:
    value: float
    intervals: list = field(default_factory=list)
    grid_step: float = 0.0
    kind: str = "exact"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "grid_step_us": self.grid_step,
            "intervals": [
                {"start_us": a, "end_us": b, "gain": g} for a, b, g in self.intervals
            ],
        }


def _zigzag(values, eps):
    """Index pairs (trough, peak) of rises larger than ``eps``.

    A rise is closed once the series falls more than ``eps`` below its
    running peak; with ``eps = 0`` this reduces to strict local extrema.
    """
    pairs = []
    trough = 0
    rising = False
    peak = low = 0
    for i in range(1, values.size):
        v = values[i]
        if not rising:
            if v < values[trough]:
                trough = i
            elif v - values[trough] > eps:
                rising = True
                peak = low = i
        else:
            if v > values[peak]:
                peak = low = i
            else:
                if v < values[low]:
                    low = i
                if values[peak] - values[low] > eps:
                    pairs.append((trough, peak))
                    rising = False
                    trough = low
    if rising:
        pairs.append((trough, peak))
    return pairs


def _refine(func, lo, hi, sign):
    """Bisection on the slope sign inside [lo, hi].

    ``sign=+1`` locates a minimum (slope turns from - to +), ``-1`` a maximum.
    """
    while hi - lo > REFINE_TOL:
        mid = 0.5 * (lo + hi)
        slope = func(mid + _FD_STEP) - func(mid - _FD_STEP)
        if sign * slope > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _scalar(func):
    return lambda t: float(np.asarray(func(np.array([t]))).reshape(-1)[0])


def detect_monotone_intervals(traj: Trajectory, eps: float = 0.0, grid_step=None):
    """Maximal intervals ``(tau, tau')`` on which r rises by more than ``eps``.

    Analytic trajectories are bracketed on a uniform grid and each interior
    extremum is refined to ``REFINE_TOL`` by bisection on the
    finite-difference slope sign.
    """
    return [(a, b) for a, b, _ in _intervals(traj, eps, grid_step)]


def _intervals(traj, eps, grid_step):
    if eps < 0:
        raise ValidationError(f"eps must be >= 0, got {eps!r}")
    times, values = traj.grid(grid_step)
    if times.size < 2:
        raise ValidationError("a trajectory needs at least 2 samples")
    pairs = _zigzag(values, eps)
    out = []
    if not traj.is_analytic:
        for i, j in pairs:
            out.append((float(times[i]), float(times[j]), float(values[j] - values[i])))
        return out

    f = _scalar(traj.func)
    last = times.size - 1

    def locate(idx, sign):
        if idx == 0 or idx == last:
            return float(times[idx]), float(values[idx])
        t = float(_refine(f, times[idx - 1], times[idx + 1], sign))
        v = f(t)
        # keep the grid point if bisection landed on a worse value (cusps)
        if sign * (values[idx] - v) < 0:
            return float(times[idx]), float(values[idx])
        return t, v

    for i, j in pairs:
        ta, va = locate(i, +1)
        tb, vb = locate(j, -1)
        gain = vb - va
        if gain > eps:
            out.append((ta, tb, gain))
    return out


def measure_exact(traj: Trajectory, eps: float = 0.0, grid_step=None) -> NmReport:
    """Sum of coherence gains over all intervals of increase (>= 0)."""
    intervals = _intervals(traj, eps, grid_step)
    if traj.is_analytic:
        t, _ = traj.grid(grid_step)
        step = float(t[1] - t[0])
    else:
        step = float(np.mean(np.diff(traj.times)))
    value = float(sum(g for _, _, g in intervals))
    return NmReport(value=value, intervals=intervals, grid_step=step, kind="exact")


def measure_modified(params: NmModelParams, phi: float, horizon: float) -> NmReport:
    """``C(phi) * (r(T, phi) - 1)`` with ``p = p(phi)``; never positive."""
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon!r}")
    p = float(population_eval(params.population, phi))
    r_end = bloch_length_phi(min(max(p, 0.0), 1.0), phi, params.coupling, horizon)
    value = float(contrast_eval(params.contrast, phi)) * (min(r_end, 1.0) - 1.0)
    return NmReport(value=value, intervals=[(0.0, float(horizon), value)],
                    grid_step=float(horizon), kind="modified")


def measure_modified_from_data(trace: CoherenceTrace, contrast_at_phi: float = 1.0) -> NmReport:
    """Telescoped sum of all successive magnitude differences, scaled by contrast.

    The sum collapses to ``last - first``. Use ``contrast_at_phi = 1`` for
    records already expressed in readout-contrast units.
    """
    mag = trace.magnitude
    if mag.size == 0:
        raise ValidationError("empty trace")
    value = float(contrast_at_phi * (mag[-1] - mag[0]))
    return NmReport(value=value,
                    intervals=[(float(trace.times[0]), float(trace.times[-1]), value)],
                    grid_step=trace.mean_step, kind="modified")


def estimate_noise(values) -> float:
    """Robust per-point noise std from second differences (MAD based)."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return 0.0
    d2 = np.diff(values, 2)
    return float(np.median(np.abs(d2 - np.median(d2))) / 0.6745 / np.sqrt(6.0))


def default_eps(trace: CoherenceTrace) -> float:
    """Rise threshold for noisy records: twice the estimated noise std."""
    return 2.0 * estimate_noise(trace.magnitude)
