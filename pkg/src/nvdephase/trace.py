"""Container for a measured or simulated Ramsey coherence record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def _as_channel(values, n, name):
    if values is None:
        return None
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValidationError(f"channel {name!r} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"channel {name!r} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CoherenceTrace:
    """Coherence readout versus free-evolution time.

    Either both quadratures ``x`` and ``y`` are present, or only the
    magnitude ``r`` (the ``t_us, r`` file layout). ``magnitude`` returns
    ``r`` when it is stored and ``|x + iy|`` otherwise.

    ``normalization`` is an opaque affine map ``raw = scale * value + offset``
    kept for provenance; nothing in the package applies it.
    """

    times: np.ndarray
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    r: np.ndarray | None = None
    phi: float | None = None
    seed: int | None = None
    normalization: dict = field(default_factory=lambda: {"scale": 1.0, "offset": 0.0})

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValidationError("times must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(times)):
            raise ValidationError("times contain non-finite values")
        bad = np.flatnonzero(np.diff(times) <= 0)
        if bad.size:
            raise ValidationError(
                f"times must be strictly increasing (violated at index {int(bad[0]) + 1})")
        times.setflags(write=False)
        n = times.size
        object.__setattr__(self, "times", times)
        x = _as_channel(self.x, n, "x")
        y = _as_channel(self.y, n, "y")
        r = _as_channel(self.r, n, "r")
        if (x is None) != (y is None):
            raise ValidationError("x and y channels must be given together")
        if x is None and r is None:
            raise ValidationError("trace needs either x/y quadratures or a magnitude channel")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "r", r)
        if self.phi is not None:
            object.__setattr__(self, "phi", float(self.phi))
        norm = {"scale": 1.0, "offset": 0.0}
        norm.update(self.normalization or {})
        object.__setattr__(self, "normalization", norm)

    def __len__(self):
        return self.times.size

    @property
    def magnitude(self) -> np.ndarray:
        if self.r is not None:
            return self.r
        return np.hypot(self.x, self.y)

    @property
    def has_quadratures(self) -> bool:
        return self.x is not None

    @property
    def mean_step(self) -> float:
        return float(np.mean(np.diff(self.times))) if len(self) > 1 else 0.0
