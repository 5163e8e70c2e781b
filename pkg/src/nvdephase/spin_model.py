"""
Closed-form dephasing model of an NV electron spin coupled to its 14N spin.

Units: time in microseconds, couplings as angular frequencies in rad/us.
Every function accepts scalar or array times and broadcasts with numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * math.pi
ENVELOPE_DEGREE = 5
_SUM_TOL = 1e-12


def _check_probability(value, name="p"):
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NitrogenState:
    """Populations of the nitrogen levels m_I = +1, 0, -1."""

    p1: float
    p0: float
    pm1: float

    def __post_init__(self):
        for name in ("p1", "p0", "pm1"):
            _check_probability(getattr(self, name), name)
        total = self.p1 + self.p0 + self.pm1
        if abs(total - 1.0) > _SUM_TOL:
            raise ValidationError(f"populations must sum to 1, got {total!r}")

    def swapped(self) -> "NitrogenState":
        """Exchange the m_I = +1 and m_I = -1 populations."""
        return NitrogenState(self.pm1, self.p0, self.p1)

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p0, self.pm1])


@dataclass(frozen=True)
class DephasingEnvelope:
    """Bath decay factor ``L(t) = exp(-sum_i a_i t**i)`` with i = 0..5.

    ``coeffs[i]`` carries units of us**-i. The Gaussian form
    ``exp(-(t/T2*)**2)`` is the special case ``a2 = 1/T2***2``.
    """

    coeffs: tuple = (0.0,) * (ENVELOPE_DEGREE + 1)
    kind: str = "polynomial-exponent"
    t2_star: float | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != ENVELOPE_DEGREE + 1:
            raise ValidationError(
                f"envelope needs {ENVELOPE_DEGREE + 1} coefficients, got {len(coeffs)}")
        if any(c < 0 or not math.isfinite(c) for c in coeffs):
            raise ValidationError(f"envelope coefficients must be finite and >= 0: {coeffs}")
        if self.kind not in ("polynomial-exponent", "gaussian"):
            raise ValidationError(f"unknown envelope kind {self.kind!r}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def gaussian(cls, t2_star: float) -> "DephasingEnvelope":
        if not t2_star > 0:
            raise ValidationError(f"T2* must be positive, got {t2_star!r}")
        coeffs = [0.0] * (ENVELOPE_DEGREE + 1)
        coeffs[2] = 1.0 / t2_star**2
        return cls(tuple(coeffs), kind="gaussian", t2_star=float(t2_star))

    @classmethod
    def unit(cls) -> "DephasingEnvelope":
        return cls()

    @classmethod
    def polynomial(cls, coeffs) -> "DephasingEnvelope":
        return cls(tuple(coeffs))

    def __call__(self, t):
        return envelope_eval(self, t)


@dataclass(frozen=True)
class HyperfineCoupling:
    """Parallel hyperfine coupling stored as an angular frequency (rad/us)."""

    a_par: float

    def __post_init__(self):
        if not (self.a_par > 0 and math.isfinite(self.a_par)):
            raise ValidationError(f"A_par must be positive, got {self.a_par!r}")

    @classmethod
    def from_mhz(cls, freq_mhz: float) -> "HyperfineCoupling":
        return cls(TWO_PI * freq_mhz)

    @property
    def mhz(self) -> float:
        return self.a_par / TWO_PI

    @property
    def period(self) -> float:
        """Revival period 2*pi/A_par in us."""
        return TWO_PI / self.a_par


@dataclass(frozen=True)
class ContrastModel:
    """Readout contrast ``C(phi) = c_a cos(c_nu phi) + c_b``."""

    c_a: float
    c_nu: float
    c_b: float

    def __post_init__(self):
        if self.c_b - abs(self.c_a) < 0:
            raise ValidationError(
                f"contrast would turn negative: c_b - |c_a| = {self.c_b - abs(self.c_a)!r}")


@dataclass(frozen=True)
class PopulationModel:
    """Population in the m_I = 0, 1 subspace, ``p(phi) = 1 - [p_b + p_a sin(p_nu phi + p_phi)]``."""

    p_a: float
    p_nu: float
    p_b: float
    p_phi: float

    def __post_init__(self):
        span = self.p_b + abs(self.p_a)
        if not (0.0 <= span <= 1.0):
            raise ValidationError(f"p_b + |p_a| must lie in [0, 1], got {span!r}")


@dataclass(frozen=True)
class FidModelParams:
    envelope: DephasingEnvelope
    p: float
    phi: float
    coupling: HyperfineCoupling
    bias_d: float = 0.0
    sigma: float = 0.018

    def __post_init__(self):
        _check_probability(self.p)
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma!r}")

    @property
    def state(self) -> NitrogenState:
        return nitrogen_populations(self.p, self.phi)


@dataclass(frozen=True)
class NmModelParams:
    contrast: ContrastModel
    population: PopulationModel
    coupling: HyperfineCoupling
    sigma_coh: float = 0.018
    sigma_nm: float = 0.06

    def __post_init__(self):
        if not (self.sigma_coh > 0 and self.sigma_nm > 0):
            raise ValidationError("sigma_coh and sigma_nm must be positive")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def nitrogen_populations(p: float, phi: float) -> NitrogenState:
    """Map the (p, phi) parametrization onto the three level populations.

    ``p1 = p cos^2(phi/2)``, ``p0 = p sin^2(phi/2)``, ``pm1 = 1 - p``.
    """
    _check_probability(p)
    return NitrogenState(p * math.cos(0.5 * phi) ** 2,
                         p * math.sin(0.5 * phi) ** 2,
                         1.0 - p)


def envelope_eval(env: DephasingEnvelope, t):
    """Evaluate ``exp(-sum a_i t**i)``; strictly positive for finite input."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-np.polynomial.polynomial.polyval(t, env.coeffs))
    return out if out.ndim else float(out)


def envelope_decay_time(coeffs, level=1.0, t_max=1e6):
    """Time at which ``sum a_i t**i`` reaches ``level`` (1/e time for level 1).

    ``coeffs`` may be shape (6,) or (..., 6); with non-negative coefficients
    the exponent is non-decreasing, so the crossing is unique. Returns 0 when
    ``a0 >= level`` and ``inf`` when the crossing lies beyond ``t_max``.
    For a Gaussian envelope this is exactly T2*.
    """
    a = np.asarray(coeffs, dtype=float)
    if a.shape[-1] != ENVELOPE_DEGREE + 1:
        raise ValidationError(f"need {ENVELOPE_DEGREE + 1} coefficients, got {a.shape[-1]}")
    if np.any(a < 0):
        raise ValidationError("envelope coefficients must be non-negative")
    a = a.reshape(-1, a.shape[-1])

    def expo(t):
        return np.sum(a * t[:, None] ** np.arange(a.shape[1]), axis=1)

    lo = np.zeros(a.shape[0])
    hi = np.full(a.shape[0], float(t_max))
    beyond = expo(hi) < level
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = expo(mid) < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-13 * np.maximum(hi, 1.0)):
            break
    out = np.where(beyond, np.inf, 0.5 * (lo + hi))
    out = np.where(a[:, 0] >= level, 0.0, out)
    shape = np.shape(coeffs)[:-1]
    return float(out[0]) if shape == () else out.reshape(shape)


def _omega(coupling) -> float:
    return coupling.a_par if isinstance(coupling, HyperfineCoupling) else float(coupling)


def bracket(p1, p0, pm1, phase):
    """Squared Bloch length without envelope, as a function of ``A_par * t``."""
    # p1, pm1 enter only through commutative pairings, so the +/-1 swap is exact
    sq = (p0 * p0 + (p1 * p1 + pm1 * pm1)
          + 2.0 * p0 * (p1 + pm1) * np.cos(phase)
          + 2.0 * p1 * pm1 * np.cos(2.0 * phase))
    return np.maximum(sq, 0.0)


def bloch_length(state: NitrogenState, coupling: HyperfineCoupling,
                 env: DephasingEnvelope | None, t):
    """Length of the electron Bloch vector at time(s) ``t``.

    Parameters
    ----------
    state : NitrogenState
        Initial nitrogen populations.
    coupling : HyperfineCoupling or float
        A_par in rad/us.
    env : DephasingEnvelope or None
        Bath envelope; ``None`` means ``L = 1``.
    t : float or array
        Free-evolution time in us.

    Returns
    -------
    float or ndarray
        r(t) in [0, 1].
    """
    t = np.asarray(t, dtype=float)
    r = np.sqrt(bracket(state.p1, state.p0, state.pm1, _omega(coupling) * t))
    if env is not None:
        r = r * envelope_eval(env, t)
    return r if r.ndim else float(r)


def bloch_length_phi(p: float, phi: float, coupling, t):
    """Bloch length in the (p, phi) parametrization with unit envelope.

    Uses the expanded trigonometric form directly rather than composing
    :func:`nitrogen_populations` and :func:`bloch_length`.
    """
    _check_probability(p)
    return _bloch_length_phi(p, phi, _omega(coupling), t)


def _bloch_length_phi(p, phi, omega, t):
    # unchecked, broadcasting version used by the likelihoods
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    phi = np.asarray(phi, dtype=float)
    at = omega * t
    sq = (2.0 * (1.0 - p) * p * np.cos(2.0 * at) * np.cos(0.5 * phi) ** 2
          + (4.0 - p * (8.0 - 7.0 * p) + p * p * np.cos(2.0 * phi)) / 4.0
          + p * np.cos(at) * (2.0 - p + p * np.cos(phi)) * np.sin(0.5 * phi) ** 2)
    r = np.sqrt(np.maximum(sq, 0.0))
    return r if r.ndim else float(r)


def contrast_eval(model: ContrastModel, phi):
    out = model.c_a * np.cos(model.c_nu * np.asarray(phi, dtype=float)) + model.c_b
    return out if np.ndim(out) else float(out)


def population_eval(model: PopulationModel, phi):
    phi = np.asarray(phi, dtype=float)
    out = 1.0 - (model.p_b + model.p_a * np.sin(model.p_nu * phi + model.p_phi))
    return out if out.ndim else float(out)


def revival_times(coupling: HyperfineCoupling, horizon: float) -> list[float]:
    """Full-revival times ``k * 2 pi / A_par`` (k >= 1) not later than ``horizon``."""
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon!r}")
    period = TWO_PI / _omega(coupling)
    times = []
    k = 1
    while k * period <= horizon:
        times.append(k * period)
        k += 1
    return times
