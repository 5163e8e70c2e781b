"""
Prior distributions and the transforms used to sample constrained
parameters in unconstrained space.

Each parameter carries a distribution and a transform ``theta = g(u)``.
Densities in ``u`` include ``log|g'(u)|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from ..errors import ValidationError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float
    kind = "normal"
    support = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"normal sigma must be positive, got {self.sigma!r}")

    def logpdf(self, x):
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def dlogpdf(self, x):
        return -(x - self.mu) / self.sigma**2

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def to_dict(self):
        return {"dist": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class HalfNormal:
    sigma: float
    kind = "half-normal"
    support = (0.0, math.inf)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"half-normal sigma must be positive, got {self.sigma!r}")

    def logpdf(self, x):
        if x < 0:
            return -math.inf
        z = x / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI + _LOG_2

    def dlogpdf(self, x):
        return -x / self.sigma**2

    def sample(self, rng, size=None):
        return np.abs(rng.normal(0.0, self.sigma, size))

    def to_dict(self):
        return {"dist": "half-normal", "sigma": self.sigma}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError(f"uniform needs lo < hi, got ({self.lo!r}, {self.hi!r})")

    @property
    def support(self):
        return (self.lo, self.hi)

    def logpdf(self, x):
        if x < self.lo or x > self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)

    def dlogpdf(self, x):
        return 0.0

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self):
        return {"dist": "uniform", "lo": self.lo, "hi": self.hi}


# ---------------------------------------------------------------------------
# Transforms: theta = forward(u)
# ---------------------------------------------------------------------------

class Identity:
    name = "identity"

    def forward(self, u):
        return u

    def inverse(self, theta):
        return theta

    def log_jac(self, u):
        return 0.0

    def dtheta_du(self, u):
        return 1.0

    def dlog_jac(self, u):
        return 0.0

    def support(self):
        return (-math.inf, math.inf)


class Fold:
    """``theta = |u|`` for parameters whose likelihood is even in theta.

    The density on u is the symmetric extension of the one on theta >= 0,
    so it stays smooth at zero where a log map would create a funnel. Only
    valid when the posterior is invariant under ``theta -> -theta`` apart
    from the prior support.
    """

    name = "fold"

    def forward(self, u):
        return abs(u)

    def inverse(self, theta):
        return theta if theta >= 0 else -math.inf

    def log_jac(self, u):
        return 0.0

    def dtheta_du(self, u):
        return 1.0 if u >= 0 else -1.0

    def dlog_jac(self, u):
        return 0.0

    def support(self):
        return (0.0, math.inf)


class Log:
    name = "log"

    def forward(self, u):
        return math.exp(u) if u < 709.0 else math.inf

    def inverse(self, theta):
        return math.log(theta) if theta > 0 else -math.inf

    def log_jac(self, u):
        return u

    def dtheta_du(self, u):
        return self.forward(u)

    def dlog_jac(self, u):
        return 1.0

    def support(self):
        return (0.0, math.inf)


class Logit:
    """Scaled logistic map onto (lo, hi)."""

    name = "logit"

    def __init__(self, lo=0.0, hi=1.0):
        self.lo, self.hi = float(lo), float(hi)

    def forward(self, u):
        return self.lo + (self.hi - self.lo) * float(expit(u))

    def inverse(self, theta):
        x = (theta - self.lo) / (self.hi - self.lo)
        if x <= 0:
            return -math.inf
        if x >= 1:
            return math.inf
        return math.log(x) - math.log1p(-x)

    def log_jac(self, u):
        return math.log(self.hi - self.lo) + float(log_expit(u) + log_expit(-u))

    def dtheta_du(self, u):
        s = float(expit(u))
        return (self.hi - self.lo) * s * (1.0 - s)

    def dlog_jac(self, u):
        return 1.0 - 2.0 * float(expit(u))

    def support(self):
        return (self.lo, self.hi)


_DIST_TYPES = {"normal": Normal, "half-normal": HalfNormal, "halfnormal": HalfNormal,
               "uniform": Uniform}


def default_transform(dist):
    if isinstance(dist, HalfNormal):
        return Log()
    if isinstance(dist, Uniform):
        return Logit(dist.lo, dist.hi)
    return Identity()


def make_transform(name, dist):
    if name is None:
        return default_transform(dist)
    if name == "identity":
        return Identity()
    if name == "log":
        return Log()
    if name == "fold":
        return Fold()
    if name == "logit":
        lo, hi = dist.support if isinstance(dist, Uniform) else (0.0, 1.0)
        return Logit(lo, hi)
    raise ValidationError(f"unknown transform {name!r}")


@dataclass(frozen=True)
class ParamPrior:
    dist: object
    transform: object

    def __post_init__(self):
        if tuple(self.transform.support()) != tuple(self.dist.support):
            raise ValidationError(
                f"transform {self.transform.name!r} does not match support {self.dist.support}")

    def to_dict(self):
        d = self.dist.to_dict()
        d["transform"] = self.transform.name
        return d


def prior_from_dict(spec: dict) -> ParamPrior:
    spec = dict(spec)
    kind = spec.pop("dist", None)
    transform = spec.pop("transform", None)
    try:
        dist = _DIST_TYPES[kind](**spec)
    except KeyError:
        raise ValidationError(f"unknown prior distribution {kind!r}") from None
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {kind!r} prior: {exc}") from None
    return ParamPrior(dist, make_transform(transform, dist))


class PriorSpec:
    """Ordered mapping of parameter name to :class:`ParamPrior`."""

    def __init__(self, entries):
        self.entries = {}
        for name, entry in dict(entries).items():
            if isinstance(entry, dict):
                entry = prior_from_dict(entry)
            elif not isinstance(entry, ParamPrior):
                entry = ParamPrior(entry, default_transform(entry))
            self.entries[name] = entry

    @property
    def names(self):
        return list(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, name):
        return self.entries[name]

    def __iter__(self):
        return iter(self.entries.items())

    def updated(self, overrides: dict | None) -> "PriorSpec":
        """Copy with some entries replaced; unknown names are rejected."""
        entries = dict(self.entries)
        for name, spec in (overrides or {}).items():
            if name not in entries:
                raise ValidationError(f"prior override for unknown parameter {name!r}")
            entries[name] = spec
        return PriorSpec(entries)

    def to_dict(self):
        return {name: entry.to_dict() for name, entry in self.entries.items()}

    # -- transforms ---------------------------------------------------------
    def constrain(self, u):
        return np.array([e.transform.forward(float(v)) for (_, e), v in zip(self, u)])

    def unconstrain(self, theta):
        return np.array([e.transform.inverse(float(v)) for (_, e), v in zip(self, theta)])

    def sample(self, rng):
        return np.array([float(e.dist.sample(rng)) for _, e in self])


def log_prior(theta, priors: PriorSpec, jacobian: bool = True) -> float:
    """Sum of independent log prior densities at ``theta``.

    With ``jacobian=True`` the density is that of the unconstrained
    coordinates, i.e. each term gains ``log|d theta / d u|``.
    Returns ``-inf`` outside the support.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(priors),):
        raise ValidationError(f"theta has shape {theta.shape}, expected ({len(priors)},)")
    total = 0.0
    for (_, entry), x in zip(priors, theta):
        lp = entry.dist.logpdf(float(x))
        if lp == -math.inf:
            return -math.inf
        total += lp
        if jacobian and entry.transform.name != "identity":
            u = entry.transform.inverse(float(x))
            if not math.isfinite(u):
                return -math.inf
            total += entry.transform.log_jac(u)
    return total
