"""Convergence diagnostics and posterior summaries for multi-chain draws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

MIN_HPD_DRAWS = 100


@dataclass(frozen=True)
class HpdInterval:
    lo: float
    hi: float
    mass: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def to_list(self):
        return [self.lo, self.hi]


def _as_chains(draws):
    a = np.asarray(draws, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValidationError(f"draws must be (chains, draws), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("draws contain non-finite values")
    return a


def rhat(draws) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is cut in half so within-chain drift inflates the
    between-chain variance. Returns 1.0 for constant draws.
    """
    a = _as_chains(draws)
    n = a.shape[1] // 2
    if n < 2:
        raise ValidationError("rhat needs at least 4 draws per chain")
    split = np.concatenate([a[:, :n], a[:, -n:]], axis=0)
    means = split.mean(axis=1)
    w = split.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w == 0.0:
        return 1.0 if b == 0.0 else math.inf
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def _autocov(x):
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:n]
    return ac / n


def ess(draws) -> float:
    """Multi-chain effective sample size.

    Autocorrelations are pooled across chains and truncated with Geyer's
    initial monotone sequence. The result is capped at the total draw count.
    """
    a = _as_chains(draws)
    m, n = a.shape
    if n < 4:
        raise ValidationError("ess needs at least 4 draws per chain")
    acov = np.array([_autocov(c) for c in a])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += a.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum adjacent pairs while positive, enforce monotone decrease
    pair_sums = []
    prev = math.inf
    for k in range(0, n - 1, 2):
        s = rho[k] + rho[k + 1]
        if s <= 0:
            break
        s = min(s, prev)
        pair_sums.append(s)
        prev = s
    tau = -1.0 + 2.0 * sum(pair_sums) if pair_sums else 1.0
    tau = max(tau, 1.0 / math.log10(m * n + 10))
    return float(min(m * n / tau, m * n))


def hpd(draws, mass: float = 0.95) -> HpdInterval:
    """Shortest interval containing ``mass`` of the pooled draws."""
    if not 0.0 < mass < 1.0:
        raise ValidationError(f"mass must be in (0, 1), got {mass!r}")
    x = np.sort(np.asarray(draws, dtype=float).reshape(-1))
    if x.size < MIN_HPD_DRAWS:
        raise ValidationError(f"HPD needs at least {MIN_HPD_DRAWS} draws, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("draws contain non-finite values")
    k = int(math.ceil(mass * x.size))
    widths = x[k - 1:] - x[: x.size - k + 1]
    i = int(np.argmin(widths))
    return HpdInterval(float(x[i]), float(x[i + k - 1]), mass)


def point_estimate(draws) -> float:
    """Posterior median."""
    return float(np.median(np.asarray(draws, dtype=float)))


def summarize(draws, mass: float = 0.95) -> dict:
    """Median, mean, sd, HPD, R-hat and ESS for one parameter."""
    a = _as_chains(draws)
    interval = hpd(a, mass)
    try:
        r = rhat(a) if a.shape[0] > 1 or a.shape[1] >= 4 else math.nan
    except ValidationError:
        r = math.nan
    return {
        "median": point_estimate(a),
        "mean": float(a.mean()),
        "sd": float(a.std(ddof=1)),
        "hpd": interval.to_list(),
        "hpd_mass": mass,
        "rhat": r,
        "ess": ess(a),
    }
