"""Posterior predictive summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .samplers import PosteriorSamples


@dataclass
class PredictiveSummary:
    inputs: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    draws_used: int
    noise: bool

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "band_lo": self.lo.tolist(),
            "band_hi": self.hi.tolist(),
            "draws_used": self.draws_used,
            "includes_noise": self.noise,
        }


def posterior_predictive(samples: PosteriorSamples, fn, inputs, *, max_draws=1000,
                         noise=None, seed=0, band=0.95) -> PredictiveSummary:
    """Propagate posterior draws through ``fn(theta, inputs)``.

    Parameters
    ----------
    samples : PosteriorSamples
    fn : callable
        ``fn(theta, inputs) -> array`` with one output per input.
    inputs : array
    max_draws : int
        Pooled draws are thinned evenly down to at most this many.
    noise : str or callable, optional
        Observation noise to add to each replicate. A parameter name uses that
        draw's value as a Gaussian sd; a callable gets ``theta``. Without it the
        summary describes the spread of the expected curve only.
    seed : int
    band : float
        Central probability mass of the returned ``lo``/``hi`` band.
    """
    inputs = np.asarray(inputs, dtype=float)
    flat = samples.flat()
    if flat.shape[0] == 0:
        raise ValidationError("no posterior draws")
    if max_draws < 1:
        raise ValidationError("max_draws must be >= 1")
    idx = np.unique(np.linspace(0, flat.shape[0] - 1, min(max_draws, flat.shape[0])).astype(int))
    rng = np.random.Generator(np.random.Philox(seed))
    if isinstance(noise, str):
        k = samples.index(noise)
        noise_fn = lambda th: th[k]  # noqa: E731
    else:
        noise_fn = noise
    reps = np.empty((idx.size, inputs.size))
    for row, i in enumerate(idx):
        theta = flat[i]
        y = np.asarray(fn(theta, inputs), dtype=float).reshape(-1)
        if noise_fn is not None:
            y = y + rng.normal(0.0, float(noise_fn(theta)), y.size)
        reps[row] = y
    q = 0.5 * (1.0 - band)
    return PredictiveSummary(
        inputs=inputs,
        mean=reps.mean(axis=0),
        std=reps.std(axis=0, ddof=1) if idx.size > 1 else np.zeros(inputs.size),
        lo=np.quantile(reps, q, axis=0),
        hi=np.quantile(reps, 1.0 - q, axis=0),
        draws_used=int(idx.size),
        noise=noise_fn is not None,
    )
