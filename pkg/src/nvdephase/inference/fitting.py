"""
End-to-end fits: MAP start, MCMC, diagnostics, summaries and predictive curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import defaults
from ..spin_model import ENVELOPE_DEGREE, _bloch_length_phi, envelope_decay_time
from ..errors import ConvergenceError, SamplingError, ValidationError
from . import diagnostics as diag
from .models import (
    FID_NAMES,
    build_fid_model,
    build_nm_model,
    fid_priors,
    nm_admissible,
    nm_modified_measure,
    nm_priors,
)
from .predictive import posterior_predictive
from .priors import PriorSpec
from .samplers import HMCConfig, MHConfig, PosteriorSamples, sample_hmc, sample_mh

RHAT_LIMIT = 1.1
HPD_MASS = 0.95


@dataclass
class FitConfig:
    """Sampler choice and settings shared by :func:`fit_fid` and :func:`fit_nm`."""

    sampler: str = "mh"
    chains: int = 4
    iters: int = 50000
    warmup: int | None = None
    seed: int = 0
    target_accept: float | None = None
    step_size: float = 0.05
    leapfrog_steps: int = 20
    workers: int = 1
    map_starts: int = 8
    force: bool = False
    predictive_draws: int = 1000
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict | None) -> "FitConfig":
        d = dict(d or {})
        known = {k: d.pop(k) for k in list(d) if k in cls.__dataclass_fields__}
        if d:
            raise ValidationError(f"unknown fit option(s): {sorted(d)}")
        return cls(**known)

    def sampler_config(self):
        common = dict(chains=self.chains, iters=self.iters, warmup=self.warmup,
                      seed=self.seed, workers=self.workers)
        if self.sampler == "mh":
            return MHConfig(target_accept=self.target_accept or 0.3, **common)
        if self.sampler == "hmc":
            return HMCConfig(target_accept=self.target_accept or 0.8, step_size=self.step_size,
                             leapfrog_steps=self.leapfrog_steps, **common)
        raise ValidationError(f"sampler must be 'mh' or 'hmc', got {self.sampler!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "extra"}


@dataclass
class FitResult:
    samples: PosteriorSamples
    summaries: dict
    map_estimate: dict
    predictive: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    converged: bool = True

    def median(self, name) -> float:
        return self.summaries[name]["median"]

    def hpd(self, name):
        return tuple(self.summaries[name]["hpd"])


# ---------------------------------------------------------------------------
# MAP initialisation
# ---------------------------------------------------------------------------

def _neg(model):
    def f(u):
        v = model.logp(u)
        return 1e300 if not math.isfinite(v) else -v
    return f


def _hessian(f, u, rel=1e-4):
    n = u.size
    h = rel * np.maximum(1.0, np.abs(u))
    H = np.empty((n, n))
    f0 = f(u)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n); ei[i] = h[i]
            ej = np.zeros(n); ej[j] = h[j]
            if i == j:
                val = (f(u + ei) - 2 * f0 + f(u - ei)) / h[i] ** 2
            else:
                val = (f(u + ei + ej) - f(u + ei - ej) - f(u - ei + ej) + f(u - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


def _proposal_cov(model, u_map):
    """Inverse Hessian at the mode, eigenvalues clipped to a sane range."""
    H = _hessian(_neg(model), u_map)
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    w = np.clip(w, 1e-2, 1e12)
    return (V / w) @ V.T


def find_map(model, starts):
    """Multi-start maximisation of the unconstrained log posterior.

    Parameters
    ----------
    model : ProbModel
    starts : list of arrays
        Constrained starting points. Points with a non-finite log
        posterior are skipped.

    Returns
    -------
    theta : ndarray
        Constrained mode.
    cov : ndarray
        Proposal covariance in unconstrained space.
    """
    f = _neg(model)
    best_u, best_val = None, math.inf
    for theta0 in starts:
        u0 = model.unconstrain(theta0)
        if not math.isfinite(f(u0)) or f(u0) >= 1e300:
            continue
        res = optimize.minimize(f, u0, method="Powell",
                                options={"maxiter": 20000, "xtol": 1e-8, "ftol": 1e-12})
        jac = (lambda u: -model.grad_logp(u)) if model.grad_loglik else None
        res = optimize.minimize(f, res.x, method="L-BFGS-B", jac=jac)
        if res.fun < best_val:
            best_u, best_val = res.x, res.fun
    if best_u is None:
        raise SamplingError("no starting point has a finite log posterior")
    return model.constrain(best_u), _proposal_cov(model, best_u)


def _sample(model, config: FitConfig, theta_map, cov):
    sconf = config.sampler_config()
    rng = np.random.Generator(np.random.Philox(config.seed))
    u_map = model.unconstrain(theta_map)
    chol = np.linalg.cholesky(cov)
    inits = []
    for _ in range(config.chains):
        for _attempt in range(50):
            u = u_map + 0.5 * chol @ rng.standard_normal(model.dim)
            if math.isfinite(model.logp(u)):
                break
        else:
            u = u_map
        inits.append(model.constrain(u))
    if config.sampler == "mh":
        return sample_mh(model, sconf, np.array(inits), init_cov=cov)
    return sample_hmc(model, sconf, np.array(inits))


def summarize_samples(samples: PosteriorSamples, mass=HPD_MASS, extra=None) -> dict:
    out = {name: diag.summarize(samples.draws(name), mass) for name in samples.names}
    for name, draws in (extra or {}).items():
        out[name] = diag.summarize(draws, mass)
    return out


def _check_convergence(summaries, force):
    bad = {k: v["rhat"] for k, v in summaries.items() if not v["rhat"] <= RHAT_LIMIT}
    if bad and not force:
        raise ConvergenceError(f"rhat above {RHAT_LIMIT} for {sorted(bad)}; rerun longer or force",
                               {"rhat": bad})
    return not bad


# ---------------------------------------------------------------------------
# FID
# ---------------------------------------------------------------------------

def _fid_starts(data, priors, n, seed):
    t, m = data.times, data.magnitude
    late = m[t > 0.5 * t[-1]] if np.any(t > 0.5 * t[-1]) else m
    starts = []
    for p0 in (0.95, 0.85, 0.7):
        for t2 in (10.0, 25.0, 50.0):
            th = [1e-4, 1e-5, 1.0 / t2**2, 1e-7, 1e-8, 1e-9, p0, 0.2,
                  defaults.FID_PRIORS["A_par"]["mu"], 0.0, max(float(np.std(np.diff(late))) / 1.4, 1e-3)]
            starts.append(np.array(th))
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.permutation(len(starts))[:max(n, 1)]
    return [starts[i] for i in idx]


def fid_derived(samples: PosteriorSamples):
    """Per-draw T2*, the 1/e time of the fitted envelope."""
    idx = [samples.index(f"a{i}") for i in range(ENVELOPE_DEGREE + 1)]
    return {"T2_star": envelope_decay_time(samples.chains[:, :, idx])}


def fit_fid(data, priors: PriorSpec | dict | None = None, config: FitConfig | dict | None = None,
            predict_times=None) -> FitResult:
    """Fit the FID envelope model to a magnitude record.

    Parameters
    ----------
    data : CoherenceTrace
    priors : PriorSpec or dict, optional
        Full PriorSpec, or a dict of per-parameter overrides of the defaults.
    config : FitConfig or dict, optional
    predict_times : array, optional
        Times for the predictive curve; defaults to a 400-point grid.

    Raises
    ------
    ConvergenceError
        If any rhat exceeds 1.1 and ``config.force`` is false.
    """
    config = config if isinstance(config, FitConfig) else FitConfig.from_dict(config)
    if not isinstance(priors, PriorSpec):
        priors = fid_priors(priors)
    model = build_fid_model(data, priors)
    theta_map, cov = find_map(model, _fid_starts(data, priors, config.map_starts, config.seed))
    samples = _sample(model, config, theta_map, cov)
    derived = fid_derived(samples)
    summaries = summarize_samples(samples, extra=derived)
    converged = _check_convergence(summaries, config.force)
    if predict_times is None:
        predict_times = np.linspace(0.0, float(data.times[-1]), 400)
    pred = posterior_predictive(samples, lambda th, t: model.predict(th, t), predict_times,
                                max_draws=config.predictive_draws, seed=config.seed)
    return FitResult(samples=samples, summaries=summaries,
                     map_estimate=dict(zip(FID_NAMES, map(float, theta_map))),
                     predictive={"fid_curve": pred.to_dict()}, derived=derived,
                     converged=converged)


# ---------------------------------------------------------------------------
# joint coherence / N' model
# ---------------------------------------------------------------------------

def _per_angle_estimates(coh_sets, a_grid, p_grid):
    """Shared A_par and per-angle (C_k, p_k) by profile least squares.

    For each (A, p) the contrast enters linearly, so it is profiled out.
    ``p`` is searched on the p >= 1/2 branch.
    """
    best = (math.inf, None, None, None)
    for omega in a_grid:
        total = 0.0
        cs, ps = [], []
        for phi, trace in coh_sets:
            y = trace.magnitude
            shape = _bloch_length_phi(p_grid[:, None], phi, omega, trace.times[None, :])
            c = np.sum(shape * y, axis=1) / np.maximum(np.sum(shape * shape, axis=1), 1e-300)
            sse = np.sum((y - c[:, None] * shape) ** 2, axis=1)
            k = int(np.argmin(sse))
            total += sse[k]
            cs.append(c[k])
            ps.append(p_grid[k])
        if total < best[0]:
            best = (total, omega, np.array(cs), np.array(ps))
    return best[1], best[2], best[3]


def _fit_sinusoid(phi, y, nu_grid):
    """Least squares ``y ~ b + s sin(nu phi) + c cos(nu phi)`` over a frequency grid."""
    best = (math.inf, None, None)
    for nu in nu_grid:
        X = np.column_stack([np.ones_like(phi), np.sin(nu * phi), np.cos(nu * phi)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        sse = float(np.sum((y - X @ coef) ** 2))
        if sse < best[0]:
            best = (sse, nu, coef)
    return best[1], best[2]


def _nm_starts(coh_sets, n):
    """Staged starting points for the joint model.

    Per-angle contrast and population estimates are fitted first, then the
    angular models are fitted to those estimates.
    """
    prior_mu = {k: v.get("mu", 0.05) for k, v in defaults.NM_PRIORS.items()}
    if not coh_sets:
        return [np.array(list(prior_mu.values()))]
    a0 = defaults.NM_PRIORS["A_par"]["mu"]
    coarse = np.linspace(a0 - 1.5, a0 + 1.5, 121)
    omega, _, _ = _per_angle_estimates(coh_sets, coarse, np.linspace(0.5, 1.0, 51))
    fine = np.linspace(omega - 0.03, omega + 0.03, 61)
    omega, cs, ps = _per_angle_estimates(coh_sets, fine, np.linspace(0.5, 1.0, 501))
    phi = np.array([float(p) for p, _ in coh_sets])
    resid = np.array([np.sum((tr.magnitude - c * _bloch_length_phi(pk, ph, omega, tr.times)) ** 2)
                      for (ph, tr), c, pk in zip(coh_sets, cs, ps)])
    sigma_coh = math.sqrt(resid.sum() / sum(len(tr) for _, tr in coh_sets))

    starts = []
    nu_grid = np.linspace(0.05, 3.0, 296)
    if len(coh_sets) >= 4:
        c_nu, (c_b, c_s, c_c) = _fit_sinusoid(phi, cs, nu_grid)
        # C(phi) has no sine term; drop it and refit amplitude/offset
        X = np.column_stack([np.ones_like(phi), np.cos(c_nu * phi)])
        (c_b, c_a), *_ = np.linalg.lstsq(X, cs, rcond=None)
        p_nu, (q_b, q_s, q_c) = _fit_sinusoid(phi, 1.0 - ps, nu_grid)
        p_a, p_phi = math.hypot(q_s, q_c), math.atan2(q_c, q_s)
        for flip in (False, True):
            pa, pp = (-p_a, p_phi - math.copysign(math.pi, p_phi)) if flip else (p_a, p_phi)
            starts.append(np.array([c_a, c_nu, c_b, pa, p_nu, q_b, pp, omega, sigma_coh, 0.05]))
    else:
        starts.append(np.array([0.0, prior_mu["C_nu"], float(np.mean(cs)), 0.0,
                                prior_mu["p_nu"], 1.0 - float(np.mean(ps)), 0.0, omega,
                                sigma_coh, 0.05]))
    for st in list(starts):
        alt = st.copy()
        alt[3], alt[5] = 0.5 * st[3], st[5] + 0.01
        starts.append(alt)
    admissible = [st for st in starts if nm_admissible(st)]
    return (admissible or starts)[:max(n, 1)]


def fit_nm(coh_sets, nm_points, priors: PriorSpec | dict | None = None,
           config: FitConfig | dict | None = None, horizon=None, predict_phi=None) -> FitResult:
    """Joint fit of coherence records at several mixing angles and N' points.

    ``coh_sets`` is a list of ``(phi, CoherenceTrace)``; ``nm_points`` a list
    of ``(phi, value)``. The derived ``p_at_0`` is the population at zero
    angle per draw. The predictive includes ``sigma_nm`` observation noise.
    """
    config = config if isinstance(config, FitConfig) else FitConfig.from_dict(config)
    if not isinstance(priors, PriorSpec):
        priors = nm_priors(priors)
    model = build_nm_model(coh_sets, nm_points, priors, horizon)
    theta_map, cov = find_map(model, _nm_starts(list(coh_sets), config.map_starts))
    samples = _sample(model, config, theta_map, cov)
    p0 = 1.0 - (samples.draws("p_b") + samples.draws("p_a") * np.sin(samples.draws("p_phi")))
    derived = {"p_at_0": p0}
    summaries = summarize_samples(samples, extra=derived)
    converged = _check_convergence(summaries, config.force)
    h = model.likelihood.horizon
    if predict_phi is None:
        predict_phi = np.linspace(0.0, 2 * math.pi, 100)
    fn = lambda th, phi: nm_modified_measure(th, phi, h)  # noqa: E731
    pred_curve = posterior_predictive(samples, fn, predict_phi, max_draws=config.predictive_draws,
                                      noise="sigma_nm", seed=config.seed)
    pred_mean = posterior_predictive(samples, fn, predict_phi, max_draws=config.predictive_draws,
                                     seed=config.seed)
    predictive = {"nm_curve": pred_curve.to_dict(), "nm_expectation": pred_mean.to_dict()}
    if nm_points:
        obs_phi = np.array([p for p, _ in nm_points], dtype=float)
        predictive["nm_observed"] = posterior_predictive(
            samples, fn, obs_phi, max_draws=config.predictive_draws, noise="sigma_nm",
            seed=config.seed).to_dict()
    return FitResult(samples=samples, summaries=summaries,
                     map_estimate=dict(zip(model.names, map(float, theta_map))),
                     predictive=predictive, derived=derived, converged=converged)
