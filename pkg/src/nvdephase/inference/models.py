"""
Log-posteriors for the FID-envelope model and the joint coherence /
non-Markovianity model.

Parameter vectors use the fixed layouts ``FID_NAMES`` and ``NM_NAMES``;
conversion helpers map them to the dataclasses in :mod:`spin_model`.
"""

from __future__ import annotations

import math

import numpy as np

from .. import defaults
from ..errors import ValidationError
from ..spin_model import (
    ENVELOPE_DEGREE,
    ContrastModel,
    DephasingEnvelope,
    FidModelParams,
    HyperfineCoupling,
    NmModelParams,
    PopulationModel,
    _bloch_length_phi,
    bracket,
)
from .priors import PriorSpec, log_prior

FID_NAMES = [f"a{i}" for i in range(ENVELOPE_DEGREE + 1)] + ["p", "phi", "A_par", "d", "sigma"]
NM_NAMES = ["C_a", "C_nu", "C_b", "p_a", "p_nu", "p_b", "p_phi", "A_par", "sigma_coh", "sigma_nm"]

UNITS = {
    **{f"a{i}": f"us^-{i}" for i in range(ENVELOPE_DEGREE + 1)},
    "a0": "1",
    "p": "1", "phi": "rad", "A_par": "rad/us", "d": "1", "sigma": "1",
    "C_a": "1", "C_nu": "1/rad", "C_b": "1", "p_a": "1", "p_nu": "1/rad", "p_b": "1",
    "p_phi": "rad", "sigma_coh": "1", "sigma_nm": "1",
    "T2_star": "us", "p_at_0": "1",
}

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _normal_loglik(resid, sigma):
    n = resid.size
    ss = float(np.dot(resid, resid))
    var = sigma * sigma
    if not math.isfinite(ss) or (var == 0.0 and ss > 0.0):
        return -math.inf
    if var == 0.0:
        return float(-n * (_HALF_LOG_2PI + math.log(sigma)))
    return float(-n * (_HALF_LOG_2PI + math.log(sigma)) - 0.5 * ss / var)


class ProbModel:
    """Prior plus likelihood over a named parameter vector.

    ``loglik(theta)`` works on the constrained vector. When
    ``grad_loglik`` is supplied it is used for gradients, otherwise
    :meth:`grad_logp` falls back to a fourth-order central difference.
    """

    def __init__(self, priors: PriorSpec, loglik, grad_loglik=None, name="model", predict=None):
        self.priors = priors
        self.loglik = loglik
        self.grad_loglik = grad_loglik
        self.name = name
        self.predict = predict

    @property
    def names(self):
        return self.priors.names

    @property
    def dim(self):
        return len(self.priors)

    def constrain(self, u):
        return self.priors.constrain(u)

    def unconstrain(self, theta):
        return self.priors.unconstrain(theta)

    def log_prior(self, theta):
        return log_prior(theta, self.priors, jacobian=False)

    def log_posterior(self, theta):
        """Unnormalized log density in the constrained coordinates."""
        lp = self.log_prior(theta)
        if lp == -math.inf:
            return lp
        ll = self.loglik(np.asarray(theta, dtype=float))
        return lp + ll if math.isfinite(ll) else -math.inf

    def logp(self, u) -> float:
        """Unnormalized log density of the unconstrained coordinates."""
        total = 0.0
        theta = np.empty(self.dim)
        for k, ((_, entry), uk) in enumerate(zip(self.priors, u)):
            uk = float(uk)
            if not math.isfinite(uk):
                return -math.inf
            x = entry.transform.forward(uk)
            theta[k] = x
            lp = entry.dist.logpdf(x)
            if lp == -math.inf:
                return -math.inf
            total += lp + entry.transform.log_jac(uk)
        if not math.isfinite(total):
            return -math.inf
        try:
            with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
                ll = self.loglik(theta)
        except ValidationError:
            # e.g. a scale that underflowed to zero during a long trajectory
            return -math.inf
        if not math.isfinite(ll):
            return -math.inf
        return total + ll

    def grad_logp(self, u):
        u = np.asarray(u, dtype=float)
        if self.grad_loglik is None:
            return self.fd_grad_logp(u)
        theta = self.constrain(u)
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            g_theta = np.asarray(self.grad_loglik(theta), dtype=float).copy()
        out = np.empty(self.dim)
        for k, (_, entry) in enumerate(self.priors):
            g_theta[k] += entry.dist.dlogpdf(theta[k])
            out[k] = g_theta[k] * entry.transform.dtheta_du(u[k]) + entry.transform.dlog_jac(u[k])
        return out

    def fd_grad_logp(self, u, rel_step=1e-5):
        """Fourth-order central-difference gradient of :meth:`logp`."""
        u = np.asarray(u, dtype=float)
        out = np.empty(self.dim)
        for k in range(self.dim):
            h = rel_step * max(1.0, abs(u[k]))
            vals = []
            for s in (2, 1, -1, -2):
                v = u.copy()
                v[k] += s * h
                vals.append(self.logp(v))
            out[k] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
        return out

    def logp_and_grad(self, u):
        lp = self.logp(u)
        if not math.isfinite(lp):
            return lp, np.full(self.dim, np.nan)
        return lp, self.grad_logp(u)


# ---------------------------------------------------------------------------
# FID envelope model
# ---------------------------------------------------------------------------

def fid_vector(params: FidModelParams) -> np.ndarray:
    return np.array(list(params.envelope.coeffs)
                    + [params.p, params.phi, params.coupling.a_par, params.bias_d, params.sigma])


def fid_params(theta) -> FidModelParams:
    theta = [float(v) for v in theta]
    n = ENVELOPE_DEGREE + 1
    return FidModelParams(
        envelope=DephasingEnvelope.polynomial(theta[:n]),
        p=theta[n], phi=theta[n + 1], coupling=HyperfineCoupling(theta[n + 2]),
        bias_d=theta[n + 3], sigma=theta[n + 4])


class FidLikelihood:
    """Normal likelihood of magnitude data with mean ``r(t) + d``."""

    def __init__(self, trace):
        if len(trace) == 0:
            raise ValidationError("FID data must not be empty")
        self.times = trace.times
        self.data = np.asarray(trace.magnitude, dtype=float)
        self._powers = self.times[None, :] ** np.arange(ENVELOPE_DEGREE + 1)[:, None]

    @staticmethod
    def _split(theta):
        a = theta[:ENVELOPE_DEGREE + 1]
        p, phi, omega, d, sigma = theta[ENVELOPE_DEGREE + 1:]
        return a, p, phi, omega, d, sigma

    def mean(self, theta, times=None):
        a, p, phi, omega, d, _ = self._split(np.asarray(theta, dtype=float))
        if times is None:
            times, powers = self.times, self._powers
        else:
            times = np.asarray(times, dtype=float)
            powers = times[None, :] ** np.arange(ENVELOPE_DEGREE + 1)[:, None]
        c2, s2 = math.cos(0.5 * phi) ** 2, math.sin(0.5 * phi) ** 2
        env = np.exp(-(a @ powers))
        return np.sqrt(bracket(p * c2, p * s2, 1.0 - p, omega * times)) * env + d

    def __call__(self, theta):
        sigma = theta[-1]
        if not sigma > 0:
            raise ValidationError(f"sigma must be positive, got {sigma!r}")
        return _normal_loglik(self.data - self.mean(theta), sigma)

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, p, phi, omega, d, sigma = self._split(theta)
        t = self.times
        c2, s2 = math.cos(0.5 * phi) ** 2, math.sin(0.5 * phi) ** 2
        p1, p0, pm1 = p * c2, p * s2, 1.0 - p
        c1, cc = np.cos(omega * t), np.cos(2.0 * omega * t)
        s1, ss = np.sin(omega * t), np.sin(2.0 * omega * t)
        sq = np.maximum(bracket(p1, p0, pm1, omega * t), 1e-300)
        root = np.sqrt(sq)
        env = np.exp(-(a @ self._powers))
        r = root * env
        resid = self.data - r - d
        w = resid / sigma**2                          # d loglik / d mean

        dr_dsq = env / (2.0 * root)
        db_dp1 = 2 * p1 + 2 * p0 * c1 + 2 * pm1 * cc
        db_dp0 = 2 * p0 + 2 * (p1 + pm1) * c1
        db_dpm = 2 * pm1 + 2 * p0 * c1 + 2 * p1 * cc
        db_dp = db_dp1 * c2 + db_dp0 * s2 - db_dpm
        half_sin = 0.5 * p * math.sin(phi)
        db_dphi = -db_dp1 * half_sin + db_dp0 * half_sin
        db_domega = -2 * p0 * (p1 + pm1) * t * s1 - 4 * p1 * pm1 * t * ss

        g = np.empty(theta.size)
        g[:ENVELOPE_DEGREE + 1] = -(self._powers * r[None, :]) @ w
        n = ENVELOPE_DEGREE + 1
        g[n] = np.dot(w, dr_dsq * db_dp)
        g[n + 1] = np.dot(w, dr_dsq * db_dphi)
        g[n + 2] = np.dot(w, dr_dsq * db_domega)
        g[n + 3] = np.sum(w)
        g[n + 4] = -t.size / sigma + np.dot(resid, resid) / sigma**3
        return g


def log_likelihood_fid(theta, data) -> float:
    """Normal log-likelihood of FID magnitudes given :class:`FidModelParams` or a vector."""
    vec = fid_vector(theta) if isinstance(theta, FidModelParams) else np.asarray(theta, float)
    return FidLikelihood(data)(vec)


def fid_priors(overrides=None) -> PriorSpec:
    return PriorSpec(defaults.FID_PRIORS).updated(overrides)


def build_fid_model(data, priors: PriorSpec | None = None) -> ProbModel:
    priors = priors or fid_priors()
    if priors.names != FID_NAMES:
        raise ValidationError(f"FID priors must cover exactly {FID_NAMES}, got {priors.names}")
    lik = FidLikelihood(data)
    return ProbModel(priors, lik, grad_loglik=lik.grad, name="fid", predict=lik.mean)


# ---------------------------------------------------------------------------
# joint coherence / non-Markovianity model
# ---------------------------------------------------------------------------

def nm_vector(params: NmModelParams) -> np.ndarray:
    c, q = params.contrast, params.population
    return np.array([c.c_a, c.c_nu, c.c_b, q.p_a, q.p_nu, q.p_b, q.p_phi,
                     params.coupling.a_par, params.sigma_coh, params.sigma_nm])


def nm_params(theta) -> NmModelParams:
    v = [float(x) for x in theta]
    return NmModelParams(ContrastModel(*v[0:3]), PopulationModel(*v[3:7]),
                         HyperfineCoupling(v[7]), sigma_coh=v[8], sigma_nm=v[9])


def nm_admissible(theta) -> bool:
    """Contrast non-negative and population in [0, 1] for every angle."""
    c_a, _, c_b, p_a, _, p_b = theta[:6]
    return c_b >= abs(c_a) and p_b >= abs(p_a) and p_b + abs(p_a) <= 1.0 and theta[7] > 0


def nm_coherence_mean(theta, t, phi):
    """Contrast-scaled Bloch length ``C(phi) r(t, phi)`` with ``p = p(phi)``."""
    c_a, c_nu, c_b, p_a, p_nu, p_b, p_phi, omega = theta[:8]
    contrast = c_a * np.cos(c_nu * phi) + c_b
    p = 1.0 - (p_b + p_a * np.sin(p_nu * phi + p_phi))
    return contrast * _bloch_length_phi(p, phi, omega, t)


def nm_modified_measure(theta, phi, horizon):
    """``N'(phi) = C(phi) (r(T, phi) - 1)`` vectorized over ``phi``."""
    phi = np.asarray(phi, dtype=float)
    c_a, c_nu, c_b, p_a, p_nu, p_b, p_phi, omega = theta[:8]
    contrast = c_a * np.cos(c_nu * phi) + c_b
    p = 1.0 - (p_b + p_a * np.sin(p_nu * phi + p_phi))
    r = _bloch_length_phi(np.clip(p, 0.0, 1.0), phi, omega, horizon)
    return contrast * (np.minimum(r, 1.0) - 1.0)


class NmLikelihood:
    """Factorized likelihood: coherence records times modified-measure points."""

    def __init__(self, coh_sets, nm_points=(), horizon=None):
        coh_sets = list(coh_sets)
        nm_points = list(nm_points)
        if not coh_sets and not nm_points:
            raise ValidationError("the joint model needs at least one dataset")
        ts, phis, xs = [], [], []
        for phi, trace in coh_sets:
            ts.append(trace.times)
            phis.append(np.full(len(trace), float(phi)))
            xs.append(trace.magnitude)
        self.t = np.concatenate(ts) if ts else np.empty(0)
        self.phi = np.concatenate(phis) if phis else np.empty(0)
        self.x = np.concatenate(xs) if xs else np.empty(0)
        self.nm_phi = np.array([float(p) for p, _ in nm_points])
        self.nm_value = np.array([float(v) for _, v in nm_points])
        if horizon is None:
            if not coh_sets:
                raise ValidationError("horizon is required when no coherence records are given")
            horizon = max(float(tr.times[-1]) for _, tr in coh_sets)
        self.horizon = float(horizon)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        sigma_coh, sigma_nm = theta[8], theta[9]
        if not (sigma_coh > 0 and sigma_nm > 0):
            raise ValidationError("sigma_coh and sigma_nm must be positive")
        if not nm_admissible(theta):
            return -math.inf
        total = 0.0
        if self.x.size:
            total += _normal_loglik(self.x - nm_coherence_mean(theta, self.t, self.phi), sigma_coh)
        if self.nm_value.size:
            pred = nm_modified_measure(theta, self.nm_phi, self.horizon)
            total += _normal_loglik(self.nm_value - pred, sigma_nm)
        return total


def log_likelihood_nm(theta, coh_sets, nm_points=(), horizon=None) -> float:
    vec = nm_vector(theta) if isinstance(theta, NmModelParams) else np.asarray(theta, float)
    return NmLikelihood(coh_sets, nm_points, horizon)(vec)


def nm_priors(overrides=None) -> PriorSpec:
    return PriorSpec(defaults.NM_PRIORS).updated(overrides)


def build_nm_model(coh_sets, nm_points=(), priors: PriorSpec | None = None,
                   horizon=None) -> ProbModel:
    priors = priors or nm_priors()
    if priors.names != NM_NAMES:
        raise ValidationError(f"joint-model priors must cover exactly {NM_NAMES}, got {priors.names}")
    lik = NmLikelihood(coh_sets, nm_points, horizon)
    model = ProbModel(priors, lik, name="nm",
                      predict=lambda theta, phi: nm_modified_measure(theta, phi, lik.horizon))
    model.likelihood = lik
    return model
