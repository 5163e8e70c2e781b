"""
Posterior samplers: adaptive random-walk Metropolis and Hamiltonian Monte Carlo.

Both work in the unconstrained coordinates of a :class:`ProbModel` and
return draws in the constrained coordinates. Chains get independent
Philox streams spawned from one ``SeedSequence``, so results depend only on
(model, config, seed) and are merged by chain index.

Warmup uses doubling adaptation windows (50, 100, 200, ... iterations;
the last one absorbs the remainder) followed by a terminal buffer of
10% of warmup. Proposal covariance (MH) or the diagonal inverse metric
(HMC) is re-estimated at each window end; the global scale / step size is
tuned toward ``target_accept`` throughout warmup and frozen afterwards.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import SamplingError, ValidationError

FIRST_WINDOW = 50
DIVERGENCE_DH = 1000.0


def _check_common(chains, iters, warmup, target_accept):
    if chains < 1:
        raise ValidationError(f"chains must be >= 1, got {chains}")
    if not (iters > warmup >= 0):
        raise ValidationError(f"need iters > warmup >= 0, got iters={iters}, warmup={warmup}")
    if not (0.0 < target_accept < 1.0):
        raise ValidationError(f"target_accept must lie in (0, 1), got {target_accept}")


@dataclass(frozen=True)
class MHConfig:
    chains: int = 4
    iters: int = 4000
    warmup: int | None = None
    target_accept: float = 0.3
    seed: int = 0
    adapt: str = "full"
    workers: int = 1

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.iters // 2)
        _check_common(self.chains, self.iters, self.warmup, self.target_accept)
        if self.adapt not in ("full", "diag"):
            raise ValidationError(f"adapt must be 'full' or 'diag', got {self.adapt!r}")


@dataclass(frozen=True)
class HMCConfig:
    chains: int = 4
    iters: int = 2000
    warmup: int | None = None
    step_size: float = 0.1
    leapfrog_steps: int = 10
    seed: int = 0
    target_accept: float = 0.8
    adapt_step_size: bool = True
    adapt_metric: bool = True
    max_divergence_rate: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.iters // 2)
        _check_common(self.chains, self.iters, self.warmup, self.target_accept)
        if int(self.leapfrog_steps) < 1:
            raise ValidationError(f"leapfrog_steps must be >= 1, got {self.leapfrog_steps}")
        if not self.step_size > 0:
            raise ValidationError(f"step_size must be positive, got {self.step_size}")


@dataclass
class PosteriorSamples:
    """Post-warmup draws, shape ``(chains, draws, dims)``, constrained space."""

    names: list
    chains: np.ndarray
    seeds: list
    acceptance: np.ndarray
    warmup: int
    sampler: str = "mh"
    logp: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def num_chains(self) -> int:
        return self.chains.shape[0]

    @property
    def num_draws(self) -> int:
        return self.chains.shape[1]

    def index(self, dim) -> int:
        if isinstance(dim, str):
            try:
                return self.names.index(dim)
            except ValueError:
                raise ValidationError(f"unknown parameter {dim!r}") from None
        return int(dim)

    def draws(self, dim) -> np.ndarray:
        """(chains, draws) array for one parameter."""
        return self.chains[:, :, self.index(dim)]

    def flat(self, dim=None) -> np.ndarray:
        if dim is None:
            return self.chains.reshape(-1, self.chains.shape[2])
        return self.draws(dim).reshape(-1)


def covariance_windows(warmup, first=FIRST_WINDOW):
    """Window ends for metric updates, leaving a terminal scale-only buffer."""
    buffer = max(first, warmup // 10)
    if warmup < 2 * first + buffer:
        return []
    return adaptation_windows(warmup - buffer, first)


def adaptation_windows(warmup, first=FIRST_WINDOW):
    """End indices (exclusive) of the doubling warmup windows."""
    if warmup <= 0:
        return []
    ends, pos, width = [], 0, first
    while True:
        nxt = pos + width
        if nxt + 2 * width > warmup:
            ends.append(warmup)
            return ends
        ends.append(nxt)
        pos, width = nxt, 2 * width


def _chain_streams(seed, chains):
    children = np.random.SeedSequence(seed).spawn(chains)
    rngs = [np.random.Generator(np.random.Philox(c)) for c in children]
    ids = [int(c.generate_state(1, np.uint64)[0]) for c in children]
    return rngs, ids


def _initial_points(model, init, chains):
    if init is None:
        raise ValidationError("an initial point is required")
    init = np.asarray(init, dtype=float)
    if init.ndim == 1:
        init = np.tile(init, (chains, 1))
    if init.shape != (chains, model.dim):
        raise ValidationError(f"init has shape {init.shape}, expected ({chains}, {model.dim})")
    return np.array([model.unconstrain(row) for row in init])


def _to_constrained(model, u_draws):
    out = np.empty_like(u_draws)
    for k, (_, entry) in enumerate(model.priors):
        fwd = entry.transform.forward
        out[:, k] = [fwd(float(v)) for v in u_draws[:, k]]
    return out


def _run_chains(fn, n, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(c) for c in range(n)]


def _robust_cholesky(cov):
    cov = 0.5 * (cov + cov.T)
    jitter = 1e-10 * max(float(np.mean(np.diag(cov))), 1e-300)
    for _ in range(8):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 100.0
    return np.diag(np.sqrt(np.maximum(np.diag(cov), 1e-300)))


# ---------------------------------------------------------------------------
# adaptive Metropolis
# ---------------------------------------------------------------------------

def sample_mh(model, config: MHConfig, init, init_cov=None) -> PosteriorSamples:
    """Adaptive random-walk Metropolis.

    Parameters
    ----------
    model : ProbModel
    config : MHConfig
    init : array
        Constrained starting point, shape (D,) or (chains, D).
    init_cov : array, optional
        Initial proposal covariance in unconstrained space. Defaults to
        ``0.01 * I``.

    Raises
    ------
    SamplingError
        If the log-posterior is not finite at a starting point.
    """
    D = model.dim
    rngs, seed_ids = _chain_streams(config.seed, config.chains)
    starts = _initial_points(model, init, config.chains)
    cov0 = np.eye(D) * 0.01 if init_cov is None else np.asarray(init_cov, dtype=float)
    windows = covariance_windows(config.warmup)
    base_scale = 2.38 / math.sqrt(D)

    def run(c):
        rng = rngs[c]
        u = starts[c].copy()
        lp = model.logp(u)
        if not math.isfinite(lp):
            raise SamplingError(f"log-posterior is not finite at the initial point of chain {c}",
                                {"chain": c, "init": model.constrain(u).tolist()})
        cov = cov0.copy()
        chol = _robust_cholesky(cov)
        log_scale = math.log(base_scale)
        keep = config.iters - config.warmup
        draws = np.empty((keep, D))
        lps = np.empty(keep)
        n_acc = 0
        win_idx, win_start, buf = 0, 0, []
        for it in range(config.iters):
            z = rng.standard_normal(D)
            log_u = math.log(rng.random())
            prop = u + math.exp(log_scale) * (chol @ z)
            lp_prop = model.logp(prop)
            log_alpha = lp_prop - lp if math.isfinite(lp_prop) else -math.inf
            if log_u < log_alpha:
                u, lp = prop, lp_prop
                if it >= config.warmup:
                    n_acc += 1
            if it < config.warmup:
                alpha = math.exp(min(0.0, log_alpha))
                k = it - win_start + 1
                log_scale += (alpha - config.target_accept) / k**0.6
                buf.append(u)
                if win_idx < len(windows) and it + 1 == windows[win_idx]:
                    arr = np.array(buf)
                    var = np.var(arr, axis=0)
                    if arr.shape[0] > 2 * D and np.all(var > 0):
                        if config.adapt == "full":
                            cov = np.cov(arr.T) + 1e-8 * np.diag(var)
                        else:
                            cov = np.diag(var)
                        chol = _robust_cholesky(cov)
                        log_scale = math.log(base_scale)
                    win_idx += 1
                    win_start = it + 1
                    buf = []
            else:
                j = it - config.warmup
                draws[j] = u
                lps[j] = lp
        return (_to_constrained(model, draws), lps, n_acc / keep,
                {"proposal_scale": math.exp(log_scale), "proposal_cov": cov.tolist()})

    results = _run_chains(run, config.chains, config.workers)
    return PosteriorSamples(
        names=list(model.names),
        chains=np.stack([r[0] for r in results]),
        seeds=seed_ids,
        acceptance=np.array([r[2] for r in results]),
        warmup=config.warmup,
        sampler="mh",
        logp=np.stack([r[1] for r in results]),
        diagnostics={"proposal_scale": [r[3]["proposal_scale"] for r in results],
                     "seed": config.seed},
    )


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo
# ---------------------------------------------------------------------------

class _DualAveraging:
    """Step-size adaptation of Hoffman & Gelman (2014), algorithm 5."""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step_size)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_eps = math.log(step_size)
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept_prob):
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** -self.kappa
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _finite_stat(fn, values):
    v = np.abs(values[np.isfinite(values)])
    return float(fn(v)) if v.size else math.nan


def _leapfrog(model, u, p, grad, eps, steps, inv_metric):
    u = u.copy()
    p = p + 0.5 * eps * grad
    for s in range(steps):
        u = u + eps * inv_metric * p
        lp, grad = model.logp_and_grad(u)
        if not math.isfinite(lp) or not np.all(np.isfinite(grad)):
            return u, p, -math.inf, grad
        if s < steps - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return u, p, lp, grad


def sample_hmc(model, config: HMCConfig, init) -> PosteriorSamples:
    """Static-trajectory HMC with a diagonal metric.

    Gradients come from ``model.grad_logp`` (analytic when the model
    registers one, central differences otherwise). Per-draw energy errors
    and divergences are recorded in ``diagnostics``; a post-warmup
    divergence rate above ``config.max_divergence_rate`` raises
    :class:`SamplingError`.
    """
    D = model.dim
    rngs, seed_ids = _chain_streams(config.seed, config.chains)
    starts = _initial_points(model, init, config.chains)
    windows = covariance_windows(config.warmup)
    steps = int(config.leapfrog_steps)

    def run(c):
        rng = rngs[c]
        u = starts[c].copy()
        lp, grad = model.logp_and_grad(u)
        if not math.isfinite(lp):
            raise SamplingError(f"log-posterior is not finite at the initial point of chain {c}",
                                {"chain": c})
        inv_metric = np.ones(D)
        eps = config.step_size
        da = _DualAveraging(eps, config.target_accept)
        keep = config.iters - config.warmup
        draws = np.empty((keep, D))
        lps = np.empty(keep)
        energy_err = np.empty(keep)
        n_acc = n_div = 0
        win_idx, buf = 0, []
        for it in range(config.iters):
            p0 = rng.standard_normal(D) / np.sqrt(inv_metric)
            log_u = math.log(rng.random())
            h0 = -lp + 0.5 * np.dot(p0 * inv_metric, p0)
            u1, p1, lp1, grad1 = _leapfrog(model, u, p0, grad, eps, steps, inv_metric)
            h1 = -lp1 + 0.5 * np.dot(p1 * inv_metric, p1) if math.isfinite(lp1) else math.inf
            dh = h1 - h0
            divergent = not math.isfinite(dh) or dh > DIVERGENCE_DH
            accept_prob = 0.0 if divergent else math.exp(min(0.0, -dh))
            if not divergent and log_u < -dh:
                u, lp, grad = u1, lp1, grad1
                if it >= config.warmup:
                    n_acc += 1
            if it < config.warmup:
                if config.adapt_step_size:
                    eps = da.update(accept_prob)
                buf.append(u)
                if win_idx < len(windows) and it + 1 == windows[win_idx]:
                    arr = np.array(buf)
                    var = np.var(arr, axis=0)
                    if config.adapt_metric and arr.shape[0] > 10 and np.all(var > 0):
                        n = arr.shape[0]
                        inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                        if config.adapt_step_size:
                            da.restart(eps)
                    win_idx += 1
                    buf = []
                if it + 1 == config.warmup and config.adapt_step_size:
                    eps = da.final
            else:
                j = it - config.warmup
                draws[j] = u
                lps[j] = lp
                energy_err[j] = dh if math.isfinite(dh) else np.nan
                n_div += divergent
        return (_to_constrained(model, draws), lps, n_acc / keep, n_div / keep, eps, energy_err)

    results = _run_chains(run, config.chains, config.workers)
    div_rates = [r[3] for r in results]
    diagnostics = {
        "step_size": [r[4] for r in results],
        "divergence_rate": div_rates,
        "mean_abs_energy_error": [_finite_stat(np.mean, r[5]) for r in results],
        "max_abs_energy_error": [_finite_stat(np.max, r[5]) for r in results],
        "seed": config.seed,
    }
    if max(div_rates) > config.max_divergence_rate:
        raise SamplingError(
            f"divergent trajectory rate {max(div_rates):.2f} exceeds "
            f"{config.max_divergence_rate:.2f}; reduce step_size", diagnostics)
    return PosteriorSamples(
        names=list(model.names),
        chains=np.stack([r[0] for r in results]),
        seeds=seed_ids,
        acceptance=np.array([r[2] for r in results]),
        warmup=config.warmup,
        sampler="hmc",
        logp=np.stack([r[1] for r in results]),
        diagnostics=diagnostics,
    )
