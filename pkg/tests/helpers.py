"""Small analytic targets shared by the sampler tests."""

import math

import numpy as np

from nvdephase.inference import Normal, PriorSpec, ProbModel


def standard_normal_model(dim=2):
    spec = PriorSpec({f"x{i}": Normal(0.0, 1.0) for i in range(dim)})
    return ProbModel(spec, lambda th: 0.0, grad_loglik=lambda th: np.zeros(dim), name="normal")


def conjugate_model(seed=0, n=20, mu0=1.0, tau0=2.0, sigma=0.5, true_mean=0.3):
    """Normal mean with known noise and a normal prior; returns model and exact moments."""
    rng = np.random.Generator(np.random.Philox(seed))
    y = rng.normal(true_mean, sigma, n)
    prec = 1.0 / tau0**2 + n / sigma**2
    post_var = 1.0 / prec
    post_mean = post_var * (mu0 / tau0**2 + y.sum() / sigma**2)
    spec = PriorSpec({"mu": Normal(mu0, tau0)})

    def loglik(th):
        r = y - th[0]
        return -0.5 * float(r @ r) / sigma**2 - n * math.log(sigma)

    def grad(th):
        return np.array([float(np.sum(y - th[0])) / sigma**2])

    return ProbModel(spec, loglik, grad_loglik=grad, name="conjugate"), post_mean, post_var


def mcse_mean_var(draws):
    """Monte Carlo standard errors of the posterior mean and variance."""
    from nvdephase.inference import ess
    d = np.asarray(draws)
    m = d.mean()
    sq = (d - m) ** 2
    se_mean = d.std(ddof=1) / math.sqrt(ess(d))
    se_var = sq.std(ddof=1) / math.sqrt(ess(sq))
    return m, d.var(ddof=1), se_mean, se_var
