import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvdephase import CoherenceTrace, ValidationError, simulate_ramsey
from nvdephase.defaults import (
    NM_HORIZON,
    REFERENCE_FID,
    REFERENCE_NM,
    fid_times,
    nm_angles,
    nm_times,
)
from nvdephase.inference import (
    FID_NAMES,
    NM_NAMES,
    HalfNormal,
    Normal,
    PriorSpec,
    Uniform,
    build_fid_model,
    build_nm_model,
    fid_priors,
    fid_vector,
    log_likelihood_fid,
    log_likelihood_nm,
    log_prior,
    nm_modified_measure,
    nm_vector,
)
from nvdephase.inference.priors import Fold, Log, Logit
from nvdephase.nonmarkov import measure_modified

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


# --- priors -----------------------------------------------------------------

def test_standard_normal_at_zero():
    spec = PriorSpec({"x": Normal(0.0, 1.0)})
    assert log_prior([0.0], spec) == pytest.approx(-HALF_LOG_2PI, abs=1e-15)


def test_half_normal_negative_is_minus_inf():
    spec = PriorSpec({"s": HalfNormal(1.0)})
    assert log_prior([-0.1], spec) == -math.inf


def test_independent_sum():
    a, b = Normal(1.0, 2.0), Normal(-3.0, 0.5)
    spec = PriorSpec({"a": a, "b": b})
    assert log_prior([0.3, -2.0], spec) == pytest.approx(a.logpdf(0.3) + b.logpdf(-2.0))


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        log_prior([0.0, 1.0], PriorSpec({"x": Normal(0.0, 1.0)}))


def test_prior_validation():
    with pytest.raises(ValidationError):
        Normal(0.0, 0.0)
    with pytest.raises(ValidationError):
        Uniform(1.0, 1.0)
    with pytest.raises(ValidationError):
        PriorSpec({"x": {"dist": "normal", "mu": 0, "sigma": 1, "transform": "log"}})
    with pytest.raises(ValidationError):
        PriorSpec({"x": {"dist": "cauchy"}})
    with pytest.raises(ValidationError):
        fid_priors({"nope": {"dist": "normal", "mu": 0, "sigma": 1}})


def test_default_transforms():
    spec = PriorSpec({"s": {"dist": "half-normal", "sigma": 1},
                      "p": {"dist": "uniform", "lo": 0, "hi": 1},
                      "m": {"dist": "normal", "mu": 0, "sigma": 1}})
    assert [e.transform.name for _, e in spec] == ["log", "logit", "identity"]
    assert spec.to_dict()["s"]["transform"] == "log"


@given(st.floats(-15, 15))
def test_transform_roundtrip_and_jacobian(u):
    for tr in (Log(), Logit(-1.0, 3.0), Fold()):
        theta = tr.forward(u)
        if tr.name == "fold":
            assert tr.inverse(theta) == abs(u)
        elif tr.name == "logit" and (theta in (-1.0, 3.0)):
            continue
        else:
            assert tr.inverse(theta) == pytest.approx(u, rel=1e-9, abs=1e-9)
        h = 1e-6
        if tr.name != "fold" and abs(u) < 8:
            fd = (tr.forward(u + h) - tr.forward(u - h)) / (2 * h)
            assert tr.dtheta_du(u) == pytest.approx(fd, rel=1e-5, abs=1e-12)
            assert math.log(tr.dtheta_du(u)) == pytest.approx(tr.log_jac(u), rel=1e-9, abs=1e-9)


def test_transform_correctness_by_rejection_sampling(rng):
    # half-normal(1) sampled in log space must reproduce its moments
    from nvdephase.inference import MHConfig, ProbModel, sample_mh
    spec = PriorSpec({"s": {"dist": "half-normal", "sigma": 1.0}})
    model = ProbModel(spec, lambda th: 0.0)
    s = sample_mh(model, MHConfig(chains=4, iters=20000, seed=3), [0.5]).flat("s")
    direct = np.abs(rng.normal(size=200000))
    assert s.mean() == pytest.approx(direct.mean(), abs=0.03)
    assert s.var() == pytest.approx(direct.var(), abs=0.03)


# --- FID likelihood ---------------------------------------------------------

def test_fid_loglik_at_mean():
    tr = CoherenceTrace(np.linspace(0, 1, 7), r=np.zeros(7))
    theta = fid_vector(REFERENCE_FID)
    lik_model = build_fid_model(tr)
    mean = lik_model.predict(theta)
    exact = CoherenceTrace(tr.times, r=mean)
    theta[-1] = 1.0
    assert log_likelihood_fid(theta, exact) == pytest.approx(-7 * HALF_LOG_2PI, abs=1e-12)


def test_fid_loglik_shift_covariance():
    tr = simulate_ramsey(REFERENCE_FID, fid_times(), seed=1, readout="magnitude")
    shifted = CoherenceTrace(tr.times, r=tr.magnitude + 0.3)
    theta = fid_vector(REFERENCE_FID)
    moved = theta.copy()
    moved[FID_NAMES.index("d")] += 0.3
    assert log_likelihood_fid(moved, shifted) == pytest.approx(log_likelihood_fid(theta, tr),
                                                               abs=1e-9)


def test_fid_loglik_extended_precision(rng):
    mp.mp.dps = 40
    t = np.sort(rng.uniform(0, 5, 20))
    x = rng.uniform(0.3, 1.0, 20)
    tr = CoherenceTrace(t, r=x)
    for _ in range(5):
        a = np.abs(rng.normal(0, [0.05, 0.1, 0.01, 1e-3, 1e-4, 1e-5]))
        p, phi = rng.uniform(0.5, 1), rng.uniform(0, 1)
        w, d, s = rng.uniform(10, 15), rng.normal(0, 0.05), rng.uniform(0.01, 0.2)
        theta = np.concatenate([a, [p, phi, w, d, s]])
        total = mp.mpf(0)
        for tj, xj in zip(t, x):
            p1 = p * mp.cos(mp.mpf(phi) / 2) ** 2
            p0 = p * mp.sin(mp.mpf(phi) / 2) ** 2
            pm = 1 - mp.mpf(p)
            ph = mp.mpf(w) * tj
            r = mp.sqrt(p0**2 + p1**2 + pm**2 + 2 * p0 * (p1 + pm) * mp.cos(ph)
                        + 2 * p1 * pm * mp.cos(2 * ph))
            r *= mp.exp(-sum(mp.mpf(ai) * mp.mpf(tj) ** i for i, ai in enumerate(a)))
            z = (xj - r - d) / s
            total += -mp.log(s) - mp.log(2 * mp.pi) / 2 - z**2 / 2
        assert log_likelihood_fid(theta, tr) == pytest.approx(float(total), rel=1e-12)


def test_fid_loglik_rejects_sigma():
    tr = CoherenceTrace([0.0, 1.0], r=[1.0, 0.9])
    theta = fid_vector(REFERENCE_FID)
    theta[-1] = 0.0
    with pytest.raises(ValidationError):
        log_likelihood_fid(theta, tr)


def test_fid_gradient_matches_finite_differences(rng):
    tr = simulate_ramsey(REFERENCE_FID, fid_times(), seed=2, readout="magnitude")
    model = build_fid_model(tr)
    u0 = model.unconstrain(fid_vector(REFERENCE_FID) + np.array([1e-3, 1e-3, 0, 1e-5, 1e-7, 1e-9,
                                                             0, 0, 0, 0, 0]))
    worst = 0.0
    for _ in range(50):
        u = u0 + rng.normal(0, 0.05, u0.size)
        if not math.isfinite(model.logp(u)):
            continue
        g = model.grad_logp(u)
        fd = model.fd_grad_logp(u)
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)
        worst = max(worst, rel.max())
    assert worst < 1e-5


def test_fid_model_layout():
    tr = CoherenceTrace([0.0, 1.0], r=[1.0, 0.9])
    model = build_fid_model(tr)
    assert model.names == FID_NAMES
    with pytest.raises(ValidationError):
        build_fid_model(tr, PriorSpec({"x": Normal(0, 1)}))


def test_logp_outside_support():
    tr = CoherenceTrace([0.0, 1.0], r=[1.0, 0.9])
    model = build_fid_model(tr)
    u = model.unconstrain(fid_vector(REFERENCE_FID))
    u[0] = math.inf
    assert model.logp(u) == -math.inf
    assert model.log_posterior(np.full(11, -1.0)) == -math.inf


def test_adding_constant_preserves_decisions():
    from nvdephase.inference import MHConfig, ProbModel, sample_mh
    spec = PriorSpec({"m": Normal(0.0, 1.0)})
    base = ProbModel(spec, lambda th: -0.5 * (th[0] - 0.4) ** 2)
    shifted = ProbModel(spec, lambda th: -0.5 * (th[0] - 0.4) ** 2 + 0.25)
    cfg = MHConfig(chains=2, iters=3000, seed=5)
    a = sample_mh(base, cfg, [0.0])
    b = sample_mh(shifted, cfg, [0.0])
    # same accept/reject sequence; values may differ in the last ulp through rounding
    assert np.array_equal(np.diff(a.chains, axis=1) == 0, np.diff(b.chains, axis=1) == 0)
    np.testing.assert_allclose(a.chains, b.chains, rtol=0, atol=1e-12)


# --- joint model ------------------------------------------------------------

def _coh_sets(params, seed=0):
    return [(phi, simulate_ramsey(params, nm_times(), seed=seed * 100 + k, phi=phi,
                                  readout="magnitude"))
            for k, phi in enumerate(nm_angles())]


def test_nm_empty_points_is_coherence_only():
    coh = _coh_sets(REFERENCE_NM)
    theta = nm_vector(REFERENCE_NM)
    pts = [(phi, measure_modified(REFERENCE_NM, phi, NM_HORIZON).value) for phi in nm_angles()]
    with_pts = log_likelihood_nm(theta, coh, pts)
    without = log_likelihood_nm(theta, coh, [])
    n = len(pts)
    # exact N' points only add their normalization constant
    assert with_pts - without == pytest.approx(
        -n * (HALF_LOG_2PI + math.log(REFERENCE_NM.sigma_nm)), abs=1e-9)


def test_nm_exact_data_normalization_only():
    theta = nm_vector(REFERENCE_NM)
    coh = []
    for phi in nm_angles()[:3]:
        tr = simulate_ramsey(REFERENCE_NM.__class__(**{**REFERENCE_NM.__dict__, "sigma_coh": 1e-300}),
                             nm_times(), seed=0, phi=phi, readout="magnitude")
        coh.append((phi, tr))
    n = 3 * nm_times().size
    want = -n * (HALF_LOG_2PI + math.log(REFERENCE_NM.sigma_coh))
    assert log_likelihood_nm(theta, coh) == pytest.approx(want, abs=1e-6)


def test_nm_maximized_near_truth():
    coh = _coh_sets(REFERENCE_NM, seed=4)
    pts = [(phi, measure_modified(REFERENCE_NM, phi, NM_HORIZON).value) for phi in nm_angles()]
    truth = nm_vector(REFERENCE_NM)
    grid = (0.6, 0.8, 1.0, 1.2, 1.4)
    for k in range(8):
        vals = []
        for rel in grid:
            theta = truth.copy()
            theta[k] *= rel
            vals.append(log_likelihood_nm(theta, coh, pts))
        assert all(np.isfinite(vals))
        # the coarse-grid maximum sits at the truth or its neighbour
        assert abs(int(np.argmax(vals)) - 2) <= 1, NM_NAMES[k]


def test_nm_measure_vectorized_matches_scalar():
    phi = np.linspace(0, 2 * math.pi, 9)
    vec = nm_modified_measure(nm_vector(REFERENCE_NM), phi, NM_HORIZON)
    want = [measure_modified(REFERENCE_NM, f, NM_HORIZON).value for f in phi]
    np.testing.assert_allclose(vec, want, atol=1e-15)


def test_nm_errors():
    theta = nm_vector(REFERENCE_NM)
    coh = _coh_sets(REFERENCE_NM)[:1]
    with pytest.raises(ValidationError):
        log_likelihood_nm(theta, [], [])
    bad = theta.copy()
    bad[8] = 0.0
    with pytest.raises(ValidationError):
        log_likelihood_nm(bad, coh)
    model = build_nm_model(coh)
    assert model.names == NM_NAMES
    inadmissible = theta.copy()
    inadmissible[0] = 1.0  # |C_a| > C_b
    assert log_likelihood_nm(inadmissible, coh) == -math.inf
