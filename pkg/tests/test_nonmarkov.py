import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvdephase import (
    CoherenceTrace,
    DephasingEnvelope,
    HyperfineCoupling,
    NmModelParams,
    PopulationModel,
    Trajectory,
    ValidationError,
    detect_monotone_intervals,
    measure_exact,
    measure_modified,
    measure_modified_from_data,
    simulate_ramsey,
)
from nvdephase.defaults import NM_HORIZON, REFERENCE_NM, nm_angles, nm_times
from nvdephase.nonmarkov import default_eps, estimate_noise

TWO_PI = 2.0 * math.pi


def _half_cos(omega, periods):
    return Trajectory.from_function(lambda t: np.abs(np.cos(omega * t / 2)),
                                    periods * TWO_PI / omega)


def _brute_positive_variation(func, horizon, n=10**6):
    r = func(np.linspace(0.0, horizon, n))
    d = np.diff(r)
    return float(d[d > 0].sum()), int(np.count_nonzero((d[1:] > 0) & (d[:-1] <= 0))
                                       + (d[0] > 0))


def test_decreasing_has_no_intervals():
    traj = Trajectory.analytic(0.0, 0.0, HyperfineCoupling(TWO_PI),
                               DephasingEnvelope.gaussian(2.0), horizon=5.0)
    # p = 0 puts everything into m_I = -1, a single population term
    assert detect_monotone_intervals(traj) == []
    assert measure_exact(traj).value == 0.0


def test_single_revival_interval():
    omega = TWO_PI * 1.3
    ivs = detect_monotone_intervals(_half_cos(omega, 1))
    assert len(ivs) == 1
    a, b = ivs[0]
    assert a == pytest.approx(math.pi / omega, abs=1e-8)
    assert b == pytest.approx(TWO_PI / omega, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_half_cos_measure_counts_periods(k):
    rep = measure_exact(_half_cos(TWO_PI * 2.0, k))
    # cusp minima are located to the bisection tolerance of 1e-9 us
    assert rep.value == pytest.approx(k, abs=1e-7)
    assert len(rep.intervals) == k
    assert all(g > 0 for _, _, g in rep.intervals)


def test_table_trajectory_interval_count_matches_dense_scan():
    traj = Trajectory.analytic(0.915, math.pi, HyperfineCoupling(TWO_PI * 2.169),
                               horizon=NM_HORIZON)
    _, n_rises = _brute_positive_variation(traj.func, NM_HORIZON)
    assert len(detect_monotone_intervals(traj)) == n_rises


def test_random_trajectories_match_dense_scan(rng):
    for _ in range(8):
        p, phi = rng.uniform(0, 1), rng.uniform(0, TWO_PI)
        omega = rng.uniform(0.5, 5) * TWO_PI
        env = DephasingEnvelope.gaussian(rng.uniform(1, 30))
        traj = Trajectory.analytic(p, phi, HyperfineCoupling(omega), env, horizon=3.0)
        want, _ = _brute_positive_variation(traj.func, 3.0)
        assert measure_exact(traj).value == pytest.approx(want, abs=1e-6)


@given(st.floats(0, 1), st.floats(0, TWO_PI), st.floats(0.5 * TWO_PI, 5 * TWO_PI))
def test_exact_measure_nonnegative(p, phi, omega):
    traj = Trajectory.analytic(p, phi, HyperfineCoupling(omega), horizon=1.5)
    rep = measure_exact(traj, grid_step=1e-3)
    assert rep.value >= 0.0
    assert (rep.value == 0.0) == (len(rep.intervals) == 0)


def test_grid_convergence(rng):
    for _ in range(5):
        p, phi = rng.uniform(0, 1), rng.uniform(0, TWO_PI)
        traj = Trajectory.analytic(p, phi, HyperfineCoupling(rng.uniform(1, 5) * TWO_PI),
                                   DephasingEnvelope.gaussian(10.0), horizon=2.0)
        coarse = measure_exact(traj, grid_step=2e-4).value
        fine = measure_exact(traj, grid_step=1e-4).value
        assert abs(coarse - fine) < 1e-6


def test_markovian_iff_nonincreasing_sampled(rng):
    t = np.linspace(0, 1, 200)
    down = np.sort(rng.uniform(0, 1, 200))[::-1]
    assert measure_exact(Trajectory.sampled(t, down)).value == 0.0
    bumped = down.copy()
    bumped[100] = bumped[99] + 1e-6
    assert measure_exact(Trajectory.sampled(t, bumped)).value > 0.0


def test_eps_threshold_suppresses_small_wiggles():
    t = np.linspace(0, 1, 101)
    r = 0.9 - 0.1 * t + 0.003 * (np.arange(101) % 2)
    traj = Trajectory.sampled(t, r)
    assert measure_exact(traj).value > 0.0
    assert measure_exact(traj, eps=0.01).value == 0.0
    with pytest.raises(ValidationError):
        measure_exact(traj, eps=-1.0)


def test_trajectory_validation():
    with pytest.raises(ValidationError):
        Trajectory.sampled([0.0], [1.0])
    with pytest.raises(ValidationError):
        Trajectory.sampled([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        Trajectory.sampled([0.0, 1.0], [1.0, 1.5])
    with pytest.raises(ValidationError):
        Trajectory.from_function(np.cos, 0.0)


# --- modified measure -------------------------------------------------------

def test_modified_zero_when_fully_polarized():
    params = NmModelParams(REFERENCE_NM.contrast, PopulationModel(0.0, 1.0, 0.0, 0.0),
                           REFERENCE_NM.coupling)
    assert measure_modified(params, 0.0, NM_HORIZON).value == 0.0


@given(st.floats(-10, 10), st.floats(0.1, 5))
def test_modified_never_positive(phi, horizon):
    assert measure_modified(REFERENCE_NM, phi, horizon).value <= 0.0


def test_modified_matches_extended_precision():
    mp.mp.dps = 40
    phi, T = mp.pi, mp.mpf(NM_HORIZON)
    C = mp.mpf("0.046") * mp.cos(mp.mpf("1.030") * phi) + mp.mpf("0.261")
    p = 1 - (mp.mpf("0.102") + mp.mpf("0.034") * mp.sin(mp.mpf("1.738") * phi - mp.mpf("0.528")))
    p1, p0, pm1 = p * mp.cos(phi / 2) ** 2, p * mp.sin(phi / 2) ** 2, 1 - p
    x = 2 * mp.pi * mp.mpf("2.169") * T
    r = mp.sqrt(p0 ** 2 + p1 ** 2 + pm1 ** 2 + 2 * p0 * (p1 + pm1) * mp.cos(x)
                + 2 * p1 * pm1 * mp.cos(2 * x))
    want = float(C * (r - 1))
    got = measure_modified(REFERENCE_NM, math.pi, NM_HORIZON).value
    assert got == pytest.approx(want, abs=1e-13)
    assert got == pytest.approx(-0.0224051, abs=1e-7)


def test_modified_smooth_over_angles():
    phi = nm_angles()
    vals = np.array([measure_modified(REFERENCE_NM, f, NM_HORIZON).value for f in phi])
    h = phi[1] - phi[0]
    second = np.abs(np.diff(vals, 2)) / h ** 2
    assert second.max() < 1.0


def test_modified_rejects_bad_horizon():
    with pytest.raises(ValidationError):
        measure_modified(REFERENCE_NM, 0.0, 0.0)


def test_from_data_constant_is_zero():
    tr = CoherenceTrace(np.linspace(0, 1, 10), r=np.full(10, 0.7))
    assert measure_modified_from_data(tr, 0.3).value == 0.0


def _noiseless(params):
    return NmModelParams(params.contrast, params.population, params.coupling,
                         sigma_coh=1e-300, sigma_nm=params.sigma_nm)


@given(st.floats(0, TWO_PI))
def test_telescoping_identity(phi):
    # records already in contrast units, so the scale argument is 1
    tr = simulate_ramsey(_noiseless(REFERENCE_NM), nm_times(), seed=0, phi=phi, readout="magnitude")
    rep = measure_modified_from_data(tr, 1.0)
    assert abs(rep.value - measure_modified(REFERENCE_NM, phi, NM_HORIZON).value) < 1e-12


def test_from_data_noisy_mean_unbiased():
    phi = 2.0
    truth = measure_modified(REFERENCE_NM, phi, NM_HORIZON).value
    est = np.array([measure_modified_from_data(
        simulate_ramsey(REFERENCE_NM, nm_times(), seed=s, phi=phi, readout="magnitude")).value
        for s in range(1000)])
    se = est.std(ddof=1) / math.sqrt(est.size)
    assert abs(est.mean() - truth) < 2 * se


def test_from_data_empty_rejected():
    with pytest.raises(ValidationError):
        CoherenceTrace([], r=[])


def test_noise_estimate_and_eps(rng):
    t = np.linspace(0, 1, 2000)
    r = 0.5 + 0.1 * np.sin(3 * t) + rng.normal(0, 0.02, t.size)
    tr = CoherenceTrace(t, r=r)
    assert estimate_noise(r) == pytest.approx(0.02, rel=0.1)
    assert default_eps(tr) == pytest.approx(2 * estimate_noise(r))
    assert estimate_noise([1.0, 2.0]) == 0.0


def test_report_serialization():
    rep = measure_exact(_half_cos(TWO_PI, 2))
    d = rep.to_dict()
    assert d["kind"] == "exact" and len(d["intervals"]) == 2
    assert set(d["intervals"][0]) == {"start_us", "end_us", "gain"}
