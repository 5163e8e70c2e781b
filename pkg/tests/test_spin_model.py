import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvdephase import (
    ContrastModel,
    DephasingEnvelope,
    HyperfineCoupling,
    NitrogenState,
    PopulationModel,
    ValidationError,
    bloch_length,
    bloch_length_phi,
    contrast_eval,
    envelope_eval,
    nitrogen_populations,
    population_eval,
    revival_times,
)
from nvdephase.defaults import REFERENCE_NM
from nvdephase.spin_model import envelope_decay_time

TWO_PI = 2.0 * math.pi

probs = st.floats(0.0, 1.0)
angles = st.floats(-10.0, 10.0)
omegas = st.floats(0.5 * TWO_PI, 5.0 * TWO_PI)
times = st.floats(0.0, 3.0)


@st.composite
def states(draw):
    a, b = sorted([draw(probs), draw(probs)])
    p1, p0 = a, b - a
    return NitrogenState(p1, p0, 1.0 - p1 - p0)


# --- nitrogen_populations ---------------------------------------------------

def test_populations_polarized():
    s = nitrogen_populations(1.0, 0.0)
    assert (s.p1, s.p0, s.pm1) == (1.0, 0.0, 0.0)


def test_populations_full_rotation():
    s = nitrogen_populations(1.0, math.pi)
    assert s.p1 == pytest.approx(0.0, abs=1e-15)
    assert s.p0 == pytest.approx(1.0, abs=1e-15)
    assert s.pm1 == 0.0


def test_populations_fid_point_mpmath():
    mp.mp.dps = 40
    p, phi = mp.mpf("0.972"), mp.mpf("0.191")
    ref = (p * mp.cos(phi / 2) ** 2, p * mp.sin(phi / 2) ** 2, 1 - p)
    s = nitrogen_populations(0.972, 0.191)
    for got, want in zip((s.p1, s.p0, s.pm1), ref):
        assert abs(got - float(want)) < 1e-15
    # frozen reference values
    assert s.p1 == pytest.approx(0.96316, abs=5e-5)
    assert s.p0 == pytest.approx(0.00884, abs=5e-5)


def test_populations_reject_bad_p():
    with pytest.raises(ValidationError):
        nitrogen_populations(1.2, 0.0)


@given(probs, angles)
def test_populations_sum_to_one(p, phi):
    s = nitrogen_populations(p, phi)
    assert abs(s.p1 + s.p0 + s.pm1 - 1.0) < 1e-12
    assert abs(s.p1 + s.p0 - p) < 1e-12


def test_state_sum_validated():
    with pytest.raises(ValidationError):
        NitrogenState(0.5, 0.5, 0.5)


# --- envelope ---------------------------------------------------------------

def test_envelope_zero_coeffs():
    assert envelope_eval(DephasingEnvelope.unit(), 5.0) == 1.0


def test_envelope_gaussian_at_t2():
    env = DephasingEnvelope.gaussian(22.262)
    assert envelope_eval(env, 22.262) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert env.coeffs[2] == 1.0 / 22.262 ** 2
    assert sum(env.coeffs) == env.coeffs[2]


def test_envelope_polynomial_mpmath():
    mp.mp.dps = 40
    env = DephasingEnvelope.polynomial([0, 0, 0.002, 0, 0, 0])
    want = mp.exp(-mp.mpf("0.002") * 100)
    assert abs(envelope_eval(env, 10.0) - float(want)) < 1e-15


def test_envelope_rejects_negative():
    with pytest.raises(ValidationError):
        DephasingEnvelope.polynomial([0, -1, 0, 0, 0, 0])
    with pytest.raises(ValidationError):
        DephasingEnvelope.polynomial([0, 1])
    with pytest.raises(ValidationError):
        DephasingEnvelope.gaussian(0.0)


@given(st.lists(st.floats(0, 2.0), min_size=6, max_size=6), st.floats(0, 50))
def test_envelope_bounds(coeffs, t):
    env = DephasingEnvelope.polynomial(coeffs)
    val = envelope_eval(env, t)
    assert 0.0 <= val <= math.exp(-coeffs[0]) + 1e-15


def test_decay_time_gaussian_is_t2():
    env = DephasingEnvelope.gaussian(22.262)
    assert envelope_decay_time(env.coeffs) == pytest.approx(22.262, rel=1e-12)


def test_decay_time_vectorized_and_edges():
    coeffs = np.array([[0, 0, 1 / 4, 0, 0, 0], [2, 0, 0, 0, 0, 0], [0] * 6])
    out = envelope_decay_time(coeffs)
    assert out[0] == pytest.approx(2.0, rel=1e-12)
    assert out[1] == 0.0
    assert out[2] == math.inf


# --- bloch_length -----------------------------------------------------------

def test_bloch_p0_one_is_envelope():
    env = DephasingEnvelope.gaussian(3.0)
    t = np.linspace(0, 10, 101)
    r = bloch_length(NitrogenState(0, 1, 0), HyperfineCoupling(5.0), env, t)
    np.testing.assert_allclose(r, envelope_eval(env, t), rtol=0, atol=1e-15)


def test_bloch_balanced_pm_collapses():
    c = HyperfineCoupling(3.7)
    r = bloch_length(NitrogenState(0.5, 0.0, 0.5), c, None, math.pi / (2 * c.a_par))
    assert r == pytest.approx(0.0, abs=1e-7)


def _bloch_mp(p1, p0, pm1, omega, t):
    mp.mp.dps = 40
    p1, p0, pm1, x = (mp.mpf(v) for v in (p1, p0, pm1, omega * t))
    sq = (p0 ** 2 + p1 ** 2 + pm1 ** 2 + 2 * p0 * (p1 + pm1) * mp.cos(x)
          + 2 * p1 * pm1 * mp.cos(2 * x))
    return float(mp.sqrt(max(sq, 0)))


def test_bloch_matches_extended_precision(rng):
    for _ in range(100):
        a, b = np.sort(rng.uniform(size=2))
        s = NitrogenState(a, b - a, 1 - b)
        omega = rng.uniform(0.5, 5) * TWO_PI
        t = rng.uniform(0, 3)
        got = bloch_length(s, HyperfineCoupling(omega), None, t)
        want = _bloch_mp(s.p1, s.p0, s.pm1, omega, t)
        # sqrt amplifies rounding near zeros of the bracket
        assert abs(got - want) < 1e-7 if want < 1e-4 else abs(got - want) < 1e-12


@given(states(), omegas, times)
def test_bloch_normalized(state, omega, t):
    c = HyperfineCoupling(omega)
    assert 0.0 <= bloch_length(state, c, None, t) <= 1.0 + 1e-12
    assert bloch_length(state, c, None, 0.0) == pytest.approx(1.0, abs=1e-12)


@given(states(), omegas)
def test_bloch_periodic(state, omega):
    c = HyperfineCoupling(omega)
    t = np.linspace(0, 2, 97)
    r0 = bloch_length(state, c, None, t)
    r1 = bloch_length(state, c, None, t + c.period)
    # sqrt near a zero of the bracket loses digits; compare squares
    np.testing.assert_allclose(r0 ** 2, r1 ** 2, rtol=0, atol=1e-12)


@given(states(), omegas, times)
def test_bloch_pm_symmetry(state, omega, t):
    c = HyperfineCoupling(omega)
    assert bloch_length(state, c, None, t) == bloch_length(state.swapped(), c, None, t)


def test_gaussian_p0_strictly_decreasing():
    env = DephasingEnvelope.gaussian(22.262)
    t = np.linspace(0, 60, 10000)
    r = bloch_length(NitrogenState(0, 1, 0), HyperfineCoupling.from_mhz(2.143), env, t)
    assert np.all(np.diff(r) < 0)


# --- bloch_length_phi -------------------------------------------------------

def test_phi_form_pure_state():
    assert bloch_length_phi(1.0, 0.0, 4.0, 1.3) == pytest.approx(1.0, abs=1e-15)


def test_phi_form_half_angle():
    omega = 2.3
    t = np.linspace(0, 5, 50)
    np.testing.assert_allclose(bloch_length_phi(1.0, math.pi / 2, omega, t),
                               np.abs(np.cos(omega * t / 2)), atol=1e-7)


@given(probs, angles, omegas, times)
def test_parametrization_consistency(p, phi, omega, t):
    c = HyperfineCoupling(omega)
    direct = bloch_length_phi(p, phi, c, t)
    composed = bloch_length(nitrogen_populations(p, phi), c, None, t)
    # the forms agree in r^2 to rounding; sqrt only loses digits near r = 0
    assert abs(direct ** 2 - composed ** 2) < 1e-12


def test_phi_form_rejects_bad_p():
    with pytest.raises(ValidationError):
        bloch_length_phi(-0.1, 0.0, 1.0, 0.0)


# --- contrast / population --------------------------------------------------

def test_contrast_table_at_zero():
    assert contrast_eval(REFERENCE_NM.contrast, 0.0) == pytest.approx(0.307, abs=1e-12)


def test_contrast_flat_and_node():
    m = ContrastModel(0.0, 1.3, 0.2)
    np.testing.assert_array_equal(contrast_eval(m, np.linspace(0, 6, 7)), 0.2)
    m = ContrastModel(0.05, 1.03, 0.26)
    assert contrast_eval(m, math.pi / (2 * 1.03)) == pytest.approx(0.26, abs=1e-15)


def test_contrast_invariant():
    with pytest.raises(ValidationError):
        ContrastModel(0.3, 1.0, 0.2)


def test_population_table_at_zero():
    assert round(population_eval(REFERENCE_NM.population, 0.0), 3) == 0.915


def test_population_flat():
    m = PopulationModel(0.0, 1.7, 0.1, 0.3)
    np.testing.assert_allclose(population_eval(m, np.linspace(0, 6, 7)), 0.9)


def test_population_extrema_dense_scan():
    m = REFERENCE_NM.population
    phi = np.linspace(0, TWO_PI, 200001)
    p = population_eval(m, phi)
    # p_nu * 2pi spans more than a full sine period, so both extrema are reached
    assert p.min() == pytest.approx(1 - m.p_b - abs(m.p_a), abs=1e-9)
    assert p.max() == pytest.approx(1 - m.p_b + abs(m.p_a), abs=1e-9)


def test_population_invariant():
    with pytest.raises(ValidationError):
        PopulationModel(0.5, 1.0, 0.6, 0.0)


# --- revivals ---------------------------------------------------------------

def test_revivals_unit_period():
    assert revival_times(HyperfineCoupling(TWO_PI), 2.5) == pytest.approx([1.0, 2.0], abs=1e-15)


def test_revivals_fid_coupling():
    ts = revival_times(HyperfineCoupling.from_mhz(2.143), 1.226)
    assert len(ts) == 2


def test_revivals_short_horizon():
    assert revival_times(HyperfineCoupling(TWO_PI), 0.5) == []
    with pytest.raises(ValidationError):
        revival_times(HyperfineCoupling(TWO_PI), 0.0)


@given(probs, angles, omegas)
def test_revivals_restore_full_length(p, phi, omega):
    c = HyperfineCoupling(omega)
    for tk in revival_times(c, 3.0):
        assert abs(bloch_length_phi(p, phi, c, tk) - 1.0) < 1e-12


def test_coupling_units():
    c = HyperfineCoupling.from_mhz(2.143)
    assert c.a_par == TWO_PI * 2.143
    assert c.mhz == pytest.approx(2.143, rel=1e-15)
    with pytest.raises(ValidationError):
        HyperfineCoupling(-1.0)
