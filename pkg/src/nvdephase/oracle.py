"""
Brute-force reference for the analytic model, and a synthetic Ramsey generator.

The conditional propagators are built by exponentiating the secular
Hamiltonian restricted to each electron level, then the electron
coherence is obtained as a trace over the nitrogen spin. The bath enters
only through the scalar envelope L(t).

Randomness: ``numpy.random.Generator(numpy.random.Philox(seed))``. Philox
is a counter-based generator, so a given seed gives the same stream on
every platform. Noise is drawn channel by channel over the whole grid:
x first, then y (or the magnitude channel alone).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .errors import ValidationError
from .spin_model import (
    DephasingEnvelope,
    FidModelParams,
    HyperfineCoupling,
    NmModelParams,
    contrast_eval,
    envelope_eval,
    nitrogen_populations,
    population_eval,
)
from .trace import CoherenceTrace

# nitrogen I_z in the {|+1>, |0>, |-1>} basis
I_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
BRANCHES = {"ms0": 0, "msm1": -1}


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class NuclearDensityMatrix:
    """Validated 3x3 nitrogen density matrix in the {+1, 0, -1} basis."""

    def __init__(self, matrix, tol=1e-12):
        rho = np.array(matrix, dtype=complex)
        if rho.shape != (3, 3):
            raise ValidationError(f"density matrix must be 3x3, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise ValidationError(f"density matrix trace is {np.trace(rho)!r}, expected 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise ValidationError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        self.matrix = rho

    @classmethod
    def diagonal(cls, p1, p0, pm1):
        return cls(np.diag([p1, p0, pm1]))

    @classmethod
    def from_state(cls, state):
        return cls.diagonal(state.p1, state.p0, state.pm1)

    @classmethod
    def from_pure(cls, amplitudes):
        psi = np.asarray(amplitudes, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


def conditional_hamiltonian(coupling: HyperfineCoupling, branch: str) -> np.ndarray:
    """Nitrogen part of ``<i| S_z A_par I_z |i>`` for electron level i."""
    try:
        ms = BRANCHES[branch]
    except KeyError:
        raise ValidationError(f"branch must be one of {sorted(BRANCHES)}, got {branch!r}") from None
    return ms * coupling.a_par * I_Z


def conditional_propagator(coupling: HyperfineCoupling, t: float, branch: str) -> np.ndarray:
    """``exp(-i t H_i)`` for the electron level ``branch`` ('ms0' or 'msm1')."""
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t!r}")
    return expm(-1j * t * conditional_hamiltonian(coupling, branch))


def coherence_trace(rho_n, coupling: HyperfineCoupling, env: DephasingEnvelope | None,
                    t: float) -> complex:
    """Electron coherence ``L(t) Tr[U_0 rho U_{-1}^dagger]``."""
    if not isinstance(rho_n, NuclearDensityMatrix):
        rho_n = NuclearDensityMatrix(rho_n)
    u0 = conditional_propagator(coupling, t, "ms0")
    um1 = conditional_propagator(coupling, t, "msm1")
    value = np.trace(u0 @ rho_n.matrix @ um1.conj().T)
    if env is not None:
        value = value * envelope_eval(env, t)
    return complex(value)


def _complex_coherence(populations, omega, times):
    # diagonal of U_{-1}^dagger is (e^{-i w t}, 1, e^{+i w t})
    p1, p0, pm1 = populations
    phase = np.exp(-1j * omega * times)
    return p1 * phase + p0 + pm1 * np.conj(phase)


def simulate_ramsey(params, times, seed=None, phi=None, readout="quadrature") -> CoherenceTrace:
    """Generate a synthetic Ramsey record.

    Parameters
    ----------
    params : FidModelParams or NmModelParams
        FID parameters give the envelope-damped coherence with noise
        ``sigma``. Joint-model parameters need ``phi`` and give the
        contrast-scaled coherence ``C(phi) r(t, phi)`` (unit envelope)
        with noise ``sigma_coh``.
    times : array
        Strictly increasing grid in us.
    seed : int, optional
        Philox seed. ``None`` is only allowed for noiseless output.
    phi : float, optional
        Preparation angle; required for joint-model parameters.
    readout : {'quadrature', 'magnitude'}
        'quadrature' adds independent noise to the x and y channels.
        'magnitude' adds noise to the Bloch length directly, matching the
        normal likelihood used for fitting.
    """
    times = np.asarray(times, dtype=float)
    if readout not in ("quadrature", "magnitude"):
        raise ValidationError(f"readout must be 'quadrature' or 'magnitude', got {readout!r}")
    bias = 0.0
    if isinstance(params, FidModelParams):
        state = params.state
        coherence = _complex_coherence((state.p1, state.p0, state.pm1),
                                       params.coupling.a_par, times)
        coherence = coherence * envelope_eval(params.envelope, times)
        sigma = params.sigma
        bias = params.bias_d
        if phi is None:
            phi = params.phi
    elif isinstance(params, NmModelParams):
        if phi is None:
            raise ValidationError("phi is required to simulate the joint model")
        p = float(population_eval(params.population, phi))
        state = nitrogen_populations(p, phi)
        coherence = _complex_coherence((state.p1, state.p0, state.pm1),
                                       params.coupling.a_par, times)
        coherence = coherence * contrast_eval(params.contrast, phi)
        sigma = params.sigma_coh
    else:
        raise ValidationError(f"unsupported parameter type {type(params).__name__}")

    noisy = sigma > 0 and seed is not None
    if sigma > 0 and seed is None:
        raise ValidationError("a seed is required when sigma > 0")
    rng = make_rng(seed) if noisy else None
    n = times.size
    if readout == "quadrature":
        x = coherence.real.copy()
        y = coherence.imag.copy()
        if noisy:
            x += rng.normal(0.0, sigma, n)
            y += rng.normal(0.0, sigma, n)
        return CoherenceTrace(times, x=x, y=y, phi=phi, seed=seed)
    r = np.abs(coherence) + bias
    if noisy:
        r = r + rng.normal(0.0, sigma, n)
    return CoherenceTrace(times, r=r, phi=phi, seed=seed)
