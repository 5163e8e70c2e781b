"""Reference parameter values from the NV experiment and default inference settings."""

import math

import numpy as np

from .spin_model import (
    ContrastModel,
    DephasingEnvelope,
    FidModelParams,
    HyperfineCoupling,
    NmModelParams,
    PopulationModel,
)

TWO_PI = 2.0 * math.pi

# FID point estimates (medians)
FID_T2_STAR = 22.262          # us
FID_T2_STAR_HPD = (21.878, 22.868)
FID_P = 0.972
FID_PHI = 0.191
FID_A_PAR_MHZ = 2.143
FID_SIGMA = 0.018

REFERENCE_FID = FidModelParams(
    envelope=DephasingEnvelope.gaussian(FID_T2_STAR),
    p=FID_P,
    phi=FID_PHI,
    coupling=HyperfineCoupling.from_mhz(FID_A_PAR_MHZ),
    bias_d=0.0,
    sigma=FID_SIGMA,
)

# joint coherence / non-Markovianity fit: point estimates and HPD intervals
NM_HORIZON = 1.226            # us
NM_N_ANGLES = 14
NM_TABLE = {
    "C_a": (0.046, (0.044, 0.047)),
    "C_nu": (1.030, (1.011, 1.050)),
    "C_b": (0.261, (0.260, 0.262)),
    "p_a": (0.034, (0.023, 0.044)),
    "p_nu": (1.738, (1.611, 1.858)),
    "p_b": (0.102, (0.091, 0.112)),
    "p_phi": (-0.528, (-0.904, -0.134)),
    "A_par": (TWO_PI * 2.169, (TWO_PI * 2.165, TWO_PI * 2.173)),
    "sigma_nm": (0.060, (0.037, 0.096)),
}
NM_SIGMA_COH = 0.018
NM_P0_HPD = (0.891, 0.943)    # population at phi = 0

REFERENCE_NM = NmModelParams(
    contrast=ContrastModel(NM_TABLE["C_a"][0], NM_TABLE["C_nu"][0], NM_TABLE["C_b"][0]),
    population=PopulationModel(NM_TABLE["p_a"][0], NM_TABLE["p_nu"][0],
                               NM_TABLE["p_b"][0], NM_TABLE["p_phi"][0]),
    coupling=HyperfineCoupling(NM_TABLE["A_par"][0]),
    sigma_coh=NM_SIGMA_COH,
    sigma_nm=NM_TABLE["sigma_nm"][0],
)

# priors, in the JSON layout accepted by PriorSpec
ENVELOPE_TIME_SCALE = 10.0    # us; half-normal scale of a_i is tau**-i

FID_PRIORS = {
    "a0": {"dist": "half-normal", "sigma": 0.1},
    **{f"a{i}": {"dist": "half-normal", "sigma": ENVELOPE_TIME_SCALE ** -i} for i in range(1, 6)},
    "p": {"dist": "uniform", "lo": 0.0, "hi": 1.0},
    "phi": {"dist": "half-normal", "sigma": 0.5, "transform": "fold"},
    "A_par": {"dist": "normal", "mu": TWO_PI * 2.14, "sigma": TWO_PI * 0.05},
    "d": {"dist": "normal", "mu": 0.0, "sigma": 0.1},
    "sigma": {"dist": "half-normal", "sigma": 0.1},
}

NM_PRIORS = {
    "C_a": {"dist": "normal", "mu": 1.0, "sigma": 0.1},
    "C_nu": {"dist": "normal", "mu": 0.3, "sigma": 0.1},
    "C_b": {"dist": "normal", "mu": 1.0, "sigma": 0.1},
    "p_a": {"dist": "normal", "mu": 0.02, "sigma": 0.01},
    "p_nu": {"dist": "normal", "mu": 1.5, "sigma": 0.1},
    "p_b": {"dist": "normal", "mu": 0.02, "sigma": 0.01},
    "p_phi": {"dist": "normal", "mu": 0.0, "sigma": 0.3},
    "A_par": {"dist": "normal", "mu": 4.2 * math.pi, "sigma": 0.5},
    "sigma_coh": {"dist": "half-normal", "sigma": 0.1},
    "sigma_nm": {"dist": "half-normal", "sigma": 1.0},
}


def fid_times(n_short=30, n_long=30, short_end=1.45, long_start=2.0, long_end=60.0):
    """FID grid: a dense block resolving the hyperfine beating, then a sparse decay tail."""
    return np.concatenate([np.linspace(0.0, short_end, n_short),
                           np.linspace(long_start, long_end, n_long)])


def nm_angles(n=NM_N_ANGLES):
    return np.linspace(0.0, TWO_PI, n)


def nm_times(n=50, horizon=NM_HORIZON):
    return np.linspace(0.0, horizon, n)
