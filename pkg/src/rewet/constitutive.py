"""Point-wise closures.  Every function accepts scalars or numpy arrays."""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError
from .parameters import ParameterSet


def porosity(C_g, params: ParameterSet):
    """Gel-modified porosity, unclamped."""
    return params.phi0 - np.asarray(C_g, dtype=float) / params.rho_gel


def clogging_ratio(phi, params: ParameterSet):
    """Normalised open porosity (phi - theta_min)/(phi0 - theta_min), clipped to [0, 1]."""
    span = params.phi0 - params.theta_min
    if span <= 0:
        return np.ones_like(np.asarray(phi, dtype=float))
    phi = np.clip(phi, params.theta_min, params.phi0)
    return (phi - params.theta_min) / span


def water_diffusivity(theta, phi, params: ParameterSet):
    """Effective moisture diffusivity D(theta, phi) in cm^2/day."""
    d_star = params.A * np.exp(params.B * np.asarray(theta, dtype=float))
    if not params.porosity_coupling:
        return d_star
    return clogging_ratio(phi, params) ** params.clog_exponent * d_star


def silicate_rate(C, C0: float, k: float, n: float):
    """Power-law consumption rate k*C*(C/C0)**(n-1); zero for C <= 0."""
    if not C0 > 0:
        raise InvalidParameterError(f"reference concentration must be positive, got {C0}")
    C = np.asarray(C, dtype=float)
    pos = C > 0
    safe = np.where(pos, C, 1.0)
    r = k * safe * np.exp((n - 1.0) * np.log(safe / C0))
    return np.where(pos, r, 0.0)


def csh_generation(r_alpha, r_beta, params: ParameterSet):
    """Mass rate of C-S-H produced by the two silicate reactions."""
    return 0.5 * params.m_csh * (np.asarray(r_alpha) / params.m_alpha + np.asarray(r_beta) / params.m_beta)


def cutoff(theta, params: ParameterSet):
    """Reaction shut-off factor.

    Strict mode gives max(theta - theta_r, 0).  With a relaxed floor the
    factor never drops below ``epsilon_cutoff``.
    """
    excess = np.asarray(theta, dtype=float) - params.theta_r
    return np.maximum(excess, params.epsilon_cutoff)
