"""Model constants, cement mixture presets and initial-state derivation.

All quantities use g, cm and days.  A :class:`ParameterSet` is immutable
once constructed and validates itself in ``__post_init__``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import DegeneratePorosityError, InvalidParameterError, UnknownPresetError

__all__ = [
    "MixtureSpec",
    "ParameterSet",
    "MIXTURES",
    "PRESET_NAMES",
    "derive_cmix",
    "derive_initial_concentrations",
    "derive_initial_porosity",
    "from_mixture",
    "preset",
]

DV_ALPHA = 0.233
DV_BETA = 0.228
DV_GAMMA = 0.555


@dataclass(frozen=True)
class MixtureSpec:
    """Cement mixture recipe.

    ``phi0`` pins the initial porosity; when ``None`` the porosity is
    computed from the hydration volume changes.
    """

    rho_cem: float
    R_wc: float
    R_ac: float
    omega_alpha: float = 0.65
    omega_beta: float = 0.17
    omega_gamma: float = 0.11
    f_alpha: float = 0.60
    f_beta: float = 0.20
    f_gamma: float = 0.72
    phi0: Optional[float] = None

    def __post_init__(self):
        if not self.rho_cem > 0:
            raise InvalidParameterError(f"rho_cem must be positive, got {self.rho_cem}")
        for name in ("R_wc", "R_ac"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        for name in ("omega_alpha", "omega_beta", "omega_gamma", "f_alpha", "f_beta", "f_gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name}={v} outside [0, 1]")
        if self.phi0 is not None and not 0.0 < self.phi0 <= 1.0:
            raise InvalidParameterError(f"pinned phi0={self.phi0} outside (0, 1]")


def derive_cmix(mix: MixtureSpec, rho_w: float = 1.0, rho_agg: float = 2.6) -> float:
    """Initial cement concentration in the concrete before hydration, g/cm^3."""
    if not (rho_w > 0 and rho_agg > 0 and mix.rho_cem > 0):
        raise InvalidParameterError("densities must be positive")
    if mix.R_wc < 0 or mix.R_ac < 0:
        raise InvalidParameterError("mass ratios must be non-negative")
    rc = mix.rho_cem
    return rc / (mix.R_wc * rc / rho_w + mix.R_ac * rc / rho_agg + 1.0)


def derive_initial_concentrations(mix: MixtureSpec, cmix: float) -> tuple[float, float]:
    """Residual alite and belite concentrations after curing."""
    if not cmix > 0:
        raise InvalidParameterError(f"cmix must be positive, got {cmix}")
    for f, w in ((mix.f_alpha, mix.omega_alpha), (mix.f_beta, mix.omega_beta)):
        if not (0.0 <= f <= 1.0 and 0.0 <= w <= 1.0):
            raise InvalidParameterError("hydration and mass fractions must lie in [0, 1]")
    c_alpha = (1.0 - mix.f_alpha) * mix.omega_alpha * cmix
    c_beta = (1.0 - mix.f_beta) * mix.omega_beta * cmix
    return c_alpha, c_beta


def derive_initial_porosity(
    mix: MixtureSpec,
    cmix: float,
    dV: tuple[float, float, float] = (DV_ALPHA, DV_BETA, DV_GAMMA),
    rho_w: float = 1.0,
) -> tuple[float, float]:
    """Initial porosity of the cured mixture.

    Returns ``(phi0, formula_value)``.  ``phi0`` is the pinned value when the
    mixture carries one, otherwise the formula value; the formula value is
    always returned for auditing.
    """
    if not cmix > 0:
        raise InvalidParameterError(f"cmix must be positive, got {cmix}")
    hydrated = (
        mix.f_alpha * mix.omega_alpha * dV[0]
        + mix.f_beta * mix.omega_beta * dV[1]
        + mix.f_gamma * mix.omega_gamma * dV[2]
    )
    formula = cmix * mix.R_wc / rho_w - cmix * hydrated
    if formula < 0:
        raise DegeneratePorosityError(f"derived porosity is negative ({formula:.6g})")
    return (mix.phi0 if mix.phi0 is not None else formula), formula


_POSITIVE = (
    "rho_w", "rho_gel", "rho_cem", "rho_agg",
    "m_alpha", "m_beta", "m_w", "m_csh",
    "D_alpha", "D_beta", "D_q", "A", "L",
)
_NONNEGATIVE = (
    "k_alpha", "k_beta", "k_prec", "k_diss", "n_alpha", "n_beta", "nu", "B",
    "R_wc", "R_ac", "dV_alpha", "dV_beta", "dV_gamma",
    "C_alpha0", "C_beta0", "C_q0", "C_g0", "front_tol", "epsilon_cutoff", "clog_exponent",
)
_FRACTIONS = ("omega_alpha", "omega_beta", "omega_gamma", "f_alpha", "f_beta", "f_gamma")


@dataclass(frozen=True)
class ParameterSet:
    # densities, g/cm^3
    rho_w: float = 1.0
    rho_gel: float = 2.6
    rho_cem: float = 2.83
    rho_agg: float = 2.6
    # molar masses, g/mol
    m_alpha: float = 228.3
    m_beta: float = 172.2
    m_w: float = 18.0
    m_csh: float = 342.4
    # aqueous diffusivities, cm^2/day
    D_alpha: float = 0.01
    D_beta: float = 0.01
    D_q: float = 0.01
    # moisture diffusivity A*exp(B*theta)
    A: float = 0.0028
    B: float = 100.0
    theta_min: float = 0.04
    theta_r: float = 0.04
    # kinetics, 1/day
    k_alpha: float = 22.2
    k_beta: float = 3.04
    n_alpha: float = 2.65
    n_beta: float = 3.10
    k_prec: float = 32.2
    k_diss: float = 0.0
    nu: float = 5.0
    # mixture
    R_wc: float = 0.333
    R_ac: float = 2.86
    omega_alpha: float = 0.65
    omega_beta: float = 0.17
    omega_gamma: float = 0.11
    f_alpha: float = 0.60
    f_beta: float = 0.20
    f_gamma: float = 0.72
    dV_alpha: float = DV_ALPHA
    dV_beta: float = DV_BETA
    dV_gamma: float = DV_GAMMA
    L: float = 10.0
    # initial state
    C_alpha0: float = 0.145
    C_beta0: float = 0.076
    C_q0: float = 0.0
    C_g0: float = 0.0
    phi0: float = 0.067
    theta_max: float = 0.067
    # switches
    front_tol: float = 0.0005
    epsilon_cutoff: float = 0.0
    porosity_coupling: bool = True
    clog_exponent: float = 19.0 / 6.0

    def __post_init__(self):
        for name in _POSITIVE:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive, got {v}")
        for name in _NONNEGATIVE:
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{name} must be non-negative, got {v}")
        for name in _FRACTIONS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name}={v} outside [0, 1]")
        if not (0.0 <= self.theta_min <= self.theta_max <= self.phi0 <= 1.0):
            raise InvalidParameterError(
                "require 0 <= theta_min <= theta_max <= phi0 <= 1, got "
                f"theta_min={self.theta_min}, theta_max={self.theta_max}, phi0={self.phi0}"
            )
        if self.theta_min <= 0:
            raise InvalidParameterError("theta_min must be positive for concentration recovery")
        if self.theta_r < 0:
            raise InvalidParameterError("theta_r must be non-negative")
        if not isinstance(self.porosity_coupling, bool):
            raise InvalidParameterError("porosity_coupling must be a bool")

    def replace(self, **changes) -> "ParameterSet":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def field_type(cls, name: str):
        return bool if name == "porosity_coupling" else float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def mixture(self) -> MixtureSpec:
        return MixtureSpec(
            rho_cem=self.rho_cem, R_wc=self.R_wc, R_ac=self.R_ac,
            omega_alpha=self.omega_alpha, omega_beta=self.omega_beta,
            omega_gamma=self.omega_gamma, f_alpha=self.f_alpha,
            f_beta=self.f_beta, f_gamma=self.f_gamma, phi0=self.phi0,
        )

    def porosity_audit(self) -> dict:
        """Pinned porosity next to the value the mixture formula gives."""
        cmix = derive_cmix(self.mixture, self.rho_w, self.rho_agg)
        _, formula = derive_initial_porosity(
            self.mixture, cmix, (self.dV_alpha, self.dV_beta, self.dV_gamma), self.rho_w
        )
        return {"phi0": self.phi0, "phi0_formula": formula, "cmix": cmix}


def from_mixture(mix: MixtureSpec, **overrides) -> ParameterSet:
    """Parameter set for a mixture; other constants at base values.

    Initial silicate concentrations are derived.  ``theta_max`` follows the
    initial porosity unless overridden.
    """
    base = ParameterSet()
    rho_w = overrides.get("rho_w", base.rho_w)
    rho_agg = overrides.get("rho_agg", base.rho_agg)
    cmix = derive_cmix(mix, rho_w, rho_agg)
    c_alpha, c_beta = derive_initial_concentrations(mix, cmix)
    dV = tuple(overrides.get(k, getattr(base, k)) for k in ("dV_alpha", "dV_beta", "dV_gamma"))
    phi0, _ = derive_initial_porosity(mix, cmix, dV, rho_w)
    values = dict(
        rho_cem=mix.rho_cem, R_wc=mix.R_wc, R_ac=mix.R_ac,
        omega_alpha=mix.omega_alpha, omega_beta=mix.omega_beta, omega_gamma=mix.omega_gamma,
        f_alpha=mix.f_alpha, f_beta=mix.f_beta, f_gamma=mix.f_gamma,
        C_alpha0=c_alpha, C_beta0=c_beta, phi0=phi0, theta_max=phi0,
    )
    values.update(overrides)
    return ParameterSet(**values)


# Table of the four mixtures; mixture 3 is the base concrete.
MIXTURES = {
    "mixture1": MixtureSpec(rho_cem=3.15, R_wc=0.599, R_ac=5.39, phi0=0.113),
    "mixture2": MixtureSpec(rho_cem=2.62, R_wc=0.364, R_ac=3.13, phi0=0.074),
    "mixture3": MixtureSpec(rho_cem=2.83, R_wc=0.333, R_ac=2.86, phi0=0.066),
    "mixture4": MixtureSpec(rho_cem=3.07, R_wc=0.297, R_ac=3.12, phi0=0.045),
}

_BASE_MIX = dataclasses.replace(MIXTURES["mixture3"], phi0=0.067)

# Saturated water content of the base concrete.  Mixtures keep it (capped by
# their porosity) so that B*(theta_max - theta_min) stays at the base value.
THETA_MAX_BASE = 0.067

_SCENARIO_OVERRIDES = {
    "base": {},
    "no_reaction": {"k_alpha": 0.0, "k_beta": 0.0, "k_prec": 0.0},
    "decoupled_porosity": {"porosity_coupling": False},
    "relaxed_cutoff": {"epsilon_cutoff": 5e-5},
}

PRESET_NAMES = tuple(_SCENARIO_OVERRIDES) + tuple(MIXTURES)


def preset(name: str) -> ParameterSet:
    """Named, validated parameter set."""
    if name in _SCENARIO_OVERRIDES:
        return from_mixture(_BASE_MIX, **_SCENARIO_OVERRIDES[name])
    if name in MIXTURES:
        mix = MIXTURES[name]
        return from_mixture(mix, theta_max=min(THETA_MAX_BASE, mix.phi0))
    raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
