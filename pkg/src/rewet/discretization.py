"""Cell-centred finite-volume semi-discretisation of the re-wetting model.

State layout is cell-major: ``y[5*i + k]`` holds unknown ``k`` of cell ``i``
with ``k`` in (theta, theta*C_alpha, theta*C_beta, theta*C_q, theta*C_g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import constitutive as cv
from .errors import InvalidGridError, InvalidParameterError, NumericalFailure
from .parameters import ParameterSet

NVAR = 5
THETA, W_ALPHA, W_BETA, W_Q, W_G = range(NVAR)
FIELD_NAMES = ("theta", "C_alpha", "C_beta", "C_q", "C_g")
THETA_FLOOR = 1e-12


@dataclass(frozen=True)
class Grid:
    N: int
    L: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4:
            raise InvalidGridError(f"need at least 4 cells, got N={self.N}")
        if not self.L > 0:
            raise InvalidGridError(f"domain length must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.dx

    @property
    def size(self) -> int:
        return NVAR * self.N


def initial_state(params: ParameterSet, grid: Grid) -> np.ndarray:
    """Uniform initial condition: residual water, cured composition."""
    cell = np.array([
        params.theta_min,
        params.theta_min * params.C_alpha0,
        params.theta_min * params.C_beta0,
        params.theta_min * params.C_q0,
        params.theta_min * params.C_g0,
    ])
    return np.tile(cell, grid.N)


def unpack(y: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a state vector into theta and recovered concentrations ``C[4, N]``."""
    Y = np.asarray(y).reshape(N, NVAR)
    theta = Y[:, THETA]
    C = Y[:, 1:].T / np.maximum(theta, THETA_FLOOR)
    return theta, C


def pack(theta: np.ndarray, C: np.ndarray) -> np.ndarray:
    Y = np.empty((len(theta), NVAR))
    Y[:, THETA] = theta
    Y[:, 1:] = (C * theta).T
    return Y.ravel()


def boundary_theta(C_g1, params: ParameterSet):
    """Saturated water content at the wetted face, reduced by gel in the first cell."""
    return params.theta_max - C_g1 / params.rho_gel


def apply_ghost_cells(theta, C, params: ParameterSet, sealed: bool = False):
    """Values in the fictitious cells at x = -dx/2 and x = L + dx/2.

    ``C`` rows are (alpha, beta, q, gel).  Returns ``(theta_ext, C_ext)`` with
    one ghost entry on each end.  The left side imposes saturation and a
    perfect sink unless ``sealed`` is set, in which case both ends are
    zero-gradient.  Gel has no boundary condition and is copied outward.
    """
    theta = np.asarray(theta, dtype=float)
    C = np.asarray(C, dtype=float)
    theta_ext = np.empty(len(theta) + 2)
    theta_ext[1:-1] = theta
    theta_ext[-1] = theta[-1]
    C_ext = np.empty((C.shape[0], C.shape[1] + 2))
    C_ext[:, 1:-1] = C
    C_ext[:, -1] = C[:, -1]
    if sealed:
        theta_ext[0] = theta[0]
        C_ext[:, 0] = C[:, 0]
    else:
        theta_ext[0] = 2.0 * boundary_theta(C[3, 0], params) - theta[0]
        C_ext[:3, 0] = -C[:3, 0]
        C_ext[3, 0] = C[3, 0]
    return theta_ext, C_ext


class Model:
    """Right-hand side of the 5N semi-discrete system for one parameter set.

    ``sealed`` replaces the wetted left boundary with a zero-flux one, which
    is used for conservation checks.
    """

    def __init__(self, params: ParameterSet, grid: Grid, sealed: bool = False):
        if abs(grid.L - params.L) > 1e-12 * params.L:
            raise InvalidParameterError(f"grid length {grid.L} differs from params.L={params.L}")
        self.params = params
        self.grid = grid
        self.sealed = sealed
        self.n_evals = 0
        self.D_species = np.array([params.D_alpha, params.D_beta, params.D_q])[:, None]
        self.water_sink = params.nu * params.m_w / (params.rho_w * params.m_csh)

    @property
    def size(self) -> int:
        return self.grid.size

    def y0(self) -> np.ndarray:
        return initial_state(self.params, self.grid)

    def fluxes(self, y: np.ndarray):
        """Face fluxes of water and the three aqueous species.

        Returns ``(u, F)``: Darcy velocity at the N+1 faces and the advective
        plus diffusive species fluxes ``F[3, N+1]``.
        """
        p, dx = self.params, self.grid.dx
        theta, C = unpack(y, self.grid.N)
        th, Ce = apply_ghost_cells(theta, C, p, self.sealed)
        th_f = 0.5 * (th[1:] + th[:-1])
        phi_e = cv.porosity(Ce[3], p)
        phi_f = 0.5 * (phi_e[1:] + phi_e[:-1])
        dth = np.diff(th) / dx
        u = -cv.water_diffusivity(th_f, phi_f, p) * dth
        Ca = Ce[:3]
        C_f = 0.5 * (Ca[:, 1:] + Ca[:, :-1])
        F = -self.D_species * th_f * (np.diff(Ca, axis=1) / dx) + u * C_f
        return u, F

    def reactions(self, theta: np.ndarray, C: np.ndarray) -> np.ndarray:
        """Per-cell reaction sources, shape (5, N)."""
        p = self.params
        c = cv.cutoff(theta, p)
        r_a = cv.silicate_rate(C[0], p.C_alpha0, p.k_alpha, p.n_alpha) if p.C_alpha0 > 0 else 0.0 * theta
        r_b = cv.silicate_rate(C[1], p.C_beta0, p.k_beta, p.n_beta) if p.C_beta0 > 0 else 0.0 * theta
        R = cv.csh_generation(r_a, r_b, p)
        exchange = p.k_prec * C[2] - p.k_diss * C[3]
        S = np.empty((NVAR, len(theta)))
        S[THETA] = -self.water_sink * c * R
        S[W_ALPHA] = -c * r_a
        S[W_BETA] = -c * r_b
        S[W_Q] = c * (R - exchange)
        S[W_G] = c * exchange
        return S

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        self.n_evals += 1
        N, dx = self.grid.N, self.grid.dx
        theta, C = unpack(y, N)
        u, F = self.fluxes(y)
        S = self.reactions(theta, C)
        S[THETA] -= np.diff(u) / dx
        S[W_ALPHA:W_G] -= np.diff(F, axis=1) / dx
        dy = S.T.ravel()
        if not np.all(np.isfinite(dy)):
            bad = int(np.flatnonzero(~np.isfinite(dy))[0]) // NVAR
            raise NumericalFailure("non-finite right-hand side", cell=bad)
        return dy


def assemble_rhs(t: float, y: np.ndarray, params: ParameterSet, grid: Grid, sealed: bool = False) -> np.ndarray:
    """Semi-discrete time derivative of the state (functional form of :class:`Model`)."""
    return Model(params, grid, sealed)(t, y)


def jacobian_sparsity(grid: Grid) -> sparse.csr_matrix:
    """Block-tridiagonal 0/1 pattern with dense 5x5 blocks."""
    blocks = sparse.diags([1, 1, 1], [-1, 0, 1], shape=(grid.N, grid.N), dtype=np.int8)
    return sparse.kron(blocks, np.ones((NVAR, NVAR), dtype=np.int8), format="csr")


# bandwidth of the cell-major block-tridiagonal pattern
BANDWIDTH = 2 * NVAR - 1


def silicate_moles(y: np.ndarray, params: ParameterSet, grid: Grid) -> float:
    """Cell-integrated silicate content in mol per unit cross-section."""
    Y = np.asarray(y).reshape(grid.N, NVAR)
    per_cell = (
        Y[:, W_ALPHA] / params.m_alpha
        + Y[:, W_BETA] / params.m_beta
        + 2.0 * (Y[:, W_Q] + Y[:, W_G]) / params.m_csh
    )
    return float(grid.dx * per_cell.sum())


def water_volume(y: np.ndarray, grid: Grid) -> float:
    return float(grid.dx * np.asarray(y).reshape(grid.N, NVAR)[:, THETA].sum())
