"""Post-processing of simulation output: fronts, fits, grid errors, balances."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discretization import NVAR, THETA, W_ALPHA, W_BETA, W_Q, W_G, Grid, Model, unpack
from .errors import InsufficientDataError, InvalidGridError
from .parameters import ParameterSet


@dataclass
class FrontTrajectory:
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.t.shape != self.s.shape:
            raise ValueError("times and positions differ in length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("front sample times must be strictly increasing")

    def at(self, t: float) -> float:
        """Front position at the latest sample time not after ``t``."""
        i = np.searchsorted(self.t, t + 1e-9 * max(1.0, abs(t)), side="right") - 1
        if i < 0:
            raise ValueError(f"no front sample at or before t={t}")
        return float(self.s[i])

    @property
    def final(self) -> float:
        return float(self.s[-1])


def locate_front(theta, grid: Grid, params: ParameterSet, interpolate: bool = False) -> float:
    """Wetting front: centre of the first cell with theta <= theta_min + front_tol.

    Returns ``grid.L`` when the whole sample is wetter than the threshold.
    With ``interpolate`` the threshold crossing is located linearly between
    the last wet cell centre and the first dry one.
    """
    theta = np.asarray(theta, dtype=float)
    level = params.theta_min + params.front_tol
    dry = np.flatnonzero(theta <= level)
    if dry.size == 0:
        return float(grid.L)
    i = int(dry[0])
    x = grid.centers
    if not interpolate or i == 0:
        return float(x[i])
    t0, t1 = theta[i - 1], theta[i]
    frac = (t0 - level) / (t0 - t1)
    return float(x[i - 1] + frac * grid.dx)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r2: float
    n: int
    degenerate: bool = False
    excluded: int = 0


def sqrt_time_fit(front: FrontTrajectory, window: Optional[tuple[float, float]] = None,
                  L: Optional[float] = None) -> FitResult:
    """Least-squares fit of front position against sqrt(t).

    ``window`` restricts the sample times (inclusive).  When ``L`` is given,
    samples where the front has left the sample (s >= L) carry no front
    position and are excluded; their count is reported in ``excluded``.
    """
    t, s = front.t, front.s
    mask = np.ones(t.shape, dtype=bool)
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    excluded = 0
    if L is not None:
        exited = mask & (s >= L)
        excluded = int(exited.sum())
        mask &= ~exited
    if mask.sum() < 3:
        raise InsufficientDataError(f"need at least 3 front samples in window, have {int(mask.sum())}")
    x = np.sqrt(t[mask])
    y = s[mask]
    if np.ptp(x) == 0:
        raise InsufficientDataError("all samples at the same time")
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return FitResult(0.0, float(y.mean()), 0.0, int(mask.sum()), degenerate=True, excluded=excluded)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return FitResult(float(slope), float(intercept), r2, int(mask.sum()), excluded=excluded)


def restrict(fine, n_coarse: int) -> np.ndarray:
    """Cell-average a fine-grid field onto a nested coarse grid."""
    fine = np.asarray(fine, dtype=float)
    if n_coarse <= 0 or fine.size % n_coarse:
        raise InvalidGridError(f"fine grid of {fine.size} cells is not nested in {n_coarse}")
    return fine.reshape(n_coarse, -1).mean(axis=1)


def grid_error(coarse, fine, L: float) -> float:
    """Discrete L2 distance sqrt(dx * sum(diff^2)) on the coarse grid."""
    coarse = np.asarray(coarse, dtype=float)
    diff = coarse - restrict(fine, coarse.size)
    return float(np.sqrt(L / coarse.size * np.sum(diff ** 2)))


@dataclass
class ConvergenceReport:
    Ns: list
    errors: list
    ratios: list = field(default_factory=list)
    orders: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, Ns: Sequence[int], errors: Sequence[float]) -> "ConvergenceReport":
        Ns = [int(n) for n in Ns]
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise InvalidGridError("grid sizes must be strictly increasing")
        errors = [float(e) for e in errors]
        ratios, orders = [], []
        for e0, e1 in zip(errors, errors[1:] + [0.0]):
            if e1 > 0 and e0 > 0:
                ratios.append(e0 / e1)
                orders.append(float(np.log2(e0 / e1)))
            else:
                ratios.append(None)
                orders.append(None)
        return cls(Ns, errors, ratios, orders)

    def order_at(self, N: int) -> Optional[float]:
        return self.orders[self.Ns.index(N)]

    def error_at(self, N: int) -> float:
        return self.errors[self.Ns.index(N)]


class BalanceTracker:
    """Time integrals of boundary fluxes and water consumption.

    Pass as ``step_hook`` to :func:`rewet.integrator.integrate`; each step is
    integrated with 3-point Gauss-Legendre quadrature of the step's
    interpolating polynomial.
    """

    _nodes, _weights = np.polynomial.legendre.leggauss(3)

    def __init__(self, model: Model):
        self.model = model
        self.silicate_in = 0.0  # mol per unit area entering through x = 0
        self.water_in = 0.0  # cm entering through x = 0
        self.water_consumed = 0.0  # cm removed by hydration

    def rates(self, y: np.ndarray) -> tuple[float, float, float]:
        p = self.model.params
        u, F = self.model.fluxes(y)
        sil = F[0, 0] / p.m_alpha + F[1, 0] / p.m_beta + 2.0 * F[2, 0] / p.m_csh
        theta, C = unpack(y, self.model.grid.N)
        sink = -self.model.reactions(theta, C)[THETA].sum() * self.model.grid.dx
        return sil, u[0], sink

    def __call__(self, t_old: float, t_new: float, interp) -> None:
        half = 0.5 * (t_new - t_old)
        mid = 0.5 * (t_new + t_old)
        for node, w in zip(self._nodes, self._weights):
            sil, wat, sink = self.rates(interp(mid + half * node))
            self.silicate_in += w * half * sil
            self.water_in += w * half * wat
            self.water_consumed += w * half * sink


def _totals(y, params: ParameterSet, grid: Grid) -> tuple[float, float]:
    Y = np.asarray(y).reshape(grid.N, NVAR)
    sil = grid.dx * float(np.sum(
        Y[:, W_ALPHA] / params.m_alpha + Y[:, W_BETA] / params.m_beta
        + 2.0 * (Y[:, W_Q] + Y[:, W_G]) / params.m_csh
    ))
    water = grid.dx * float(Y[:, THETA].sum())
    return sil, water


def conservation_audit(snapshots, params: ParameterSet, grid: Grid,
                       tracker: Optional[BalanceTracker] = None) -> dict:
    """Silicate-mole and water-volume balance between first and last snapshot.

    Without a tracker the boundary terms are taken as zero (sealed domain).
    Drifts are relative to the initial inventory.
    """
    snapshots = np.asarray(snapshots)
    if snapshots.ndim != 2 or snapshots.shape[0] < 2:
        raise InsufficientDataError("need at least two snapshots")
    sil0, wat0 = _totals(snapshots[0], params, grid)
    sil1, wat1 = _totals(snapshots[-1], params, grid)
    sil_in = tracker.silicate_in if tracker else 0.0
    wat_in = tracker.water_in if tracker else 0.0
    consumed = tracker.water_consumed if tracker else None
    sil_resid = sil1 - sil0 - sil_in
    report = {
        "silicate_initial": sil0,
        "silicate_final": sil1,
        "silicate_boundary": sil_in,
        "silicate_drift": sil_resid / sil0 if sil0 else sil_resid,
        "water_initial": wat0,
        "water_final": wat1,
        "water_boundary": wat_in,
    }
    if consumed is not None:
        wat_resid = wat1 - wat0 - wat_in + consumed
        report["water_consumed"] = consumed
        report["water_drift"] = wat_resid / wat0
    else:
        report["water_drift"] = (wat1 - wat0) / wat0
    return report
