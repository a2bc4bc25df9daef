"""Variable-order, variable-step implicit integrator for stiff banded systems.

The method is the numerical differentiation formula (NDF) family of orders
1 to 5 in backward-difference form with quasi-constant step size, as used by
the classic ``ode15s`` solver.  Newton iterations use a forward-difference
Jacobian assembled with column grouping over a fixed band, and every linear
solve goes through a banded LU factorisation (LAPACK ``gbtrf``/``gbtrs``).
The Jacobian is kept across steps and only refreshed when Newton fails to
converge with the stale one.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidParameterError, NonlinearFailure, StiffFailure

MAX_ORDER = 5
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
EPS = np.finfo(float).eps

# NDF coefficients
_KAPPA = np.array([0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0])
_GAMMA = np.hstack((0.0, np.cumsum(1.0 / np.arange(1, MAX_ORDER + 1))))
_ALPHA = (1.0 - _KAPPA) * _GAMMA
_ERROR_CONST = _KAPPA * _GAMMA + 1.0 / np.arange(1, MAX_ORDER + 2)


@dataclass
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-8
    t_end: float = 28.0
    output_times: Optional[Sequence[float]] = None
    max_step: float = np.inf
    max_newton_iters: int = 4
    initial_step: Optional[float] = None
    max_steps: int = 500_000
    # "max": infinity norm with weights max(rtol*|y|, atol), as in ode15s;
    # "rms": root-mean-square with weights atol + rtol*|y|
    error_norm: str = "max"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidParameterError("rtol and atol must be positive")
        if not self.t_end > 0:
            raise InvalidParameterError("t_end must be positive")
        if self.output_times is None:
            self.output_times = np.linspace(0.0, self.t_end, 10)
        times = np.asarray(self.output_times, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise InvalidParameterError("output_times must be strictly increasing")
        if times.size and (times[0] < 0 or times[-1] > self.t_end):
            raise InvalidParameterError("output_times must lie within [0, t_end]")
        self.output_times = times
        if self.max_newton_iters < 1:
            raise InvalidParameterError("max_newton_iters must be at least 1")
        if not self.max_step > 0:
            raise InvalidParameterError("max_step must be positive")
        if self.error_norm not in ("max", "rms"):
            raise InvalidParameterError(f"error_norm must be 'max' or 'rms', got {self.error_norm!r}")


@dataclass
class IntegrationTrace:
    accepted: int = 0
    rejected: int = 0
    newton_iters: int = 0
    newton_failures: int = 0
    guard_rejections: int = 0
    jac_evals: int = 0
    lu_factorizations: int = 0
    rhs_evals: int = 0
    wall_time: float = 0.0
    final_order: int = 1

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray  # shape (len(t), n)
    trace: IntegrationTrace
    samples: list = field(default_factory=list)
    sample_times: np.ndarray = field(default_factory=lambda: np.empty(0))


# --- banded linear algebra -------------------------------------------------

class BandedJacobian:
    """Jacobian stored in LAPACK general-band layout.

    ``data[kl + ku + i - j, j] = J[i, j]``; the top ``kl`` rows are left free
    for fill-in during factorisation.
    """

    def __init__(self, n: int, kl: int, ku: int, data: Optional[np.ndarray] = None):
        self.n, self.kl, self.ku = n, kl, ku
        self.data = np.zeros((2 * kl + ku + 1, n)) if data is None else data

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        off = self.kl + self.ku
        for j in range(self.n):
            lo, hi = max(0, j - self.ku), min(self.n, j + self.kl + 1)
            out[lo:hi, j] = self.data[off + np.arange(lo, hi) - j, j]
        return out

    def iteration_matrix(self, c: float) -> np.ndarray:
        """Band storage of I - c*J."""
        m = -c * self.data
        m[self.kl + self.ku] += 1.0
        return m

    def factor(self, c: float):
        lu, piv, info = lapack.dgbtrf(self.iteration_matrix(c), self.kl, self.ku, overwrite_ab=1)
        if info < 0:
            raise ValueError(f"illegal argument {-info} in dgbtrf")
        return lu, piv, info

    def solve(self, factors, b: np.ndarray) -> np.ndarray:
        lu, piv, _ = factors
        x, info = lapack.dgbtrs(lu, self.kl, self.ku, b, piv)
        if info != 0:
            raise ValueError(f"dgbtrs failed with info={info}")
        return x


def column_groups(n: int, bandwidth: int, block: Optional[int] = None) -> list[np.ndarray]:
    """Columns that can be perturbed together without their rows colliding.

    For a plain band of half-width ``bandwidth`` columns more than
    ``2*bandwidth`` apart touch disjoint rows.  With ``block`` set the matrix
    is taken to be block tridiagonal with ``block x block`` blocks, and
    columns three cells apart can share an evaluation.
    """
    period = 2 * bandwidth + 1 if block is None else 3 * block
    period = min(n, period)
    idx = np.arange(n)
    return [idx[idx % period == g] for g in range(period)]


def _row_range(j: int, n: int, bandwidth: int, block: Optional[int]) -> tuple[int, int]:
    if block is None:
        return max(0, j - bandwidth), min(n, j + bandwidth + 1)
    c = j // block
    return max(0, (c - 1) * block), min(n, (c + 2) * block)


def fd_jacobian(rhs: Callable, t: float, y: np.ndarray, f0: Optional[np.ndarray] = None,
                bandwidth: int = 9, floor: float = 1e-6,
                block: Optional[int] = None) -> tuple[BandedJacobian, int]:
    """Forward-difference banded Jacobian.

    Returns ``(jac, n_evals)`` where ``n_evals`` counts right-hand side calls
    made (excluding ``f0`` if supplied).  A plain band needs
    ``2*bandwidth + 1`` grouped evaluations; a block-tridiagonal pattern
    (``block`` given, ``bandwidth >= 2*block - 1``) needs ``3*block``.
    Both counts are independent of the system size.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if block is not None and bandwidth < min(2 * block - 1, n - 1):
        raise ValueError(f"bandwidth {bandwidth} cannot hold {block}x{block} tridiagonal blocks")
    n_evals = 0
    if f0 is None:
        f0 = rhs(t, y)
        n_evals += 1
    jac = BandedJacobian(n, bandwidth, bandwidth)
    off = 2 * bandwidth
    h = np.sqrt(EPS) * np.maximum(np.abs(y), floor)
    # exact representable increments
    h = (y + h) - y
    for cols in column_groups(n, bandwidth, block):
        yp = y.copy()
        yp[cols] += h[cols]
        df = rhs(t, yp) - f0
        n_evals += 1
        for j in cols:
            lo, hi = _row_range(j, n, bandwidth, block)
            jac.data[off + np.arange(lo, hi) - j, j] = df[lo:hi] / h[j]
    return jac, n_evals


# --- NDF helpers ------------------------------------------------------------

def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _max_abs(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))


def _error_measure(kind: str, rtol: float, atol: float):
    """(norm, weights) pair for the error test and the Newton iteration."""
    if kind == "max":
        return _max_abs, lambda y: np.maximum(rtol * np.abs(y), atol)
    return _rms, lambda y: atol + rtol * np.abs(y)


def _compute_R(order: int, factor: float) -> np.ndarray:
    I = np.arange(1, order + 1)[:, None]
    J = np.arange(1, order + 1)
    M = np.zeros((order + 1, order + 1))
    M[1:, 1:] = (I - 1 - factor * J) / I
    M[0] = 1.0
    return np.cumprod(M, axis=0)


def _rescale_differences(D: np.ndarray, order: int, factor: float) -> None:
    """Rewrite the difference table for a step size multiplied by ``factor``."""
    R = _compute_R(order, factor)
    U = _compute_R(order, 1.0)
    RU = R.dot(U)
    D[: order + 1] = RU.T.dot(D[: order + 1])


def _interpolate(t: float, t_new: float, h: float, order: int, D: np.ndarray) -> np.ndarray:
    shifts = t_new - h * np.arange(order)
    denom = h * (1 + np.arange(order))
    p = np.cumprod((t - shifts) / denom)
    return D[0] + D[1: order + 1].T.dot(p)


def _initial_step(rhs, t0, y0, f0, rtol, atol) -> float:
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.5
    return min(100 * h0, h1)


# --- driver -------------------------------------------------------------------

def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    cfg: IntegratorConfig,
    *,
    bandwidth: Optional[int] = None,
    block: Optional[int] = None,
    guard: Optional[Callable[[np.ndarray], bool]] = None,
    sample_times: Optional[Sequence[float]] = None,
    sampler: Optional[Callable[[float, np.ndarray], object]] = None,
    step_hook: Optional[Callable] = None,
    t0: float = 0.0,
) -> Solution:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``cfg.t_end``.

    ``bandwidth`` and ``block`` describe the Jacobian pattern for
    :func:`fd_jacobian`; without them the Jacobian is dense.
    ``guard(y)`` returns False for states the right-hand side must never see;
    Newton iterates and accepted steps that fail it are rejected and the step
    is halved.  ``sampler(t, y)`` is called at each of ``sample_times`` with
    the interpolated state and its results are returned in
    ``Solution.samples``.  ``step_hook(t_old, t_new, interp)`` runs after
    every accepted step; ``interp(t)`` evaluates the step's interpolating
    polynomial anywhere in ``[t_old, t_new]``.
    """
    start = time.perf_counter()
    y0 = np.array(y0, dtype=float)
    n = y0.size
    bw = n - 1 if bandwidth is None else min(bandwidth, n - 1)
    rtol, atol = cfg.rtol, cfg.atol
    t_end = cfg.t_end
    trace = IntegrationTrace()
    newton_tol = max(10 * EPS / rtol, min(0.03, rtol ** 0.5))
    maxiter = cfg.max_newton_iters
    norm, weights = _error_measure(cfg.error_norm, rtol, atol)

    out_times = np.asarray(cfg.output_times, dtype=float)
    out_y = np.empty((out_times.size, n))
    samp_times = np.asarray([] if sample_times is None else sample_times, dtype=float)
    samples = []
    i_out = i_samp = 0

    def emit(t_old, t_new, h, order, D, final=False):
        nonlocal i_out, i_samp
        while i_out < out_times.size and (out_times[i_out] <= t_new or final):
            tt = out_times[i_out]
            out_y[i_out] = y0 if tt == t0 else (D[0].copy() if tt == t_new else _interpolate(tt, t_new, h, order, D))
            i_out += 1
        while i_samp < samp_times.size and (samp_times[i_samp] <= t_new or final):
            tt = samp_times[i_samp]
            yy = y0 if tt == t0 else (D[0].copy() if tt == t_new else _interpolate(tt, t_new, h, order, D))
            samples.append(sampler(tt, yy) if sampler is not None else yy)
            i_samp += 1

    def fun(t, y):
        trace.rhs_evals += 1
        return rhs(t, y)

    if guard is not None and not guard(y0):
        raise InvalidParameterError("initial state rejected by guard")
    f0 = fun(t0, y0)
    emit(t0, t0, 1.0, 1, np.vstack([y0[None], np.zeros((1, n))]))
    t = t0
    if t_end <= t0:
        return Solution(out_times, out_y, trace, samples, samp_times)

    h_abs = cfg.initial_step or _initial_step(fun, t0, y0, f0, rtol, atol)
    h_abs = min(h_abs, cfg.max_step, t_end - t0)

    def jacobian(tt, yy, ff=None):
        trace.jac_evals += 1
        jac, nev = fd_jacobian(rhs, tt, yy, ff, bw, block=block)
        trace.rhs_evals += nev
        return jac

    J = jacobian(t0, y0, f0)
    factors = None
    D = np.zeros((MAX_ORDER + 3, n))
    D[0] = y0
    D[1] = f0 * h_abs
    order = 1
    n_equal = 0

    for _ in range(cfg.max_steps):
        if t >= t_end:
            break
        min_step = 10 * abs(np.nextafter(t, np.inf) - t)
        if h_abs > cfg.max_step:
            _rescale_differences(D, order, cfg.max_step / h_abs)
            h_abs = cfg.max_step
            n_equal = 0
            factors = None
        current_jac = False
        while True:
            if h_abs < min_step:
                trace.wall_time = time.perf_counter() - start
                raise StiffFailure("step size underflow", t=t)
            t_new = t + h_abs
            if t_new >= t_end or t_end - t_new < min_step:
                t_new = t_end
                _rescale_differences(D, order, (t_new - t) / h_abs)
                n_equal = 0
                factors = None
            h = t_new - t
            h_abs = h

            y_pred = D[: order + 1].sum(axis=0)
            scale = weights(y_pred)
            psi = D[1: order + 1].T.dot(_GAMMA[1: order + 1]) / _ALPHA[order]
            c = h / _ALPHA[order]

            converged = False
            guard_hit = False
            while not converged:
                if factors is None:
                    factors = J.factor(c)
                    trace.lu_factorizations += 1
                converged, n_iter, y_new, d, guard_hit = _newton(
                    fun, t_new, y_pred, c, psi, J, factors, scale, newton_tol, maxiter, guard, norm)
                trace.newton_iters += n_iter
                if converged or current_jac or guard_hit:
                    break
                if guard is not None and not guard(y_pred):
                    break
                try:
                    J_new = jacobian(t_new, y_pred)
                except ArithmeticError:
                    break
                J = J_new
                factors = None
                current_jac = True

            if converged and guard is not None and not guard(y_new):
                converged = False
                guard_hit = True

            if not converged:
                trace.rejected += 1
                if guard_hit:
                    trace.guard_rejections += 1
                else:
                    trace.newton_failures += 1
                h_abs *= 0.5
                _rescale_differences(D, order, 0.5)
                n_equal = 0
                factors = None
                if h_abs < min_step and not guard_hit:
                    trace.wall_time = time.perf_counter() - start
                    raise NonlinearFailure("Newton iteration failed to converge", t=t)
                continue

            safety = 0.9 * (2 * maxiter + 1) / (2 * maxiter + n_iter)
            scale = weights(y_new)
            error_norm = norm(_ERROR_CONST[order] * d / scale)
            if error_norm > 1:
                trace.rejected += 1
                factor = max(MIN_FACTOR, safety * error_norm ** (-1.0 / (order + 1)))
                h_abs *= factor
                _rescale_differences(D, order, factor)
                n_equal = 0
                continue
            break

        trace.accepted += 1
        n_equal += 1
        t_old, t = t, t_new
        D[order + 2] = d - D[order + 1]
        D[order + 1] = d
        for i in reversed(range(order + 1)):
            D[i] += D[i + 1]
        emit(t_old, t, h, order, D)
        if step_hook is not None:
            Dk = D[: order + 1].copy()
            step_hook(t_old, t, lambda tt, _t=t, _h=h, _k=order, _D=Dk: _interpolate(tt, _t, _h, _k, _D))

        if n_equal < order + 1:
            continue
        err_m = norm(_ERROR_CONST[order - 1] * D[order] / scale) if order > 1 else np.inf
        err_p = norm(_ERROR_CONST[order + 1] * D[order + 2] / scale) if order < MAX_ORDER else np.inf
        norms = np.array([err_m, error_norm, err_p])
        with np.errstate(divide="ignore"):
            factors_o = norms ** (-1.0 / np.arange(order, order + 3))
        order += int(np.argmax(factors_o)) - 1
        factor = min(MAX_FACTOR, safety * float(np.max(factors_o)))
        h_abs *= factor
        _rescale_differences(D, order, factor)
        n_equal = 0
        factors = None
    else:
        trace.wall_time = time.perf_counter() - start
        raise StiffFailure(f"exceeded {cfg.max_steps} steps", t=t)

    emit(t, t, h_abs, order, D, final=True)
    trace.final_order = order
    trace.wall_time = time.perf_counter() - start
    return Solution(out_times, out_y, trace, samples, samp_times)


def _newton(fun, t_new, y_pred, c, psi, J, factors, scale, tol, maxiter, guard, norm=_rms):
    d = np.zeros_like(y_pred)
    y = y_pred.copy()
    dy_norm_old = None
    for k in range(maxiter):
        if guard is not None and not guard(y):
            return False, k + 1, y, d, True
        try:
            f = fun(t_new, y)
        except ArithmeticError:
            break
        if not np.all(np.isfinite(f)):
            break
        dy = J.solve(factors, c * f - psi - d)
        dy_norm = norm(dy / scale)
        rate = None if dy_norm_old is None else dy_norm / dy_norm_old
        if rate is not None and (rate >= 1 or rate ** (maxiter - k) / (1 - rate) * dy_norm > tol):
            break
        y += dy
        d += dy
        if dy_norm == 0 or (rate is not None and rate / (1 - rate) * dy_norm < tol):
            return True, k + 1, y, d, False
        dy_norm_old = dy_norm
    return False, k + 1, y, d, False
