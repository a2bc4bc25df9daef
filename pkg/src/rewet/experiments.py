"""Scenario harness: single runs, one-factor sweeps, mixtures, grid refinement."""
from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import constitutive as cv
from .diagnostics import (
    BalanceTracker,
    ConvergenceReport,
    FitResult,
    FrontTrajectory,
    conservation_audit,
    grid_error,
    locate_front,
    sqrt_time_fit,
)
from .discretization import BANDWIDTH, NVAR, THETA, Grid, Model, unpack
from .errors import InsufficientDataError, InvalidParameterError, RewetError, SolverError
from .integrator import IntegrationTrace, IntegratorConfig, integrate
from .parameters import MIXTURES, ParameterSet, preset
from .config import apply_overrides

log = logging.getLogger(__name__)

N_FRONT_SAMPLES = 281


@dataclass
class Scenario:
    id: str
    params: ParameterSet
    N: int = 100
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    overrides: tuple = ()
    sealed: bool = False
    param_value: Optional[float] = None
    is_reference: bool = False
    y0: Optional[np.ndarray] = None  # start state; defaults to the uniform cured state


@dataclass
class ScenarioResult:
    id: str
    params: ParameterSet
    grid: Grid
    t: np.ndarray
    theta: np.ndarray  # (n_times, N)
    C: np.ndarray  # (4, n_times, N): alpha, beta, q, gel
    front: FrontTrajectory
    fit: Optional[FitResult]
    audit: dict
    trace: IntegrationTrace
    runtime: float
    param_value: Optional[float] = None
    is_reference: bool = False
    final_state: Optional[np.ndarray] = None

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    @property
    def phi(self) -> np.ndarray:
        return cv.porosity(self.C[3], self.params)

    @property
    def s_final(self) -> float:
        return self.front.final

    def summary(self) -> dict:
        fit = self.fit
        return {
            "scenario": self.id,
            "N": self.grid.N,
            "s_final_cm": self.s_final,
            "s_half_cm": self.front.at(self.t[-1] / 2),
            "theta_min_final": float(self.theta[-1].min()),
            "phi_min_final": float(self.phi[-1].min()),
            "C_g_max_final": float(self.C[3][-1].max()),
            "fit_slope": None if fit is None else fit.slope,
            "fit_intercept": None if fit is None else fit.intercept,
            "fit_r2": None if fit is None else fit.r2,
            "fit_samples": None if fit is None else fit.n,
            "fit_excluded": None if fit is None else fit.excluded,
            "audit": self.audit,
            "trace": self.trace.as_dict(),
        }


def _front_sampler(params: ParameterSet, grid: Grid):
    def sample(t, y):
        return locate_front(np.asarray(y)[THETA::5], grid, params)
    return sample


def run_scenario(s: Scenario) -> ScenarioResult:
    """Integrate one scenario and post-process it."""
    start = time.perf_counter()
    p = s.params
    grid = Grid(s.N, p.L)
    model = Model(p, grid, sealed=s.sealed)
    tracker = BalanceTracker(model)
    floor = 0.5 * p.theta_min
    front_times = np.linspace(0.0, s.cfg.t_end, N_FRONT_SAMPLES)
    y0 = model.y0() if s.y0 is None else np.array(s.y0, dtype=float)
    if y0.shape != (grid.size,):
        raise InvalidParameterError(f"initial state has shape {y0.shape}, expected ({grid.size},)")
    try:
        sol = integrate(
            model, y0, s.cfg,
            bandwidth=BANDWIDTH,
            block=NVAR,
            guard=lambda y: bool(y[THETA::5].min() > floor),
            sample_times=front_times,
            sampler=_front_sampler(p, grid),
            step_hook=tracker,
        )
    except SolverError as exc:
        raise type(exc)(f"scenario {s.id!r}: {exc}") from exc
    nt = sol.t.size
    theta = np.empty((nt, grid.N))
    C = np.empty((4, nt, grid.N))
    for k in range(nt):
        th, c = unpack(sol.y[k], grid.N)
        theta[k] = th
        C[:, k] = c
    front = FrontTrajectory(front_times, np.array(sol.samples))
    try:
        fit = sqrt_time_fit(front, L=p.L)
    except InsufficientDataError:
        fit = None
    audit = conservation_audit(np.vstack([y0, sol.y[-1]]), p, grid, tracker)
    return ScenarioResult(
        id=s.id, params=p, grid=grid, t=sol.t, theta=theta, C=C, front=front, fit=fit,
        audit=audit, trace=sol.trace, runtime=time.perf_counter() - start,
        param_value=s.param_value, is_reference=s.is_reference, final_state=sol.y[-1].copy(),
    )


@dataclass
class CampaignResult:
    results: dict
    failures: dict
    order: list

    def __iter__(self):
        return (self.results[i] for i in self.order if i in self.results)

    def __getitem__(self, key) -> ScenarioResult:
        return self.results[key]


def _run_safely(s: Scenario):
    try:
        return s.id, run_scenario(s), None
    except (RewetError, ArithmeticError, ValueError) as exc:
        return s.id, None, f"{type(exc).__name__}: {exc}"


def run_campaign(scenarios: Sequence[Scenario], workers: int = 1) -> CampaignResult:
    """Run scenarios, isolating failures.  Results are keyed by scenario id."""
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise InvalidParameterError("scenario ids must be unique within a campaign")
    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_safely, scenarios))
    else:
        outcomes = [_run_safely(s) for s in scenarios]
    results, failures = {}, {}
    for sid, res, err in outcomes:
        if err is None:
            results[sid] = res
        else:
            log.warning("scenario %s failed: %s", sid, err)
            failures[sid] = err
    return CampaignResult(results, failures, ids)


def _fmt(v: float) -> str:
    return format(v, "g")


def sweep_scenarios(base: Scenario, keys: Union[str, Sequence[str]],
                    factors: Optional[Iterable[float]] = None,
                    values: Optional[Iterable[float]] = None) -> list[Scenario]:
    """One-factor variations of ``base``; the unmodified base is always included.

    ``factors`` scale the base value(s) of every key in ``keys`` together;
    ``values`` set a single key directly.
    """
    keys = (keys,) if isinstance(keys, str) else tuple(keys)
    if (factors is None) == (values is None):
        raise InvalidParameterError("give exactly one of factors or values")
    if values is not None and len(keys) != 1:
        raise InvalidParameterError("values sweeps take a single key")
    points = list(factors if factors is not None else values)
    ref = 1.0 if factors is not None else getattr(base.params, keys[0])
    if ref not in points:
        points.append(ref)
    points = sorted(set(points))
    if len(points) < 2:
        raise InvalidParameterError("a sweep needs at least two points")
    label = "+".join(keys)
    out = []
    for v in points:
        if factors is not None:
            changes = {k: getattr(base.params, k) * v for k in keys}
            sid = f"{label}x{_fmt(v)}"
        else:
            changes = {keys[0]: v}
            sid = f"{label}={_fmt(v)}"
        params = apply_overrides(base.params, changes)
        out.append(Scenario(
            id=sid, params=params, N=base.N, cfg=base.cfg,
            overrides=tuple(changes.items()), sealed=base.sealed,
            param_value=float(v), is_reference=(v == ref),
        ))
    return out


def sweep(base: Scenario, keys, factors=None, values=None, workers: int = 1) -> CampaignResult:
    return run_campaign(sweep_scenarios(base, keys, factors, values), workers)


def base_scenario(name: str = "base", N: int = 100, cfg: Optional[IntegratorConfig] = None) -> Scenario:
    return Scenario(id=name, params=preset(name), N=N, cfg=cfg or IntegratorConfig())


# Sweep definitions reproducing the sensitivity studies.
STUDIES = {
    "k_alpha": dict(keys="k_alpha", factors=[0.0, 0.1, 1.0, 10.0]),
    "k_beta": dict(keys="k_beta", factors=[0.0, 0.1, 1.0, 10.0]),
    "k_prec": dict(keys="k_prec", values=[0.0, 3.22, 32.2, 322.0]),
    "k_diss": dict(keys="k_diss", values=[0.0, 1.0, 10.0]),
    "diffusivity": dict(keys=("D_alpha", "D_beta", "D_q"), factors=[1e-2, 1e-1, 1.0, 1e1, 1e2]),
    "rho_agg": dict(keys="rho_agg", values=[2.4, 2.5, 2.6, 2.7, 2.8]),
}


def study_scenarios(name: str, N: int = 100, cfg: Optional[IntegratorConfig] = None) -> list[Scenario]:
    if name == "mixtures":
        return mixture_scenarios(N, cfg)
    if name not in STUDIES:
        raise InvalidParameterError(f"unknown study {name!r}; choose from {', '.join(list(STUDIES) + ['mixtures'])}")
    return sweep_scenarios(base_scenario("base", N, cfg), **STUDIES[name])


def mixture_scenarios(N: int = 100, cfg: Optional[IntegratorConfig] = None) -> list[Scenario]:
    cfg = cfg or IntegratorConfig()
    out = []
    for name in MIXTURES:
        p = preset(name)
        out.append(Scenario(id=name, params=p, N=N, cfg=cfg, param_value=p.phi0,
                            is_reference=(name == "mixture3")))
    return out


def mixture_study(N: int = 100, cfg: Optional[IntegratorConfig] = None, workers: int = 1) -> CampaignResult:
    return run_campaign(mixture_scenarios(N, cfg), workers)


REFINEMENT_GRIDS = (25, 50, 100, 200, 400, 800)


def refinement_study(Ns: Sequence[int] = REFINEMENT_GRIDS, params: Optional[ParameterSet] = None,
                     cfg: Optional[IntegratorConfig] = None, field_index: int = 2,
                     workers: int = 1) -> tuple[ConvergenceReport, CampaignResult]:
    """Errors of the final aqueous C-S-H profile against the finest grid.

    ``field_index`` picks the concentration row (0 alpha, 1 beta, 2 aqueous
    C-S-H, 3 gel).  Any failed run aborts the study.
    """
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise InvalidParameterError("grid sizes must be strictly increasing")
    finest = Ns[-1]
    if any(finest % n for n in Ns):
        raise InvalidParameterError("every grid must nest in the finest one")
    params = params or preset("base")
    cfg = cfg or IntegratorConfig()
    end_cfg = dataclasses.replace(cfg, output_times=[cfg.t_end])
    scenarios = [Scenario(id=f"N{n}", params=params, N=n, cfg=end_cfg) for n in Ns]
    campaign = run_campaign(scenarios, workers)
    if campaign.failures:
        sid, err = next(iter(campaign.failures.items()))
        raise SolverError(f"refinement run {sid} failed: {err}")
    fine = campaign[f"N{finest}"].C[field_index][-1]
    errors = [grid_error(campaign[f"N{n}"].C[field_index][-1], fine, params.L) for n in Ns]
    return ConvergenceReport.from_errors(Ns, errors), campaign
