"""Command-line entry point: ``rewet run|sweep|refine|presets``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure,
4 file-system error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .config import (
    SETTING_KEYS,
    apply_overrides,
    dump_config,
    load_campaign,
    load_config,
    parse_assignment,
    split_settings,
)
from .errors import ConfigError, InvalidParameterError, SolverError, UnknownPresetError
from .experiments import (
    REFINEMENT_GRIDS,
    STUDIES,
    Scenario,
    refinement_study,
    run_campaign,
    run_scenario,
    study_scenarios,
)
from .integrator import IntegratorConfig
from .output import atomic_write, write_campaign, write_convergence, write_run
from .parameters import PRESET_NAMES, preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

log = logging.getLogger("rewet")


class UsageError(Exception):
    pass


def _add_run_options(p: argparse.ArgumentParser, with_grid: bool = True) -> None:
    p.add_argument("--preset", default="base", help=f"starting parameter set ({', '.join(PRESET_NAMES)})")
    p.add_argument("--config", type=Path, help="key=value file applied on top of the preset")
    p.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                   help="override one key; repeatable, applied last")
    if with_grid:
        p.add_argument("--grid", type=int, help="number of cells (default 100)")
    p.add_argument("--t-end", dest="t_end", type=float, help="end time in days (default 28)")
    p.add_argument("--rtol", type=float, help="relative tolerance (default 1e-8)")
    p.add_argument("--atol", type=float, help="absolute tolerance (default 1e-8)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rewet", description="Re-wetting and gel clogging simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    _add_run_options(run)
    run.add_argument("--sealed", action="store_true", help="no-flux boundaries at both ends")
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    run.add_argument("--dump-config", dest="dump_config", metavar="FILE",
                     help="write the resolved configuration ('-' for stdout) and exit")

    sw = sub.add_parser("sweep", help="run a campaign of scenarios")
    src = sw.add_mutually_exclusive_group(required=True)
    src.add_argument("campaign", nargs="?", type=Path, help="campaign file with [scenario <id>] sections")
    src.add_argument("--study", choices=sorted(list(STUDIES) + ["mixtures"]), help="built-in sensitivity study")
    sw.add_argument("--out", type=Path, default=Path("out"))
    sw.add_argument("--grid", type=int, help="default number of cells")
    sw.add_argument("--t-end", dest="t_end", type=float)
    sw.add_argument("--rtol", type=float)
    sw.add_argument("--atol", type=float)
    sw.add_argument("--workers", type=int, help="parallel worker processes")

    ref = sub.add_parser("refine", help="grid refinement study")
    _add_run_options(ref, with_grid=False)
    ref.add_argument("--grids", type=int, nargs="+", default=list(REFINEMENT_GRIDS))
    ref.add_argument("--workers", type=int, default=1)
    ref.add_argument("--out", type=Path, default=Path("out"))

    sub.add_parser("presets", help="list the built-in parameter sets")
    return parser


def _integrator_config(t_end=None, rtol=None, atol=None) -> IntegratorConfig:
    kw = {k: v for k, v in (("t_end", t_end), ("rtol", rtol), ("atol", atol)) if v is not None}
    return IntegratorConfig(**kw)


def resolve(args) -> tuple:
    """Merge preset, config file, --set overrides and flags.

    Returns the parameter set and the run settings (grid, t_end, rtol, atol,
    sealed) with later sources taking precedence.
    """
    params = preset(args.preset)
    settings = {"grid": 100, "t_end": None, "rtol": None, "atol": None, "sealed": False}
    layers = []
    if args.config is not None:
        layers.append(load_config(args.config))
    sets = {}
    for text in args.assignments:
        key, value = parse_assignment(text)
        sets[key] = value
    layers.append(sets)
    for layer in layers:
        changes, run_settings = split_settings(layer)
        params = apply_overrides(params, changes)
        settings.update(run_settings)
    for key in SETTING_KEYS:
        value = getattr(args, key, None)
        if value not in (None, False):
            settings[key] = value
    return params, settings


def cmd_run(args) -> int:
    params, settings = resolve(args)
    if args.dump_config:
        text = dump_config(params, settings)
        if args.dump_config == "-":
            sys.stdout.write(text)
        else:
            atomic_write(args.dump_config, text)
        return EXIT_OK
    cfg = _integrator_config(settings["t_end"], settings["rtol"], settings["atol"])
    scenario = Scenario(id=args.preset, params=params, N=int(settings["grid"]), cfg=cfg,
                        sealed=bool(settings["sealed"]))
    result = run_scenario(scenario)
    write_run(result, args.out)
    s = result.summary()
    print(f"s_final = {s['s_final_cm']:.4f} cm, theta_min = {s['theta_min_final']:.5f}, "
          f"phi_min = {s['phi_min_final']:.5f}; wrote {args.out}")
    return EXIT_OK


def _campaign_scenarios(args) -> tuple[str, list, int]:
    if args.study:
        cfg = _integrator_config(args.t_end, args.rtol, args.atol)
        return args.study, study_scenarios(args.study, N=args.grid or 100, cfg=cfg), args.workers or 1
    campaign_def = load_campaign(args.campaign)
    if not campaign_def.scenarios:
        raise UsageError(f"campaign {args.campaign} defines no scenarios")
    scenarios = []
    for sc in campaign_def.scenarios:
        try:
            params = apply_overrides(preset(sc.preset), sc.overrides)
        except (ConfigError, UnknownPresetError) as exc:
            raise ConfigError(f"scenario {sc.id!r}: {exc}", line=sc.line) from exc
        cfg = _integrator_config(
            sc.t_end if sc.t_end is not None else args.t_end,
            sc.rtol if sc.rtol is not None else args.rtol,
            sc.atol if sc.atol is not None else args.atol,
        )
        value = getattr(params, campaign_def.sweep_key) if campaign_def.sweep_key else None
        scenarios.append(Scenario(
            id=sc.id, params=params, N=sc.grid or args.grid or 100, cfg=cfg,
            overrides=tuple(sc.overrides.items()), sealed=sc.sealed,
            param_value=value, is_reference=not sc.overrides and sc.preset == "base",
        ))
    return campaign_def.name, scenarios, args.workers or campaign_def.workers


def cmd_sweep(args) -> int:
    name, scenarios, workers = _campaign_scenarios(args)
    campaign = run_campaign(scenarios, workers=workers)
    write_campaign(campaign, args.out, name=name)
    for r in campaign:
        mark = "*" if r.is_reference else " "
        print(f"{mark} {r.id:<24s} s_final = {r.s_final:.4f} cm")
    for sid, err in campaign.failures.items():
        print(f"! {sid:<24s} FAILED: {err}", file=sys.stderr)
    return EXIT_SOLVER if campaign.failures else EXIT_OK


def cmd_refine(args) -> int:
    params, settings = resolve(args)
    cfg = _integrator_config(settings["t_end"], settings["rtol"], settings["atol"])
    start = time.perf_counter()
    report, _ = refinement_study(args.grids, params=params, cfg=cfg, workers=args.workers)
    write_convergence(report, args.out, runtime=time.perf_counter() - start)
    for n, e, o in zip(report.Ns, report.errors, report.orders):
        print(f"N={n:<5d} error={e:.3e} order={'--' if o is None else f'{o:.2f}'}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        p = preset(name)
        print(f"{name:<20s} phi0={p.phi0:<6g} theta_max={p.theta_max:<6g} "
              f"C_alpha0={p.C_alpha0:.5g} C_beta0={p.C_beta0:.5g} k_alpha={p.k_alpha:g} "
              f"k_prec={p.k_prec:g} coupling={'on' if p.porosity_coupling else 'off'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "refine": cmd_refine, "presets": cmd_presets}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidParameterError, UnknownPresetError, UsageError) as exc:
        print(f"rewet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"rewet: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"rewet: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
