"""Flat ``key=value`` configuration files and campaign descriptions.

A config file holds one parameter per line, ``#`` starts a comment and keys
are :class:`ParameterSet` field names.  A campaign file groups such lines
into ``[scenario <id>]`` sections, optionally preceded by a ``[campaign]``
section with campaign-wide settings.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, InvalidParameterError
from .parameters import (
    MixtureSpec,
    ParameterSet,
    derive_cmix,
    derive_initial_concentrations,
)

PARAM_KEYS = ParameterSet.field_names()
RUN_KEYS = ("preset", "grid", "t_end", "rtol", "atol", "sealed")
SETTING_KEYS = ("grid", "t_end", "rtol", "atol", "sealed")
CAMPAIGN_KEYS = ("name", "sweep_key", "workers")

_MIX_INPUTS = {
    "rho_cem", "R_wc", "R_ac", "rho_agg", "rho_w",
    "omega_alpha", "omega_beta", "f_alpha", "f_beta",
}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
_SECTION = re.compile(r"^\[\s*(campaign|scenario)(?:\s+([^\]\s]+))?\s*\]$")


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str, line: Optional[int] = None):
    """Typed value for a parameter or run-setting key."""
    if key not in PARAM_KEYS and key not in SETTING_KEYS:
        raise ConfigError("unknown key", key=key, line=line)
    try:
        if key == "grid":
            return int(text)
        if key == "sealed" or (key in PARAM_KEYS and ParameterSet.field_type(key) is bool):
            return parse_bool(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r}", key=key, line=line) from None


def _split(line: str, lineno: int) -> Optional[tuple[str, str]]:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    if "=" not in body:
        raise ConfigError("expected key=value", line=lineno)
    key, value = (part.strip() for part in body.split("=", 1))
    if not key or not value:
        raise ConfigError("expected key=value", key=key or None, line=lineno)
    return key, value


def parse_config(text: str) -> dict:
    """Overrides from config text; rejects unknown or repeated keys.

    The result may mix parameter keys with run settings (grid, t_end, rtol,
    atol, sealed); :func:`split_settings` separates them.
    """
    out, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        kv = _split(line, lineno)
        if kv is None:
            continue
        key, value = kv
        if key in out:
            raise ConfigError(f"duplicate key (first on line {where[key]})", key=key, line=lineno)
        out[key] = parse_value(key, value, lineno)
        where[key] = lineno
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


def parse_assignment(text: str) -> tuple[str, object]:
    """Parse a command-line ``key=value`` override."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = (part.strip() for part in text.split("=", 1))
    return key, parse_value(key, value)


def split_settings(values: dict) -> tuple[dict, dict]:
    params = {k: v for k, v in values.items() if k not in SETTING_KEYS}
    settings = {k: v for k, v in values.items() if k in SETTING_KEYS}
    return params, settings


def apply_overrides(params: ParameterSet, changes: dict) -> ParameterSet:
    """Apply overrides, keeping dependent quantities consistent.

    Unless set explicitly in ``changes``: ``theta_r`` follows ``theta_min``
    when they were equal, ``theta_max`` follows ``phi0`` when they were equal,
    and the residual silicate concentrations are re-derived when a mixture
    input changes.
    """
    for key in changes:
        if key not in PARAM_KEYS:
            raise ConfigError("unknown key", key=key)
    values = dict(changes)
    if "theta_min" in values and "theta_r" not in values and params.theta_r == params.theta_min:
        values["theta_r"] = values["theta_min"]
    if "phi0" in values and "theta_max" not in values and params.theta_max == params.phi0:
        values["theta_max"] = values["phi0"]
    if _MIX_INPUTS & values.keys() and not {"C_alpha0", "C_beta0"} & values.keys():
        merged = {**params.as_dict(), **values}
        mix = MixtureSpec(**{k: merged[k] for k in (
            "rho_cem", "R_wc", "R_ac", "omega_alpha", "omega_beta", "omega_gamma",
            "f_alpha", "f_beta", "f_gamma")})
        cmix = derive_cmix(mix, merged["rho_w"], merged["rho_agg"])
        values["C_alpha0"], values["C_beta0"] = derive_initial_concentrations(mix, cmix)
    try:
        return params.replace(**values)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def dump_config(params: ParameterSet, settings: Optional[dict] = None) -> str:
    """Config text that reproduces ``params`` (and run settings) exactly when parsed."""
    lines = ["# rewet parameter set"]
    for key, value in params.as_dict().items():
        lines.append(f"{key}={format_value(value)}")
    if settings:
        lines.append("# run settings")
        for key in SETTING_KEYS:
            if settings.get(key) is not None:
                lines.append(f"{key}={format_value(settings[key])}")
    return "\n".join(lines) + "\n"


@dataclass
class ScenarioSpec:
    id: str
    line: int
    preset: str = "base"
    grid: Optional[int] = None
    t_end: Optional[float] = None
    rtol: Optional[float] = None
    atol: Optional[float] = None
    sealed: bool = False
    overrides: dict = field(default_factory=dict)


@dataclass
class CampaignSpec:
    name: str = "campaign"
    sweep_key: Optional[str] = None
    workers: int = 1
    scenarios: list = field(default_factory=list)


def parse_campaign(text: str) -> CampaignSpec:
    """Parse a campaign description.

    Example::

        [campaign]
        sweep_key = k_alpha

        [scenario ka0]
        k_alpha = 0
    """
    campaign = CampaignSpec()
    section = None
    current: Optional[ScenarioSpec] = None
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section == "scenario":
                sid = m.group(2)
                if not sid:
                    raise ConfigError("scenario section needs an id", line=lineno)
                if sid in seen:
                    raise ConfigError(f"duplicate scenario id {sid!r} (first on line {seen[sid]})", line=lineno)
                seen[sid] = lineno
                current = ScenarioSpec(id=sid, line=lineno)
                campaign.scenarios.append(current)
            else:
                if m.group(2):
                    raise ConfigError("campaign section takes no id", line=lineno)
                current = None
            continue
        if stripped.startswith("["):
            raise ConfigError(f"bad section header {stripped!r}", line=lineno)
        key, value = _split(line, lineno)
        if section is None:
            raise ConfigError("key outside of a section", key=key, line=lineno)
        if section == "campaign":
            if key not in CAMPAIGN_KEYS:
                raise ConfigError("unknown campaign key", key=key, line=lineno)
            try:
                if key == "workers":
                    campaign.workers = int(value)
                elif key == "sweep_key":
                    if value not in PARAM_KEYS:
                        raise ConfigError("sweep_key is not a parameter", key=value, line=lineno)
                    campaign.sweep_key = value
                else:
                    campaign.name = value
            except ValueError:
                raise ConfigError(f"bad value {value!r}", key=key, line=lineno) from None
            continue
        if key in RUN_KEYS:
            try:
                if key == "preset":
                    current.preset = value
                elif key == "grid":
                    current.grid = int(value)
                elif key == "sealed":
                    current.sealed = parse_bool(value)
                else:
                    setattr(current, key, float(value))
            except ValueError:
                raise ConfigError(f"bad value {value!r}", key=key, line=lineno) from None
        else:
            if key in current.overrides:
                raise ConfigError("duplicate key", key=key, line=lineno)
            current.overrides[key] = parse_value(key, value, lineno)
    return campaign


def load_campaign(path) -> CampaignSpec:
    return parse_campaign(Path(path).read_text())
