"""Run configuration: schema validation and scenario dispatch.

Configs are JSON objects with a versioned schema.  Unknown keys are
rejected with the path to the offending key; physical-invariant
violations name the violated rule.  All rates are expressed in units of
the scenario's reference decay constant (gamma or gamma11 = 1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

METHODS = ("master", "jump", "jump2", "jump4", "qsd", "homodyne")
ANALYSES = ("delay", "periods", "g2", "spectrum", "conditional-spectrum", "mandel", "counting")

_SCENARIO_PARAMS = {
    "driven_tls": {"omega", "delta", "gamma"},
    "v_system": {"omega1", "omega2", "delta1", "delta2", "gamma11", "gamma22"},
    "decaying_cavity": {"gamma", "dim", "initial_fock_levels"},
    "cat_state": {"alpha", "dim", "gamma"},
    "jaynes_cummings": {"g", "gamma_cav", "delta", "dim", "alpha"},
    "cascaded_cavities": {"kappa_a", "kappa_b", "omega_b"},
}

_TOP_KEYS = {
    "schema_version",
    "name",
    "scenario",
    "parameters",
    "method",
    "dt",
    "t_max",
    "sample_points",
    "trajectories",
    "seed",
    "observables",
    "analysis",
    "compare_master",
    "homodyne_alpha",
}

_ANALYSIS_KEYS = {
    "delay": {"t_max", "points"},
    "periods": {"t0", "min_dark_periods", "t_max"},
    "g2": {"tau_max", "points", "beta"},
    "spectrum": {"omega_max", "points", "t_total", "t_settle", "trajectories", "dt"},
    "conditional-spectrum": {"t0", "omega_max", "points", "t_total", "t_settle", "trajectories", "dt"},
    "mandel": {"tau_max", "points", "a1", "a2", "b1w1", "b2w2"},
    "counting": {"t_window", "n_max", "zero_excess", "rate", "efficiency", "mode"},
}


class ConfigError(ValueError):
    """Invalid configuration; message carries the key path."""


@dataclass
class RunConfig:
    name: str
    scenario: str
    parameters: dict
    method: str = "jump"
    dt: float = 1e-3
    t_max: float = 5.0
    sample_points: int = 101
    trajectories: int = 100
    seed: int = 0
    observables: list[str] = field(default_factory=list)
    analysis: dict = field(default_factory=dict)
    compare_master: bool = True
    homodyne_alpha: float = 0.0

    def echo(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "scenario": self.scenario,
            "parameters": self.parameters,
            "method": self.method,
            "dt": self.dt,
            "t_max": self.t_max,
            "sample_points": self.sample_points,
            "trajectories": self.trajectories,
            "seed": self.seed,
            "observables": self.observables,
            "analysis": self.analysis,
            "compare_master": self.compare_master,
            "homodyne_alpha": self.homodyne_alpha,
        }


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; errors name the offending key."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        _fail("$", "config must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        _fail("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    for key in raw:
        if key not in _TOP_KEYS:
            _fail(key, "unknown key")
    scenario = raw.get("scenario")
    if scenario not in _SCENARIO_PARAMS:
        _fail("scenario", f"unknown scenario {scenario!r}; choose from {sorted(_SCENARIO_PARAMS)}")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        _fail("parameters", "must be an object")
    allowed = _SCENARIO_PARAMS[scenario]
    for key in params:
        if key not in allowed:
            _fail(f"parameters.{key}", f"unknown parameter for {scenario}")
    method = raw.get("method", "jump")
    if method not in METHODS:
        _fail("method", f"must be one of {METHODS}")
    cfg = RunConfig(
        name=str(raw.get("name", scenario)),
        scenario=scenario,
        parameters=dict(params),
        method=method,
        dt=_positive(raw.get("dt", 1e-3), "dt"),
        t_max=_positive(raw.get("t_max", 5.0), "t_max"),
        sample_points=_positive_int(raw.get("sample_points", 101), "sample_points"),
        trajectories=_positive_int(raw.get("trajectories", 100), "trajectories"),
        seed=_nonneg_int(raw.get("seed", 0), "seed"),
        observables=list(raw.get("observables", [])),
        analysis=dict(raw.get("analysis", {})),
        compare_master=bool(raw.get("compare_master", True)),
        homodyne_alpha=_number(raw.get("homodyne_alpha", 0.0), "homodyne_alpha"),
    )
    _validate_analysis(cfg)
    _validate_physics(cfg)
    return cfg


def _number(value, path) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        _fail(path, f"expected a number, got {value!r}")


def _positive(value, path) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        _fail(path, f"expected a number, got {value!r}")
    if out <= 0:
        _fail(path, "must be positive")
    return out


def _positive_int(value, path) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        _fail(path, "must be a positive integer")
    return value


def _nonneg_int(value, path) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        _fail(path, "must be a non-negative integer")
    return value


def _validate_physics(cfg: RunConfig):
    p = cfg.parameters
    if cfg.scenario == "driven_tls":
        if p.get("gamma", 1.0) <= 0:
            _fail("parameters.gamma", "DetectorConfig/model invariant: gamma must be positive")
    if cfg.scenario == "v_system":
        if p.get("omega1", 0.0) <= 0:
            _fail("parameters.omega1", "VSystemParams invariant: omega1 must be positive")
        if p.get("gamma11", 1.0) <= 0:
            _fail("parameters.gamma11", "VSystemParams invariant: gamma11 must be positive")
        if p.get("omega2", 0.0) < 0 or p.get("gamma22", 0.0) < 0:
            _fail("parameters", "VSystemParams invariant: omega2, gamma22 must be non-negative")
    beta = cfg.analysis.get("g2", {}).get("beta")
    if beta is not None and not 0 <= beta <= 1:
        _fail("analysis.g2.beta", "DetectorConfig invariant: efficiency must lie in [0, 1]")
    eff = cfg.analysis.get("counting", {}).get("efficiency")
    if eff is not None and not 0 <= eff <= 1:
        _fail(
            "analysis.counting.efficiency",
            "DetectorConfig invariant: efficiency must lie in [0, 1]",
        )


def _validate_analysis(cfg: RunConfig):
    if not isinstance(cfg.analysis, dict):
        _fail("analysis", "must be an object")
    for block, body in cfg.analysis.items():
        if block not in ANALYSES:
            _fail(f"analysis.{block}", f"unknown analysis; choose from {ANALYSES}")
        if not isinstance(body, dict):
            _fail(f"analysis.{block}", "must be an object")
        allowed = _ANALYSIS_KEYS[block] | {"beta"}
        for key in body:
            if key not in allowed:
                _fail(f"analysis.{block}.{key}", "unknown key")
        if block in ("periods", "conditional-spectrum"):
            t0 = body.get("t0")
            if t0 is not None and t0 <= 0:
                _fail(f"analysis.{block}.t0", "threshold T0 must be positive")


def validity_warnings(cfg: RunConfig) -> list[str]:
    """Non-fatal physical-regime warnings (run proceeds flagged)."""
    out = []
    if cfg.scenario == "v_system":
        from .models import VSystemParams
        from .photon import validity_check

        params = VSystemParams(
            omega1=cfg.parameters.get("omega1", 2.0),
            omega2=cfg.parameters.get("omega2", 0.2),
            delta1=cfg.parameters.get("delta1", 0.0),
            delta2=cfg.parameters.get("delta2", 0.0),
            gamma11=cfg.parameters.get("gamma11", 1.0),
            gamma22=cfg.parameters.get("gamma22", 0.0),
        )
        ok, margins = validity_check(params)
        if not ok:
            out.append(
                "shelving validity violated: margins "
                f"(weak drive {margins[0]:.3g}, shelf decay {margins[1]:.3g}) exceed 0.1"
            )
    return out
