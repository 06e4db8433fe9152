"""Scenario execution: dispatch a validated config to the simulation
modules and emit CSV curves plus a JSON summary.

CSV files carry full double precision (17 significant digits) and are
byte-identical across reruns and worker counts; the summary echoes the
effective config and holds derived analytics and timing.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, validity_warnings
from .diffusion import LocalOscillator, QsdConfig, homodyne_model, qsd_ensemble
from .ensemble import ensemble_average, resolve_threads
from .jump import JumpConfig, RenewalWaitingSampler
from .lindblad import master_evolve
from .models import (
    ModelSpec,
    VSystemParams,
    cascaded_cavities,
    cat_state_scenario,
    decaying_cavity,
    driven_tls,
    fock_superposition,
    jaynes_cummings,
    v_system,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDITY = 4


def build_spec(cfg: RunConfig) -> ModelSpec:
    p = cfg.parameters
    if cfg.scenario == "driven_tls":
        return driven_tls(p.get("omega", 5.0), p.get("delta", 0.0), p.get("gamma", 1.0))
    if cfg.scenario == "v_system":
        return v_system(
            VSystemParams(
                omega1=p.get("omega1", 2.0),
                omega2=p.get("omega2", 0.2),
                delta1=p.get("delta1", 0.0),
                delta2=p.get("delta2", 0.0),
                gamma11=p.get("gamma11", 1.0),
                gamma22=p.get("gamma22", 0.0),
            )
        )
    if cfg.scenario == "decaying_cavity":
        dim = p.get("dim", 16)
        levels = p.get("initial_fock_levels")
        psi0 = fock_superposition(dim, tuple(levels)) if levels else "vacuum"
        return decaying_cavity(p.get("gamma", 1.0), dim=dim, psi0=psi0)
    if cfg.scenario == "cat_state":
        spec, _ = cat_state_scenario(p.get("alpha", 2.0), p.get("dim"), p.get("gamma", 1.0))
        return spec
    if cfg.scenario == "jaynes_cummings":
        return jaynes_cummings(
            p.get("g", 100.0), p.get("gamma_cav", 1.0), p.get("delta", 0.0),
            p.get("dim"), p.get("alpha", 4.0),
        )
    if cfg.scenario == "cascaded_cavities":
        omega_b = p.get("omega_b", 0.0)
        h_b = omega_b * np.diag([0.0, 1.0]).astype(complex)
        return cascaded_cavities(p.get("kappa_a", 1.0), p.get("kappa_b", 1.0), None, h_b)
    raise ValueError(f"unknown scenario {cfg.scenario!r}")


def _csv_write(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(f"{col[i]:.17g}" for col in columns) + "\n")


def run_scenario(cfg: RunConfig, out_dir: Path, threads: int | None = None) -> dict:
    """Execute the config; returns the summary dict (also written to disk)."""
    start = time.time()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = build_spec(cfg)
    threads = resolve_threads(threads)
    warnings_list = validity_warnings(cfg)
    t_grid = np.linspace(0.0, cfg.t_max, cfg.sample_points)
    # align grid with the step lattice
    steps = np.rint(t_grid / cfg.dt)
    t_grid = steps * cfg.dt

    observables = spec.observables
    if cfg.observables:
        unknown = [k for k in cfg.observables if k not in spec.observables]
        if unknown:
            raise ValueError(
                f"unknown observables {unknown} for {cfg.scenario}; "
                f"available: {sorted(spec.observables)}"
            )
        observables = {k: spec.observables[k] for k in cfg.observables}

    summary: dict = {
        "config": cfg.echo(),
        "effective_seed": cfg.seed,
        "threads": threads,
        "warnings": warnings_list,
        "scenario_reset_notes": list(spec.reset_notes),
    }

    if cfg.method == "master":
        rho0 = np.outer(spec.psi0, spec.psi0.conj())
        rhos = master_evolve(spec.model, rho0, t_grid, dt=cfg.dt)
        cols = [t_grid]
        header = ["t"]
        for name, op in observables.items():
            cols.append(np.array([(op @ r).trace().real for r in rhos]))
            header.append(name)
        _csv_write(out_dir / f"{cfg.name}.csv", header, cols)
    elif cfg.method in ("jump", "jump2", "jump4"):
        order = {"jump": "first", "jump2": "second", "jump4": "fourth"}[cfg.method]
        jcfg = JumpConfig(dt=cfg.dt, order=order, seed=cfg.seed)
        res = ensemble_average(
            spec.model, spec.psi0, t_grid, cfg.trajectories, jcfg, observables, threads=threads
        )
        _write_ensemble(out_dir / f"{cfg.name}.csv", t_grid, res, observables)
        summary["mean_jumps_per_trajectory"] = float(res.jump_counts.mean())
        summary["max_step_jump_probability"] = res.max_dp
        if cfg.compare_master:
            summary["oracle_rms"] = _oracle_rms(spec, cfg, t_grid, res, observables)
            summary["oracle_rms_bound_3_over_sqrtN"] = 3.0 / np.sqrt(cfg.trajectories)
    elif cfg.method == "qsd":
        qcfg = QsdConfig(dt=cfg.dt, seed=cfg.seed)
        res = qsd_ensemble(
            spec.model, spec.psi0, t_grid, cfg.trajectories, qcfg, observables, threads=threads
        )
        _write_ensemble(out_dir / f"{cfg.name}.csv", t_grid, res, observables)
        if cfg.compare_master:
            summary["oracle_rms"] = _oracle_rms(spec, cfg, t_grid, res, observables)
    elif cfg.method == "homodyne":
        hspec = homodyne_model(spec, LocalOscillator(cfg.homodyne_alpha))
        jcfg = JumpConfig(dt=cfg.dt, seed=cfg.seed)
        res = ensemble_average(
            hspec.model, hspec.psi0, t_grid, cfg.trajectories, jcfg, observables, threads=threads
        )
        _write_ensemble(out_dir / f"{cfg.name}.csv", t_grid, res, observables)
        summary["mean_jumps_per_trajectory"] = float(res.jump_counts.mean())
        if cfg.compare_master:
            summary["oracle_rms"] = _oracle_rms(spec, cfg, t_grid, res, observables)
    else:
        raise ValueError(f"unhandled method {cfg.method}")

    for block, body in cfg.analysis.items():
        _run_analysis(block, body, cfg, spec, out_dir, summary, threads)

    summary["wall_time_s"] = time.time() - start
    with open(out_dir / f"{cfg.name}.summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return summary


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_ensemble(path, t_grid, res, observables):
    cols = [t_grid]
    header = ["t"]
    for name in observables:
        cols.append(res.mean[name])
        header.append(f"{name}_mean")
        cols.append(res.stderr[name])
        header.append(f"{name}_stderr")
    _csv_write(path, header, cols)


def _oracle_rms(spec, cfg, t_grid, res, observables):
    rho0 = np.outer(spec.psi0, spec.psi0.conj())
    rhos = master_evolve(spec.model, rho0, t_grid, dt=min(cfg.dt, 1e-3))
    out = {}
    for name, op in observables.items():
        oracle = np.array([(op @ r).trace().real for r in rhos])
        out[name] = float(np.sqrt(np.mean((res.mean[name] - oracle) ** 2)))
    return out


def _run_analysis(block, body, cfg, spec, out_dir, summary, threads):
    from . import photon
    from .analytic import tls_g2, tls_rho11_ss

    name = cfg.name
    if block == "delay":
        t_max = body.get("t_max", cfg.t_max)
        pts = body.get("points", 2001)
        grid = np.linspace(0.0, t_max, pts)
        curve = photon.delay_function(spec.model, spec.psi0, grid)
        i1 = photon.next_photon_density(curve)
        _csv_write(out_dir / f"{name}.delay.csv", ["t", "p0", "i1"], [grid, curve.p0, i1])
        summary["delay"] = {"p0_final": float(curve.p0[-1])}
    elif block == "periods":
        _analysis_periods(body, cfg, spec, out_dir, summary)
    elif block == "g2":
        tau_max = body.get("tau_max", 10.0)
        pts = body.get("points", 2001)
        grid = np.linspace(0.0, tau_max, pts)
        curve = photon.delay_function(spec.model, spec.psi0, grid)
        i1 = photon.next_photon_density(curve)
        rate = photon.any_photon_rate(i1, grid)
        rate_ss = float(rate[-1])
        g2 = photon.g2_from_rate(rate, rate_ss)
        cols = [grid, g2]
        header = ["tau", "g2"]
        if cfg.scenario == "driven_tls":
            ana = tls_g2(grid, cfg.parameters.get("omega", 5.0), cfg.parameters.get("gamma", 1.0))
            cols.append(ana)
            header.append("g2_analytic")
            summary["g2"] = {"max_error_vs_analytic": float(np.abs(g2 - ana).max())}
        _csv_write(out_dir / f"{name}.g2.csv", header, cols)
    elif block in ("spectrum", "conditional-spectrum"):
        _analysis_spectrum(block, body, cfg, spec, out_dir, summary)
    elif block == "mandel":
        _analysis_mandel(body, cfg, out_dir, summary)
    elif block == "counting":
        _analysis_counting(body, cfg, out_dir, summary)


def _analysis_periods(body, cfg, spec, out_dir, summary):
    from .photon import telegraph_summary, vsystem_periods

    if cfg.scenario != "v_system":
        raise ValueError("periods analysis requires the v_system scenario")
    params = spec.extras["params"]
    stats = vsystem_periods(params)
    t0 = body.get("t0", 10.0 / params.gamma11)
    target = body.get("min_dark_periods", 300)
    sampler = RenewalWaitingSampler(
        spec.model, spec.psi0, t_max=50.0 * stats.t_dark, dt=cfg.dt
    )
    from .rng import scenario_rng

    rng = scenario_rng(cfg.seed, 1)  # stream disjoint from trajectory indices
    times, t_now, darks = [], 0.0, 0
    while darks < target:
        w, _ = sampler.sample(rng)
        if w is None:
            t_now += sampler.t_max
            continue
        t_now += w
        times.append(t_now)
        if w > t0:
            darks += 1
    est = telegraph_summary(np.array(times), t0)
    summary["periods"] = {
        "t_dark_analytic": stats.t_dark,
        "t_bright_analytic": stats.t_bright,
        "t_dark_empirical": est["t_dark"],
        "t_bright_empirical": est["t_bright"],
        "dark_ratio": est["t_dark"] / stats.t_dark,
        "bright_ratio": est["t_bright"] / stats.t_bright,
        "n_dark": est["n_dark"],
        "t0": t0,
    }


def _analysis_spectrum(block, body, cfg, spec, out_dir, summary):
    from .spectra import GateConfig, conditional_spectrum, spectrum_estimate

    omega_max = body.get("omega_max", 10.0)
    pts = body.get("points", 81)
    grid = np.linspace(-omega_max, omega_max, pts)
    t_total = body.get("t_total", 100.0)
    t_settle = body.get("t_settle", 10.0)
    n_traj = body.get("trajectories", 200)
    dt = body.get("dt", cfg.dt)
    if block == "spectrum":
        curve = spectrum_estimate(
            spec.model, spec.psi0, grid, t_total, n_traj,
            seed=cfg.seed, dt=dt, t_settle=t_settle,
        )
        stem = "spectrum"
    else:
        gate = GateConfig(body.get("t0", 50.0))
        curve = conditional_spectrum(
            spec.model, gate, spec.psi0, grid, t_total, n_traj,
            seed=cfg.seed, dt=dt, t_settle=t_settle,
        )
        stem = "conditional_spectrum"
    _csv_write(
        out_dir / f"{cfg.name}.{stem}.csv",
        ["omega", "s_inelastic"],
        [grid, curve.values],
    )
    summary[stem] = {
        "resolution": curve.meta["resolution"],
        "window": curve.meta["window"],
        "coherent_weight": curve.meta["coherent_weight"],
    }


def _analysis_mandel(body, cfg, out_dir, summary):
    from .rates import EinsteinParams, mandel_q, mandel_q_asymptote, g2_rate_saturated, rate_steady_state, telegraph_estimates

    params = EinsteinParams(
        a1=body.get("a1", 10.0),
        a2=body.get("a2", 0.0),
        b1w1=body.get("b1w1", 100.0),
        b2w2=body.get("b2w2", 1.0),
    )
    tau_max = body.get("tau_max", 100.0)
    pts = body.get("points", 4001)
    grid = np.linspace(0.0, tau_max, pts)
    g11, _ = g2_rate_saturated(params, grid)
    i_mean = params.a1 * rate_steady_state(params).rho11
    q = mandel_q(g11, i_mean, grid)
    _csv_write(out_dir / f"{cfg.name}.mandel.csv", ["tau", "q"], [grid, q])
    t_b, t_d, _ = telegraph_estimates(params)
    summary["mandel"] = {
        "q_final": float(q[-1]),
        "asymptote_quoted": mandel_q_asymptote(t_b, t_d, i_mean),
    }


def _analysis_counting(body, cfg, out_dir, summary):
    from .rates import counting_distribution

    n_max = body.get("n_max", 50)
    n = np.arange(n_max + 1)
    w = counting_distribution(
        n,
        body.get("t_window", 1.0),
        body.get("mode", "two-state"),
        zero_excess=body.get("zero_excess", 1.0 / 3.0),
        rate=body.get("rate", 10.0),
        efficiency=body.get("efficiency", 1.0),
    )
    _csv_write(out_dir / f"{cfg.name}.counting.csv", ["n", "w"], [n.astype(float), w])
    summary["counting"] = {"w0": float(w[0]), "total": float(w.sum())}
