"""Chunked, reproducible ensemble averaging over trajectories.

Trajectories are partitioned into fixed-size chunks (independent of the
worker count), each trajectory draws from its own keyed random stream,
and chunk results are reduced in index order, so the ensemble output is
a pure function of (model, config, N) whatever the parallelism.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import expectation, normalize
from .jump import JumpConfig, _get_branch_table, run_trajectory
from .lindblad import LindbladModel, StepSizeError
from .rng import trajectory_rng

CHUNK = 256
RNG_BLOCK = 4096
DP_WARN = 0.1
DP_ERROR = 0.5


@dataclass
class EnsembleResult:
    t_grid: np.ndarray
    n_traj: int
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    jump_counts: np.ndarray
    max_dp: float = 0.0
    records: list | None = None


def _chunk_ranges(n_traj: int):
    return [(lo, min(lo + CHUNK, n_traj)) for lo in range(0, n_traj, CHUNK)]


def _sample_steps(t_grid: np.ndarray, dt: float) -> np.ndarray:
    steps = np.rint(np.asarray(t_grid, dtype=float) / dt).astype(int)
    if np.abs(steps * dt - t_grid).max() > 1e-9 * max(dt, 1.0):
        raise ValueError("t_grid must lie on the dt lattice")
    return steps


def _rng_blocks(gens, n_steps):
    """Yield (start, (B, block) uniform array) blocks, one draw per step."""
    done = 0
    while done < n_steps:
        take = min(RNG_BLOCK, n_steps - done)
        yield done, np.stack([g.random(take) for g in gens])
        done += take


def _observe(psi: np.ndarray, ops: list[np.ndarray]) -> np.ndarray:
    """Rows of <psi_b|O|psi_b> for each O; psi (B, d) assumed normalized."""
    out = np.empty((psi.shape[0], len(ops)))
    for j, op in enumerate(ops):
        out[:, j] = np.einsum("bi,bi->b", psi.conj(), psi @ op.T).real
    return out


def _chunk_bernoulli(model, psi0, t_grid, config, obs_ops, indices, collect_records):
    """First-order jump/no-jump kernel, vectorized over a chunk."""
    dt = config.dt
    steps_at = _sample_steps(t_grid, dt)
    n_steps = int(steps_at[-1])
    sample_idx = {int(s): i for i, s in enumerate(steps_at)}
    b = len(indices)
    n_ch = model.n_channels
    u_t = np.ascontiguousarray(model.no_jump_propagator(dt).T)
    c_ts = [np.ascontiguousarray(c.T) for c in model.collapse_ops]

    gens = [trajectory_rng(config.seed, i) for i in indices]
    psi = np.tile(np.asarray(psi0, dtype=complex), (b, 1))
    samples = np.empty((b, t_grid.size, len(obs_ops)))
    if 0 in sample_idx:
        samples[:, sample_idx[0], :] = _observe(psi, obs_ops)
    jump_counts = np.zeros(b, dtype=int)
    events = [[] for _ in range(b)] if collect_records else None
    max_dp = 0.0

    k = 0
    for start, rblock in _rng_blocks(gens, n_steps):
        for j in range(rblock.shape[1]):
            k += 1
            r = rblock[:, j]
            if n_ch:
                # per-channel probability dt <C+C> = dt ||C psi||^2
                cpsi = [psi @ ct for ct in c_ts]
                per = dt * np.stack(
                    [np.einsum("bi,bi->b", cp.conj(), cp).real for cp in cpsi], axis=1
                )
                dp = per.sum(axis=1)
            else:
                per = np.zeros((b, 0))
                dp = np.zeros(b)
            step_max = float(dp.max()) if b else 0.0
            if step_max > DP_ERROR:
                raise StepSizeError(f"jump probability {step_max:.3f} > {DP_ERROR}; reduce dt")
            max_dp = max(max_dp, step_max)

            new = psi @ u_t
            norms = np.sqrt(np.einsum("bi,bi->b", new.conj(), new).real)
            new /= norms[:, None]

            jumpers = np.nonzero(r < dp)[0]
            if jumpers.size:
                cum = np.cumsum(per[jumpers], axis=1)
                ch = np.minimum((cum <= r[jumpers, None]).sum(axis=1), n_ch - 1)
                for m in np.unique(ch):
                    rows = jumpers[ch == m]
                    phi = cpsi[m][rows]
                    nn = np.sqrt(per[rows, m] / dt)
                    new[rows] = phi / nn[:, None]
                jump_counts[jumpers] += 1
                if collect_records:
                    for row, m in zip(jumpers, ch):
                        events[row].append((k * dt, int(m)))
            psi = new
            if k in sample_idx:
                samples[:, sample_idx[k], :] = _observe(psi, obs_ops)
    return samples, jump_counts, max_dp, events


def _chunk_minitraj(model, psi0, t_grid, config, obs_ops, indices, collect_records):
    """Higher-order kernel: vectorized no-jump test, scalar branch fallback."""
    dt = config.dt
    steps_at = _sample_steps(t_grid, dt)
    n_steps = int(steps_at[-1])
    sample_idx = {int(s): i for i, s in enumerate(steps_at)}
    b = len(indices)
    table = _get_branch_table(model, dt, config.order)
    u1_t = np.ascontiguousarray(model.no_jump_propagator(dt).T)

    gens = [trajectory_rng(config.seed, i) for i in indices]
    psi = np.tile(np.asarray(psi0, dtype=complex), (b, 1))
    samples = np.empty((b, t_grid.size, len(obs_ops)))
    if 0 in sample_idx:
        samples[:, sample_idx[0], :] = _observe(psi, obs_ops)
    jump_counts = np.zeros(b, dtype=int)
    events = [[] for _ in range(b)] if collect_records else None

    k = 0
    for start, rblock in _rng_blocks(gens, n_steps):
        for j in range(rblock.shape[1]):
            k += 1
            r = rblock[:, j]
            phi1 = psi @ u1_t
            p1 = np.einsum("bi,bi->b", phi1.conj(), phi1).real
            new = phi1 / np.sqrt(p1)[:, None]
            for row in np.nonzero(r >= p1)[0]:
                phi, branch = table.select(psi[row], r[row])
                phi, _ = normalize(phi)
                new[row] = phi
                _, _, chans, fracs = branch
                jump_counts[row] += len(chans)
                if collect_records:
                    for m, f in sorted(zip(chans, fracs), key=lambda x: x[1]):
                        events[row].append(((k - 1) * dt + f * dt, int(m)))
            psi = new
            if k in sample_idx:
                samples[:, sample_idx[k], :] = _observe(psi, obs_ops)
    return samples, jump_counts, 0.0, events


def _chunk_sequential(model, psi0, t_grid, config, observables, indices, collect_records):
    """Fallback: per-trajectory sequential runner (waiting-time method)."""
    names = list(observables)
    samples = np.empty((len(indices), len(t_grid), len(names)))
    jump_counts = np.zeros(len(indices), dtype=int)
    events = [] if collect_records else None
    for row, idx in enumerate(indices):
        rec = run_trajectory(model, psi0, t_grid, config, observables, traj_index=idx)
        for j, name in enumerate(names):
            samples[row, :, j] = rec.samples[name]
        jump_counts[row] = rec.jump_times.size
        if collect_records:
            events.append(list(zip(rec.jump_times, rec.jump_channels)))
    return samples, jump_counts, 0.0, events


def _run_chunk(args):
    model, psi0, t_grid, config, observables, lo, hi, collect_records = args
    indices = range(lo, hi)
    obs_ops = [np.ascontiguousarray(op) for op in observables.values()]
    if config.jump_method == "waiting-time":
        return _chunk_sequential(
            model, psi0, t_grid, config, observables, indices, collect_records
        )
    if config.order == "first":
        return _chunk_bernoulli(
            model, psi0, t_grid, config, obs_ops, indices, collect_records
        )
    return _chunk_minitraj(
        model, psi0, t_grid, config, obs_ops, indices, collect_records
    )


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("QTRAJ_THREADS", "1"))
    return max(1, threads)


def ensemble_average(
    model: LindbladModel,
    psi0: np.ndarray,
    t_grid,
    n_traj: int,
    config: JumpConfig,
    observables: dict[str, np.ndarray],
    threads: int | None = None,
    collect_records: bool = False,
) -> EnsembleResult:
    """Mean and standard error of observables over N seeded trajectories.

    Reduction runs in fixed chunk order; the worker count does not enter
    the arithmetic.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    t_grid = np.asarray(t_grid, dtype=float)
    threads = resolve_threads(threads)
    names = list(observables)
    tasks = [
        (model, psi0, t_grid, config, observables, lo, hi, collect_records)
        for lo, hi in _chunk_ranges(n_traj)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]

    acc = np.zeros((t_grid.size, len(names)))
    acc2 = np.zeros_like(acc)
    counts = []
    max_dp = 0.0
    records = [] if collect_records else None
    for samples, jump_counts, dp, events in results:
        acc += samples.sum(axis=0)
        acc2 += (samples * samples).sum(axis=0)
        counts.append(jump_counts)
        max_dp = max(max_dp, dp)
        if collect_records:
            records.extend(events)

    if max_dp > DP_WARN:
        warnings.warn(
            f"max per-step jump probability {max_dp:.3f} > {DP_WARN}; dt is coarse",
            stacklevel=2,
        )
    mean = acc / n_traj
    if n_traj > 1:
        var = np.clip(acc2 - acc * acc / n_traj, 0.0, None) / (n_traj * (n_traj - 1))
        stderr = np.sqrt(var)
    else:
        stderr = np.zeros_like(mean)
    return EnsembleResult(
        t_grid=t_grid,
        n_traj=n_traj,
        mean={name: mean[:, j].copy() for j, name in enumerate(names)},
        stderr={name: stderr[:, j].copy() for j, name in enumerate(names)},
        jump_counts=np.concatenate(counts) if counts else np.zeros(0, int),
        max_dp=max_dp,
        records=records,
    )
