"""Quantum-state-diffusion trajectories and the finite local-oscillator
jump models whose large-amplitude limit produces them.

The diffusion equations are written with Lindblad operators L_m carrying
a factor-2 sandwich dissipator; against the package's canonical collapse
operators this means L_m = C_m / sqrt(2).  Complex noise convention:
independent real and imaginary Wiener parts, each of variance dt, so
M(dxi dxi*) = 2 dt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from concurrent.futures import ProcessPoolExecutor

from .core import SIGMA_01, expectation, normalize
from .ensemble import EnsembleResult, _chunk_ranges, _observe, resolve_threads
from .lindblad import LindbladModel
from .models import ModelSpec, driven_tls
from .rng import trajectory_rng

QSD_VARIANTS = ("normalized", "linear")
NOISE_BLOCK = 2048


@dataclass(frozen=True)
class QsdConfig:
    dt: float
    seed: int = 0
    variant: str = "normalized"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.variant not in QSD_VARIANTS:
            raise ValueError(f"variant must be one of {QSD_VARIANTS}")


@dataclass(frozen=True)
class LocalOscillator:
    """Field amplitude mixed into the detected output; detuning 0 = homodyne."""

    amplitude: complex
    detuning: float = 0.0


def wiener_sample(dt: float, rng, channels: int) -> np.ndarray:
    """Complex increments dxi_m: Re and Im independent N(0, dt) per channel."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    scale = np.sqrt(dt)
    return scale * (rng.standard_normal(channels) + 1j * rng.standard_normal(channels))


def _lindblad_ls(model: LindbladModel) -> list[np.ndarray]:
    return [c / np.sqrt(2.0) for c in model.collapse_ops]


def qsd_step(model: LindbladModel, psi: np.ndarray, dt: float, dxi: np.ndarray, variant: str = "normalized") -> np.ndarray:
    """One Euler-Maruyama step of the chosen diffusion equation.

    normalized: drift -i H_eff psi + sum_m (2<L_m^+> L_m - <L_m^+><L_m>) psi,
    noise sum_m (L_m - <L_m>) psi dxi_m, followed by renormalization.
    linear: drift -i H psi + sum_m (2<L_m^+> L_m - L_m^+L_m) psi, noise
    sum_m L_m psi dxi_m, no renormalization (norm is a diagnostic).
    """
    ls = _lindblad_ls(model)
    if variant == "normalized":
        dpsi = -1j * dt * (model.effective_hamiltonian @ psi)
        for lm, xi in zip(ls, dxi):
            ev = expectation(lm, psi)  # <L_m> for normalized psi
            dpsi += dt * (2.0 * np.conj(ev) * (lm @ psi) - np.conj(ev) * ev * psi)
            dpsi += (lm @ psi - ev * psi) * xi
        out, _ = normalize(psi + dpsi)
        return out
    if variant == "linear":
        nrm2 = np.vdot(psi, psi).real
        if nrm2 < 1e-24:
            raise FloatingPointError("linear-variant norm collapsed below 1e-12")
        dpsi = -1j * dt * (model.hamiltonian @ psi)
        for lm, xi in zip(ls, dxi):
            ev = expectation(lm, psi) / nrm2
            dpsi += dt * (2.0 * np.conj(ev) * (lm @ psi) - lm.conj().T @ (lm @ psi))
            dpsi += (lm @ psi) * xi
        return psi + dpsi
    raise ValueError(f"unknown variant {variant!r}")


def run_qsd_trajectory(
    model: LindbladModel,
    psi0: np.ndarray,
    t_grid,
    config: QsdConfig,
    observables: dict[str, np.ndarray],
    traj_index: int = 0,
):
    """Sequential single path; one complex increment per channel per step."""
    t_grid = np.asarray(t_grid, dtype=float)
    dt = config.dt
    steps_at = np.rint(t_grid / dt).astype(int)
    if np.abs(steps_at * dt - t_grid).max() > 1e-9 * max(dt, 1.0):
        raise ValueError("t_grid must lie on the dt lattice")
    rng = trajectory_rng(config.seed, traj_index)
    psi = np.asarray(psi0, dtype=complex).copy()
    samples = {name: np.empty(t_grid.size) for name in observables}
    sample_idx = {int(s): i for i, s in enumerate(steps_at)}
    if 0 in sample_idx:
        for name, op in observables.items():
            samples[name][0] = expectation(op, psi).real / max(np.vdot(psi, psi).real, 1e-300)
    # noise drawn in the same block layout as the ensemble kernel
    n_steps = int(steps_at[-1])
    n_ch = model.n_channels
    k = 0
    done = 0
    while done < n_steps:
        take = min(NOISE_BLOCK, n_steps - done)
        block = (
            rng.standard_normal((take, n_ch)) + 1j * rng.standard_normal((take, n_ch))
        ) * np.sqrt(dt)
        for j in range(take):
            k += 1
            psi = qsd_step(model, psi, dt, block[j], config.variant)
            if k in sample_idx:
                nrm2 = np.vdot(psi, psi).real
                for name, op in observables.items():
                    samples[name][sample_idx[k]] = expectation(op, psi).real / nrm2
        done += take
    return samples


def _qsd_chunk_task(args):
    return _qsd_chunk(*args)


def _qsd_chunk(model, psi0, t_grid, config, obs_ops, lo, hi):
    """Vectorized normalized-variant kernel over one chunk of paths."""
    dt = config.dt
    steps_at = np.rint(np.asarray(t_grid, float) / dt).astype(int)
    sample_idx = {int(s): i for i, s in enumerate(steps_at)}
    n_steps = int(steps_at[-1])
    b = hi - lo
    ls = [np.ascontiguousarray(l.T) for l in _lindblad_ls(model)]
    heff_t = np.ascontiguousarray(model.effective_hamiltonian.T)
    gens = [trajectory_rng(config.seed, i) for i in range(lo, hi)]
    psi = np.tile(np.asarray(psi0, complex), (b, 1))
    samples = np.empty((b, len(steps_at), len(obs_ops)))
    if 0 in sample_idx:
        samples[:, sample_idx[0], :] = _observe(psi, obs_ops)

    done = 0
    while done < n_steps:
        take = min(NOISE_BLOCK, n_steps - done)
        # per-path noise block: (b, take, channels) complex
        noise = np.stack(
            [
                (g.standard_normal((take, len(ls))) + 1j * g.standard_normal((take, len(ls))))
                for g in gens
            ]
        ) * np.sqrt(dt)
        for j in range(take):
            k = done + j + 1
            dpsi = -1j * dt * (psi @ heff_t)
            for m, lt in enumerate(ls):
                lpsi = psi @ lt
                ev = np.einsum("bi,bi->b", psi.conj(), lpsi)
                dpsi += dt * (2.0 * ev.conj()[:, None] * lpsi - (ev.conj() * ev)[:, None] * psi)
                dpsi += (lpsi - ev[:, None] * psi) * noise[:, j, m][:, None]
            psi = psi + dpsi
            nrm = np.sqrt(np.einsum("bi,bi->b", psi.conj(), psi).real)
            psi /= nrm[:, None]
            if k in sample_idx:
                samples[:, sample_idx[k], :] = _observe(psi, obs_ops)
        done += take
    return samples


def qsd_ensemble(
    model: LindbladModel,
    psi0: np.ndarray,
    t_grid,
    n_traj: int,
    config: QsdConfig,
    observables: dict[str, np.ndarray],
    threads: int | None = None,
) -> EnsembleResult:
    """Mean/stderr over normalized-variant diffusion paths (chunk-ordered)."""
    if config.variant != "normalized":
        raise ValueError("ensemble averaging is defined for the normalized variant")
    t_grid = np.asarray(t_grid, dtype=float)
    threads = resolve_threads(threads)
    names = list(observables)
    obs_ops = [np.ascontiguousarray(op) for op in observables.values()]
    tasks = [
        (model, psi0, t_grid, config, obs_ops, lo, hi) for lo, hi in _chunk_ranges(n_traj)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_qsd_chunk_task, tasks))
    else:
        chunks = [_qsd_chunk_task(t) for t in tasks]
    acc = np.zeros((t_grid.size, len(names)))
    acc2 = np.zeros_like(acc)
    for samples in chunks:
        acc += samples.sum(axis=0)
        acc2 += (samples * samples).sum(axis=0)
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
        jump_counts=np.zeros(n_traj, dtype=int),
    )


# --- homodyne: jump picture with a local-oscillator offset ----------------

def homodyne_model(tls_spec: ModelSpec, lo: LocalOscillator) -> ModelSpec:
    """Two-level jump model whose detector mixes in a local oscillator.

    The jump operator gains the constant offset, C' = sqrt(2 gamma)
    (|0><1| + alpha), and the Hamiltonian the compensating term
    i gamma (alpha sigma_+ - alpha* sigma_-), which leaves the ensemble
    master equation exactly invariant for every alpha.  At alpha = 0 the
    input spec is returned unchanged, so trajectories coincide bit for
    bit with the plain jump unraveling under a shared seed.
    """
    if lo.detuning != 0.0:
        raise ValueError("homodyne_model expects a zero-detuning local oscillator")
    if tls_spec.model.dim != 2 or tls_spec.model.n_channels != 1:
        raise ValueError("homodyne_model expects a single-channel two-level model")
    alpha = complex(lo.amplitude)
    if alpha == 0:
        return tls_spec
    gamma = tls_spec.parameters["gamma"]
    base = tls_spec.model
    s01 = np.asarray(SIGMA_01)
    s10 = s01.conj().T
    h = base.hamiltonian + 1j * gamma * (alpha * s10 - np.conj(alpha) * s01)
    c = np.sqrt(2.0 * gamma) * (s01 + alpha * np.eye(2, dtype=complex))
    model = LindbladModel(h, (c,), ("mixed output",))
    return ModelSpec(
        name="homodyne_tls",
        parameters={**tls_spec.parameters, "alpha": alpha},
        model=model,
        psi0=tls_spec.psi0,
        observables=tls_spec.observables,
        reset_notes=("detection applies |0><1| + alpha and renormalizes",),
        extras={"base": tls_spec},
    )


def homodyne_jump_probability(spec: ModelSpec, psi: np.ndarray, dt: float) -> float:
    """Per-step detection probability 2 gamma (<sigma_11> + alpha* <sigma_01>
    + alpha <sigma_10> + |alpha|^2) dt; equals dt <C'^+C'> of the model."""
    c = spec.model.collapse_ops[0]
    return dt * expectation(c.conj().T @ c, psi).real


# --- heterodyne: two output modes at a frequency offset -------------------

def heterodyne_jump_ops(
    gamma_cav: float,
    gamma_loc: float,
    beta_amp: float,
    omega_offset: float,
    t: float,
    dim: int,
):
    """Beamsplitter output jump operators and their exact expected rates.

    J_c/J_d = (+-sqrt(gamma_cav) a e^{i Omega t} + sqrt(gamma_loc) beta)/sqrt(2).
    Rates are computed as <J^+J> directly; the difference of the two rates
    is beta sqrt(gamma_cav gamma_loc) <x_{-Omega t}> with the quadrature
    x_phi = a^+ e^{i phi} + a e^{-i phi}.  (The large-beta expansion of the
    rates drops the gamma_cav <a^+a>/2 term and overstates the quadrature
    prefactor by 2; the exact forms are used here.)
    """
    if gamma_cav <= 0 or gamma_loc <= 0:
        raise ValueError("decay rates must be positive")
    from .core import destroy

    a = np.asarray(destroy(dim))
    phase = np.exp(1j * omega_offset * t)
    lo_term = np.sqrt(gamma_loc) * beta_amp * np.eye(dim, dtype=complex)
    j_c = (np.sqrt(gamma_cav) * a * phase + lo_term) / np.sqrt(2.0)
    j_d = (-np.sqrt(gamma_cav) * a * phase + lo_term) / np.sqrt(2.0)

    def rates(psi: np.ndarray) -> tuple[float, float]:
        rc = expectation(j_c.conj().T @ j_c, psi).real
        rd = expectation(j_d.conj().T @ j_d, psi).real
        return rc, rd

    return j_c, j_d, rates


def quadrature_expectation(psi: np.ndarray, phi: float) -> float:
    """<a^+ e^{i phi} + a e^{-i phi}> on a Fock-truncated state."""
    from .core import destroy

    a = np.asarray(destroy(psi.shape[0]))
    return (2.0 * np.exp(-1j * phi) * expectation(a, psi)).real


def heterodyne_quadrature_increments(
    gamma_cav: float,
    gamma_loc: float,
    beta_amp: float,
    omega_offset: float,
    dim: int,
    psi0: np.ndarray,
    dt: float,
    window_steps: int,
    n_windows: int,
    n_traj: int,
    seed: int,
) -> np.ndarray:
    """Windowed quadrature increments of the two-counter jump simulation.

    Simulates the cavity watched through the beamsplitter pair (both
    counters, offset local oscillator); returns the per-window changes of
    <a + a^+>.  In the large-amplitude limit these increments follow the
    state-diffusion statistics.
    """
    from .core import destroy

    a = np.asarray(destroy(dim))
    heff = -0.5j * gamma_cav * (a.conj().T @ a)  # constant LO part dropped
    from scipy.linalg import expm

    u = expm(-1j * heff * dt)
    increments = []
    for i in range(n_traj):
        rng = trajectory_rng(seed, i)
        psi = np.asarray(psi0, complex).copy()
        x_prev = (2.0 * expectation(a, psi)).real
        for w in range(n_windows):
            for k in range(window_steps):
                t = (w * window_steps + k) * dt
                j_c, j_d, _ = heterodyne_jump_ops(
                    gamma_cav, gamma_loc, beta_amp, omega_offset, t, dim
                )
                p_c = dt * expectation(j_c.conj().T @ j_c, psi).real
                p_d = dt * expectation(j_d.conj().T @ j_d, psi).real
                r = rng.random()
                if r < p_c:
                    psi, _ = normalize(j_c @ psi)
                elif r < p_c + p_d:
                    psi, _ = normalize(j_d @ psi)
                else:
                    psi, _ = normalize(u @ psi)
            x_now = (2.0 * expectation(a, psi)).real
            increments.append(x_now - x_prev)
            x_prev = x_now
    return np.array(increments)


def qsd_quadrature_increments(
    gamma_cav: float,
    dim: int,
    psi0: np.ndarray,
    dt: float,
    window_steps: int,
    n_windows: int,
    n_traj: int,
    seed: int,
) -> np.ndarray:
    """Same windowed quadrature increments from the diffusion picture."""
    from .core import destroy

    a = np.asarray(destroy(dim))
    model = LindbladModel(np.zeros((dim, dim), complex), (np.sqrt(gamma_cav) * a,))
    increments = []
    for i in range(n_traj):
        rng = trajectory_rng(seed, i)
        psi = np.asarray(psi0, complex).copy()
        x_prev = (2.0 * expectation(a, psi)).real
        for w in range(n_windows):
            for _ in range(window_steps):
                psi = qsd_step(model, psi, dt, wiener_sample(dt, rng, 1), "normalized")
            x_now = (2.0 * expectation(a, psi)).real
            increments.append(x_now - x_prev)
            x_prev = x_now
    return np.array(increments)


def qsd_from_heterodyne_demo(
    gamma_cav: float = 1.0,
    gamma_loc: float = 1.0,
    betas=(2.0, 4.0, 8.0, 12.0),
    omega_offset: float = 120.0,
    dim: int = 14,
    alpha0: float = 1.2,
    n_traj: int = 20,
    t_max: float = 2.0,
    seed: int = 11,
) -> dict:
    """Undriven-cavity oscillator ladder: the diffusion limit made visible.

    For each local-oscillator amplitude the two-counter record is
    simulated; detections grow ~ beta^2 more frequent while each one moves
    the state ~ 1/beta less.  At the largest amplitude the windowed
    quadrature increments are compared against the diffusion picture by a
    two-sample KS test.  Returns per-amplitude statistics and the KS
    p-value.
    """
    from scipy.linalg import expm
    from scipy.stats import ks_2samp

    from .core import destroy

    a = np.asarray(destroy(dim))
    psi0 = _coherent(alpha0, dim)
    heff = -0.5j * gamma_cav * (a.conj().T @ a)
    report = {"betas": list(betas), "mean_jumps": [], "mean_kick": [], "dt": []}
    for beta in betas:
        rate = beta * beta * gamma_loc + gamma_cav * abs(alpha0) ** 2
        dt = min(2e-4, 0.03 / rate)
        u = expm(-1j * heff * dt)
        n_steps = int(np.ceil(t_max / dt))
        jumps = np.zeros(n_traj)
        kicks = []
        for i in range(n_traj):
            rng = trajectory_rng(seed, i)
            psi = psi0.copy()
            for k in range(n_steps):
                t = k * dt
                j_c, j_d, _ = heterodyne_jump_ops(
                    gamma_cav, gamma_loc, beta, omega_offset, t, dim
                )
                p_c = dt * expectation(j_c.conj().T @ j_c, psi).real
                p_d = dt * expectation(j_d.conj().T @ j_d, psi).real
                r = rng.random()
                if r < p_c + p_d:
                    op = j_c if r < p_c else j_d
                    new, _ = normalize(op @ psi)
                    kicks.append(float(np.linalg.norm(new - psi)))
                    psi = new
                    jumps[i] += 1
                else:
                    psi, _ = normalize(u @ psi)
        report["mean_jumps"].append(float(jumps.mean()))
        report["mean_kick"].append(float(np.mean(kicks)) if kicks else 0.0)
        report["dt"].append(dt)

    beta_top = betas[-1]
    window_steps = 500
    n_windows = max(2, int(t_max / (window_steps * 2e-4)))
    het = heterodyne_quadrature_increments(
        gamma_cav, gamma_loc, beta_top, omega_offset, dim, psi0,
        dt=2e-4, window_steps=window_steps, n_windows=n_windows,
        n_traj=n_traj, seed=seed + 1,
    )
    qsd = qsd_quadrature_increments(
        gamma_cav, dim, psi0, dt=2e-4, window_steps=window_steps,
        n_windows=n_windows, n_traj=n_traj, seed=seed + 2,
    )
    report["increment_ks_pvalue"] = float(ks_2samp(het, qsd).pvalue)
    return report


def _coherent(alpha: float, dim: int) -> np.ndarray:
    from .core import coherent_amplitudes

    return np.asarray(coherent_amplitudes(alpha, dim))
