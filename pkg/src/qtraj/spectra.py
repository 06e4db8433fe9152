"""Fluorescence spectra from trajectories.

The workhorse is the auxiliary-pair estimator: alongside the conditional
state phi one propagates, per analysis frequency, an accumulator beta
that is driven by the monitored collapse channel and rotates at that
frequency.  Detections collapse phi and beta together; the mean of
||beta(T)||^2 / T over realizations is the emission spectrum with
resolution ~ 1/T.  The ensemble estimator drives beta with the dipole
fluctuation C - <C>_ss, which removes the elastic line exactly; the
elastic weight |<C>_ss|^2 is reported separately, never sampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import expectation
from .ensemble import _chunk_ranges
from .lindblad import LindbladModel
from .models import VSystemParams
from .photon import vsystem_periods
from .rng import trajectory_rng


@dataclass(frozen=True)
class GateConfig:
    """Spectrometer trigger: reopens on each detection, closes after T0 of
    silence; the gate starts open."""

    t0: float

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("T0 must be positive (use t0=np.inf for always open)")


@dataclass
class AuxiliaryPair:
    """Conditional no-detection state plus spectral accumulator at one
    analysis frequency; the accumulator starts at zero."""

    phi: np.ndarray
    beta: np.ndarray
    omega: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=complex)
        beta = np.asarray(self.beta, dtype=complex)
        if phi.shape != beta.shape:
            raise ValueError("phi and beta must share a dimension")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def start(cls, phi: np.ndarray, omega: float) -> "AuxiliaryPair":
        phi = np.asarray(phi, dtype=complex)
        return cls(phi=phi.copy(), beta=np.zeros_like(phi), omega=omega)

    @property
    def power(self) -> float:
        return float(np.vdot(self.beta, self.beta).real)


def aux_pair_step(
    model: LindbladModel,
    pair: AuxiliaryPair,
    dt: float,
    channel: int = 0,
    renormalize: bool = True,
) -> AuxiliaryPair:
    """One no-detection step of the pair.

    phi evolves under H_eff; beta rotates at the analysis frequency,
    shares the conditional decay, and is driven by the monitored channel
    acting on phi (trapezoid in the source).  With renormalize both
    components are divided by phi's norm, the bookkeeping used when the
    pair rides along a jump trajectory.
    """
    u = model.no_jump_propagator(dt)
    c = model.collapse_ops[channel]
    phase = np.exp(-1j * pair.omega * dt)
    new_phi = u @ pair.phi
    src = 0.5 * dt * (phase * (u @ (c @ pair.phi)) + c @ new_phi)
    new_beta = phase * (u @ pair.beta) + src
    if renormalize:
        n = np.linalg.norm(new_phi)
        new_phi = new_phi / n
        new_beta = new_beta / n
    return AuxiliaryPair(phi=new_phi, beta=new_beta, omega=pair.omega)


def aux_pair_jump(model: LindbladModel, pair: AuxiliaryPair, channel: int) -> AuxiliaryPair:
    """Detection: both components collapse through the channel; the pair
    is renormalized by phi's collapse norm (beta keeps its relative scale)."""
    c = model.collapse_ops[channel]
    phi = c @ pair.phi
    n = np.linalg.norm(phi)
    if n <= 0:
        raise ValueError(f"channel {channel} has zero probability for this state")
    return AuxiliaryPair(phi=phi / n, beta=(c @ pair.beta) / n, omega=pair.omega)


@dataclass
class SpectrumCurve:
    omega_grid: np.ndarray
    values: np.ndarray           # inelastic estimator, >= -1e-12
    normalization: str = "raw"
    coherent: np.ndarray | None = None
    raw: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.asarray(self.values).min() < -1e-12:
            raise ValueError("spectrum estimator must be non-negative")

    def normalized(self, mode: str = "peak-1") -> np.ndarray:
        if mode == "peak-1":
            return self.values / self.values.max()
        if mode == "unit-area":
            return self.values / np.trapezoid(self.values, self.omega_grid)
        if mode == "raw":
            return self.values.copy()
        raise ValueError(f"unknown normalization {mode!r}")


def _beta_pair_chunk(
    model: LindbladModel,
    psi0: np.ndarray,
    omega_grid: np.ndarray,
    dt: float,
    n_steps: int,
    acc_start: int,
    seed: int,
    lo: int,
    hi: int,
    channel: int,
    gate_t0: float,
    mean_dipole: complex,
    seg_steps: int = 0,
):
    """One chunk of auxiliary-pair realizations.

    The accumulator is driven by the dipole fluctuation C - <C>_ss, so
    its mean power is the inelastic spectrum with no elastic spike.
    With seg_steps > 0 the accumulation window is split into segments of
    that many steps; segment powers are averaged, trading resolution for
    variance.  Returns (sum over rows of power, mean open time).
    """
    b = hi - lo
    d = model.dim
    n_omega = omega_grid.size
    u = model.no_jump_propagator(dt)
    u_t = np.ascontiguousarray(u.T)
    c_src = model.collapse_ops[channel]
    uc_t = np.ascontiguousarray((u @ c_src).T)
    c_ts = [np.ascontiguousarray(c.T) for c in model.collapse_ops]
    phases = np.exp(-1j * omega_grid * dt)
    cbar = complex(mean_dipole)

    gens = [trajectory_rng(seed, i) for i in range(lo, hi)]
    psi = np.tile(np.asarray(psi0, complex), (b, 1))
    beta = np.zeros((b, n_omega, d), complex)
    open_steps = np.zeros(b)
    last_jump = np.zeros(b)  # gate open at t = 0
    gate_limit = np.inf if not np.isfinite(gate_t0) else gate_t0
    power_acc = np.zeros((b, n_omega))
    segments_done = 0
    if seg_steps and np.isfinite(gate_limit):
        raise ValueError("segment averaging is not defined for gated runs")

    block = 4096
    done = 0
    while done < n_steps:
        take = min(block, n_steps - done)
        rblock = np.stack([g.random(take) for g in gens])
        for j in range(take):
            k = done + j
            t = k * dt
            r = rblock[:, j]
            cpsi = [psi @ ct for ct in c_ts]
            per = dt * np.stack(
                [np.einsum("bi,bi->b", cp.conj(), cp).real for cp in cpsi], axis=1
            )
            dp = per.sum(axis=1)
            jumpers = np.nonzero(r < dp)[0]
            accumulating = k >= acc_start
            gate_open = (t - last_jump) <= gate_limit

            # no-jump update for everyone first
            new = psi @ u_t
            norms = np.sqrt(np.einsum("bi,bi->b", new.conj(), new).real)
            if accumulating:
                # trapezoid source (C - cbar) phi at both step edges
                src_a = psi @ uc_t - cbar * new           # U (C - cbar) phi(t)
                src_b = new @ c_ts[channel] - cbar * new  # (C - cbar) U phi(t)
                beta = (beta * phases[None, :, None]) @ u_t  # rotate + conditional decay
                drive = 0.5 * dt * (
                    phases[None, :, None] * src_a[:, None, :] + src_b[:, None, :]
                )
                mask = gate_open[:, None, None]
                beta = beta + np.where(mask, drive, 0.0)
                open_steps += gate_open
            new /= norms[:, None]
            beta /= norms[:, None, None]

            if jumpers.size:
                cum = np.cumsum(per[jumpers], axis=1)
                ch = np.minimum((cum <= r[jumpers, None]).sum(axis=1), model.n_channels - 1)
                for m in np.unique(ch):
                    rows = jumpers[ch == m]
                    phi = cpsi[m][rows]
                    nn = np.sqrt(per[rows, m] / dt)
                    new[rows] = phi / nn[:, None]
                    beta[rows] = (beta[rows] @ c_ts[m]) / nn[:, None, None]
                last_jump[jumpers] = t
            psi = new
            if seg_steps and k + 1 > acc_start and (k + 1 - acc_start) % seg_steps == 0:
                power_acc += np.einsum("bwd,bwd->bw", beta, beta.conj()).real / (
                    seg_steps * dt
                )
                beta[:] = 0.0
                segments_done += 1
        done += take

    if seg_steps:
        power = power_acc / max(segments_done, 1)
        open_time = np.full(b, seg_steps * dt)
    else:
        open_time = np.maximum(open_steps * dt, dt)
        power = np.einsum("bwd,bwd->bw", beta, beta.conj()).real / open_time[:, None]
    return power.sum(axis=0), float(open_time.mean())


def spectrum_estimate(
    model: LindbladModel,
    psi0: np.ndarray,
    omega_grid,
    t_total: float,
    n_traj: int,
    seed: int = 0,
    dt: float = 2e-3,
    t_settle: float = 0.0,
    channel: int = 0,
    gate: GateConfig | None = None,
    segments: int = 1,
) -> SpectrumCurve:
    """Emission spectrum of one collapse channel by auxiliary-pair averaging.

    Accumulation starts at t_settle (transient discard); the achieved
    resolution is ~ segments/(t_total - t_settle).  segments > 1 averages
    that many consecutive accumulation windows per trajectory, reducing
    variance at the cost of resolution (not compatible with a gate).
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    n_steps = int(np.ceil(t_total / dt))
    acc_start = int(np.round(t_settle / dt))
    gate_t0 = gate.t0 if gate is not None else np.inf

    from .lindblad import steady_state

    if model.n_channels == 0:
        window = t_total - t_settle
        return SpectrumCurve(
            omega_grid=omega_grid,
            values=np.zeros(omega_grid.size),
            coherent=np.zeros(omega_grid.size),
            raw=np.zeros(omega_grid.size),
            meta={"resolution": 1.0 / window, "window": window, "n_traj": n_traj,
                  "dt": dt, "coherent_weight": 0.0, "gate_t0": gate_t0},
        )
    rho_ss = steady_state(model, rho0=np.outer(psi0, psi0.conj()))
    cbar = complex((model.collapse_ops[channel] @ rho_ss).trace())

    seg_steps = 0
    if segments > 1:
        seg_steps = (n_steps - acc_start) // segments

    power = np.zeros(omega_grid.size)
    open_time = 0.0
    for lo, hi in _chunk_ranges(n_traj):
        p, ot = _beta_pair_chunk(
            model, psi0, omega_grid, dt, n_steps, acc_start, seed, lo, hi,
            channel, gate_t0, cbar, seg_steps,
        )
        power += p
        open_time += ot * (hi - lo)
    power /= n_traj
    window = seg_steps * dt if seg_steps else t_total - t_settle
    return SpectrumCurve(
        omega_grid=omega_grid,
        values=power,
        coherent=None,
        raw=power,
        meta={
            "resolution": 1.0 / window,
            "window": window,
            "n_traj": n_traj,
            "dt": dt,
            "mean_open_time": open_time / n_traj,
            "gate_t0": gate_t0,
            # elastic delta-line weight |<C>_ss|^2, reported, never sampled
            "coherent_weight": abs(cbar) ** 2,
        },
    )


def conditional_spectrum(
    model: LindbladModel,
    gate: GateConfig,
    psi0: np.ndarray,
    omega_grid,
    t_total: float,
    n_traj: int,
    seed: int = 0,
    dt: float = 2e-3,
    t_settle: float = 0.0,
    channel: int = 0,
) -> SpectrumCurve:
    """Spectrum conditioned on bright periods via the trigger gate."""
    return spectrum_estimate(
        model, psi0, omega_grid, t_total, n_traj, seed=seed, dt=dt,
        t_settle=t_settle, channel=channel, gate=gate,
    )


def finite_window_lorentzian(delta, width: float, window: float):
    """Finite-time spectrum of an exponentially correlated line.

    (1/T) iint_0^T e^{i d (t'-t'')} e^{-w |t'-t''|} = 2 Re[1/z - (1-e^{-zT})/(T z^2)]
    with z = w - i d; tends to the Lorentzian 2w/(w^2+d^2) as T grows.
    """
    delta = np.asarray(delta, dtype=float)
    z = width - 1j * delta
    val = 2.0 * (1.0 / z - (1.0 - np.exp(-z * window)) / (window * z * z)).real
    return val


def fit_narrow_peak(curve: SpectrumCurve, fit_halfwidth: float, width_guess: float):
    """Fit pedestal + finite-window Lorentzian to the central region.

    Returns (height, width, pedestal); the window length is taken from the
    curve metadata so the fitted width is deconvolved from the 1/T
    resolution.
    """
    from scipy.optimize import curve_fit

    window = curve.meta["window"]
    mask = np.abs(curve.omega_grid) <= fit_halfwidth
    x = curve.omega_grid[mask]
    y = curve.values[mask]

    def shape(xv, height, width, pedestal):
        prof = finite_window_lorentzian(xv, abs(width), window)
        return pedestal + height * prof / finite_window_lorentzian(0.0, abs(width), window)

    p0 = (max(y.max() - y.min(), 1e-12), width_guess, y.min())
    popt, _ = curve_fit(shape, x, y, p0=p0, maxfev=20000)
    height, width, pedestal = popt
    return float(height), float(abs(width)), float(pedestal)


# --- correlation functions by the four-state trick -------------------------

def correlation_mcwf(
    model: LindbladModel,
    op_a: np.ndarray,
    op_b: np.ndarray,
    psi0: np.ndarray,
    t_prepare: float,
    tau_grid,
    n_traj: int,
    seed: int = 0,
    dt: float = 2e-3,
    shared_jumps: bool = False,
):
    """Two-time function <A(t+tau) B(t)> from jump trajectories.

    Per realization the state at t is split into the four auxiliary
    states (1 +- B)phi and (1 +- iB)phi (normalizations mu), each evolved
    by MCWF over tau; the combination
    (mu+ <A>+ - mu- <A>- - i mu'+ <A>'+ + i mu'- <A>'-) / 4 averages to
    the ensemble correlation.  Values of a single run are not meaningful;
    only the average is.  shared_jumps forces the four states through one
    random stream (experimentation flag; the default draws independently).
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    steps_at = np.rint(tau_grid / dt).astype(int)
    if np.abs(steps_at * dt - tau_grid).max() > 1e-9 * max(dt, 1.0):
        raise ValueError("tau_grid must lie on the dt lattice")
    n_prep = int(np.round(t_prepare / dt))
    eye = np.eye(model.dim, dtype=complex)
    acc = np.zeros(tau_grid.size, dtype=complex)
    for i in range(n_traj):
        rng = trajectory_rng(seed, 8 * i)
        phi = _mcwf_run(model, psi0, dt, n_prep, rng)
        variants = []
        for sign, factor in ((1, 1.0), (-1, 1.0), (1, 1.0j), (-1, 1.0j)):
            op = eye + sign * factor * op_b
            chi = op @ phi
            mu = float(np.vdot(chi, chi).real)
            if mu < 1e-14:
                op = eye + sign * factor * (op_b + 1e-8 * eye)
                chi = op @ phi
                mu = float(np.vdot(chi, chi).real)
            variants.append((chi / np.sqrt(mu), mu))
        cs = []
        for f, (chi, mu) in enumerate(variants):
            stream = trajectory_rng(seed, 8 * i + 1) if shared_jumps else trajectory_rng(
                seed, 8 * i + 1 + f
            )
            vals = _mcwf_run(model, chi, dt, int(steps_at[-1]), stream,
                             record_op=op_a, record_steps=steps_at)
            cs.append(mu * vals)
        acc += 0.25 * (cs[0] - cs[1] - 1j * cs[2] + 1j * cs[3])
    return acc / n_traj


def _mcwf_run(model, psi, dt, n_steps, rng, record_op=None, record_steps=None):
    """First-order MCWF propagation; returns final state or recorded <A>."""
    from .jump import step_first_order

    if psi is None:
        raise ValueError("initial state required")
    psi = np.asarray(psi, dtype=complex).copy()
    if record_op is None:
        for _ in range(n_steps):
            psi, _ = step_first_order(model, psi, dt, rng)
        return psi
    idx = {int(s): i for i, s in enumerate(record_steps)}
    out = np.empty(len(record_steps), dtype=complex)
    if 0 in idx:
        out[idx[0]] = expectation(record_op, psi)
    for k in range(1, n_steps + 1):
        psi, _ = step_first_order(model, psi, dt, rng)
        if k in idx:
            out[idx[k]] = expectation(record_op, psi)
    return out


def time_dependent_spectrum(corr: np.ndarray, t_grid, omega_grid) -> SpectrumCurve:
    """Double-trapezoid finite-window transform of a two-time kernel.

    S_T(w) = (1/T) iint e^{i w (t'-t'')} C(t', t'') dt' dt''; positive for
    positive-semidefinite kernels, so no spurious negativities appear.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    omega_grid = np.asarray(omega_grid, dtype=float)
    corr = np.asarray(corr, dtype=complex)
    if corr.shape != (t_grid.size, t_grid.size):
        raise ValueError("correlation kernel must be square on t_grid")
    dt = t_grid[1] - t_grid[0]
    if np.abs(omega_grid).max() * dt > np.pi:
        raise ValueError("omega grid beyond the Nyquist limit of the time grid")
    w = np.full(t_grid.size, dt)
    w[0] = w[-1] = 0.5 * dt
    t_total = t_grid[-1] - t_grid[0]
    vals = np.empty(omega_grid.size)
    for i, om in enumerate(omega_grid):
        v = w * np.exp(-1j * om * t_grid)
        vals[i] = (v.conj() @ corr @ v).real / t_total
    if vals.min() < -1e-12 * max(vals.max(), 1.0):
        raise ValueError("transform produced significant negativity; kernel not PSD")
    return SpectrumCurve(
        omega_grid=omega_grid,
        values=np.clip(vals, 0.0, None),
        meta={"window": t_total, "resolution": 1.0 / t_total},
    )


# --- analytic V-system spectrum ---------------------------------------------

@dataclass(frozen=True)
class VSpectrumComponents:
    delta_grid: np.ndarray
    coherent_weight: float
    mollow: np.ndarray
    narrow_peak: np.ndarray
    amplitude: float            # narrow-peak amplitude A_p (diverges as omega2 -> 0)
    width: float                # narrow-peak width Gamma_p (vanishes as omega2 -> 0)
    peak_area: float            # A_p * Gamma_p, the finite invariant of the limit
    diverging_amplitude: bool

    @property
    def total(self) -> np.ndarray:
        return self.mollow + self.narrow_peak


def vsystem_analytic_spectrum(
    params: VSystemParams, delta_grid, threshold: float = 0.1
) -> VSpectrumComponents:
    """Approximate analytic emission spectrum of the shelving V system.

    Components: elastic delta weight, the strong-transition triplet, and
    the narrow telegraph peak of width Gamma_p and amplitude A_p.
    """
    from .analytic import mollow_incoherent
    from .photon import validity_check

    ok, margins = validity_check(params, threshold)
    if not ok:
        from .photon import ValidityError

        raise ValidityError(f"shelving conditions violated: margins {margins}")
    p = params
    x = np.asarray(delta_grid, dtype=float)
    g = p.gamma11
    d1, d2 = p.delta1, p.delta2

    a_p = 2.0 * (d1**2 + g**2) * ((d1 - d2) ** 2 + g**2) * (
        (p.omega1**2 - 4.0 * d2**2 + 4.0 * d1 * d2) ** 2 + 16.0 * d2**2 * g**2
    ) / (
        p.omega1**2
        * p.omega2**2
        * g
        * (p.omega1**2 + 2.0 * d2**2 + 4.0 * d1**2 - 4.0 * d1 * d2 + 4.0 * g**2) ** 2
    )
    gamma_p = (
        2.0
        * p.omega1**2
        * p.omega2**2
        * g
        * (2.0 * d2**2 + 4.0 * d1**2 - 4.0 * d1 * d2 + p.omega1**2 + 4.0 * g**2)
    ) / (
        ((p.omega1**2 - 4.0 * d2**2 + 4.0 * d1 * d2) ** 2 + 16.0 * d2**2 * g**2)
        * (p.omega1**2 + 2.0 * d1**2 + 2.0 * g**2)
    )
    coherent_weight = (
        2.0 * (d1**2 + g**2)
        / (4.0 * g**2 + p.omega1**2 + 2.0 * d2**2 + 4.0 * d1**2 - 4.0 * d1 * d2)
    )
    mollow = mollow_incoherent(x, p.omega1, g, d1)
    peak = (a_p * gamma_p**2 / (x**2 + gamma_p**2)) / np.pi
    diverging = not np.isfinite(a_p) or p.omega2 == 0.0
    return VSpectrumComponents(
        delta_grid=x,
        coherent_weight=float(coherent_weight),
        mollow=mollow,
        narrow_peak=peak,
        amplitude=float(a_p),
        width=float(gamma_p),
        peak_area=float(a_p * gamma_p),
        diverging_amplitude=diverging,
    )


def telegraph_spectrum(
    omega1: float,
    gamma11: float,
    delta1: float,
    t_bright: float,
    t_dark: float,
    delta_grid,
):
    """Spectrum of a two-level emitter gated by an on/off telegraph.

    The two-level spectrum is convolved with the telegraph kernel: the
    elastic weight is partially redistributed into a Lorentzian of width
    1/t_dark + 1/t_bright.  Returns (curve values, coherent weight,
    narrow width).  t_dark -> 0 recovers the bare two-level spectrum.
    """
    from .analytic import mollow_coherent_weight, mollow_incoherent

    x = np.asarray(delta_grid, dtype=float)
    on_frac = t_bright / (t_bright + t_dark)
    off_frac = 1.0 - on_frac
    width = 1.0 / t_dark + 1.0 / t_bright if t_dark > 0 else np.inf
    s2_inc = mollow_incoherent(x, omega1, gamma11, delta1)
    coh_w = mollow_coherent_weight(omega1, gamma11, delta1)
    if t_dark == 0.0:
        return s2_inc, coh_w, 0.0
    lorentz = (width / (width**2 + x**2)) / np.pi
    values = on_frac * (s2_inc + off_frac * coh_w * lorentz)
    coherent = on_frac**2 * coh_w
    return values, coherent, width


def vsystem_narrow_width(params: VSystemParams) -> float:
    """1/t_dark + 1/t_bright from the telegraph means."""
    stats = vsystem_periods(params)
    return 1.0 / stats.t_dark + 1.0 / stats.t_bright
