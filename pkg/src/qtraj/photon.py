"""Delay functions, counting densities, imperfect detectors, and analytic
telegraph statistics for the V system.

Terminology: the delay curve P0(t) is the probability that no detection
occurs in [0, t] after a reset; its negative derivative I1(t) is the
waiting-time (next-photon) density; the nonexclusive rate I(t) counts a
detection at t regardless of intervening ones and obeys the renewal
equation I = I1 + I1 * I.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import dag
from .lindblad import LindbladModel
from .models import VSystemParams


@dataclass(frozen=True)
class DelayCurve:
    t_grid: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        p = np.asarray(self.p0, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ValueError("t_grid and p0 must be matching 1-d arrays")
        if abs(p[0] - 1.0) > 1e-9:
            raise ValueError("delay curve must start at 1")
        if np.any(np.diff(p) > 1e-12):
            raise ValueError("delay curve must be non-increasing")
        if not (np.all(np.isfinite(p)) and np.all(p >= -1e-12)):
            raise ValueError("delay curve must be finite and non-negative")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "p0", p)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float
    threshold: float  # bright/dark discrimination time T0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class PeriodStats:
    t_dark: float
    t_bright: float
    tau_bright: float

    @property
    def jump_rate(self) -> float:
        return 1.0 / (self.t_dark + self.t_bright)


def delay_function(model: LindbladModel, psi_reset: np.ndarray, t_grid) -> DelayCurve:
    """P0 on a grid: squared norm of the conditionally evolved reset state."""
    t_grid = np.asarray(t_grid, dtype=float)
    eig = model.no_jump_eig()
    psi = np.asarray(psi_reset, dtype=complex)
    if eig is not None:
        w, v, vinv = eig
        coeff = vinv @ psi
        amps = (v[None, :, :] * np.exp(-1j * np.outer(t_grid, w))[:, None, :]) @ coeff
        p0 = np.einsum("ij,ij->i", amps, amps.conj()).real
    else:
        p0 = np.empty(t_grid.size)
        for i, t in enumerate(t_grid):
            phi = model.propagate_no_jump(psi, t)
            p0[i] = np.vdot(phi, phi).real
    p0 = np.minimum(p0, 1.0)
    p0[0] = 1.0
    return DelayCurve(t_grid, np.minimum.accumulate(p0))


def next_photon_density(curve: DelayCurve) -> np.ndarray:
    """-dP0/dt by centered differences (second-order one-sided at the ends)."""
    return -np.gradient(curve.p0, curve.t_grid, edge_order=2)


def conditional_beta_evolution(
    model: LindbladModel,
    rho0: np.ndarray,
    beta: float,
    t_grid,
    dt: float | None = None,
):
    """No-count evolution seen by a detector of efficiency beta.

    drho/dt = -i (H_eff rho - rho H_eff^+) + (1 - beta) sum_m C_m rho C_m^+.
    beta = 0 recovers the full master equation (trace constant); beta = 1
    the pure conditional evolution whose trace is the delay function.
    Returns (list of rho(t), survival = trace at each grid point).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    t_grid = np.asarray(t_grid, dtype=float)
    if dt is None:
        dt = float(np.diff(t_grid).min()) if t_grid.size > 1 else 1e-3
    heff = model.effective_hamiltonian
    cs = model.collapse_ops

    def rhs(rho):
        out = -1j * (heff @ rho - rho @ dag(heff))
        for c in cs:
            out += (1.0 - beta) * (c @ rho @ dag(c))
        return out

    rho = np.array(rho0, dtype=complex)
    rhos = [rho.copy()]
    survival = [rho.trace().real]
    for a, b_t in zip(t_grid[:-1], t_grid[1:]):
        span = b_t - a
        nsub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            rho = 0.5 * (rho + dag(rho))
        rhos.append(rho.copy())
        survival.append(rho.trace().real)
    return rhos, np.array(survival)


def first_count_density_beta(
    model: LindbladModel, rho0: np.ndarray, beta: float, t_grid, excited_proj: np.ndarray,
    rate: float,
):
    """First-count density beta * rate * p_exc(t) from the beta-conditional
    evolution; `rate` is the full emission rate out of the excited manifold
    (2*Gamma for a two-level atom) and excited_proj its projector."""
    rhos, _ = conditional_beta_evolution(model, rho0, beta, t_grid)
    pop = np.array([(excited_proj @ r).trace().real for r in rhos])
    return beta * rate * pop


def any_photon_rate(i1: np.ndarray, t_grid, check_grid: bool = False) -> np.ndarray:
    """Solve the renewal equation I = I1 + I1 * I forward in time.

    Trapezoidal quadrature of the convolution on a uniform grid.  With
    check_grid=True the solve is repeated on the half-resolution grid and
    a >1% disagreement raises.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    i1 = np.asarray(i1, dtype=float)
    dt = t_grid[1] - t_grid[0]
    if np.abs(np.diff(t_grid) - dt).max() > 1e-9 * dt:
        raise ValueError("any_photon_rate needs a uniform grid")
    rate = _volterra_solve(i1, dt)
    if check_grid:
        coarse = _volterra_solve(i1[::2], 2.0 * dt)
        scale = max(np.abs(rate).max(), 1e-300)
        if np.abs(coarse - rate[::2]).max() > 1e-2 * scale:
            raise ValueError("grid too coarse for the renewal convolution (>1% error)")
    return rate


def _volterra_solve(i1: np.ndarray, dt: float) -> np.ndarray:
    n = i1.size
    out = np.empty(n)
    out[0] = i1[0]
    for k in range(1, n):
        # trapezoid over [0, t_k] of I1(t_k - s) I(s), unknown I(t_k) on the right edge
        conv = np.dot(i1[k:0:-1], out[:k]) - 0.5 * i1[k] * out[0]
        rhs = i1[k] + dt * conv
        out[k] = rhs / (1.0 - 0.5 * dt * i1[0])
    return out


def g2_from_rate(rate: np.ndarray, rate_ss: float) -> np.ndarray:
    """Normalized intensity correlation g2 = I / I_ss."""
    if rate_ss <= 0:
        raise ValueError("steady rate must be positive")
    return np.asarray(rate, dtype=float) / rate_ss


# --- V-system telegraph analytics -----------------------------------------

def validity_check(params: VSystemParams, threshold: float = 0.1):
    """Margins of the two shelving conditions (weak probe, negligible
    spontaneous decay of the shelf).  ok iff both margins <= threshold."""
    p = params
    bound1 = 0.25 * (
        16.0 * p.delta2**2 * p.gamma11**2
        + (p.omega1**2 + 4.0 * p.delta2 * (p.delta1 - p.delta2)) ** 2
    ) / (p.gamma11**2 + (p.delta1 - p.delta2) ** 2)
    margin1 = p.omega2**2 / bound1 if bound1 > 0 else np.inf
    bound2_num = p.omega1**2 * p.omega2**2 * p.gamma11
    bound2_den = (
        16.0 * p.delta2**2 * p.gamma11**2
        + (p.omega1**2 + 4.0 * p.delta2 * (p.delta1 - p.delta2)) ** 2
    )
    if p.gamma22 == 0.0:
        margin2 = 0.0
    elif bound2_num == 0.0:
        margin2 = np.inf
    else:
        margin2 = p.gamma22 * bound2_den / bound2_num
    ok = bool(margin1 <= threshold and margin2 <= threshold)
    return ok, (float(margin1), float(margin2))


class ValidityError(ValueError):
    pass


def vsystem_periods(params: VSystemParams, threshold: float = 0.1) -> PeriodStats:
    """Mean dark/bright period lengths of the shelving telegraph.

    t_dark = [16 D2^2 G^2 + (O1^2 - 4 D2(D2-D1))^2] / (2 O1^2 O2^2 G),
    t_bright = (2 D1^2 + 2 G^2 + O1^2) / (2 G^2 + 2 (D1-D2)^2) * t_dark,
    tau_bright = 1 / (2 G rho11_tls).  Requires the shelving conditions.
    """
    ok, margins = validity_check(params, threshold)
    if not ok:
        raise ValidityError(
            f"shelving conditions violated: margins {margins} exceed {threshold}"
        )
    p = params
    g = p.gamma11
    t_dark = (
        16.0 * p.delta2**2 * g**2 + (p.omega1**2 - 4.0 * p.delta2 * (p.delta2 - p.delta1)) ** 2
    ) / (2.0 * p.omega1**2 * p.omega2**2 * g)
    t_bright = (
        (2.0 * p.delta1**2 + 2.0 * g**2 + p.omega1**2)
        / (2.0 * g**2 + 2.0 * (p.delta1 - p.delta2) ** 2)
        * t_dark
    )
    from .analytic import tls_rho11_ss

    tau_bright = 1.0 / (2.0 * g * tls_rho11_ss(p.omega1, p.delta1, g))
    return PeriodStats(t_dark=t_dark, t_bright=t_bright, tau_bright=tau_bright)


def vsystem_jump_rate(params: VSystemParams, threshold: float = 0.1) -> float:
    """Rate of dark-period onsets, 1/(t_dark + t_bright)."""
    return vsystem_periods(params, threshold).jump_rate


def mean_periods_from_delay(curve: DelayCurve, t0: float):
    """Quotient estimates of the mean dark and bright period lengths.

    t_dark(T0) = T0 + int_{T0} P0 / P0(T0); t_bright(T0) =
    (1/P0(T0)) int_0^{T0} t I1 dt / int_0^{T0} I1 dt * ... using the
    run-length identity.  The tail beyond the grid is extended by an
    exponential fitted to the last decade of the curve.
    """
    t, p0 = curve.t_grid, curve.p0
    if not t[0] <= t0 <= t[-1]:
        raise ValueError("T0 outside the delay grid")
    p_t0 = float(np.interp(t0, t, p0))
    if p_t0 < 1e-300:
        raise ValueError("P0(T0) underflows; choose a smaller T0")
    mask = t >= t0
    tail_int = np.trapezoid(p0[mask], t[mask])
    # exponential extension from the last decade of the grid
    sel = t >= t[-1] - 0.1 * (t[-1] - t[0])
    pos = p0[sel] > 0
    if pos.sum() >= 2:
        slope = np.polyfit(t[sel][pos], np.log(p0[sel][pos]), 1)[0]
        if slope < 0:
            tail_int += p0[-1] / (-slope)
    t_dark = t0 + tail_int / p_t0

    i1 = next_photon_density(curve)
    head = t <= t0
    num = np.trapezoid(t[head] * i1[head], t[head])
    den = np.trapezoid(i1[head], t[head])
    t_bright = num / den / p_t0
    return float(t_dark), float(t_bright)


def classify_periods(record, t0: float):
    """Segment a detection record into bright and dark periods.

    `record` is a TrajectoryRecord or a plain array of jump times.  A gap
    longer than T0 is a dark period of that full length; maximal runs of
    gaps <= T0 form bright periods.  Returns a list of
    (kind, start, length) covering [first jump, last jump].
    """
    jump_times = getattr(record, "jump_times", record)
    jt = np.asarray(jump_times, dtype=float)
    if jt.size < 2:
        return []
    gaps = np.diff(jt)
    periods = []
    run_start = None
    for i, gap in enumerate(gaps):
        if gap > t0:
            if run_start is not None:
                periods.append(("bright", jt[run_start], jt[i] - jt[run_start]))
                run_start = None
            periods.append(("dark", jt[i], gap))
        else:
            if run_start is None:
                run_start = i
    if run_start is not None:
        periods.append(("bright", jt[run_start], jt[-1] - jt[run_start]))
    return periods


def telegraph_summary(record, t0: float):
    """Threshold-corrected estimates of the telegraph means from a record.

    The raw dark lengths include the T0 of silence needed to notice the
    period, and a bright period only ends once a gap exceeds T0, which
    censors a fraction exp(-T0/t_dark) of the dark entries; both effects
    are undone here so the estimates compare directly with the analytic
    telegraph means.
    """
    periods = classify_periods(record, t0)
    darks = np.array([ln for kind, _, ln in periods if kind == "dark"])
    brights = np.array([ln for kind, _, ln in periods if kind == "bright"])
    if darks.size == 0:
        raise ValueError("no dark periods found; T0 too large or record too short")
    t_dark = float(darks.mean() - t0)
    censor = np.exp(-t0 / t_dark) if t_dark > 0 else 1.0
    t_bright = float(brights.mean() * censor) if brights.size else np.nan
    return {
        "t_dark": t_dark,
        "t_bright": t_bright,
        "n_dark": int(darks.size),
        "n_bright": int(brights.size),
        "raw_dark_mean": float(darks.mean()),
        "raw_bright_mean": float(brights.mean()) if brights.size else np.nan,
    }
