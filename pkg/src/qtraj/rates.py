"""Einstein rate-equation analytics for the incoherently driven V system:
shelving steady states, the two-stage transient, bright/dark estimates
from null measurements, Mandel Q, and photon-counting distributions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class EinsteinParams:
    """Spontaneous rates a1, a2 and induced rates b1w1, b2w2 (1/time)."""

    a1: float
    a2: float
    b1w1: float
    b2w2: float

    def __post_init__(self):
        if min(self.a1, self.a2, self.b1w1, self.b2w2) < 0:
            raise ValueError("rates must be non-negative")

    def shelving_flags(self, ratio: float = 10.0):
        """(strong transition saturated, shelving hierarchy satisfied)."""
        saturated = self.a1 > 0 and self.b1w1 >= ratio * self.a1
        hierarchy = (
            self.b2w2 > 0
            and self.b1w1 >= ratio * self.b2w2
            and self.a1 >= ratio * self.b2w2
            and (self.a2 == 0 or self.b2w2 >= ratio * self.a2)
        )
        return saturated, hierarchy


@dataclass(frozen=True)
class Populations:
    rho00: float
    rho11: float
    rho22: float

    def __post_init__(self):
        vals = (self.rho00, self.rho11, self.rho22)
        if any(v < -1e-12 or v > 1.0 + 1e-12 for v in vals):
            raise ValueError("populations must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-10:
            raise ValueError("populations must sum to 1")

    def as_array(self):
        return np.array([self.rho00, self.rho11, self.rho22])


def _rate_matrix(p: EinsteinParams) -> np.ndarray:
    r1 = p.a1 + p.b1w1
    r2 = p.a2 + p.b2w2
    return np.array(
        [
            [-(p.b1w1 + p.b2w2), r1, r2],
            [p.b1w1, -r1, 0.0],
            [p.b2w2, 0.0, -r2],
        ]
    )


def rate_integrate(params: EinsteinParams, p0: Populations, t_grid) -> np.ndarray:
    """RK4 solution of the closed three-level rate equations.

    Returns an array (len(t_grid), 3) of (rho00, rho11, rho22); the
    population sum is conserved to 1e-10 by construction of the matrix.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    m = _rate_matrix(params)
    scale = max(np.abs(m).max(), 1e-12)
    y = p0.as_array().astype(float)
    out = np.empty((t_grid.size, 3))
    out[0] = y
    for i, (a, b) in enumerate(zip(t_grid[:-1], t_grid[1:])):
        span = b - a
        nsub = max(1, int(np.ceil(span * scale / 1e-2)))
        h = span / nsub
        for _ in range(nsub):
            k1 = m @ y
            k2 = m @ (y + 0.5 * h * k1)
            k3 = m @ (y + 0.5 * h * k2)
            k4 = m @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return out


def rate_steady_state(params: EinsteinParams) -> Populations:
    """Closed-form stationary populations of the rate equations."""
    p = params
    if max(p.a1, p.a2, p.b1w1, p.b2w2) == 0:
        raise ValueError("all rates zero: steady state undefined")
    den = p.a1 * (p.a2 + 2.0 * p.b2w2) + p.b1w1 * (2.0 * p.a2 + 3.0 * p.b2w2)
    if den == 0:
        # decoupled corner cases (e.g. only spontaneous rates): everything
        # drains to the ground state
        return Populations(1.0, 0.0, 0.0)
    rho11 = p.b1w1 * (p.a2 + p.b2w2) / den
    rho22 = p.b2w2 * (p.a1 + p.b1w1) / den
    return Populations(1.0 - rho11 - rho22, rho11, rho22)


def g2_rate_saturated(params: EinsteinParams, tau_grid, simplified: bool = False):
    """Intensity correlations of the two fluorescence lines.

    g2_11 (strong line, equal to the 1-2 cross correlation) and g2_22.
    With simplified=True the saturated strong-driving form
    1 + (exp(-3 b2w2 tau / 2) - 3 exp(-2 b1w1 tau)) / 2 is used for the
    strong line.
    """
    import warnings

    p = params
    tau = np.asarray(tau_grid, dtype=float)
    sat, hier = p.shelving_flags()
    if not (sat and hier):
        warnings.warn("outside the saturated shelving regime; forms are approximate",
                      stacklevel=2)
    slow = p.a2 + 1.5 * p.b2w2
    fast = 2.0 * p.b1w1 + p.a1 + 0.5 * p.b2w2
    if simplified:
        g11 = 1.0 + 0.5 * (np.exp(-1.5 * p.b2w2 * tau) - 3.0 * np.exp(-2.0 * p.b1w1 * tau))
    else:
        amp_slow = p.b2w2 / (2.0 * (p.a2 + p.b2w2))
        amp_fast = (2.0 * p.a2 + 3.0 * p.b2w2) / (2.0 * (p.a2 + p.b2w2))
        g11 = 1.0 + amp_slow * np.exp(-slow * tau) - amp_fast * np.exp(-fast * tau)
    g22 = 1.0 - np.exp(-slow * tau)
    return g11, g22


def telegraph_estimates(params: EinsteinParams):
    """Null-measurement estimates of the telegraph periods.

    1/t_bright = d rho22/dt at rho22 = 0 with the 0-1 sector equilibrated;
    1/t_dark = -d rho22/dt at rho22 = 1; the hump ratio t_dark/t_bright
    equals (quasi-steady rho11 - asymptotic rho11) / asymptotic rho11.
    Returns (t_bright, t_dark, hump_ratio).
    """
    p = params
    rho00_tls = (p.a1 + p.b1w1) / (p.a1 + 2.0 * p.b1w1) if (p.a1 + p.b1w1) else 0.0
    grad_up = p.b2w2 * rho00_tls
    if grad_up <= 0:
        raise ValueError("no shelving: d rho22/dt vanishes at rho22 = 0")
    t_bright = 1.0 / grad_up
    t_dark = 1.0 / (p.a2 + p.b2w2)
    rho11_quasi = p.b1w1 / (p.a1 + 2.0 * p.b1w1)
    rho11_inf = rate_steady_state(p).rho11
    hump_ratio = (rho11_quasi - rho11_inf) / rho11_inf
    return t_bright, t_dark, hump_ratio


def collapse_time(t_bright: float, t_d: float) -> float:
    """Characteristic null-measurement collapse time t_d ln(t_bright/t_d)."""
    if t_bright <= t_d:
        raise ValueError("requires t_bright >> t_d")
    return t_d * np.log(t_bright / t_d)


def mandel_q(g2: np.ndarray, i_mean: float, tau_grid) -> np.ndarray:
    """Mandel Q over counting windows [0, tau] from the correlation curve.

    Q(tau) = (2 <I>/tau) iint_{0<t1<t2<tau} g2(t1) dt1 dt2 - <I> tau,
    evaluated by cumulative trapezoids for every tau on the grid.  A
    Poissonian g2 = 1 gives Q = 0 identically.
    """
    tau = np.asarray(tau_grid, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if tau.shape != g2.shape:
        raise ValueError("g2 and tau grids must match")
    inner = np.concatenate([[0.0], np.cumsum(0.5 * (g2[1:] + g2[:-1]) * np.diff(tau))])
    outer = np.concatenate([[0.0], np.cumsum(0.5 * (inner[1:] + inner[:-1]) * np.diff(tau))])
    with np.errstate(invalid="ignore", divide="ignore"):
        q = 2.0 * i_mean * outer / tau - i_mean * tau
    if tau[0] == 0.0:
        q[0] = 0.0
    return q


def mandel_q_asymptote(t_bright: float, t_dark: float, i_mean: float) -> float:
    """Quoted large-window shelving asymptote (t_dark^2 / t_bright) <I>."""
    return t_dark**2 / t_bright * i_mean


def mandel_q_telegraph_limit(t_bright: float, t_dark: float, i_mean: float) -> float:
    """Exact large-window Q of an on/off telegraph with these means:
    Q(inf) = 2 <I> t_dark^2 / (t_bright + t_dark)."""
    return 2.0 * i_mean * t_dark**2 / (t_bright + t_dark)


def counting_distribution(
    n,
    t_window: float,
    mode: str = "two-state",
    *,
    zero_excess: float = 1.0 / 3.0,
    rate: float = 1.0,
    efficiency: float = 1.0,
) -> np.ndarray:
    """log-safe photocount distribution over a window of length t_window.

    two-state: W(n) = A d_{n,0} + (1-A) Poisson(n; mu), the on/off
    telegraph mixture with zero-excess mass A (~1/3 for saturated
    transitions).  poisson-with-zero-excess: the same form with
    mu = rate * efficiency * t_window / 2, the bright-period mean of the
    strong line.  Evaluated via log-gamma so n up to 1e9 is finite.
    """
    if not 0.0 <= zero_excess <= 1.0:
        raise ValueError("zero_excess must lie in [0, 1]")
    if t_window <= 0:
        raise ValueError("t_window must be positive")
    n_arr = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(n_arr < 0) or np.any(n_arr != np.floor(n_arr)):
        raise ValueError("counts must be non-negative integers")
    if mode == "two-state":
        mu = rate * efficiency * t_window
    elif mode == "poisson-with-zero-excess":
        mu = 0.5 * rate * efficiency * t_window
    else:
        raise ValueError(f"unknown mode {mode!r}")
    log_pois = n_arr * np.log(mu) - mu - gammaln(n_arr + 1.0) if mu > 0 else np.where(
        n_arr == 0, 0.0, -np.inf
    )
    w = (1.0 - zero_excess) * np.exp(log_pois)
    w = np.where(n_arr == 0, w + zero_excess, w)
    return w if np.ndim(n) else float(w[0])


def counting_log_probability(n: float, mu: float) -> float:
    """log Poisson(n; mu) for huge n (pure log-space, no exponentiation)."""
    if mu <= 0:
        return 0.0 if n == 0 else -np.inf
    return float(n * np.log(mu) - mu - gammaln(n + 1.0))
