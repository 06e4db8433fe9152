"""Closed-form references for the laser-driven two-level system.

Conventions: ground |0>, excited |1>, Rabi frequency Omega, detuning
Delta, half Einstein coefficient Gamma (spontaneous rate 2*Gamma),
collapse operator sqrt(2*Gamma)|0><1|.  These forms serve as oracles
for the stochastic machinery; each is exact within the model.
"""
from __future__ import annotations

import numpy as np


def _amplitude_rates(omega: float, delta: float, gamma: float) -> tuple[complex, complex]:
    """Decay rates of the no-detection amplitudes.

    Roots of s^2 - (i*Delta - Gamma) s + Omega^2/4 = 0; the no-jump
    amplitudes from the ground state are linear combinations of
    exp(s1 t) and exp(s2 t).
    """
    rad = np.sqrt(complex(gamma**2 - delta**2 - omega**2 - 2j * delta * gamma))
    s1 = 0.5 * (-gamma + 1j * delta) + 0.5 * rad
    s2 = 0.5 * (-gamma + 1j * delta) - 0.5 * rad
    return s1, s2


def _no_jump_amplitudes(t, omega, delta, gamma):
    """(c0, c1) of exp(-i H_eff t)|0> in the (|0>,|1>) basis."""
    t = np.asarray(t, dtype=float)
    s1, s2 = _amplitude_rates(omega, delta, gamma)
    if abs(s1 - s2) < 1e-12 * max(abs(s1), 1.0):
        # degenerate rates (critical driving): confluent limit
        c0 = np.exp(s1 * t) * (1.0 - s1 * t)
        c1 = (-2j / omega) * s1 * s1 * t * np.exp(s1 * t) if omega else np.zeros_like(t)
        return c0, c1
    e1, e2 = np.exp(s1 * t), np.exp(s2 * t)
    c0 = (s2 * e1 - s1 * e2) / (s2 - s1)
    c1 = (0.5j * omega) * (e1 - e2) / (s2 - s1)
    return c0, c1


def tls_delay_p0(t, omega: float, delta: float, gamma: float):
    """Survival probability of the no-count interval after a detection.

    Squared norm of the conditionally evolved reset state |0>:
    P0 = |c0|^2 + |c1|^2.  Monotone non-increasing, P0(0) = 1.
    """
    c0, c1 = _no_jump_amplitudes(t, omega, delta, gamma)
    return np.abs(c0) ** 2 + np.abs(c1) ** 2


def tls_ground_amplitude(t, omega: float, delta: float, gamma: float):
    """The bare amplitude <0|exp(-i H_eff t)|0>.

    Useful for diagnostics only: unlike the survival probability it
    oscillates through zero, so it must never be used as a delay curve.
    """
    c0, _ = _no_jump_amplitudes(t, omega, delta, gamma)
    return c0


def tls_waiting_density(t, omega: float, delta: float, gamma: float):
    """Waiting-time density I1(t) = -dP0/dt = 2 Gamma |c1(t)|^2 (exact)."""
    _, c1 = _no_jump_amplitudes(t, omega, delta, gamma)
    return 2.0 * gamma * np.abs(c1) ** 2


def tls_waiting_cdf(t, omega: float, delta: float, gamma: float):
    return 1.0 - tls_delay_p0(t, omega, delta, gamma)


def tls_rho11_ss(omega: float, delta: float, gamma: float) -> float:
    """Stationary excited population Omega^2 / (2 Omega^2 + 4(Delta^2+Gamma^2))."""
    return omega**2 / (2.0 * omega**2 + 4.0 * (delta**2 + gamma**2))


def tls_g2(tau, omega: float, gamma: float):
    """Intensity correlation of resonance fluorescence at zero detuning.

    g2(tau) = 1 - exp(-3 Gamma tau / 2) [cos(w tau) + (3 Gamma / 2w) sin(w tau)],
    w = sqrt(Omega^2 - Gamma^2/4).  Valid for Omega > Gamma/2.
    """
    tau = np.asarray(tau, dtype=float)
    w = np.sqrt(omega**2 - 0.25 * gamma**2)
    return 1.0 - np.exp(-1.5 * gamma * tau) * (
        np.cos(w * tau) + (1.5 * gamma / w) * np.sin(w * tau)
    )


def tls_rho11_transient(t, omega: float, gamma: float):
    """Excited population from the ground state at zero detuning.

    By the regression structure of the resonance-fluorescence problem this
    is rho11_ss * g2(t), exact for Delta = 0.
    """
    return tls_rho11_ss(omega, 0.0, gamma) * tls_g2(t, omega, gamma)


def tls_inversion_transient(t, omega: float, gamma: float):
    """<sigma_3>(t) = rho11(t) - 1/2 from the ground state, Delta = 0."""
    return tls_rho11_transient(t, omega, gamma) - 0.5


def tls_first_count_density_beta(t, omega: float, gamma: float, beta: float):
    """First-count density of a detector of efficiency beta, Delta = 0.

    Inverse Laplace of  beta Omega^2 Gamma / [z (z+Gamma)(z+2 Gamma)
    + Omega^2 (z + beta Gamma)]  by partial fractions over the cubic's
    roots.  At beta = 1 this reduces to the perfect-detector waiting
    density; for beta -> 0 its shape tends to g2.
    """
    t = np.asarray(t, dtype=float)
    coeffs = [1.0, 3.0 * gamma, 2.0 * gamma**2 + omega**2, beta * gamma * omega**2]
    roots = np.roots(coeffs)
    out = np.zeros_like(t, dtype=complex)
    for i, p in enumerate(roots):
        dp = np.prod([p - q for j, q in enumerate(roots) if j != i])
        out += np.exp(p * t) / dp
    return (beta * omega**2 * gamma * out).real


# --- fluorescence spectrum (triplet) ------------------------------------

def mollow_coefficients(omega: float, gamma: float, delta: float = 0.0):
    """Polynomial coefficients of the triplet denominator D(x) = x^6 + B x^4 + C x^2 + D."""
    b = 6.0 * gamma**2 - 2.0 * omega**2 - 2.0 * delta**2
    c = (
        omega**4
        + 2.0 * omega**2 * gamma**2
        + 9.0 * gamma**4
        + delta**4
        + 2.0 * delta**2 * omega**2
        - 6.0 * gamma**2 * delta**2
    )
    d = gamma**2 * (omega**2 + 2.0 * delta**2 + 2.0 * gamma**2) ** 2
    return b, c, d


def mollow_incoherent(detuning_grid, omega: float, gamma: float, delta: float = 0.0):
    """Incoherent (triplet) part of the normalized fluorescence spectrum.

    pi S(x) = Gamma Omega^2 (Omega^2 + 2 x^2 + 8 Gamma^2)
              / (2 (x^6 + B x^4 + C x^2 + D)).
    Normalization: integral of S over x plus the coherent weight is 1.
    """
    x = np.asarray(detuning_grid, dtype=float)
    b, c, d = mollow_coefficients(omega, gamma, delta)
    num = gamma * omega**2 * (omega**2 + 2.0 * x**2 + 8.0 * gamma**2)
    den = 2.0 * (x**6 + b * x**4 + c * x**2 + d)
    return num / den / np.pi


def mollow_coherent_weight(omega: float, gamma: float, delta: float = 0.0) -> float:
    """Weight of the elastic delta component of the normalized spectrum."""
    return 2.0 * (delta**2 + gamma**2) / (omega**2 + 2.0 * (delta**2 + gamma**2))


def tls_spectrum_unnormalized(detuning_grid, omega: float, gamma: float, delta: float = 0.0):
    """Unnormalized emission spectrum: prefactor 2 Gamma rho11_ss times the
    normalized triplet; the coherent part is returned as a separate weight."""
    pref = 2.0 * gamma * tls_rho11_ss(omega, delta, gamma)
    inc = pref * mollow_incoherent(detuning_grid, omega, gamma, delta)
    coh = pref * mollow_coherent_weight(omega, gamma, delta)
    return inc, coh
