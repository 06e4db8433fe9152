"""Named physical scenarios with their convention mappings.

Every preset folds decay rates into the collapse operators of the
canonical dissipator D[C]rho = C rho C^+ - 1/2 {C^+C, rho}:

* atomic transition with Einstein coefficient 2*Gamma  ->  C = sqrt(2 Gamma) |0><i|
* cavity losing photons at rate gamma                  ->  C = sqrt(gamma) a
  (a cavity whose *conditional* generator is -i gamma a^+a therefore
  maps as C = sqrt(2 gamma) a)

Building a preset twice with equal parameters yields entrywise-equal
arrays; specs are immutable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    SIGMA_00,
    SIGMA_01,
    SIGMA_3,
    SIGMA_11,
    basis_state,
    coherent_amplitudes,
    destroy,
    number_operator,
    state_vector,
    tensor_product,
)
from .lindblad import LindbladModel


@dataclass(frozen=True)
class VSystemParams:
    """Three-level V configuration: strong 0<->1, weak metastable 0<->2.

    omega1/omega2 are Rabi frequencies, delta1/delta2 laser detunings,
    gamma11/gamma22 HALF the Einstein coefficients of levels 1 and 2.
    """

    omega1: float
    omega2: float
    delta1: float = 0.0
    delta2: float = 0.0
    gamma11: float = 1.0
    gamma22: float = 0.0

    def __post_init__(self):
        if self.omega1 <= 0 or self.gamma11 <= 0:
            raise ValueError("omega1 and gamma11 must be positive")
        if self.omega2 < 0 or self.gamma22 < 0:
            raise ValueError("omega2 and gamma22 must be non-negative")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    parameters: dict
    model: LindbladModel
    psi0: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    reset_notes: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)


def driven_tls(omega: float, delta: float = 0.0, gamma: float = 1.0) -> ModelSpec:
    """Laser-driven two-level atom; spontaneous rate 2*gamma.

    H = -delta |1><1| + (omega/2)(|0><1| + |1><0|), C = sqrt(2 gamma)|0><1|.
    Known stationary excited population: omega^2 / (2 omega^2 + 4(delta^2+gamma^2)).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    h = -delta * SIGMA_11 + 0.5 * omega * (SIGMA_01 + SIGMA_01.conj().T)
    c = np.sqrt(2.0 * gamma) * SIGMA_01
    model = LindbladModel(h, (c,), ("fluorescence",))
    from .analytic import tls_rho11_ss

    return ModelSpec(
        name="driven_tls",
        parameters={"omega": omega, "delta": delta, "gamma": gamma},
        model=model,
        psi0=basis_state(2, 0),
        observables={"rho11": np.asarray(SIGMA_11), "inversion": np.asarray(SIGMA_3)},
        reset_notes=("every detection resets to the ground state |0>",),
        extras={"rho11_ss": tls_rho11_ss(omega, delta, gamma)},
    )


def v_system(params: VSystemParams) -> ModelSpec:
    """V system: strong fluorescing channel plus weak shelving channel.

    Levels ordered (|0>, |1>, |2>).  Channels: sqrt(2 gamma11)|0><1| and
    sqrt(2 gamma22)|0><2| (the latter identically zero for gamma22 = 0,
    kept for bookkeeping of the metastable level).
    """
    p = params
    s01 = np.zeros((3, 3), complex)
    s01[0, 1] = 1.0
    s02 = np.zeros((3, 3), complex)
    s02[0, 2] = 1.0
    proj1 = np.diag([0.0, 1.0, 0.0]).astype(complex)
    proj2 = np.diag([0.0, 0.0, 1.0]).astype(complex)
    h = (
        -p.delta1 * proj1
        - p.delta2 * proj2
        + 0.5 * p.omega1 * (s01 + s01.conj().T)
        + 0.5 * p.omega2 * (s02 + s02.conj().T)
    )
    chans = [np.sqrt(2.0 * p.gamma11) * s01]
    labels = ["strong"]
    chans.append(np.sqrt(2.0 * p.gamma22) * s02)
    labels.append("weak")
    model = LindbladModel(h, tuple(chans), tuple(labels))
    return ModelSpec(
        name="v_system",
        parameters={
            "omega1": p.omega1,
            "omega2": p.omega2,
            "delta1": p.delta1,
            "delta2": p.delta2,
            "gamma11": p.gamma11,
            "gamma22": p.gamma22,
        },
        model=model,
        psi0=basis_state(3, 0),
        observables={"rho11": proj1, "rho22": proj2},
        reset_notes=(
            "strong-channel detection resets to |0>",
            "weak-channel detection resets to |0>",
        ),
        extras={"params": p},
    )


def decaying_cavity(gamma: float, dim: int = 16, psi0: np.ndarray | str = "vacuum") -> ModelSpec:
    """Undriven cavity losing photons at rate gamma (H = 0, C = sqrt(gamma) a)."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    a = destroy(dim)
    if isinstance(psi0, str):
        if psi0 != "vacuum":
            raise ValueError(f"unknown initial-state descriptor {psi0!r}")
        psi = basis_state(dim, 0)
    else:
        psi = state_vector(psi0)
        if psi.shape[0] != dim:
            raise ValueError("initial state outside the truncated space")
    model = LindbladModel(np.zeros((dim, dim), complex), (np.sqrt(gamma) * a,), ("output",))
    return ModelSpec(
        name="decaying_cavity",
        parameters={"gamma": gamma, "dim": dim},
        model=model,
        psi0=psi,
        observables={"photon_number": np.asarray(number_operator(dim))},
        reset_notes=("detection applies a and renormalizes",),
    )


def fock_superposition(dim: int, levels: tuple[int, ...]) -> np.ndarray:
    """Equal-weight superposition of Fock states, e.g. (|0>+|10>)/sqrt(2)."""
    psi = np.zeros(dim, complex)
    for n in levels:
        psi[n] = 1.0
    return state_vector(psi / np.linalg.norm(psi))


def cat_state_scenario(alpha: float, dim: int | None = None, gamma: float = 1.0):
    """Even coherent superposition in a lossy cavity, plus an invariant checker.

    Trajectory states stay in span{|alpha e^{-gamma t/2}>, |-alpha e^{-gamma t/2}>};
    each detection flips the relative sign.  Returns (spec, checker) where
    checker(t, n_jumps, psi) gives the overlap fidelity with the analytic form.
    """
    amag = abs(alpha)
    if dim is None:
        dim = int(np.ceil(amag * amag + 6.0 * amag)) + 1
    plus = coherent_amplitudes(alpha, dim) + coherent_amplitudes(-alpha, dim)
    psi0 = state_vector(plus / np.linalg.norm(plus))
    spec = decaying_cavity(gamma, dim=dim, psi0=psi0)
    spec = ModelSpec(
        name="cat_state",
        parameters={"alpha": alpha, "dim": dim, "gamma": gamma},
        model=spec.model,
        psi0=psi0,
        observables=spec.observables,
        reset_notes=("each detection maps even cat <-> odd cat",),
    )

    def checker(t: float, n_jumps: int, psi: np.ndarray) -> float:
        amp = alpha * np.exp(-0.5 * gamma * t)
        sign = -1.0 if n_jumps % 2 else 1.0
        ref = coherent_amplitudes(amp, dim) + sign * coherent_amplitudes(-amp, dim)
        ref = ref / np.linalg.norm(ref)
        return abs(np.vdot(ref, psi)) ** 2

    return spec, checker


def jaynes_cummings(
    g: float,
    gamma_cav: float,
    delta: float = 0.0,
    dim: int | None = None,
    alpha: float = 4.0,
) -> ModelSpec:
    """Two-level atom in a damped cavity, resonant JC coupling.

    Atom does not decay; the cavity's conditional generator carries
    -i gamma_cav a^+a, i.e. C = sqrt(2 gamma_cav) a.  Initial state
    |excited> x |alpha>.  Atom first in the tensor order.
    """
    amag = abs(alpha)
    if dim is None:
        dim = int(np.ceil(amag * amag + 6.0 * amag)) + 1
    cap = 2 * dim
    a = destroy(dim)
    id_f = np.eye(dim, dtype=complex)
    id_a = np.eye(2, dtype=complex)
    s01 = np.asarray(SIGMA_01)
    h = (
        g * (tensor_product(s01.conj().T, a, dim_cap=cap)
             + tensor_product(s01, a.conj().T, dim_cap=cap))
        - delta * tensor_product(np.asarray(SIGMA_11), id_f, dim_cap=cap)
    )
    c = np.sqrt(2.0 * gamma_cav) * tensor_product(id_a, a, dim_cap=cap)
    model = LindbladModel(h, (c,), ("cavity output",))
    psi0 = state_vector(np.kron(basis_state(2, 1), coherent_amplitudes(alpha, dim)))
    return ModelSpec(
        name="jaynes_cummings",
        parameters={"g": g, "gamma_cav": gamma_cav, "delta": delta, "dim": dim, "alpha": alpha},
        model=model,
        psi0=psi0,
        observables={
            "inversion": tensor_product(np.asarray(SIGMA_3), id_f, dim_cap=cap),
            "photon_number": tensor_product(id_a, np.asarray(number_operator(dim)), dim_cap=cap),
        },
        reset_notes=("detection applies 1 x a",),
    )


def cascaded_cavities(
    kappa_a: float,
    kappa_b: float,
    h_a: np.ndarray | None = None,
    h_b: np.ndarray | None = None,
    dims: tuple[int, int] = (2, 2),
) -> ModelSpec:
    """Cavity A driving cavity B one-way through a shared output field.

    Single collapse channel C = sqrt(2 kappa_a) a + sqrt(2 kappa_b) b and
    coherent one-way coupling i sqrt(kappa_a kappa_b)(a^+b - a b^+); the
    conditional generator then contains only the a b^+ term, so nothing
    flows from B back into A.
    """
    if kappa_a <= 0 or kappa_b < 0:
        raise ValueError("kappa_a must be positive, kappa_b non-negative")
    dim_a, dim_b = dims
    cap = dim_a * dim_b
    a = tensor_product(np.asarray(destroy(dim_a)), np.eye(dim_b, dtype=complex), dim_cap=cap)
    bop = tensor_product(np.eye(dim_a, dtype=complex), np.asarray(destroy(dim_b)), dim_cap=cap)
    h_a_full = (
        tensor_product(np.asarray(h_a, dtype=complex), np.eye(dim_b, dtype=complex), dim_cap=cap)
        if h_a is not None
        else np.zeros((cap, cap), complex)
    )
    h_b_full = (
        tensor_product(np.eye(dim_a, dtype=complex), np.asarray(h_b, dtype=complex), dim_cap=cap)
        if h_b is not None
        else np.zeros((cap, cap), complex)
    )
    coupling = 1j * np.sqrt(kappa_a * kappa_b) * (a.conj().T @ bop - a @ bop.conj().T)
    h = h_a_full + h_b_full + coupling
    c = np.sqrt(2.0 * kappa_a) * a + np.sqrt(2.0 * kappa_b) * bop
    model = LindbladModel(h, (c,), ("combined output",))
    psi0 = state_vector(np.kron(basis_state(dim_a, min(1, dim_a - 1)), basis_state(dim_b, 0)))
    return ModelSpec(
        name="cascaded_cavities",
        parameters={"kappa_a": kappa_a, "kappa_b": kappa_b, "dims": dims},
        model=model,
        psi0=psi0,
        observables={
            "n_a": a.conj().T @ a,
            "n_b": bop.conj().T @ bop,
        },
        reset_notes=("detection applies the combined operator C (superposes both outputs)",),
        extras={"a": a, "b": bop},
    )


PRESETS = {
    "driven_tls": driven_tls,
    "v_system": v_system,
    "decaying_cavity": decaying_cavity,
    "cat_state": cat_state_scenario,
    "jaynes_cummings": jaynes_cummings,
    "cascaded_cavities": cascaded_cavities,
}
