"""Open-system model container and the deterministic master-equation oracle.

Canonical convention used throughout the package:

    drho/dt = -i [H, rho] + sum_m ( C_m rho C_m^+ - 1/2 {C_m^+ C_m, rho} )

with all rates folded into the collapse operators C_m.  A dissipator
written with a factor-2 sandwich, 2 L rho L^+ - {L^+ L, rho}, maps onto
this convention as C = sqrt(2) L; a cavity damped at rate gamma maps as
C = sqrt(gamma) a.  Every preset in `models` documents its mapping, and
the test suite pins it down numerically twice: the sandwich identity
directly, and the diffusion-equation ensemble mean against this
integrator under the same mapping.

The matching non-Hermitian generator of the no-detection evolution is

    H_eff = H - (i/2) sum_m C_m^+ C_m .
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .core import HERMITIAN_ATOL, DimensionError, dag, is_hermitian, operator

TRACE_TOL = 1e-8


class StepSizeError(RuntimeError):
    """Integration or jump step too large for the requested guarantees."""


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian plus ordered collapse channels; immutable and shareable."""

    hamiltonian: np.ndarray
    collapse_ops: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        h = operator(self.hamiltonian)
        if not is_hermitian(h):
            raise ValueError("hamiltonian must be Hermitian to 1e-12")
        cs = tuple(operator(c) for c in self.collapse_ops)
        for c in cs:
            if c.shape != h.shape:
                raise DimensionError("collapse operator dimension mismatch")
        labels = tuple(self.labels) if self.labels else tuple(
            f"channel{i}" for i in range(len(cs))
        )
        if len(labels) != len(cs):
            raise ValueError("one label per collapse operator required")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "collapse_ops", cs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_cache", {})

    def __getstate__(self):
        # drop derived caches; workers rebuild them
        return {
            "hamiltonian": self.hamiltonian,
            "collapse_ops": self.collapse_ops,
            "labels": self.labels,
        }

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)
        object.__setattr__(self, "_cache", {})

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.collapse_ops)

    @property
    def cdc_ops(self) -> tuple[np.ndarray, ...]:
        """C_m^+ C_m per channel (cached)."""
        if "cdc" not in self._cache:
            self._cache["cdc"] = tuple(dag(c) @ c for c in self.collapse_ops)
        return self._cache["cdc"]

    @property
    def effective_hamiltonian(self) -> np.ndarray:
        if "heff" not in self._cache:
            heff = self.hamiltonian.astype(complex).copy()
            for cdc in self.cdc_ops:
                heff = heff - 0.5j * cdc
            self._cache["heff"] = heff
        return self._cache["heff"]

    def no_jump_propagator(self, dt: float) -> np.ndarray:
        """exp(-i H_eff dt), cached per dt (scaling-and-squaring)."""
        key = ("U", float(dt))
        if key not in self._cache:
            self._cache[key] = expm(-1j * self.effective_hamiltonian * dt)
        return self._cache[key]

    def no_jump_eig(self):
        """Eigendecomposition of H_eff for arbitrary-time propagation.

        Returns (eigenvalues, V, Vinv) or None when H_eff is too close to
        defective for the decomposition to be trustworthy.
        """
        if "eig" not in self._cache:
            heff = self.effective_hamiltonian
            try:
                w, v = np.linalg.eig(heff)
                vinv = np.linalg.inv(v)
                resid = np.abs(v @ np.diag(w) @ vinv - heff).max()
                scale = max(np.abs(heff).max(), 1.0)
                self._cache["eig"] = (w, v, vinv) if resid <= 1e-10 * scale else None
            except np.linalg.LinAlgError:
                self._cache["eig"] = None
        return self._cache["eig"]

    def propagate_no_jump(self, psi: np.ndarray, tau: float) -> np.ndarray:
        """exp(-i H_eff tau) psi for arbitrary tau (eig path, expm fallback)."""
        eig = self.no_jump_eig()
        if eig is not None:
            w, v, vinv = eig
            return v @ (np.exp(-1j * w * tau) * (vinv @ psi))
        return expm(-1j * self.effective_hamiltonian * tau) @ psi


def effective_hamiltonian(model: LindbladModel) -> np.ndarray:
    """H - (i/2) sum C^+C; anti-Hermitian part negative semidefinite."""
    return model.effective_hamiltonian


def anti_hermitian_part_negative(model: LindbladModel, atol: float = HERMITIAN_ATOL) -> bool:
    heff = model.effective_hamiltonian
    gamma_part = (heff - dag(heff)) / 2j  # Hermitian, should be <= 0
    return bool(np.linalg.eigvalsh(gamma_part).max() <= atol)


def liouvillian_apply(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation in canonical form."""
    if rho.shape != model.hamiltonian.shape:
        raise DimensionError("density matrix dimension mismatch")
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for c, cdc in zip(model.collapse_ops, model.cdc_ops):
        out += c @ rho @ dag(c) - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def _rk4_step(model: LindbladModel, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = liouvillian_apply(model, rho)
    k2 = liouvillian_apply(model, rho + 0.5 * dt * k1)
    k3 = liouvillian_apply(model, rho + 0.5 * dt * k2)
    k4 = liouvillian_apply(model, rho + dt * k3)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return 0.5 * (out + dag(out))  # enforce Hermiticity each step


def master_evolve(
    model: LindbladModel,
    rho0: np.ndarray,
    t_grid: np.ndarray,
    dt: float | None = None,
) -> list[np.ndarray]:
    """Fixed-step RK4 integration of the master equation.

    `t_grid` must start at 0 and increase strictly; each grid interval is
    subdivided into equal RK4 steps no longer than `dt` (default: the
    smallest grid spacing).  Trace drift beyond 1e-8 rejects the step size.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase strictly")
    if dt is None:
        dt = float(np.diff(t_grid).min()) if t_grid.size > 1 else 1e-3
    rho = np.array(rho0, dtype=complex)
    trace0 = rho.trace().real
    out = [rho.copy()]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        span = b - a
        nsub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            rho = _rk4_step(model, rho, h)
        if abs(rho.trace().real - trace0) > TRACE_TOL * max(1.0, abs(trace0)):
            raise StepSizeError(
                f"trace drift {abs(rho.trace().real - trace0):.3e} exceeds {TRACE_TOL};"
                " reduce dt"
            )
        out.append(rho.copy())
    return out


def evolve_operator(
    model: LindbladModel,
    x0: np.ndarray,
    t_grid: np.ndarray,
    dt: float | None = None,
) -> list[np.ndarray]:
    """Propagate an arbitrary (possibly non-Hermitian) operator under the
    Liouvillian; the regression oracle for two-time correlation functions."""
    t_grid = np.asarray(t_grid, dtype=float)
    if dt is None:
        dt = float(np.diff(t_grid).min()) if t_grid.size > 1 else 1e-3
    x = np.array(x0, dtype=complex)
    out = [x.copy()]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        span = b - a
        nsub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            k1 = liouvillian_apply(model, x)
            k2 = liouvillian_apply(model, x + 0.5 * h * k1)
            k3 = liouvillian_apply(model, x + 0.5 * h * k2)
            k4 = liouvillian_apply(model, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(x.copy())
    return out


def steady_state(
    model: LindbladModel,
    rho0: np.ndarray | None = None,
    dt: float | None = None,
    tol: float = 1e-10,
    t_max: float = 1e5,
) -> np.ndarray:
    """Integrate to stationarity: ||L rho|| below tol entrywise."""
    dim = model.dim
    rho = np.eye(dim, dtype=complex) / dim if rho0 is None else np.array(rho0, dtype=complex)
    if dt is None:
        scale = max(np.abs(model.effective_hamiltonian).max(), 1e-12)
        dt = 1e-2 / scale
    t = 0.0
    check_every = 50
    while t < t_max:
        for _ in range(check_every):
            rho = _rk4_step(model, rho, dt)
        t += check_every * dt
        if np.abs(liouvillian_apply(model, rho)).max() < tol:
            return rho
    raise StepSizeError(f"no steady state found within t_max={t_max}")


def expectation_value(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex((op @ rho).trace())
