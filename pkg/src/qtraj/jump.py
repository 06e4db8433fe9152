"""Monte-Carlo wavefunction stepping: jump/no-jump splitting of the master
equation at first, second and fourth order, plus waiting-time sampling.

One uniform random number is consumed per step (or per jump for the
waiting-time method); branch and channel selection invert the cumulative
probabilities in declared order, so a trajectory is a deterministic
function of its random stream.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import expectation, normalize
from .lindblad import LindbladModel, StepSizeError
from .rng import trajectory_rng

DP_WARN = 0.1
DP_ERROR = 0.5

JUMP_ORDERS = ("first", "second", "fourth")
JUMP_METHODS = ("bernoulli", "waiting-time")


@dataclass(frozen=True)
class JumpConfig:
    dt: float
    order: str = "first"
    seed: int = 0
    jump_method: str = "bernoulli"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.order not in JUMP_ORDERS:
            raise ValueError(f"order must be one of {JUMP_ORDERS}")
        if self.jump_method not in JUMP_METHODS:
            raise ValueError(f"jump_method must be one of {JUMP_METHODS}")
        if self.jump_method == "waiting-time" and self.order != "first":
            raise ValueError("waiting-time sampling is defined for the first-order scheme")


@dataclass
class TrajectoryRecord:
    """One realization: the detection record plus sampled observables."""

    seed: int
    traj_index: int
    dt: float
    t_grid: np.ndarray
    jump_times: np.ndarray          # strictly increasing
    jump_channels: np.ndarray       # channel index per jump
    samples: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def jump_events(self) -> list[tuple[float, int]]:
        return list(zip(self.jump_times.tolist(), self.jump_channels.tolist()))


def jump_probability(model: LindbladModel, psi: np.ndarray, dt: float):
    """(dP, per-channel dP) for a normalized state over one step.

    dP = dt * sum_m <C_m^+ C_m>; warns above 0.1 and refuses above 0.5.
    """
    per = np.array([expectation(cdc, psi).real for cdc in model.cdc_ops], dtype=float)
    per = np.clip(per, 0.0, None) * dt
    dp = float(per.sum())
    if dp > DP_ERROR:
        raise StepSizeError(f"jump probability {dp:.3f} > {DP_ERROR}; reduce dt")
    if dp > DP_WARN:
        warnings.warn(f"jump probability {dp:.3f} > {DP_WARN}; dt is coarse", stacklevel=2)
    return dp, per


def apply_jump(model: LindbladModel, psi: np.ndarray, channel: int) -> np.ndarray:
    """Collapse through one channel and renormalize."""
    phi = model.collapse_ops[channel] @ psi
    try:
        out, _ = normalize(phi)
    except ValueError:
        raise ValueError(f"channel {channel} has zero probability for this state") from None
    return out


def no_jump_step(model: LindbladModel, psi: np.ndarray, dt: float, renormalize: bool = False):
    """One conditional (no-detection) step exp(-i H_eff dt) psi.

    Unnormalized by default so that composed steps carry the survival
    probability in their squared norm.
    """
    phi = model.no_jump_propagator(dt) @ psi
    if renormalize:
        phi, _ = normalize(phi)
    return phi


def step_first_order(model: LindbladModel, psi: np.ndarray, dt: float, rng):
    """Standard jump/no-jump step.

    Draw r; jump iff r < dP, with the channel chosen by cumulative-sum
    inversion of the per-channel probabilities; otherwise propagate with
    H_eff and renormalize.  Returns (psi', channel-or-None).
    """
    dp, per = jump_probability(model, psi, dt)
    r = rng.random()
    if r < dp:
        channel = _invert_channel(per, r)
        return apply_jump(model, psi, channel), channel
    phi = model.no_jump_propagator(dt) @ psi
    phi, _ = normalize(phi)
    return phi, None


def _invert_channel(per_channel: np.ndarray, r: float) -> int:
    acc = 0.0
    for m, p in enumerate(per_channel):
        acc += p
        if r < acc:
            return m
    return len(per_channel) - 1


# --- higher-order splittings --------------------------------------------
#
# The one-step propagator of the master equation is expanded into
# conditioned pure-state branches ("mini-trajectories"): products of
# fractional no-jump propagators U_f = exp(-i H_eff f dt) and collapse
# operators C, each carrying a weight w.  A branch occurs with
# probability w * ||branch psi||^2; averaging the branch projectors
# reproduces the master equation to the scheme's order.

def _branch_patterns(order: str, dt: float):
    """(weight, pattern) pairs; patterns list tokens 'U:<f>' and 'C'."""
    if order == "second":
        return [
            (1.0, ("U:1",)),
            (0.5 * dt, ("U:1", "C")),
            (0.5 * dt, ("C", "U:1")),
            (0.5 * dt * dt, ("U:1", "C", "C")),
        ]
    if order == "fourth":
        dt2, dt3, dt4 = dt * dt, dt**3, dt**4
        return [
            (1.0, ("U:1",)),
            (dt / 8.0, ("U:1", "C")),
            (dt / 8.0, ("C", "U:1")),
            (3.0 * dt / 8.0, ("U:1/3", "C", "U:2/3")),
            (3.0 * dt / 8.0, ("U:2/3", "C", "U:1/3")),
            (dt2 / 6.0, ("U:1/2", "C", "U:1/2", "C")),
            (dt2 / 6.0, ("C", "U:1/2", "C", "U:1/2")),
            (dt2 / 6.0, ("U:1/2", "C", "C", "U:1/2")),
            (dt3 / 24.0, ("U:1", "C", "C", "C")),
            (dt3 / 24.0, ("C", "U:1", "C", "C")),
            (dt3 / 24.0, ("C", "C", "U:1", "C")),
            (dt3 / 24.0, ("C", "C", "C", "U:1")),
            (dt4 / 24.0, ("U:1", "C", "C", "C", "C")),
        ]
    raise ValueError(f"no branch table for order {order!r}")

_FRACTIONS = {"U:1": 1.0, "U:1/2": 0.5, "U:1/3": 1.0 / 3.0, "U:2/3": 2.0 / 3.0}


class BranchTable:
    """Concrete mini-trajectory branches for one (model, dt, order).

    Multi-channel models get one branch per assignment of channels to the
    C slots; weights are shared, norms are computed per assignment.
    """

    def __init__(self, model: LindbladModel, dt: float, order: str):
        self.model = model
        self.dt = float(dt)
        self.order = order
        self.props = {
            tok: model.no_jump_propagator(_FRACTIONS[tok] * dt) for tok in _FRACTIONS
        }
        self.branches = []  # (weight, ops tuple, channels tuple, jump fractions)
        channels = range(model.n_channels)
        for weight, pattern in _branch_patterns(order, self.dt):
            slots = [i for i, tok in enumerate(pattern) if tok == "C"]
            if not slots:
                self.branches.append((weight, (self.props[pattern[0]],), (), ()))
                continue
            if model.n_channels == 0:
                continue
            for assign in product(channels, repeat=len(slots)):
                # ops listed in application order (rightmost factor first);
                # fracs record the elapsed fraction of dt at each jump
                ops, chis, fracs = [], [], []
                assign_iter = iter(assign[::-1])
                elapsed = 0.0
                for tok in reversed(pattern):
                    if tok == "C":
                        m = next(assign_iter)
                        ops.append(model.collapse_ops[m])
                        chis.append(m)
                        fracs.append(elapsed)
                    else:
                        ops.append(self.props[tok])
                        elapsed += _FRACTIONS[tok]
                self.branches.append((weight, tuple(ops), tuple(chis), tuple(fracs)))

    def apply(self, psi: np.ndarray, branch) -> np.ndarray:
        _, ops, _, _ = branch
        v = psi
        for op in ops:
            v = op @ v
        return v

    def select(self, psi: np.ndarray, r: float):
        """Cumulative inversion over branch probabilities w*||phi||^2.

        The no-jump branch is evaluated first; residual probability mass
        (higher order in dt) also falls back to it.
        """
        acc = 0.0
        first_phi = None
        for branch in self.branches:
            w = branch[0]
            phi = self.apply(psi, branch)
            if first_phi is None:
                first_phi = phi
            acc += w * float(np.vdot(phi, phi).real)
            if r < acc:
                return phi, branch
        return first_phi, self.branches[0]


def _get_branch_table(model: LindbladModel, dt: float, order: str) -> BranchTable:
    key = ("branches", float(dt), order)
    if key not in model._cache:
        model._cache[key] = BranchTable(model, dt, order)
    return model._cache[key]


def _step_branches(model, psi, dt, rng, order):
    table = _get_branch_table(model, dt, order)
    r = rng.random()
    phi, branch = table.select(psi, r)
    phi, _ = normalize(phi)
    _, _, channels, fracs = branch
    events = [(f * dt, m) for m, f in zip(channels, fracs)]
    events.sort()
    return phi, events


def step_second_order(model: LindbladModel, psi: np.ndarray, dt: float, rng):
    """Mini-trajectory step accurate to O(dt^2) in the density average."""
    return _step_branches(model, psi, dt, rng, "second")


def step_fourth_order(model: LindbladModel, psi: np.ndarray, dt: float, rng):
    """Thirteen-branch mini-trajectory step, O(dt^4) in the density average."""
    return _step_branches(model, psi, dt, rng, "fourth")


def density_scheme_step(model: LindbladModel, rho: np.ndarray, dt: float, order: str) -> np.ndarray:
    """Exact expectation of one stochastic step applied to a density matrix.

    Useful to measure the deterministic order of each splitting without
    Monte-Carlo noise: rho' = sum_b w_b B_b rho B_b^+.
    """
    if order == "first":
        u = model.no_jump_propagator(dt)
        out = u @ rho @ u.conj().T
        for c in model.collapse_ops:
            out += dt * (c @ rho @ c.conj().T)
        return out
    table = _get_branch_table(model, dt, order)
    out = np.zeros_like(rho)
    for weight, ops, _, _ in table.branches:
        b = None
        for op in ops:
            b = op if b is None else op @ b
        out += weight * (b @ rho @ b.conj().T)
    return out


# --- waiting-time sampling ----------------------------------------------

BISECT_RTOL = 1e-8


def waiting_time_sample(
    model: LindbladModel,
    psi_reset: np.ndarray,
    rng,
    t_max: float,
    dt_scan: float,
):
    """Draw the next detection time from the delay function of `psi_reset`.

    Propagates with H_eff until the squared norm crosses a uniform draw r,
    then bisects the crossing to relative tolerance 1e-8.  Returns
    (t_jump, channel) or (None, None) when no jump occurs before t_max
    (censored tail).
    """
    r = rng.random()
    u = model.no_jump_propagator(dt_scan)
    psi = np.asarray(psi_reset, dtype=complex)
    t = 0.0
    norm2 = float(np.vdot(psi, psi).real)
    while t < t_max:
        nxt = u @ psi
        n2 = float(np.vdot(nxt, nxt).real)
        if n2 <= r:
            t_jump = t + _bisect_crossing(model, psi, norm2, dt_scan, r)
            phi = model.propagate_no_jump(psi, t_jump - t)
            channel = _channel_at_jump(model, phi, rng)
            return t_jump, channel
        psi, norm2, t = nxt, n2, t + dt_scan
    return None, None


def _bisect_crossing(model, psi, norm2_left, dt, r) -> float:
    lo, hi = 0.0, dt
    f_lo = norm2_left - r
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        phi = model.propagate_no_jump(psi, mid)
        f_mid = float(np.vdot(phi, phi).real) - r
        if f_mid > 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if (hi - lo) <= BISECT_RTOL * max(hi, 1e-300) or abs(f_mid) <= BISECT_RTOL * r:
            break
    return 0.5 * (lo + hi)


def _channel_at_jump(model, phi, rng) -> int:
    rates = np.array([expectation(cdc, phi).real for cdc in model.cdc_ops])
    rates = np.clip(rates, 0.0, None)
    tot = rates.sum()
    if tot <= 0.0:
        raise ValueError("no channel has positive rate at the sampled jump time")
    return _invert_channel(rates / tot, rng.random())


class RenewalWaitingSampler:
    """Fast waiting-time draws for a fixed reset state.

    Precomputes the survival curve on a bracketing grid once, then inverts
    each uniform draw by bisection inside the bracket with the exact
    propagator.  Valid whenever every jump resets to the same pure state
    (renewal statistics); the draw distribution is exact up to the
    bisection tolerance, independent of the grid spacing.
    """

    def __init__(
        self,
        model: LindbladModel,
        psi_reset: np.ndarray,
        t_max: float,
        dt: float | None = None,
        grid_points: int = 200_000,
    ):
        self.model = model
        self.psi_reset = np.asarray(psi_reset, dtype=complex)
        self.t_max = float(t_max)
        n = min(grid_points, max(int(np.ceil(t_max / dt)) + 1, 16)) if dt else grid_points
        self.t = np.linspace(0.0, t_max, n)
        self.dt = float(self.t[1] - self.t[0])
        eig = model.no_jump_eig()
        self._eig = eig
        if eig is not None:
            w, v, vinv = eig
            coeff = vinv @ self.psi_reset
            self._lam = w
            self._weights = v * coeff[None, :]  # state(t) = sum_s e^{-i w_s t} weights[:, s]
            self._gram = self._weights.conj().T @ self._weights
            amps = np.exp(-1j * np.outer(self.t, w)) @ self._weights.T
            self.p0 = np.einsum("ij,ij->i", amps, amps.conj()).real
        else:
            u = model.no_jump_propagator(self.dt)
            psi = self.psi_reset.copy()
            p0 = np.empty(n)
            p0[0] = np.vdot(psi, psi).real
            for i in range(1, n):
                psi = u @ psi
                p0[i] = np.vdot(psi, psi).real
            self.p0 = p0
        self.p0 = np.minimum.accumulate(np.minimum(self.p0, 1.0))

    def _survival(self, t: float) -> float:
        phases = np.exp(-1j * self._lam * t)
        return float((phases.conj() @ self._gram @ phases).real)

    def _state(self, t: float) -> np.ndarray:
        return self._weights @ np.exp(-1j * self._lam * t)

    def sample(self, rng):
        """One draw; (t, channel) or (None, None) if censored at t_max."""
        r = rng.random()
        if r < self.p0[-1]:
            return None, None
        k = int(np.searchsorted(-self.p0, -r, side="right")) - 1
        k = min(max(k, 0), len(self.t) - 2)
        if self._eig is not None:
            lo, hi = self.t[k], self.t[k] + self.dt
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                f_mid = self._survival(mid) - r
                if f_mid > 0.0:
                    lo = mid
                else:
                    hi = mid
                if (hi - lo) <= BISECT_RTOL * max(hi, 1e-300) or abs(f_mid) <= BISECT_RTOL * r:
                    break
            t_jump = 0.5 * (lo + hi)
            phi = self._state(t_jump)
        else:
            psi_k = self.model.propagate_no_jump(self.psi_reset, self.t[k])
            tau = _bisect_crossing(self.model, psi_k, self.p0[k], self.dt, r)
            t_jump = self.t[k] + tau
            phi = self.model.propagate_no_jump(psi_k, tau)
        return t_jump, _channel_at_jump(self.model, phi, rng)


# --- single-trajectory runner --------------------------------------------

def run_trajectory(
    model: LindbladModel,
    psi0: np.ndarray,
    t_grid: np.ndarray,
    config: JumpConfig,
    observables: dict[str, np.ndarray] | None = None,
    traj_index: int = 0,
    t_max_wait: float | None = None,
) -> TrajectoryRecord:
    """One seeded realization sampled on t_grid.

    t_grid points must lie on the dt lattice.  Deterministic given
    (config.seed, traj_index); the stepped methods run through the same
    kernels as ensemble averaging, so a record equals the matching member
    of any ensemble exactly.
    """
    observables = observables or {}
    t_grid = np.asarray(t_grid, dtype=float)
    dt = config.dt
    steps_at = np.rint(t_grid / dt)
    if np.abs(steps_at * dt - t_grid).max() > 1e-9 * max(dt, 1.0):
        raise ValueError("t_grid must lie on the dt lattice")

    if config.jump_method == "waiting-time":
        rng = trajectory_rng(config.seed, traj_index)
        psi = np.asarray(psi0, dtype=complex).copy()
        samples = {name: np.empty(t_grid.size) for name in observables}
        jt, jc = [], []
        _run_waiting(model, psi, t_grid, dt, rng, observables, samples, jt, jc,
                     t_max_wait if t_max_wait is not None else t_grid[-1] + 1.0)
    else:
        from .ensemble import _chunk_bernoulli, _chunk_minitraj

        kernel = _chunk_bernoulli if config.order == "first" else _chunk_minitraj
        obs_ops = [np.ascontiguousarray(op) for op in observables.values()]
        arr, _, _, events = kernel(
            model, psi0, t_grid, config, obs_ops, [traj_index], True
        )
        samples = {name: arr[0, :, j].copy() for j, name in enumerate(observables)}
        pairs = sorted(events[0])
        jt, jc = [], []
        for t, m in pairs:
            # double jumps inside one step share a nominal time; keep the
            # record strictly increasing at float resolution
            if jt and t <= jt[-1]:
                t = np.nextafter(jt[-1], np.inf)
            jt.append(t)
            jc.append(m)

    return TrajectoryRecord(
        seed=config.seed,
        traj_index=traj_index,
        dt=dt,
        t_grid=t_grid,
        jump_times=np.array(jt, dtype=float),
        jump_channels=np.array(jc, dtype=int),
        samples=samples,
    )


def _record(samples, observables, i, psi):
    for name, op in observables.items():
        samples[name][i] = expectation(op, psi).real


def _run_waiting(model, psi, t_grid, dt, rng, observables, samples, jt, jc, t_max):
    """Waiting-time trajectory; observables are sampled on the grid by
    conditional propagation from the last jump."""
    t_last = 0.0
    psi_last = psi.copy()
    next_jump, channel = waiting_time_sample(model, psi_last, rng, t_max, dt)
    for i, t in enumerate(t_grid):
        while next_jump is not None and t_last + next_jump <= t:
            t_last = t_last + next_jump
            phi = model.propagate_no_jump(psi_last, next_jump)
            psi_last = apply_jump(model, phi / np.linalg.norm(phi), channel)
            jt.append(t_last)
            jc.append(channel)
            next_jump, channel = waiting_time_sample(model, psi_last, rng, t_max, dt)
        phi = model.propagate_no_jump(psi_last, t - t_last)
        phi, _ = normalize(phi)
        _record(samples, observables, i, phi)
