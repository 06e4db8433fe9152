import numpy as np
import pytest
from scipy import stats

from qtraj.analytic import tls_delay_p0, tls_waiting_cdf
from qtraj.core import SIGMA_01, basis_state, coherent_amplitudes, destroy
from qtraj.jump import (
    BranchTable,
    JumpConfig,
    RenewalWaitingSampler,
    apply_jump,
    density_scheme_step,
    jump_probability,
    no_jump_step,
    run_trajectory,
    step_first_order,
    step_fourth_order,
    step_second_order,
    waiting_time_sample,
)
from qtraj.lindblad import LindbladModel, StepSizeError, master_evolve
from qtraj.models import decaying_cavity, driven_tls, fock_superposition
from qtraj.rng import trajectory_rng
from conftest import random_state


class ForcedRng:
    """Deterministic stand-in yielding a fixed sequence of uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, n=None):
        if n is None:
            return self.values.pop(0)
        return np.array([self.values.pop(0) for _ in range(n)])


@pytest.fixture
def tls():
    return driven_tls(5.0, 0.0, 1.0)


def test_jump_probability_ground_state(tls):
    dp, per = jump_probability(tls.model, basis_state(2, 0), 1e-3)
    assert dp == 0.0
    assert per.tolist() == [0.0]


def test_jump_probability_excited(tls):
    dp, per = jump_probability(tls.model, basis_state(2, 1), 1e-3)
    assert dp == pytest.approx(2.0 * 1e-3)


def test_jump_probability_matches_expectations(rng):
    from qtraj.models import VSystemParams, v_system
    from qtraj.core import expectation

    spec = v_system(VSystemParams(2.0, 0.5, gamma22=0.3))
    psi = random_state(rng, 3)
    dp, per = jump_probability(spec.model, psi, 1e-3)
    for m, c in enumerate(spec.model.collapse_ops):
        brute = 1e-3 * expectation(c.conj().T @ c, psi).real
        assert per[m] == pytest.approx(brute, abs=1e-15)
    assert dp == pytest.approx(per.sum())


def test_jump_probability_guards(tls):
    with pytest.warns(UserWarning):
        jump_probability(tls.model, basis_state(2, 1), 0.1)
    with pytest.raises(StepSizeError):
        jump_probability(tls.model, basis_state(2, 1), 0.3)


def test_apply_jump_resets_tls(tls, rng):
    psi = random_state(rng, 2)
    if abs(psi[1]) < 1e-3:
        psi = np.array([0.6, 0.8], complex)
    out = apply_jump(tls.model, psi, 0)
    assert abs(np.vdot(basis_state(2, 0), out)) ** 2 == pytest.approx(1.0)


def test_apply_jump_fock_superposition():
    spec = decaying_cavity(1.0, dim=16, psi0=fock_superposition(16, (0, 10)))
    out = apply_jump(spec.model, spec.psi0, 0)
    assert abs(np.vdot(basis_state(16, 9), out)) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_apply_jump_flips_cat():
    dim = 28
    alpha = 2.0
    plus = coherent_amplitudes(alpha, dim) + coherent_amplitudes(-alpha, dim)
    plus = plus / np.linalg.norm(plus)
    spec = decaying_cavity(1.0, dim=dim, psi0=plus)
    out = apply_jump(spec.model, plus, 0)
    minus = coherent_amplitudes(alpha, dim) - coherent_amplitudes(-alpha, dim)
    minus = minus / np.linalg.norm(minus)
    assert abs(np.vdot(minus, out)) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_apply_jump_zero_probability(tls):
    with pytest.raises(ValueError):
        apply_jump(tls.model, basis_state(2, 0), 0)


def test_no_jump_step_closed_system(rng):
    h = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
    model = LindbladModel(h, ())
    psi = random_state(rng, 2)
    out = no_jump_step(model, psi, 0.3)
    assert np.vdot(out, out).real == pytest.approx(1.0, abs=1e-12)


def test_no_jump_step_pure_decay_norm():
    model = LindbladModel(np.zeros((2, 2), complex), (np.sqrt(2.0) * np.asarray(SIGMA_01),))
    psi = basis_state(2, 1)
    dt = 1e-3
    for _ in range(500):
        psi = no_jump_step(model, psi, dt)
    assert np.vdot(psi, psi).real == pytest.approx(np.exp(-2.0 * 0.5), rel=1e-9)


def test_no_jump_norm_matches_delay_closed_form(tls):
    # composed conditional steps reproduce the analytic survival to 1e-6
    psi = basis_state(2, 0)
    dt = 1e-3
    worst = 0.0
    for k in range(1, 1001):
        psi = no_jump_step(tls.model, psi, dt)
        worst = max(worst, abs(np.vdot(psi, psi).real - tls_delay_p0(k * dt, 5.0, 0.0, 1.0)))
    assert worst < 1e-9


def test_no_jump_norm_monotone(tls, rng):
    psi = random_state(rng, 2)
    last = 1.0
    for _ in range(200):
        psi = no_jump_step(tls.model, psi, 5e-3)
        n2 = np.vdot(psi, psi).real
        assert n2 <= last + 1e-12
        last = n2


def test_step_first_order_forced_branches(tls):
    psi = basis_state(2, 1)
    out, ch = step_first_order(tls.model, psi, 1e-3, ForcedRng([0.99]))
    assert ch is None
    out, ch = step_first_order(tls.model, psi, 1e-3, ForcedRng([0.0]))
    assert ch == 0
    assert abs(np.vdot(basis_state(2, 0), out)) ** 2 == pytest.approx(1.0)


def test_second_order_closed_system_always_unitary(rng):
    h = np.array([[0.0, 2.0], [2.0, 0.0]], complex)
    model = LindbladModel(h, ())
    psi = random_state(rng, 2)
    out, events = step_second_order(model, psi, 1e-2, ForcedRng([0.999999]))
    assert events == []
    assert np.vdot(out, out).real == pytest.approx(1.0, abs=1e-12)


def test_second_order_double_jump_branch():
    # r = 0.999 lands in the double-jump branch for |2> at dt = 0.05:
    # cumulative probabilities are ~0.905 / 0.953 / 0.998 / 1.000
    spec = decaying_cavity(1.0, dim=4, psi0=basis_state(4, 2))
    out, events = step_second_order(spec.model, spec.psi0, 0.05, ForcedRng([0.999]))
    assert len(events) == 2
    assert abs(np.vdot(basis_state(4, 0), out)) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_branch_probabilities_sum_to_one(rng):
    spec = decaying_cavity(1.0, dim=6)
    psi = random_state(rng, 6)
    for order, tol in (("second", 1e-6), ("fourth", 1e-10)):
        table = BranchTable(spec.model, 2e-3, order)
        total = 0.0
        for branch in table.branches:
            phi = table.apply(psi, branch)
            total += branch[0] * np.vdot(phi, phi).real
        assert total == pytest.approx(1.0, abs=tol)


def test_fourth_order_closed_system_unitary(rng):
    h = np.array([[0.0, 2.0], [2.0, 0.0]], complex)
    model = LindbladModel(h, ())
    psi = random_state(rng, 2)
    out, events = step_fourth_order(model, psi, 1e-2, ForcedRng([0.5]))
    assert events == []
    from scipy.linalg import expm

    ref = expm(-1j * h * 1e-2) @ psi
    assert np.abs(out - ref / np.linalg.norm(ref)).max() < 1e-10


def test_density_scheme_orders(tls):
    # per-step splitting error one order better for each scheme upgrade
    from qtraj.analytic import tls_rho11_transient

    errors = {}
    t_final = 2.0
    for order in ("first", "second", "fourth"):
        errs = []
        for dt in (0.1, 0.05):
            rho = np.diag([1.0, 0.0]).astype(complex)
            n = int(round(t_final / dt))
            for k in range(n):
                rho = density_scheme_step(tls.model, rho, dt, order)
            errs.append(abs(rho[1, 1].real - tls_rho11_transient(t_final, 5.0, 1.0)))
        errors[order] = np.log2(errs[0] / errs[1])
    assert errors["second"] - errors["first"] >= 0.8
    assert errors["fourth"] - errors["second"] >= 0.8


def test_waiting_time_pure_decay_exponential():
    gamma = 1.0
    model = LindbladModel(np.zeros((2, 2), complex), (np.sqrt(2 * gamma) * np.asarray(SIGMA_01),))
    rng = trajectory_rng(3, 0)
    waits = []
    for _ in range(2000):
        t, ch = waiting_time_sample(model, basis_state(2, 1), rng, t_max=20.0, dt_scan=1e-2)
        assert ch == 0
        waits.append(t)
    ks = stats.kstest(waits, lambda x: 1.0 - np.exp(-2.0 * gamma * np.asarray(x)))
    assert ks.pvalue > 0.01


def test_waiting_time_censoring():
    # ground state never jumps: censored
    model = LindbladModel(np.zeros((2, 2), complex), (np.sqrt(2.0) * np.asarray(SIGMA_01),))
    t, ch = waiting_time_sample(model, basis_state(2, 0), trajectory_rng(0, 0), 5.0, 1e-2)
    assert t is None and ch is None


def test_renewal_sampler_matches_driven_tls_distribution(tls):
    sampler = RenewalWaitingSampler(tls.model, tls.psi0, t_max=60.0)
    rng = trajectory_rng(123, 0)
    waits = np.array([sampler.sample(rng)[0] for _ in range(4000)], dtype=float)
    ks = stats.kstest(waits, lambda x: tls_waiting_cdf(x, 5.0, 0.0, 1.0))
    assert ks.pvalue > 0.01


def test_renewal_property_of_trajectory_gaps(tls):
    # with a pure reset state the inter-detection gaps of stepped
    # trajectories are i.i.d. draws from the waiting density (up to the
    # dt discretization of the Bernoulli record)
    from qtraj.ensemble import ensemble_average

    t = np.round(np.linspace(0, 10, 11), 3)
    cfg = JumpConfig(dt=1e-3, seed=77)
    res = ensemble_average(
        tls.model, tls.psi0, t, 64, cfg, {}, collect_records=True
    )
    gaps = []
    for events in res.records:
        times = np.array([tj for tj, _ in events])
        gaps.extend(np.diff(times).tolist())
    gaps = np.array(gaps)
    assert gaps.size > 300
    ks = stats.kstest(gaps, lambda x: tls_waiting_cdf(x, 5.0, 0.0, 1.0))
    assert ks.pvalue > 0.01
    # independence spot check: adjacent gaps uncorrelated
    first = np.concatenate([np.diff([tj for tj, _ in ev])[:-1] for ev in res.records if len(ev) > 2])
    second = np.concatenate([np.diff([tj for tj, _ in ev])[1:] for ev in res.records if len(ev) > 2])
    r = np.corrcoef(first, second)[0, 1]
    assert abs(r) < 3.0 / np.sqrt(first.size)


def test_run_trajectory_deterministic(tls):
    t = np.linspace(0, 3, 31)
    cfg = JumpConfig(dt=1e-3, seed=11)
    r1 = run_trajectory(tls.model, tls.psi0, t, cfg, tls.observables)
    r2 = run_trajectory(tls.model, tls.psi0, t, cfg, tls.observables)
    assert np.array_equal(r1.jump_times, r2.jump_times)
    assert np.array_equal(r1.samples["rho11"], r2.samples["rho11"])


def test_run_trajectory_sawtooth_reset(tls):
    # population rises from zero after every jump (reset to ground state)
    cfg = JumpConfig(dt=1e-3, seed=5)
    t = np.arange(0, 8.0 + 1e-12, 1e-3)
    rec = run_trajectory(tls.model, tls.psi0, t, cfg, tls.observables)
    assert rec.jump_times.size >= 3
    rho11 = rec.samples["rho11"]
    for tj in rec.jump_times:
        idx = int(round(tj / 1e-3))
        if idx + 2 < len(rho11):
            assert rho11[idx] < 0.08  # just reset near the ground state
    assert np.all(np.diff(rec.jump_times) > 0)


def test_run_trajectory_grid_must_match_lattice(tls):
    cfg = JumpConfig(dt=1e-3, seed=0)
    with pytest.raises(ValueError):
        run_trajectory(tls.model, tls.psi0, np.array([0.0, 0.00153]), cfg)


def test_waiting_time_method_matches_master(tls):
    from qtraj.ensemble import ensemble_average
    from qtraj.analytic import tls_rho11_transient

    t = np.linspace(0, 4, 21)
    cfg = JumpConfig(dt=1e-2, seed=31, jump_method="waiting-time")
    n = 256
    res = ensemble_average(tls.model, tls.psi0, t, n, cfg, tls.observables)
    oracle = tls_rho11_transient(t, 5.0, 1.0)
    rms = np.sqrt(np.mean((res.mean["rho11"] - oracle) ** 2))
    assert rms <= 3.0 / np.sqrt(n)
