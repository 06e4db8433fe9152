import numpy as np
import pytest

from qtraj.analytic import tls_rho11_transient
from qtraj.core import basis_state, coherent_amplitudes, destroy, expectation
from qtraj.diffusion import (
    LocalOscillator,
    QsdConfig,
    heterodyne_jump_ops,
    homodyne_jump_probability,
    homodyne_model,
    qsd_ensemble,
    qsd_step,
    quadrature_expectation,
    run_qsd_trajectory,
    wiener_sample,
)
from qtraj.ensemble import ensemble_average
from qtraj.jump import JumpConfig, jump_probability, run_trajectory
from qtraj.lindblad import LindbladModel, liouvillian_apply
from qtraj.models import driven_tls
from qtraj.rng import trajectory_rng
from conftest import random_state


def test_wiener_moments():
    rng = trajectory_rng(1, 0)
    dt = 1e-3
    n = 200_000
    xs = np.array([wiener_sample(dt, rng, 2) for _ in range(n // 2)])
    re, im = xs.real.ravel(), xs.imag.ravel()
    assert abs(re.mean()) < 5 * np.sqrt(dt / len(re))
    assert abs(im.mean()) < 5 * np.sqrt(dt / len(im))
    assert re.var() == pytest.approx(dt, rel=0.02)
    assert im.var() == pytest.approx(dt, rel=0.02)
    assert abs(np.mean(re * im)) < 0.02 * dt
    # channel independence
    cross = np.mean(xs[:, 0].real * xs[:, 1].real)
    assert abs(cross) < 0.02 * dt


def test_qsd_step_deterministic_for_closed_system(rng):
    h = np.array([[0.0, 1.5], [1.5, 0.0]], complex)
    model = LindbladModel(h, ())
    psi = random_state(rng, 2)
    out = qsd_step(model, psi, 1e-3, np.zeros(0, complex), "normalized")
    from scipy.linalg import expm

    ref = expm(-1j * h * 1e-3) @ psi
    assert np.abs(out - ref / np.linalg.norm(ref)).max() < 1e-6


def test_qsd_single_step_drift_matches_master(rng):
    # single-step noise average of the projector increment reproduces the
    # master-equation derivative to O(dt^2)
    spec = driven_tls(4.0, 0.0, 1.0)
    psi = random_state(rng, 2)
    rho = np.outer(psi, psi.conj())
    dt = 1e-4
    gen = trajectory_rng(9, 0)
    acc = np.zeros((2, 2), complex)
    n = 40000
    for _ in range(n):
        out = qsd_step(spec.model, psi, dt, wiener_sample(dt, gen, 1), "normalized")
        acc += np.outer(out, out.conj())
    emp = (acc / n - rho) / dt
    exact = liouvillian_apply(spec.model, rho)
    assert np.abs(emp - exact).max() < 0.15 * max(np.abs(exact).max(), 1.0)


def test_qsd_ensemble_matches_decay():
    gamma = 1.0
    from qtraj.core import SIGMA_01

    model = LindbladModel(np.zeros((2, 2), complex), (np.sqrt(2 * gamma) * np.asarray(SIGMA_01),))
    t = np.linspace(0, 2, 21)
    cfg = QsdConfig(dt=1e-3, seed=8)
    obs = {"rho11": np.diag([0.0, 1.0]).astype(complex)}
    res = qsd_ensemble(model, basis_state(2, 1), t, 256, cfg, obs)
    oracle = np.exp(-2 * gamma * t)
    dev = np.abs(res.mean["rho11"] - oracle)
    assert (dev <= 3.0 * np.maximum(res.stderr["rho11"], 2e-3)).all()


def test_qsd_ensemble_matches_driven_tls():
    spec = driven_tls(5.0, 0.0, 1.0)
    t = np.linspace(0, 4, 41)
    cfg = QsdConfig(dt=1e-3, seed=3)
    res = qsd_ensemble(spec.model, spec.psi0, t, 512, cfg, spec.observables)
    oracle = tls_rho11_transient(t, 5.0, 1.0)
    dev = np.abs(res.mean["rho11"] - oracle)
    assert (dev <= 3.0 * np.maximum(res.stderr["rho11"], 2e-3)).all()


def test_qsd_normalized_keeps_unit_norm(rng):
    spec = driven_tls(5.0, 0.0, 1.0)
    psi = spec.psi0.copy()
    gen = trajectory_rng(2, 0)
    for _ in range(500):
        psi = qsd_step(spec.model, psi, 1e-3, wiener_sample(1e-3, gen, 1), "normalized")
        assert abs(np.vdot(psi, psi).real - 1.0) < 1e-9


def test_qsd_linear_variant_runs_and_diagnoses():
    spec = driven_tls(5.0, 0.0, 1.0)
    t = np.linspace(0, 1, 11)
    cfg = QsdConfig(dt=1e-3, seed=4, variant="linear")
    samples = run_qsd_trajectory(spec.model, spec.psi0, t, cfg, spec.observables)
    assert np.all(np.isfinite(samples["rho11"]))
    with pytest.raises(FloatingPointError):
        qsd_step(spec.model, np.zeros(2, complex), 1e-3, np.zeros(1, complex), "linear")


def test_qsd_ensemble_rejects_linear():
    spec = driven_tls(5.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        qsd_ensemble(
            spec.model, spec.psi0, np.linspace(0, 1, 5), 4,
            QsdConfig(dt=1e-3, variant="linear"), spec.observables,
        )


def test_homodyne_alpha_zero_is_identity():
    spec = driven_tls(5.0, 0.0, 1.0)
    assert homodyne_model(spec, LocalOscillator(0.0)) is spec


def test_homodyne_gauge_preserves_liouvillian(rng):
    spec = driven_tls(5.0, 0.3, 1.0)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    rho /= rho.trace()
    for alpha in (0.5, 1.0, 10.0, 0.3 + 0.4j):
        hspec = homodyne_model(spec, LocalOscillator(alpha))
        dev = np.abs(
            liouvillian_apply(hspec.model, rho) - liouvillian_apply(spec.model, rho)
        ).max()
        assert dev < 1e-12


def test_homodyne_jump_probability_rule(rng):
    # dt <C'+C'> equals the mixed-output counting rate
    spec = driven_tls(4.0, 0.0, 1.0)
    alpha = 0.8
    hspec = homodyne_model(spec, LocalOscillator(alpha))
    psi = random_state(rng, 2)
    gamma = 1.0
    s01 = np.array([[0, 1], [0, 0]], complex)
    expected = 2.0 * gamma * (
        expectation(s01.conj().T @ s01, psi).real
        + 2.0 * (np.conj(alpha) * expectation(s01, psi)).real
        + abs(alpha) ** 2
    )
    assert homodyne_jump_probability(hspec, psi, 1e-3) == pytest.approx(1e-3 * expected)
    dp, _ = jump_probability(hspec.model, psi, 1e-3)
    assert dp == pytest.approx(1e-3 * expected)


def test_homodyne_trajectories_bit_identical_at_zero():
    spec = driven_tls(4.0, 0.0, 1.0)
    hspec = homodyne_model(spec, LocalOscillator(0.0))
    t = np.linspace(0, 4, 41)
    cfg = JumpConfig(dt=1e-3, seed=17)
    r1 = run_trajectory(spec.model, spec.psi0, t, cfg, spec.observables)
    r2 = run_trajectory(hspec.model, hspec.psi0, t, cfg, spec.observables)
    assert np.array_equal(r1.samples["rho11"], r2.samples["rho11"])
    assert np.array_equal(r1.jump_times, r2.jump_times)


def test_homodyne_ensemble_alpha_independent():
    spec = driven_tls(4.0, 0.0, 1.0)
    t = np.linspace(0, 3, 31)
    oracle = tls_rho11_transient(t, 4.0, 1.0)
    for alpha, dt in ((0.5, 1e-3), (1.0, 1e-3)):
        hspec = homodyne_model(spec, LocalOscillator(alpha))
        cfg = JumpConfig(dt=dt, seed=23)
        res = ensemble_average(hspec.model, hspec.psi0, t, 400, cfg, spec.observables)
        dev = np.abs(res.mean["rho11"] - oracle)
        assert (dev <= 3.5 * np.maximum(res.stderr["rho11"], 2e-3)).all()


def test_heterodyne_rates_vacuum_and_sum():
    dim = 8
    j_c, j_d, rates = heterodyne_jump_ops(1.0, 2.0, 3.0, 5.0, 0.0, dim)
    vac = basis_state(dim, 0)
    rc, rd = rates(vac)
    assert rc == pytest.approx(3.0**2 * 2.0 / 2.0)
    assert rd == pytest.approx(rc)
    # the sum of the two operators carries only the local oscillator
    total = (j_c + j_d) / np.sqrt(2.0)
    assert np.abs(total - np.sqrt(2.0) * 3.0 * np.eye(dim)).max() < 1e-12


def test_heterodyne_large_amplitude_limit_is_state_diffusion():
    # windowed quadrature increments of the two-counter jump record at
    # large oscillator amplitude are statistically indistinguishable from
    # the diffusion-picture increments (two-sample KS)
    from scipy import stats as sps

    from qtraj.diffusion import (
        heterodyne_quadrature_increments,
        qsd_quadrature_increments,
    )

    dim = 14
    psi0 = coherent_amplitudes(1.2, dim)
    het = heterodyne_quadrature_increments(
        1.0, 1.0, 12.0, 120.0, dim, psi0,
        dt=2e-4, window_steps=500, n_windows=20, n_traj=30, seed=5,
    )
    qsd = qsd_quadrature_increments(
        1.0, dim, psi0, dt=2e-4, window_steps=500, n_windows=20, n_traj=30, seed=6
    )
    ks = sps.ks_2samp(het, qsd)
    assert ks.pvalue > 0.01
    assert het.std() == pytest.approx(qsd.std(), rel=0.25)


def test_heterodyne_demo_ladder_and_increments():
    from qtraj.diffusion import qsd_from_heterodyne_demo

    report = qsd_from_heterodyne_demo(
        betas=(2.0, 6.0, 12.0), n_traj=10, t_max=1.5, seed=11
    )
    jumps = report["mean_jumps"]
    kicks = report["mean_kick"]
    assert jumps[0] < jumps[1] < jumps[2]
    assert kicks[2] <= 0.2 * kicks[0]
    assert report["increment_ks_pvalue"] > 0.01


def test_heterodyne_rate_difference_tracks_quadrature():
    dim = 12
    beta = 4.0
    g_cav, g_loc = 1.0, 2.0
    psi = coherent_amplitudes(1.2, dim)
    for t, omega in ((0.0, 0.0), (0.3, 2.0)):
        j_c, j_d, rates = heterodyne_jump_ops(g_cav, g_loc, beta, omega, t, dim)
        rc, rd = rates(psi)
        x = quadrature_expectation(psi, -omega * t)
        assert rc - rd == pytest.approx(beta * np.sqrt(g_cav * g_loc) * x, rel=1e-10)
        assert rc - rd > 0  # positive quadrature here
