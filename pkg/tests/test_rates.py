import numpy as np
import pytest

from qtraj.rates import (
    EinsteinParams,
    Populations,
    collapse_time,
    counting_distribution,
    counting_log_probability,
    g2_rate_saturated,
    mandel_q,
    mandel_q_asymptote,
    mandel_q_telegraph_limit,
    rate_integrate,
    rate_steady_state,
    telegraph_estimates,
)


@pytest.fixture
def saturated():
    # deep saturation of the strong transition (100x), shelving hierarchy 10x
    return EinsteinParams(a1=1.0, a2=0.0, b1w1=100.0, b2w2=0.1)


def test_populations_validation():
    with pytest.raises(ValueError):
        Populations(0.5, 0.6, 0.2)
    with pytest.raises(ValueError):
        Populations(-0.1, 0.9, 0.2)


def test_rate_integrate_all_zero_constant():
    params = EinsteinParams(0.0, 0.0, 0.0, 0.0)
    out = rate_integrate(params, Populations(0.4, 0.35, 0.25), np.linspace(0, 5, 6))
    assert np.abs(out - out[0]).max() < 1e-12


def test_rate_integrate_conserves_population(saturated):
    out = rate_integrate(saturated, Populations(1.0, 0.0, 0.0), np.linspace(0, 20, 201))
    assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-10
    assert out.min() > -1e-12 and out.max() < 1.0 + 1e-12


def test_rate_transient_plateau_then_decline(saturated):
    # quasi-plateau near 1/2 on the two-level time scale, then toward 1/3
    t = np.linspace(0, 80.0, 2001)
    out = rate_integrate(saturated, Populations(1.0, 0.0, 0.0), t)
    rho11 = out[:, 1]
    short = rho11[(t > 0.05) & (t < 0.3)]
    assert np.abs(short - 0.5).max() < 0.06
    ss = rate_steady_state(saturated)
    assert abs(rho11[-1] - ss.rho11) < 1e-4
    assert abs(ss.rho11 - 1.0 / 3.0) < 0.02
    assert abs(ss.rho22 - 1.0 / 3.0) < 0.02 * (1.0 / 3.0)
    # the two stages are separated: plateau clearly above the asymptote
    assert short.min() > ss.rho11 + 0.1


def _saturated_closed_forms(p, t):
    slow = p.a2 + 1.5 * p.b2w2
    fast = 2.0 * p.b1w1 + p.a1 + 0.5 * p.b2w2
    rho11_cf = (
        p.b2w2 / (2.0 * (2.0 * p.a2 + 3.0 * p.b2w2)) * np.exp(-slow * t)
        - 0.5 * np.exp(-fast * t)
        + (p.a2 + p.b2w2) / (2.0 * p.a2 + 3.0 * p.b2w2)
    )
    rho22_cf = p.b2w2 / (2.0 * p.a2 + 3.0 * p.b2w2) * (1.0 - np.exp(-slow * t))
    return rho11_cf, rho22_cf


def test_rate_integrate_matches_saturated_closed_forms(saturated):
    # the strong-driving closed forms are leading order in 1/saturation:
    # the error must shrink proportionally as the induced rate grows
    t = np.linspace(0, 6.0, 121)
    errs = []
    for b1w1 in (100.0, 1000.0):
        p = EinsteinParams(a1=10.0, a2=0.0, b1w1=b1w1, b2w2=1.0)
        out = rate_integrate(p, Populations(1.0, 0.0, 0.0), t)
        rho11_cf, rho22_cf = _saturated_closed_forms(p, t)
        errs.append(max(np.abs(out[:, 1] - rho11_cf).max(), np.abs(out[:, 2] - rho22_cf).max()))
    assert errs[0] < 0.05
    assert errs[1] < errs[0] / 5.0


def test_rate_steady_state_closed_form_fixed_point(saturated):
    ss = rate_steady_state(saturated)
    t = np.linspace(0, 150, 76)
    out = rate_integrate(saturated, Populations(1.0, 0.0, 0.0), t)
    assert np.abs(out[-1] - ss.as_array()).max() < 1e-8


def test_rate_steady_state_limits():
    # induced >> spontaneous: even distribution
    p = EinsteinParams(a1=1e-3, a2=1e-3, b1w1=100.0, b2w2=100.0)
    ss = rate_steady_state(p)
    assert np.abs(ss.as_array() - 1.0 / 3.0).max() < 1e-3
    # decoupled shelf
    p2 = EinsteinParams(a1=1.0, a2=0.0, b1w1=10.0, b2w2=0.0)
    assert rate_steady_state(p2).rho22 == 0.0
    with pytest.raises(ValueError):
        rate_steady_state(EinsteinParams(0.0, 0.0, 0.0, 0.0))


def test_g2_saturated_values(saturated):
    tau = np.linspace(0, 80, 2001)
    g11, g22 = g2_rate_saturated(saturated, tau)
    assert g11[0] == pytest.approx(0.0, abs=1e-12)
    assert g22[0] == pytest.approx(0.0, abs=1e-12)
    assert g11[-1] == pytest.approx(1.0, abs=1e-3)
    g11s, _ = g2_rate_saturated(saturated, tau, simplified=True)
    assert g11s[0] == pytest.approx(0.0, abs=1e-12)
    assert np.abs(g11s - g11).max() < 0.05


def test_g2_warns_outside_regime():
    with pytest.warns(UserWarning):
        g2_rate_saturated(EinsteinParams(1.0, 1.0, 1.0, 1.0), np.linspace(0, 1, 10))


def test_g2_equals_population_relaxation(saturated):
    # the correlation curves follow the same exponentials as the populations
    p = saturated
    tau = np.linspace(0, 80, 2001)
    _, g22 = g2_rate_saturated(p, tau)
    pops = rate_integrate(p, Populations(1.0, 0.0, 0.0), tau)
    rho22_norm = pops[:, 2] / rate_steady_state(p).rho22
    assert np.abs(g22 - rho22_norm).max() < 0.01


def test_telegraph_estimates():
    # weak shelf rate keeps the quasi-plateau flat on the readout window
    p = EinsteinParams(a1=10.0, a2=0.0, b1w1=100.0, b2w2=0.5)
    t_b, t_d, hump = telegraph_estimates(p)
    # rate of leaving the 0-1 sector from rho00 ~ 1/2
    assert t_b == pytest.approx(2.0 / p.b2w2, rel=0.05)
    assert t_d == pytest.approx(1.0 / (p.a2 + p.b2w2))
    # hump identity against the rate-equation curves within 5%: read the
    # plateau after the fast transient died, before the slow decay bites
    t = np.linspace(0, 60, 6001)
    pops = rate_integrate(p, Populations(1.0, 0.0, 0.0), t)
    rho11 = pops[:, 1]
    quasi = rho11[np.argmin(np.abs(t - 0.04))]
    ratio = (quasi - rho11[-1]) / rho11[-1]
    assert hump == pytest.approx(ratio, rel=0.05)
    assert t_d / t_b == pytest.approx(hump, rel=0.1)


def test_telegraph_estimates_oracle_gradient(saturated):
    # numeric gradient of the integrated equations at t = 0
    p = saturated
    rho00_tls = (p.a1 + p.b1w1) / (p.a1 + 2.0 * p.b1w1)
    start = Populations(rho00_tls, 1.0 - rho00_tls, 0.0)
    t = np.array([0.0, 1e-5])
    out = rate_integrate(p, start, t)
    grad = (out[1, 2] - out[0, 2]) / 1e-5
    t_b, _, _ = telegraph_estimates(p)
    assert 1.0 / t_b == pytest.approx(grad, rel=1e-3)
    # dark gradient from the shelf
    out2 = rate_integrate(p, Populations(0.0, 0.0, 1.0), t)
    grad2 = -(out2[1, 2] - out2[0, 2]) / 1e-5
    assert grad2 == pytest.approx(p.a2 + p.b2w2, rel=1e-3)


def test_collapse_time():
    assert collapse_time(np.e, 1.0) == pytest.approx(1.0)
    assert collapse_time(1e4, 1.0) == pytest.approx(np.log(1e4), rel=1e-12)
    t_b, t_d = 100.0, 0.5
    tau = collapse_time(t_b, t_d)
    assert tau / t_b == pytest.approx((t_d / t_b) * np.log(t_b / t_d))
    with pytest.raises(ValueError):
        collapse_time(1.0, 2.0)


def test_mandel_q_poissonian_zero():
    tau = np.linspace(0, 50, 501)
    q = mandel_q(np.ones_like(tau), 2.0, tau)
    assert np.abs(q).max() < 1e-9


def test_mandel_q_no_dark_periods():
    assert mandel_q_asymptote(10.0, 0.0, 1.0) == 0.0


def test_mandel_q_telegraph_asymptote(saturated):
    # Q(inf) from the correlation curve equals the telegraph limit, up to
    # the finite-saturation offsets in the gradient-based t_bright
    p = saturated
    t_b, t_d, _ = telegraph_estimates(p)
    tau = np.linspace(0, 2000.0, 40001)
    g11, _ = g2_rate_saturated(p, tau)
    i_mean = p.a1 * rate_steady_state(p).rho11
    q = mandel_q(g11, i_mean, tau)
    expected = mandel_q_telegraph_limit(t_b, t_d, i_mean)
    assert q[-1] == pytest.approx(expected, rel=0.05)


def test_counting_distribution_two_state():
    w0 = counting_distribution(0, 1.0, "two-state", zero_excess=1.0 / 3.0, rate=10.0)
    assert w0 > 1.0 / 3.0
    n = np.arange(0, 200)
    w = counting_distribution(n, 1.0, "two-state", zero_excess=1.0 / 3.0, rate=10.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-10)


def test_counting_distribution_huge_n_log_space():
    # W(1, T) at mu ~ 1e8 is ~ 1e8 exp(-1e8), i.e. zero to double precision
    logw = counting_log_probability(1.0, 1e8)
    assert logw == pytest.approx(np.log(1e8) - 1e8, rel=1e-12)
    assert np.isfinite(counting_log_probability(1e9, 1e8))
    w = counting_distribution(1, 1.0, "poisson-with-zero-excess", rate=2e8, efficiency=1.0)
    assert w == 0.0  # underflows to an exact zero, no overflow on the way


def test_counting_distribution_validation():
    with pytest.raises(ValueError):
        counting_distribution(-1, 1.0)
    with pytest.raises(ValueError):
        counting_distribution(0, 1.0, zero_excess=1.5)
    with pytest.raises(ValueError):
        counting_distribution(0, 1.0, mode="bogus")
