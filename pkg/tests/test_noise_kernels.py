import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from evmchaos.core_map import Params
from evmchaos.noise_kernels import (
    NoiseMoments,
    QuadratureError,
    adaptive_gk15,
    base_moments,
    combine_moments,
    kernel_arrays,
    kernel_triple,
    noise_table,
    thermal_weight,
)


def kernel_2d(omega, gamma, tau):
    """Kernels as plain double integrals."""
    w0 = math.sqrt(1 - gamma * gamma)
    out = []
    for f1, f2, scale in ((math.sin, math.sin, 1), (math.cos, math.cos, 1), (math.sin, math.cos, 2)):
        def f(y, x):
            return math.exp(-gamma * (x + y)) * f1(w0 * x) * f2(w0 * y) * math.cos(omega * (x - y))

        out.append(scale * integrate.dblquad(f, 0, tau, 0, tau, epsabs=1e-13, epsrel=1e-13)[0])
    return out


def real_integrand(omega, p):
    """Independent integrand: real antiderivatives of the damped one-dimensional integrals."""
    g, tau = p.gamma, p.tau
    w0 = math.sqrt(1 - g * g)
    e = math.exp(-g * tau)

    def i_sin(k):
        return (k - e * (g * np.sin(k * tau) + k * np.cos(k * tau))) / (g * g + k * k)

    def i_cos(k):
        return (g + e * (k * np.sin(k * tau) - g * np.cos(k * tau))) / (g * g + k * k)

    kp, km = w0 + omega, w0 - omega
    # sin(w0 x) cos(w x), sin(w0 x) sin(w x), cos(w0 x) cos(w x), cos(w0 x) sin(w x)
    a_c = 0.5 * (i_sin(kp) + i_sin(km))
    a_s = 0.5 * (i_cos(km) - i_cos(kp))
    b_c = 0.5 * (i_cos(kp) + i_cos(km))
    b_s = 0.5 * (i_sin(kp) - i_sin(km))
    kern = np.array([a_c**2 + a_s**2, b_c**2 + b_s**2, 2 * (a_c * b_c + a_s * b_s)])
    with np.errstate(divide="ignore", invalid="ignore"):
        x = p.hbar * omega / (2 * p.kbt)
        w = np.where(omega > 0, p.hbar * omega / np.tanh(x), 2 * p.kbt)
    return kern * (2 * g / math.pi) * w * np.exp(-omega / p.omega_c)


def test_kernel_closed_form_matches_2d_quadrature():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(50):
        gamma = rng.uniform(0.005, 0.5)
        tau = rng.uniform(0.5, 12.0)
        omega = rng.uniform(0.0, 6.0)
        k = kernel_triple(omega, math.sqrt(1 - gamma**2), gamma, tau)
        ref = kernel_2d(omega, gamma, tau)
        worst = max(worst, max(abs(a - b) for a, b in zip((k.g_ss, k.g_cc, k.g_sc), ref)))
    assert worst < 1e-10


def test_kernel_at_resonance_and_zero_frequency():
    g, tau = 0.03, 10.0
    w0 = math.sqrt(1 - g * g)
    for omega in (0.0, w0, w0 * (1 + 1e-9)):
        k = kernel_triple(omega, w0, g, tau)
        assert np.allclose((k.g_ss, k.g_cc, k.g_sc), kernel_2d(omega, g, tau), atol=1e-10)
    with pytest.raises(ValueError):
        kernel_triple(-1.0, w0, g, tau)


@given(st.floats(0.0, 50.0))
def test_kernels_nonnegative_and_cauchy_schwarz(omega):
    g_ss, g_cc, g_sc = kernel_arrays(np.array([omega]), math.sqrt(1 - 0.03**2), 0.03, 10.0)
    assert g_ss[0] >= 0 and g_cc[0] >= 0
    assert abs(g_sc[0]) <= 2 * math.sqrt(g_ss[0] * g_cc[0]) + 1e-12


def test_thermal_weight_limits_and_series_continuity():
    w = np.array([0.0, 1e-8, 1e-3, 1.0, 10.0])
    assert np.all(thermal_weight(w, 0.0, 0.5) == 1.0)
    assert np.allclose(thermal_weight(w, 0.2, 0.0), 0.2 * w)
    hb, kt = 1e-3, 1e-3
    x_switch = 1e-4 * 2 * kt / hb
    below = thermal_weight(np.array([x_switch * (1 - 1e-9)]), hb, kt)[0]
    above = thermal_weight(np.array([x_switch * (1 + 1e-9)]), hb, kt)[0]
    assert below == pytest.approx(above, rel=1e-13)
    assert thermal_weight(np.array([0.0]), hb, kt)[0] == 2 * kt
    big = thermal_weight(np.array([1e4]), hb, kt)[0]
    assert big == pytest.approx(hb * 1e4, rel=1e-12)


def test_base_moments_match_dense_trapezoid():
    rng = np.random.default_rng(7)
    for _ in range(10):
        p = Params(gamma=rng.uniform(0.01, 0.1), tau=rng.uniform(2, 12),
                   hbar=10 ** rng.uniform(-4, -2), kbt=10 ** rng.uniform(-4, -2),
                   omega_c=float(rng.choice([1.0, 5.0, 25.0])))
        x = np.linspace(0.0, 40 * p.omega_c, 2**20 + 1)
        ref = integrate.trapezoid(real_integrand(x, p), x)
        got = base_moments(p).as_array()
        assert np.allclose(got, ref, rtol=1e-7, atol=0)


@pytest.mark.parametrize("omega_c", [1.0, 5.0, 25.0])
def test_classical_limit_lorentzian(omega_c):
    # hbar = 0: the cutoff spectrum integrates to a Lorentzian in the time difference
    p = Params(kbt=3e-3, omega_c=omega_c)
    g, w0, tau = p.gamma, p.omega0, p.tau
    nm = base_moments(p)
    refs = []
    for f1, f2, scale in ((math.sin, math.sin, 1), (math.cos, math.cos, 1), (math.sin, math.cos, 2)):
        def f(y, x):
            return (math.exp(-g * (x + y)) * f1(w0 * x) * f2(w0 * y)
                    * omega_c / (1 + (omega_c * (x - y)) ** 2))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val = integrate.dblquad(f, 0, tau, 0, tau, epsabs=0, epsrel=1e-11)[0]
        refs.append(scale * val * 4 * g * p.kbt / math.pi)
    assert np.allclose(nm.as_array(), refs, rtol=1e-8)


def test_zero_noise_is_exactly_zero():
    nm = base_moments(Params())
    assert nm.is_zero and nm.as_array().tolist() == [0.0, 0.0, 0.0]
    assert combine_moments(nm, 1.3, 0.03, 0.99) == (0.0, 0.0, 0.0)


def test_moments_grow_with_hbar_and_temperature():
    base = Params(hbar=1e-3, kbt=1e-3)
    m0 = base_moments(base).as_array()
    assert np.all(base_moments(base.with_(hbar=2e-3)).as_array()[:2] > m0[:2])
    assert np.all(base_moments(base.with_(kbt=2e-3)).as_array()[:2] > m0[:2])


def test_cache_ignores_kick_strength():
    p = Params(hbar=1e-3, kbt=2e-3)
    assert base_moments(p) is base_moments(p.with_(v0=7.0))
    nm = base_moments(p)
    assert nm.abs_error < 1e-9 * nm.s_ss and nm.tail_bound < 1e-12 * nm.s_ss


def test_combine_moments_formulae():
    nm = NoiseMoments(2.0, 3.0, 0.5)
    w0, g, v2 = 0.9, 0.1, 0.4
    ff, hh, fh = combine_moments(nm, v2, g, w0)
    a = g + v2
    # f = J_s / w0, h = (-a J_s + w0 J_c) / w0
    assert ff == pytest.approx(2.0 / w0**2)
    assert hh == pytest.approx((a * a * 2.0 + w0 * w0 * 3.0 - w0 * a * 0.5) / w0**2)
    assert fh == pytest.approx((-2 * a * 2.0 + w0 * 0.5) / w0**2)


def test_adaptive_gk15_accuracy_and_failure():
    val, err, _ = adaptive_gk15(lambda x: np.array([np.sin(x), np.exp(-x)]), [0.0, 2.0, math.pi],
                                epsrel=1e-12)
    assert val[0] == pytest.approx(2.0, rel=1e-12)
    assert val[1] == pytest.approx(1 - math.exp(-math.pi), rel=1e-12)
    with pytest.raises(QuadratureError) as info:
        adaptive_gk15(lambda x: np.array([np.abs(x - 0.3) ** -0.99]), [0.0, 1.0], epsrel=1e-14,
                      max_intervals=50)
    assert info.value.achieved > 0


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(1e-4, 1e-2))
def test_noise_table_columns(hbar, kbt):
    p = Params(hbar=hbar, kbt=kbt)
    tab = noise_table(p, np.linspace(0, 5, 11))
    assert tab.shape == (11, 7)
    assert np.allclose(tab[:, 4:], real_integrand(tab[:, 0], p).T, rtol=1e-9, atol=1e-18)
