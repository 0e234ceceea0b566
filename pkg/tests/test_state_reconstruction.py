import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from evmchaos.core_map import EvmState, quantum_step, t_matrix
from evmchaos.noise_kernels import NoiseMoments
from evmchaos.state_reconstruction import (
    MomentSet,
    characteristic_function,
    density_matrix_grid,
    gaussian_purity,
    heisenberg_defect,
    heisenberg_monitor,
)

HBAR = 2e-4


@st.composite
def physical_moments(draw):
    hbar = draw(st.floats(1e-4, 1.0))
    s_qq = draw(st.floats(0.05, 20.0)) * hbar
    s_qp = draw(st.floats(-2.0, 2.0)) * hbar
    excess = draw(st.floats(0.0, 5.0))
    s_pp = (hbar**2 / 4 + s_qp**2 / 4) / s_qq * (1 + excess)
    q = draw(st.floats(-3, 3))
    p = draw(st.floats(-3, 3))
    return MomentSet(q, p, s_qq, s_pp, s_qp, hbar)


def test_normalization():
    m = MomentSet(0.3, -1.0, 2e-4, 1e-4, 3e-5, HBAR)
    assert characteristic_function(m, 0.0, 0.0) == 1.0


def test_second_order_expansion_reproduces_moments():
    # C = <exp(i a p) exp(i b x)>: derivatives at the origin give ordered moments
    m = MomentSet(0.7, -0.4, 0.3, 0.5, 0.2, 0.25)
    h = 1e-4

    def c(a, b):
        return characteristic_function(m, a, b)

    d_a = (c(h, 0) - c(-h, 0)) / (2j * h)
    d_b = (c(0, h) - c(0, -h)) / (2j * h)
    d_aa = -(c(h, 0) - 2 * c(0, 0) + c(-h, 0)) / h**2
    d_bb = -(c(0, h) - 2 * c(0, 0) + c(0, -h)) / h**2
    d_ab = -(c(h, h) - c(h, -h) - c(-h, h) + c(-h, -h)) / (4 * h * h)
    assert d_a == pytest.approx(m.p, abs=1e-7)
    assert d_b == pytest.approx(m.q, abs=1e-7)
    assert d_aa == pytest.approx(m.p**2 + m.s_pp, abs=1e-6)
    assert d_bb == pytest.approx(m.q**2 + m.s_qq, abs=1e-6)
    # <p x> = <(px + xp)/2> + [p, x]/2 = q p + s_qp/2 - i hbar/2
    assert d_ab == pytest.approx(m.q * m.p + m.s_qp / 2 - 0.5j * m.hbar, abs=1e-6)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_coherent_modulus(a, b):
    m = MomentSet.coherent(0.2, 0.1, HBAR)
    assert abs(characteristic_function(m, a, b)) == pytest.approx(math.exp(-(HBAR / 4) * (a * a + b * b)))


@settings(max_examples=200)
@given(physical_moments(), st.floats(-20, 20), st.floats(-20, 20))
def test_reflection_relation_and_bound(m, a, b):
    c = characteristic_function(m, a, b)
    # the ordering phase makes C(-a,-b) = conj(C(a,b)) exp(i a b hbar)
    assert characteristic_function(m, -a, -b) == pytest.approx(np.conj(c) * np.exp(1j * a * b * m.hbar),
                                                                abs=1e-12)
    # the symmetric (Weyl) version is Hermitian
    weyl = c * np.exp(-0.5j * a * b * m.hbar)
    weyl_m = characteristic_function(m, -a, -b) * np.exp(-0.5j * a * b * m.hbar)
    assert weyl_m == pytest.approx(np.conj(weyl), abs=1e-12)
    assert abs(c) <= 1 + 1e-12


def test_coherent_reconstruction_matches_wavefunction():
    q, p = 0.3, -1.1
    m = MomentSet.coherent(q, p, HBAR)
    g = density_matrix_grid(m, 256)
    x = g.x_grid
    psi = (2 * math.pi * m.s_qq) ** -0.25 * np.exp(-(x - q) ** 2 / (4 * m.s_qq) + 1j * p * x / HBAR)
    assert np.max(np.abs(g.rho - np.outer(psi, psi.conj()))) < 1e-8 * np.max(np.abs(g.rho))
    diag = np.real(np.diag(g.rho))
    gauss = np.exp(-(x - q) ** 2 / (2 * m.s_qq)) / math.sqrt(2 * math.pi * m.s_qq)
    assert np.allclose(diag, gauss, atol=1e-9 * gauss.max())
    assert abs(g.trace - 1) < 1e-6 and g.hermiticity_residual < 1e-8 and g.renormalization == 1.0


def test_squeezed_reconstruction():
    g = density_matrix_grid(MomentSet(0.0, 0.0, HBAR / 4, HBAR, 0.0, HBAR), 256)
    assert abs(g.trace - 1) < 1e-6 and g.hermiticity_residual < 1e-8
    assert g.purity == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(physical_moments())
def test_purity_matches_gaussian_formula(m):
    g = density_matrix_grid(m, 256)
    assert g.purity <= 1 + 1e-4
    assert g.purity == pytest.approx(gaussian_purity(m), rel=1e-6)
    assert g.hermiticity_residual < 1e-8 * max(1.0, float(np.max(np.abs(g.rho))))


def test_grid_refinement():
    m = MomentSet.coherent(0.0, 0.4, HBAR)
    sd = math.sqrt(m.s_qq)
    a = density_matrix_grid(m, 256, 16 * sd)
    b = density_matrix_grid(m, 512, 32 * sd)
    # b has the same spacing; its central half coincides with a's grid
    sub = np.real(np.diag(b.rho))[128:384]
    assert np.allclose(b.x_grid[128:384], a.x_grid)
    assert np.max(np.abs(sub - np.real(np.diag(a.rho)))) < 1e-6


def test_reconstruction_errors():
    with pytest.raises(ValueError, match="hbar"):
        density_matrix_grid(MomentSet(0, 0, 1e-4, 1e-4, 0, 0.0), 256)
    with pytest.raises(ValueError, match="power of two"):
        density_matrix_grid(MomentSet.coherent(0, 0, HBAR), 300)
    with pytest.raises(ValueError, match="standard deviations"):
        density_matrix_grid(MomentSet.coherent(0, 0, HBAR), 256, x_span=1e-3)
    with pytest.raises(ValueError):
        MomentSet(0, 0, -1.0, 1.0, 0.0, HBAR)


def test_trace_renormalization_is_logged(caplog):
    m = MomentSet.coherent(0.0, 0.0, HBAR)
    g = density_matrix_grid(m, 8, 6.5 * math.sqrt(m.s_qq))
    assert g.renormalization != 1.0 and abs(g.trace - 1) < 1e-12
    assert "renormalized" in caplog.text


def test_json_roundtrip():
    m = MomentSet(0.1, 0.2, 3e-4, 4e-4, 1e-5, HBAR)
    import json

    assert MomentSet.from_json(json.dumps(m.to_dict())) == m
    assert MomentSet.from_state(EvmState(0.1, 0.2, 3e-4, 4e-4, 1e-5), HBAR) == m


def propagate_defect(t, s, nm, n):
    """Closed 2x2 covariance recursion for the linear map."""
    w0, g = t.omega0, t.gamma
    noise = np.array([[nm.s_ss, 0.5 * (-2 * g * nm.s_ss + w0 * nm.s_sc)],
                      [0.0, g * g * nm.s_ss + w0**2 * nm.s_cc - w0 * g * nm.s_sc]]) / w0**2
    noise[1, 0] = noise[0, 1]
    cov = np.array([[s.s_qq, s.s_qp / 2], [s.s_qp / 2, s.s_pp]])
    m = t.as_matrix()
    out = []
    for _ in range(n):
        cov = m @ cov @ m.T + noise
        out.append(np.linalg.det(cov) - HBAR**2 / 4)
    return np.array(out)


def orbit(s, t, nm, n):
    states = []
    for _ in range(n):
        s = quantum_step(s, t, 0.0, nm)
        states.append(s)
    return states


def test_heisenberg_defect_linear_without_noise():
    t = t_matrix(0.03, 10.0)
    s0 = EvmState.coherent(1.0, 0.0, HBAR)
    d = heisenberg_monitor(orbit(s0, t, NoiseMoments.zero(), 30), HBAR)
    n = np.arange(1, 31)
    analytic = (HBAR**2 / 4) * (np.exp(-4 * 0.03 * 10.0 * n) - 1)
    assert np.allclose(d, analytic, rtol=1e-10, atol=1e-22)
    assert heisenberg_defect(HBAR / 2, HBAR / 2, 0.0, HBAR) == 0.0


def test_heisenberg_defect_with_noise_is_nondecreasing():
    t = t_matrix(0.03, 10.0)
    nm = NoiseMoments(9.1e-5, 1.04e-4, 1.2e-5)
    s0 = EvmState.coherent(1.0, 0.0, HBAR)
    states = orbit(s0, t, nm, 40)
    d = heisenberg_monitor(states, HBAR)
    assert np.allclose(d, propagate_defect(t, s0, nm, 40), rtol=1e-9)
    assert np.all(np.diff(d) >= 0)
    rows = np.array([s.as_array() for s in states])
    assert np.array_equal(heisenberg_monitor(rows, HBAR), d)
