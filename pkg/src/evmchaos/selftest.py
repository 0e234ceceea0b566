"""Quick oracle checks runnable from an installed package."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .core_map import EvmState, Params, classical_step, quantum_step, t_matrix
from .lyapunov import evm_jacobian, largest_lyapunov
from .noise_kernels import NoiseMoments, kernel_triple
from .state_reconstruction import MomentSet, density_matrix_grid


def _check_t_matrix():
    gamma, tau = 0.03, 10.0
    t = t_matrix(gamma, tau)

    def rhs(_, y):
        return [y[1], -y[0] - 2.0 * gamma * y[1]]

    cols = [integrate.solve_ivp(rhs, (0, tau), e, rtol=1e-12, atol=1e-14).y[:, -1] for e in ([1, 0], [0, 1])]
    err = float(np.max(np.abs(np.column_stack(cols) - t.as_matrix())))
    return err < 1e-9, f"max deviation from ODE solution {err:.2e}"


def _check_kernels():
    gamma, tau = 0.03, 10.0
    w0 = math.sqrt(1 - gamma**2)
    worst = 0.0
    for omega in (0.3, w0, 2.5):
        k = kernel_triple(omega, w0, gamma, tau)

        def g(x, y, f1, f2):
            return math.exp(-gamma * (x + y)) * f1(w0 * x) * f2(w0 * y) * math.cos(omega * (x - y))

        ref = integrate.dblquad(lambda y, x: g(x, y, math.sin, math.sin), 0, tau, 0, tau,
                                epsabs=1e-12, epsrel=1e-12)[0]
        worst = max(worst, abs(ref - k.g_ss))
    return worst < 1e-9, f"max kernel deviation {worst:.2e}"


def _check_classical_limit():
    p = Params(v0=4.3)
    t = t_matrix(p.gamma, p.tau)
    c = q = EvmState(0.7, -0.4)
    worst = 0.0
    for _ in range(2000):
        c = classical_step(c, t, p.v0)
        q = quantum_step(q, t, p.v0, NoiseMoments.zero())
        worst = max(worst, abs(c.q - q.q), abs(c.p - q.p))
    lam = largest_lyapunov(Params(v0=0.0), EvmState(1.0, 0.0), 100, 1000, mode="classical").lam
    ok = worst < 1e-12 and abs(lam + p.gamma * p.tau) < 1e-10
    return ok, f"orbit deviation {worst:.1e}, lambda(V0=0) + gamma tau = {lam + 0.3:.1e}"


def _check_jacobian():
    rng = np.random.default_rng(1)
    p = Params(v0=3.9, hbar=2e-4, kbt=2e-4)
    t = t_matrix(p.gamma, p.tau)
    nm = NoiseMoments(1e-4, 2e-4, 3e-5)
    worst = 0.0
    for _ in range(10):
        x = np.concatenate([rng.uniform(-2, 2, 2), rng.uniform(0, 1e-3, 3)])
        jac = evm_jacobian(EvmState(*x), t, p.v0, nm).entries
        fd = np.empty((5, 5))
        for j in range(5):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd[:, j] = (quantum_step(EvmState(*xp), t, p.v0, nm).as_array()
                        - quantum_step(EvmState(*xm), t, p.v0, nm).as_array()) / (2 * h)
        worst = max(worst, float(np.max(np.abs(jac - fd)) / max(1.0, np.max(np.abs(fd)))))
    return worst < 1e-5, f"max relative Jacobian deviation {worst:.1e}"


def _check_reconstruction():
    g = density_matrix_grid(MomentSet.coherent(0.5, -1.0, 2e-4), 256)
    ok = abs(g.trace - 1) < 1e-6 and g.hermiticity_residual < 1e-8 and g.purity <= 1 + 1e-4
    return ok, f"trace-1 {g.trace - 1:.1e}, purity {g.purity:.8f}"


CHECKS = {
    "t_matrix": _check_t_matrix,
    "kernels": _check_kernels,
    "classical_limit": _check_classical_limit,
    "jacobian": _check_jacobian,
    "reconstruction": _check_reconstruction,
}


def run_all():
    """Yield ``(name, passed, detail)`` for every check."""
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
