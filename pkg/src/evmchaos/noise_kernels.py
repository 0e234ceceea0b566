"""Noise moments of the random-force integrals accumulated between kicks.

With ``J_s = int_0^tau e^{-gamma x} sin(w0 x) F(tau - x) dx`` and ``J_c`` the same
with a cosine, the three state-independent base moments are

    s_ss = <J_s J_s>,  s_cc = <J_c J_c>,  s_sc = <J_s J_c + J_c J_s>,

each equal to ``(2 gamma / pi) int_0^inf hbar w coth(hbar w / 2 kT) G(w) e^{-w/wc} dw``
for the matching kernel ``G``.  The kernels are double integrals over the
kick interval; ``cos w(x - y)`` separates, so each is a sum of squares (or
products) of four one-dimensional damped oscillatory integrals with closed
forms.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

OMEGA_MAX_FACTOR = 40.0
COTH_SERIES_SWITCH = 1.0e-4

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W_GAUSS = np.zeros(15)
_W_GAUSS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped before reaching the requested tolerance."""

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class KernelTriple:
    g_ss: float
    g_cc: float
    g_sc: float


@dataclass(frozen=True)
class NoiseMoments:
    """Base moments for one parameter set; immutable and safe to share."""

    s_ss: float = 0.0
    s_cc: float = 0.0
    s_sc: float = 0.0
    params_hash: int = 0
    abs_error: float = 0.0
    tail_bound: float = 0.0

    @classmethod
    def zero(cls) -> "NoiseMoments":
        return cls()

    def as_array(self) -> np.ndarray:
        return np.array([self.s_ss, self.s_cc, self.s_sc])

    @property
    def is_zero(self) -> bool:
        return self.s_ss == 0.0 and self.s_cc == 0.0 and self.s_sc == 0.0


def _expm1_over(w):
    """``(exp(w) - 1) / w`` for complex ``w``, accurate near ``w = 0``."""
    w = np.asarray(w, dtype=complex)
    a, b = w.real, w.imag
    num = np.expm1(a) * np.cos(b) - 2.0 * np.sin(0.5 * b) ** 2 + 1j * np.exp(a) * np.sin(b)
    small = np.abs(w) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / w
    if np.any(small):
        ws = w[small]
        out[small] = 1.0 + ws / 2.0 * (1.0 + ws / 3.0 * (1.0 + ws / 4.0 * (1.0 + ws / 5.0)))
    return out


def _damped_integral(k, gamma, tau):
    """``int_0^tau exp((-gamma + i k) x) dx``."""
    return tau * _expm1_over((-gamma + 1j * np.asarray(k, dtype=float)) * tau)


def kernel_arrays(omega, omega0, gamma, tau):
    """Vectorized ``(G_ss, G_cc, G_sc+cs)`` on an array of frequencies."""
    omega = np.asarray(omega, dtype=float)
    e_sum = _damped_integral(omega0 + omega, gamma, tau)
    e_diff = _damped_integral(omega0 - omega, gamma, tau)
    # int e^{-gx} {cos|sin}(w x) {sin|cos}(w0 x) dx via product-to-sum
    a_c = 0.5 * (e_sum.imag + e_diff.imag)
    a_s = 0.5 * (e_diff.real - e_sum.real)
    b_c = 0.5 * (e_sum.real + e_diff.real)
    b_s = 0.5 * (e_sum.imag - e_diff.imag)
    return a_c**2 + a_s**2, b_c**2 + b_s**2, 2.0 * (a_c * b_c + a_s * b_s)


def kernel_triple(omega: float, omega0: float, gamma: float, tau: float) -> KernelTriple:
    """Closed-form kernels at a single frequency ``omega >= 0``."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    g_ss, g_cc, g_sc = kernel_arrays(np.array([omega]), omega0, gamma, tau)
    return KernelTriple(float(g_ss[0]), float(g_cc[0]), float(g_sc[0]))


def thermal_weight(omega, hbar: float, kbt: float):
    """``hbar w coth(hbar w / 2 kT)`` with its classical and zero-temperature limits."""
    omega = np.asarray(omega, dtype=float)
    if hbar == 0.0:
        return np.full_like(omega, 2.0 * kbt)
    if kbt == 0.0:
        return hbar * omega
    x = hbar * omega / (2.0 * kbt)
    out = np.empty_like(x)
    small = x < COTH_SERIES_SWITCH
    xs = x[small]
    out[small] = 2.0 * kbt * (1.0 + xs * xs / 3.0 - xs**4 / 45.0)
    xl = x[~small]
    out[~small] = 2.0 * kbt * xl / np.tanh(xl)
    return out


def moment_integrand(omega, gamma, tau, hbar, kbt, omega_c):
    """The three integrands of the base moments, shape ``(3, len(omega))``."""
    omega = np.asarray(omega, dtype=float)
    w0 = math.sqrt(1.0 - gamma * gamma)
    g = np.array(kernel_arrays(omega, w0, gamma, tau))
    weight = (2.0 * gamma / math.pi) * thermal_weight(omega, hbar, kbt) * np.exp(-omega / omega_c)
    return g * weight


def adaptive_gk15(func, breakpoints, epsrel=1e-9, epsabs=0.0, max_intervals=200_000):
    """Integrate a vector-valued ``func`` over consecutive ``breakpoints``.

    ``func`` maps a 1-D array of abscissae to an array of shape ``(m, n)``.
    Intervals are refined in rounds: every interval whose Gauss/Kronrod
    discrepancy exceeds its fair share of the remaining budget is bisected,
    and all new intervals are evaluated in one vectorized call.  The
    tolerance applies to the max-norm over components.

    Returns ``(value, abs_error, n_intervals)``.
    """
    edges = np.asarray(breakpoints, dtype=float)
    lo, hi = edges[:-1], edges[1:]

    def rule(lo, hi):
        c = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        x = (c[:, None] + h[:, None] * _NODES[None, :]).ravel()
        f = np.asarray(func(x)).reshape(-1, len(lo), 15)
        k = (f @ _W_KRONROD) * h
        g = (f @ _W_GAUSS) * h
        return k, np.abs(k - g)

    val, err = rule(lo, hi)
    while True:
        total = val.sum(axis=1)
        total_err = err.sum(axis=1)
        tol = max(epsabs, epsrel * float(np.max(np.abs(total))))
        worst = float(np.max(total_err))
        if worst <= tol:
            return total, total_err, len(lo)
        if len(lo) > max_intervals:
            scale = float(np.max(np.abs(total))) or 1.0
            raise QuadratureError("adaptive Gauss-Kronrod did not converge", worst / scale)
        e = err.max(axis=0)
        split = e > tol / len(lo)
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        v_new, e_new = rule(new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[:, keep], v_new], axis=1)
        err = np.concatenate([err[:, keep], e_new], axis=1)


def _panel_edges(omega0, tau, omega_max):
    # panels no wider than one oscillation of the kernels, with an edge at resonance
    width = min(2.0 * math.pi / tau, omega_max / 16.0)
    n = max(16, int(math.ceil(omega_max / width)))
    edges = np.linspace(0.0, omega_max, n + 1)
    if 0.0 < omega0 < omega_max:
        edges = np.unique(np.append(edges, omega0))
    return edges


@functools.lru_cache(maxsize=256)
def _base_moments_cached(gamma, tau, hbar, kbt, omega_c, epsrel):
    if hbar == 0.0 and kbt == 0.0:
        return NoiseMoments(params_hash=hash((gamma, tau, hbar, kbt, omega_c)))
    w0 = math.sqrt(1.0 - gamma * gamma)
    omega_max = OMEGA_MAX_FACTOR * omega_c

    def f(x):
        return moment_integrand(x, gamma, tau, hbar, kbt, omega_c)

    val, err, _ = adaptive_gk15(f, _panel_edges(w0, tau, omega_max), epsrel=epsrel)
    # beyond omega_max the weighted kernel is nonincreasing, so the exponential sets the tail
    tail = float(np.max(np.abs(f(np.array([omega_max]))))) * omega_c
    return NoiseMoments(
        s_ss=float(val[0]),
        s_cc=float(val[1]),
        s_sc=float(val[2]),
        params_hash=hash((gamma, tau, hbar, kbt, omega_c)),
        abs_error=float(np.max(err)),
        tail_bound=tail,
    )


def base_moments(params, epsrel: float = 1e-9) -> NoiseMoments:
    """Base moments ``(s_ss, s_cc, s_sc)`` for ``params``; cached per parameter set.

    Only ``gamma``, ``tau``, ``hbar``, ``kbt`` and ``omega_c`` are read, so the
    kick strength never invalidates the cache.
    """
    if (params.hbar > 0.0 or params.kbt > 0.0) and not params.omega_c > 0.0:
        raise ValueError("omega_c must be positive")
    return _base_moments_cached(
        float(params.gamma), float(params.tau), float(params.hbar),
        float(params.kbt), float(params.omega_c), float(epsrel),
    )


def combine_moments(nm: NoiseMoments, v2: float, gamma: float, omega0: float):
    """Per-kick noise terms ``(ff, hh, fh)`` for curvature ``v2 = V''(Q_{n+1})``.

    ``f = J_s / w0`` pairs with the position response and
    ``h = g - V'' f = (-(gamma + V'') J_s + w0 J_c) / w0`` with the momentum
    response; ``fh`` is the symmetrized ``<h f + f h>``.
    """
    a = gamma + v2
    w2 = omega0 * omega0
    ff = nm.s_ss / w2
    hh = (a * a * nm.s_ss + w2 * nm.s_cc - omega0 * a * nm.s_sc) / w2
    fh = (-2.0 * a * nm.s_ss + omega0 * nm.s_sc) / w2
    return ff, hh, fh


def noise_table(params, omegas):
    """Rows ``(omega, G_ss, G_cc, G_sc, I_ss, I_cc, I_sc)`` for inspection."""
    omegas = np.asarray(omegas, dtype=float)
    g = kernel_arrays(omegas, params.omega0, params.gamma, params.tau)
    i = moment_integrand(omegas, params.gamma, params.tau, params.hbar, params.kbt, params.omega_c)
    return np.column_stack([omegas, *g, *i])
