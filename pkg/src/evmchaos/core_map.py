"""Kicked damped harmonic oscillator: classical map and second-order EVM.

Units are fixed so that the oscillator mass, its natural frequency and the
width of the Gaussian kick force are all one.  Between kicks the motion is
an underdamped oscillation; at each kick the momentum receives the impulse
``-V'(x)`` with ``V'(x) = -V0 exp(-x**2)``.

The quantum map tracks the means ``(Q, P)`` together with the second-order
fluctuation moments ``<dQ^2>``, ``<dP^2>`` and the symmetrized
``<dQ dP + dP dQ>``.  The functions here are the readable scalar reference;
bulk iteration goes through :mod:`evmchaos._kernels`, which performs the same
arithmetic in the same order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .noise_kernels import NoiseMoments, combine_moments

ESCAPE_BOUND = 1.0e6


class UnsupportedRegimeError(ValueError):
    """Raised for parameters outside the underdamped branch."""


@dataclass(frozen=True)
class Params:
    """Physical and run parameters.

    ``gamma`` is the damping rate (friction force ``2*gamma*xdot``), ``tau`` the
    kick period, ``v0`` the kick strength, ``hbar`` and ``kbt`` the quantum and
    thermal scales and ``omega_c`` the bath cutoff frequency.
    """

    gamma: float = 0.03
    tau: float = 10.0
    v0: float = 2.0
    hbar: float = 0.0
    kbt: float = 0.0
    omega_c: float = 25.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise UnsupportedRegimeError(
                f"gamma={self.gamma!r} outside the underdamped range (0, 1)"
            )
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if self.hbar < 0.0 or self.kbt < 0.0:
            raise ValueError("hbar and kbt must be nonnegative")
        if (self.hbar > 0.0 or self.kbt > 0.0) and not self.omega_c > 0.0:
            raise ValueError("omega_c must be positive when noise is present")

    @property
    def omega0(self) -> float:
        return math.sqrt(1.0 - self.gamma * self.gamma)

    @property
    def has_noise(self) -> bool:
        return self.hbar > 0.0 or self.kbt > 0.0

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TMatrix:
    """Linear propagator of ``(x, p)`` across one inter-kick interval."""

    t_qq: float
    t_qp: float
    t_pq: float
    t_pp: float
    omega0: float
    gamma: float
    tau: float

    @property
    def det(self) -> float:
        return self.t_qq * self.t_pp - self.t_qp * self.t_pq

    def as_array(self) -> np.ndarray:
        return np.array([self.t_qq, self.t_qp, self.t_pq, self.t_pp])

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.t_qq, self.t_qp], [self.t_pq, self.t_pp]])


@dataclass(frozen=True)
class EvmState:
    """Means and symmetrized second moments; the classical state has zero moments."""

    q: float
    p: float
    s_qq: float = 0.0
    s_pp: float = 0.0
    s_qp: float = 0.0
    escaped: bool = False
    # set when the truncated map produced a negative variance
    truncation_violation: bool = field(default=False, compare=False)

    @classmethod
    def coherent(cls, q: float, p: float, hbar: float) -> "EvmState":
        """Minimum-uncertainty Gaussian with equal position and momentum spread."""
        return cls(q, p, 0.5 * hbar, 0.5 * hbar, 0.0)

    @classmethod
    def from_array(cls, x) -> "EvmState":
        x = [float(v) for v in x]
        return cls(*x[:5], escaped=is_escaped(x))

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.s_qq, self.s_pp, self.s_qp])


@dataclass(frozen=True)
class KickDerivatives:
    v1: float
    v2: float
    v3: float


def is_escaped(x) -> bool:
    """True when any component is non-finite or a mean exceeds ``ESCAPE_BOUND``."""
    if not all(math.isfinite(v) for v in x):
        return True
    return abs(x[0]) > ESCAPE_BOUND or abs(x[1]) > ESCAPE_BOUND


def t_matrix(gamma: float, tau: float) -> TMatrix:
    """Evolution matrix of ``x'' + 2 gamma x' + x = 0`` over one period ``tau``."""
    if not 0.0 <= gamma < 1.0:
        raise UnsupportedRegimeError(
            f"gamma={gamma!r}: only the underdamped branch 0 <= gamma < 1 is supported"
        )
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    w0 = math.sqrt(1.0 - gamma * gamma)
    e = math.exp(-gamma * tau)
    c = math.cos(w0 * tau)
    s = math.sin(w0 * tau)
    return TMatrix(
        t_qq=e * (c + gamma * s / w0),
        t_qp=e * s / w0,
        t_pq=-e * (w0 + gamma * gamma / w0) * s,
        t_pp=e * (c - gamma * s / w0),
        omega0=w0,
        gamma=gamma,
        tau=tau,
    )


def kick_derivatives(x: float, v0: float) -> KickDerivatives:
    """``V'``, ``V''`` and ``V'''`` of the Gaussian kick potential at ``x``."""
    g = v0 * math.exp(-x * x)
    return KickDerivatives(v1=-g, v2=2.0 * x * g, v3=g * (2.0 - 4.0 * x * x))


def kick_fourth_derivative(x: float, v0: float) -> float:
    return v0 * math.exp(-x * x) * (8.0 * x**3 - 12.0 * x)


def classical_step(state: EvmState, t: TMatrix, v0: float) -> EvmState:
    """One kick of the classical map; the fluctuation fields are ignored."""
    x1 = t.t_qq * state.q + t.t_qp * state.p
    v1 = kick_derivatives(x1, v0).v1
    p1 = t.t_pq * state.q + t.t_pp * state.p - v1
    return EvmState(x1, p1, escaped=is_escaped((x1, p1)))


def quantum_step(state: EvmState, t: TMatrix, v0: float, nm: NoiseMoments) -> EvmState:
    """One kick of the five-variable expectation-value map.

    The position is propagated first; all kick derivatives, the kick-modified
    matrix entries and the noise combinations use the post-propagation mean.
    """
    q, p, s_qq, s_pp, s_qp = state.q, state.p, state.s_qq, state.s_pp, state.s_qp
    q1 = t.t_qq * q + t.t_qp * p
    d = kick_derivatives(q1, v0)
    ff, hh, fh = combine_moments(nm, d.v2, t.gamma, t.omega0)

    s_qq1 = t.t_qq**2 * s_qq + t.t_qp**2 * s_pp + t.t_qq * t.t_qp * s_qp + ff
    p1 = t.t_pq * q + t.t_pp * p - d.v1 - 0.5 * d.v3 * s_qq1

    r_pq = t.t_pq - d.v2 * t.t_qq
    r_pp = t.t_pp - d.v2 * t.t_qp
    s_pp1 = r_pq**2 * s_qq + r_pp**2 * s_pp + r_pq * r_pp * s_qp + hh
    s_qp1 = (
        2.0 * r_pq * t.t_qq * s_qq
        + 2.0 * t.t_qp * r_pp * s_pp
        + (r_pq * t.t_qp + r_pp * t.t_qq) * s_qp
        + fh
    )
    out = (q1, p1, s_qq1, s_pp1, s_qp1)
    return EvmState(
        *out,
        escaped=is_escaped(out),
        truncation_violation=state.truncation_violation or s_qq1 < 0.0 or s_pp1 < 0.0,
    )
