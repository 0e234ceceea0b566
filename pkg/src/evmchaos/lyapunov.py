"""Tangent dynamics: Jacobians, largest Lyapunov exponents and fixed points.

Exponents are reported per kick (natural log); divide by ``tau`` for a rate
per unit time.  Periodic orbits are handled as fixed points of the
``period``-fold map, so a "fixed point" below always carries its period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core_map import EvmState, Params, TMatrix, t_matrix
from .noise_kernels import NoiseMoments, base_moments

DEFAULT_TRANSIENT = 2000
DEFAULT_ITER = 20000
MODES = ("classical", "quantum")


class FixedPointError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Jacobian:
    dim: int
    entries: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.entries)


@dataclass(frozen=True)
class LyapunovEstimate:
    lam: float
    stderr: float
    n_transient: int
    n_iter: int
    escaped: bool
    blocks: tuple = ()

    @property
    def is_chaotic(self) -> bool:
        return not self.escaped and self.lam > 2.0 * self.stderr


@dataclass(frozen=True)
class BifurcationResult:
    """Outcome of locating where a periodic orbit loses stability."""

    kind: str  # "period_doubling", "hopf" or "none"
    v0_star: float = math.nan
    bracket_width: float = math.nan
    period: int = 0
    eigenvalues: tuple = ()
    critical: tuple = ()
    state: EvmState | None = None
    diagnostic: str = ""
    trace: tuple = field(default=(), compare=False)


def _setup(params: Params, mode: str, nm: NoiseMoments | None = None):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    t = t_matrix(params.gamma, params.tau)
    if mode == "classical":
        nm_arr = np.zeros(3)
    else:
        nm_arr = (nm if nm is not None else base_moments(params)).as_array()
    return t, nm_arr, (2 if mode == "classical" else 5)


def _as_vector(state, mode: str) -> np.ndarray:
    x = state.as_array() if isinstance(state, EvmState) else np.array(state, dtype=float)
    if x.shape == (2,):
        x = np.concatenate([x, np.zeros(3)])
    x = x.astype(float)
    if mode == "classical":
        x[2:] = 0.0
    return x


def evm_jacobian(state: EvmState, t: TMatrix, v0: float, nm: NoiseMoments) -> Jacobian:
    """Analytic 5x5 Jacobian of one kick of the EVM at ``state``."""
    jac = np.empty((5, 5))
    _kernels.jacobian(state.as_array(), jac, t.as_array(), float(v0), nm.as_array(), t.gamma, t.omega0)
    return Jacobian(5, jac)


def classical_jacobian(state: EvmState, t: TMatrix, v0: float) -> Jacobian:
    jac = np.empty((5, 5))
    x = np.array([state.q, state.p, 0.0, 0.0, 0.0])
    _kernels.jacobian(x, jac, t.as_array(), float(v0), np.zeros(3), t.gamma, t.omega0)
    return Jacobian(2, jac[:2, :2].copy())


def largest_lyapunov(
    params: Params,
    ic,
    n_transient: int = DEFAULT_TRANSIENT,
    n_iter: int = DEFAULT_ITER,
    *,
    mode: str = "quantum",
    n_blocks: int = 10,
    renorm_every: int = 1,
    tangent=None,
    nm: NoiseMoments | None = None,
) -> LyapunovEstimate:
    """Benettin estimate of the largest exponent along the orbit from ``ic``.

    The standard error is taken over ``n_blocks`` consecutive blocks of the
    post-transient orbit.  Escaped orbits return ``escaped=True`` and a NaN
    exponent.
    """
    if n_iter < 1000:
        raise ValueError("n_iter must be at least 1000")
    t, nm_arr, dim = _setup(params, mode, nm)
    x0 = _as_vector(ic, mode)
    if tangent is None:
        tangent = np.ones(5)
    tangent = np.asarray(tangent, dtype=float)
    if tangent.size < 5:
        tangent = np.concatenate([tangent, np.zeros(5 - tangent.size)])
    sums, escaped, _ = _kernels.lyapunov_blocks(
        x0, tangent, int(n_transient), int(n_iter), int(n_blocks), int(renorm_every),
        t.as_array(), float(params.v0), nm_arr, params.gamma, t.omega0, dim,
    )
    if escaped:
        return LyapunovEstimate(math.nan, math.nan, n_transient, n_iter, True)
    blocks = sums / (n_iter // n_blocks)
    stderr = float(np.std(blocks, ddof=1) / math.sqrt(n_blocks))
    return LyapunovEstimate(float(np.mean(blocks)), stderr, n_transient, n_iter, False, tuple(blocks))


def iterate_map(params: Params, ic, n_transient: int, n_record: int, *, mode: str = "quantum",
                nm: NoiseMoments | None = None):
    """Post-transient states, shape ``(n_record, 5)``, and the escape kick (-1 if none)."""
    t, nm_arr, _ = _setup(params, mode, nm)
    return _kernels.iterate(
        _as_vector(ic, mode), int(n_transient), int(n_record),
        t.as_array(), float(params.v0), nm_arr, params.gamma, t.omega0,
    )


def period_map(params: Params, x, period: int = 1, *, mode: str = "quantum",
               nm: NoiseMoments | None = None):
    """Image of ``x`` under the ``period``-fold map and its Jacobian."""
    t, nm_arr, dim = _setup(params, mode, nm)
    y, jac = _kernels.iterate_with_jacobian(
        _as_vector(x, mode), int(period), t.as_array(), float(params.v0), nm_arr,
        params.gamma, t.omega0, dim,
    )
    return y, jac


def detect_period(records: np.ndarray, max_period: int = 64, rtol: float = 1e-7) -> int:
    """Smallest ``p`` such that the recorded orbit repeats with period ``p`` (0 if none)."""
    q = records[:, :2]
    if not np.all(np.isfinite(q)):
        return 0
    scale = max(1.0, float(np.max(np.abs(q))))
    for p in range(1, min(max_period, len(q) // 2) + 1):
        if np.max(np.abs(q[p:] - q[:-p])) < rtol * scale:
            return p
    return 0


def fixed_point(
    params: Params,
    guess,
    period: int = 1,
    *,
    mode: str = "quantum",
    tol: float = 1e-11,
    max_iter: int = 200,
    nm: NoiseMoments | None = None,
) -> EvmState:
    """Newton iteration for ``F^period(x) = x``; works for the 2-D and 5-D maps."""
    _, _, dim = _setup(params, mode, nm)
    x = _as_vector(guess, mode)
    residual = math.inf
    for _ in range(max_iter):
        y, jac = period_map(params, x, period, mode=mode, nm=nm)
        r = y[:dim] - x[:dim]
        residual = float(np.max(np.abs(r)))
        if not np.isfinite(residual):
            break
        if residual < tol:
            return EvmState(*x)
        try:
            dx = np.linalg.solve(jac - np.eye(dim), -r)
        except np.linalg.LinAlgError:
            break
        # damp steps that would leave the neighbourhood of the guess
        big = float(np.max(np.abs(dx)))
        if big > 1.0:
            dx /= big
        x[:dim] += dx
    raise FixedPointError(f"Newton did not converge for period {period}", residual)


def orbit_multipliers(params: Params, state: EvmState, period: int = 1, *, mode: str = "quantum",
                      nm: NoiseMoments | None = None) -> np.ndarray:
    _, jac = period_map(params, state, period, mode=mode, nm=nm)
    return np.linalg.eigvals(jac)


def find_attractor(params: Params, ic, *, mode: str = "quantum", n_transient: int = 4000,
                   n_record: int = 256, max_period: int = 64, nm: NoiseMoments | None = None):
    """Iterate from ``ic`` and return ``(state, period)`` of the periodic attractor reached.

    ``period`` is 0 when no period up to ``max_period`` is detected (chaotic,
    quasi-periodic or escaped); ``state`` is then the last recorded state.
    """
    rec, esc = iterate_map(params, ic, n_transient, n_record, mode=mode, nm=nm)
    if esc >= 0:
        return None, 0
    period = detect_period(rec, max_period)
    state = EvmState(*rec[-1])
    if period:
        try:
            state = fixed_point(params, state, period, mode=mode, nm=nm)
        except FixedPointError:
            period = 0
    return state, period


def _classify_multipliers(mu: np.ndarray, imag_tol: float = 1e-6):
    k = int(np.argmax(np.abs(mu)))
    crit = mu[k]
    if abs(crit.imag) > imag_tol:
        partner = mu[np.argmin(np.abs(mu - np.conj(crit)))]
        return "hopf", (complex(crit), complex(partner))
    if crit.real < 0:
        return "period_doubling", (complex(crit),)
    return "fold", (complex(crit),)


def classify_bifurcation(
    params: Params,
    v0_bracket,
    *,
    mode: str = "quantum",
    guess=None,
    period: int | None = None,
    tol: float = 1e-5,
    step: float | None = None,
    nm: NoiseMoments | None = None,
) -> BifurcationResult:
    """Follow a stable periodic orbit upward in ``V0`` and classify its loss of stability.

    The orbit is found at the lower bracket end (by iterating from ``guess`` or
    from a default seeded set of initial conditions), continued in small
    ``V0`` steps with secant prediction, and the first crossing of
    ``max|mu| = 1`` is localized by bisection to ``tol``.  A complex pair at
    the crossing is a Hopf (Neimark-Sacker) bifurcation, a real multiplier
    near -1 a period doubling.  Folds, lost branches and brackets without a
    crossing yield ``kind="none"`` with a diagnostic.
    """
    lo, hi = map(float, v0_bracket)
    if not hi > lo:
        raise ValueError("v0_bracket must be increasing")
    if nm is None and mode == "quantum":
        nm = base_moments(params)
    p_lo = params.with_(v0=lo)

    state, per = _start_orbit(p_lo, guess, period, mode, nm)
    if state is None:
        return BifurcationResult("none", diagnostic=f"no stable periodic orbit at V0={lo}")

    def solve(v, x):
        s = fixed_point(params.with_(v0=v), x, per, mode=mode, nm=nm)
        mu = orbit_multipliers(params.with_(v0=v), s, per, mode=mode, nm=nm)
        return s, mu

    try:
        state, mu = solve(lo, state)
    except FixedPointError as exc:
        return BifurcationResult("none", diagnostic=f"orbit not resolved at V0={lo}: {exc}")
    if np.max(np.abs(mu)) >= 1.0:
        return BifurcationResult("none", period=per, diagnostic=f"orbit already unstable at V0={lo}")

    h = step if step is not None else min(0.01, (hi - lo) / 50.0)
    v, x, prev = lo, state.as_array(), None
    trace = [(lo, float(np.max(np.abs(mu))))]
    while v < hi:
        v_next = min(v + h, hi)
        guess_x = x if prev is None else x + (x - prev) * (v_next - v) / h_prev
        try:
            s, mu = solve(v_next, guess_x)
        except FixedPointError:
            if h < tol:
                return BifurcationResult(
                    "none", v0_star=v, period=per, state=EvmState(*x), trace=tuple(trace),
                    diagnostic=f"orbit lost near V0={v:.6f} (fold or branch end)",
                )
            h /= 2.0
            continue
        m = float(np.max(np.abs(mu)))
        trace.append((v_next, m))
        if m >= 1.0:
            break
        prev, h_prev = x, v_next - v
        v, x = v_next, s.as_array()
    else:
        return BifurcationResult("none", period=per, trace=tuple(trace),
                                 diagnostic="orbit stays stable across the bracket")

    a, b, xa = v, v_next, x
    while b - a > tol:
        c = 0.5 * (a + b)
        try:
            s, mu_c = solve(c, xa)
        except FixedPointError:
            b = c
            continue
        if np.max(np.abs(mu_c)) < 1.0:
            a, xa = c, s.as_array()
        else:
            b = c
    state, mu = solve(a, xa)
    kind, crit = _classify_multipliers(mu)
    diag = ""
    if kind == "fold":
        kind, diag = "none", "real multiplier crossed +1 (fold)"
    return BifurcationResult(
        kind, v0_star=0.5 * (a + b), bracket_width=b - a, period=per,
        eigenvalues=tuple(complex(z) for z in mu), critical=crit, state=state,
        diagnostic=diag, trace=tuple(trace),
    )


def default_ics(n: int, seed: int = 0, hbar: float = 0.0):
    rng = np.random.default_rng(seed)
    return [EvmState.coherent(*rng.uniform(-5.0, 5.0, 2), hbar) for _ in range(n)]


def _start_orbit(params, guess, period, mode, nm):
    if guess is not None and period is not None:
        return (guess if isinstance(guess, EvmState) else EvmState(*_as_vector(guess, mode))), period
    candidates = [guess] if guess is not None else default_ics(16, hbar=params.hbar)
    for ic in candidates:
        state, per = find_attractor(params, ic, mode=mode, nm=nm)
        if state is not None and per and (period is None or per == period):
            return state, per
    return None, 0
