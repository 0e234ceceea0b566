"""Bifurcation diagrams, threshold location and parameter sweeps.

Everything here is deterministic and single-threaded.  Functions that fan out
over independent work items accept a ``mapper`` with the signature of the
builtin ``map``; passing ``ThreadPoolExecutor.map`` parallelizes them without
changing results, because every item derives its own random stream from
``(seed, v0_index, ic_index)`` and results are returned in input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .core_map import EvmState, Params
from .lyapunov import (
    MODES,
    classify_bifurcation,
    iterate_map,
    largest_lyapunov,
)
from .noise_kernels import base_moments

AXES = ("kbt", "hbar", "omega_c")
KINDS = ("hopf", "chaos")
DEFAULT_BRACKET = (5.0, 5.8)
CHAOS_FLOOR = 5e-3


class ThresholdError(RuntimeError):
    """No crossing of the requested kind inside the bracket."""


@dataclass(frozen=True)
class BifurcationRecord:
    v0: float
    ic_index: int
    samples: tuple
    escaped: bool


@dataclass(frozen=True)
class ThresholdRecord:
    kind: str
    v0_star: float
    bracket_width: float
    kbt: float
    hbar: float
    omega_c: float
    lambda_trace: tuple = ()
    axis: str = ""
    diagnostic: str = ""
    error: str = ""
    state: EvmState | None = field(default=None, compare=False)
    period: int = 0

    @property
    def ok(self) -> bool:
        return not self.error

    def axis_value(self, axis: str | None = None) -> float:
        return float(getattr(self, axis or self.axis))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    intercept: float
    reference: float
    n: int


@dataclass(frozen=True)
class PointClass:
    """Chaos classification of one ``V0`` value over an IC ensemble."""

    v0: float
    chaotic: bool
    lam: float
    stderr: float
    undecided: bool = False
    escaped_fraction: float = 0.0


def ic_draw(seed: int, v0_index: int, ic_index: int, hbar: float = 0.0, mode: str = "quantum") -> EvmState:
    """Initial condition uniform on ``[-5, 5]^2``; coherent spread in quantum mode."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, v0_index, ic_index]))
    q, p = rng.uniform(-5.0, 5.0, 2)
    return EvmState.coherent(q, p, hbar) if mode == "quantum" else EvmState(q, p)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def bifurcation_diagram(
    params: Params,
    v0_grid,
    n_ic: int,
    seed: int = 0,
    n_transient: int = 1000,
    n_record: int = 100,
    *,
    mode: str = "quantum",
    mapper=map,
):
    """Post-transient ``Q`` samples for every ``(V0, IC)`` pair, ordered by ``V0`` then IC."""
    _check_mode(mode)
    grid = [float(v) for v in v0_grid]
    if not grid:
        raise ValueError("v0_grid must be nonempty")
    if n_ic < 1:
        raise ValueError("n_ic must be at least 1")
    nm = base_moments(params) if mode == "quantum" else None

    def work(i):
        p = params.with_(v0=grid[i])
        out = []
        for j in range(n_ic):
            ic = ic_draw(seed, i, j, params.hbar, mode)
            rec, esc = iterate_map(p, ic, n_transient, n_record, mode=mode, nm=nm)
            q = rec[:, 0] if esc < 0 else rec[:max(esc - n_transient, 0), 0]
            out.append(BifurcationRecord(grid[i], j, tuple(float(v) for v in q), esc >= 0))
        return out

    return [r for chunk in mapper(work, range(len(grid))) for r in chunk]


def attractor_points(params: Params, n_ic: int, seed: int = 0, n_transient: int = 1000,
                     n_record: int = 1000, *, mode: str = "quantum", mapper=map):
    """Post-transient ``(ic, Q, P)`` rows for an IC ensemble at ``params.v0``."""
    _check_mode(mode)
    nm = base_moments(params) if mode == "quantum" else None

    def work(j):
        rec, _ = iterate_map(params, ic_draw(seed, 0, j, params.hbar, mode), n_transient, n_record,
                             mode=mode, nm=nm)
        ok = np.all(np.isfinite(rec[:, :2]), axis=1)
        return np.column_stack([np.full(ok.sum(), j), rec[ok, :2]])

    parts = list(mapper(work, range(n_ic)))
    return np.vstack(parts) if parts else np.empty((0, 3))


def count_branches(samples, atol: float = 1e-6) -> int:
    """Number of distinct values among ``samples`` (clusters separated by more than ``atol``)."""
    s = np.sort(np.asarray(samples, dtype=float))
    s = s[np.isfinite(s)]
    if s.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(s) > atol))


def lyapunov_scan(params: Params, v0_grid, n_ic: int = 1, seed: int = 0, *, mode: str = "quantum",
                  n_transient: int = 2000, n_iter: int = 20000, mapper=map):
    """Rows ``(v0, lambda, stderr, escaped_fraction)``; ``lambda`` averages the bounded ICs."""
    _check_mode(mode)
    grid = [float(v) for v in v0_grid]
    nm = base_moments(params) if mode == "quantum" else None

    def work(i):
        p = params.with_(v0=grid[i])
        ests = [largest_lyapunov(p, ic_draw(seed, i, j, params.hbar, mode), n_transient, n_iter,
                                 mode=mode, nm=nm) for j in range(n_ic)]
        good = [e for e in ests if not e.escaped]
        frac = 1.0 - len(good) / n_ic
        if not good:
            return (grid[i], math.nan, math.nan, frac)
        lam = float(np.mean([e.lam for e in good]))
        se = float(np.sqrt(np.sum([e.stderr**2 for e in good])) / len(good))
        return (grid[i], lam, se, frac)

    return list(mapper(work, range(len(grid))))


def classify_point(params: Params, v0: float, ics, *, mode: str = "quantum", n_transient: int = 2000,
                   n_iter: int = 20000, floor: float = CHAOS_FLOOR, max_refine: int = 2,
                   nm=None) -> PointClass:
    """Declare ``V0`` chaotic when every bounded IC has ``lambda > max(2 stderr, floor)``.

    An IC is regular once ``lambda + 2 stderr < floor``; in between, ``n_iter``
    is doubled up to ``max_refine`` times before the IC is counted as not
    chaotic and the point flagged undecided.  Escaped ICs are skipped; a point
    where every IC escapes counts as chaotic.
    """
    p = params.with_(v0=v0)
    if nm is None and mode == "quantum":
        nm = base_moments(params)
    lams, ses, n_esc, chaotic, undecided = [], [], 0, True, False
    for ic in ics:
        n = n_iter
        for attempt in range(max_refine + 1):
            est = largest_lyapunov(p, ic, n_transient, n, mode=mode, nm=nm)
            if est.escaped:
                break
            if est.lam - 2.0 * est.stderr > 0.0 and est.lam > floor:
                verdict = "chaotic"
                break
            if est.lam + 2.0 * est.stderr < floor:
                verdict = "regular"
                break
            verdict = "undecided"
            n *= 2
        if est.escaped:
            n_esc += 1
            continue
        lams.append(est.lam)
        ses.append(est.stderr)
        if verdict != "chaotic":
            chaotic = False
            undecided = undecided or verdict == "undecided"
            break
    n_ic = len(ics)
    if not lams:
        return PointClass(v0, True, math.nan, math.nan, False, 1.0)
    return PointClass(v0, chaotic, float(np.mean(lams)), float(np.max(ses)), undecided, n_esc / n_ic)


def _lattice(a, b, h):
    # multiples of h strictly inside (a, b), as exact integer multiples
    k0 = math.floor(a / h) + 1
    k1 = math.ceil(b / h) - 1
    return [k * h for k in range(k0, k1 + 1) if a < k * h < b]


def _chaos_threshold(params, v0_bracket, tol, mode, ics, coarse, crossing, lyap_kw):
    lo, hi = v0_bracket
    nm = base_moments(params) if mode == "quantum" else None
    cache = {}

    def cls(v):
        if v not in cache:
            cache[v] = classify_point(params, v, ics, mode=mode, nm=nm, **lyap_kw)
        return cache[v]

    def ends():
        return f"lambda(V0={lo})={cls(lo).lam:.4g}, lambda(V0={hi})={cls(hi).lam:.4g}"

    if crossing == "last" and not cls(hi).chaotic:
        raise ThresholdError(f"upper bracket end is not chaotic: {ends()}")
    if crossing == "first" and cls(lo).chaotic:
        raise ThresholdError(f"lower bracket end is already chaotic: {ends()}")
    # probe absolute lattices (multiples of coarse^k * tol) so that overlapping
    # brackets containing the same crossing evaluate identical V0 values
    h = tol * coarse ** max(0, math.ceil(math.log((hi - lo) / tol) / math.log(coarse)) - 1)
    a, b = lo, hi
    while True:
        vs = [a, *_lattice(a, b, h), b]
        flags = [cls(v).chaotic for v in vs]
        if all(flags) or not any(flags):
            raise ThresholdError(f"no regular-to-chaotic crossing in [{lo}, {hi}]: {ends()}")
        if crossing == "last":
            j = max(k for k, f in enumerate(flags) if not f)
        else:
            j = min(k for k, f in enumerate(flags) if f) - 1
        a, b = vs[j], vs[j + 1]
        if b - a <= tol or h <= tol:
            break
        h = max(h / coarse, tol)
    trace = tuple((v, c.lam) for v, c in sorted(cache.items()))
    und = [v for v, c in cache.items() if c.undecided]
    diag = f"undecided at V0={sorted(und)}" if und else ""
    # adjacent lattice points are exactly h apart; b - a only adds rounding
    return 0.5 * (a + b), min(b - a, h), trace, diag


def find_threshold(
    params: Params,
    kind: str,
    v0_bracket=DEFAULT_BRACKET,
    tol: float = 1e-3,
    *,
    mode: str = "quantum",
    ics=None,
    n_ic: int = 1,
    seed: int = 0,
    guess=None,
    period: int | None = None,
    coarse: int = 16,
    crossing: str = "first",
    n_transient: int = 2000,
    n_iter: int = 20000,
    floor: float = CHAOS_FLOOR,
    axis: str = "",
) -> ThresholdRecord:
    """Locate a Hopf transition or chaotic threshold inside ``v0_bracket``.

    ``hopf`` follows the stable periodic orbit found at the lower bracket end
    and bisects on ``max|mu| = 1``.  ``chaos`` returns the first (lowest)
    crossing from non-chaotic to chaotic, or the highest one with
    ``crossing="last"``, located by repeated multisection (refinement factor
    ``coarse``) on an IC ensemble (``ics`` or ``n_ic`` seeded draws).
    """
    if crossing not in ("first", "last"):
        raise ValueError("crossing must be 'first' or 'last'")
    _check_mode(mode)
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    lo, hi = map(float, v0_bracket)
    if not hi > lo:
        raise ValueError("v0_bracket must be increasing")
    coords = dict(kbt=params.kbt, hbar=params.hbar, omega_c=params.omega_c, axis=axis)
    if kind == "hopf":
        res = classify_bifurcation(params, (lo, hi), mode=mode, guess=guess, period=period, tol=tol)
        if res.kind == "none":
            raise ThresholdError(f"no loss of stability in [{lo}, {hi}]: {res.diagnostic}")
        per = max(res.period, 1)
        trace = tuple((v, math.log(m) / per) for v, m in res.trace)
        return ThresholdRecord(kind, res.v0_star, res.bracket_width, lambda_trace=trace,
                               diagnostic=res.kind, state=res.state, period=res.period, **coords)
    if ics is None:
        ics = [ic_draw(seed, 0, j, params.hbar, mode) for j in range(n_ic)]
    v, w, trace, diag = _chaos_threshold(
        params, (lo, hi), tol, mode, ics, coarse, crossing,
        dict(n_transient=n_transient, n_iter=n_iter, floor=floor),
    )
    return ThresholdRecord(kind, v, w, lambda_trace=trace, diagnostic=diag, **coords)


def sweep(
    params_base: Params,
    axis: str,
    grid,
    kind: str,
    v0_bracket=DEFAULT_BRACKET,
    tol: float = 1e-3,
    *,
    warm: bool = True,
    warm_width: float | None = None,
    **kwargs,
):
    """Thresholds along ``axis``; each bracket is centred on the previous ``V0*``.

    A warm bracket that contains no crossing falls back to ``v0_bracket``.
    Failures are recorded (``error`` set, ``v0_star`` NaN) and the sweep continues.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    grid = [float(g) for g in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted ascending")
    lo, hi = map(float, v0_bracket)
    half = warm_width if warm_width is not None else 0.25 * (hi - lo)
    out, prev = [], None
    for g in grid:
        p = params_base.with_(**{axis: g})
        attempts = []
        if warm and prev is not None and prev.ok:
            c = prev.v0_star
            extra = {}
            if kind == "hopf" and prev.state is not None:
                extra = dict(guess=prev.state, period=prev.period)
            attempts.append(((max(lo, c - half), min(hi, c + half)), extra))
        attempts.append(((lo, hi), {}))
        rec, errors = None, []
        for bracket, extra in attempts:
            try:
                rec = find_threshold(p, kind, bracket, tol, axis=axis, **{**kwargs, **extra})
                break
            except (ThresholdError, ArithmeticError, np.linalg.LinAlgError) as exc:
                errors.append(f"[{bracket[0]:.6g}, {bracket[1]:.6g}]: {exc}")
        if rec is None:
            rec = ThresholdRecord(kind, math.nan, math.nan, p.kbt, p.hbar, p.omega_c, axis=axis,
                                  error="; ".join(errors))
        out.append(rec)
        prev = rec if rec.ok else prev
    return out


def _fit_exponent(x, v):
    # V(x) = V0 - c x^p through three points: solve the ratio equation for p
    (x1, x2, x3), (v1, v2, v3) = x, v
    r = (v1 - v2) / (v2 - v3)

    def g(p):
        return (x1**p - x2**p) / (x2**p - x3**p) - r

    try:
        return optimize.brentq(g, 0.2, 8.0)
    except ValueError:
        return 2.0


def extrapolate_reference(records, axis: str | None = None) -> float:
    """``V0*`` extrapolated to the axis origin from the three smallest grid values.

    The local power law ``V0* = V_ref - c x^p`` is fitted exactly through the
    three points (``p = 2`` if no exponent fits) and evaluated at ``x = 0``.
    """
    good = sorted((r for r in records if r.ok), key=lambda r: r.axis_value(axis))
    if len(good) < 3:
        raise ValueError("need three successful records to extrapolate")
    x = [r.axis_value(axis) for r in good[:3]]
    v = [r.v0_star for r in good[:3]]
    p = _fit_exponent(x, v)
    return v[0] + (v[0] - v[1]) * x[0] ** p / (x[1] ** p - x[0] ** p)


def fit_scaling(records, reference=None, *, axis: str | None = None, confidence: float = 0.95) -> ScalingFit:
    """Least-squares slope of ``log(V_ref - V0*)`` against ``log(axis value)``.

    ``reference`` is a number, a ``ThresholdRecord`` (e.g. the threshold
    computed directly at the axis origin) or ``None`` for the extrapolated
    reference of :func:`extrapolate_reference`.
    """
    good = [r for r in records if r.ok]
    if len(good) < 5:
        raise ValueError("fit_scaling needs at least 5 successful records")
    if reference is None:
        ref = extrapolate_reference(good, axis)
    elif isinstance(reference, ThresholdRecord):
        ref = reference.v0_star
    else:
        ref = float(reference)
    x = np.array([r.axis_value(axis) for r in good])
    shift = ref - np.array([r.v0_star for r in good])
    if np.any(shift <= 0.0) or np.any(x <= 0.0):
        raise ValueError(f"nonpositive shifts or axis values; scaling undefined (shifts {shift})")
    res = stats.linregress(np.log(x), np.log(shift))
    tq = stats.t.ppf(0.5 + 0.5 * confidence, len(x) - 2)
    return ScalingFit(float(res.slope), float(res.stderr), float(res.slope - tq * res.stderr),
                      float(res.slope + tq * res.stderr), float(res.intercept), float(ref), len(x))
