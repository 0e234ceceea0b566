"""Command-line interface: ``evmchaos <command> [options]``.

Options resolve in the order command-line flag, ``--config`` JSON, built-in
default.  The config file holds the same keys as the long flags (dashes or
underscores), e.g. ``{"mode": "quantum", "hbar": 2e-4, "v0": "3.8:4.1:0.01"}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import __version__
from ._svg import scatter_svg
from .core_map import Params, UnsupportedRegimeError
from .lyapunov import FixedPointError
from .noise_kernels import QuadratureError, base_moments, noise_table
from .scan import (
    ThresholdError,
    attractor_points,
    bifurcation_diagram,
    find_threshold,
    fit_scaling,
    lyapunov_scan,
    sweep,
)
from .state_reconstruction import MomentSet, density_matrix_grid

PARAM_KEYS = ("gamma", "tau", "v0", "hbar", "kbt", "omega_c")

DEFAULTS = {
    "mode": "quantum",
    "gamma": 0.03,
    "tau": 10.0,
    "v0": None,
    "hbar": 2e-4,
    "kbt": 2e-4,
    "omega_c": 25.0,
    "seed": 0,
    "ics": 100,
    "transient": 1000,
    "record": 100,
    "iter": 20000,
    "kind": "chaos",
    "bracket": "5.0:5.8",
    "tol": 1e-3,
    "crossing": "first",
    "axis": "kbt",
    "grid": None,
    "warm": True,
    "reference": "extrapolate",
    "omega": "0:50:0.5",
    "n": 256,
    "x_span": None,
    "moments": None,
    "output": None,
    "svg": None,
    "qrange": None,
    "threads": None,
    "timing": True,
}

COMMAND_DEFAULTS = {
    "attractor": {"ics": 10, "record": 1000},
    "lyapunov": {"ics": 1, "transient": 2000},
    "threshold": {"ics": 1, "transient": 2000},
    "sweep": {"ics": 1, "transient": 2000},
    "scaling": {"ics": 1, "transient": 2000, "kind": "hopf"},
}

# keys that never enter the embedded config (they do not change results)
_RUNTIME_ONLY = {"threads", "output", "svg", "config", "timing", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_grid(text) -> list[float]:
    """``start:stop:step`` (inclusive, materialized by index), a comma list or a number."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3:
            raise UsageError(f"grid {text!r} must be start:stop:step")
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise UsageError(f"grid {text!r} needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def parse_range(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        lo, hi = map(float, text)
    else:
        sep = ":" if ":" in str(text) else ","
        try:
            lo, hi = (float(v) for v in str(text).split(sep))
        except ValueError as exc:
            raise UsageError(f"range {text!r} must be lo:hi") from exc
    if not hi > lo:
        raise UsageError(f"range {text!r} must be increasing")
    return lo, hi


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--mode", choices=("classical", "quantum"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--hbar", type=float)
    p.add_argument("--kbt", type=float)
    p.add_argument("--omega-c", dest="omega_c", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default EVMCHAOS_THREADS or CPU count)")
    p.add_argument("-o", "--output", help="output CSV path (default standard output)")
    p.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="omit the wall-time header line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evmchaos", description="Kicked damped oscillator: classical map and quantum EVM")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bifurcation", help="post-transient Q over a V0 grid and an IC ensemble")
    _add_common(p)
    p.add_argument("--v0", help="V0 grid start:stop:step")
    p.add_argument("--ics", type=int)
    p.add_argument("--transient", type=int)
    p.add_argument("--record", type=int)
    p.add_argument("--svg")
    p.add_argument("--qrange", help="lo:hi crop for the SVG")

    p = sub.add_parser("attractor", help="post-transient (Q, P) scatter at one V0")
    _add_common(p)
    p.add_argument("--v0", type=float)
    p.add_argument("--ics", type=int)
    p.add_argument("--transient", type=int)
    p.add_argument("--record", type=int)
    p.add_argument("--svg")
    p.add_argument("--qrange")

    p = sub.add_parser("lyapunov", help="largest Lyapunov exponent over a V0 grid")
    _add_common(p)
    p.add_argument("--v0")
    p.add_argument("--ics", type=int)
    p.add_argument("--transient", type=int)
    p.add_argument("--iter", type=int)

    p = sub.add_parser("threshold", help="Hopf or chaos threshold inside a V0 bracket")
    _add_common(p)
    p.add_argument("--kind", choices=("hopf", "chaos"))
    p.add_argument("--bracket")
    p.add_argument("--tol", type=float)
    p.add_argument("--ics", type=int)
    p.add_argument("--transient", type=int)
    p.add_argument("--iter", type=int)
    p.add_argument("--crossing", choices=("first", "last"),
                   help="chaos: lowest regular-to-chaotic crossing or the last one in the bracket")

    for name, text in (("sweep", "thresholds along kbt, hbar or omega_c"),
                       ("scaling", "log-log slope of threshold shifts along an axis")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--axis", choices=("kbt", "hbar", "omega_c"))
        p.add_argument("--grid")
        p.add_argument("--kind", choices=("hopf", "chaos"))
        p.add_argument("--bracket")
        p.add_argument("--tol", type=float)
        p.add_argument("--ics", type=int)
        p.add_argument("--transient", type=int)
        p.add_argument("--iter", type=int)
        p.add_argument("--crossing", choices=("first", "last"))
        p.add_argument("--cold", dest="warm", action="store_const", const=False,
                       help="do not warm-start brackets")
        if name == "scaling":
            p.add_argument("--reference",
                           help="'extrapolate', 'origin' (threshold computed at axis=0) or a number")

    p = sub.add_parser("noise-table", help="kernels and integrands on a frequency grid")
    _add_common(p)
    p.add_argument("--omega")

    p = sub.add_parser("reconstruct", help="density matrix from a moment JSON file")
    _add_common(p)
    p.add_argument("--moments", help="JSON file with q, p, s_qq, s_pp, s_qp, hbar")
    p.add_argument("--n", type=int)
    p.add_argument("--x-span", dest="x_span", type=float)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.add_argument("-o", "--output")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over command defaults over global defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        params = raw.pop("params", {}) or {}
        cfg = {k.replace("-", "_"): v for k, v in {**raw, **params}.items()}
    flags = {k: v for k, v in vars(args).items() if v is not None}
    defaults = {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}
    out = {}
    for key in set(defaults) | set(cfg) | set(flags):
        out[key] = flags.get(key, cfg.get(key, defaults.get(key)))
    if out.get("threads") is None:
        env = os.environ.get("EVMCHAOS_THREADS")
        out["threads"] = int(env) if env else (os.cpu_count() or 1)
    return out


def _params(opts, v0: float) -> Params:
    return Params(v0=float(v0), **{k: float(opts[k]) for k in PARAM_KEYS if k != "v0"})


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Output:
    """CSV writer with a commented metadata header."""

    def __init__(self, command, opts):
        self.command = command
        self.opts = opts
        self.t0 = opts.get("_t0", time.perf_counter())
        self.notes: list[str] = []
        self.header: list[str] = []
        self.rows: list[list] = []

    def config_json(self) -> str:
        cfg = {k: v for k, v in sorted(self.opts.items()) if k not in _RUNTIME_ONLY and not k.startswith("_")}
        return json.dumps(cfg, sort_keys=True, separators=(",", ":"))

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# evmchaos {__version__}\n")
        buf.write(f"# command: {self.command}\n")
        buf.write(f"# config: {self.config_json()}\n")
        for note in self.notes:
            buf.write(f"# {note}\n")
        if self.opts.get("timing", True):
            buf.write(f"# wall_time_s: {time.perf_counter() - self.t0:.3f}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, path=None):
        path = path if path is not None else self.opts.get("output")
        text = self.render()
        if path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(path, "w", newline="") as fh:
                fh.write(text)


@contextmanager
def _mapper(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map
    else:
        yield map


def _need(opts, key):
    if opts.get(key) is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return opts[key]


def cmd_bifurcation(opts):
    grid = parse_grid(_need(opts, "v0"))
    params = _params(opts, grid[0])
    with _mapper(opts["threads"]) as m:
        recs = bifurcation_diagram(params, grid, int(opts["ics"]), int(opts["seed"]), int(opts["transient"]),
                                   int(opts["record"]), mode=opts["mode"], mapper=m)
    out = Output("bifurcation", opts)
    out.header = ["v0", "ic", "sample_idx", "q", "escaped"]
    for r in recs:
        if r.escaped and not r.samples:
            out.rows.append([r.v0, r.ic_index, -1, math.nan, True])
        out.rows.extend([r.v0, r.ic_index, k, q, r.escaped] for k, q in enumerate(r.samples))
    if opts.get("svg"):
        pts = np.array([(r[0], r[3]) for r in out.rows]) if out.rows else np.empty((0, 2))
        qr = parse_range(opts["qrange"]) if opts.get("qrange") else None
        with open(opts["svg"], "w") as fh:
            fh.write(scatter_svg(pts[:, 0], pts[:, 1], "V0", "Q", yrange=qr))
    return out


def cmd_attractor(opts):
    v0 = float(_need(opts, "v0"))
    params = _params(opts, v0)
    with _mapper(opts["threads"]) as m:
        pts = attractor_points(params, int(opts["ics"]), int(opts["seed"]), int(opts["transient"]),
                               int(opts["record"]), mode=opts["mode"], mapper=m)
    out = Output("attractor", opts)
    out.header = ["ic", "q", "p"]
    out.rows = [[int(a), b, c] for a, b, c in pts]
    if opts.get("svg"):
        qr = parse_range(opts["qrange"]) if opts.get("qrange") else None
        with open(opts["svg"], "w") as fh:
            fh.write(scatter_svg(pts[:, 1], pts[:, 2], "Q", "P", xrange=qr))
    return out


def cmd_lyapunov(opts):
    grid = parse_grid(_need(opts, "v0"))
    params = _params(opts, grid[0])
    with _mapper(opts["threads"]) as m:
        rows = lyapunov_scan(params, grid, int(opts["ics"]), int(opts["seed"]), mode=opts["mode"],
                             n_transient=int(opts["transient"]), n_iter=int(opts["iter"]), mapper=m)
    out = Output("lyapunov", opts)
    out.header = ["v0", "lambda", "stderr", "escaped_fraction"]
    out.rows = [list(r) for r in rows]
    return out


def _threshold_kwargs(opts):
    kw = dict(mode=opts["mode"], seed=int(opts["seed"]))
    if opts["kind"] == "chaos":
        kw.update(n_ic=int(opts["ics"]), n_iter=int(opts["iter"]), n_transient=int(opts["transient"]),
                  crossing=opts["crossing"])
    return kw


def cmd_threshold(opts):
    lo, hi = parse_range(opts["bracket"])
    params = _params(opts, lo)
    rec = find_threshold(params, opts["kind"], (lo, hi), float(opts["tol"]), **_threshold_kwargs(opts))
    out = Output("threshold", opts)
    out.header = ["kind", "v0_star", "bracket_width", "kbt", "hbar", "omega_c"]
    out.rows = [[rec.kind, rec.v0_star, rec.bracket_width, rec.kbt, rec.hbar, rec.omega_c]]
    if rec.diagnostic:
        out.notes.append(f"diagnostic: {rec.diagnostic}")
    return out


def _run_sweep(opts):
    lo, hi = parse_range(opts["bracket"])
    params = _params(opts, lo)
    grid = parse_grid(_need(opts, "grid"))
    return params, sweep(params, opts["axis"], grid, opts["kind"], (lo, hi), float(opts["tol"]),
                         warm=bool(opts["warm"]), **_threshold_kwargs(opts))


def _sweep_notes(out, recs):
    for r in recs:
        note = r.error or r.diagnostic
        out.notes.append(f"point {r.axis_value():.6g}: width={r.bracket_width:.3g} {note}".rstrip())


def cmd_sweep(opts):
    _, recs = _run_sweep(opts)
    out = Output("sweep", opts)
    out.header = ["axis_value", "kind", "v0_star", "bracket_width"]
    out.rows = [[r.axis_value(), r.kind, r.v0_star, r.bracket_width] for r in recs]
    _sweep_notes(out, recs)
    if not any(r.ok for r in recs):
        raise ThresholdError("every sweep point failed")
    return out


def cmd_scaling(opts):
    params, recs = _run_sweep(opts)
    ref = opts["reference"]
    out = Output("scaling", opts)
    if ref == "origin":
        lo, hi = parse_range(opts["bracket"])
        reference = find_threshold(params.with_(**{opts["axis"]: 0.0}), opts["kind"], (lo, hi),
                                   float(opts["tol"]), **_threshold_kwargs(opts))
        out.notes.append(f"reference: threshold at {opts['axis']}=0")
    elif ref == "extrapolate":
        reference = None
        out.notes.append("reference: power-law extrapolation from the three smallest grid values")
    else:
        reference = float(ref)
        out.notes.append(f"reference: {reference!r}")
    fit = fit_scaling(recs, reference, axis=opts["axis"])
    _sweep_notes(out, recs)
    out.notes.append(f"reference_v0: {fit.reference!r}")
    out.header = ["slope", "stderr", "ci_low", "ci_high", "intercept", "reference", "n"]
    out.rows = [[fit.slope, fit.stderr, fit.ci_low, fit.ci_high, fit.intercept, fit.reference, fit.n]]
    return out


def cmd_noise_table(opts):
    params = _params(opts, 0.0)
    table = noise_table(params, parse_grid(opts["omega"]))
    out = Output("noise-table", opts)
    nm = base_moments(params)
    out.notes.append(f"base_moments: s_ss={nm.s_ss!r} s_cc={nm.s_cc!r} s_sc={nm.s_sc!r} "
                     f"abs_error={nm.abs_error:.3g} tail_bound={nm.tail_bound:.3g}")
    out.header = ["omega", "g_ss", "g_cc", "g_sc", "i_ss", "i_cc", "i_sc"]
    out.rows = table.tolist()
    return out


def cmd_reconstruct(opts):
    with open(_need(opts, "moments")) as fh:
        m = MomentSet.from_json(fh.read())
    g = density_matrix_grid(m, int(opts["n"]), opts.get("x_span"))
    prefix = opts.get("output") or "rho"
    if prefix.endswith(".csv"):
        prefix = prefix[:-4]
    for part, arr in (("real", g.rho.real), ("imag", g.rho.imag)):
        out = Output("reconstruct", opts)
        out.notes.append(f"part: {part}")
        out.notes.append(f"trace: {g.trace!r} renormalization: {g.renormalization!r} purity: {g.purity!r}")
        out.header = [_fmt(x) for x in g.x_grid]
        out.rows = arr.tolist()
        out.write(f"{prefix}_{part}.csv")
    return None


def cmd_selftest(opts):
    from .selftest import run_all

    failed = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    if failed:
        raise ArithmeticError(f"{failed} self-test check(s) failed")
    return None


COMMANDS = {
    "bifurcation": cmd_bifurcation,
    "attractor": cmd_attractor,
    "lyapunov": cmd_lyapunov,
    "threshold": cmd_threshold,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
    "noise-table": cmd_noise_table,
    "reconstruct": cmd_reconstruct,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    t0 = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve(args)
        opts["command"] = args.command
        opts["_t0"] = t0
        out = COMMANDS[args.command](opts)
        if out is not None:
            out.write()
        return 0
    except UsageError as exc:
        print(f"evmchaos: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (ThresholdError, FixedPointError, QuadratureError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"evmchaos: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UnsupportedRegimeError, ValueError, OSError, KeyError) as exc:
        print(f"evmchaos: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
