"""Command-line front end: ``armamax {eval,curve,spectrum,mc,compare}``.

Configuration precedence is command-line flags, then the environment
(``ARMAMAX_CACHE_DIR`` for the cache directory), then a JSON file given
with ``--config``, then built-in defaults.  The effective configuration
is written as ``#`` comment lines in front of every CSV (``threads``,
``out`` and ``cache_dir`` are omitted so that output does not depend on
them).

Exit codes: 0 success, 1 configuration/usage/file error, 2 numerical
error, 3 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dist import ErrorDistribution, InitialJoint
from .errors import ArmaMaxError, ComparisonFailure, ConfigError, UsageError
from .kernel import ModelConfig
from .maxdist import MaxDistResult, spectral_expansion, u1, un_leading, un_power_many, un_spectral
from .oracle import BUDGET, compare_rows, simulate_paths
from .spectral import GridSpec, biorth_defect, build_k2_matrix, eigensolve

log = logging.getLogger("armamax")

CACHE_ENV = "ARMAMAX_CACHE_DIR"
METHODS = ("power", "spectral", "leading")
COLUMNS = ("n", "x", "r", "s", "u", "method", "err_est")
NOT_ECHOED = ("threads", "out", "cache_dir", "command", "config", "verbose", "results", "reference")

DEFAULTS: dict[str, Any] = {
    "r": 0.5,
    "s": 1.0,
    "x": None,
    "x_min": None,
    "x_max": None,
    "x_steps": None,
    "n": None,
    "n_list": None,
    "r_list": None,
    "dist": "normal",
    "dist_location": 0.0,
    "dist_scale": 1.0,
    "init": "product",
    "grid_m": 8,
    "grid_panels": 3,
    "grid_density": 7.0,
    "quad_m": 12,
    "quad_panels": 8,
    "layout": "sheared",
    "correct": True,
    "trunc": None,
    "method": None,
    "paths": 1_000_000,
    "seed": 12345,
    "topk": None,
    "power_cap": 200,
    "budget": BUDGET,
    "out": None,
    "cache_dir": None,
    "threads": 1,
}

# dotted JSON keys accepted in --config files
ALIASES = {
    "model.r": "r",
    "model.s": "s",
    "model.x": "x",
    "dist.family": "dist",
    "dist.location": "dist_location",
    "dist.scale": "dist_scale",
    "dist.table": "dist",
    "init.form": "init",
    "quad.kernel_m": "grid_m",
    "quad.kernel_panels": "grid_panels",
    "quad.L": "trunc",
    "quad.m": "quad_m",
    "quad.panels": "quad_panels",
    "grid.layout": "layout",
    "grid.correct": "correct",
    "grid.density": "grid_density",
    "x_grid.min": "x_min",
    "x_grid.max": "x_max",
    "x_grid.steps": "x_steps",
    "mc.paths": "paths",
    "mc.seed": "seed",
    "cache.dir": "cache_dir",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise ConfigError(message)


def _flt_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("model")
    g.add_argument("--r", type=float, help="AR coefficient (default 0.5)")
    g.add_argument("--s", type=float, help="MA coefficient (default 1)")
    g.add_argument("--x", type=float, help="single threshold")
    g.add_argument("--x-min", type=float, help="x-grid start")
    g.add_argument("--x-max", type=float, help="x-grid end")
    g.add_argument("--x-steps", type=int, help="x-grid point count")
    g.add_argument("--n", type=int, help="single horizon")
    g.add_argument("--n-list", type=_int_list, help="comma-separated horizons")
    g.add_argument("--dist", help="innovation law: normal, logistic, or a CSV table path")
    g.add_argument("--dist-location", type=float, help="innovation location")
    g.add_argument("--dist-scale", type=float, help="innovation scale")
    g.add_argument("--init", choices=("product", "stationary"), help="law of (X0, e0)")
    g = common.add_argument_group("discretization")
    g.add_argument("--grid-m", type=int, help="kernel grid nodes per panel (default 8)")
    g.add_argument("--grid-panels", type=int, help="kernel grid panels per axis (default 3)")
    g.add_argument("--grid-density", type=float,
                   help="largest panel width in local length scales (default 7; 0 disables)")
    g.add_argument("--quad-m", type=int, help="nodes per panel of the direct quadratures (default 12)")
    g.add_argument("--quad-panels", type=int, help="panels per axis of the direct quadratures (default 8)")
    g.add_argument("--layout", choices=("sheared", "box"), help="kernel grid layout")
    g.add_argument("--no-correction", dest="correct", action="store_false", help="disable jump correction")
    g.add_argument("--trunc", type=float, help="symmetric truncation radius L (plain box)")
    g.add_argument("--topk", type=int, help="eigenpairs kept in the spectral route")
    g.add_argument("--power-cap", type=int, help="largest n allowed for the power route (default 200)")
    g = common.add_argument_group("run")
    g.add_argument("--method", help="comma-separated subset of power,spectral,leading")
    g.add_argument("--paths", type=int, help="Monte Carlo paths (default 1e6)")
    g.add_argument("--seed", type=int, help="Monte Carlo seed")
    g.add_argument("--out", help="output CSV path (default stdout)")
    g.add_argument("--cache-dir", help=f"kernel matrix cache directory (env {CACHE_ENV})")
    g.add_argument("--config", help="JSON configuration file")
    g.add_argument("--threads", type=int, help="worker thread cap (results do not depend on it)")
    g.add_argument("-v", "--verbose", action="store_true", help="log one line per stage to stderr")

    p = _Parser(prog="armamax", description="Distribution of the running maximum of an ARMA(1,1) process.")
    p.add_argument("--version", action="version", version=f"armamax {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eval", parents=[common], help="u_n over an x-grid and n-list",
                   argument_default=argparse.SUPPRESS)
    c = sub.add_parser("curve", parents=[common], help="figure data: u_n versus x for several r",
                       argument_default=argparse.SUPPRESS)
    c.add_argument("--r-list", type=_flt_list, help="comma-separated AR coefficients")
    sub.add_parser("spectrum", parents=[common], help="leading eigenvalues of the discretized K2",
                   argument_default=argparse.SUPPRESS)
    sub.add_parser("mc", parents=[common], help="Monte Carlo estimates", argument_default=argparse.SUPPRESS)
    cp = sub.add_parser("compare", parents=[common], help="compare a result CSV with a reference CSV",
                        argument_default=argparse.SUPPRESS)
    cp.add_argument("--budget", type=float, help="absolute tolerance added to 3 standard errors")
    cp.add_argument("results", help="CSV with columns n,x,...,u,method")
    cp.add_argument("reference", help="reference CSV (e.g. from 'mc'); a stderr column is used if present")
    return p


# ----------------------------------------------------------------------
def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--config: cannot read {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("--config: top level must be a JSON object")
    out = {}
    for key, val in _flatten(raw).items():
        name = ALIASES.get(key, key.replace("-", "_"))
        if name not in DEFAULTS:
            raise ConfigError(f"--config: unknown key {key!r}")
        out[name] = val
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, environment and flags."""
    cfg = dict(DEFAULTS)
    flags = vars(args)
    if flags.get("config"):
        cfg.update(load_config_file(flags["config"]))
    if os.environ.get(CACHE_ENV):
        cfg["cache_dir"] = os.environ[CACHE_ENV]
    for k, v in flags.items():
        if k in DEFAULTS:
            cfg[k] = v
    cfg["command"] = flags["command"]
    for k in ("results", "reference", "verbose"):
        if k in flags:
            cfg[k] = flags[k]
    return cfg


def _need_float(cfg, key, positive=False):
    v = cfg.get(key)
    try:
        v = float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"--{key.replace('_', '-')}: expected a number, got {cfg.get(key)!r}") from exc
    if not math.isfinite(v) or (positive and v <= 0):
        raise ConfigError(f"--{key.replace('_', '-')}: invalid value {v}")
    return v


def x_grid(cfg) -> np.ndarray:
    if cfg.get("x") is not None:
        return np.array([_need_float(cfg, "x")])
    if any(cfg.get(k) is not None for k in ("x_min", "x_max", "x_steps")):
        missing = [f"--{k.replace('_', '-')}" for k in ("x_min", "x_max", "x_steps") if cfg.get(k) is None]
        if missing:
            raise ConfigError(f"x-grid needs {', '.join(missing)}")
        lo, hi = _need_float(cfg, "x_min"), _need_float(cfg, "x_max")
        steps = int(cfg["x_steps"])
        if steps < 1 or (steps > 1 and not hi > lo):
            raise ConfigError("--x-steps must be >= 1 and --x-max > --x-min")
        return np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])
    raise ConfigError("missing threshold: give --x or --x-min/--x-max/--x-steps")


def n_list(cfg, default=None) -> list[int]:
    if cfg.get("n_list") is not None:
        ns = [int(v) for v in cfg["n_list"]]
    elif cfg.get("n") is not None:
        ns = [int(cfg["n"])]
    elif default is not None:
        ns = list(default)
    else:
        raise ConfigError("missing horizon: give --n or --n-list")
    if not ns or min(ns) < 0:
        raise ConfigError("--n/--n-list: horizons must be >= 0")
    return sorted(set(ns))


def methods(cfg, default=("power",)) -> list[str]:
    raw = cfg.get("method")
    ms = default if raw is None else [m.strip() for m in str(raw).split(",") if m.strip()]
    bad = [m for m in ms if m not in METHODS]
    if bad or not ms:
        raise ConfigError(f"--method: unknown method(s) {bad}; choose from {METHODS}")
    return list(dict.fromkeys(ms))


def make_dist(cfg) -> ErrorDistribution:
    fam = str(cfg.get("dist") or "normal")
    loc = _need_float(cfg, "dist_location")
    scale = _need_float(cfg, "dist_scale", positive=True)
    if fam in ("normal", "logistic"):
        return ErrorDistribution(fam, loc, scale)
    if not os.path.exists(fam):
        raise ConfigError(f"--dist: {fam!r} is neither a known family nor an existing table file")
    return ErrorDistribution.from_table(fam, loc, scale)


def make_ctx(cfg, r=None, x=0.0) -> ModelConfig:
    r = _need_float(cfg, "r") if r is None else float(r)
    s = _need_float(cfg, "s")
    d = make_dist(cfg)
    form = cfg.get("init") or "product"
    if form == "product":
        init = InitialJoint.product(ErrorDistribution(), ErrorDistribution())
    elif form == "stationary":
        if d.family != "normal":
            raise ConfigError("--init stationary requires --dist normal")
        init = InitialJoint.stationary(r, s, d)
    else:
        raise ConfigError(f"--init: unknown form {form!r}")
    return ModelConfig(r, s, float(x), d, init)


def grid_spec(cfg) -> GridSpec:
    trunc = cfg.get("trunc")
    return GridSpec(
        int(cfg["grid_m"]),
        int(cfg["grid_panels"]),
        str(cfg.get("layout") or "sheared"),
        bool(cfg.get("correct", True)),
        None if trunc is None else float(trunc),
        density=_density(cfg.get("grid_density")),
    )


def quad_spec(cfg) -> GridSpec:
    """Profile of the direct quadratures (G_1 samples, u_1)."""
    return GridSpec(int(cfg["quad_m"]), int(cfg["quad_panels"]), "box", False, None, density=None)


def _density(value):
    if value is None:
        return None
    value = float(value)
    if value < 0:
        raise ConfigError(f"--grid-density must be >= 0, got {value}")
    return value or None


def _threads(cfg) -> int:
    t = int(cfg.get("threads") or 1)
    if t < 1:
        raise ConfigError("--threads must be >= 1")
    return t


# ----------------------------------------------------------------------
def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _echo(cfg) -> list[str]:
    lines = [f"# armamax {__version__} {cfg['command']}"]
    for k in sorted(cfg):
        if k in NOT_ECHOED:
            continue
        v = cfg[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(fmt(t) for t in v)
        elif v is None:
            v = ""
        else:
            v = fmt(v)
        lines.append(f"# {k} = {v}")
    return lines


def write_csv(cfg, header: Sequence[str], rows: list[Sequence], extra_comments: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for line in _echo(cfg):
        buf.write(line + "\n")
    for line in extra_comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    out = cfg.get("out")
    if out:
        try:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"--out: cannot write {out!r}: {exc}") from exc
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def read_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path!r}: {exc}") from exc
    rows = list(csv.DictReader(lines))
    if lines and not rows and "n" not in lines[0]:
        raise ConfigError(f"{path!r}: no header row")
    for need in ("n", "x", "u"):
        if rows and need not in rows[0]:
            raise ConfigError(f"{path!r}: missing column {need!r}")
    return rows


# ----------------------------------------------------------------------
def _eval_point(cfg, ctx, ns, ms, spec, threads):
    """Rows for one (r, s, x)."""
    out = []
    quad = quad_spec(cfg)
    need_matrix = any(n >= 2 for n in ns) or "spectral" in ms or "leading" in ms
    mat = es = ex = None
    cap = int(cfg.get("power_cap") or 200)
    if "power" in ms and max(ns) > cap:
        raise ConfigError(f"power route limited to n <= {cap} (--power-cap); use --method spectral for larger n")
    if need_matrix:
        mat = build_k2_matrix(ctx, spec, threads=threads, cache_dir=cfg.get("cache_dir"))
        log.info("kernel matrix q=%d x=%g (%s, %.2fs)", mat.q, ctx.x, "cache" if mat.from_cache else "built",
                 mat.assembly_time)
    power = un_power_many(mat, ns, quad) if ("power" in ms and mat is not None) else None
    if power is None and "power" in ms:
        # only n <= 1 requested: no kernel matrix needed
        power = {n: MaxDistResult(n, ctx.x, 1.0 if n == 0 else u1(ctx, quad), "power") for n in ns}
    if "spectral" in ms or "leading" in ms:
        es = eigensolve(mat, cfg.get("topk"))
        ex = spectral_expansion(mat, es, cfg.get("topk"), quad)
        log.info("eigensolve x=%g: theta1=%s", ctx.x, es.theta[0])
    for n in ns:
        for m in ms:
            if m == "power":
                res = power[n]
                err = 0.0 if n <= 1 else float("nan")
                out.append((n, ctx.x, ctx.r, ctx.s, res.u, "power", err))
            elif m == "spectral":
                res = un_spectral(mat, es, n, expansion=ex, quad=quad)
                out.append((n, ctx.x, ctx.r, ctx.s, res.u, "spectral", 0.0 if n <= 1 else res.imag_residue))
            elif m == "leading" and n >= 2:
                res, _eps = un_leading(mat, es, n, expansion=ex, quad=quad)
                out.append((n, ctx.x, ctx.r, ctx.s, res.u, "leading", res.err_est))
    return out


def cmd_eval(cfg) -> int:
    xs = x_grid(cfg)
    ns = n_list(cfg)
    ms = methods(cfg)
    spec = grid_spec(cfg)
    threads = _threads(cfg)
    make_ctx(cfg)  # validate before computing
    rows = []
    for xv in xs:
        rows.extend(_eval_point(cfg, make_ctx(cfg, x=xv), ns, ms, spec, threads))
    write_csv(cfg, COLUMNS, rows)
    return 0


def cmd_curve(cfg) -> int:
    rs = cfg.get("r_list")
    if rs is None:
        rs = [_need_float(cfg, "r")]
    if not rs:
        raise ConfigError("--r-list must not be empty")
    xs = x_grid(cfg)
    ns = n_list(cfg, default=[1000])
    ms = methods(cfg, default=("spectral",))
    spec = grid_spec(cfg)
    threads = _threads(cfg)
    for r in rs:
        make_ctx(cfg, r=r)
    rows = []
    for r in rs:
        for xv in xs:
            rows.extend(_eval_point(cfg, make_ctx(cfg, r=r, x=xv), ns, ms, spec, threads))
    rs_txt = " ".join(fmt(float(r)) for r in rs)
    gp = (f"gnuplot: set datafile separator ','; plot for [r in \"{rs_txt}\"] 'FILE' "
          "using 2:(abs($3-r)<1e-12 ? $5 : NaN) with lines title 'r='.r")
    write_csv(cfg, COLUMNS, rows, [gp])
    return 0


def cmd_spectrum(cfg) -> int:
    x = _need_float(cfg, "x") if cfg.get("x") is not None else None
    if x is None:
        raise ConfigError("missing threshold: spectrum needs --x")
    ctx = make_ctx(cfg, x=x)
    mat = build_k2_matrix(ctx, grid_spec(cfg), threads=_threads(cfg), cache_dir=cfg.get("cache_dir"))
    topk = cfg.get("topk") or 10
    es = eigensolve(mat, min(int(topk), mat.q))
    g = es.left.conj().T @ es.right
    defect = np.max(np.abs(g - np.eye(es.k)), axis=1)
    rows = [(j + 1, es.theta[j].real, es.theta[j].imag, es.residual_right[j], defect[j]) for j in range(es.k)]
    write_csv(cfg, ("j", "re", "im", "residual", "biorth_defect"), rows,
               [f"q = {mat.q}; norm = {fmt(es.norm)}; multiplicity = {es.multiplicity}"])
    return 0


def cmd_mc(cfg) -> int:
    xs = x_grid(cfg)
    ns = n_list(cfg)
    if min(ns) < 1:
        raise ConfigError("mc: horizons must be >= 1")
    ctx = make_ctx(cfg, x=float(xs[0]))
    paths = int(cfg["paths"])
    est = simulate_paths(ctx, ns, xs, paths, int(cfg["seed"]), threads=_threads(cfg))
    p, se = est.p, est.stderr
    rows = []
    for a, n in enumerate(est.ns):
        for b, xv in enumerate(est.x):
            rows.append((n, xv, ctx.r, ctx.s, p[a, b], "mc", se[a, b], se[a, b]))
    write_csv(cfg, COLUMNS + ("stderr",), rows)
    return 0


def _num(row, key, path):
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad value in column {key!r}: {row.get(key)!r}") from exc


@dataclass
class _Row:
    n: int
    x: float
    u: float
    method: str
    r: float
    s: float


def cmd_compare(cfg) -> int:
    res_path, ref_path = cfg["results"], cfg["reference"]
    results = read_csv(res_path)
    reference = read_csv(ref_path)
    ref: dict = {}
    for row in reference:
        key = (int(_num(row, "n", ref_path)), float(f"{_num(row, 'x', ref_path):.12g}"))
        se = _num(row, "stderr", ref_path) if row.get("stderr") not in (None, "") else 0.0
        val = (_num(row, "u", ref_path), se)
        if key not in ref or row.get("method") == "mc":
            ref[key] = val
    rows = [
        _Row(int(_num(r, "n", res_path)), _num(r, "x", res_path), _num(r, "u", res_path), r.get("method", ""),
             float(r.get("r", "nan") or "nan"), float(r.get("s", "nan") or "nan"))
        for r in results
    ]
    report = compare_rows(rows, ref, float(cfg.get("budget", BUDGET)))
    out = [(c.n, c.x, c.r, c.s, c.method, c.u, c.p_ref, c.stderr, c.deviation, c.z, c.flagged, c.passed)
           for c in report]
    write_csv(cfg, ("n", "x", "r", "s", "method", "u", "p_ref", "stderr", "deviation", "z", "flagged", "pass"), out)
    failed = sum(not c.passed for c in report)
    if failed:
        raise ComparisonFailure(f"{failed} of {len(report)} points failed |u - p| <= 3*stderr + {cfg.get('budget')}")
    return 0


COMMANDS = {"eval": cmd_eval, "curve": cmd_curve, "spectrum": cmd_spectrum, "mc": cmd_mc, "compare": cmd_compare}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="armamax: %(message)s", stream=sys.stderr)
        cfg = resolve(args)
        return COMMANDS[cfg["command"]](cfg)
    except ArmaMaxError as exc:
        print(f"armamax: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"armamax: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
