"""Independent ground truth: Monte Carlo simulation and direct quadrature.

:func:`simulate_paths` draws ARMA(1,1) paths in fixed-size blocks, each
block with its own counter-based (Philox) stream spawned from one
:class:`numpy.random.SeedSequence`.  Per-block tallies are integers, so
the estimate does not depend on how blocks are scheduled over threads.
The running maximum of every path is recorded for all requested ``n`` at
once (coupled ladder), which makes ``p_hat`` exactly nonincreasing in
``n``.

:func:`direct_small_n` integrates the defining event for ``n <= 2`` with
adaptive quadrature (:func:`scipy.integrate.nquad`); the last innovation
is integrated analytically through the cdf.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import AccuracyError, ConfigError, UsageError
from .kernel import ModelConfig

BLOCK = 1 << 16
BUDGET = 0.01


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimates of ``P(M_n <= x)`` on an ``n`` ladder and ``x`` grid.

    Attributes
    ----------
    ns : tuple of int
        Horizons, increasing.
    x : ndarray
        Threshold grid.
    counts : ndarray of int, shape (len(ns), len(x))
        Number of paths with ``M_n <= x``.
    paths : int
    seed : int
    r, s : float
    """

    ns: tuple
    x: np.ndarray
    counts: np.ndarray
    paths: int
    seed: int
    r: float = float("nan")
    s: float = float("nan")

    @property
    def p(self) -> np.ndarray:
        return self.counts / self.paths

    @property
    def stderr(self) -> np.ndarray:
        p = self.p
        return np.sqrt(p * (1.0 - p) / self.paths)

    def row(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        k = self.ns.index(int(n))
        return self.p[k], self.stderr[k]


def _block_tally(ctx: ModelConfig, seed_seq: np.random.SeedSequence, count: int, ns: Sequence[int], xs: np.ndarray):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    r, s = ctx.r, ctx.s
    x_prev, e_prev = ctx.init.sample(rng, count)
    run_max = np.full(count, -np.inf)
    want = set(ns)
    tallies = np.zeros((len(ns), len(xs)), dtype=np.int64)
    k = 0
    for i in range(1, ns[-1] + 1):
        e = ctx.dist.sample(rng, count)
        x_prev = r * x_prev + e + s * e_prev
        e_prev = e
        np.maximum(run_max, x_prev, out=run_max)
        if i in want:
            tallies[k] = np.searchsorted(np.sort(run_max), xs, side="right")
            k += 1
    return tallies


def simulate_paths(
    ctx: ModelConfig,
    ns: int | Iterable[int],
    x_grid,
    paths: int,
    seed: int = 0,
    threads: int = 1,
    block: int = BLOCK,
) -> MCEstimate:
    """Estimate ``P(M_n <= x)`` by simulating ``paths`` coupled paths.

    Parameters
    ----------
    ctx : ModelConfig
        Model; ``ctx.init`` supplies ``(X_0, e_0)`` and ``ctx.dist`` the innovations.
    ns : int or iterable of int
        Horizon(s) ``n >= 1``.
    x_grid : array_like
        Thresholds.
    paths : int
        Number of simulated paths (``>= 1``).
    seed : int
        Root seed; block ``b`` uses the ``b``-th spawned child stream.
    threads : int
        Worker threads; the result does not depend on it.
    block : int
        Paths per block (part of the stream layout, keep fixed for reproducibility).
    """
    ns = sorted({int(n) for n in np.atleast_1d(ns)})
    if not ns or ns[0] < 1:
        raise ConfigError("Monte Carlo horizons must be >= 1")
    if int(paths) < 1:
        raise ConfigError(f"paths must be >= 1, got {paths}")
    paths = int(paths)
    xs = np.asarray(x_grid, dtype=float).ravel()
    nblocks = -(-paths // block)
    children = np.random.SeedSequence(int(seed)).spawn(nblocks)
    sizes = [min(block, paths - b * block) for b in range(nblocks)]

    def work(b):
        return _block_tally(ctx, children[b], sizes[b], ns, xs)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(work, range(nblocks)))
    else:
        parts = [work(b) for b in range(nblocks)]
    counts = np.zeros((len(ns), len(xs)), dtype=np.int64)
    for t in parts:
        counts += t
    return MCEstimate(tuple(ns), xs, counts, paths, int(seed), ctx.r, ctx.s)


# ----------------------------------------------------------------------
def _v_law(ctx: ModelConfig):
    """``X_0 = kappa e_0 + V`` with ``V`` independent of ``e_0``: (kappa, pdf_V, lo, hi)."""
    init = ctx.init
    if init.form == "product":
        d = init.x0
        lo, hi = d.location - 2 * d.support_radius, d.location + 2 * d.support_radius
        return 0.0, init.x0.pdf, init.e0, lo, hi
    if init.form == "stationary":
        mw, sw = init._w_mean_sd
        rad = 7.0 * sw

        def pdf_w(v):
            return math.exp(-0.5 * ((v - mw) / sw) ** 2) / (sw * math.sqrt(2 * math.pi))

        return 1.0, pdf_w, init.e0, mw - rad, mw + rad
    raise ConfigError("direct_small_n supports the product and stationary initial laws only")


def direct_small_n(ctx: ModelConfig, n: int, x: float | None = None, tol: float = 1e-6) -> float:
    """Exact ``P(M_n <= x)`` for ``n`` in {1, 2} by adaptive quadrature.

    ``n = 1``: ``E F(x - r X_0 - s e_0)`` over ``(X_0, e_0)``.
    ``n = 2``: ``E[1{X_1 <= x} F(x - r X_1 - s e_1)]`` over ``(X_0, e_0, e_1)``.

    Raises
    ------
    AccuracyError
        If the reported absolute error exceeds ``tol``.
    """
    n = int(n)
    if n not in (1, 2):
        raise ConfigError("direct_small_n supports n in {1, 2}")
    x = ctx.x if x is None else float(x)
    r, s = ctx.r, ctx.s
    d = ctx.dist
    kappa, pdf_v, e0law, vlo, vhi = _v_law(ctx)
    elo0, ehi0 = e0law.location - 2 * e0law.support_radius, e0law.location + 2 * e0law.support_radius
    elo, ehi = d.support
    f, F = d.pdf, d.cdf
    opts = {"epsabs": tol / 20, "epsrel": 1e-10, "limit": 200}
    f0 = e0law.pdf

    if n == 1:
        def g1(e0, v):
            x0 = kappa * e0 + v
            return float(pdf_v(v) * f0(e0) * F(x - r * x0 - s * e0))

        val, err = integrate.nquad(g1, [(elo0, ehi0), (vlo, vhi)], opts=[opts, opts])
    else:
        def g2(e1, e0, v):
            x0 = kappa * e0 + v
            x1 = r * x0 + e1 + s * e0
            return float(f(e1) * F(x - r * x1 - s * e1))

        def e1_range(e0, v):
            x0 = kappa * e0 + v
            hi = min(ehi, x - r * x0 - s * e0)
            return (elo, max(hi, elo))

        def outer(e0, v):
            return float(pdf_v(v) * f0(e0))

        def g2w(e1, e0, v):
            return outer(e0, v) * g2(e1, e0, v)

        val, err = integrate.nquad(g2w, [e1_range, (elo0, ehi0), (vlo, vhi)], opts=[opts, opts, opts])
    if not (math.isfinite(val) and err <= tol):
        raise AccuracyError(f"direct quadrature for n={n} reached error {err:.3g} > {tol}")
    return float(val)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ComparisonRow:
    n: int
    x: float
    r: float
    s: float
    method: str
    u: float
    p_ref: float
    stderr: float
    deviation: float
    z: float
    flagged: bool
    passed: bool


def _key(n, x):
    return int(n), float(f"{float(x):.12g}")


def compare_rows(results: Iterable, reference: dict, budget: float = BUDGET) -> list[ComparisonRow]:
    """Compare result rows against reference values.

    ``results`` yields objects with ``n, x, u, method`` (and optionally
    ``r, s``); ``reference`` maps ``(n, x)`` keys (see :func:`_key`) to
    ``(p, stderr)``.  A point passes when
    ``|u - p| <= 3 stderr + budget``; it is *flagged* when ``|z| > 3``.

    Raises
    ------
    UsageError
        If a result has no matching reference key.
    """
    out = []
    for res in results:
        k = _key(res.n, res.x)
        if k not in reference:
            raise UsageError(f"no reference value for n={res.n}, x={res.x}")
        p, se = reference[k]
        dev = float(res.u) - float(p)
        if se > 0:
            z = dev / se
        else:
            z = 0.0 if dev == 0 else math.copysign(math.inf, dev)
        passed = abs(dev) <= 3.0 * se + budget
        out.append(ComparisonRow(int(res.n), float(res.x), float(getattr(res, "r", float("nan"))),
                                 float(getattr(res, "s", float("nan"))), str(res.method), float(res.u), float(p),
                                 float(se), dev, z, abs(z) > 3.0, passed))
    return out


def compare(results: Iterable, mc: MCEstimate, budget: float = BUDGET) -> list[ComparisonRow]:
    """Compare :class:`~armamax.maxdist.MaxDistResult` objects with a Monte Carlo estimate."""
    ref = {}
    p, se = mc.p, mc.stderr
    for a, n in enumerate(mc.ns):
        for b, xv in enumerate(mc.x):
            ref[_key(n, xv)] = (p[a, b], se[a, b])
    rows = []
    for res in results:
        rows.append(_WithRS(res, mc.r, mc.s))
    return compare_rows(rows, ref, budget)


class _WithRS:
    def __init__(self, res, r, s):
        self._res = res
        self.r, self.s = r, s

    def __getattr__(self, item):
        return getattr(self._res, item)
