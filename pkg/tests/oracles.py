"""Independent reference computations used by the test-suite.

Nothing here uses the iterated kernel.  Two oracles are provided:

* :func:`chain_u` — for normal innovations and the product-normal initial
  law, ``c_i = r X_i + s e_i`` is a scalar Markov chain,
  ``c_i = r c_{i-1} + (r + s) e_i`` with ``X_i = c_{i-1} + e_i``, so
  ``u_n = E prod_i 1{c_{i-1} + e_i <= x}`` follows from a backward
  recursion ``V_m(c) = int_{e <= x - c} phi(e) V_{m-1}(r c + (r+s) e) de``
  on a Chebyshev grid in ``c``.  Accurate to ~1e-9 for moderate
  parameters.
* adaptive :mod:`scipy.integrate` evaluations of the iterated-kernel
  components straight from their defining integrals, using only the
  elementary kernel ingredients.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import chebyshev, hermite_e, legendre
from scipy import integrate
from scipy.stats import norm

from armamax import kernel


def chain_u(r: float, s: float, x: float, ns, nodes: int = 300, radius: float = 9.0) -> dict[int, float]:
    """``u_n`` for product standard-normal ``(X_0, e_0)`` and N(0, 1) innovations."""
    ns = sorted(set(int(n) for n in ns))
    sd = math.sqrt(max((r + s) ** 2 / (1 - r * r), r * r + s * s)) if r < 1 else 10.0
    lo, hi = -radius * sd - 5.0, x + radius
    k = np.arange(nodes)
    t = np.cos(np.pi * (k + 0.5) / nodes)[::-1]
    c = lo + (hi - lo) * (t + 1) / 2
    ge, gw = legendre.leggauss(80)
    a = -radius
    b = np.clip(x - c, -radius, radius)
    e = (b - a)[:, None] / 2 * ge + (b + a)[:, None] / 2
    wt = (b - a)[:, None] / 2 * gw * norm.pdf(e)
    nxt = r * c[:, None] + (r + s) * e
    nxt_t = np.clip(2 * (nxt - lo) / (hi - lo) - 1, -1, 1)
    # c_0 = r X_0 + s e_0 ~ N(0, r^2 + s^2)
    hx, hw = hermite_e.hermegauss(120)
    c0_t = np.clip(2 * (math.hypot(r, s) * hx - lo) / (hi - lo) - 1, -1, 1)
    v = np.ones(nodes)
    out = {}
    for m in range(1, ns[-1] + 1):
        v = np.sum(wt * chebyshev.chebval(nxt_t, chebyshev.chebfit(t, v, nodes - 1)), axis=1)
        if m in ns:
            coef = chebyshev.chebfit(t, v, nodes - 1)
            out[m] = float(np.sum(hw * chebyshev.chebval(c0_t, coef)) / math.sqrt(2 * math.pi))
    return out


def _quad(fn, a, b, points=None):
    val, _ = integrate.quad(fn, a, b, epsabs=1e-13, epsrel=1e-11, limit=400, points=points)
    return val


def c12_adaptive(ctx, y, z) -> float:
    """``int b_y(t0, gamma_y(t0)) C_2((t0, gamma_y(t0)), z) dt0``."""
    lo, hi = -40.0, 40.0

    def g(t0):
        t1 = float(kernel.gamma(ctx, y, t0))
        return float(kernel.b(ctx, y, (t0, t1)) * kernel.eval_c2(ctx, (t0, t1), z))

    return _quad(g, lo, hi, points=[ctx.x])


def c21_adaptive(ctx, y, z) -> float:
    """``s int C_2(y, (t0, t0x - c)) b_t(z) dt0`` with ``c = r z0 + s z1``."""
    c = ctx.r * z[0] + ctx.s * z[1]

    def g(t0):
        t = (t0, min(t0, ctx.x) - c)
        return float(kernel.eval_c2(ctx, y, t) * kernel.b(ctx, t, z))

    return ctx.s * _quad(g, -40.0, 40.0, points=[ctx.x])


def c22_adaptive(ctx, y, z) -> float:
    """``int int C_2(y, t) C_2(t, z) dt`` by nested adaptive quadrature."""
    c = ctx.r * z[0] + ctx.s * z[1]
    yx = min(y[0], ctx.x)

    def inner(t0):
        def g(t1):
            t = (t0, t1)
            return float(kernel.eval_c2(ctx, y, t) * kernel.eval_c2(ctx, t, z))

        # both indicators switch along lines in t1
        cuts = [min(t0, ctx.x) - c]
        if math.isfinite(y[1]):
            cuts.append((yx - y[1] - ctx.r * t0) / ctx.s)
        cuts = [v for v in cuts if -40.0 < v < 40.0]
        return _quad(g, -40.0, 40.0, points=cuts or None)

    return _quad(inner, -40.0, 40.0, points=[ctx.x])
