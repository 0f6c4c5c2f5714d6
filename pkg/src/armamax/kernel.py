"""Pointwise evaluation of the iterated kernel ``K_2`` and its ingredients.

The one-step operator of the running-maximum recurrence acts on
functions ``h`` of ``z = (z_0, z_1)`` (``z_0`` the process value, ``z_1``
the last innovation).  Its kernel ``K = -r (C_1 + C_2)`` has a singular
part ``C_1`` (a Dirac delta on the line ``z_1 = gamma_y(z_0)``) and a
regular part

    C_2(y, z) = 1{r z_0 + s z_1 > y_0x - y_1} * b_{y.1}(z),
    b_y(z)    = f(y_0x - r z_0 - s z_1),   b_{y.1} = d b_y / d z_1,

with ``y_0x = min(y_0, x)``.  The iterated kernel
``K_2 = r^2 (C_11 + C_12 + C_21 + C_22)``, ``C_jk = int C_j(y,t) C_k(t,z) dt``,
is an ordinary function.  Every ``C_jk(y, z)`` depends on ``z`` only
through ``c = r z_0 + s z_1``; writing ``a = y_0x - y_1 + s c`` and
``T_0`` for the root of ``r T_0 + s min(T_0, x) = a``:

* ``C_11 = J f(y_1) f(T_0x - c)`` with the delta Jacobian
  ``J = s^2 / (r + s 1{T_0 < x})``;
* ``C_12 = -s f(y_1) beta``, where
  ``beta = int_{-inf}^{T_0} f'(t_x - c) dt
  = f(T_0x - c) + (T_0 - x)^+ f'(x - c)``;
* ``C_21 = -s^2 [Q_21 + f(x - c) f(p(tau)) / r]``;
* ``C_22 = s [f(y_1) beta + Q_22 + f'(x - c) F(p(tau)) / r]``,

where ``p(t) = y_0x + s c - r t - s min(t, x)``, ``tau = max(T_0, x)`` and

    Q_21 = int_{T_0}^{x} f'(p(t)) f(t - c) dt,
    Q_22 = int_{T_0}^{x} f'(t - c) f(p(t)) dt.

The tails beyond ``x`` were integrated in closed form, and the inner
``t_1`` integral of ``C_22`` analytically, so only the two finite
integrals ``Q_21``, ``Q_22`` need quadrature.  They are evaluated by a
composite Gauss–Legendre rule mapped onto the window where both density
factors are non-negligible.

Limit semantics: ``y_0 = +inf`` acts as ``y_0 = x``; ``y_1 = +inf``
removes ``C_11`` and ``C_12`` (and the ``f(y_1)`` term of ``C_22``) and
saturates the indicator, i.e. ``T_0 = -inf``.

The formulas require ``s > 0``: for ``s < 0`` the integral defining
``beta`` runs over an unbounded set on which ``f'(x - c)`` is constant,
so ``C_12`` is not an ordinary function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dist import ErrorDistribution, InitialJoint
from .errors import ConfigError, UsageError
from .quad import reference_rule

S_MIN = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    """ARMA(1,1) coefficients, threshold and laws.

    Parameters
    ----------
    r : float
        Autoregressive coefficient, ``r > 0`` and ``r != 1``.
    s : float
        Moving-average coefficient, ``s >= 1e-6``.
    x : float
        Threshold in ``P(M_n <= x)``.
    dist : ErrorDistribution
        Innovation law (needs an analytic density derivative).
    init : InitialJoint
        Law of ``(X_0, e_0)``.
    """

    r: float = 0.5
    s: float = 1.0
    x: float = 2.0
    dist: ErrorDistribution = field(default_factory=ErrorDistribution)
    init: InitialJoint = field(default_factory=InitialJoint)

    def __post_init__(self):
        for name in ("r", "s", "x"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ConfigError(f"model.{name} must be a finite number, got {v!r}")
        if not self.r > 0:
            raise ConfigError(f"model.r must be > 0, got {self.r}")
        if abs(self.r - 1.0) < 1e-12:
            raise ConfigError("model.r must differ from 1")
        if self.s < S_MIN:
            raise ConfigError(
                f"model.s must be >= {S_MIN} (the iterated kernel is not an ordinary function for s < 0), got {self.s}"
            )
        if not self.dist.has_deriv:
            raise ConfigError("dist: the kernel needs the density derivative; supply a pdf' column")

    def describe(self) -> dict:
        return {"r": self.r, "s": self.s, "x": self.x, "dist": self.dist.describe(), "init": self.init.describe()}


@dataclass(frozen=True)
class KernelRule:
    """Composite Gauss–Legendre rule for the window integrals ``Q_21``, ``Q_22``."""

    panels: int = 4
    m: int = 16

    def __post_init__(self):
        if self.panels < 1 or self.m < 2:
            raise ConfigError("kernel rule needs panels >= 1 and m >= 2")

    @property
    def unit(self):
        return reference_rule(self.panels, self.m)


DEFAULT_RULE = KernelRule()


# ----------------------------------------------------------------------
# elementary ingredients
def _arr(v):
    return np.asarray(v, dtype=float)


def y0x(ctx: ModelConfig, y0):
    """``min(y0, x)``; ``+inf`` maps to ``x``."""
    return np.minimum(_arr(y0), ctx.x)


def gamma(ctx: ModelConfig, y, z0):
    """Delta line ``gamma_y(z0) = (y_0x - y_1 - r z0) / s`` (``y_1`` finite)."""
    y_0, y_1 = map(_arr, y)
    if np.any(np.isinf(y_1)):
        raise UsageError("gamma is undefined for y1 = +inf; use the limit semantics of eval_k2")
    return (y0x(ctx, y_0) - y_1 - ctx.r * _arr(z0)) / ctx.s


def b(ctx: ModelConfig, y, z):
    """``b_y(z) = f(y_0x - r z_0 - s z_1)``."""
    y_0, _ = y
    z0, z1 = map(_arr, z)
    return ctx.dist.pdf(y0x(ctx, y_0) - ctx.r * z0 - ctx.s * z1)


def b_deriv1(ctx: ModelConfig, y, z):
    """``d b_y / d z_1 = -s f'(y_0x - r z_0 - s z_1)``."""
    y_0, _ = y
    z0, z1 = map(_arr, z)
    return -ctx.s * ctx.dist.pdf_deriv(y0x(ctx, y_0) - ctx.r * z0 - ctx.s * z1)


def indicator_a(ctx: ModelConfig, y, z):
    """``1{r z_0 + s z_1 > y_0x - y_1}`` (strict); always 1 when ``y_1 = +inf``."""
    y_0, y_1 = map(_arr, y)
    z0, z1 = map(_arr, z)
    with np.errstate(invalid="ignore"):
        out = (ctx.r * z0 + ctx.s * z1 > y0x(ctx, y_0) - y_1) | np.isposinf(y_1)
    return out.astype(float)


def eval_c2(ctx: ModelConfig, y, z):
    """Regular kernel part ``C_2(y, z) = indicator_a * b_deriv1``."""
    return indicator_a(ctx, y, z) * b_deriv1(ctx, y, z)


def _t0(ctx, yx, y_1, c):
    r, s, x = ctx.r, ctx.s, ctx.x
    fin = np.isfinite(y_1)
    a = yx - np.where(fin, y_1, 0.0) + s * c
    t0 = np.where(a <= (r + s) * x, a / (r + s), (a - s * x) / r)
    return np.where(fin, t0, -np.inf)


def solve_t(ctx: ModelConfig, y, z):
    """Root ``(T_0, T_1)`` of ``r T_0 + s min(T_0, x) = a`` and ``T_1 = T_0x - c``.

    ``a = y_0x - y_1 + s (r z_0 + s z_1)``.  The left-hand side is strictly
    increasing in ``T_0`` (``r > 0``, ``r + s > 0``), so the branch is
    selected by comparing ``a`` with its value ``(r + s) x`` at the kink.
    ``y_1 = +inf`` gives ``T_0 = -inf``.
    """
    y_0, y_1 = map(_arr, y)
    z0, z1 = map(_arr, z)
    c = ctx.r * z0 + ctx.s * z1
    t0 = _t0(ctx, y0x(ctx, y_0), y_1, c)
    return t0, np.minimum(t0, ctx.x) - c


# ----------------------------------------------------------------------
# iterated-kernel components as functions of c = r z0 + s z1
def _components(ctx: ModelConfig, y_0, y_1, c, rule: KernelRule | None = None, which=("11", "12", "21", "22")):
    rule = rule or DEFAULT_RULE
    r, s, x = ctx.r, ctx.s, ctx.x
    d = ctx.dist
    f, fp, F = d.pdf, d.pdf_deriv, d.cdf
    e_lo, e_hi = d.support
    y_0, y_1, c = np.broadcast_arrays(_arr(y_0), _arr(y_1), _arr(c))
    yx = np.minimum(y_0, x)
    fin = np.isfinite(y_1)
    y1f = np.where(fin, y_1, 0.0)
    t0 = _t0(ctx, yx, y_1, c)
    t0x = np.minimum(t0, x)
    fy1 = np.where(fin, f(y1f), 0.0)
    out = {}
    beta = None
    if {"11", "12", "22"} & set(which):
        with np.errstate(invalid="ignore"):
            beta = np.where(fin, f(t0x - c) + np.maximum(t0 - x, 0.0) * fp(x - c), 0.0)
    if "11" in which:
        jac = np.where(t0 < x, s * s / (r + s), s * s / r)
        out["11"] = np.where(fin, jac * fy1 * f(t0x - c), 0.0)
    if "12" in which:
        out["12"] = -s * fy1 * beta
    if "21" in which or "22" in which:
        tau = np.maximum(t0, x)
        ptau = yx + s * c - r * tau - s * x
        base = yx + s * c
        lo = np.maximum(np.maximum(t0, c + e_lo), (base - e_hi) / (r + s))
        hi = np.minimum(np.minimum(x, c + e_hi), (base - e_lo) / (r + s))
        span = np.maximum(hi - lo, 0.0)
        # the window integrals vanish wherever the window is empty
        live = np.flatnonzero(span > 0)
        ut, uw = rule.unit
        t = lo.ravel()[live, None] + span.ravel()[live, None] * ut
        w = span.ravel()[live, None] * uw
        cc = c.ravel()[live, None]
        f_p, fp_p = d.pdf_pair(base.ravel()[live, None] - (r + s) * t)
        f_t, fp_t = d.pdf_pair(t - cc)
        if "21" in which:
            q21 = np.zeros(c.size)
            q21[live] = np.sum(w * fp_p * f_t, axis=-1)
            q21 = q21.reshape(c.shape)
            out["21"] = -s * s * (q21 + f(x - c) * f(ptau) / r)
        if "22" in which:
            q22 = np.zeros(c.size)
            q22[live] = np.sum(w * fp_t * f_p, axis=-1)
            q22 = q22.reshape(c.shape)
            tail = fp(x - c) * F(ptau) / r
            out["22"] = s * (fy1 * beta + q22 + tail)
            out["22_reduced"] = s * (q22 + tail)
    return out


def _c_of(ctx, z):
    z0, z1 = map(_arr, z)
    return ctx.r * z0 + ctx.s * z1


def eval_c11(ctx: ModelConfig, y, z):
    """``C_11(y, z) = J b_y(T) b_T(z)``, zero for ``y_1 = +inf``."""
    return _components(ctx, y[0], y[1], _c_of(ctx, z), which=("11",))["11"]


def eval_c12(ctx: ModelConfig, y, z):
    """``C_12(y, z)`` in closed form, zero for ``y_1 = +inf``."""
    return _components(ctx, y[0], y[1], _c_of(ctx, z), which=("12",))["12"]


def eval_c21(ctx: ModelConfig, y, z, rule: KernelRule | None = None):
    """``C_21(y, z)`` including the delta Jacobian ``s``."""
    return _components(ctx, y[0], y[1], _c_of(ctx, z), rule, which=("21",))["21"]


def eval_c22(ctx: ModelConfig, y, z, rule: KernelRule | None = None):
    """``C_22(y, z) = int C_2(y, t) C_2(t, z) dt``."""
    return _components(ctx, y[0], y[1], _c_of(ctx, z), rule, which=("22",))["22"]


def k2_of_c(ctx: ModelConfig, y_0, y_1, c, rule: KernelRule | None = None):
    """``K_2(y, z)`` as a function of ``c = r z_0 + s z_1`` (broadcasting).

    ``C_12`` and the ``f(y_1) beta`` part of ``C_22`` cancel identically
    and are omitted from the sum.
    """
    comp = _components(ctx, y_0, y_1, c, rule, which=("11", "21", "22"))
    return ctx.r * ctx.r * (comp["11"] + comp["21"] + comp["22_reduced"])


def eval_k2(ctx: ModelConfig, y, z, rule: KernelRule | None = None):
    """Iterated kernel ``K_2(y, z) = r^2 (C_11 + C_12 + C_21 + C_22)``.

    ``y`` may contain ``+inf`` coordinates (limit semantics); arguments
    broadcast.
    """
    return k2_of_c(ctx, y[0], y[1], _c_of(ctx, z), rule)


eval_K2_at = eval_k2


def jump_line(ctx: ModelConfig, y_0, y_1):
    """Value ``c*`` of ``c`` at which ``K_2(y, .)`` jumps (``T_0 = x``).

    Returns ``nan`` for ``y_1 = +inf`` (no jump).
    """
    y_1 = _arr(y_1)
    with np.errstate(invalid="ignore"):
        out = ((ctx.r + ctx.s) * ctx.x - y0x(ctx, y_0) + y_1) / ctx.s
    return np.where(np.isfinite(y_1), out, np.nan)
