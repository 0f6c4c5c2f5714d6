"""Innovation laws and the initial joint distribution of ``(X_0, e_0)``.

Two analytic families (normal, logistic) are built in; a third family
reads a tabulated density from a CSV file.  All distributions are
location/scale families ``f(t) = f_std((t - loc) / scale) / scale``.

The initial joint cdf ``G_0(y_0, y_1) = P(X_0 <= y_0, e_0 <= y_1)`` is
represented by :class:`InitialJoint`.  The default is the independence
product of two standard normal cdfs; a stationary alternative, in which
``(X_0, e_0)`` carries the dependence of the stationary ARMA(1,1) law, is
also provided for normal innovations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate, optimize, special

from .errors import ConfigError

TAIL_TOL = 1e-10
FAMILIES = ("normal", "logistic", "table")

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class _Table:
    """Spline representation of a tabulated standardized density."""

    t_min: float
    t_max: float
    pdf: interpolate.CubicSpline
    cdf: interpolate.CubicSpline
    deriv: interpolate.CubicSpline | None
    inv_t: np.ndarray
    inv_p: np.ndarray
    mean: float
    sd: float


@dataclass(frozen=True)
class ErrorDistribution:
    """Law of the iid innovations ``e_i``.

    Parameters
    ----------
    family : {"normal", "logistic", "table"}
        Distribution family.
    location : float
        Location parameter (mean for the symmetric families).
    scale : float
        Scale parameter, strictly positive.  For the logistic family this
        is the usual logistic scale (standard deviation ``scale*pi/sqrt(3)``).
    table : _Table, optional
        Spline data for the ``"table"`` family; use :meth:`from_table`.
    tail_tol : float
        Total tail mass defining the effective-support radius.
    """

    family: str = "normal"
    location: float = 0.0
    scale: float = 1.0
    table: _Table | None = field(default=None, repr=False, compare=False)
    tail_tol: float = TAIL_TOL
    source: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"dist.family: unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (np.isfinite(self.location)):
            raise ConfigError("dist.location must be finite")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f"dist.scale must be > 0, got {self.scale}")
        if not (0 < self.tail_tol < 1):
            raise ConfigError("dist.tail_tol must lie in (0, 1)")
        if self.family == "table" and self.table is None:
            raise ConfigError("dist.family 'table' requires tabulated data (use ErrorDistribution.from_table)")

    # ------------------------------------------------------------------
    # construction helpers
    @classmethod
    def normal(cls, location: float = 0.0, scale: float = 1.0) -> "ErrorDistribution":
        return cls("normal", float(location), float(scale))

    @classmethod
    def logistic(cls, location: float = 0.0, scale: float = 1.0) -> "ErrorDistribution":
        return cls("logistic", float(location), float(scale))

    @classmethod
    def from_table(cls, path: str, location: float = 0.0, scale: float = 1.0) -> "ErrorDistribution":
        """Read a density table from a CSV file.

        The file holds two or three numeric columns ``t, pdf[, pdf']``;
        an optional header row is skipped.  The density is interpolated by
        a cubic spline, set to zero outside the tabulated range and
        renormalized to unit mass.  Without the third column the
        distribution is usable for sampling and cdf evaluation but
        :func:`pdf_deriv` raises :class:`ConfigError`.
        """
        rows = []
        try:
            with open(path, newline="") as fh:
                for rec in csv.reader(fh):
                    if not rec or rec[0].lstrip().startswith("#"):
                        continue
                    try:
                        rows.append([float(v) for v in rec])
                    except ValueError:
                        if rows:
                            raise
                        continue  # header row
        except (OSError, ValueError) as exc:
            raise ConfigError(f"dist.table: cannot read {path!r}: {exc}") from exc
        return cls._from_rows(rows, location, scale, source=str(path))

    @classmethod
    def _from_rows(cls, rows, location=0.0, scale=1.0, source=None) -> "ErrorDistribution":
        if len(rows) < 4:
            raise ConfigError("dist.table: need at least 4 rows")
        ncol = {len(r) for r in rows}
        if len(ncol) != 1 or ncol.pop() not in (2, 3):
            raise ConfigError("dist.table: every row must have 2 or 3 columns (t, pdf[, pdf'])")
        arr = np.asarray(rows, dtype=float)
        arr = arr[np.argsort(arr[:, 0])]
        t, p = arr[:, 0], arr[:, 1]
        if np.any(np.diff(t) <= 0):
            raise ConfigError("dist.table: abscissae must be distinct")
        if np.any(p < 0) or not np.all(np.isfinite(arr)):
            raise ConfigError("dist.table: pdf values must be finite and nonnegative")
        pdf = interpolate.CubicSpline(t, p, bc_type="natural")
        mass = float(pdf.integrate(t[0], t[-1]))
        if not mass > 0:
            raise ConfigError("dist.table: density has zero mass")
        pdf = interpolate.CubicSpline(t, p / mass, bc_type="natural")
        cdf = pdf.antiderivative()
        deriv = None
        if arr.shape[1] == 3:
            deriv = interpolate.CubicSpline(t, arr[:, 2] / mass, bc_type="natural")
        fine = np.linspace(t[0], t[-1], 20 * len(t) + 1)
        cf = np.maximum.accumulate(np.clip(cdf(fine), 0.0, 1.0))
        keep = np.concatenate([[True], np.diff(cf) > 0])
        mean = _spline_moment(pdf, t, 1)
        var = _spline_moment(pdf, t, 2) - mean * mean
        tab = _Table(float(t[0]), float(t[-1]), pdf, cdf, deriv, fine[keep], cf[keep], mean, math.sqrt(max(var, 0.0)))
        return cls("table", float(location), float(scale), table=tab, source=source)

    # ------------------------------------------------------------------
    def _std(self, t):
        return (np.asarray(t, dtype=float) - self.location) / self.scale

    def pdf(self, t):
        u = self._std(t)
        if self.family == "normal":
            out = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        elif self.family == "logistic":
            e = np.exp(-np.abs(u))
            out = e / (1.0 + e) ** 2
        else:
            tab = self.table
            inside = (u >= tab.t_min) & (u <= tab.t_max)
            out = np.where(inside, np.maximum(tab.pdf(np.clip(u, tab.t_min, tab.t_max)), 0.0), 0.0)
        return out / self.scale

    def pdf_deriv(self, t):
        u = self._std(t)
        if self.family == "normal":
            out = -u * _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        elif self.family == "logistic":
            e = np.exp(-np.abs(u))
            # d/du [e^{-|u|}/(1+e^{-|u|})^2] = -sign(u) e (1-e)/(1+e)^3
            out = -np.sign(u) * e * (1.0 - e) / (1.0 + e) ** 3
        else:
            tab = self.table
            if tab.deriv is None:
                raise ConfigError("dist.table: pdf derivative column missing; a third column pdf' is required")
            inside = (u >= tab.t_min) & (u <= tab.t_max)
            out = np.where(inside, tab.deriv(np.clip(u, tab.t_min, tab.t_max)), 0.0)
        return out / (self.scale * self.scale)

    def pdf_pair(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``(pdf(t), pdf_deriv(t))`` sharing one exponential for the normal family."""
        if self.family != "normal":
            return self.pdf(t), self.pdf_deriv(t)
        u = self._std(t)
        e = np.exp(-0.5 * u * u)
        return _INV_SQRT_2PI * e / self.scale, -u * _INV_SQRT_2PI * e / (self.scale * self.scale)

    def cdf(self, t):
        u = self._std(t)
        if self.family == "normal":
            return special.ndtr(u)
        if self.family == "logistic":
            return special.expit(u)
        tab = self.table
        inner = np.clip(tab.cdf(np.clip(u, tab.t_min, tab.t_max)), 0.0, 1.0)
        return np.where(u <= tab.t_min, 0.0, np.where(u >= tab.t_max, 1.0, inner))

    def sample(self, rng, count: int) -> np.ndarray:
        rng = _as_generator(rng)
        count = int(count)
        if count <= 0:
            return np.empty(0)
        if self.family == "normal":
            return rng.normal(self.location, self.scale, count)
        if self.family == "logistic":
            return rng.logistic(self.location, self.scale, count)
        tab = self.table
        u = rng.random(count)
        return self.location + self.scale * np.interp(u, tab.inv_p, tab.inv_t)

    @property
    def has_deriv(self) -> bool:
        return self.family != "table" or self.table.deriv is not None

    @property
    def mean(self) -> float:
        if self.family == "table":
            return self.location + self.scale * self.table.mean
        return self.location

    @property
    def sd(self) -> float:
        if self.family == "normal":
            return self.scale
        if self.family == "logistic":
            return self.scale * math.pi / math.sqrt(3.0)
        return self.scale * self.table.sd

    @property
    def support_radius(self) -> float:
        """Smallest ``R`` with ``1 - F(loc + R) + F(loc - R) <= tail_tol``."""
        tol = self.tail_tol
        if self.family == "normal":
            return -self.scale * float(special.ndtri(tol / 2.0))
        if self.family == "logistic":
            return self.scale * math.log(2.0 / tol - 1.0)
        tab = self.table
        span = max(abs(tab.t_min), abs(tab.t_max))

        def tail(rad):
            return float(1.0 - self.cdf(self.location + rad * self.scale) + self.cdf(self.location - rad * self.scale)) - tol

        if tail(span) > 0:
            return span * self.scale
        return self.scale * optimize.brentq(tail, 0.0, span, xtol=1e-12)

    @property
    def support(self) -> tuple[float, float]:
        """Interval ``(loc - R, loc + R)`` holding all but ``tail_tol`` of the mass."""
        rad = self.support_radius
        return self.location - rad, self.location + rad

    def describe(self) -> dict:
        out = {"family": self.family, "location": self.location, "scale": self.scale}
        if self.source:
            out["table"] = self.source
        return out


def _spline_moment(spl, t, k):
    grid = np.linspace(t[0], t[-1], 40 * len(t) + 1)
    vals = spl(grid) * grid**k
    return float(np.trapezoid(vals, grid)) if hasattr(np, "trapezoid") else float(np.trapz(vals, grid))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


# ----------------------------------------------------------------------
# module-level operations
def pdf(d: ErrorDistribution, t):
    """Density of ``d`` at ``t``."""
    return d.pdf(t)


def pdf_deriv(d: ErrorDistribution, t):
    """Derivative of the density of ``d`` at ``t``."""
    return d.pdf_deriv(t)


def cdf(d: ErrorDistribution, t):
    """Cumulative distribution function of ``d`` at ``t``."""
    return d.cdf(t)


def sample(d: ErrorDistribution, rng, count: int) -> np.ndarray:
    """Draw ``count`` iid variates from ``d`` using the generator ``rng``."""
    return d.sample(rng, count)


# ----------------------------------------------------------------------
def bvn_cdf(h, k, rho):
    """Standard bivariate normal cdf ``P(U <= h, V <= k)`` with correlation ``rho``.

    Uses Owen's T function; ``h`` and ``k`` may contain infinities.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    out = np.empty(h.shape)
    lo = (h == -np.inf) | (k == -np.inf)
    hinf = h == np.inf
    kinf = k == np.inf
    out[lo] = 0.0
    m = ~lo & hinf
    out[m] = special.ndtr(k[m])
    m = ~lo & ~hinf & kinf
    out[m] = special.ndtr(h[m])
    m = ~lo & ~hinf & ~kinf
    hh, kk = h[m], k[m]
    c = math.sqrt(1.0 - rho * rho)
    res = 0.5 * (special.ndtr(hh) + special.ndtr(kk))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # ratio form: (k - rho h) / (h c) underflows for denormal arguments
        ah = np.where(hh != 0, (kk / hh - rho) / c, np.copysign(np.inf, kk))
        ak = np.where(kk != 0, (hh / kk - rho) / c, np.copysign(np.inf, hh))
    # T(0, a) = atan(a)/(2 pi); owens_t handles infinite a
    res = res - special.owens_t(hh, ah) - special.owens_t(kk, ak)
    both0 = (hh == 0) & (kk == 0)
    # signs rather than the product, which can underflow to zero
    sh, sk = np.sign(hh), np.sign(kk)
    beta = np.where((sh * sk < 0) | ((sh * sk == 0) & (hh + kk < 0)), 0.5, 0.0)
    res = res - beta
    res = np.where(both0, 0.25 + np.arcsin(rho) / (2.0 * math.pi), res)
    out[m] = np.clip(res, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class InitialJoint:
    """Joint law of ``(X_0, e_0)``.

    Parameters
    ----------
    form : {"product", "stationary", "user"}
        ``"product"``: ``X_0`` and ``e_0`` independent with marginals
        ``x0`` and ``e0``.  ``"stationary"``: the stationary ARMA(1,1) law
        of ``(X_0, e_0)`` for normal innovations ``e0`` and coefficients
        ``(r, s)``; ``X_0 = e_0 + W`` with ``W`` independent normal.
        ``"user"``: a vectorized cdf callable and sampler.
    x0, e0 : ErrorDistribution
        Marginal laws (``x0`` unused for the stationary form).
    r, s : float
        Model coefficients, stationary form only.
    cdf_fn : callable, optional
        ``cdf_fn(y0, y1)`` for the user form.
    sampler : callable, optional
        ``sampler(rng, count) -> (x0, e0)`` for the user form.
    """

    form: str = "product"
    x0: ErrorDistribution = field(default_factory=ErrorDistribution)
    e0: ErrorDistribution = field(default_factory=ErrorDistribution)
    r: float | None = None
    s: float | None = None
    cdf_fn: Callable | None = field(default=None, compare=False)
    sampler: Callable | None = field(default=None, compare=False)
    x0_scale: float | None = None

    def __post_init__(self):
        if self.form not in ("product", "stationary", "user"):
            raise ConfigError(f"init.form: unknown form {self.form!r}")
        if self.form == "stationary":
            if self.e0.family != "normal":
                raise ConfigError("init.form 'stationary' is implemented for normal innovations only")
            if self.r is None or self.s is None or not (0 < abs(self.r) < 1):
                raise ConfigError("init.form 'stationary' needs coefficients with |r| < 1")
        if self.form == "user" and (self.cdf_fn is None or self.sampler is None):
            raise ConfigError("init.form 'user' needs both cdf_fn and sampler")

    @classmethod
    def product(cls, x0: ErrorDistribution | None = None, e0: ErrorDistribution | None = None) -> "InitialJoint":
        return cls("product", x0 or ErrorDistribution(), e0 or ErrorDistribution())

    @classmethod
    def stationary(cls, r: float, s: float, e0: ErrorDistribution | None = None) -> "InitialJoint":
        return cls("stationary", ErrorDistribution(), e0 or ErrorDistribution(), r=float(r), s=float(s))

    # stationary-form parameters ---------------------------------------
    @property
    def _w_mean_sd(self):
        r, s, e = self.r, self.s, self.e0
        return (r + s) * e.location / (1.0 - r), abs(r + s) * e.scale / math.sqrt(1.0 - r * r)

    @property
    def x0_mean(self) -> float:
        if self.form == "product":
            return self.x0.mean
        if self.form == "stationary":
            return self.e0.location + self._w_mean_sd[0]
        return 0.0

    @property
    def x0_sd(self) -> float:
        if self.form == "product":
            return self.x0.sd
        if self.form == "stationary":
            return math.hypot(self.e0.scale, self._w_mean_sd[1])
        return self.x0_scale or 1.0

    def cdf(self, y0, y1):
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        if self.form == "product":
            return self.x0.cdf(y0) * self.e0.cdf(y1)
        if self.form == "user":
            return np.asarray(self.cdf_fn(y0, y1), dtype=float)
        sx = self.x0_sd
        se = self.e0.scale
        rho = se / sx  # Cov(X0, e0) = Var(e0)
        with np.errstate(invalid="ignore"):
            h = (y0 - self.x0_mean) / sx
            k = (y1 - self.e0.location) / se
        return bvn_cdf(h, k, rho)

    def sample(self, rng, count: int) -> tuple[np.ndarray, np.ndarray]:
        rng = _as_generator(rng)
        if self.form == "product":
            return self.x0.sample(rng, count), self.e0.sample(rng, count)
        if self.form == "user":
            a, b = self.sampler(rng, count)
            return np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        e = self.e0.sample(rng, count)
        mw, sw = self._w_mean_sd
        return e + rng.normal(mw, sw, int(count)), e

    def describe(self) -> dict:
        out = {"form": self.form}
        if self.form == "product":
            out["x0"] = self.x0.describe()
            out["e0"] = self.e0.describe()
        elif self.form == "stationary":
            out["e0"] = self.e0.describe()
        return out


def eval_G0(init: InitialJoint, y0, y1=None):
    """Initial joint cdf ``G_0(y_0, y_1) = P(X_0 <= y_0, e_0 <= y_1)``.

    ``y0`` may also be a pair ``(y0, y1)`` when ``y1`` is omitted.
    Infinite coordinates follow the cdf limits.
    """
    if y1 is None:
        y0, y1 = y0
    return init.cdf(y0, y1)
