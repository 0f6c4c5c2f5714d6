"""``u_n = P(M_n <= x)`` by operator iteration, spectral expansion and asymptotics.

With ``G_n(y) = P(M_n <= x, X_n <= y_0, e_n <= y_1)`` the recurrence
``G_n = K G_{n-1}`` holds with the one-step operator

    (K h)(y) = -r f(y_1) int h(z_0, gamma_y(z_0)) dz_0
               + r int dz_0 int_{u < y_1} f'(u) h(z_0, (y_0x - r z_0 - u)/s) du,

and ``u_n = G_n(+inf, +inf)``.  :func:`apply_k_function` evaluates this
collapsed form by direct quadrature; it is used for ``G_1 = K G_0`` and as
the independent check of the iterated kernel.

For ``n = 2m + i`` (``i`` in {0, 1}, ``m >= 1``)

    u_n = k_inf^T K2hat^(m-1) g_i
        = sum_j theta_j^m r_j(inf) B_j(G_i),

where ``g_i`` holds ``G_i`` at the grid nodes, ``k_inf`` is the Nyström
row of ``K_2`` at ``y = (+inf, +inf)``, ``r_j(inf) = k_inf^T r_j / theta_j``
and ``B_j(G_i) = l_j^H g_i`` (left vectors include the weights).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InconsistencyError, NumericalError
from .kernel import ModelConfig
from .quad import Grid2D, reference_rule
from .spectral import (
    ZERO_TOL,
    EigenSystem,
    GridSpec,
    IteratedKernelMatrix,
    QUAD_GRID,
    build_quad_grid,
    nystrom_extend,
)

IMAG_WARN = 1e-9
IMAG_FAIL = 1e-6
U_PANELS, U_M = 4, 12


@dataclass(frozen=True)
class MaxDistResult:
    """One value ``u_n(x)``.

    Attributes
    ----------
    n : int
    x : float
    u : float
        Probability estimate (real part).
    method : str
        ``"power"``, ``"spectral"``, ``"leading"`` or ``"direct"``.
    imag_residue : float
        Magnitude of the discarded imaginary part.
    fingerprint : str
        Fingerprint of the kernel matrix used (empty when none).
    err_est : float
        Error indicator; see :func:`un_leading` and the CLI documentation.
    """

    n: int
    x: float
    u: float
    method: str
    imag_residue: float = 0.0
    fingerprint: str = ""
    err_est: float = float("nan")


# ----------------------------------------------------------------------
# direct application of the one-step operator
def apply_k_values(ctx: ModelConfig, h: Callable, y0, y1, quad: GridSpec = QUAD_GRID,
                   chunk: int | None = None) -> np.ndarray:
    """Evaluate ``(K h)(y)`` at points ``y = (y0, y1)`` by direct quadrature.

    ``h(z0, z1)`` must accept broadcasting arrays.  The ``z_0`` integral
    uses the axis-0 grid of the quadrature profile (split at ``x``); the
    ``u`` integral a composite Gauss–Legendre rule on
    ``[e_lo, min(y_1, e_hi)]``.  ``y`` may contain ``+inf``.
    """
    r, s, x = ctx.r, ctx.s, ctx.x
    d = ctx.dist
    e_lo, e_hi = d.support
    g0 = build_quad_grid(ctx, quad).axis0
    a0, w0 = g0.nodes, g0.weights
    ut, uw = reference_rule(U_PANELS, U_M)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y0, y1 = np.broadcast_arrays(y0, y1)
    shape = y0.shape
    y0, y1 = y0.ravel(), y1.ravel()
    out = np.empty(y0.size)
    per = len(a0) * len(ut)
    chunk = chunk or max(1, 3_000_000 // per)
    for i in range(0, y0.size, chunk):
        sl = slice(i, i + chunk)
        yx = np.minimum(y0[sl], x)
        yy = y1[sl]
        fin = np.isfinite(yy)
        # singular part along z1 = gamma_y(z0)
        gam = (yx[:, None] - np.where(fin, yy, 0.0)[:, None] - r * a0[None, :]) / s
        line = np.where(fin, d.pdf(np.where(fin, yy, 0.0)) * (np.asarray(h(a0[None, :], gam), dtype=float) @ w0), 0.0)
        # regular part over u < y1
        top = np.clip(np.where(fin, yy, e_hi), e_lo, e_hi)
        span = top - e_lo
        u = e_lo + span[:, None] * ut[None, :]
        wu = span[:, None] * uw[None, :] * d.pdf_deriv(u)
        z1 = (yx[:, None, None] - r * a0[None, :, None] - u[:, None, :]) / s
        hv = np.asarray(h(a0[None, :, None], z1), dtype=float)
        reg = np.einsum("ijk,j,ik->i", hv, w0, wu)
        out[sl] = -r * line + r * reg
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite value in direct operator application")
    return out.reshape(shape)


def apply_k_function(ctx: ModelConfig, h: Callable, quad: GridSpec = QUAD_GRID) -> Callable:
    """The function ``y -> (K h)(y)``, evaluated by direct quadrature."""

    def kh(y0, y1):
        return apply_k_values(ctx, h, y0, y1, quad)

    return kh


def g0_function(ctx: ModelConfig) -> Callable:
    return ctx.init.cdf


def eval_g1(ctx: ModelConfig, y0, y1, quad: GridSpec = QUAD_GRID):
    """``G_1(y) = (K G_0)(y)`` by direct quadrature (``+inf`` allowed)."""
    out = apply_k_values(ctx, ctx.init.cdf, y0, y1, quad)
    return out if out.ndim else float(out)


def grid_samples(mat: IteratedKernelMatrix, quad: GridSpec = QUAD_GRID) -> tuple[np.ndarray, np.ndarray]:
    """``(G_0, G_1)`` sampled at the grid nodes of ``mat`` (cached on ``mat``)."""
    key = ("g", quad)
    if key not in mat.extras:
        z = mat.grid.nodes
        g0 = np.asarray(mat.ctx.init.cdf(z[:, 0], z[:, 1]), dtype=float)
        g1 = apply_k_values(mat.ctx, mat.ctx.init.cdf, z[:, 0], z[:, 1], quad)
        mat.extras[key] = (g0, g1)
    return mat.extras[key]


def u1(ctx: ModelConfig, quad: GridSpec = QUAD_GRID) -> float:
    """``u_1 = G_1(+inf, +inf)``."""
    return float(eval_g1(ctx, np.inf, np.inf, quad)[0])


# ----------------------------------------------------------------------
# operator iteration
def un_power_many(mat: IteratedKernelMatrix, ns: Iterable[int], quad: GridSpec = QUAD_GRID) -> dict[int, MaxDistResult]:
    """``u_n`` for several ``n`` by powers of the Nyström matrix.

    One pass per parity: the iterate ``K2hat^(m-1) g_i`` is advanced once
    per step and read off with the infinity row whenever ``2m + i`` is
    requested.
    """
    ctx = mat.ctx
    ns = sorted({int(n) for n in ns})
    if any(n < 0 for n in ns):
        raise ValueError("n must be >= 0")
    out: dict[int, MaxDistResult] = {}
    fp = mat.fingerprint
    for n in ns:
        if n == 0:
            out[0] = MaxDistResult(0, ctx.x, 1.0, "power", 0.0, fp)
        elif n == 1:
            out[1] = MaxDistResult(1, ctx.x, u1(ctx, quad), "power", 0.0, fp)
    big = [n for n in ns if n >= 2]
    if big:
        g = grid_samples(mat, quad)
        kinf = mat.inf_row
        for i in (0, 1):
            want = sorted({(n - i) // 2 for n in big if n % 2 == i})
            if not want:
                continue
            v = g[i].copy()
            m = 1
            for target in want:
                while m < target:
                    v = mat.matvec(v)
                    m += 1
                    if not np.all(np.isfinite(v)):
                        raise NumericalError(f"power iteration produced non-finite values at step {m}")
                n = 2 * target + i
                out[n] = MaxDistResult(n, ctx.x, float(kinf @ v), "power", 0.0, fp)
    return out


def un_power(mat: IteratedKernelMatrix, n: int, quad: GridSpec = QUAD_GRID) -> MaxDistResult:
    """``u_n`` by operator iteration (``n = 0``: 1; ``n = 1``: direct quadrature)."""
    return un_power_many(mat, [n], quad)[int(n)]


# ----------------------------------------------------------------------
# spectral expansion
@dataclass
class SpectralExpansion:
    """Precomputed terms ``r_j(inf) B_j(G_i)`` of the eigen-expansion."""

    theta: np.ndarray
    r_inf: np.ndarray
    b: tuple[np.ndarray, np.ndarray]
    fingerprint: str
    x: float
    u1: float
    groups: list = field(default_factory=list)

    def terms(self, n: int) -> np.ndarray:
        m, i = divmod(int(n), 2)
        return self.theta**m * self.r_inf * self.b[i]


def spectral_expansion(mat: IteratedKernelMatrix, es: EigenSystem, topk: int | None = None,
                       quad: GridSpec = QUAD_GRID) -> SpectralExpansion:
    k = es.k if topk is None else min(int(topk), es.k)
    keep = np.flatnonzero(np.abs(es.theta[:k]) >= ZERO_TOL)
    r_inf = nystrom_extend(mat, es, keep, np.inf, np.inf)[0] if keep.size else np.zeros(0)
    g0, g1 = grid_samples(mat, quad)
    left = es.left[:, keep]
    b = (left.conj().T @ g0, left.conj().T @ g1)
    return SpectralExpansion(es.theta[keep], r_inf, b, mat.fingerprint, mat.ctx.x, u1(mat.ctx, quad),
                             [g for g in es.groups() if g[0] in set(keep)])


def _real(val: complex, what: str) -> tuple[float, float]:
    im = abs(complex(val).imag)
    if im > IMAG_FAIL * max(1.0, abs(complex(val).real)):
        raise InconsistencyError(f"{what}: imaginary residue {im:.3g} exceeds {IMAG_FAIL}")
    return float(complex(val).real), im


def un_spectral(mat: IteratedKernelMatrix, es: EigenSystem, n: int, topk: int | None = None,
                expansion: SpectralExpansion | None = None, quad: GridSpec = QUAD_GRID) -> MaxDistResult:
    """``u_n = sum_j theta_j^m r_j(inf) B_j(G_i)`` for ``n = 2m + i``.

    ``n = 0`` and ``n = 1`` are returned directly (1 and the quadrature
    value of ``u_1``).  The real part is returned; the imaginary residue
    is recorded and must stay below ``1e-6``.
    """
    ex = expansion or spectral_expansion(mat, es, topk, quad)
    n = int(n)
    if n == 0:
        return MaxDistResult(0, ex.x, 1.0, "spectral", 0.0, ex.fingerprint)
    if n == 1:
        return MaxDistResult(1, ex.x, ex.u1, "spectral", 0.0, ex.fingerprint)
    total = ex.terms(n).sum()
    u, im = _real(total, f"spectral u_{n}")
    return MaxDistResult(n, ex.x, u, "spectral", im, ex.fingerprint, err_est=im)


def un_leading(mat: IteratedKernelMatrix, es: EigenSystem, n: int,
               expansion: SpectralExpansion | None = None, quad: GridSpec = QUAD_GRID) -> tuple[MaxDistResult, float]:
    """Dominant-group approximation ``B(G_i) theta_1^m`` and its relative error.

    Returns ``(result, epsilon)`` with ``epsilon = u_spectral / estimate - 1``
    computed as (sum of non-dominant terms) / estimate, which is the same
    quantity without cancellation.  ``result.err_est`` is
    ``|u_spectral - estimate|``.
    """
    if int(n) < 2:
        raise ValueError("un_leading needs n >= 2")
    ex = expansion or spectral_expansion(mat, es, None, quad)
    if not ex.groups:
        raise NumericalError("no dominant eigenvalue group")
    dom = np.asarray(ex.groups[0])
    terms = ex.terms(n)
    mask = np.zeros(len(terms), bool)
    mask[dom] = True
    est = terms[mask].sum()
    rest = terms[~mask].sum()
    u, im = _real(est, f"leading u_{n}")
    eps_c = rest / est
    eps = float(eps_c.real)
    return MaxDistResult(int(n), ex.x, u, "leading", im, ex.fingerprint, err_est=abs(float((rest).real))), eps


def finiteness_diagnostic(mat: IteratedKernelMatrix) -> float:
    """``sum_ij w_i w_j K_2(z_i, z_j) K_2(z_j, z_i) = trace(K2hat^2)``."""
    if mat.compressed:
        sm = mat.small()
        val = float(np.sum(sm * sm.T))
    else:
        a = mat.full
        val = float(np.sum(a * a.T))
    if not math.isfinite(val):
        raise NumericalError("finiteness diagnostic is not finite (kernel defect)")
    return val
