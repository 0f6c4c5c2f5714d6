"""Nyström discretization of ``K_2`` and its non-symmetric eigensystem.

Kernel grids
------------
The matrix ``K2hat[i, j] = w_j K_2(z_i, z_j)`` is assembled on a
:class:`~armamax.quad.Grid2D`.  Two layouts are offered:

``"sheared"`` (default)
    Axis 0 is ``z_0``, axis 1 is ``c = r z_0 + s z_1``.  Because
    ``K_2(y, z)`` depends on ``z`` only through ``c``, column ``(j0, j1)``
    equals ``K_2(z_i, c_{j1}) * w0_{j0} w1_{j1} / s`` and the matrix
    factors as ``Kc @ E`` with ``Kc`` of size ``q x N1``.  Only ``q * N1``
    kernel values are needed, the rank is at most ``N1`` and eigenpairs
    are obtained exactly from the ``N1 x N1`` matrix ``E @ Kc``.

    ``K_2(y, .)`` jumps along the line ``c = c*(y)`` where ``T_0 = x`` and,
    for large ``s``, has a narrow bump of width ``sd(e) / s``.  With
    ``correct=True`` every weight is a product-integration weight
    ``int_panel K_2(z_i, c) l_k(c) dc`` (``l_k`` the Lagrange basis of the
    panel nodes), computed on a fine sub-rule that is split at the jump of
    row ``i``.  The panel nodes then only need to resolve the functions
    being integrated, which are smooth in ``c``; entries no longer equal
    ``w_j K_2(z_i, z_j)`` pointwise.

``"box"``
    Plain tensor grid in ``(z_0, z_1)``; every entry is literally
    ``w_j K_2(z_i, z_j)``.  Converges slowly because the jump line cuts
    through panels.

Truncation
----------
The integrands ``K_2(y, z) G_n(z)`` are not confined to a symmetric box:
``G_n(z) -> G_n(+inf, z_1)`` does not decay as ``z_0 -> +inf``, and the
kernel only vanishes once ``z_1 = (c - r z_0)/s`` leaves the innovation
support.  The default box therefore runs, on axis 0, from five standard
deviations below the lower of the initial and stationary laws of ``X``
(and below ``x``) up to ``(c_max - s e_lo) / r`` with
``c_max = x - e_lo``, where ``[e_lo, e_hi]`` is the effective support of
the innovations.  An explicit ``trunc = L`` restores the symmetric box
``[-L, L]^2`` (plain layout).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import __version__
from .errors import AssemblyError, ConfigError, NumericalError, SolverError
from .kernel import DEFAULT_RULE, KernelRule, ModelConfig, jump_line, k2_of_c
from .quad import Grid1D, Grid2D, build_grid2, build_interval, gauss_legendre

LAYOUTS = ("sheared", "box")
X_SD_MULT = 5.0
# sub-rule piece length in units of the innovation scale
SUB_PIECE = 1.5
ZERO_TOL = 1e-12
MULT_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Kernel-grid profile.

    Parameters
    ----------
    m, panels : int
        Nodes per panel and panels per axis (``q = (m * panels)**2`` when
        no mandatory split adds panels).
    layout : {"sheared", "box"}
        Grid layout, see module docstring.
    correct : bool
        Product-integration jump correction (sheared layout only).
    trunc : float, optional
        Symmetric truncation radius; forces the plain ``[-L, L]^2`` box.
    correction_m : int
        Gauss–Legendre nodes per piece of the product-integration sub-rule.
    density : float, optional
        Largest panel width in units of the local length scale of the
        integrand.  Segments that need more panels than ``panels`` provides
        get them; ``None`` disables the bound.
    """

    m: int = 8
    panels: int = 3
    layout: str = "sheared"
    correct: bool = True
    trunc: float | None = None
    correction_m: int = 10
    density: float | None = 7.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"grid.layout must be one of {LAYOUTS}, got {self.layout!r}")
        if int(self.m) != self.m or self.m < 2:
            raise ConfigError(f"grid.m must be an integer >= 2, got {self.m}")
        if int(self.panels) != self.panels or self.panels < 1:
            raise ConfigError(f"grid.panels must be an integer >= 1, got {self.panels}")
        if self.density is not None and not (math.isfinite(self.density) and self.density > 0):
            raise ConfigError(f"grid.density must be > 0, got {self.density}")
        if self.trunc is not None and not (math.isfinite(self.trunc) and self.trunc > 0):
            raise ConfigError(f"grid.trunc must be > 0, got {self.trunc}")

    def refined(self) -> "GridSpec":
        """Same profile with the panel count doubled."""
        dens = None if self.density is None else 0.5 * self.density
        return GridSpec(self.m, 2 * self.panels, self.layout, self.correct, self.trunc, self.correction_m, dens)


DEFAULT_GRID = GridSpec()
# profile for direct quadratures (apply_k_function, G_1 samples)
QUAD_GRID = GridSpec(m=12, panels=8, layout="box", correct=False, density=None)


@dataclass(frozen=True)
class Box:
    """Integration region used for a model configuration.

    ``features`` lists ``(lo, hi, scale)`` intervals of axis 0 on which the
    integrands vary on the given length scale; they drive the panel
    splits and allocation of :func:`build_kernel_grid`.
    """

    z0_lo: float
    z0_hi: float
    e_lo: float
    e_hi: float
    c_lo: float
    c_hi: float
    features: tuple = ()


def stationary_sd(ctx: ModelConfig) -> float:
    """Standard deviation of the stationary law of ``X`` (a proxy if ``r > 1``)."""
    r, s = ctx.r, ctx.s
    return ctx.dist.sd * math.sqrt((1.0 + 2.0 * r * s + s * s) / abs(1.0 - r * r))


def c_scale(ctx: ModelConfig) -> float:
    """Length scale in ``c = r z_0 + s z_1`` of the functions being integrated.

    ``G_n(z_0, (c - r z_0)/s)`` alone varies on the scale ``s sd(e)``, but
    the jump and bump of ``K_2`` sweep through ``c`` as the row point moves;
    the geometric mean ``sd(e) sqrt(s)`` was found to balance both over
    ``s`` in [1, 5] (convergence checks against refined grids).
    """
    return ctx.dist.sd * math.sqrt(max(ctx.s, ctx.r))


def truncation_box(ctx: ModelConfig, trunc: float | None = None) -> Box:
    """Region outside which the integrands of the recurrence are negligible."""
    r, s, x = ctx.r, ctx.s, ctx.x
    sd_e = ctx.dist.sd
    sd_x = stationary_sd(ctx)
    if trunc is not None:
        L = float(trunc)
        lo0, hi0, e_lo, e_hi = -L, L, -L, L
        c_lo, c_hi = -(r + s) * L, (r + s) * L
    else:
        e_lo, e_hi = ctx.dist.support
        mu_x = ctx.dist.mean * (1.0 + s) / (1.0 - r) if r < 1 else 0.0
        lo0 = min(
            ctx.init.x0_mean - X_SD_MULT * ctx.init.x0_sd,
            mu_x - X_SD_MULT * sd_x,
            x - X_SD_MULT * sd_x,
        )
        c_hi = x - e_lo
        hi0 = (c_hi - s * e_lo) / r
        c_lo = r * lo0 + s * e_lo
    # below x the rows of K_2 move with y_0 on the innovation scale as well
    feats = [(lo0, x, min(sd_x, (1.0 + s) * sd_e)), (x, hi0, s * sd_e / r)]
    # the initial law of X_0 enters through G_0; resolve it separately when
    # it is much narrower than the stationary law
    sd0 = ctx.init.x0_sd
    if sd0 < 0.5 * sd_x:
        mu0 = ctx.init.x0_mean
        feats.append((mu0 - X_SD_MULT * sd0, mu0 + X_SD_MULT * sd0, sd0))
    return Box(lo0, hi0, e_lo, e_hi, c_lo, c_hi, tuple(feats))


def _axis0(box: Box, x: float, m: int, panels: int, density: float | None = None) -> Grid1D:
    lo, hi = box.z0_lo, box.z0_hi
    cuts = {x}
    for a, b, _ in box.features:
        cuts.update((a, b))
    cuts = sorted(v for v in cuts if lo < v < hi)
    edges = [lo, *cuts, hi]
    scales = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        cover = [sc for fa, fb, sc in box.features if fa <= mid <= fb]
        scales.append(min(cover) if cover else max(sc for _, _, sc in box.features))
    return build_interval(lo, hi, m, panels, cuts, scales, density)


def build_kernel_grid(ctx: ModelConfig, spec: GridSpec = DEFAULT_GRID) -> Grid2D:
    """Grid for the Nyström matrix of ``ctx`` according to ``spec``.

    Axis 0 always has a mandatory split at ``x`` (plus the ends of the
    features of :func:`truncation_box`); panels are allocated in
    proportion to segment length over the local scale of the integrand
    (the law of ``X`` below ``x``, ``s * sd(e) / r`` above).
    """
    box = truncation_box(ctx, spec.trunc)
    g0 = _axis0(box, ctx.x, spec.m, spec.panels, spec.density)
    if spec.layout == "box" or spec.trunc is not None:
        g1 = build_interval(box.e_lo, box.e_hi, spec.m, spec.panels)
        return build_grid2(g0, g1)
    g1 = build_interval(box.c_lo, box.c_hi, spec.m, spec.panels, (), [c_scale(ctx)], spec.density)
    return build_grid2(g0, g1, shear=(ctx.r, ctx.s))


def build_quad_grid(ctx: ModelConfig, spec: GridSpec = QUAD_GRID) -> Grid2D:
    """Fine plain grid used for direct quadratures over the box."""
    return build_kernel_grid(ctx, GridSpec(spec.m, spec.panels, "box", False, spec.trunc, density=spec.density))


# ----------------------------------------------------------------------
# assembly
def _sub_breaks(ctx, grid):
    """Shared break points of the product-integration sub-rule along ``c``.

    ``K_2(y, .)`` varies on the innovation scale ``sd(e)`` except in a band
    around ``c_p(y) = ((r + s) x - min(y_0, x)) / s`` where it varies on the
    scale ``sd(e) / s``.  The band is the union of these locations over
    ``y_0`` on axis 0, widened by the innovation support over ``s``.
    """
    r, s, x = ctx.r, ctx.s, ctx.x
    sd = ctx.dist.sd
    e_lo, e_hi = ctx.dist.support
    bounds = grid.axis1.boundaries
    c_lo, c_hi = bounds[0], bounds[-1]
    y_lo = min(grid.axis0.lo, x)
    band = ((r + s - 1.0) * x / s + e_lo / s, ((r + s) * x - y_lo) / s + e_hi / s)
    h_coarse = SUB_PIECE * sd
    h_fine = SUB_PIECE * sd / max(1.0, s)
    pts = set(float(b) for b in bounds)
    for a, b in zip(bounds[:-1], bounds[1:]):
        cuts = sorted({a, b, *[v for v in band if a < v < b]})
        for u, v in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (u + v)
            h = h_fine if band[0] <= mid <= band[1] else h_coarse
            k = max(1, int(math.ceil((v - u) / h)))
            pts.update(np.linspace(u, v, k + 1).tolist())
    return np.array(sorted(pts))


def _row_block_sheared(ctx, grid, rule, y0, y1, correct, corr_m):
    """Compressed rows ``Kc[i, j1]`` for points ``(y0[i], y1[i])``."""
    ac, wc = grid.axis1.nodes, grid.axis1.weights
    if not correct:
        return k2_of_c(ctx, y0[:, None], y1[:, None], ac[None, :], rule) * wc
    m = grid.axis1.m
    bounds = np.asarray(grid.axis1.boundaries)
    npan = len(bounds) - 1
    nrow = len(y0)
    brk = grid._cache.get("sub_breaks")
    if brk is None:
        brk = grid._cache["sub_breaks"] = _sub_breaks(ctx, grid)
    # one extra break per row: the jump c*(y), or a harmless interior point
    cstar = jump_line(ctx, y0, y1)
    with np.errstate(invalid="ignore"):
        inside = np.isfinite(cstar) & (cstar > brk[0]) & (cstar < brk[-1])
    extra = np.where(inside, cstar, 0.5 * (brk[0] + brk[1]))
    rb = np.sort(np.concatenate([np.broadcast_to(brk, (nrow, brk.size)), extra[:, None]], axis=1), axis=1)
    a, b = rb[:, :-1], rb[:, 1:]
    gx, gw = gauss_legendre(corr_m)
    half = 0.5 * (b - a)
    t = (a + half)[:, :, None] + half[:, :, None] * gx
    u = half[:, :, None] * gw
    pidx = np.clip(np.searchsorted(bounds, 0.5 * (a + b), side="right") - 1, 0, npan - 1)
    t = t.reshape(nrow, -1)
    u = u.reshape(nrow, -1)
    pidx = np.repeat(pidx, corr_m, axis=1)
    kv = k2_of_c(ctx, y0[:, None], y1[:, None], t, rule)
    nodes = ac.reshape(npan, m)[pidx]
    basis = np.ones(t.shape + (m,))
    for k in range(m):
        for j in range(m):
            if j != k:
                basis[..., k] *= (t - nodes[..., j]) / (nodes[..., k] - nodes[..., j])
    vals = (u * kv)[..., None] * basis
    col = pidx[..., None] * m + np.arange(m)
    flat = np.arange(nrow)[:, None, None] * (npan * m) + col
    kc = np.bincount(flat.ravel(), weights=vals.ravel(), minlength=nrow * npan * m)
    return kc.reshape(nrow, npan * m)


def _row_block_box(ctx, grid, rule, y0, y1):
    z = grid.nodes
    c = ctx.r * z[:, 0] + ctx.s * z[:, 1]
    return k2_of_c(ctx, y0[:, None], y1[:, None], c[None, :], rule) * grid.weights


def kernel_rows(ctx: ModelConfig, grid: Grid2D, y0, y1, rule: KernelRule | None = None, correct: bool = True,
                correction_m: int = 10) -> np.ndarray:
    """Rows ``w_k K_2(y, z_k)`` (dense, length ``q``) for points ``y``.

    For the sheared layout with ``correct=True`` the panel containing the
    jump of ``K_2(y, .)`` uses product-integration weights, exactly as in
    the assembled matrix.  ``y`` may have infinite coordinates.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y0, y1 = np.broadcast_arrays(y0, y1)
    rule = rule or DEFAULT_RULE
    if grid.shear is None:
        return _row_block_box(ctx, grid, rule, y0, y1)
    kc = _row_block_sheared(ctx, grid, rule, y0, y1, correct, correction_m)
    w0s = grid.axis0.weights / grid.shear[1]
    return (w0s[None, :, None] * kc[:, None, :]).reshape(len(y0), -1)


@dataclass
class IteratedKernelMatrix:
    """Nyström matrix ``K2hat`` with assembly metadata.

    For the sheared layout only the compressed factor ``kc`` is stored
    (``K2hat = kc @ E``); :attr:`dense` materializes the full matrix.

    Attributes
    ----------
    ctx : ModelConfig
    grid : Grid2D
    spec : GridSpec
    rule : KernelRule
    fingerprint : str
        Hash of configuration, grid and code version.
    assembly_time : float
        Wall-clock seconds spent assembling (0 for a cache hit).
    kc : ndarray, optional
        Compressed factor ``(q, N1)`` (sheared layout).
    full : ndarray, optional
        Dense matrix ``(q, q)`` (box layout).
    """

    ctx: ModelConfig
    grid: Grid2D
    spec: GridSpec
    rule: KernelRule
    fingerprint: str
    assembly_time: float
    kc: np.ndarray | None = None
    full: np.ndarray | None = None
    from_cache: bool = False
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def q(self) -> int:
        return self.grid.q

    @property
    def compressed(self) -> bool:
        return self.kc is not None

    @property
    def _w0s(self) -> np.ndarray:
        return self.grid.axis0.weights / self.grid.shear[1]

    @property
    def dense(self) -> np.ndarray:
        """The full ``q x q`` matrix."""
        if self.full is not None:
            return self.full
        n0, n1 = self.grid.axis0.size, self.grid.axis1.size
        return (self.kc[:, None, :] * self._w0s[None, :, None]).reshape(self.q, n0 * n1)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``K2hat @ v`` (``v`` may be a matrix of column vectors)."""
        if self.full is not None:
            return self.full @ v
        n0, n1 = self.grid.axis0.size, self.grid.axis1.size
        vv = v.reshape((n0, n1) + v.shape[1:])
        return self.kc @ np.tensordot(self._w0s, vv, axes=(0, 0))

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        """``(u^H K2hat)^T``; for a matrix ``u`` the columns are treated separately."""
        if self.full is not None:
            return (u.conj().T @ self.full).T
        t = u.conj().T @ self.kc
        if t.ndim == 1:
            return np.outer(self._w0s, t).ravel()
        return (self._w0s[:, None, None] * t.T[None, :, :]).reshape(self.q, t.shape[0])

    def small(self) -> np.ndarray:
        """``E @ Kc`` (``N1 x N1``) whose nonzero spectrum equals that of ``K2hat``."""
        n0, n1 = self.grid.axis0.size, self.grid.axis1.size
        return np.tensordot(self._w0s, self.kc.reshape(n0, n1, n1), axes=(0, 0))

    def norm2(self) -> float:
        """Spectral norm of ``K2hat``."""
        if self.full is not None:
            return float(np.linalg.norm(self.full, 2))
        return float(np.linalg.norm(self.kc, 2) * np.linalg.norm(self._w0s))

    def rows(self, y0, y1) -> np.ndarray:
        """Nyström rows ``w_k K_2(y, z_k)`` consistent with the assembled matrix."""
        return kernel_rows(self.ctx, self.grid, y0, y1, self.rule, self.spec.correct and self.compressed,
                           self.spec.correction_m)

    @property
    def inf_row(self) -> np.ndarray:
        """Row ``w_k K_2(inf, z_k)`` used for evaluation at ``y = (+inf, +inf)``."""
        if "inf_row" not in self.extras:
            self.extras["inf_row"] = self.rows(np.inf, np.inf)[0]
        return self.extras["inf_row"]


def fingerprint(ctx: ModelConfig, grid: Grid2D, spec: GridSpec, rule: KernelRule) -> str:
    payload = {
        "model": ctx.describe(),
        "grid": grid.spec(),
        "spec": asdict(spec),
        "rule": asdict(rule),
        "version": __version__,
    }
    if ctx.dist.family == "table" or ctx.init.form == "user":
        payload["id"] = [id(ctx.dist), id(ctx.init)]
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=float).encode()).hexdigest()


def _cache_path(cache_dir: str, fp: str) -> str:
    return os.path.join(cache_dir, f"k2-{fp[:32]}.npy")


def build_k2_matrix(
    ctx: ModelConfig,
    spec: GridSpec = DEFAULT_GRID,
    *,
    grid: Grid2D | None = None,
    rule: KernelRule | None = None,
    threads: int = 1,
    cache_dir: str | None = None,
    chunk: int | None = None,
) -> IteratedKernelMatrix:
    """Assemble the Nyström matrix of ``K_2``.

    Rows are computed in independent chunks, optionally on a thread pool;
    each chunk writes a disjoint block so the result does not depend on
    ``threads``.  With ``cache_dir`` the matrix is stored in (and reused
    from) a ``.npy`` file keyed by :func:`fingerprint`.

    Raises
    ------
    AssemblyError
        If any entry is not finite; the error carries ``(i, j)``.
    """
    rule = rule or DEFAULT_RULE
    grid = grid or build_kernel_grid(ctx, spec)
    fp = fingerprint(ctx, grid, spec, rule)
    sheared = grid.shear is not None
    if cache_dir:
        path = _cache_path(cache_dir, fp)
        if os.path.exists(path):
            arr = np.load(path, allow_pickle=False)
            return IteratedKernelMatrix(ctx, grid, spec, rule, fp, 0.0,
                                        kc=arr if sheared else None, full=None if sheared else arr, from_cache=True)
    t_start = time.perf_counter()
    z = grid.nodes
    q = grid.q
    ncol = grid.axis1.size if sheared else q
    out = np.empty((q, ncol))
    width = ncol
    if sheared and spec.correct:
        brk = grid._cache.setdefault("sub_breaks", _sub_breaks(ctx, grid))
        width = brk.size * spec.correction_m
    if chunk is None:
        chunk = max(1, min(q, 2_000_000 // max(width * rule.panels * rule.m, 1)))
    starts = list(range(0, q, chunk))

    def work(i0):
        sl = slice(i0, min(i0 + chunk, q))
        if sheared:
            out[sl] = _row_block_sheared(ctx, grid, rule, z[sl, 0], z[sl, 1], spec.correct, spec.correction_m)
        else:
            out[sl] = _row_block_box(ctx, grid, rule, z[sl, 0], z[sl, 1])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(work, starts))
    else:
        for i0 in starts:
            work(i0)
    bad = ~np.isfinite(out)
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise AssemblyError(f"non-finite kernel matrix entry at ({i}, {j})", (i, j))
    elapsed = time.perf_counter() - t_start
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = _cache_path(cache_dir, fp) + f".{os.getpid()}.tmp"
        with open(tmp, "wb") as fh:
            np.save(fh, out, allow_pickle=False)
        os.replace(tmp, _cache_path(cache_dir, fp))
    if sheared:
        return IteratedKernelMatrix(ctx, grid, spec, rule, fp, elapsed, kc=out)
    return IteratedKernelMatrix(ctx, grid, spec, rule, fp, elapsed, full=out)


# ----------------------------------------------------------------------
# eigen-decomposition
@dataclass
class EigenSystem:
    """Eigenpairs of ``K2hat`` sorted by decreasing modulus.

    Attributes
    ----------
    theta : ndarray of complex
        Eigenvalues ``theta_j``.
    right, left : ndarray of complex, shape (q, k)
        Right eigenvectors ``r_j`` (columns) and left eigenvectors
        ``l_j`` with ``l_j^H K2hat = theta_j l_j^H``.  Left vectors carry
        the quadrature weights: the left eigenfunction at ``z_k`` is
        ``conj(left[k, j]) / w_k`` up to conjugation.
    residual_right, residual_left : ndarray
        ``||K r - theta r||`` and ``||l^H K - theta l^H||``.
    biorth_defect : float
        ``max |l_j^H r_k - delta_jk|`` over the retained pairs.
    norm : float
        Spectral norm of ``K2hat``.
    multiplicity : int
        Size of the group of eigenvalues within ``1e-8 |theta_1|`` of ``theta_1``.
    """

    theta: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual_right: np.ndarray
    residual_left: np.ndarray
    biorth_defect: float
    norm: float
    multiplicity: int

    @property
    def k(self) -> int:
        return len(self.theta)

    def groups(self, tol: float = MULT_TOL) -> list[list[int]]:
        """Indices grouped by near-equal eigenvalues."""
        out: list[list[int]] = []
        scale = abs(self.theta[0]) if self.k else 1.0
        for j, th in enumerate(self.theta):
            if out and abs(th - self.theta[out[-1][0]]) <= tol * scale:
                out[-1].append(j)
            else:
                out.append([j])
        return out


def _sort_order(theta: np.ndarray) -> np.ndarray:
    # modulus descending, then positive imaginary part first (pairs adjacent)
    return np.lexsort((-theta.imag, -np.abs(theta)))


def _residuals(mat: IteratedKernelMatrix, theta, right, left):
    kr = mat.matvec(right)
    res_r = np.linalg.norm(kr - right * theta, axis=0)
    lk = mat.rmatvec(left)
    res_l = np.linalg.norm(lk - left.conj() * theta, axis=0)
    return res_r, res_l


def biorth_defect(es_right: np.ndarray, es_left: np.ndarray) -> float:
    g = es_left.conj().T @ es_right
    return float(np.max(np.abs(g - np.eye(g.shape[0])))) if g.size else 0.0


def biorthonormalize(es: EigenSystem, mat: IteratedKernelMatrix | None = None) -> EigenSystem:
    """Scale right vectors to unit norm and left vectors so that ``l_j^H r_j = 1``.

    Warns when ``|l_j^H r_j| < 1e-10`` (nearly defective eigenvalue).
    """
    right = es.right / np.linalg.norm(es.right, axis=0)
    d = np.einsum("ij,ij->j", es.left.conj(), right)
    if np.any(np.abs(d) < 1e-10):
        warnings.warn("near-defective eigenpair: |l^H r| < 1e-10", RuntimeWarning, stacklevel=2)
    left = es.left / d.conj()
    if mat is not None:
        res_r, res_l = _residuals(mat, es.theta, right, left)
    else:
        res_r, res_l = es.residual_right, es.residual_left
    return EigenSystem(es.theta, right, left, res_r, res_l, biorth_defect(right, left), es.norm, es.multiplicity)


def eigensolve(mat: IteratedKernelMatrix, topk: int | None = None) -> EigenSystem:
    """Leading ``topk`` eigenpairs of ``K2hat`` (biorthonormalized).

    The dense problem is solved with LAPACK's ``geev`` (balancing,
    Hessenberg reduction, shifted QR) through :func:`scipy.linalg.eig`.
    For the sheared layout the nonzero spectrum is taken from the
    ``N1 x N1`` matrix ``S = E Kc``: if ``S v = theta v`` and
    ``u^H S = theta u^H`` then ``Kc v`` and ``E^T u`` are right and left
    eigenvectors of ``K2hat``.  Eigenvalues below ``1e-12`` in modulus are
    discarded in that case (they are exactly zero for the full matrix).

    Raises
    ------
    SolverError
        If the QR iteration does not converge.
    """
    q = mat.q
    if topk is not None and (topk < 1 or topk > q):
        raise ConfigError(f"topk must lie in [1, q={q}], got {topk}")
    a = mat.small() if mat.compressed else mat.dense
    try:
        theta, vl, vr = scipy.linalg.eig(a, left=True, right=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed: {exc}", iterations=None) from exc
    order = _sort_order(theta)
    if mat.compressed:
        order = order[np.abs(theta[order]) > ZERO_TOL * max(np.abs(theta).max(), 1e-300)]
    if topk is not None:
        order = order[:topk]
    theta = theta[order]
    if mat.compressed:
        right = mat.kc @ vr[:, order]
        left = np.multiply.outer(mat._w0s, vl[:, order]).reshape(q, len(order))
    else:
        right, left = vr[:, order], vl[:, order]
    if not np.all(np.isfinite(theta)):
        raise SolverError("eigensolver returned non-finite eigenvalues")
    es = EigenSystem(theta, right, left, np.zeros(len(theta)), np.zeros(len(theta)), 0.0, mat.norm2(), 1)
    es = biorthonormalize(es, mat)
    grp = es.groups()
    es.multiplicity = len(grp[0]) if grp else 0
    return es


def nystrom_extend(mat: IteratedKernelMatrix, es: EigenSystem, j, y0, y1) -> np.ndarray:
    """Right eigenfunctions off the grid: ``r_j(y) = theta_j^{-1} sum_k w_k K_2(y, z_k) r_j(z_k)``.

    ``j`` may be an index or an array of indices, ``y0``/``y1`` scalars or
    arrays (``+inf`` allowed).  Returns an array of shape
    ``(len(y), len(j))`` (squeezed for scalar inputs).

    Raises
    ------
    NumericalError
        If ``|theta_j| < 1e-12``.
    """
    js = np.atleast_1d(j)
    th = es.theta[js]
    if np.any(np.abs(th) < ZERO_TOL):
        raise NumericalError("Nyström extension refused for |theta| < 1e-12")
    rows = mat.rows(y0, y1)
    out = rows @ es.right[:, js] / th
    if np.ndim(j) == 0 and np.ndim(y0) == 0 and np.ndim(y1) == 0:
        return out[0, 0]
    return out
