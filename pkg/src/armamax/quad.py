"""Composite Gauss–Legendre quadrature on intervals and planar boxes.

A :class:`Grid1D` covers a finite interval with panels, each carrying an
``m``-point Gauss–Legendre rule.  Panel boundaries always include the
requested *mandatory splits* so that kinks and jumps of the integrand are
never straddled by a panel.

:class:`Grid2D` is the tensor product of two such grids.  Besides the
plain layout (node ``(a0, a1)`` is the point ``z = (a0, a1)``) it supports
a *sheared* layout in which the second axis parametrizes
``c = r*z0 + s*z1``; the node ``(a0, a1)`` then stands for
``z = (a0, (a1 - r*a0)/s)`` and carries the Jacobian ``1/s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, EvaluationError

NEWTON_TOL = 1e-14


@lru_cache(maxsize=64)
def _gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m < 1:
        raise ConfigError("number of Gauss-Legendre nodes must be >= 1")
    k = np.arange(1, m + 1)
    # Tricomi initial guesses, then Newton on P_m
    x = np.cos(np.pi * (k - 0.25) / (m + 0.5)) * (1 - (m - 1) / (8.0 * m**3))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, m + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        if m == 1:
            p0, p1 = np.ones_like(x), x
        dp = m * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < NEWTON_TOL:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, m + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = m * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``m``-point Gauss–Legendre rule on [-1, 1].

    Nodes are found by Newton iteration on the three-term recurrence for
    the Legendre polynomials (node residual below ``1e-14``) and are
    returned in increasing order.
    """
    return _gauss_legendre(int(m))


@lru_cache(maxsize=32)
def reference_rule(panels: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [0, 1] with ``panels`` equal panels of ``m`` nodes."""
    x, w = gauss_legendre(m)
    t = np.concatenate([(k + 0.5 * (x + 1.0)) / panels for k in range(panels)])
    wt = np.tile(0.5 * w / panels, panels)
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


@dataclass(frozen=True)
class Grid1D:
    """Composite Gauss–Legendre rule on ``[lo, hi]``.

    Attributes
    ----------
    lo, hi : float
        Interval end points.
    boundaries : ndarray
        Sorted panel boundaries, including ``lo``, ``hi`` and every
        mandatory split inside the interval.
    nodes, weights : ndarray
        Quadrature nodes (increasing) and positive weights.
    m : int
        Nodes per panel.
    splits : tuple of float
        The mandatory splits that were honoured.
    """

    lo: float
    hi: float
    boundaries: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    m: int
    splits: tuple = ()

    @property
    def L(self) -> float:
        """Half-length of the interval (the truncation radius when symmetric)."""
        return 0.5 * (self.hi - self.lo)

    @property
    def panels(self) -> int:
        return len(self.boundaries) - 1

    @property
    def size(self) -> int:
        return len(self.nodes)

    def spec(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "m": self.m, "boundaries": [float(b) for b in self.boundaries]}


def _allocate(lengths: np.ndarray, panels: int, max_load: float | None = None) -> np.ndarray:
    """Distribute ``panels`` over segments, at least one each, equalizing load.

    With ``max_load`` every segment first gets enough panels to keep its
    per-panel load at or below ``max_load``.
    """
    n = len(lengths)
    alloc = np.ones(n, dtype=int)
    if max_load:
        alloc = np.maximum(alloc, np.ceil(lengths / max_load - 1e-9).astype(int))
    for _ in range(max(panels - int(alloc.sum()), 0)):
        k = int(np.argmax(lengths / alloc))
        alloc[k] += 1
    return alloc


def build_interval(
    lo: float,
    hi: float,
    m: int,
    panels: int,
    splits: Sequence[float] = (),
    scales: Sequence[float] | None = None,
    max_load: float | None = None,
) -> Grid1D:
    """Composite Gauss–Legendre grid on ``[lo, hi]``.

    Parameters
    ----------
    lo, hi : float
        Interval, ``lo < hi``.
    m : int
        Nodes per panel, ``m >= 2``.
    panels : int
        Total number of panels.  Every segment between consecutive
        boundaries receives at least one panel, so the actual count is
        ``max(panels, number of segments)``.
    splits : sequence of float
        Mandatory panel boundaries; those outside ``(lo, hi)`` are dropped.
    scales : sequence of float, optional
        Characteristic length scale of the integrand in each segment.
        Panels are allocated so that ``length / scale / panels`` is as even
        as possible; by default all scales are equal.
    max_load : float, optional
        Upper bound on ``length / scale`` per panel.  Segments that need
        more panels get them, so the total may exceed ``panels``.
    """
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise ConfigError(f"grid interval must be finite with lo < hi, got [{lo}, {hi}]")
    if int(m) != m or m < 2:
        raise ConfigError(f"grid m (nodes per panel) must be an integer >= 2, got {m}")
    if int(panels) != panels or panels < 1:
        raise ConfigError(f"grid panels must be an integer >= 1, got {panels}")
    m, panels = int(m), int(panels)
    inner = sorted({float(v) for v in splits if lo < v < hi})
    edges = np.array([lo, *inner, hi], dtype=float)
    lengths = np.diff(edges)
    if scales is None:
        load = lengths
    else:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != lengths.shape or np.any(scales <= 0):
            raise ConfigError("one positive scale per segment is required")
        load = lengths / scales
    alloc = _allocate(load, panels, max_load)
    x, w = gauss_legendre(m)
    bounds = [edges[0]]
    nodes, weights = [], []
    for a, b, k in zip(edges[:-1], edges[1:], alloc):
        e = np.linspace(a, b, k + 1)
        e[-1] = b
        for p0, p1 in zip(e[:-1], e[1:]):
            half = 0.5 * (p1 - p0)
            nodes.append(half * x + 0.5 * (p0 + p1))
            weights.append(half * w)
            bounds.append(p1)
    return Grid1D(
        float(lo),
        float(hi),
        np.asarray(bounds),
        np.concatenate(nodes),
        np.concatenate(weights),
        m,
        tuple(inner),
    )


def build_grid1(L: float, m: int, panels: int, mandatory_splits: Sequence[float] = ()) -> Grid1D:
    """Composite Gauss–Legendre grid on the symmetric interval ``[-L, L]``.

    Examples
    --------
    >>> g = build_grid1(1.0, 3, 1)
    >>> round(float(g.weights.sum()), 12)
    2.0
    """
    if not (np.isfinite(L) and L > 0):
        raise ConfigError(f"truncation radius L must be > 0, got {L}")
    return build_interval(-L, L, m, panels, mandatory_splits)


@dataclass(frozen=True)
class Grid2D:
    """Tensor product of two :class:`Grid1D`, flattened row-major (axis0 outer).

    Attributes
    ----------
    axis0, axis1 : Grid1D
        Factor grids.
    shear : tuple of float, optional
        ``(r, s)`` for the sheared layout, where ``axis1`` is the
        coordinate ``c = r*z0 + s*z1``.  ``None`` for the plain layout.
    """

    axis0: Grid1D
    axis1: Grid1D
    shear: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def q(self) -> int:
        return self.axis0.size * self.axis1.size

    @property
    def a0(self) -> np.ndarray:
        """Axis-0 coordinate of every flattened node."""
        return np.repeat(self.axis0.nodes, self.axis1.size)

    @property
    def a1(self) -> np.ndarray:
        """Axis-1 coordinate of every flattened node."""
        return np.tile(self.axis1.nodes, self.axis0.size)

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates ``z_k`` as a ``(q, 2)`` array."""
        if "nodes" not in self._cache:
            a0, a1 = self.a0, self.a1
            if self.shear is None:
                z1 = a1
            else:
                r, s = self.shear
                z1 = (a1 - r * a0) / s
            arr = np.column_stack([a0, z1])
            arr.setflags(write=False)
            self._cache["nodes"] = arr
        return self._cache["nodes"]

    @property
    def weights(self) -> np.ndarray:
        """Node weights ``w_k`` (including the shear Jacobian)."""
        if "weights" not in self._cache:
            w = np.outer(self.axis0.weights, self.axis1.weights).ravel()
            if self.shear is not None:
                w = w / abs(self.shear[1])
            w.setflags(write=False)
            self._cache["weights"] = w
        return self._cache["weights"]

    @property
    def area(self) -> float:
        a = (self.axis0.hi - self.axis0.lo) * (self.axis1.hi - self.axis1.lo)
        return a if self.shear is None else a / abs(self.shear[1])

    def spec(self) -> dict:
        return {"axis0": self.axis0.spec(), "axis1": self.axis1.spec(), "shear": list(self.shear) if self.shear else None}


def build_grid2(g0: Grid1D, g1: Grid1D, shear: tuple | None = None) -> Grid2D:
    """Tensor-product grid; ``shear=(r, s)`` selects the sheared layout."""
    if shear is not None:
        r, s = float(shear[0]), float(shear[1])
        if s == 0:
            raise ConfigError("sheared layout needs s != 0")
        shear = (r, s)
    return Grid2D(g0, g1, shear)


def _check_finite(vals: np.ndarray, nodes) -> None:
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        node = tuple(float(v) for v in np.atleast_1d(nodes[k])) if nodes is not None else k
        raise EvaluationError(f"integrand is not finite at node {node}", node=node)


def integrate1(g: Grid1D, fn: Callable) -> float:
    """``sum_k w_k fn(t_k)``; ``fn`` is called once with the node array."""
    vals = np.broadcast_to(np.asarray(fn(g.nodes), dtype=float), g.nodes.shape)
    _check_finite(vals, g.nodes)
    return math.fsum(g.weights * vals)


def integrate2(g: Grid2D, fn: Callable) -> float:
    """``sum_k w_k fn(z_k)``; ``fn`` is called as ``fn(z0, z1)`` with node arrays."""
    z = g.nodes
    vals = np.broadcast_to(np.asarray(fn(z[:, 0], z[:, 1]), dtype=float), (g.q,))
    _check_finite(vals, z)
    return math.fsum(g.weights * vals)
