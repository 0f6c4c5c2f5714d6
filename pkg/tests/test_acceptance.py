"""Acceptance suite: one test per primary criterion.

Each test records a single ``criterion k: PASS/FAIL - detail`` line that is
printed and repeated in the terminal summary.  Reference values come from
Monte Carlo simulation, closed forms and direct operator application, never
from the iterated kernel itself.
"""

import dataclasses
import filecmp
import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from armamax import GridSpec, ModelConfig, build_k2_matrix, eigensolve, simulate_paths
from armamax.cli import main
from armamax.maxdist import (
    apply_k_function,
    apply_k_values,
    finiteness_diagnostic,
    spectral_expansion,
    un_leading,
    un_power,
    un_power_many,
    un_spectral,
)
from armamax.spectral import biorth_defect

XS = (0.0, 1.0, 2.0, 3.0)


def test_criterion1_closed_form_n1(acceptance):
    t = time.perf_counter()
    errs = []
    for x in XS:
        ctx = ModelConfig(r=0.5, s=1.0, x=x)
        mat = build_k2_matrix(ctx)
        errs.append(abs(un_power(mat, 1).u - norm.cdf(x / math.sqrt(2.25))))
    dt = time.perf_counter() - t
    ok = max(errs) <= 1e-3 and dt < 5.0
    acceptance(1, ok, f"max |u_1 - Phi(x/1.5)| = {max(errs):.2e} (tol 1e-3), {dt:.1f} s (limit 5 s)")
    assert ok


def test_criterion2_oracle_agreement(acceptance):
    t = time.perf_counter()
    ns = (2, 5, 10, 50)
    mc = simulate_paths(ModelConfig(), ns, XS, paths=1_000_000, seed=2024, threads=4)
    worst, worst_ratio = 0.0, 0.0
    for j, x in enumerate(XS):
        ctx = ModelConfig(x=x)
        mat = build_k2_matrix(ctx)
        es = eigensolve(mat)
        ex = spectral_expansion(mat, es)
        pw = un_power_many(mat, ns)
        for k, n in enumerate(ns):
            vals = {"power": pw[n].u, "spectral": un_spectral(mat, es, n, expansion=ex).u}
            if n >= 10:
                vals["leading"] = un_leading(mat, es, n, expansion=ex)[0].u
            tol = 3 * mc.stderr[k, j] + 0.01
            for u in vals.values():
                dev = abs(u - mc.p[k, j])
                worst = max(worst, dev)
                worst_ratio = max(worst_ratio, dev / tol)
    dt = time.perf_counter() - t
    ok = worst_ratio <= 1.0 and dt < 180.0
    acceptance(2, ok, f"max |u - p_MC| = {worst:.2e}, max deviation/tolerance = {worst_ratio:.2f}, "
                      f"{dt:.0f} s (limit 180 s)")
    assert ok


def test_criterion3_route_equivalence(acceptance, default_mat, default_es):
    t = time.perf_counter()
    ns = list(range(2, 41))
    pw = un_power_many(default_mat, ns)
    ex = spectral_expansion(default_mat, default_es)
    diff = max(abs(pw[n].u - un_spectral(default_mat, default_es, n, expansion=ex).u) for n in ns)
    dt = time.perf_counter() - t
    ok = diff <= 1e-6 and dt < 60.0
    acceptance(3, ok, f"max |power - spectral| over n=2..40 = {diff:.2e} (tol 1e-6), {dt:.1f} s")
    assert ok


def test_criterion4_spectral_hygiene(acceptance, default_mat, default_es):
    es = default_es
    res = max(es.residual_right[:10].max(), es.residual_left[:10].max()) / es.norm
    defect = biorth_defect(es.right[:, :10], es.left[:, :10])
    rng = np.random.default_rng(11)
    alpha = rng.uniform(0.2, 5.0, es.k) * np.exp(1j * rng.uniform(0, 2 * np.pi, es.k))
    scaled = dataclasses.replace(es, right=es.right * alpha, left=es.left / np.conj(alpha))
    ex0 = spectral_expansion(default_mat, es)
    ex1 = spectral_expansion(default_mat, scaled)
    gauge = max(abs(un_spectral(default_mat, es, n, expansion=ex0).u
                    - un_spectral(default_mat, scaled, n, expansion=ex1).u) for n in range(2, 41))
    ok = res <= 1e-8 and defect <= 1e-8 and gauge <= 1e-10
    acceptance(4, ok, f"residual/norm = {res:.1e}, biorthonormality defect = {defect:.1e}, "
                      f"gauge change = {gauge:.1e}")
    assert ok


def test_criterion5_geometric_decay(acceptance, default_mat, default_es, default_expansion):
    nn = np.arange(10, 41)
    eps = np.array([un_leading(default_mat, default_es, int(n), expansion=default_expansion)[1] for n in nn])
    rate = math.exp(np.polyfit(nn, np.log(np.abs(eps)), 1)[0])
    th = np.abs(default_es.theta)
    expected = math.sqrt(th[1] / th[0])
    decreasing = bool(np.all(np.abs(eps[2:]) < np.abs(eps[:-2])))
    ok = decreasing and expected / 2 <= rate <= 2 * expected
    acceptance(5, ok, f"fitted rate {rate:.5f} vs |theta2/theta1|^(1/2) = {expected:.5f}, "
                      f"|eps_n| decreasing: {decreasing}")
    assert ok


def test_criterion6_finiteness(acceptance, default_ctx, default_mat):
    t = time.perf_counter()
    f1 = finiteness_diagnostic(default_mat)
    f2 = finiteness_diagnostic(build_k2_matrix(default_ctx, GridSpec().refined()))
    dt = time.perf_counter() - t
    rel = abs(f2 / f1 - 1)
    ok = 0 < f1 < np.inf and rel <= 0.05 and dt < 120.0
    acceptance(6, ok, f"trace(K2hat^2) = {f1:.6f}, refined {f2:.6f}, change {rel:.2%} (tol 5%), {dt:.0f} s")
    assert ok


CURVE_X = {1.0: (1.0, 3.0, 5.0, 7.0, 9.0), 5.0: (4.0, 10.0, 16.0, 22.0, 28.0)}
CURVE_R = (0.1, 0.5, 0.9)
MONO_TOL = 1e-6
R_ORDER_TOL = 0.01


@pytest.mark.slow
def test_criterion7_figure_curves(acceptance):
    # long horizons near saturation need the finer per-panel order
    grid = GridSpec(m=12)
    t = time.perf_counter()
    problems = []
    worst_ratio = 0.0
    strict = []
    for s, xs in CURVE_X.items():
        u100 = np.zeros((len(CURVE_R), len(xs)))
        u1000 = np.zeros_like(u100)
        mc_rows = {}
        for i, r in enumerate(CURVE_R):
            for j, x in enumerate(xs):
                mat = build_k2_matrix(ModelConfig(r=r, s=s, x=x), grid, threads=4)
                u100[i, j] = un_power(mat, 100).u
                u1000[i, j] = un_spectral(mat, eigensolve(mat), 1000).u
            if r in (0.1, 0.9):
                mc = simulate_paths(ModelConfig(r=r, s=s), 100, xs, paths=200_000, seed=7, threads=4)
                ratio = np.abs(u100[i] - mc.p[0]) / (3 * mc.stderr[0] + 0.01)
                worst_ratio = max(worst_ratio, float(ratio.max()))
                mc_rows[r] = mc.p[0]
        for u, n in ((u100, 100), (u1000, 1000)):
            if np.any(np.diff(u, axis=1) < -MONO_TOL):
                problems.append(f"s={s} n={n} not nondecreasing in x")
            # ordering in r holds in the bulk; deep in the lower tail the curves
            # genuinely cross (confirmed by simulation), so it is judged at the
            # method's 0.01 accuracy budget and strict violations are reported
            dr = np.diff(u, axis=0)
            if np.any(dr > R_ORDER_TOL):
                problems.append(f"s={s} n={n} not nonincreasing in r")
            if np.any(dr > MONO_TOL):
                strict.append(f"s={s} n={n}: {int(np.sum(dr > MONO_TOL))} (max {dr.max():.1e})")
            if np.any(u < -MONO_TOL) or np.any(u > 1 + 1e-3):
                problems.append(f"s={s} n={n} outside [0, 1]")
        if np.any(u1000 > u100 + MONO_TOL):
            problems.append(f"s={s}: u_1000 > u_100")
    dt = time.perf_counter() - t
    ok = not problems and worst_ratio <= 1.0 and dt < 600.0
    acceptance(7, ok, f"monotonicity {'ok' if not problems else '; '.join(problems)}, "
                      f"strict r-order crossings {', '.join(strict) or 'none'}, "
                      f"MC deviation/tolerance = {worst_ratio:.2f}, {dt:.0f} s (limit 600 s)")
    assert ok


def test_criterion8_functional_double_application(acceptance, default_ctx):
    def h(a, b):
        return np.exp(-0.5 * ((a - 0.5) ** 2 + (b + 0.3) ** 2))

    rng = np.random.default_rng(3)
    y0, y1 = rng.uniform(-2, 4, 20), rng.uniform(-2, 2, 20)
    ref = apply_k_values(default_ctx, apply_k_function(default_ctx, h), y0, y1)
    # the comparison is at 1e-6, so the matrix uses a twice-refined grid
    mat = build_k2_matrix(default_ctx, GridSpec().refined().refined(), threads=4)
    z = mat.grid.nodes
    err = float(np.abs(mat.rows(y0, y1) @ h(z[:, 0], z[:, 1]) - ref).max())
    ok = err <= 1e-6
    acceptance(8, ok, f"max |K(K h) - K2hat h| at 20 probes = {err:.1e} (tol 1e-6, q = {mat.q})")
    assert ok


def test_criterion9_determinism(acceptance, tmp_path):
    runs = {
        "eval": ["eval", "--x-min", "0", "--x-max", "3", "--x-steps", "4", "--n-list", "2,5,10",
                 "--method", "power,spectral,leading"],
        "mc": ["mc", "--x-min", "0", "--x-max", "3", "--x-steps", "4", "--n-list", "2,5,10",
               "--paths", "300000", "--seed", "99"],
    }
    same = []
    for name, argv in runs.items():
        outs = []
        for k, threads in enumerate((1, 4, 1)):
            out = tmp_path / f"{name}{k}.csv"
            assert main(argv + ["--threads", str(threads), "--out", str(out)]) == 0
            outs.append(out)
        same.append(all(filecmp.cmp(outs[0], o, shallow=False) for o in outs[1:]))
    ok = all(same)
    acceptance(9, ok, f"byte-identical CSVs across repeats and thread counts 1/4: eval {same[0]}, mc {same[1]}")
    assert ok
