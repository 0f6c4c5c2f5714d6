import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import norm

from armamax import GridSpec, InitialJoint, ModelConfig, build_k2_matrix, eigensolve, eval_G0
from armamax.errors import InconsistencyError, NumericalError
from armamax.maxdist import (
    apply_k_function,
    apply_k_values,
    eval_g1,
    finiteness_diagnostic,
    spectral_expansion,
    u1,
    un_leading,
    un_power,
    un_power_many,
    un_spectral,
)

from oracles import chain_u

INF = np.inf
U1_DEFAULT = norm.cdf(2 / 1.5)


def bump(a, b):
    return np.exp(-0.5 * ((a - 0.5) ** 2 + (b + 0.3) ** 2))


class TestApplyK:
    def test_zero(self, default_ctx):
        out = apply_k_values(default_ctx, lambda a, b: np.zeros(np.broadcast(a, b).shape), [0.0, 1.0], [0.5, INF])
        assert np.all(out == 0.0)

    def test_linearity(self, default_ctx):
        def h2(a, b):
            return np.exp(-0.25 * (a**2 + (b - 1) ** 2))

        rng = np.random.default_rng(5)
        y0, y1 = rng.uniform(-3, 4, 10), rng.uniform(-2, 2, 10)
        lhs = apply_k_values(default_ctx, lambda a, b: 2.0 * bump(a, b) - 0.7 * h2(a, b), y0, y1)
        rhs = 2.0 * apply_k_values(default_ctx, bump, y0, y1) - 0.7 * apply_k_values(default_ctx, h2, y0, y1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_function_form(self, default_ctx):
        kh = apply_k_function(default_ctx, bump)
        assert kh(0.3, 0.1) == pytest.approx(apply_k_values(default_ctx, bump, 0.3, 0.1)[0], abs=0)

    def test_u1_closed_form(self, default_ctx):
        assert u1(default_ctx) == pytest.approx(0.9088, abs=1e-4)
        assert u1(default_ctx) == pytest.approx(U1_DEFAULT, abs=1e-8)
        assert eval_g1(default_ctx, INF, INF) == pytest.approx(U1_DEFAULT, abs=1e-8)

    def test_g1_identity_stationary(self):
        # a stationary start makes (X_1, e_1) distributed like (X_0, e_0)
        ctx = ModelConfig(init=InitialJoint.stationary(0.5, 1.0))
        rng = np.random.default_rng(7)
        y0, y1 = rng.uniform(-3, 4, 20), rng.uniform(-2.5, 2.5, 20)
        g1 = eval_g1(ctx, y0, y1)
        g0 = eval_G0(ctx.init, np.minimum(y0, ctx.x), y1)
        np.testing.assert_allclose(g1, g0, atol=1e-6)

    def test_g1_product_init(self, default_ctx):
        # with a product start G_1(y) = P(X_1 <= y0x, e_1 <= y1), X_1 = r X0 + e1 + s e0
        y0, y1 = 1.2, 0.4
        yx = min(y0, default_ctx.x)
        from scipy import integrate

        val, _ = integrate.quad(lambda e: norm.pdf(e) * norm.cdf((yx - e) / math.hypot(0.5, 1.0)), -12, y1,
                                epsabs=1e-12)
        assert eval_g1(default_ctx, y0, y1) == pytest.approx(val, abs=1e-8)


class TestPower:
    def test_n0(self, default_mat):
        assert un_power(default_mat, 0).u == 1.0

    def test_n1(self, default_mat):
        r = un_power(default_mat, 1)
        assert r.u == pytest.approx(U1_DEFAULT, abs=1e-8) and r.method == "power"

    def test_negative(self, default_mat):
        with pytest.raises(ValueError):
            un_power(default_mat, -1)

    def test_many_matches_single(self, default_mat):
        many = un_power_many(default_mat, [2, 3, 7, 10])
        for n in (2, 3, 7, 10):
            assert many[n].u == un_power(default_mat, n).u

    def test_chain_oracle(self, default_mat):
        ref = chain_u(0.5, 1.0, 2.0, [2, 5, 10, 50])
        pw = un_power_many(default_mat, [2, 5, 10, 50])
        for n, v in ref.items():
            assert pw[n].u == pytest.approx(v, abs=1e-3)

    def test_chain_oracle_other_parameters(self):
        mat = build_k2_matrix(ModelConfig(r=0.5, s=5.0, x=3.0))
        ref = chain_u(0.5, 5.0, 3.0, [2, 10])
        pw = un_power_many(mat, [2, 10])
        assert pw[2].u == pytest.approx(ref[2], abs=2e-3)
        assert pw[10].u == pytest.approx(ref[10], abs=2e-3)

    def test_monotone_in_n(self, default_mat):
        pw = un_power_many(default_mat, range(0, 41))
        u = np.array([pw[n].u for n in range(41)])
        assert np.all(np.diff(u) <= 1e-8)
        assert np.all(u >= 0) and np.all(u <= 1 + 1e-6)

    @pytest.mark.slow
    def test_monotone_in_x(self):
        xs = np.linspace(-1.0, 5.0, 10)
        u = np.array([un_power(build_k2_matrix(ModelConfig(x=x)), 10).u for x in xs])
        assert np.all(np.diff(u) >= -1e-8)
        assert np.all(u >= 0) and np.all(u <= 1 + 1e-6)

    def test_large_x(self):
        mat = build_k2_matrix(ModelConfig(x=40.0))
        pw = un_power_many(mat, range(0, 11))
        for n in range(11):
            assert pw[n].u == pytest.approx(1.0, abs=1e-6)

    def test_geometric_slope(self, default_mat, default_es):
        nn = np.arange(20, 41, 2)
        pw = un_power_many(default_mat, nn)
        slope = np.polyfit(nn, np.log([pw[n].u for n in nn]), 1)[0]
        assert slope == pytest.approx(0.5 * math.log(default_es.theta[0].real), abs=1e-3)


class TestSpectral:
    def test_small_n(self, default_mat, default_es):
        assert un_spectral(default_mat, default_es, 0).u == 1.0
        assert un_spectral(default_mat, default_es, 1).u == pytest.approx(U1_DEFAULT, abs=1e-8)

    def test_route_equivalence(self, default_mat, default_es, default_expansion):
        pw = un_power_many(default_mat, range(2, 41))
        for n in range(2, 41):
            res = un_spectral(default_mat, default_es, n, expansion=default_expansion)
            assert res.u == pytest.approx(pw[n].u, abs=1e-6)
            assert res.imag_residue <= 1e-9

    def test_topk_truncation(self, default_mat, default_es, default_expansion):
        # eigenvalues below 1e-12 are not retained, so topk = q changes nothing
        full = un_spectral(default_mat, default_es, 12, topk=default_mat.q)
        small = un_spectral(default_mat, default_es, 12, expansion=default_expansion)
        assert full.u == pytest.approx(small.u, abs=1e-10)
        few = un_spectral(default_mat, default_es, 30, topk=5)
        assert few.u == pytest.approx(un_spectral(default_mat, default_es, 30).u, rel=1e-6)

    def test_gauge_invariance(self, default_mat, default_es):
        es = default_es
        rng = np.random.default_rng(2)
        alpha = rng.uniform(0.1, 10, es.k) * np.exp(1j * rng.uniform(0, 6.3, es.k))
        scaled = dataclasses.replace(es, right=es.right * alpha, left=es.left / np.conj(alpha))
        for n in (2, 3, 9, 20):
            assert un_spectral(default_mat, scaled, n).u == pytest.approx(un_spectral(default_mat, es, n).u,
                                                                          abs=1e-10)

    def test_imaginary_residue_error(self, default_mat, default_es):
        es = dataclasses.replace(default_es, right=default_es.right * 1j)
        with pytest.raises(InconsistencyError):
            un_spectral(default_mat, es, 4)

    def test_expansion_fields(self, default_expansion):
        ex = default_expansion
        assert ex.x == 2.0
        assert len(ex.theta) == len(ex.r_inf) == len(ex.b[0]) == len(ex.b[1])


class TestLeading:
    def test_dominant_group(self, default_es):
        assert default_es.multiplicity == 1

    def test_epsilon_decay(self, default_mat, default_es, default_expansion):
        eps = {n: un_leading(default_mat, default_es, n, expansion=default_expansion)[1] for n in (4, 8, 16, 32)}
        ratio = abs(default_es.theta[1] / default_es.theta[0])
        seq = [4, 8, 16, 32]
        for a, b in zip(seq[:-1], seq[1:]):
            assert abs(eps[b]) < abs(eps[a])
            bound = ratio ** ((b - a) / 2)
            assert abs(eps[b] / eps[a]) <= 2 * bound

    def test_epsilon_definition(self, default_mat, default_es, default_expansion):
        res, eps = un_leading(default_mat, default_es, 7, expansion=default_expansion)
        full = un_spectral(default_mat, default_es, 7, expansion=default_expansion).u
        assert eps == pytest.approx(full / res.u - 1, abs=1e-12)
        assert res.err_est == pytest.approx(abs(full - res.u), abs=1e-14)

    def test_large_n(self, default_mat, default_es, default_expansion):
        res, _ = un_leading(default_mat, default_es, 80, expansion=default_expansion)
        full = un_spectral(default_mat, default_es, 80, expansion=default_expansion).u
        assert res.u == pytest.approx(full, abs=1e-10)

    def test_needs_n2(self, default_mat, default_es):
        with pytest.raises(ValueError):
            un_leading(default_mat, default_es, 1)


class TestFiniteness:
    def test_positive_finite(self, default_mat):
        v = finiteness_diagnostic(default_mat)
        assert 0 < v < np.inf

    def test_matches_dense_trace(self, default_mat):
        a = default_mat.dense
        assert finiteness_diagnostic(default_mat) == pytest.approx(np.trace(a @ a), rel=1e-10)

    def test_nonfinite(self, default_mat):
        bad = dataclasses.replace(default_mat, kc=np.full_like(default_mat.kc, np.inf))
        with pytest.raises(NumericalError):
            finiteness_diagnostic(bad)
