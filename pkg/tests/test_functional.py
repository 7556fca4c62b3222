import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgi.functional import (Combination, DerivEval, FunctionHandle, MissingCapabilityError, Mollifier,
                            PointEval, WeakMollifier, apply, apply_many, cov, cross_cov,
                            functional_from_dict, mollifier_gradient, mollifier_kappa,
                            mollifier_value, riesz)
from kgi.kernel import DimensionError, Kernel, OrderExceededError, kernel_deriv, kernel_eval
from kgi.quadrature import QuadratureRule

from conftest import smooth_function_1d

# 1 / int exp(-1/(1-|x|^2)): d=1 by scipy.integrate.quad, d=2 by 1-D radial quad
KAPPA_1D = 2.25228362104358
KAPPA_2D = 2.14356577579224
# WeakMollifier(0.5, 0.1) on sin(pi x): dense trapezoid (200001 nodes) of pi cos(pi y) phi_r'(y - 0.5)
WEAK_SIN_REFERENCE = 9.79280780342633

SIN = FunctionHandle(value=lambda X: np.sin(np.pi * X[:, 0]),
                     gradient=lambda X: np.pi * np.cos(np.pi * X[:, :1]))


def trapezoid_grid(center, r, n=4001):
    y = np.linspace(center - r, center + r, n)
    w = np.full(n, y[1] - y[0])
    w[[0, -1]] *= 0.5
    return y, w


class TestMollifier:
    def test_kappa_1d(self):
        assert mollifier_kappa(1) == pytest.approx(KAPPA_1D, abs=1e-5)
        assert mollifier_kappa(1) == pytest.approx(2.25228, abs=1e-5)

    def test_kappa_2d(self):
        assert mollifier_kappa(2) == pytest.approx(KAPPA_2D, abs=1e-8)

    def test_normalization_by_trapezoid(self):
        y, w = trapezoid_grid(0.0, 1.0, 20001)
        m = Mollifier(1)
        assert np.dot(w, mollifier_value(m, y, 1.0)) == pytest.approx(1.0, abs=1e-10)

    def test_outside_support(self):
        m = Mollifier(2)
        assert mollifier_value(m, np.array([0.3, 0.4]), 0.5) == 0.0
        assert mollifier_value(m, np.array([0.5, 0.5]), 0.5) == 0.0
        np.testing.assert_array_equal(mollifier_gradient(m, np.array([0.6, 0.0]), 0.5), [0.0, 0.0])

    def test_center(self):
        m = Mollifier(1)
        assert float(mollifier_value(m, 0.0, 1.0)) == pytest.approx(m.kappa * np.exp(-1), rel=1e-15)
        np.testing.assert_array_equal(mollifier_gradient(Mollifier(2), np.zeros(2), 0.3), [0.0, 0.0])

    @pytest.mark.parametrize("d", [1, 2])
    def test_r_scaling(self, d):
        m = Mollifier(d)
        x = np.full(d, 0.05)
        r = 0.17
        assert float(mollifier_value(m, x, r)) == pytest.approx(r ** -d * float(mollifier_value(m, x / r, 1.0)), rel=1e-14)

    @pytest.mark.parametrize("d", [1, 2])
    def test_gradient_matches_finite_differences(self, d):
        rng = np.random.default_rng(5)
        m = Mollifier(d)
        r = 0.4
        h = 1e-6
        for _ in range(20):
            x = rng.uniform(-0.8, 0.8, d) * r / np.sqrt(d)
            g = np.atleast_1d(mollifier_gradient(m, x, r))
            for i in range(d):
                e = np.zeros(d)
                e[i] = h
                fd = (float(mollifier_value(m, x + e, r)) - float(mollifier_value(m, x - e, r))) / (2 * h)
                assert g[i] == pytest.approx(fd, abs=1e-6)

    def test_gradient_continuous_at_boundary(self):
        m = Mollifier(1)
        assert abs(float(mollifier_gradient(m, 0.999999, 1.0)[0])) < 1e-12


class TestApply:
    def test_point(self):
        f = FunctionHandle(value=lambda X: X[:, 0] ** 2)
        assert apply(PointEval(0.3), f) == pytest.approx(0.09, rel=1e-15)

    def test_cancellation(self):
        f = smooth_function_1d()
        assert apply(Combination(((1.0, PointEval(0.4)), (-1.0, PointEval(0.4)))), f) == 0.0

    def test_deriv(self):
        f = smooth_function_1d()
        assert apply(DerivEval(0.2, (2,)), f) == pytest.approx(-9 * np.sin(0.6) + 1, rel=1e-14)

    def test_weak_sin(self):
        assert apply(WeakMollifier(0.5, 0.1), SIN) == pytest.approx(WEAK_SIN_REFERENCE, abs=1e-6)

    def test_weak_sin_oracle_is_independent(self):
        # recompute the frozen reference with a dense trapezoid rule
        y, w = trapezoid_grid(0.5, 0.1, 200001)
        g = mollifier_gradient(Mollifier(1, KAPPA_1D), y - 0.5, 0.1)[:, 0]
        assert np.dot(w, np.pi * np.cos(np.pi * y) * g) == pytest.approx(WEAK_SIN_REFERENCE, abs=1e-9)

    def test_missing_gradient(self):
        with pytest.raises(MissingCapabilityError):
            apply(WeakMollifier(0.5, 0.1), FunctionHandle(value=lambda X: X[:, 0]))
        with pytest.raises(MissingCapabilityError):
            apply(DerivEval(0.5, (2,)), FunctionHandle(value=lambda X: X[:, 0]))

    def test_mollification_consistency(self):
        errs = [apply(WeakMollifier(0.5, r), SIN) - np.pi ** 2 for r in (0.2, 0.1, 0.05)]
        assert abs(errs[0]) > abs(errs[1]) > abs(errs[2])
        assert abs(errs[2]) < 0.02

    def test_linearity(self):
        rng = np.random.default_rng(1)
        f = smooth_function_1d()
        for _ in range(20):
            Ls = [PointEval(rng.uniform()), DerivEval(rng.uniform(), (int(rng.integers(1, 4)),)),
                  WeakMollifier(rng.uniform(0.3, 0.7), rng.uniform(0.05, 0.25))]
            w = rng.normal(size=3)
            combo = Combination(tuple(zip(w, Ls)))
            expected = sum(wi * apply(L, f) for wi, L in zip(w, Ls))
            assert apply(combo, f) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_apply_many_matches_apply(self):
        f = smooth_function_1d()
        Ls = [PointEval(0.1), WeakMollifier(0.5, 0.2), DerivEval(0.9, (1,))]
        np.testing.assert_allclose(apply_many(Ls, f), [apply(L, f) for L in Ls], rtol=1e-14)


def random_functional(rng, d, max_order):
    kind = rng.integers(0, 4)
    x = rng.uniform(0.3, 0.7, d)
    if kind == 0:
        return PointEval(x)
    if kind == 1:
        alpha = [0] * d
        for _ in range(rng.integers(1, max_order + 1)):
            alpha[rng.integers(d)] += 1
        return DerivEval(x, tuple(alpha))
    if kind == 2:
        return WeakMollifier(x, rng.uniform(0.05, 0.25))
    return Combination(((rng.normal(), PointEval(x)), (rng.normal(), WeakMollifier(x, 0.1))))


class TestRieszCov:
    def test_point_riesz(self):
        K = Kernel("gaussian", 0.5, 1)
        assert riesz(K, PointEval(0.7), 0.2) == pytest.approx(float(kernel_eval(K, 0.2, 0.7)), rel=1e-15)

    def test_combination_riesz(self):
        K = Kernel("gaussian", 0.5, 1)
        assert riesz(K, Combination(((2.5, PointEval(0.7)),)), 0.2) == \
            pytest.approx(2.5 * float(kernel_eval(K, 0.2, 0.7)), rel=1e-15)

    def test_deriv_riesz_uses_beta(self):
        K = Kernel("matern52", 0.5, 1)
        assert riesz(K, DerivEval(0.7, (1,)), 0.2) == pytest.approx(float(kernel_deriv(K, (0,), (1,), 0.2, 0.7)),
                                                                 rel=1e-15)

    @pytest.mark.parametrize("x", [0.1, 0.45, 0.5, 0.93])
    def test_weak_riesz_matches_apply(self, x):
        K = Kernel("gaussian", 0.3, 1)
        L = WeakMollifier(0.5, 0.15)
        assert riesz(K, L, x) == pytest.approx(apply(L, FunctionHandle.kernel_section(K, x)), rel=1e-12, abs=1e-14)

    def test_brownian_cov(self):
        assert cov(Kernel("brownian_min"), PointEval(0.5), PointEval(1.0)) == 0.5

    def test_point_cov(self):
        K = Kernel("matern52", 0.3, 2)
        x, y = [0.1, 0.2], [0.4, 0.0]
        assert cov(K, PointEval(x), PointEval(y)) == pytest.approx(float(kernel_eval(K, x, y)), rel=1e-15)

    @pytest.mark.parametrize("K", [Kernel("gaussian", 0.4, 1), Kernel("matern52", 0.5, 1),
                                   Kernel("gaussian", 0.6, 2)], ids=str)
    def test_symmetry_50_pairs(self, K):
        rng = np.random.default_rng(17)
        max_order = K.smoothness_order // 2
        for _ in range(50):
            L1 = random_functional(rng, K.dimension, max_order)
            L2 = random_functional(rng, K.dimension, max_order)
            rule = QuadratureRule(16 if K.dimension == 2 else 48)
            a, b = cov(K, L1, L2, rule), cov(K, L2, L1, rule)
            assert a == pytest.approx(b, rel=1e-10, abs=1e-13)

    def test_reduction(self):
        rng = np.random.default_rng(4)
        K = Kernel("gaussian", 0.4, 2)
        for _ in range(10):
            L = random_functional(rng, 2, 2)
            x = rng.uniform(0, 1, 2)
            assert cov(K, PointEval(x), L) == riesz(K, L, x)

    def test_weak_weak_against_laplacian_form(self):
        # integrating by parts twice: int int phi_1(x) phi_2(y) d_x^2 d_y^2 K dx dy, dense trapezoid
        K = Kernel("gaussian", 0.3, 1)
        L1, L2 = WeakMollifier(0.4, 0.1), WeakMollifier(0.55, 0.15)
        x, wx = trapezoid_grid(0.4, 0.1, 1501)
        y, wy = trapezoid_grid(0.55, 0.15, 1501)
        m = Mollifier(1, KAPPA_1D)
        px = wx * mollifier_value(m, x - 0.4, 0.1)
        py = wy * mollifier_value(m, y - 0.55, 0.15)
        D = kernel_deriv(K, (2,), (2,), x[:, None, None], y[None, :, None])
        oracle = px @ D @ py
        assert cov(K, L1, L2) == pytest.approx(oracle, abs=1e-6)

    @pytest.mark.slow
    def test_weak_weak_against_nested_apply(self):
        # outer apply over a handle whose gradient is computed by a separate riesz-type pass
        K = Kernel("gaussian", 0.5, 2)
        L1, L2 = WeakMollifier([0.4, 0.5], 0.1), WeakMollifier([0.6, 0.45], 0.2)
        rule = QuadratureRule(64)

        def grad(Y):
            tests = [[DerivEval(y, (1, 0)), DerivEval(y, (0, 1))] for y in Y]
            flat = [t for pair in tests for t in pair]
            return cross_cov(K, [L1], flat, rule)[0].reshape(-1, 2)

        h = FunctionHandle(value=lambda Y: np.zeros(len(Y)), gradient=grad)
        assert cov(K, L1, L2) == pytest.approx(apply(L2, h, rule), abs=1e-6)

    def test_order_exceeded(self):
        with pytest.raises(OrderExceededError):
            cov(Kernel("matern52", 1.0, 1), DerivEval(0.1, (3,)), PointEval(0.3))
        with pytest.raises(OrderExceededError):
            cov(Kernel("brownian_min"), WeakMollifier(0.5, 0.1), PointEval(0.2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cov(Kernel("gaussian", 1.0, 2), PointEval(0.1), PointEval([0.1, 0.2]))

    def test_gram_of_mixed_functionals_is_psd(self):
        rng = np.random.default_rng(9)
        K = Kernel("gaussian", 0.3, 1)
        Ls = [random_functional(rng, 1, 2) for _ in range(12)]
        A = cross_cov(K, Ls, Ls)
        w = np.linalg.eigvalsh((A + A.T) / 2)
        assert w.min() >= -1e-10 * w.max()


class TestEncoding:
    def test_round_trip(self):
        Ls = [PointEval([0.1, 0.2]), DerivEval([0.3, 0.4], (1, 1)), WeakMollifier([0.5, 0.5], 0.1),
              Combination(((0.5, PointEval([0.0, 1.0])), (-2.0, WeakMollifier([0.5, 0.5], 0.2))))]
        for L in Ls:
            assert functional_from_dict(json.loads(json.dumps(L.to_dict()))) == L

    def test_combination_flattens(self):
        inner = Combination(((2.0, PointEval(0.1)),))
        outer = Combination(((3.0, inner), (1.0, PointEval(0.2))))
        assert outer.terms == ((6.0, PointEval(0.1)), (1.0, PointEval(0.2)))

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            functional_from_dict({"type": "measure"})

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            WeakMollifier(0.5, 0.0)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.0, 1.0), b=st.floats(0.0, 1.0), w1=st.floats(-5, 5), w2=st.floats(-5, 5))
def test_cov_bilinear_in_point_combinations(a, b, w1, w2):
    K = Kernel("matern52", 0.4, 1)
    L = Combination(((w1, PointEval(a)), (w2, PointEval(b))))
    expected = w1 * float(kernel_eval(K, a, 0.5)) + w2 * float(kernel_eval(K, b, 0.5))
    assert cov(K, L, PointEval(0.5)) == pytest.approx(expected, rel=1e-12, abs=1e-12)
