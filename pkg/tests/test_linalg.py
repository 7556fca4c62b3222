import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg as sla

from kgi.functional import Combination, DerivEval, PointEval, WeakMollifier
from kgi.kernel import Kernel, kernel_eval
from kgi.linalg import (RankZeroError, assemble_b, assemble_gram, gram_from_matrix, lambda_min_pos,
                        pinv_apply)

# scipy.linalg.eigvalsh on the 5x5 Gaussian (ell=0.2) Gram of linspace(0, 1, 5)
LAMBDA_MIN_GAUSS_5 = 0.257436313561694


def random_functionals(rng, n):
    out = []
    for _ in range(n):
        x = rng.uniform(0.25, 0.75)
        kind = rng.integers(3)
        if kind == 0:
            out.append(PointEval(x))
        elif kind == 1:
            out.append(DerivEval(x, (int(rng.integers(1, 3)),)))
        else:
            out.append(WeakMollifier(x, rng.uniform(0.05, 0.2)))
    return out


class TestAssembleGram:
    def test_brownian(self):
        G = assemble_gram(Kernel("brownian_min"), [PointEval(0.5), PointEval(1.0)])
        np.testing.assert_array_equal(G.A, [[0.5, 0.5], [0.5, 1.0]])

    def test_duplicates(self):
        G = assemble_gram(Kernel("gaussian", 1.0, 1), [PointEval(0.3), PointEval(0.3)])
        np.testing.assert_array_equal(G.A, np.ones((2, 2)))
        assert G.rank == 1
        assert G.lambda_min_pos == pytest.approx(2.0, rel=1e-15)

    def test_gaussian_equispaced(self):
        x = np.linspace(0, 1, 5)
        G = assemble_gram(Kernel("gaussian", 0.2, 1), [PointEval(t) for t in x])
        oracle = sla.eigvalsh(np.exp(-0.5 * ((x[:, None] - x[None, :]) / 0.2) ** 2))[0]
        assert oracle == pytest.approx(LAMBDA_MIN_GAUSS_5, abs=1e-12)
        assert G.rank == 5
        assert lambda_min_pos(G) == pytest.approx(oracle, abs=1e-8)

    def test_symmetrized_and_threshold_recorded(self):
        A = np.array([[2.0, 1.0 + 1e-12], [1.0, 2.0]])
        G = gram_from_matrix(A)
        np.testing.assert_array_equal(G.A, G.A.T)
        assert G.threshold == pytest.approx(max(2 * np.finfo(float).eps * 3.0, 1e-12 * 3.0), rel=1e-12)

    def test_zero_matrix(self):
        G = gram_from_matrix(np.zeros((3, 3)))
        assert G.rank == 0
        np.testing.assert_array_equal(pinv_apply(G, np.ones(3)), np.zeros(3))
        with pytest.raises(RankZeroError):
            lambda_min_pos(G)

    def test_random_functional_sets(self):
        rng = np.random.default_rng(21)
        K = Kernel("gaussian", 0.3, 1)
        for _ in range(30):
            G = assemble_gram(K, random_functionals(rng, int(rng.integers(1, 11))))
            np.testing.assert_array_equal(G.A, G.A.T)
            assert np.all(G.retained_values > 0)
            assert np.all(np.abs(G.eigenvalues[G.rank:]) <= G.threshold)
            assert G.pseudo_det == np.prod(G.retained_values)


class TestAssembleB:
    def test_column_of_gram(self):
        K = Kernel("gaussian", 0.3, 1)
        Ls = [PointEval(0.2), DerivEval(0.5, (1,)), WeakMollifier(0.6, 0.1)]
        G = assemble_gram(K, Ls)
        for k, L in enumerate(Ls):
            np.testing.assert_allclose(assemble_b(K, Ls, L), G.A[:, k], rtol=1e-13, atol=1e-14)

    def test_point_data(self):
        K = Kernel("matern52", 0.4, 1)
        X = [0.1, 0.4, 0.9]
        np.testing.assert_allclose(assemble_b(K, [PointEval(t) for t in X], PointEval(0.3)),
                                   [float(kernel_eval(K, 0.3, t)) for t in X], rtol=1e-15)

    def test_zero_combination(self):
        K = Kernel("gaussian", 0.3, 1)
        np.testing.assert_array_equal(assemble_b(K, [PointEval(0.1), PointEval(0.2)], Combination()), [0.0, 0.0])


class TestPinv:
    def test_rank_one(self):
        G = gram_from_matrix(np.ones((2, 2)))
        np.testing.assert_allclose(pinv_apply(G, [1.0, 1.0]), [0.5, 0.5], rtol=1e-15)

    def test_null_space(self):
        G = gram_from_matrix(np.ones((2, 2)))
        np.testing.assert_allclose(pinv_apply(G, [1.0, -1.0]), [0.0, 0.0], atol=1e-15)

    def test_full_rank_residual(self):
        rng = np.random.default_rng(2)
        M = rng.normal(size=(6, 6))
        A = M @ M.T + 0.1 * np.eye(6)
        v = rng.normal(size=6)
        z = pinv_apply(gram_from_matrix(A), v)
        assert np.linalg.norm(A @ z - v) <= 1e-8 * np.linalg.norm(v)

    def test_identities_and_projection(self):
        rng = np.random.default_rng(8)
        K = Kernel("gaussian", 0.15, 1)
        checked = 0
        for _ in range(10):
            Ls = random_functionals(rng, 5)
            Ls += Ls[:2]  # force singularity
            G = assemble_gram(K, Ls)
            A, P = G.A, G.pinv()
            fro = np.linalg.norm
            assert fro(A @ P @ A - A) <= 1e-8 * fro(A)
            # rounding in A+ A A+ grows like eps * cond(retained spectrum)
            if G.retained_values[0] / G.retained_values[-1] <= 1e7:
                checked += 1
                assert fro(P @ A @ P - P) <= 1e-8 * fro(P)
                v = rng.normal(size=G.n)
                E = G.retained_vectors
                np.testing.assert_allclose(A @ pinv_apply(G, v), E @ (E.T @ v), atol=1e-8 * np.linalg.norm(v))
        assert checked >= 5

    def test_pinv_identity_well_conditioned(self):
        x = np.linspace(0, 1, 6)
        G = assemble_gram(Kernel("gaussian", 0.2, 1), [PointEval(t) for t in np.r_[x, x[:3]]])
        P = G.pinv()
        assert G.rank == 6
        assert np.linalg.norm(P @ G.A @ P - P) <= 1e-8 * np.linalg.norm(P)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pinv_apply(gram_from_matrix(np.eye(2)), np.ones(3))


class TestLambdaMin:
    def test_diag(self):
        assert lambda_min_pos(gram_from_matrix(np.diag([2.0, 0.0]))) == 2.0

    def test_identity(self):
        assert lambda_min_pos(gram_from_matrix(np.eye(3))) == 1.0

    def test_random_spd(self):
        rng = np.random.default_rng(12)
        M = rng.normal(size=(6, 6))
        A = M @ M.T + 0.5 * np.eye(6)
        assert lambda_min_pos(gram_from_matrix(A)) == pytest.approx(sla.eigvalsh(A)[0], rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.floats(0.05, 1.0))
def test_point_gram_is_psd(xs, ell):
    G = assemble_gram(Kernel("gaussian", ell, 1), [PointEval(x) for x in xs])
    assert G.eigenvalues.min() >= -1e-10 * G.eigenvalues.max()
    assert 1 <= G.rank <= len(xs)
