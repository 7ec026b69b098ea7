import itertools

import numpy as np
import pytest

from srgeom.lie import CarnotAlgebra, cartan_nilpotent, heisenberg
from srgeom.spencer import (
    GradedComplex,
    random_cochain,
    spencer_d,
    spencer_dstar,
)


def abelian(n):
    return CarnotAlgebra((n,), tuple(f"A{i+1}" for i in range(n)), {})


def complexes():
    return [
        GradedComplex(heisenberg((1,))),
        GradedComplex(heisenberg((1, 2))),
        GradedComplex(cartan_nilpotent()),
    ]


# ---------------------------------------------------------------------------
# hand-checked evaluations


def test_d_of_zero_is_zero():
    cx = GradedComplex(heisenberg((1,)))
    for k in range(cx.n):
        assert spencer_d(cx.zero(k)).norm() == 0.0


def test_abelian_degree_one_formula():
    # alpha = u_0^* (x) D:  (d alpha)(u_0, u_j) = D u_j, all other rows vanish
    cx = GradedComplex(abelian(3))
    assert cx.m == 3  # so(3)
    for s in range(cx.m):
        coeffs = np.zeros((3, cx.dim_values))
        coeffs[0, cx.n + s] = 1.0
        out = spencer_d(cx.cochain(1, coeffs))
        for row, (i, j) in enumerate(cx.multi_indices(2)):
            got = out.coeffs[row]
            assert np.abs(got[cx.n :]).max() < 1e-14
            if i == 0:
                expect = cx.derivations[s][:, j]
            else:
                expect = np.zeros(3)
            assert np.abs(got[: cx.n] - expect).max() < 1e-12


def test_heisenberg_degree_zero_is_minus_derivation():
    cx = GradedComplex(heisenberg((1,)))
    assert cx.m == 1
    coeffs = np.zeros((1, cx.dim_values))
    coeffs[0, cx.n] = 1.0
    out = spencer_d(cx.cochain(0, coeffs))
    d = cx.derivations[0]
    # row a of the result is [u_a, D] = -D u_a
    assert np.abs(out.coeffs[:, : cx.n] - (-d.T)).max() < 1e-12
    assert np.abs(out.coeffs[:, cx.n :]).max() < 1e-14


def test_heisenberg_degree_one_hand_value():
    # The isometry algebra of the standard 3-dim example is spanned by one
    # rotation with squared trace norm 2, so the normalized generator D
    # satisfies |<D u_0, u_1>| = 1/sqrt(2).
    cx = GradedComplex(heisenberg((1,)))
    d = cx.derivations[0]
    assert abs(abs(d[1, 0]) - 2 ** -0.5) < 1e-12

    coeffs = np.zeros((3, cx.dim_values))
    coeffs[0, cx.n] = 1.0  # alpha = u_0^* (x) D
    out = spencer_d(cx.cochain(1, coeffs))
    pos = cx.multi_indices(2).index((0, 1))
    for row in range(len(cx.multi_indices(2))):
        expect = np.zeros(cx.dim_values)
        if row == pos:
            expect[: cx.n] = d[:, 1]
        assert np.abs(out.coeffs[row] - expect).max() < 1e-12


def test_cartan_structural_basis_is_orthonormal():
    cx = GradedComplex(cartan_nilpotent())
    assert np.abs(cx.frame - np.eye(5)).max() < 1e-10
    assert np.abs(cx.ctil - cx.algebra.structure_tensor()).max() < 1e-10


# ---------------------------------------------------------------------------
# complex identities


def test_d_squared_is_zero():
    rng = np.random.default_rng(7)
    for cx in complexes():
        for k in range(cx.n):
            for _ in range(20):
                alpha = random_cochain(cx, k, rng)
                dd = spencer_d(spencer_d(alpha))
                assert dd.norm() <= 1e-12


def test_dstar_squared_is_zero():
    rng = np.random.default_rng(8)
    for cx in complexes():
        for k in range(2, cx.n + 1):
            for _ in range(20):
                kappa = random_cochain(cx, k, rng)
                dd = spencer_dstar(spencer_dstar(kappa))
                assert np.abs(dd.coeffs).max() <= 1e-12


def test_adjointness():
    rng = np.random.default_rng(9)
    for cx in complexes():
        for _ in range(50):
            k = int(rng.integers(0, cx.n))
            alpha = random_cochain(cx, k, rng)
            beta = random_cochain(cx, k + 1, rng)
            lhs = spencer_d(alpha).inner(beta)
            rhs = alpha.inner(spencer_dstar(beta))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_dstar_d_positive_semidefinite():
    cx = GradedComplex(heisenberg((1,)))
    mat = cx.d_matrix(1)
    gram = mat.T @ mat
    assert np.abs(gram - gram.T).max() < 1e-13
    assert np.linalg.eigvalsh(gram).min() > -1e-12


# ---------------------------------------------------------------------------
# inner-product structure


def test_value_basis_is_orthonormal():
    for cx in complexes():
        q = cx.frame
        gram = cx.algebra.full_gram(cx.convention)
        assert np.abs(q.T @ gram @ q - np.eye(cx.n)).max() < 1e-10
        for s in range(cx.m):
            for t in range(cx.m):
                ip = np.tensordot(cx.derivations[s], cx.derivations[t], axes=2)
                assert abs(ip - (1.0 if s == t else 0.0)) < 1e-10


def test_derivations_graded_and_skew():
    for cx in complexes():
        g = cx.algebra
        for d in cx.derivations:
            assert np.abs(d + d.T).max() < 1e-9
            for k in range(1, g.step + 1):
                rk = g.layer_range(k)
                mask = np.ones_like(d, dtype=bool)
                mask[np.ix_(rk, rk)] = False
                block_rows = d[np.ix_(rk, range(g.dim))].copy()
                block_rows[:, rk] = 0.0
                assert np.abs(block_rows).max() < 1e-9


def test_cochain_inner_is_euclidean():
    rng = np.random.default_rng(10)
    cx = GradedComplex(heisenberg((1, 2)))
    a = random_cochain(cx, 2, rng)
    b = random_cochain(cx, 2, rng)
    assert a.inner(b) == pytest.approx(float(np.dot(a.coeffs.ravel(), b.coeffs.ravel())))
    assert a.inner(a) > 0


def test_shape_validation():
    cx = GradedComplex(heisenberg((1,)))
    with pytest.raises(ValueError):
        cx.cochain(1, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        spencer_dstar(cx.zero(0))


def test_top_degree_maps_to_zero_space():
    cx = GradedComplex(heisenberg((1,)))
    rng = np.random.default_rng(11)
    alpha = random_cochain(cx, cx.n, rng)
    out = spencer_d(alpha)
    assert out.coeffs.shape[0] == 0


def test_multi_index_order_is_lexicographic():
    cx = GradedComplex(cartan_nilpotent())
    assert cx.multi_indices(2) == list(itertools.combinations(range(5), 2))
