"""Rank-two distributions of growth (2,3,5): frames, gradings, connections.

Two constructions are provided for the same geometry.

Frame pipeline: :func:`canonical_frame_235` builds the iterated-bracket frame
and the corrected fields ``Z``, ``Y_1``, ``Y_2`` whose spans do not depend on
the choice of orthonormal horizontal frame; :func:`connection_235` equips the
resulting splitting with its adapted metric connection and
:func:`flatness_235` tests local equivalence with the nilpotent model group.

Grading pipeline: :func:`intrinsic_frame_235` recovers the complementary
grading from differential forms alone, :func:`morimoto_grading_235` adds the
normalization data (the obstruction field, its induced corrections, and the
rotation generator) that single out the canonical grading, and
:func:`morimoto_connection_235` solves the normalization identities checked
by ``check_morimoto`` for the unique compatible connection.

All constructions run in the coefficient calculus of the iterated-bracket
frame: every corrected field is stored as a coefficient row over that frame,
brackets are expanded through the frame structure functions, and the adapted
gradings receive their coframe and structure functions from closed-form
inverses of the (block unitriangular) coefficient matrices.  Only the bracket
frame itself is ever inverted at the coordinate level.
"""

from dataclasses import dataclass, field

import numpy as np

from . import expr
from .manifold import (
    FramedManifold,
    ManifoldError,
    VectorField,
    bracket,
    frame_inverse,
    growth_flag,
    structure_functions,
)
from .connection import Connection, Grading, selector
from .contact import _default_samples, _gram_schmidt_horizontal

__all__ = [
    "Frame235",
    "Intrinsic235",
    "Grading235Params",
    "QMap",
    "Flatness235Report",
    "canonical_frame_235",
    "grading_235",
    "connection_235",
    "flatness_235",
    "intrinsic_frame_235",
    "intrinsic_grading_235",
    "q_map",
    "morimoto_grading_235",
    "morimoto_connection_235",
    "tau_vertical",
]

_ZERO = expr.rational(0)
_ONE = expr.rational(1)
_HALF = expr.rational(1, 2)


def _simp_add(*terms):
    return expr.simplify(expr.add(*terms))


def _is_zero(e) -> bool:
    return isinstance(e, expr.Rat) and e.value == 0


def _dderiv(coords, fld: VectorField, f):
    """Derivative of a scalar expression along a vector field."""
    return _simp_add(
        *[
            expr.mul(fld.components[a], expr.differentiate(f, c))
            for a, c in enumerate(coords)
            if not _is_zero(fld.components[a])
        ]
    )


def _brk(coords, frame_fields, ctab, u, w):
    """Bracket of two frame-coefficient vectors, again as coefficients."""
    n = len(u)
    out = []
    for k in range(n):
        terms = []
        for a in range(n):
            if not _is_zero(u[a]) and not _is_zero(w[k]):
                terms.append(expr.mul(u[a], _dderiv(coords, frame_fields[a], w[k])))
            if not _is_zero(w[a]) and not _is_zero(u[k]):
                terms.append(
                    expr.neg(expr.mul(w[a], _dderiv(coords, frame_fields[a], u[k])))
                )
        for a in range(n):
            if _is_zero(u[a]):
                continue
            for b in range(n):
                if _is_zero(w[b]) or _is_zero(ctab[a][b][k]):
                    continue
                terms.append(expr.mul(u[a], w[b], ctab[a][b][k]))
        out.append(_simp_add(*terms))
    return out


def _field_from_coeffs(m: FramedManifold, frame_fields, coeffs) -> VectorField:
    comps = [
        _simp_add(
            *[
                expr.mul(coeffs[i], frame_fields[i].components[a])
                for i in range(len(frame_fields))
                if not _is_zero(coeffs[i])
            ]
        )
        for a in range(m.dim)
    ]
    return VectorField(m, comps)


def _frame_comp(v, sinv, k):
    """Adapted component k of a bracket-frame coefficient vector."""
    return _simp_add(
        *[expr.mul(v[a], sinv[a][k]) for a in range(5) if not _is_zero(v[a])]
    )


def _solve_linear_exprs(mat, rhs):
    """Solve a square linear system with Expr entries by elimination.

    Pivoting follows the diagonal in order; callers arrange the equations so
    every diagonal entry stays bounded away from zero on the chart (the
    systems solved here are constant-coefficient perturbations of integer
    matrices with nonzero leading minors).
    """
    n = len(rhs)
    a = [[mat[i][j] for j in range(n)] + [rhs[i]] for i in range(n)]
    for i in range(n):
        inv = expr.div(_ONE, a[i][i])
        a[i] = [expr.simplify(expr.mul(inv, t)) for t in a[i]]
        a[i][i] = _ONE
        for r in range(n):
            if r == i or _is_zero(a[r][i]):
                continue
            f = a[r][i]
            a[r] = [
                expr.simplify(expr.sub(a[r][j], expr.mul(f, a[i][j])))
                for j in range(n + 1)
            ]
            a[r][i] = _ZERO
    return [a[i][n] for i in range(n)]


def _unit_lower_inverse(srows):
    """Inverse of a layered unitriangular coefficient matrix.

    Rows hold adapted fields over the bracket frame: the horizontal rows are
    standard basis vectors, row 2 corrects by horizontal terms only, rows 3
    and 4 correct by terms of slots 0..2 with an identity block on slots 3, 4.
    """
    out = [list(srows[0]), list(srows[1])]
    n2 = srows[2]
    out.append(
        [
            expr.simplify(expr.neg(n2[0])),
            expr.simplify(expr.neg(n2[1])),
            _ONE,
            _ZERO,
            _ZERO,
        ]
    )
    for r in (3, 4):
        nr = srows[r]
        row = [
            _simp_add(expr.neg(nr[a]), expr.mul(nr[2], n2[a])) for a in range(2)
        ]
        row.append(expr.simplify(expr.neg(nr[2])))
        row += [_ONE if 3 + b == r else _ZERO for b in range(2)]
        out.append(row)
    return out


def _seed_grading(grading: Grading, srows, sinv, alpha, coords, xfields, ctab):
    """Install the coframe and structure functions of an adapted grading.

    Both are assembled from the coefficient rows of the adapted fields over
    the bracket frame, its coordinate coframe ``alpha`` and its structure
    functions ``ctab``; this replaces the coordinate-level solve the grading
    would otherwise perform on its own frame.
    """
    n = 5
    finv = tuple(
        tuple(
            _simp_add(
                *[
                    expr.mul(sinv[k][i], alpha[k][a])
                    for k in range(n)
                    if not _is_zero(sinv[k][i])
                ]
            )
            for a in range(n)
        )
        for i in range(n)
    )
    cbar = [[[_ZERO for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            br = _brk(coords, xfields, ctab, srows[i], srows[j])
            for k in range(n):
                e = _frame_comp(br, sinv, k)
                cbar[i][j][k] = e
                cbar[j][i][k] = expr.simplify(expr.neg(e))
    grading.frame._frame_inverse = finv
    grading.frame._structure_functions = cbar
    return cbar


def _check_growth(m: FramedManifold, points):
    if m.rank != 2 or m.dim != 5:
        raise ManifoldError(
            "a growth (2,3,5) structure needs horizontal rank 2 in dimension 5"
        )
    flag = growth_flag(m, m.point(points[0]), 3)
    if tuple(flag) != (2, 3, 5):
        raise ManifoldError(
            f"the horizontal bundle does not have growth (2,3,5): flag {flag}"
        )


def _minor2(mat, rows, cols):
    return _simp_add(
        expr.mul(mat[rows[0]][cols[0]], mat[rows[1]][cols[1]]),
        expr.neg(expr.mul(mat[rows[0]][cols[1]], mat[rows[1]][cols[0]])),
    )


def _frame_calculus(m: FramedManifold, fields):
    """Coframe and structure functions of an orthonormal bracket frame.

    Only the bracket frame of the manifold's declared horizontal fields is
    inverted at the coordinate level; the orthonormal bracket frame is a
    block-triangular coefficient transform of it (horizontal block, degree -2
    slot, degree -3 block), inverted in closed form.  This keeps the metric
    normalization factors as isolated atoms instead of threading them
    through an elimination.
    """
    coords = m.coords
    r1, r2 = m.frames[0], m.frames[1]
    r3 = bracket(r1, r2)
    r4 = bracket(r1, r3)
    r5 = bracket(r2, r3)
    rfields = (r1, r2, r3, r4, r5)
    raux = FramedManifold(
        coords,
        [list(f.components) for f in rfields],
        m.rank,
        structure_class=m.structure_class,
    )
    alpha_r = frame_inverse(raux)
    c_r = structure_functions(raux)

    # coefficient rows over the raw frame; the given fields are horizontal,
    # so their raw components beyond the horizontal slots vanish identically
    mrows = [None] * 5
    for i in range(2):
        row = [
            _simp_add(
                *[
                    expr.mul(alpha_r[j][a], fields[i].components[a])
                    for a in range(5)
                    if not _is_zero(fields[i].components[a])
                ]
            )
            for j in range(2)
        ]
        mrows[i] = row + [_ZERO, _ZERO, _ZERO]
    mrows[2] = _brk(coords, rfields, c_r, mrows[0], mrows[1])
    mrows[3] = _brk(coords, rfields, c_r, mrows[0], mrows[2])
    mrows[4] = _brk(coords, rfields, c_r, mrows[1], mrows[2])

    # block inverse: horizontal 2x2 block by adjugate, lower 3x3 block by
    # adjugate over its determinant, mixed block by composition
    det_l = _minor2(mrows, (0, 1), (0, 1))
    dli = expr.simplify(expr.div(_ONE, det_l))
    linv = [
        [expr.simplify(expr.mul(mrows[1][1], dli)),
         expr.simplify(expr.neg(expr.mul(mrows[0][1], dli)))],
        [expr.simplify(expr.neg(expr.mul(mrows[1][0], dli))),
         expr.simplify(expr.mul(mrows[0][0], dli))],
    ]
    cblk = [[mrows[2 + r][2 + s] for s in range(3)] for r in range(3)]
    det_c = _simp_add(
        expr.mul(cblk[0][0], _minor2(cblk, (1, 2), (1, 2))),
        expr.neg(expr.mul(cblk[0][1], _minor2(cblk, (1, 2), (0, 2)))),
        expr.mul(cblk[0][2], _minor2(cblk, (1, 2), (0, 1))),
    )
    dci = expr.simplify(expr.div(_ONE, det_c))
    cinv = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            rows = tuple(r for r in range(3) if r != j)
            cols = tuple(s for s in range(3) if s != i)
            sign = _minor2(cblk, rows, cols)
            if (i + j) % 2:
                sign = expr.neg(sign)
            cinv[i][j] = expr.simplify(expr.mul(sign, dci))
    pblk = [[mrows[2 + r][a] for a in range(2)] for r in range(3)]
    # -Cinv P Linv
    pli = [
        [
            _simp_add(*[expr.mul(pblk[r][a], linv[a][b]) for a in range(2)])
            for b in range(2)
        ]
        for r in range(3)
    ]
    lowleft = [
        [
            expr.simplify(
                expr.neg(_simp_add(*[expr.mul(cinv[i][r], pli[r][b]) for r in range(3)]))
            )
            for b in range(2)
        ]
        for i in range(3)
    ]
    minv = [
        [linv[0][0], linv[0][1], _ZERO, _ZERO, _ZERO],
        [linv[1][0], linv[1][1], _ZERO, _ZERO, _ZERO],
    ] + [
        [lowleft[i][0], lowleft[i][1], cinv[i][0], cinv[i][1], cinv[i][2]]
        for i in range(3)
    ]

    alpha = tuple(
        tuple(
            _simp_add(
                *[
                    expr.mul(minv[k][i], alpha_r[k][a])
                    for k in range(5)
                    if not _is_zero(minv[k][i])
                ]
            )
            for a in range(5)
        )
        for i in range(5)
    )
    c = [[[_ZERO for _ in range(5)] for _ in range(5)] for _ in range(5)]
    for i in range(5):
        for j in range(i + 1, 5):
            br = _brk(coords, rfields, c_r, mrows[i], mrows[j])
            for k in range(5):
                e = _simp_add(
                    *[
                        expr.mul(br[a], minv[a][k])
                        for a in range(5)
                        if not _is_zero(br[a])
                    ]
                )
                c[i][j][k] = e
                c[j][i][k] = expr.simplify(expr.neg(e))
    return alpha, c


def _bracket_frame(m: FramedManifold, x1, x2):
    """The five iterated-bracket fields and their auxiliary frame.

    The auxiliary frame carries precomputed coframe and structure functions
    from :func:`_frame_calculus`.
    """
    if (x1 is None) != (x2 is None):
        raise ManifoldError("provide both horizontal fields or neither")
    if x1 is None:
        x1, x2 = _gram_schmidt_horizontal(m)
    x3 = bracket(x1, x2)
    x4 = bracket(x1, x3)
    x5 = bracket(x2, x3)
    fields = (x1, x2, x3, x4, x5)
    aux = FramedManifold(
        m.coords,
        [list(f.components) for f in fields],
        m.rank,
        structure_class=m.structure_class,
    )
    alpha, c = _frame_calculus(m, fields)
    aux._frame_inverse = alpha
    aux._structure_functions = c
    return fields, aux


# ---------------------------------------------------------------------------
# frame pipeline


@dataclass
class Frame235:
    """Iterated-bracket frame with the frame-independent corrected fields."""

    manifold: FramedManifold
    fields: tuple  # X_1..X_5
    aux: FramedManifold  # framed manifold over X_1..X_5
    c: tuple  # structure functions of the bracket frame
    z: VectorField
    y1: VectorField
    y2: VectorField
    derivative_reading: str
    srows: tuple = field(default=None, repr=False)
    sinv: tuple = field(default=None, repr=False)
    _grading: Grading = field(default=None, repr=False)

    @property
    def grading(self) -> Grading:
        if self._grading is None:
            g = Grading(
                self.manifold,
                [(self.fields[0], self.fields[1]), (self.z,), (self.y1, self.y2)],
            )
            _seed_grading(
                g,
                self.srows,
                self.sinv,
                frame_inverse(self.aux),
                self.manifold.coords,
                self.fields,
                structure_functions(self.aux),
            )
            self._grading = g
        return self._grading


def canonical_frame_235(m: FramedManifold, x1: VectorField = None,
                        x2: VectorField = None, sample_points=None,
                        derivative_reading: str = "pattern") -> Frame235:
    """Corrected adapted frame of a growth (2,3,5) horizontal bundle.

    ``Z`` corrects the first bracket field by horizontal terms and ``Y_1``,
    ``Y_2`` correct the second-layer bracket fields by ``Z`` and horizontal
    terms, using the structure functions of the bracket frame and their
    horizontal derivatives.  The construction makes ``Z`` and the span of
    ``Y_1, Y_2`` independent of the choice of oriented orthonormal
    horizontal frame.

    ``derivative_reading`` selects which second-layer coefficient sum is
    differentiated in the ``Y_2`` correction: ``"pattern"`` uses the same sum
    that multiplies ``Z`` (mirroring the ``Y_1`` formula), ``"printed"`` uses
    the variant with both indices on the last bracket field.  The pattern
    reading is the one that passes the frame-independence tests.
    """
    if sample_points is None:
        sample_points = _default_samples(m)
    _check_growth(m, sample_points)
    fields, aux = _bracket_frame(m, x1, x2)
    try:
        aux.frame_matrix_at(aux.point(sample_points[0]))
    except ManifoldError as exc:
        raise ManifoldError(f"bracket frame is rank deficient: {exc}") from exc
    if derivative_reading not in ("pattern", "printed"):
        raise ManifoldError(
            "derivative_reading must be 'pattern' or 'printed'"
        )
    c = structure_functions(aux)
    coords = m.coords
    x1f, x2f, x3f, x4f, x5f = fields

    def der(i, f):
        return _dderiv(coords, fields[i], f)

    # two recurring horizontal-coefficient sums of the second layer
    p_sum = _simp_add(c[0][3][3], c[0][4][4])
    s_sum = _simp_add(c[1][3][3], c[1][4][4])

    zc1 = _simp_add(c[1][2][2], s_sum)
    zc2 = _simp_add(c[0][2][2], p_sum)
    z = x3f + x1f.scaled(zc1) - x2f.scaled(zc2)

    y1c1 = _simp_add(
        c[1][3][2],
        expr.neg(der(1, p_sum)),
        expr.mul(c[1][3][3], p_sum),
        expr.mul(c[1][3][4], s_sum),
    )
    y1c2 = _simp_add(
        c[0][3][2],
        expr.neg(der(0, p_sum)),
        expr.mul(c[0][3][3], p_sum),
        expr.mul(c[0][3][4], s_sum),
    )
    y1 = x4f - z.scaled(p_sum) + x1f.scaled(y1c1) - x2f.scaled(y1c2)

    if derivative_reading == "pattern":
        d_arg = s_sum
    else:
        d_arg = _simp_add(c[1][4][3], c[1][4][4])
    y2c1 = _simp_add(
        c[1][4][2],
        expr.neg(der(1, d_arg)),
        expr.mul(c[1][4][3], p_sum),
        expr.mul(c[1][4][4], s_sum),
    )
    y2c2 = _simp_add(
        c[0][4][2],
        expr.neg(der(0, d_arg)),
        expr.mul(c[0][4][3], p_sum),
        expr.mul(c[0][4][4], s_sum),
    )
    y2 = x5f - z.scaled(s_sum) + x1f.scaled(y2c1) - x2f.scaled(y2c2)

    srows = (
        (_ONE, _ZERO, _ZERO, _ZERO, _ZERO),
        (_ZERO, _ONE, _ZERO, _ZERO, _ZERO),
        (zc1, expr.simplify(expr.neg(zc2)), _ONE, _ZERO, _ZERO),
        (
            _simp_add(y1c1, expr.neg(expr.mul(p_sum, zc1))),
            _simp_add(expr.neg(y1c2), expr.mul(p_sum, zc2)),
            expr.simplify(expr.neg(p_sum)),
            _ONE,
            _ZERO,
        ),
        (
            _simp_add(y2c1, expr.neg(expr.mul(s_sum, zc1))),
            _simp_add(expr.neg(y2c2), expr.mul(s_sum, zc2)),
            expr.simplify(expr.neg(s_sum)),
            _ZERO,
            _ONE,
        ),
    )
    sinv = tuple(tuple(row) for row in _unit_lower_inverse(srows))
    return Frame235(m, fields, aux, c, z, y1, y2, derivative_reading, srows, sinv)


def grading_235(f: Frame235) -> Grading:
    """Splitting by the corrected frame: E, span{Z}, span{Y_1, Y_2}."""
    return f.grading


# nonzero entries of the frame rotation generator D, as (out, in): sign;
# D rotates the horizontal plane by J, kills the degree -2 direction, and
# rotates the degree -3 plane compatibly with the lifts
_DENTRIES = {(0, 1): -1, (1, 0): 1, (3, 4): -1, (4, 3): 1}


def _rotation_connection(grading: Grading, nu_vals) -> Connection:
    """Connection whose value in every direction is a multiple of D.

    ``nu_vals[i]`` scales the rotation generator along the i-th adapted
    field.  Because all the Christoffel operators commute (they are
    multiples of one generator), torsion and curvature have closed forms:
    the torsion pairs the scaling one-form against D minus the structure
    functions, and the curvature is the exterior derivative of the scaling
    one-form times D.  Both tensors are installed on the connection.
    """
    n = grading.dim
    cbar = grading.structure_functions()
    coords = grading.base.coords
    fields = grading.fields
    gamma = [[[_ZERO for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for i in range(n):
        nv = nu_vals[i]
        nneg = expr.simplify(expr.neg(nv))
        # gamma[i][j][k] = nu_i * D[k][j]
        gamma[i][0][1] = nv
        gamma[i][1][0] = nneg
        gamma[i][3][4] = nv
        gamma[i][4][3] = nneg
    conn = Connection(grading, gamma)

    tten = [[[None for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                terms = []
                if not _is_zero(cbar[i][j][k]):
                    terms.append(expr.neg(cbar[i][j][k]))
                dkj = _DENTRIES.get((k, j))
                if dkj and not _is_zero(nu_vals[i]):
                    terms.append(expr.mul(nu_vals[i], expr.rational(dkj)))
                dki = _DENTRIES.get((k, i))
                if dki and not _is_zero(nu_vals[j]):
                    terms.append(expr.mul(nu_vals[j], expr.rational(-dki)))
                tten[i][j][k] = _simp_add(*terms)
    conn._torsion = tuple(tuple(tuple(r) for r in row) for row in tten)

    dnu = [[_ZERO for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            e = _simp_add(
                _dderiv(coords, fields[i], nu_vals[j]),
                expr.neg(_dderiv(coords, fields[j], nu_vals[i])),
                *[
                    expr.neg(expr.mul(cbar[i][j][k], nu_vals[k]))
                    for k in range(n)
                    if not _is_zero(cbar[i][j][k]) and not _is_zero(nu_vals[k])
                ],
            )
            dnu[i][j] = e
            dnu[j][i] = expr.simplify(expr.neg(e))
    rten = [
        [
            [
                [
                    expr.mul(dnu[i][j], expr.rational(_DENTRIES[(l, k)]))
                    if (l, k) in _DENTRIES and not _is_zero(dnu[i][j])
                    else _ZERO
                    for l in range(n)
                ]
                for k in range(n)
            ]
            for j in range(n)
        ]
        for i in range(n)
    ]
    conn._curvature = tuple(
        tuple(tuple(tuple(r) for r in rk) for rk in row) for row in rten
    )
    return conn


def _adapted_lambda(grading: Grading):
    """Generator coefficients of the adapted metric connection.

    In an orthonormal adapted frame the horizontal block of the connection
    is skew, hence a multiple of the rotation generator in every direction:
    the Koszul combination along horizontal directions, the half-skew
    bracket combination along vertical ones.  The degree -3 block mirrors
    the horizontal block.  Returned are the multiples of D along each
    adapted field.
    """
    cbar = grading.structure_functions()
    lam = []
    for i in range(grading.dim):
        # the Koszul value of gamma[i][0][1] equals nu_i * D[1][0] = nu_i
        val = _simp_add(cbar[i][0][1], expr.neg(cbar[i][1][0]))
        if i < 2:
            val = _simp_add(val, expr.neg(cbar[0][1][i]))
        lam.append(expr.simplify(expr.mul(_HALF, val)))
    return lam


def _adapted_connection(grading: Grading) -> Connection:
    """Metric connection adapted to a three-layer splitting of this shape.

    Horizontal directions differentiate by the horizontal part of the
    Levi-Civita connection of the taming metric; directions of degree -2 and
    -3 use the bracket-plus-metric-drift rule.  The middle field is parallel
    and the degree -3 block mirrors the horizontal block, which makes all
    three layers parallel and the frame metric covariant constant.
    """
    return _rotation_connection(grading, _adapted_lambda(grading))


def connection_235(f: Frame235) -> Connection:
    """Adapted metric connection of the corrected frame splitting."""
    return _adapted_connection(f.grading)


@dataclass
class Flatness235Report:
    flat: bool
    torsion_residual: float
    curvature_residual: float


def flatness_235(m: FramedManifold, x1: VectorField = None,
                 x2: VectorField = None, sample_points=None,
                 tol: float = 1e-8,
                 derivative_reading: str = "pattern") -> Flatness235Report:
    """Local equivalence with the nilpotent model group.

    Flat exactly when the curvature of the adapted connection vanishes and
    the torsion has no components beyond the model pattern ``T(X_2, X_1) =
    Z`` and ``T(Z, X_j) = Y_j`` in the corrected frame.
    """
    if sample_points is None:
        sample_points = _default_samples(m)
    f = canonical_frame_235(m, x1, x2, sample_points=sample_points,
                            derivative_reading=derivative_reading)
    conn = connection_235(f)
    n = 5
    expected = np.zeros((n, n, n))
    expected[1, 0, 2] = 1.0
    expected[0, 1, 2] = -1.0
    for j in range(2):
        expected[2, j, 3 + j] = 1.0
        expected[j, 2, 3 + j] = -1.0
    worst_t = 0.0
    worst_r = 0.0
    for point in sample_points:
        p = f.grading.frame.point(point)
        tten = conn.torsion_at(p)
        rten = conn.curvature_at(p)
        worst_t = max(worst_t, float(np.abs(tten - expected).max()))
        worst_r = max(worst_r, float(np.abs(rten).max()))
    return Flatness235Report(
        flat=bool(worst_t <= tol and worst_r <= tol),
        torsion_residual=worst_t,
        curvature_residual=worst_r,
    )


# ---------------------------------------------------------------------------
# grading pipeline


@dataclass
class Intrinsic235:
    """Complementary grading recovered from differential forms alone.

    ``theta`` annihilates the degree -1 and -3 subbundles and is normalized
    against the first bracket field; ``beta1``/``beta2`` cut out the
    complement of the horizontal bundle.  The degree -2 direction ``zp`` is
    normalized by ``theta(zp) = 1``.
    """

    manifold: FramedManifold
    x: tuple  # bracket frame X_1..X_5
    aux: FramedManifold
    alpha: tuple  # coframe rows of the bracket frame
    c: tuple  # structure functions of the bracket frame
    a1: object
    a2: object
    theta: tuple  # coordinate components
    beta1: tuple
    beta2: tuple
    zp: VectorField
    wp: tuple  # basis fields of the degree -3 subbundle
    grading: Grading
    srows: tuple = field(default=None, repr=False)
    sinv: tuple = field(default=None, repr=False)


def intrinsic_frame_235(m: FramedManifold, x1: VectorField = None,
                        x2: VectorField = None, sample_points=None) -> Intrinsic235:
    """Recover the complementary grading from the structure two-form.

    The top coframe wedge of the bracket frame is differentiated to extract
    the correction coefficients of ``theta``; the kernels of ``d theta``
    contracted with the horizontal fields then intersect the flag subbundles
    in the degree -2 and -3 layers.  All pairings are expanded through the
    structure functions of the bracket frame.
    """
    if sample_points is None:
        sample_points = _default_samples(m)
    _check_growth(m, sample_points)
    fields, aux = _bracket_frame(m, x1, x2)
    try:
        aux.frame_matrix_at(aux.point(sample_points[0]))
    except ManifoldError as exc:
        raise ManifoldError(f"bracket frame is rank deficient: {exc}") from exc
    coords = m.coords
    n = m.dim
    alpha = frame_inverse(aux)
    c = structure_functions(aux)

    # exterior derivative of the top coframe wedge against the frame: only
    # the diagonal second-layer structure functions survive the wedge
    a1 = expr.simplify(expr.neg(_simp_add(c[0][3][3], c[0][4][4])))
    a2 = expr.simplify(expr.neg(_simp_add(c[1][3][3], c[1][4][4])))

    # values of theta on the bracket frame (exact by coframe duality)
    theta_vals = (_ZERO, _ZERO, _ONE, expr.simplify(expr.neg(a1)),
                  expr.simplify(expr.neg(a2)))

    def dth_frame(i, j):
        """d theta on the i-th and j-th bracket fields."""
        return _simp_add(
            _dderiv(coords, fields[i], theta_vals[j]),
            expr.neg(_dderiv(coords, fields[j], theta_vals[i])),
            *[
                expr.neg(expr.mul(c[i][j][k], theta_vals[k]))
                for k in range(n)
                if not _is_zero(c[i][j][k]) and not _is_zero(theta_vals[k])
            ],
        )

    b1 = [dth_frame(1, j) for j in range(n)]
    b2 = [expr.simplify(expr.neg(dth_frame(0, j))) for j in range(n)]

    theta = tuple(
        _simp_add(
            alpha[2][a],
            expr.neg(expr.mul(a1, alpha[3][a])),
            expr.neg(expr.mul(a2, alpha[4][a])),
        )
        for a in range(n)
    )
    beta1 = tuple(
        _simp_add(*[expr.mul(b1[k], alpha[k][a]) for k in range(n)
                    if not _is_zero(b1[k])])
        for a in range(n)
    )
    beta2 = tuple(
        _simp_add(*[expr.mul(b2[k], alpha[k][a]) for k in range(n)
                    if not _is_zero(b2[k])])
        for a in range(n)
    )

    # the kernel conditions are diagonal: each beta pairs the opposite
    # horizontal field to zero, so each correction divides one pairing
    dinv1 = expr.simplify(expr.div(_ONE, b1[0]))
    dinv2 = expr.simplify(expr.div(_ONE, b2[1]))

    # degree -2 direction: kernel of both betas inside the first flag layer
    u0 = expr.simplify(expr.neg(expr.mul(b1[2], dinv1)))
    u1 = expr.simplify(expr.neg(expr.mul(b2[2], dinv2)))
    zp = fields[2] + fields[0].scaled(u0) + fields[1].scaled(u1)

    # degree -3 basis: kernel of both betas inside the kernel of theta
    wp = []
    vrows = []
    for j, coef in ((3, a1), (4, a2)):
        v0 = expr.simplify(
            expr.neg(
                expr.mul(_simp_add(b1[j], expr.mul(coef, b1[2])), dinv1)
            )
        )
        v1 = expr.simplify(
            expr.neg(
                expr.mul(_simp_add(b2[j], expr.mul(coef, b2[2])), dinv2)
            )
        )
        vrows.append((v0, v1))
        wp.append(
            fields[j]
            + fields[2].scaled(coef)
            + fields[0].scaled(v0)
            + fields[1].scaled(v1)
        )

    srows = (
        (_ONE, _ZERO, _ZERO, _ZERO, _ZERO),
        (_ZERO, _ONE, _ZERO, _ZERO, _ZERO),
        (u0, u1, _ONE, _ZERO, _ZERO),
        (vrows[0][0], vrows[0][1], a1, _ONE, _ZERO),
        (vrows[1][0], vrows[1][1], a2, _ZERO, _ONE),
    )
    sinv = tuple(tuple(row) for row in _unit_lower_inverse(srows))

    grading = Grading(m, [(fields[0], fields[1]), (zp,), tuple(wp)])
    _seed_grading(grading, srows, sinv, alpha, coords, fields, c)
    return Intrinsic235(
        m, fields, aux, alpha, c, a1, a2, theta, beta1, beta2, zp, tuple(wp),
        grading, srows, sinv,
    )


def intrinsic_grading_235(m: FramedManifold, x1: VectorField = None,
                          x2: VectorField = None, sample_points=None) -> Grading:
    """Grading of the tangent bundle recovered from differential forms."""
    return intrinsic_frame_235(m, x1, x2, sample_points).grading


# rotation generator on the horizontal plane: J X_1 = X_2, J X_2 = -X_1
# ([out][in] entries).  The sign is pinned by the orientation convention:
# with the degree -2 direction normalized along +[X_1, X_2], the vertical
# one-form theta satisfies d theta(u, v) = <u, J v> on horizontal u, v.
_JMAT = ((0.0, -1.0), (1.0, 0.0))


def _jexpr():
    return [
        [expr.rational(int(_JMAT[a][b])) for b in range(2)] for a in range(2)
    ]


@dataclass
class Grading235Params:
    """Normalization data of the canonical grading.

    ``upsilon`` is the obstruction field (the quarter trace of the mixed
    bracket defect of the lifts); ``w1`` and ``w2`` are the solved degree -2
    and degree -3 lift corrections, which agree with the obstruction field
    to leading order in the deviation from the model algebra and vanish with
    it.  ``amat[j][k]`` is the horizontal pairing of the degree -3
    correction endomorphism on the j-th frame field against the k-th.
    ``dmat`` is the rotation generator of the pointwise isometry algebra: it
    rotates the horizontal plane, kills the degree -2 direction, and rotates
    the degree -3 plane compatibly with the lifts.
    """

    manifold: FramedManifold
    intrinsic: Intrinsic235
    upsilon: VectorField
    ups: tuple  # horizontal components of upsilon
    jups: tuple  # horizontal components of the rotated obstruction field
    w1: VectorField
    w2: VectorField
    amat: tuple  # 2x2 Expr matrix
    z_field: VectorField
    ell_fields: tuple
    grading: Grading
    mu1: tuple  # coordinate components of the degree -1 part of mu
    dmat: tuple  # 5x5 float matrix
    mu2: object = None  # scalar value on the degree -2 field (set by the solver)
    mu3: tuple = None  # values on the degree -3 fields (set by the solver)
    mu2_form: tuple = None
    mu3_form: tuple = None
    _connection: Connection = field(default=None, repr=False)


def morimoto_grading_235(m: FramedManifold, x1: VectorField = None,
                         x2: VectorField = None, sample_points=None) -> Grading235Params:
    """Canonical grading of a growth (2,3,5) structure.

    Corrects the form-recovered grading so the canonical connection of the
    result satisfies the torsion and curvature trace normalizations exactly:
    the degree -2 direction is shifted by a rotated horizontal field, and
    the degree -3 lifts are tilted by a vertical shift and a horizontal
    endomorphism.  The corrections are obtained by expanding the structure
    functions of the corrected frame over intrinsic bracket tensors and
    solving the resulting linear systems in closed form; on the model
    algebra every correction vanishes and the grading coincides with the
    form-recovered one.
    """
    data = intrinsic_frame_235(m, x1, x2, sample_points)
    coords = m.coords
    xfields = data.x
    c = data.c
    srows = data.srows
    sinv = data.sinv
    jm = _jexpr()

    def jvec(v):
        """Rotate a horizontal coefficient pair."""
        return [
            _simp_add(expr.mul(jm[0][0], v[0]), expr.mul(jm[0][1], v[1])),
            _simp_add(expr.mul(jm[1][0], v[0]), expr.mul(jm[1][1], v[1])),
        ]

    def brk(u, w):
        return _brk(coords, xfields, c, u, w)

    def evec(a, b):
        return [a, b, _ZERO, _ZERO, _ZERO]

    def ellx(a, b):
        """Bracket-frame coefficients of the degree -3 lift of a*X_1 + b*X_2."""
        return [
            _simp_add(expr.mul(b, srows[3][k]), expr.neg(expr.mul(a, srows[4][k])))
            for k in range(5)
        ]

    def phix(v):
        """Horizontal image of a coefficient vector under the flag map."""
        return [
            expr.simplify(expr.neg(_frame_comp(v, sinv, 4))),
            _frame_comp(v, sinv, 3),
        ]

    def pr1(v):
        """Horizontal part of a coefficient vector in the form grading."""
        return [_frame_comp(v, sinv, 0), _frame_comp(v, sinv, 1)]

    # obstruction field: quarter trace of the mixed bracket defect of the lifts
    ju_terms = [[], []]
    for e in range(2):
        base = [_ONE if i == e else _ZERO for i in range(5)]
        jb = jvec([base[0], base[1]])
        jbase = evec(*jb)
        t1 = ellx(*pr1(brk(base, jbase)))
        t2 = brk(base, ellx(*jb))
        t3 = brk(ellx(base[0], base[1]), jbase)
        total = [
            _simp_add(t1[k], expr.neg(t2[k]), expr.neg(t3[k])) for k in range(5)
        ]
        ph = phix(total)
        for k in range(2):
            ju_terms[k].append(ph[k])
    jups = [
        expr.simplify(expr.mul(expr.rational(1, 4), _simp_add(*ju_terms[k])))
        for k in range(2)
    ]
    # invert the rotation: upsilon = -J(J upsilon)
    ups = [expr.simplify(expr.neg(cc)) for cc in jvec(jups)]
    upsilon = _field_from_coeffs(m, xfields[:2], ups)

    # ---- intrinsic tensors of the lift geometry -------------------------
    # p pairs the flag image of brackets of horizontal fields with the
    # degree -2 direction against the horizontal frame; phi does the same
    # for brackets against the degree -3 lifts; xi for brackets of the
    # degree -2 direction with the lifts; cp and b are the horizontal parts
    # of the basic brackets.
    e_rows = [evec(_ONE, _ZERO), evec(_ZERO, _ONE)]
    zp_row = list(srows[2])
    ell_rows = [ellx(_ONE, _ZERO), ellx(_ZERO, _ONE)]
    p_t = [phix(brk(e_rows[j], zp_row)) for j in range(2)]
    phi_t = [
        [phix(brk(e_rows[a], ell_rows[j])) for j in range(2)] for a in range(2)
    ]
    xi_t = [phix(brk(zp_row, ell_rows[j])) for j in range(2)]
    cp_t = [_frame_comp(brk(e_rows[0], e_rows[1]), sinv, k) for k in range(2)]
    b_t = [
        [_frame_comp(brk(e_rows[e], zp_row), sinv, k) for k in range(2)]
        for e in range(2)
    ]

    # ---- first correction block: rotated shift pairs --------------------
    # The normalization conditions that avoid the degree -3 endomorphism
    # (torsion on the degree -2 selector against horizontal fields, torsion
    # on degree -3 selectors against the degree -2 field, and the curvature
    # trace on horizontal selector wedges) close up into a linear system for
    # the rotated horizontal components of the two lift corrections.
    f_t = [
        _simp_add(phi_t[v][0][1], expr.neg(phi_t[v][1][0])) for v in range(2)
    ]
    g_t = [
        _simp_add(
            *[
                expr.mul(phi_t[e][j][k], p_t[e][k])
                for e in range(2)
                for k in range(2)
            ]
        )
        for j in range(2)
    ]
    psq = _simp_add(
        *[expr.mul(p_t[e][k], p_t[e][k]) for e in range(2) for k in range(2)]
    )
    rhs1 = [
        _simp_add(f_t[0], expr.mul(expr.rational(2), cp_t[0])),
        _simp_add(f_t[1], expr.mul(expr.rational(2), cp_t[1])),
        _simp_add(
            g_t[0],
            expr.mul(cp_t[0], p_t[0][1]),
            expr.mul(cp_t[1], p_t[1][1]),
        ),
        _simp_add(
            g_t[1],
            expr.neg(expr.mul(cp_t[0], p_t[0][0])),
            expr.neg(expr.mul(cp_t[1], p_t[1][0])),
        ),
    ]
    r2 = expr.rational(2)
    r5 = expr.rational(5)
    r3 = expr.rational(3)
    mat1 = [
        [
            r5,
            _ZERO,
            _simp_add(expr.mul(r3, p_t[1][0]), expr.neg(p_t[0][1])),
            _simp_add(p_t[0][0], expr.mul(r3, p_t[1][1])),
        ],
        [
            _ZERO,
            r5,
            expr.neg(_simp_add(p_t[1][1], expr.mul(r3, p_t[0][0]))),
            _simp_add(p_t[1][0], expr.neg(expr.mul(r3, p_t[0][1]))),
        ],
        [
            _simp_add(_ONE, expr.mul(r2, p_t[0][1])),
            expr.mul(r2, p_t[1][1]),
            _simp_add(
                p_t[1][0],
                expr.neg(psq),
                expr.mul(p_t[1][0], p_t[0][1]),
                expr.neg(expr.mul(p_t[0][0], p_t[1][1])),
            ),
            p_t[1][1],
        ],
        [
            expr.neg(expr.mul(r2, p_t[0][0])),
            _simp_add(_ONE, expr.neg(expr.mul(r2, p_t[1][0]))),
            expr.neg(p_t[0][0]),
            expr.neg(
                _simp_add(
                    p_t[0][1],
                    psq,
                    expr.mul(p_t[1][1], p_t[0][0]),
                    expr.neg(expr.mul(p_t[0][1], p_t[1][0])),
                )
            ),
        ],
    ]
    sol1 = _solve_linear_exprs(mat1, rhs1)
    w1c = sol1[:2]  # rotated components of the degree -2 shift
    w2c = sol1[2:]  # rotated components of the degree -3 vertical tilt

    def hderiv(j, f):
        return _dderiv(coords, xfields[j], f)

    dw1 = [[hderiv(e, w1c[k]) for k in range(2)] for e in range(2)]
    dw2 = [[hderiv(e, w2c[j]) for j in range(2)] for e in range(2)]
    w2p = [
        _simp_add(expr.mul(w2c[0], p_t[e][0]), expr.mul(w2c[1], p_t[e][1]))
        for e in range(2)
    ]

    # horizontal scaling values of the canonical connection, from the
    # curvature trace normalization (closed form with weight 3)
    nu_e = [
        expr.simplify(
            expr.mul(
                expr.rational(1, 3),
                _simp_add(
                    w1c[e],
                    expr.neg(cp_t[e]),
                    phi_t[e][0][1],
                    expr.neg(phi_t[e][1][0]),
                    expr.mul(w2c[0], p_t[e][1]),
                    expr.neg(expr.mul(w2c[1], p_t[e][0])),
                ),
            )
        )
        for e in range(2)
    ]

    # ---- second correction block: degree -3 endomorphism ----------------
    # The remaining torsion conditions (degree -3 selectors against
    # horizontal fields) couple the endomorphism to the degree -2 scaling
    # value; the curvature trace on the degree -2 selector closes the
    # system.  Each structure function entering the conditions is expanded
    # as an affine function of the endomorphism entries and that scaling,
    # with coefficients built from the intrinsic tensors and the solved
    # shift components.
    def aff(const=_ZERO):
        return [_ZERO, _ZERO, _ZERO, _ZERO, _ZERO, const]

    def aff_sum(*terms):
        return [_simp_add(*[t[i] for t in terms]) for i in range(6)]

    def aff_neg(t):
        return [expr.simplify(expr.neg(ti)) for ti in t]

    def aff_scale(s, t):
        return [expr.simplify(expr.mul(s, ti)) for ti in t]

    # theta values of brackets of horizontal fields with the corrected
    # degree -2 field
    zpr = [w1c[1], expr.neg(w1c[0])]
    # horizontal components of brackets with the corrected degree -2 field
    cbar_e2 = [[None, None], [None, None]]
    for e in range(2):
        for k in range(2):
            cw = expr.mul(w1c[1], cp_t[k]) if e == 0 else expr.neg(
                expr.mul(w1c[0], cp_t[k])
            )
            const = _simp_add(
                b_t[e][k],
                cw,
                dw1[e][k],
                expr.neg(
                    expr.mul(_simp_add(zpr[e], expr.neg(w2p[e])), w1c[k])
                ),
            )
            row = aff(const)
            for mm in range(2):
                row[2 * mm + k] = expr.simplify(expr.neg(p_t[e][mm]))
            cbar_e2[e][k] = row
    # degree -2 components of brackets of the lifts with horizontal fields
    cbar_ye2 = [[None, None], [None, None]]
    for j in range(2):
        for e in range(2):
            w2phi = _simp_add(
                expr.mul(w2c[0], phi_t[e][j][0]),
                expr.mul(w2c[1], phi_t[e][j][1]),
            )
            const = _simp_add(
                expr.neg(dw2[e][j]), w2phi, expr.mul(w2c[j], w2p[e])
            )
            row = aff(const)
            if e == 0:
                row[2 * j + 1] = expr.neg(_ONE)
            else:
                row[2 * j] = _ONE
            cbar_ye2[j][e] = row
    # degree -3 components of brackets of the lifts with the corrected
    # degree -2 field
    cbar_y2y = [[None, None], [None, None]]
    for j in range(2):
        for k in range(2):
            const = _simp_add(
                expr.neg(xi_t[j][k]),
                *[
                    expr.neg(
                        expr.mul(
                            w1c[mm],
                            _simp_add(
                                phi_t[mm][j][k],
                                expr.mul(w2c[j], p_t[mm][k]),
                            ),
                        )
                    )
                    for mm in range(2)
                ],
            )
            row = aff(const)
            for mm in range(2):
                row[2 * j + mm] = p_t[mm][k]
            cbar_y2y[j][k] = row

    # curvature trace data on the degree -2 selector
    qt2 = aff_sum(
        cbar_e2[1][0],
        aff_neg(cbar_e2[0][1]),
        cbar_y2y[1][0],
        aff_neg(cbar_y2y[0][1]),
    )
    dkn2 = _simp_add(
        hderiv(0, nu_e[1]),
        expr.neg(hderiv(1, nu_e[0])),
        expr.neg(expr.mul(_simp_add(cp_t[0], expr.neg(w1c[0])), nu_e[0])),
        expr.neg(expr.mul(_simp_add(cp_t[1], expr.neg(w1c[1])), nu_e[1])),
    )

    nu2aff = aff()
    nu2aff[4] = _ONE
    eqs = [
        aff_sum(
            aff_neg(nu2aff),
            cbar_e2[1][0],
            cbar_ye2[0][1],
            aff_scale(p_t[0][0], cbar_y2y[0][0]),
            aff_scale(p_t[0][1], cbar_y2y[0][1]),
            aff_scale(p_t[0][1], nu2aff),
        ),
        aff_sum(
            cbar_e2[1][1],
            aff_neg(cbar_ye2[0][0]),
            aff_scale(p_t[1][0], cbar_y2y[0][0]),
            aff_scale(p_t[1][1], cbar_y2y[0][1]),
            aff_scale(p_t[1][1], nu2aff),
        ),
        aff_sum(
            aff_neg(cbar_e2[0][0]),
            cbar_ye2[1][1],
            aff_scale(p_t[0][0], cbar_y2y[1][0]),
            aff_scale(p_t[0][1], cbar_y2y[1][1]),
            aff_neg(aff_scale(p_t[0][0], nu2aff)),
        ),
        aff_sum(
            aff_neg(nu2aff),
            aff_neg(cbar_e2[0][1]),
            aff_neg(cbar_ye2[1][0]),
            aff_scale(p_t[1][0], cbar_y2y[1][0]),
            aff_scale(p_t[1][1], cbar_y2y[1][1]),
            aff_neg(aff_scale(p_t[1][0], nu2aff)),
        ),
        aff_sum(
            [
                _ZERO,
                _ZERO,
                _ZERO,
                _ZERO,
                expr.rational(8),
                expr.mul(expr.rational(-4), dkn2),
            ],
            aff_neg(qt2),
        ),
    ]
    mat2 = [[eqs[i][j] for j in range(5)] for i in range(5)]
    rhs2 = [expr.simplify(expr.neg(eqs[i][5])) for i in range(5)]
    sol2 = _solve_linear_exprs(mat2, rhs2)
    amat = [[sol2[0], sol2[1]], [sol2[2], sol2[3]]]

    z_field = data.zp + _field_from_coeffs(m, xfields[:2], w1c)

    # adapted rows of the corrected fields over the bracket frame; the lift
    # block rotates the degree -3 plane, so the inverse composes the layered
    # unitriangular inverse with the closed-form inverse of that rotation
    tmat = [
        [_ONE, _ZERO, _ZERO, _ZERO, _ZERO],
        [_ZERO, _ONE, _ZERO, _ZERO, _ZERO],
        [w1c[0], w1c[1], _ONE, _ZERO, _ZERO],
        [amat[0][0], amat[0][1], w2c[0], _ZERO, expr.neg(_ONE)],
        [amat[1][0], amat[1][1], w2c[1], _ONE, _ZERO],
    ]
    tinv = [
        [_ONE, _ZERO, _ZERO, _ZERO, _ZERO],
        [_ZERO, _ONE, _ZERO, _ZERO, _ZERO],
        [expr.simplify(expr.neg(w1c[0])), expr.simplify(expr.neg(w1c[1])),
         _ONE, _ZERO, _ZERO],
        [
            _simp_add(expr.mul(w2c[1], w1c[0]), expr.neg(amat[1][0])),
            _simp_add(expr.mul(w2c[1], w1c[1]), expr.neg(amat[1][1])),
            expr.simplify(expr.neg(w2c[1])),
            _ZERO,
            _ONE,
        ],
        [
            _simp_add(amat[0][0], expr.neg(expr.mul(w2c[0], w1c[0]))),
            _simp_add(amat[0][1], expr.neg(expr.mul(w2c[0], w1c[1]))),
            w2c[0],
            expr.neg(_ONE),
            _ZERO,
        ],
    ]
    srows_i = tuple(
        tuple(
            _simp_add(
                *[
                    expr.mul(tmat[i][k], srows[k][a])
                    for k in range(5)
                    if not _is_zero(tmat[i][k])
                ]
            )
            for a in range(5)
        )
        for i in range(5)
    )
    sinv_i = tuple(
        tuple(
            _simp_add(
                *[
                    expr.mul(sinv[i][k], tinv[k][a])
                    for k in range(5)
                    if not _is_zero(sinv[i][k])
                ]
            )
            for a in range(5)
        )
        for i in range(5)
    )

    ell_fields = [
        _field_from_coeffs(m, xfields, srows_i[3]),
        _field_from_coeffs(m, xfields, srows_i[4]),
    ]

    grading = Grading(m, [(xfields[0], xfields[1]), (z_field,), tuple(ell_fields)])
    _seed_grading(grading, srows_i, sinv_i, data.alpha, coords, xfields, c)

    finv = grading.coframe()
    # degree -1 part of the scaling form: values on the horizontal frame are
    # the scaling values minus the adapted combination, in closed form
    m_vec = [
        _simp_add(w1c[0], w2p[1]),
        _simp_add(w1c[1], expr.neg(w2p[0])),
    ]
    mu1 = tuple(
        _simp_add(
            expr.mul(m_vec[0], finv[0][a]), expr.mul(m_vec[1], finv[1][a])
        )
        for a in range(m.dim)
    )

    dmat = np.zeros((5, 5))
    dmat[:2, :2] = np.array(_JMAT)
    dmat[3:, 3:] = np.array(_JMAT)

    w1_field = _field_from_coeffs(
        m, xfields[:2], [w1c[1], expr.simplify(expr.neg(w1c[0]))]
    )
    w2_field = _field_from_coeffs(
        m, xfields[:2], [w2c[1], expr.simplify(expr.neg(w2c[0]))]
    )

    return Grading235Params(
        manifold=m,
        intrinsic=data,
        upsilon=upsilon,
        ups=tuple(ups),
        jups=tuple(jups),
        w1=w1_field,
        w2=w2_field,
        amat=tuple(tuple(row) for row in amat),
        z_field=z_field,
        ell_fields=tuple(ell_fields),
        grading=grading,
        mu1=mu1,
        dmat=tuple(map(tuple, dmat)),
    )


def tau_vertical(grading: Grading, v: VectorField):
    """Horizontal metric drift along a field of the two vertical layers.

    Returns the symmetric 2x2 Expr matrix pairing the drift of the taming
    metric along ``v`` against the horizontal frame, halved; this is the
    torsion contribution of vertical directions in the adapted connection.
    """
    m = grading.base
    coords = m.coords
    wf = grading.fields
    ctab = grading.structure_functions()
    comps = grading.components_in_frame(v)
    out = [[None, None], [None, None]]
    for j in range(2):
        ej = [_ONE if i == j else _ZERO for i in range(5)]
        for k in range(2):
            ek = [_ONE if i == k else _ZERO for i in range(5)]
            bj = _brk(coords, wf, ctab, comps, ej)
            bk = _brk(coords, wf, ctab, comps, ek)
            out[j][k] = expr.simplify(
                expr.mul(
                    _HALF,
                    _simp_add(expr.neg(bj[k]), expr.neg(bk[j])),
                )
            )
    return out


@dataclass
class QMap:
    """Defect between bracketing against the lifts and the base connection."""

    data: Intrinsic235
    tensor: tuple  # [i][j][k]: pairing of the value on (X_i, X_j) against X_k

    def __call__(self, x: VectorField, y: VectorField) -> VectorField:
        g = self.data.grading
        xc = g.components_in_frame(x)
        yc = g.components_in_frame(y)
        comps = []
        for k in range(2):
            comps.append(
                _simp_add(
                    *[
                        expr.mul(xc[i], yc[j], self.tensor[i][j][k])
                        for i in range(2)
                        for j in range(2)
                    ]
                )
            )
        return _field_from_coeffs(self.data.manifold, g.fields[:2], comps)


def q_map(data: Intrinsic235) -> QMap:
    """Bracket-versus-connection defect on horizontal fields.

    The value on (X, Y) is the horizontal image of the bracket of X with the
    degree -3 lift of Y, minus the adapted-connection derivative of Y along
    X.  It is tensorial in both slots.
    """
    coords = data.manifold.coords
    xfields = data.x
    c = data.c
    srows = data.srows
    sinv = data.sinv
    conn0 = _adapted_connection(data.grading)
    tensor = []
    for i in range(2):
        ei = [_ONE if a == i else _ZERO for a in range(5)]
        row = []
        for j in range(2):
            if j == 0:
                ell_j = [expr.simplify(expr.neg(srows[4][k])) for k in range(5)]
            else:
                ell_j = list(srows[3])
            br = _brk(coords, xfields, c, ei, ell_j)
            ph = [
                expr.simplify(expr.neg(_frame_comp(br, sinv, 4))),
                _frame_comp(br, sinv, 3),
            ]
            row.append(
                tuple(
                    expr.simplify(expr.sub(ph[k], conn0.gamma[i][j][k]))
                    for k in range(2)
                )
            )
        tensor.append(tuple(row))
    return QMap(data, tuple(tensor))


def morimoto_connection_235(params: Grading235Params) -> Connection:
    """Canonical connection of the canonical grading.

    Every direction of the connection acts as a multiple of the frame
    rotation generator, so the whole connection is a scaling one-form times
    the generator.  The scaling values are solved degree by degree from the
    trace normalization: pairing curvature on the selector wedges against
    the generator must reproduce the torsion trace.  Horizontal selectors
    vanish, so the horizontal values are a third of the torsion trace;
    because bracketing a selector value reproduces its field exactly, each
    vertical unknown enters its own equation with a fixed integer weight and
    the solve is a closed form.
    """
    if params._connection is not None:
        return params._connection
    g = params.grading
    m = params.manifold
    coords = m.coords
    wf = g.fields
    cbar = g.structure_functions()
    lam = _adapted_lambda(g)
    chi = selector(g)

    def qval(v):
        """Trace of the structure functions along one field against D."""
        return _simp_add(
            *[
                expr.mul(expr.rational(s), cbar[v][y][x])
                for (x, y), s in _DENTRIES.items()
                if not _is_zero(cbar[v][y][x])
            ]
        )

    def dform_known(vals, v):
        """Exterior derivative of a partially known scaling on chi(v).

        ``vals`` holds the already solved scaling values; slots still being
        solved carry zero and their contraction terms are accounted for on
        the other side of the equation through the bracket-back property of
        the selector.
        """
        terms = []
        for a, b, coef in chi.coefficients[v]:
            e = _simp_add(
                _dderiv(coords, wf[a], vals[b]),
                expr.neg(_dderiv(coords, wf[b], vals[a])),
                *[
                    expr.neg(expr.mul(cbar[a][b][k], vals[k]))
                    for k in range(5)
                    if not _is_zero(cbar[a][b][k]) and not _is_zero(vals[k])
                ],
            )
            terms.append(expr.mul(coef, e))
        return _simp_add(*terms)

    nu0 = expr.simplify(expr.mul(expr.rational(1, 3), qval(0)))
    nu1 = expr.simplify(expr.mul(expr.rational(1, 3), qval(1)))

    # degree -2: 4 d nu(chi) = 4 nu - q with the unknown's contraction
    # moved left (weight 1), so 8 nu_2 = 4 * known part + q_2
    known = (nu0, nu1, _ZERO, _ZERO, _ZERO)
    nu2 = expr.simplify(
        expr.mul(
            expr.rational(1, 8),
            _simp_add(
                expr.mul(expr.rational(4), dform_known(known, 2)), qval(2)
            ),
        )
    )

    # degree -3: 4 d nu(chi) = 3 nu - q, unknown weight 1: 7 nu_v = 4*known + q_v
    known = (nu0, nu1, nu2, _ZERO, _ZERO)
    nu34 = [
        expr.simplify(
            expr.mul(
                expr.rational(1, 7),
                _simp_add(
                    expr.mul(expr.rational(4), dform_known(known, v)), qval(v)
                ),
            )
        )
        for v in (3, 4)
    ]

    nu = (nu0, nu1, nu2, nu34[0], nu34[1])
    conn = _rotation_connection(g, nu)

    finv = g.coframe()
    mu2 = expr.simplify(expr.sub(nu2, lam[2]))
    mu3 = tuple(expr.simplify(expr.sub(nu34[i], lam[3 + i])) for i in range(2))
    params.mu2 = mu2
    params.mu3 = mu3
    params.mu2_form = tuple(
        expr.simplify(expr.mul(mu2, finv[2][a])) for a in range(m.dim)
    )
    params.mu3_form = tuple(
        _simp_add(expr.mul(mu3[0], finv[3][a]), expr.mul(mu3[1], finv[4][a]))
        for a in range(m.dim)
    )
    params._connection = conn
    return conn
