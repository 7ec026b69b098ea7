"""Contact sub-Riemannian manifolds of constant symbol.

Pipeline: orthonormalize the horizontal frame, build the annihilator
one-form from the frame inverse, normalize it so the largest eigenvalue of
the squared structure operator is one, split the horizontal bundle into
eigenbundles (pointwise numerics promoted to symbolic projector matrices
once the eigenvalues are verified constant), construct the Reeb field, the
grading-fixing horizontal field W, and finally the projected/corrected
connections whose curvature correction yields the canonical connection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr
from .expr import Expr
from .connection import Connection, Grading, selector
from .manifold import (
    FramedManifold,
    ManifoldError,
    VectorField,
    bracket,
    frame_inverse,
    growth_flag,
    structure_functions,
)

__all__ = [
    "ContactData",
    "ContactGradingParams",
    "extract_contact_data",
    "upsilon_fields",
    "morimoto_grading_contact",
    "connection_prime",
    "connection_double_prime",
    "morimoto_connection_contact",
]

_ZERO = expr.rational(0)
_HALF = expr.rational(1, 2)


def _simp_add(*terms):
    return expr.simplify(expr.add(*terms))


def _default_samples(m: FramedManifold, count: int = 10, seed: int = 42):
    rng = np.random.default_rng(seed)
    return [
        {c: float(v) for c, v in zip(m.coords, rng.uniform(-0.9, 0.9, m.dim))}
        for _ in range(count)
    ]


def _gram_schmidt_horizontal(m: FramedManifold):
    """Orthonormalize the horizontal frame symbolically; returns VectorFields."""
    r = m.rank
    # coefficient vectors over the original horizontal frame
    basis = [[expr.rational(1 if j == i else 0) for j in range(r)] for i in range(r)]

    def inner(u, v):
        return _simp_add(
            *[
                expr.mul(u[i], m.metric[i][j], v[j])
                for i in range(r)
                for j in range(r)
            ]
        )

    ortho = []
    for i in range(r):
        vec = list(basis[i])
        for prev in ortho:
            coef = inner(vec, prev)
            vec = [
                _simp_add(vec[j], expr.neg(expr.mul(coef, prev[j]))) for j in range(r)
            ]
        nrm = expr.sqrt(inner(vec, vec))
        inv = expr.pow_(nrm, -1)
        ortho.append([expr.simplify(expr.mul(inv, c)) for c in vec])
    fields = []
    for coeffs in ortho:
        comps = [
            _simp_add(
                *[expr.mul(coeffs[i], m.frames[i].components[a]) for i in range(r)]
            )
            for a in range(m.dim)
        ]
        fields.append(VectorField(m, comps))
    return fields


def _cluster_descending(values, tol=1e-6):
    """Group a descending array into clusters of relative width tol."""
    groups = []
    for v in values:
        if groups and abs(groups[-1][-1] - v) <= tol * max(abs(values[0]), 1.0):
            groups[-1].append(v)
        else:
            groups.append([v])
    return [(float(np.mean(g)), len(g)) for g in groups]


@dataclass
class ContactData:
    """Normalized contact structure data on a constant-symbol manifold."""

    manifold: FramedManifold
    ortho_frame: tuple  # orthonormal horizontal VectorFields
    vertical: VectorField  # oriented bracket complement direction
    aux: FramedManifold  # frame (ortho..., vertical)
    theta: tuple  # normalized one-form, coordinate components (Expr)
    scale: Expr  # factor between theta and the raw coframe row
    jtheta: tuple  # structure operator on E, Expr matrix
    lam_op: tuple  # eigenvalue parameters, ascending, lam_op[0] == 1
    multiplicities: tuple  # dimensions of the eigenbundles
    lam: tuple  # symbol normal form (one entry per symplectic pair)
    projections: tuple  # eigenbundle projector Expr matrices
    lam_matrix: tuple  # Lambda as Expr matrix on E
    lam_inv_matrix: tuple
    jmat: tuple  # J = Lambda J^theta, Expr matrix on E
    reeb: VectorField  # Z^0
    reeb_coeffs: tuple  # Z^0 in aux-frame coefficients (Expr, length 2n+1)

    @property
    def rank(self) -> int:
        return self.manifold.rank

    def theta_of(self, v: VectorField) -> Expr:
        return _simp_add(
            *[expr.mul(self.theta[a], v.components[a]) for a in range(self.manifold.dim)]
        )


def _matmul(a, b):
    n = len(a)
    mcols = len(b[0])
    inner = len(b)
    return [
        [
            _simp_add(*[expr.mul(a[i][k], b[k][j]) for k in range(inner)])
            for j in range(mcols)
        ]
        for i in range(n)
    ]


def _matscale(s, a):
    return [[expr.simplify(expr.mul(s, e)) for e in row] for row in a]


def _matadd(*mats):
    n = len(mats[0])
    m = len(mats[0][0])
    return [
        [_simp_add(*[mat[i][j] for mat in mats]) for j in range(m)] for i in range(n)
    ]


def _eval_matrix(mat, p, cache) -> np.ndarray:
    return np.array([[expr._eval(e, p, cache) for e in row] for row in mat])


def extract_contact_data(m: FramedManifold, sample_points=None, orientation: int = 1) -> ContactData:
    """Normalize the contact structure of a constant-symbol manifold.

    The annihilator direction is the bracket of the first two horizontal
    frame fields (``orientation=-1`` flips it, for invariance testing); the
    one-form is scaled so the top eigenvalue of the squared structure
    operator is one.  Eigenvalues are computed numerically at the sample
    points, verified constant, and the eigenbundle projectors are then
    rebuilt as symbolic polynomial expressions in the structure operator.
    """
    if m.structure_class != "contact":
        raise ManifoldError("manifold is not declared as a contact structure")
    if sample_points is None:
        sample_points = _default_samples(m)
    r = m.rank
    if r % 2 != 0 or m.dim != r + 1:
        raise ManifoldError(
            f"contact structure needs even horizontal rank and one extra "
            f"dimension, got rank {r} in dimension {m.dim}"
        )
    flag = growth_flag(m, m.point(sample_points[0]), 2)
    if flag != (r, r + 1):
        raise ManifoldError(f"not a contact structure: growth flag {flag}")

    fields = _gram_schmidt_horizontal(m)
    # vertical complement: the first pair of horizontal frame fields whose
    # bracket leaves the horizontal bundle (for most inputs, [X_1, X_2])
    vert_raw = None
    base = m.point(sample_points[0])
    fmat = np.column_stack([f.value_at(base) for f in fields])
    for i in range(r):
        if vert_raw is not None:
            break
        for j in range(i + 1, r):
            cand = bracket(m.frames[i], m.frames[j])
            trial = np.column_stack([fmat, cand.value_at(base)])
            if abs(np.linalg.det(trial)) > 1e-9:
                vert_raw = cand
                break
    if vert_raw is None:
        raise ManifoldError(
            "no horizontal bracket complements the horizontal bundle"
        )
    if orientation not in (1, -1):
        raise ManifoldError("orientation must be +1 or -1")
    if orientation == -1:
        vert_raw = vert_raw.scaled(expr.rational(-1))
    aux = FramedManifold(
        m.coords,
        [f.components for f in fields] + [vert_raw.components],
        r,
        structure_class=m.structure_class,
    )
    caux = structure_functions(aux)
    v = r  # index of the vertical frame slot

    # raw annihilator one-form: the vertical coframe row
    finv = frame_inverse(aux)
    theta_raw = tuple(finv[v])

    # structure coefficients of the raw form: dtheta_raw(F_a, F_b)
    dmat = [
        [expr.simplify(expr.neg(caux[a][b][v])) for b in range(r)] for a in range(r)
    ]

    # pointwise eigen data of -(D^2)
    clusters0 = None
    ratios0 = None
    for point in sample_points:
        p = m.point(point)
        cache: dict = {}
        dnum = _eval_matrix(dmat, p, cache)
        msq = -dnum @ dnum
        eigs = np.linalg.eigvalsh(msq)[::-1]
        if eigs[0] <= 0 or eigs[-1] <= 1e-9 * eigs[0]:
            raise ManifoldError("degenerate structure form on the horizontal bundle")
        clusters = _cluster_descending(eigs / eigs[0])
        if clusters0 is None:
            clusters0 = clusters
            ratios0 = tuple(c for c, _ in clusters)
        else:
            if tuple(n for _, n in clusters) != tuple(n for _, n in clusters0):
                raise ManifoldError(
                    "eigenvalue multiplicities change across samples; "
                    "the symbol is not constant"
                )
            if max(abs(c - c0) for (c, _), c0 in zip(clusters, ratios0)) > 1e-6:
                raise ManifoldError(
                    "eigenvalue ratios change across samples; "
                    "the symbol is not constant"
                )
    nus = ratios0  # descending, nus[0] == 1.0
    mults = tuple(n for _, n in clusters0)
    if any(n % 2 for n in mults):
        raise ManifoldError("odd eigenbundle dimension; structure operator corrupt")
    lam_op = tuple(float(nu) ** -0.5 for nu in nus)  # ascending from 1
    lam = tuple(
        lo**0.5 for lo, n in zip(lam_op, mults) for _ in range(n // 2)
    )

    # normalization scale: theta = t * theta_raw with
    # t^2 * tr(-D^2) = tr(Lambda^{-2})
    tr_lam = float(sum(n * lo**-2.0 for lo, n in zip(lam_op, mults)))
    tr_d = _simp_add(
        *[expr.mul(dmat[a][b], dmat[a][b]) for a in range(r) for b in range(r)]
    )
    t = expr.sqrt(expr.simplify(expr.div(expr.floatc(tr_lam), tr_d)))
    theta = tuple(expr.simplify(expr.mul(t, e)) for e in theta_raw)
    jtheta = _matscale(t, dmat)

    # projectors: Lagrange polynomials in Msq = -(J^theta)^2
    msq_expr = _matscale(
        expr.neg(expr.mul(t, t)), _matmul(dmat, dmat)
    )
    eye = [
        [expr.rational(1 if i == j else 0) for j in range(r)] for i in range(r)
    ]
    projections = []
    for j, nu_j in enumerate(nus):
        mat = eye
        for i, nu_i in enumerate(nus):
            if i == j:
                continue
            shifted = _matadd(msq_expr, _matscale(expr.floatc(-nu_i), eye))
            mat = _matscale(expr.floatc(1.0 / (nu_j - nu_i)), _matmul(mat, shifted))
        projections.append(tuple(tuple(row) for row in mat))
    projections = tuple(projections)

    lam_matrix = _matadd(
        *[_matscale(expr.floatc(lo), list(map(list, pr))) for lo, pr in zip(lam_op, projections)]
    )
    lam_inv_matrix = _matadd(
        *[
            _matscale(expr.floatc(1.0 / lo), list(map(list, pr)))
            for lo, pr in zip(lam_op, projections)
        ]
    )
    jmat = _matmul(lam_matrix, jtheta)

    # Reeb field Z^0 = (1/t) * vertical + u^a F_a where the horizontal part
    # solves d(theta)(Z^0, F_b) = 0:  sum_a u_a D_ab = (1/t) c^v_{vb}... via
    # u = t J Lambda rhs with rhs_b = (1/t) c_aux[v][b][v] - F_b(1/t)
    tinv = expr.pow_(t, -1)
    rhs = []
    for b in range(r):
        der = _simp_add(
            *[
                expr.mul(fields[b].components[a], expr.differentiate(tinv, coord))
                for a, coord in enumerate(m.coords)
            ]
        )
        rhs.append(_simp_add(expr.mul(tinv, caux[v][b][v]), expr.neg(der)))
    jl = _matmul(jmat, lam_matrix)
    u = [
        _simp_add(*[expr.mul(t, jl[a][b], rhs[b]) for b in range(r)])
        for a in range(r)
    ]
    reeb_coeffs = tuple(u) + (tinv,)
    reeb_comps = [
        _simp_add(
            expr.mul(tinv, vert_raw.components[a]),
            *[expr.mul(u[c], fields[c].components[a]) for c in range(r)],
        )
        for a in range(m.dim)
    ]
    reeb = VectorField(m, reeb_comps)

    return ContactData(
        manifold=m,
        ortho_frame=tuple(fields),
        vertical=vert_raw,
        aux=aux,
        theta=theta,
        scale=t,
        jtheta=tuple(tuple(row) for row in jtheta),
        lam_op=lam_op,
        multiplicities=mults,
        lam=lam,
        projections=projections,
        lam_matrix=tuple(tuple(row) for row in lam_matrix),
        lam_inv_matrix=tuple(tuple(row) for row in lam_inv_matrix),
        jmat=tuple(tuple(row) for row in jmat),
        reeb=reeb,
        reeb_coeffs=reeb_coeffs,
    )


# ---------------------------------------------------------------------------
# frame-coefficient calculus over the auxiliary frame


def _hderiv(cd: ContactData, f: Expr, i: int, frame_fields) -> Expr:
    field = frame_fields[i]
    return _simp_add(
        *[
            expr.mul(field.components[a], expr.differentiate(f, coord))
            for a, coord in enumerate(cd.manifold.coords)
        ]
    )


def _bracket_coeffs(cd: ContactData, u, w, ctab, frame_fields):
    """Bracket of two aux-frame coefficient vectors, as coefficients."""
    nn = len(u)
    out = []
    for k in range(nn):
        terms = []
        for a in range(nn):
            if u[a] is not _ZERO:
                terms.append(expr.mul(u[a], _hderiv(cd, w[k], a, frame_fields)))
            if w[a] is not _ZERO:
                terms.append(expr.neg(expr.mul(w[a], _hderiv(cd, u[k], a, frame_fields))))
        for a in range(nn):
            if u[a] is _ZERO:
                continue
            for b in range(nn):
                if w[b] is _ZERO:
                    continue
                terms.append(expr.mul(u[a], w[b], ctab[a][b][k]))
        out.append(_simp_add(*terms))
    return out


def upsilon_fields(cd: ContactData):
    """Cross-eigenbundle obstruction fields, indexed by ordered pairs."""
    coeffs = _upsilon_coeffs(cd)
    return {
        key: VectorField(
            cd.manifold,
            [
                _simp_add(
                    *[
                        expr.mul(vec[c], cd.ortho_frame[c].components[a])
                        for c in range(cd.rank)
                    ]
                )
                for a in range(cd.manifold.dim)
            ],
        )
        for key, vec in coeffs.items()
    }


def _upsilon_coeffs(cd: ContactData):
    r = cd.rank
    k = len(cd.lam_op)
    if k == 1:
        return {}
    ctab = structure_functions(cd.aux)
    frame_fields = cd.aux.frames
    out = {}
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            acc = [_ZERO] * r
            for a in range(r):
                # pr[j] F_a and pr[j] J F_a as aux coefficient vectors
                ucol = [cd.projections[j][c][a] for c in range(r)] + [_ZERO]
                jcol = [
                    _simp_add(
                        *[
                            expr.mul(cd.projections[j][c][d], cd.jmat[d][a])
                            for d in range(r)
                        ]
                    )
                    for c in range(r)
                ] + [_ZERO]
                brk = _bracket_coeffs(cd, ucol, jcol, ctab, frame_fields)
                for c in range(r):
                    # pr[i] of the horizontal part
                    acc[c] = _simp_add(
                        acc[c],
                        *[
                            expr.mul(cd.projections[i][c][d], brk[d])
                            for d in range(r)
                        ],
                    )
            # apply J and the 1/2 factor
            vec = [
                _simp_add(
                    *[expr.mul(_HALF, cd.jmat[c][d], acc[d]) for d in range(r)]
                )
                for c in range(r)
            ]
            out[i + 1, j + 1] = vec
    return out


@dataclass
class ContactGradingParams:
    """Grading data: the horizontal field W and the vertical direction."""

    data: ContactData
    w_coeffs: tuple  # W in orthonormal-frame coefficients
    w_field: VectorField
    zw_field: VectorField  # Z^W = Z^0 - JW
    grading: Grading


def morimoto_grading_contact(cd: ContactData) -> ContactGradingParams:
    """Canonical grading: the weighted sum of the cross-eigenbundle fields."""
    r = cd.rank
    ups = _upsilon_coeffs(cd)
    k = len(cd.lam_op)
    tr_lam = float(
        sum(n * lo**-2.0 for lo, n in zip(cd.lam_op, cd.multiplicities))
    )
    w = [_ZERO] * r
    for (i, j), vec in ups.items():
        coef = expr.floatc(
            (2.0 / tr_lam) * cd.lam_op[i - 1] ** 2 / cd.lam_op[j - 1]
        )
        w = [_simp_add(w[c], expr.mul(coef, vec[c])) for c in range(r)]
    w_field = VectorField(
        cd.manifold,
        [
            _simp_add(
                *[expr.mul(w[c], cd.ortho_frame[c].components[a]) for c in range(r)]
            )
            for a in range(cd.manifold.dim)
        ],
    )
    jw = [
        _simp_add(*[expr.mul(cd.jmat[c][d], w[d]) for d in range(r)])
        for c in range(r)
    ]
    zw_comps = [
        _simp_add(
            cd.reeb.components[a],
            expr.neg(
                expr.add(
                    *[expr.mul(jw[c], cd.ortho_frame[c].components[a]) for c in range(r)]
                )
            ),
        )
        for a in range(cd.manifold.dim)
    ]
    zw_field = VectorField(cd.manifold, zw_comps)
    grading = Grading(cd.manifold, [cd.ortho_frame, (zw_field,)])
    return ContactGradingParams(cd, tuple(w), w_field, zw_field, grading)


# ---------------------------------------------------------------------------
# connections


def _tau_tensor(cd: ContactData, params: ContactGradingParams):
    """tau[i][j][k] = <tau_{W_i} F_j, F_k> over the graded frame."""
    g = params.grading
    nn = g.dim
    r = cd.rank
    ctab = g.structure_functions()
    frame_fields = g.fields
    k = len(cd.lam_op)

    def embed(col):
        return list(col) + [_ZERO]

    def basis(i):
        return [expr.rational(1 if c == i else 0) for c in range(nn)]

    tau = [[[_ZERO] * nn for _ in range(nn)] for _ in range(nn)]
    for p_idx in range(k):
        proj = cd.projections[p_idx]
        for i in range(nn):
            ui = basis(i)
            if i < r:
                for c in range(r):
                    ui[c] = _simp_add(ui[c], expr.neg(proj[c][i]))
            # ui = W_i - pr[p] W_i
            if all(e is _ZERO for e in ui):
                continue
            for j in range(r):
                aj = embed([proj[c][j] for c in range(r)])
                bra = _bracket_coeffs(cd, ui, aj, ctab, frame_fields)
                for kk in range(r):
                    bk = embed([proj[c][kk] for c in range(r)])
                    brb = _bracket_coeffs(cd, ui, bk, ctab, frame_fields)
                    gab = _simp_add(
                        *[expr.mul(proj[c][j], proj[c][kk]) for c in range(r)]
                    )
                    du = _simp_add(
                        *[
                            expr.mul(ui[a], _hderiv(cd, gab, a, frame_fields))
                            for a in range(nn)
                            if ui[a] is not _ZERO
                        ]
                    )
                    lie = _simp_add(
                        du,
                        expr.neg(
                            expr.add(*[expr.mul(bra[c], bk[c]) for c in range(r)])
                        ),
                        expr.neg(
                            expr.add(*[expr.mul(brb[c], aj[c]) for c in range(r)])
                        ),
                    )
                    tau[i][j][kk] = _simp_add(tau[i][j][kk], expr.mul(_HALF, lie))
    return tau


def connection_prime(cd: ContactData, params: ContactGradingParams) -> Connection:
    """Projected metric connection: eigenbundles and the vertical line parallel.

    Horizontal arguments follow the three-term rule (projected Levi-Civita
    within each eigenbundle, projected bracket across, plus the Lie-derivative
    correction); the vertical frame field is parallel.
    """
    g = params.grading
    nn = g.dim
    r = cd.rank
    ctab = g.structure_functions()
    frame_fields = g.fields
    k = len(cd.lam_op)

    # horizontal Koszul coefficients of the taming Levi-Civita connection
    # (orthonormal frame: metric derivative terms vanish)
    gamma_h = [
        [
            [
                expr.simplify(
                    expr.mul(
                        _HALF,
                        expr.add(
                            ctab[a][b][c],
                            expr.neg(ctab[a][c][b]),
                            expr.neg(ctab[b][c][a]),
                        ),
                    )
                )
                for c in range(r)
            ]
            for b in range(r)
        ]
        for a in range(r)
    ]

    tau = _tau_tensor(cd, params)
    gamma = [[[_ZERO] * nn for _ in range(nn)] for _ in range(nn)]
    for p_idx in range(k):
        proj = cd.projections[p_idx]
        for i in range(nn):
            # pr[p] W_i as horizontal coefficients
            acol = [proj[c][i] for c in range(r)] if i < r else [_ZERO] * r
            ui = [expr.rational(1 if c == i else 0) for c in range(nn)]
            if i < r:
                for c in range(r):
                    ui[c] = _simp_add(ui[c], expr.neg(proj[c][i]))
            for j in range(r):
                bcol = [proj[c][j] for c in range(r)]
                # term 1: pr[p] ( LC_{pr[p]W_i} pr[p]F_j )
                t1 = [_ZERO] * r
                if i < r:
                    for kk in range(r):
                        terms = [
                            expr.mul(acol[a], _hderiv(cd, bcol[kk], a, frame_fields))
                            for a in range(r)
                        ]
                        for a in range(r):
                            for b in range(r):
                                terms.append(
                                    expr.mul(acol[a], bcol[b], gamma_h[a][b][kk])
                                )
                        t1[kk] = _simp_add(*terms)
                # term 2: pr[p] [ W_i - pr[p]W_i, pr[p]F_j ]
                brk = _bracket_coeffs(
                    cd, ui, list(bcol) + [_ZERO], ctab, frame_fields
                )
                for kk in range(r):
                    val = _simp_add(
                        *[
                            expr.mul(proj[kk][c], _simp_add(t1[c], brk[c]))
                            for c in range(r)
                        ]
                    )
                    gamma[i][j][kk] = _simp_add(gamma[i][j][kk], val)
    for i in range(nn):
        for j in range(r):
            for kk in range(r):
                gamma[i][j][kk] = _simp_add(gamma[i][j][kk], tau[i][j][kk])
    return Connection(g, gamma)


def _dj_tensor(cd: ContactData, conn: Connection):
    """dj[i][b][k]: component k of the derivative of J applied to F_b."""
    g = conn.grading
    nn = g.dim
    r = cd.rank
    frame_fields = g.fields
    dj = [[[_ZERO] * nn for _ in range(nn)] for _ in range(nn)]
    for i in range(nn):
        for b in range(r):
            for kk in range(r):
                terms = [_hderiv(cd, cd.jmat[kk][b], i, frame_fields)]
                for c in range(r):
                    terms.append(expr.mul(cd.jmat[c][b], conn.gamma[i][c][kk]))
                    terms.append(
                        expr.neg(expr.mul(conn.gamma[i][b][c], cd.jmat[kk][c]))
                    )
                dj[i][b][kk] = _simp_add(*terms)
    return dj


def connection_double_prime(cd: ContactData, params: ContactGradingParams,
                            prime: Connection = None) -> Connection:
    """Corrected connection: adds half the J-derivative twist, which makes J
    (hence the degree-0 torsion) parallel for any metric starting connection."""
    if prime is None:
        prime = connection_prime(cd, params)
    g = params.grading
    nn = g.dim
    r = cd.rank
    dj = _dj_tensor(cd, prime)
    gamma = [
        [[prime.gamma[i][j][kk] for kk in range(nn)] for j in range(nn)]
        for i in range(nn)
    ]
    for i in range(nn):
        for j in range(r):
            for kk in range(r):
                corr = _simp_add(
                    *[expr.mul(cd.jmat[b][j], dj[i][b][kk]) for b in range(r)]
                )
                gamma[i][j][kk] = _simp_add(
                    gamma[i][j][kk], expr.mul(_HALF, corr)
                )
    return Connection(g, gamma)


def morimoto_connection_contact(cd: ContactData, params: ContactGradingParams,
                                second: Connection = None) -> Connection:
    """Canonical connection: curvature-corrected along the selector."""
    if second is None:
        second = connection_double_prime(cd, params)
    g = params.grading
    nn = g.dim
    chi = selector(g)
    rten = second.curvature_tensor()
    gamma = [
        [[second.gamma[i][j][kk] for kk in range(nn)] for j in range(nn)]
        for i in range(nn)
    ]
    for i in range(nn):
        rows = chi.coefficients[i]
        if not rows:
            continue
        for j in range(nn):
            for kk in range(nn):
                corr = _simp_add(
                    *[expr.mul(coef, rten[a][b][j][kk]) for a, b, coef in rows]
                )
                gamma[i][j][kk] = _simp_add(gamma[i][j][kk], expr.mul(_HALF, corr))
    return Connection(g, gamma)
