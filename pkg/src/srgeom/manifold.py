"""Chart-local sub-Riemannian manifolds described by coordinate frames.

A :class:`FramedManifold` is a single coordinate chart together with a
global frame of vector fields whose first ``r`` members span the horizontal
bundle, and a symmetric positive-definite coefficient matrix giving the
horizontal metric in that frame.  All geometry here is exact-symbolic where
possible (brackets, structure functions, frame inversion) and numeric where
it has to be (ranks, graded symbol algebras at a point).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr
from .expr import Expr
from .lie import CarnotAlgebra, heisenberg_normal_form

__all__ = [
    "ManifoldError",
    "RankJumpError",
    "FramedManifold",
    "VectorField",
    "SymbolVerdict",
    "ManifoldDocument",
    "bracket",
    "structure_functions",
    "frame_inverse",
    "growth_flag",
    "symbol_at",
    "check_constant_symbol",
    "manifold_from_dict",
    "load_manifold",
]

STRUCTURE_CLASSES = ("generic", "contact", "two-three-five")

_ZERO = expr.rational(0)
_ONE = expr.rational(1)


class ManifoldError(Exception):
    """Invalid manifold data or a geometric precondition failure."""


class RankJumpError(ManifoldError):
    """Growth vector changed between sample points (not equiregular)."""


def _coerce_expr(value, coords):
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return expr.parse(value, coords)
    if isinstance(value, bool):
        raise ManifoldError("booleans are not valid expression coefficients")
    if isinstance(value, int):
        return expr.rational(value)
    if isinstance(value, float):
        return expr.floatc(value)
    raise ManifoldError(f"cannot interpret {value!r} as an expression")


class VectorField:
    """Vector field on a chart, stored as coordinate-basis coefficients."""

    __slots__ = ("manifold", "components")

    def __init__(self, manifold: "FramedManifold", components):
        comps = tuple(_coerce_expr(c, manifold.coords) for c in components)
        if len(comps) != manifold.dim:
            raise ManifoldError(
                f"vector field needs {manifold.dim} components, got {len(comps)}"
            )
        self.manifold = manifold
        self.components = comps

    def value_at(self, point: dict) -> np.ndarray:
        return np.array(expr.evaluate_many(self.components, point))

    def __add__(self, other: "VectorField") -> "VectorField":
        if other.manifold is not self.manifold:
            raise ManifoldError("vector fields live on different manifolds")
        return VectorField(
            self.manifold,
            [a + b for a, b in zip(self.components, other.components)],
        )

    def __sub__(self, other: "VectorField") -> "VectorField":
        if other.manifold is not self.manifold:
            raise ManifoldError("vector fields live on different manifolds")
        return VectorField(
            self.manifold,
            [a - b for a, b in zip(self.components, other.components)],
        )

    def scaled(self, factor) -> "VectorField":
        f = _coerce_expr(factor, self.manifold.coords)
        return VectorField(self.manifold, [expr.mul(f, c) for c in self.components])

    def __repr__(self) -> str:
        parts = ", ".join(expr.to_string(c) for c in self.components)
        return f"VectorField([{parts}])"


class FramedManifold:
    """Single-chart manifold with a frame whose first r fields span E."""

    def __init__(self, coords, frames, horizontal_rank, metric=None,
                 structure_class: str = "generic"):
        coords = tuple(coords)
        if not coords:
            raise ManifoldError("at least one coordinate is required")
        if len(set(coords)) != len(coords):
            raise ManifoldError("coordinate names must be distinct")
        n = len(coords)
        if len(frames) != n:
            raise ManifoldError(
                f"expected {n} frame fields for {n} coordinates, got {len(frames)}"
            )
        if not 1 <= horizontal_rank <= n:
            raise ManifoldError(
                f"horizontal rank {horizontal_rank} out of range 1..{n}"
            )
        if structure_class not in STRUCTURE_CLASSES:
            raise ManifoldError(
                f"unknown structure class {structure_class!r}; "
                f"expected one of {STRUCTURE_CLASSES}"
            )
        self.coords = coords
        self.rank = int(horizontal_rank)
        self.structure_class = structure_class
        self.frames = tuple(VectorField(self, vec) for vec in frames)

        r = self.rank
        if metric is None:
            metric = [[_ONE if i == j else _ZERO for j in range(r)] for i in range(r)]
        rows = [tuple(_coerce_expr(v, coords) for v in row) for row in metric]
        if len(rows) != r or any(len(row) != r for row in rows):
            raise ManifoldError(f"metric must be a {r}x{r} matrix")
        for i in range(r):
            for j in range(i + 1, r):
                if expr.simplify(rows[i][j]) is not expr.simplify(rows[j][i]):
                    raise ManifoldError("metric matrix must be symmetric")
        self.metric = tuple(rows)

        self._frame_inverse = None
        self._structure_functions = None
        self._bracket_layers = [list(self.frames[:r])]
        self._layer_values = {}

    # -- basic queries -----------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.coords)

    def point(self, values) -> dict:
        if isinstance(values, dict):
            missing = [c for c in self.coords if c not in values]
            if missing:
                raise ManifoldError(f"point is missing coordinates {missing}")
            return {c: float(values[c]) for c in self.coords}
        values = list(values)
        if len(values) != self.dim:
            raise ManifoldError(
                f"point needs {self.dim} values, got {len(values)}"
            )
        return {c: float(v) for c, v in zip(self.coords, values)}

    def vector_field(self, components) -> VectorField:
        return VectorField(self, components)

    def frame_matrix_at(self, point: dict) -> np.ndarray:
        """Columns are the frame fields evaluated at the point."""
        mat = np.column_stack([f.value_at(point) for f in self.frames])
        if abs(np.linalg.det(mat)) <= 1e-9:
            raise ManifoldError("frame is singular at the requested point")
        return mat

    def metric_at(self, point: dict) -> np.ndarray:
        cache: dict = {}
        g = np.array(
            [[expr._eval(e, point, cache) for e in row] for row in self.metric]
        )
        if np.abs(g - g.T).max() > 1e-12:
            raise ManifoldError("metric is not symmetric at the requested point")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise ManifoldError(
                "metric is not positive-definite at the requested point"
            ) from exc
        return g

    # -- iterated horizontal brackets ---------------------------------------

    def bracket_layer(self, k: int):
        """Fields spanning the k-th layer: (k-1)-fold brackets of the frame.

        Layer 1 is the horizontal frame; layer k brackets every horizontal
        field with every layer-(k-1) field.
        """
        while len(self._bracket_layers) < k:
            prev = self._bracket_layers[-1]
            nxt = [
                bracket(x, y)
                for x in self._bracket_layers[0]
                for y in prev
            ]
            self._bracket_layers.append(nxt)
        return self._bracket_layers[k - 1]


# ---------------------------------------------------------------------------
# brackets and structure functions


def bracket(x: VectorField, y: VectorField) -> VectorField:
    """Commutator bracket of two vector fields on the same chart."""
    if x.manifold is not y.manifold:
        raise ManifoldError("vector fields live on different manifolds")
    m = x.manifold
    out = []
    for k in range(m.dim):
        terms = []
        for a, c in enumerate(m.coords):
            terms.append(expr.mul(x.components[a], expr.differentiate(y.components[k], c)))
            terms.append(expr.neg(expr.mul(y.components[a], expr.differentiate(x.components[k], c))))
        out.append(expr.simplify(expr.add(*terms)))
    return VectorField(m, out)


def _is_zero(e: Expr) -> bool:
    return e is _ZERO


def _is_nonzero_const(e: Expr) -> bool:
    return isinstance(e, (expr.Rat, expr.Flt)) and not _is_zero(e)


def _gauss_jordan(rows, n: int):
    """Reduce [A | B] in place so the left n columns become the identity.

    Pivots prefer nonzero constants to keep the symbolic arithmetic exact and
    small; expression pivots are used when no constant is available.
    """
    width = len(rows[0])
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if _is_nonzero_const(rows[r][col]):
                pivot = r
                break
        if pivot is None:
            for r in range(col, n):
                if not _is_zero(rows[r][col]):
                    pivot = r
                    break
        if pivot is None:
            raise ManifoldError("frame matrix is not symbolically invertible")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        inv = expr.pow_(rows[col][col], -1)
        rows[col] = [expr.simplify(expr.mul(inv, e)) for e in rows[col]]
        for r in range(n):
            if r == col or _is_zero(rows[r][col]):
                continue
            f = rows[r][col]
            rows[r] = [
                expr.simplify(expr.sub(rows[r][c], expr.mul(f, rows[col][c])))
                for c in range(width)
            ]
    return rows


def frame_inverse(m: FramedManifold):
    """Symbolic inverse of the frame matrix (rows of the dual coframe).

    Entry [i][a] is the coefficient of the i-th coframe one-form on the
    coordinate vector field number a, i.e. applying row i to a coordinate
    vector recovers the i-th frame component of that vector.
    """
    if m._frame_inverse is None:
        n = m.dim
        rows = []
        for a in range(n):
            row = [m.frames[i].components[a] for i in range(n)]
            row += [_ONE if b == a else _ZERO for b in range(n)]
            rows.append(row)
        reduced = _gauss_jordan(rows, n)
        m._frame_inverse = tuple(tuple(row[n:]) for row in reduced)
    return m._frame_inverse


def structure_functions(m: FramedManifold):
    """Expressions c[i][j][k] with [X_i, X_j] = sum_k c[i][j][k] X_k."""
    if m._structure_functions is None:
        n = m.dim
        finv = frame_inverse(m)
        c = [[[_ZERO for _ in range(n)] for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                br = bracket(m.frames[i], m.frames[j])
                for k in range(n):
                    e = expr.simplify(
                        expr.add(
                            *[
                                expr.mul(finv[k][a], br.components[a])
                                for a in range(n)
                            ]
                        )
                    )
                    c[i][j][k] = e
                    c[j][i][k] = expr.simplify(expr.neg(e))
        m._structure_functions = c
    return m._structure_functions


# ---------------------------------------------------------------------------
# growth vector and graded symbol


def _layer_values_at(m: FramedManifold, point: dict, k: int, finv: np.ndarray):
    """Columns: layer-k bracket fields at the point, in frame coordinates."""
    fields = m.bracket_layer(k)
    vals = np.column_stack([f.value_at(point) for f in fields])
    return finv @ vals


def _rank(mat: np.ndarray, tol: float = 1e-9) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def growth_flag(m: FramedManifold, point, max_step: int):
    """Ranks of the iterated-bracket flag at a point.

    Stops once the rank reaches the chart dimension, stabilizes, or
    ``max_step`` layers have been computed.
    """
    if max_step < 1:
        raise ManifoldError("max_step must be at least 1")
    p = m.point(point)
    finv = np.linalg.inv(m.frame_matrix_at(p))
    ranks = []
    blocks = []
    for k in range(1, max_step + 1):
        blocks.append(_layer_values_at(m, p, k, finv))
        ranks.append(_rank(np.hstack(blocks)))
        if ranks[-1] == m.dim:
            break
    return tuple(ranks)


def symbol_at(m: FramedManifold, point, reference_flag=None, max_step: int = 8):
    """Graded nilpotent symbol algebra of the horizontal bundle at a point.

    Layers are realized as orthogonal complements within the bracket flag,
    orthogonality taken in the auxiliary inner product that declares the
    input frame orthonormal.  The returned algebra carries float structure
    constants and the horizontal metric evaluated at the point.
    """
    p = m.point(point)
    fmat = m.frame_matrix_at(p)
    finv = np.linalg.inv(fmat)

    flag = growth_flag(m, p, max_step)
    if flag[-1] != m.dim:
        raise ManifoldError(
            f"horizontal bundle is not bracket-generating at {p} "
            f"(flag {flag} within {max_step} steps)"
        )
    if reference_flag is not None and tuple(reference_flag) != flag:
        raise RankJumpError(
            f"growth vector {flag} at {p} differs from reference "
            f"{tuple(reference_flag)}"
        )
    step = len(flag)

    # orthonormal bases of each quotient layer, plus representative
    # coefficients over the layer's bracket fields
    layer_basis = []
    layer_coeffs = []
    span = np.zeros((m.dim, 0))
    for k in range(1, step + 1):
        vals = _layer_values_at(m, p, k, finv)
        proj = vals - span @ (span.T @ vals)
        u, s, vt = np.linalg.svd(proj, full_matrices=False)
        want = flag[k - 1] - (flag[k - 2] if k >= 2 else 0)
        if want == 0:
            raise RankJumpError(
                f"flag {flag} plateaus at layer {k}; the point {p} is not "
                "equiregular"
            )
        keep = s > 1e-9 * (s[0] if s.size else 1.0)
        if int(np.sum(keep)) != want:
            raise RankJumpError(
                f"layer {k} rank at {p} is {int(np.sum(keep))}, expected {want}"
            )
        basis = u[:, :want]
        coeffs = vt[:want].T / s[:want]
        layer_basis.append(basis)
        layer_coeffs.append(coeffs)
        span = np.hstack([span, basis])

    dims = [b.shape[1] for b in layer_basis]
    offsets = np.concatenate([[0], np.cumsum(dims)])

    # numeric values of all pairwise brackets of layer fields, frame coords
    bracket_vals = {}
    for i in range(1, step + 1):
        for j in range(i, step + 1):
            if i + j > step:
                continue
            fi = m.bracket_layer(i)
            fj = m.bracket_layer(j)
            cache: dict = {}
            vals = np.zeros((m.dim, len(fi), len(fj)))
            for a, x in enumerate(fi):
                for b, y in enumerate(fj):
                    w = bracket(x, y)
                    vals[:, a, b] = [expr._eval(e, p, cache) for e in w.components]
            bracket_vals[i, j] = np.einsum("xy,yab->xab", finv, vals)

    brackets = {}
    for i in range(1, step + 1):
        for j in range(i, step + 1):
            if i + j > step:
                continue
            vals = bracket_vals[i, j]
            target = layer_basis[i + j - 1]
            for a in range(dims[i - 1]):
                for b in range(dims[j - 1]):
                    ga = offsets[i - 1] + a
                    gb = offsets[j - 1] + b
                    if ga >= gb:
                        continue
                    vec = np.einsum(
                        "xyz,y,z->x",
                        vals,
                        layer_coeffs[i - 1][:, a],
                        layer_coeffs[j - 1][:, b],
                    )
                    coefs = target.T @ vec
                    row = {
                        offsets[i + j - 1] + c: float(v)
                        for c, v in enumerate(coefs)
                        if abs(v) > 1e-12
                    }
                    if row:
                        brackets[ga, gb] = row

    labels = tuple(
        f"E{k+1}.{a+1}" for k in range(step) for a in range(dims[k])
    )
    gmat = m.metric_at(p)
    s1 = layer_basis[0][: m.rank]
    metric1 = s1.T @ gmat @ s1
    return CarnotAlgebra(tuple(dims), labels, brackets, metric1=metric1)


@dataclass(frozen=True)
class SymbolVerdict:
    """Outcome of a constant-symbol check over sample points."""

    constant: bool
    structure_class: str
    detail: Optional[tuple]
    samples: tuple

    def __bool__(self) -> bool:
        return self.constant


def check_constant_symbol(m: FramedManifold, sample, tol: float = 1e-6) -> SymbolVerdict:
    """Decide whether the symbol algebra is the same at every sample point."""
    points = [m.point(p) for p in sample]
    if not points:
        raise ManifoldError("at least one sample point is required")

    if m.structure_class == "contact":
        flags = [growth_flag(m, p, 2) for p in points]
        for p, f in zip(points, flags):
            if f != flags[0]:
                raise RankJumpError(
                    f"growth vector {f} at {p} differs from {flags[0]}"
                )
        lams = [heisenberg_normal_form(symbol_at(m, p)) for p in points]
        spread = max(
            abs(a - b)
            for lam in lams
            for other in lams
            for a, b in zip(lam, other)
        )
        return SymbolVerdict(
            constant=bool(spread <= tol),
            structure_class="contact",
            detail=lams[0] if spread <= tol else None,
            samples=tuple(lams),
        )

    if m.structure_class == "two-three-five":
        flags = [growth_flag(m, p, 3) for p in points]
        ok = bool(all(f == (2, 3, 5) for f in flags))
        return SymbolVerdict(
            constant=ok,
            structure_class="two-three-five",
            detail=(2, 3, 5) if ok else None,
            samples=tuple(flags),
        )

    raise ManifoldError(
        "constant-symbol check is undecidable here for the generic class; "
        "declare the manifold as contact or two-three-five"
    )


# ---------------------------------------------------------------------------
# description files


@dataclass
class ManifoldDocument:
    """Manifold plus the sampling directives from its description file."""

    manifold: FramedManifold
    chart_box: tuple
    seed: int
    sample_count: int
    sample_points: Optional[tuple]

    def sample(self, rng=None):
        """Sample points: the declared list if present, else seeded uniform."""
        if self.sample_points is not None:
            return [self.manifold.point(p) for p in self.sample_points]
        if rng is None:
            rng = np.random.default_rng(self.seed)
        lows = np.array([lo for lo, _ in self.chart_box])
        highs = np.array([hi for _, hi in self.chart_box])
        pts = rng.uniform(lows, highs, size=(self.sample_count, len(self.chart_box)))
        return [self.manifold.point(row) for row in pts]


def manifold_from_dict(data: dict) -> ManifoldDocument:
    if not isinstance(data, dict):
        raise ManifoldError("manifold description must be a mapping")
    try:
        coords = list(data["coords"])
        frames = data["frames"]
        rank = int(data["horizontal_rank"])
    except KeyError as exc:
        raise ManifoldError(f"missing required key {exc.args[0]!r}") from None
    manifold = FramedManifold(
        coords,
        frames,
        rank,
        metric=data.get("metric"),
        structure_class=data.get("class", "generic"),
    )

    n = manifold.dim
    box = data.get("chart_box")
    if box is None:
        chart_box = tuple((-1.0, 1.0) for _ in range(n))
    else:
        box = list(box)
        if len(box) == 2 and all(isinstance(v, (int, float)) for v in box):
            box = [box] * n
        if len(box) != n:
            raise ManifoldError(
                f"chart_box needs one interval per coordinate ({n}), got {len(box)}"
            )
        chart_box = tuple((float(lo), float(hi)) for lo, hi in box)
        for lo, hi in chart_box:
            if not lo < hi:
                raise ManifoldError("chart_box intervals must be increasing")

    pts = data.get("sample_points")
    sample_points = tuple(tuple(map(float, p)) if not isinstance(p, dict) else p
                          for p in pts) if pts is not None else None

    return ManifoldDocument(
        manifold=manifold,
        chart_box=chart_box,
        seed=int(data.get("seed", 42)),
        sample_count=int(data.get("sample_count", 10)),
        sample_points=sample_points,
    )


def load_manifold(path) -> ManifoldDocument:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifoldError(
                f"{path}: invalid manifold file at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}"
            ) from None
    return manifold_from_dict(data)
