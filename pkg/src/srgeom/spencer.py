"""Cochain calculus for graded algebras extended by their isometries.

A :class:`GradedComplex` packages a nilpotent algebra ``g_minus`` together
with its isometry derivations ``g_zero`` into one Lie algebra, fixes an
orthonormal basis of each summand, and provides the coboundary operator
``spencer_d`` on alternating forms on ``g_minus`` with values in the full
algebra, plus its metric adjoint ``spencer_dstar``.

Cochains of degree ``k`` are stored as dense arrays indexed by strictly
increasing ``k``-tuples of orthonormal ``g_minus`` basis vectors (rows) and
by the combined value basis (columns): first the ``n`` orthonormal vectors
of ``g_minus``, then the ``m`` orthonormalized derivations.
"""

from __future__ import annotations

import itertools

import numpy as np

from .lie import (
    CarnotAlgebra,
    LieError,
    isometry_algebra,
    orthonormal_frame,
)

__all__ = [
    "Cochain",
    "GradedComplex",
    "spencer_d",
    "spencer_dstar",
    "random_cochain",
]


def _sort_sign(indices):
    """Sorted tuple and permutation sign, or (None, 0) on a repeated index."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return None, 0
    sign = 1
    # insertion sort, counting swaps
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return tuple(idx), sign


class GradedComplex:
    """Orthonormal model of a nilpotent algebra plus its isometry algebra."""

    def __init__(self, algebra: CarnotAlgebra, convention: str = "selector", tol: float = 1e-9):
        self.algebra = algebra
        self.convention = convention
        n = algebra.dim
        self.n = n

        # orthonormal basis of the negative part, as columns in the
        # structural basis, and structure constants rewritten in it
        q = orthonormal_frame(algebra, convention)
        qinv = np.linalg.inv(q)
        c = algebra.structure_tensor()
        self.frame = q
        self.ctil = np.einsum("xa,yb,xyz,cz->abc", q, q, c, qinv)

        # isometry derivations, rewritten in the orthonormal basis and
        # Gram-Schmidt orthonormalized for the trace inner product
        raw = [qinv @ d @ q for d in isometry_algebra(algebra)]
        ders = []
        for d in raw:
            for e in ders:
                d = d - np.tensordot(d, e, axes=2) * e
            norm = float(np.sqrt(np.tensordot(d, d, axes=2)))
            if norm <= tol:
                raise LieError("isometry basis is numerically degenerate")
            d = d / norm
            flat = d.ravel()
            lead = flat[np.abs(flat) > tol]
            if lead.size and lead[0] < 0:
                d = -d
            ders.append(d)
        self.derivations = np.array(ders).reshape(len(ders), n, n)
        self.m = len(ders)
        self.dim_values = self.n + self.m

        # commutators of derivations expanded in the orthonormal basis;
        # isometry algebras close under commutator, which we verify here
        m = self.m
        self.comm = np.zeros((m, m, m))
        for s in range(m):
            for t in range(m):
                br = self.derivations[s] @ self.derivations[t] - self.derivations[t] @ self.derivations[s]
                coef = np.tensordot(self.derivations, br, axes=2)
                resid = br - np.tensordot(coef, self.derivations, axes=1)
                if np.abs(resid).max() > 1e-7:
                    raise LieError("isometry algebra does not close under commutator")
                self.comm[s, t] = coef

        self._multis = {}
        self._positions = {}
        self._dmat = {}

    # -- index bookkeeping ------------------------------------------------

    def multi_indices(self, k: int):
        """Strictly increasing k-tuples over the negative-part basis."""
        if k not in self._multis:
            tuples = list(itertools.combinations(range(self.n), k))
            self._multis[k] = tuples
            self._positions[k] = {t: i for i, t in enumerate(tuples)}
        return self._multis[k]

    def basis_size(self, k: int) -> int:
        return len(self.multi_indices(k)) * self.dim_values

    def zero(self, k: int) -> "Cochain":
        return Cochain(self, k, np.zeros((len(self.multi_indices(k)), self.dim_values)))

    def cochain(self, k: int, coeffs) -> "Cochain":
        arr = np.array(coeffs, dtype=float)
        want = (len(self.multi_indices(k)), self.dim_values)
        if arr.shape != want:
            raise ValueError(f"degree-{k} cochain must have shape {want}, got {arr.shape}")
        return Cochain(self, k, arr)

    # -- algebra operations in the orthonormal basis ----------------------

    def bracket_with_vector(self, a: int, value: np.ndarray) -> np.ndarray:
        """[u_a, value] for the a-th orthonormal vector and a full-algebra value.

        The result always lies in the negative part: brackets of two
        negative-part vectors do, and the mixed bracket of a vector with a
        derivation D is -(D u_a).
        """
        out = np.zeros(self.dim_values)
        out[: self.n] = np.einsum("b,bc->c", value[: self.n], self.ctil[a])
        if self.m:
            out[: self.n] -= np.einsum("s,sy->y", value[self.n :], self.derivations[:, :, a])
        return out

    def evaluate(self, coeffs: np.ndarray, k: int, args) -> np.ndarray:
        """Alternating evaluation of a degree-k cochain on basis indices."""
        key, sign = _sort_sign(args)
        if key is None:
            return np.zeros(self.dim_values)
        pos = self._positions[k][key]
        return sign * coeffs[pos]

    # -- the coboundary and its adjoint ------------------------------------

    def d(self, alpha: "Cochain") -> "Cochain":
        k = alpha.degree
        out = self.zero(k + 1)
        self.multi_indices(k)  # make sure positions for degree k exist
        for row, tup in enumerate(self.multi_indices(k + 1)):
            acc = out.coeffs[row]
            for i, a in enumerate(tup):
                rest = tup[:i] + tup[i + 1 :]
                val = self.evaluate(alpha.coeffs, k, rest)
                acc += (-1) ** i * self.bracket_with_vector(a, val)
            for i, j in itertools.combinations(range(k + 1), 2):
                br = self.ctil[tup[i], tup[j]]
                rest = tup[:i] + tup[i + 1 : j] + tup[j + 1 :]
                for c in np.nonzero(np.abs(br) > 1e-14)[0]:
                    acc += (
                        (-1) ** (i + j)
                        * br[c]
                        * self.evaluate(alpha.coeffs, k, (c,) + rest)
                    )
        return out

    def d_matrix(self, k: int) -> np.ndarray:
        """Matrix of the coboundary from degree k to k+1 in the orthonormal basis."""
        if k not in self._dmat:
            rows = self.basis_size(k + 1)
            cols = self.basis_size(k)
            mat = np.zeros((rows, cols))
            shape = (len(self.multi_indices(k)), self.dim_values)
            for col in range(cols):
                coeffs = np.zeros(shape)
                coeffs.flat[col] = 1.0
                mat[:, col] = self.d(Cochain(self, k, coeffs)).coeffs.ravel()
            self._dmat[k] = mat
        return self._dmat[k]


class Cochain:
    """Alternating form on the negative part with values in the full algebra."""

    __slots__ = ("complex", "degree", "coeffs")

    def __init__(self, complex: GradedComplex, degree: int, coeffs: np.ndarray):
        self.complex = complex
        self.degree = degree
        self.coeffs = coeffs

    def inner(self, other: "Cochain") -> float:
        if other.complex is not self.complex or other.degree != self.degree:
            raise ValueError("cochains live in different spaces")
        return float(np.dot(self.coeffs.ravel(), other.coeffs.ravel()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "Cochain") -> "Cochain":
        if other.complex is not self.complex or other.degree != self.degree:
            raise ValueError("cochains live in different spaces")
        return Cochain(self.complex, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "Cochain") -> "Cochain":
        if other.complex is not self.complex or other.degree != self.degree:
            raise ValueError("cochains live in different spaces")
        return Cochain(self.complex, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "Cochain":
        return Cochain(self.complex, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__


def spencer_d(alpha: Cochain) -> Cochain:
    """Coboundary of a degree-k cochain (degree k+1 result)."""
    if alpha.degree < 0:
        raise ValueError("cochain degree must be nonnegative")
    return alpha.complex.d(alpha)


def spencer_dstar(kappa: Cochain) -> Cochain:
    """Metric adjoint of the coboundary: degree k to degree k-1, k >= 1.

    In the orthonormal cochain basis the adjoint is the transposed
    coboundary matrix.
    """
    if kappa.degree < 1:
        raise ValueError("adjoint coboundary needs degree >= 1")
    cx = kappa.complex
    k = kappa.degree
    mat = cx.d_matrix(k - 1)
    flat = mat.T @ kappa.coeffs.ravel()
    return Cochain(cx, k - 1, flat.reshape(len(cx.multi_indices(k - 1)), cx.dim_values))


def random_cochain(cx: GradedComplex, k: int, rng) -> Cochain:
    """Cochain with independent standard-normal coefficients."""
    return cx.cochain(k, rng.standard_normal((len(cx.multi_indices(k)), cx.dim_values)))
