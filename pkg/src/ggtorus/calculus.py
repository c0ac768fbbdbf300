"""Cartan calculus on the periodic grid: exterior derivative, wedge and
interior products, Lie derivatives, and exact pullback by lattice-affine
diffeomorphisms.

Derivatives are spectral; every pointwise product goes through the
dealiasing kit, so identities such as d(a^b) = da^b + (-1)^p a^db hold to
machine precision whenever intermediate content stays inside the band.
Interior products contract the *first* slot: (i_u w)(v_2,..) = w(u, v_2,..).
"""

from __future__ import annotations

import numpy as np

from .grid import KForm, ScalarField, SymTensor2, VectorField, index_sets

__all__ = [
    "ext_deriv", "wedge", "interior", "contract2", "lie_form", "lie_sym",
    "lie_bracket", "grad", "AffineDiffeo", "pullback", "pushforward",
]


# ---------------------------------------------------------------------------
# exterior derivative
# ---------------------------------------------------------------------------

def ext_deriv(omega):
    """Exterior derivative of a k-form (k < n), computed spectrally."""
    grid = omega.grid
    k = omega.degree
    if k >= grid.n:
        raise ValueError("cannot apply d to a top-degree form")
    kit = grid.kit
    src = index_sets(grid.n, k)
    dst = index_sets(grid.n, k + 1)
    spec = kit.fwd(omega.comps)
    out = np.zeros((len(dst),) + spec.shape[1:], dtype=complex)
    for b, J in enumerate(dst):
        for m, j in enumerate(J):
            I = tuple(i for i in J if i != j)
            out[b] += (-1) ** m * kit.deriv_factor(j) * spec[src.index(I)]
    return KForm(grid, k + 1, kit.inv(out))


def grad(f):
    """Gradient 1-form df of a scalar field."""
    if isinstance(f, KForm):
        return ext_deriv(f)
    return ext_deriv(f.to_form())


# ---------------------------------------------------------------------------
# wedge and interior products
# ---------------------------------------------------------------------------

def _shuffle_sign(I, J):
    """Sign of sorting the concatenation (I, J) of disjoint tuples."""
    perm = I + J
    sign = 1
    items = list(perm)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


def wedge(alpha, beta):
    """Pointwise exterior product, dealiased."""
    grid = alpha.grid
    if beta.grid != grid:
        raise ValueError("grid mismatch in wedge")
    p, q = alpha.degree, beta.degree
    if p + q > grid.n:
        raise ValueError(f"wedge degree overflow: {p}+{q} > {grid.n}")
    kit = grid.kit
    a_pad = alpha.padded()
    b_pad = beta.padded()
    src_a = index_sets(grid.n, p)
    src_b = index_sets(grid.n, q)
    dst = index_sets(grid.n, p + q)
    out_pad = np.zeros((len(dst),) + (kit.M,) * grid.n)
    from itertools import combinations
    for c, K in enumerate(dst):
        for I in combinations(K, p):
            J = tuple(x for x in K if x not in I)
            s = _shuffle_sign(I, J)
            out_pad[c] += s * a_pad[src_a.index(I)] * b_pad[src_b.index(J)]
    return KForm(grid, p + q, kit.unpad(out_pad))


def interior(u, omega):
    """Interior product i_u omega, contracting the first slot."""
    grid = omega.grid
    if u.grid != grid:
        raise ValueError("grid mismatch in interior product")
    k = omega.degree
    if k < 1:
        raise ValueError("interior product needs a form of degree >= 1")
    kit = grid.kit
    u_pad = u.padded()
    w_pad = omega.padded()
    src = index_sets(grid.n, k)
    dst = index_sets(grid.n, k - 1)
    out_pad = np.zeros((len(dst),) + (kit.M,) * grid.n)
    for c, I in enumerate(dst):
        for j in range(grid.n):
            if j in I:
                continue
            full = tuple(sorted((j,) + I))
            sign = (-1) ** full.index(j)
            out_pad[c] += sign * u_pad[j] * w_pad[src.index(full)]
    return KForm(grid, k - 1, kit.unpad(out_pad))


def contract2(u, v, omega):
    """Double contraction omega(u, v, ...) = i_v i_u omega."""
    return interior(v, interior(u, omega))


# ---------------------------------------------------------------------------
# Lie derivatives
# ---------------------------------------------------------------------------

def lie_form(u, omega):
    """Lie derivative of a form by the Cartan formula i_u d + d i_u."""
    if isinstance(omega, ScalarField):
        omega = omega.to_form()
    grid = omega.grid
    k = omega.degree
    if k == 0:
        return interior(u, ext_deriv(omega))
    if k == grid.n:
        return ext_deriv(interior(u, omega))
    return interior(u, ext_deriv(omega)) + ext_deriv(interior(u, omega))


def lie_scalar(u, f):
    """Directional derivative u(f) of a scalar field."""
    return lie_form(u, f.to_form()).to_scalar()


def lie_sym(u, g):
    """Lie derivative of a symmetric 2-tensor:
    (L_u g)_ij = u^k dk g_ij + g_kj di u^k + g_ik dj u^k."""
    grid = g.grid
    if u.grid != grid:
        raise ValueError("grid mismatch in lie_sym")
    kit = grid.kit
    n = grid.n
    u_pad = u.padded()
    gfull = np.stack([g.full_matrix()[i, j] for i in range(n) for j in range(n)])
    g_pad = kit.pad(gfull).reshape((n, n) + (kit.M,) * n)
    dg_pad = kit.pad_grad(gfull).reshape((n, n, n) + (kit.M,) * n)  # [k, i, j]
    du_pad = kit.pad_grad(u.comps)  # [i, k] = d_i u^k
    out_pad = np.empty((n * (n + 1) // 2,) + (kit.M,) * n)
    for a, (i, j) in enumerate(g.index_pairs):
        term = np.einsum("k...,k...->...", u_pad, dg_pad[:, i, j])
        for k in range(n):
            term = term + g_pad[k, j] * du_pad[i, k] + g_pad[i, k] * du_pad[j, k]
        out_pad[a] = term
    return SymTensor2(grid, kit.unpad(out_pad))


def lie_bracket(u, v):
    """Lie bracket of vector fields, [u, v]^i = u^j dj v^i - v^j dj u^i."""
    grid = u.grid
    if v.grid != grid:
        raise ValueError("grid mismatch in lie_bracket")
    kit = grid.kit
    du_pad = kit.pad_grad(u.comps)  # [j, i] = d_j u^i
    dv_pad = kit.pad_grad(v.comps)
    term = np.einsum("j...,ji...->i...", u.padded(), dv_pad) \
        - np.einsum("j...,ji...->i...", v.padded(), du_pad)
    return VectorField(grid, kit.unpad(term))


# ---------------------------------------------------------------------------
# lattice-affine diffeomorphisms and exact pullback
# ---------------------------------------------------------------------------

class AffineDiffeo:
    """x -> A x + 2*pi*s/N with A in GL(n, Z) and s an integer shift.

    Such maps permute the grid nodes, so pullbacks are exact: a node
    permutation composed with the constant action of A on tensor indices.
    """

    __slots__ = ("grid", "matrix", "shift")

    def __init__(self, grid, matrix, shift=None):
        self.grid = grid
        A = np.asarray(matrix, dtype=np.int64)
        if A.shape != (grid.n, grid.n):
            raise ValueError(f"matrix shape {A.shape} invalid for n={grid.n}")
        det = int(round(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError(f"matrix must lie in GL(n, Z); det={det}")
        self.matrix = A
        self.matrix.flags.writeable = False
        s = np.zeros(grid.n, dtype=np.int64) if shift is None else \
            np.asarray(shift, dtype=np.int64) % grid.N
        if s.shape != (grid.n,):
            raise ValueError("shift must be an integer vector of length n")
        self.shift = s
        self.shift.flags.writeable = False

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.eye(grid.n, dtype=np.int64))

    @classmethod
    def translation(cls, grid, shift):
        return cls(grid, np.eye(grid.n, dtype=np.int64), shift)

    @property
    def translation_vector(self):
        return 2.0 * np.pi * self.shift / self.grid.N

    def det(self):
        return int(round(np.linalg.det(self.matrix)))

    def is_identity(self):
        return np.array_equal(self.matrix, np.eye(self.grid.n, dtype=np.int64)) \
            and not self.shift.any()

    def compose(self, other):
        """self o other as maps (apply other first)."""
        if other.grid != self.grid:
            raise ValueError("grid mismatch in compose")
        A = self.matrix @ other.matrix
        s = (self.matrix @ other.shift + self.shift) % self.grid.N
        return AffineDiffeo(self.grid, A, s)

    def inverse(self):
        Ainv = np.rint(np.linalg.inv(self.matrix)).astype(np.int64)
        s = (-Ainv @ self.shift) % self.grid.N
        return AffineDiffeo(self.grid, Ainv, s)

    def order(self, cap=24):
        """Smallest m <= cap with self^m = id, or None."""
        g = self
        for m in range(1, cap + 1):
            if g.is_identity():
                return m
            g = g.compose(self)
        return None

    def node_gather_index(self):
        """Index arrays picking value at phi(x_m) for every node x_m."""
        grid = self.grid
        idx = np.indices(grid.shape).reshape(grid.n, -1)
        img = (self.matrix @ idx + self.shift[:, None]) % grid.N
        return tuple(img.reshape((grid.n,) + grid.shape))

    def key(self):
        return (tuple(map(tuple, self.matrix.tolist())), tuple(self.shift.tolist()))

    def __eq__(self, other):
        return isinstance(other, AffineDiffeo) and self.grid == other.grid \
            and self.key() == other.key()

    def __hash__(self):
        return hash((self.grid, self.key()))

    def __repr__(self):
        return f"AffineDiffeo(A={self.matrix.tolist()}, s={self.shift.tolist()})"


def _minor_det(A, rows, cols):
    if len(rows) == 0:
        return 1.0
    sub = A[np.ix_(rows, cols)].astype(float)
    return float(np.linalg.det(sub)) if len(rows) > 1 else float(sub[0, 0])


def pullback(phi, field):
    """Exact pullback phi^* of a field by a lattice-affine diffeomorphism.

    Scalars: f o phi.  k-forms: (phi^*w)_I = sum_J w_J(phi x) det A[J, I].
    Vector fields: A^{-1} u(phi x).  Symmetric tensors: A^T g(phi x) A.
    """
    grid = field.grid
    if phi.grid != grid:
        raise ValueError("grid mismatch in pullback")
    gather = phi.node_gather_index()
    A = phi.matrix

    if isinstance(field, ScalarField):
        return ScalarField(grid, field.values[gather])

    if isinstance(field, KForm):
        k = field.degree
        sets = index_sets(grid.n, k)
        moved = field.comps[(slice(None),) + gather]
        out = np.zeros_like(moved)
        for b, I in enumerate(sets):
            for a, J in enumerate(sets):
                c = _minor_det(A, J, I)
                if c != 0.0:
                    out[b] += c * moved[a]
        return KForm(grid, k, out)

    if isinstance(field, VectorField):
        Ainv = np.rint(np.linalg.inv(A)).astype(float)
        moved = field.comps[(slice(None),) + gather]
        out = np.tensordot(Ainv, moved, axes=(1, 0))
        return VectorField(grid, out)

    if isinstance(field, SymTensor2):
        gfull = field.full_matrix()
        moved = gfull[(slice(None), slice(None)) + gather]
        out = np.einsum("ki,kl...,lj->ij...", A.astype(float), moved, A.astype(float))
        return SymTensor2.from_full_matrix(grid, out)

    raise TypeError(f"cannot pull back objects of type {type(field)!r}")


def pushforward(phi, field):
    """phi_* = (phi^{-1})^*."""
    return pullback(phi.inverse(), field)
