"""Finite-dimensional slice-theorem operator theory.

Field spaces are discretized on the orthonormal trigonometric band basis
(one block per scalar component); every space carries the Gram matrix of
its L2 bundle metric, assembled by exact quadrature.  Operators become
dense matrices whose columns are functional evaluations on basis fields,
so matrix-vector products agree with the field-level operations to
machine precision and all adjoints/decompositions are certified by SVD in
Gram-whitened coordinates.

Assembled operators (kinds of :func:`assemble`):

* ``A_exact``  (u, a) -> (L_u g, L_u omega - i_u H + da)
* ``B_exact``  f -> (0, df)
* ``A_full``   the same differential on sections + harmonic 2-form block
  (parametrizing the full derivation algebra; the extra columns are the
  codomain images (0, h_i))
* ``A_odd``    (u, f, a) -> (L_u g, (L_u omega - i_uH - 2fF + da
                                     - (i_uF - df)^gamma, L_u gamma - i_uF + df))
* ``B_odd``    h -> (0, 0, dh)
* ``dF_1`` / ``dF_2``  the F-twisted complex around Omega^{2+1} (flat Gram)

The odd codomain carries the twisted bundle metric
|w. - gamma^gamma.|^2 + |gamma.|^2 + |g.|^2.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla

from .calculus import ext_deriv, interior, lie_form, lie_sym, wedge
from .courant import ExactSection, OddSection
from .genmetric import GMTangent
from .grid import KForm, ScalarField, SymTensor2, VectorField, index_sets, n_components, sym_index_pairs
from .hodge import ScalarModes, _MetricData, flat_context
from .symmetry import _scalar_d_blocks, _wedge_f_blocks

__all__ = [
    "FieldSpaceDescriptor", "OperatorMatrix", "assemble", "adjoint",
    "complex_check", "complex_green", "orbit_projector",
    "full_group_decomposition", "direct_sum_checks", "RankAmbiguity",
    "decomposition_report_json",
]

RANK_RTOL = 1e-8
_MATRIX_GUARD = 3200


class RankAmbiguity(RuntimeError):
    """Numerical rank could not be certified (tied singular values)."""


# ---------------------------------------------------------------------------
# field space descriptors
# ---------------------------------------------------------------------------

class FieldSpaceDescriptor:
    """A discretized field space: component layout + Gram matrix."""

    def __init__(self, kind, grid, ncomp, gram, pack, unpack):
        self.kind = kind
        self.grid = grid
        self.modes = ScalarModes(grid)
        self.ncomp = ncomp
        self.dim = ncomp * self.modes.dim
        if self.dim > _MATRIX_GUARD:
            raise ValueError(
                f"descriptor {kind} needs {self.dim} coefficients"
                f" > matrix-regime guard {_MATRIX_GUARD}; lower N")
        self.gram = gram
        self.chol = sla.cholesky(gram, lower=True)
        self._pack = pack
        self._unpack = unpack

    def pack(self, obj):
        return self._pack(obj)

    def unpack(self, vec):
        return self._unpack(np.asarray(vec, dtype=float))

    def inner(self, x, y):
        return float(x @ (self.gram @ y))

    def whiten(self, mat_cols):
        """L^T x for column-stacked coordinates."""
        return self.chol.T @ mat_cols

    def unwhiten(self, y):
        return sla.solve_triangular(self.chol.T, y, lower=False)


def _pack_stack(modes, comps):
    return modes.to_coeffs(comps).reshape(-1)


def _unpack_stack(modes, vec, ncomp):
    return modes.from_coeffs(vec.reshape(ncomp, modes.dim))


def _sym_weight_fields(md, grid):
    """Quadratic-form weights on stored sym components, quadrature grid."""
    pairs = sym_index_pairs(grid.n)
    ginv = md.ginv_2N
    dens = md.sqrtdet_2N
    P = ginv.shape[-1]
    W = np.empty((len(pairs), len(pairs)) + (P,) * grid.n)

    def expand(p):
        i, j = p
        return [(i, j)] if i == j else [(i, j), (j, i)]

    for a, pa in enumerate(pairs):
        for b, pb in enumerate(pairs):
            acc = np.zeros((P,) * grid.n)
            for (i, j) in expand(pa):
                for (k, l) in expand(pb):
                    acc += ginv[i, k] * ginv[j, l]
            W[a, b] = acc * dens
    return W


def _form_weight_fields(md, grid, k):
    sets = index_sets(grid.n, k)
    P = md.sqrtdet_2N.shape[-1]
    W = np.empty((len(sets), len(sets)) + (P,) * grid.n)
    for a, I in enumerate(sets):
        for b, J in enumerate(sets):
            W[a, b] = md.form_weight(k, I, J)
    return W


def _gram_from_weights(modes, Wblocks):
    nc = Wblocks.shape[0]
    m = modes.dim
    G = np.zeros((nc * m, nc * m))
    for a in range(nc):
        for b in range(a, nc):
            blk = modes.gram_weighted(Wblocks[a, b])
            G[a * m:(a + 1) * m, b * m:(b + 1) * m] = blk
            if b != a:
                G[b * m:(b + 1) * m, a * m:(a + 1) * m] = blk.T
    return 0.5 * (G + G.T)


def _wedge_gamma_fields(grid, gamma_2N):
    """(gamma ^ dx_c)_K on the quadrature grid, for each c and 2-set K."""
    from .calculus import _shuffle_sign
    sets2 = index_sets(grid.n, 2)
    P = gamma_2N.shape[-1]
    out = np.zeros((grid.n, len(sets2)) + (P,) * grid.n)
    for c in range(grid.n):
        for b, K in enumerate(sets2):
            if c not in K:
                continue
            (i,) = tuple(x for x in K if x != c)
            out[c, b] = _shuffle_sign((i,), (c,)) * gamma_2N[i]
    return out


def descriptor(kind, grid, V=None):
    """Build a FieldSpaceDescriptor of the given kind.

    ``V`` supplies the bundle metric where one is needed; None means flat.
    """
    modes = ScalarModes(grid)
    n = grid.n
    md = _MetricData(grid, V.g) if V is not None else _MetricData(grid, SymTensor2.flat(grid))

    if kind == "scalar":
        W = md.sqrtdet_2N[None, None]
        gram = _gram_from_weights(modes, W)
        return FieldSpaceDescriptor(
            kind, grid, 1, gram,
            lambda f: _pack_stack(modes, f.comps if isinstance(f, (KForm, ScalarField))
                                  else f.to_form().comps),
            lambda v: ScalarField(grid, _unpack_stack(modes, v, 1)[0]))

    if kind in ("sections_exact", "sections_odd"):
        odd = kind.endswith("odd")
        ncomp = 2 * n + (1 if odd else 0)
        P = md.sqrtdet_2N.shape[-1]
        W = np.zeros((ncomp, ncomp) + (P,) * n)
        gm2 = np.linalg.inv(np.moveaxis(md.ginv_2N, (0, 1), (-2, -1)))
        gm2 = np.moveaxis(gm2, (-2, -1), (0, 1))
        for i in range(n):
            for j in range(n):
                W[i, j] = gm2[i, j] * md.sqrtdet_2N
        off = n
        if odd:
            W[off, off] = md.sqrtdet_2N
            off += 1
        for i in range(n):
            for j in range(n):
                W[off + i, off + j] = md.ginv_2N[i, j] * md.sqrtdet_2N
        gram = _gram_from_weights(modes, W)

        if odd:
            def pack(s):
                comps = np.concatenate([s.u.comps, s.f.comps, s.alpha.comps])
                return _pack_stack(modes, comps)

            def unpack(v):
                c = _unpack_stack(modes, v, ncomp)
                return OddSection(VectorField(grid, c[:n]),
                                  ScalarField(grid, c[n]),
                                  KForm(grid, 1, c[n + 1:]))
        else:
            def pack(s):
                comps = np.concatenate([s.u.comps, s.alpha.comps])
                return _pack_stack(modes, comps)

            def unpack(v):
                c = _unpack_stack(modes, v, ncomp)
                return ExactSection(VectorField(grid, c[:n]), KForm(grid, 1, c[n:]))
        return FieldSpaceDescriptor(kind, grid, ncomp, gram, pack, unpack)

    if kind in ("pairs_exact", "pairs_odd"):
        odd = kind.endswith("odd")
        nsym = n * (n + 1) // 2
        c2 = n_components(n, 2)
        ncomp = nsym + c2 + (n if odd else 0)
        P = md.sqrtdet_2N.shape[-1]
        W = np.zeros((ncomp, ncomp) + (P,) * n)
        W[:nsym, :nsym] = _sym_weight_fields(md, grid)
        W2 = _form_weight_fields(md, grid, 2)
        W[nsym:nsym + c2, nsym:nsym + c2] = W2
        if odd:
            gamma_2N = grid.kit.pad(V.gamma.comps, 2 * grid.N) if V is not None \
                else np.zeros((n,) + (2 * grid.N,) * n)
            GW = _wedge_gamma_fields(grid, gamma_2N)
            W1 = _form_weight_fields(md, grid, 1)
            o1 = nsym + c2
            # | omega. - gamma ^ gamma. |^2 contributions
            for c in range(n):
                for d in range(n):
                    acc = np.zeros((P,) * n)
                    for a in range(c2):
                        for b in range(c2):
                            acc += GW[c, a] * W2[a, b] * GW[d, b]
                    W[o1 + c, o1 + d] = W1[c, d] + acc
                for a in range(c2):
                    cross = np.zeros((P,) * n)
                    for b in range(c2):
                        cross += W2[a, b] * GW[c, b]
                    W[nsym + a, o1 + c] = -cross
                    W[o1 + c, nsym + a] = -cross
        gram = _gram_from_weights(modes, W)

        if odd:
            def pack(t):
                comps = np.concatenate([t.g_dot.comps, t.omega_dot.comps,
                                        t.gamma_dot.comps])
                return _pack_stack(modes, comps)

            def unpack(v):
                c = _unpack_stack(modes, v, ncomp)
                return GMTangent(SymTensor2(grid, c[:nsym]),
                                 KForm(grid, 2, c[nsym:nsym + c2]),
                                 KForm(grid, 1, c[nsym + c2:]), "odd")
        else:
            def pack(t):
                comps = np.concatenate([t.g_dot.comps, t.omega_dot.comps])
                return _pack_stack(modes, comps)

            def unpack(v):
                c = _unpack_stack(modes, v, ncomp)
                return GMTangent(SymTensor2(grid, c[:nsym]), KForm(grid, 2, c[nsym:]))
        return FieldSpaceDescriptor(kind, grid, ncomp, gram, pack, unpack)

    if kind.startswith("forms_"):
        degs = tuple(int(c) for c in kind.split("_")[1])
        counts = [n_components(n, k) for k in degs]
        ncomp = sum(counts)
        gram = np.eye(ncomp * modes.dim)

        def pack(forms):
            comps = np.concatenate([f.comps for f in forms])
            return _pack_stack(modes, comps)

        def unpack(v):
            c = _unpack_stack(modes, v, ncomp)
            out, at = [], 0
            for k, cnt in zip(degs, counts):
                out.append(KForm(grid, k, c[at:at + cnt]))
                at += cnt
            return tuple(out)
        return FieldSpaceDescriptor(kind, grid, ncomp, gram, pack, unpack)

    raise ValueError(f"unknown field space kind {kind!r}")


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

class OperatorMatrix:
    """Dense operator between field spaces, with Gram-aware linear algebra."""

    def __init__(self, dom, cod, mat):
        if mat.shape != (cod.dim, dom.dim):
            raise ValueError("matrix shape inconsistent with descriptors")
        self.dom = dom
        self.cod = cod
        self.mat = mat
        self._svd = None

    def apply(self, obj):
        return self.cod.unpack(self.mat @ self.dom.pack(obj))

    def whitened(self):
        """L_cod^T M L_dom^{-T}: the operator between whitened coordinates."""
        return self.cod.chol.T @ sla.solve_triangular(
            self.dom.chol.T, self.mat.T, lower=False).T

    def _svd_data(self):
        if self._svd is None:
            U, s, Vt = np.linalg.svd(self.whitened())
            self._svd = (U, s, Vt)
        return self._svd

    def rank(self, rtol=RANK_RTOL):
        _, s, _ = self._svd_data()
        if len(s) == 0 or s[0] == 0.0:
            return 0
        thresh = rtol * s[0]
        tied = np.sum((s > thresh / 10) & (s < thresh * 10))
        if tied:
            warnings.warn(f"{int(tied)} singular values within a decade of the "
                          "rank threshold; re-accumulating at higher precision")
            W = self.whitened().astype(np.longdouble)
            s2 = np.linalg.svd((W.T @ W).astype(np.float64), compute_uv=False)
            s2 = np.sqrt(np.clip(s2, 0.0, None))
            r1 = int(np.sum(s > thresh))
            r2 = int(np.sum(s2 > rtol * s2[0]))
            if r1 != r2:
                raise RankAmbiguity(
                    f"rank undecidable: {r1} vs {r2} at threshold {thresh:.3e}")
            return r1
        return int(np.sum(s > thresh))

    def kernel_basis(self, rtol=RANK_RTOL):
        """Gram-orthonormal basis of ker, as coordinate columns."""
        U, s, Vt = self._svd_data()
        r = self.rank(rtol)
        return self.dom.unwhiten(Vt[r:].T)

    def cokernel_basis(self, rtol=RANK_RTOL):
        """Gram-orthonormal basis of ker(adjoint) in the codomain."""
        U, s, Vt = self._svd_data()
        r = self.rank(rtol)
        return self.cod.unwhiten(U[:, r:])

    def range_basis(self, rtol=RANK_RTOL):
        U, s, Vt = self._svd_data()
        r = self.rank(rtol)
        return self.cod.unwhiten(U[:, :r])

    def norm2(self):
        _, s, _ = self._svd_data()
        return float(s[0]) if len(s) else 0.0


def adjoint(op):
    """Gram-adjoint: <op x, y>_cod = <x, adjoint y>_dom at matrix level."""
    mat = sla.cho_solve((op.dom.chol, True), op.mat.T @ op.cod.gram)
    return OperatorMatrix(op.cod, op.dom, mat)


def compose_ops(op2, op1):
    if op1.cod is not op2.dom and op1.cod.dim != op2.dom.dim:
        raise ValueError("dimension mismatch in composition")
    return OperatorMatrix(op1.dom, op2.cod, op2.mat @ op1.mat)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _basis_fields(desc):
    """Yield (index, unpacked basis object)."""
    for j in range(desc.dim):
        v = np.zeros(desc.dim)
        v[j] = 1.0
        yield j, desc.unpack(v)


def _a_exact_functional(V, twist):
    H = twist.H

    def apply(s):
        g_dot = lie_sym(s.u, V.g)
        w_dot = lie_form(s.u, V.omega) + ext_deriv(s.alpha)
        if H is not None:
            w_dot = w_dot - interior(s.u, H)
        return GMTangent(g_dot, w_dot)
    return apply


def _a_odd_functional(V, twist):
    """Differential of the orbit map composed with iota_e:
    (u, f, a) -> (L_u g, (L_u omega - i_uH + da + 2fF + (i_uF - df)^gamma,
                          L_u gamma + i_uF - df))."""
    H, F = twist.H, twist.F

    def apply(s):
        grid = s.grid
        g_dot = lie_sym(s.u, V.g)
        df = ext_deriv(s.f.to_form())
        kit = grid.kit
        w_dot = lie_form(s.u, V.omega) + ext_deriv(s.alpha)
        w_dot = w_dot + KForm(grid, 2, 2.0 * kit.mul_padded(
            s.f.to_form().padded(), F.padded()))
        if H is not None:
            w_dot = w_dot - interior(s.u, H)
        ka = interior(s.u, F) - df
        w_dot = w_dot + wedge(ka, V.gamma)
        gam_dot = lie_form(s.u, V.gamma) + ka
        return GMTangent(g_dot, w_dot, gam_dot, "odd")
    return apply


def assemble(name, V, twist, grid):
    """Assemble a named operator as an OperatorMatrix (dense regime)."""
    if name == "A_exact":
        dom = descriptor("sections_exact", grid, V)
        cod = descriptor("pairs_exact", grid, V)
        fn = _a_exact_functional(V, twist)
    elif name == "B_exact":
        dom = descriptor("scalar", grid, V)
        cod = descriptor("sections_exact", grid, V)

        def fn(f):
            return ExactSection(VectorField.zero(grid), ext_deriv(f.to_form()))
    elif name == "A_odd":
        dom = descriptor("sections_odd", grid, V)
        cod = descriptor("pairs_odd", grid, V)
        fn = _a_odd_functional(V, twist)
    elif name == "B_odd":
        dom = descriptor("scalar", grid, V)
        cod = descriptor("sections_odd", grid, V)

        def fn(f):
            return OddSection(VectorField.zero(grid), ScalarField.zero(grid),
                              ext_deriv(f.to_form()))
    elif name == "A_full":
        base = assemble("A_exact", V, twist, grid)
        hb = flat_context(grid).harmonic_basis(2)
        cols = [base.cod.pack(GMTangent(SymTensor2.zero(grid), h)) for h in hb]
        mat = np.hstack([base.mat] + [c[:, None] for c in cols])
        dom = _augmented_domain(base.dom, len(hb))
        return OperatorMatrix(dom, base.cod, mat)
    elif name == "dF_1":
        dom = descriptor("forms_10", grid)
        cod = descriptor("forms_21", grid)
        return _df_operator(dom, cod, twist, 1)
    elif name == "dF_2":
        dom = descriptor("forms_21", grid)
        cod = descriptor("forms_32", grid)
        return _df_operator(dom, cod, twist, 2)
    else:
        raise ValueError(f"unknown operator name {name!r}")

    mat = np.empty((cod.dim, dom.dim))
    for j, field in _basis_fields(dom):
        mat[:, j] = cod.pack(fn(field))
    return OperatorMatrix(dom, cod, mat)


def _augmented_domain(dom, extra):
    """Sections space with an appended orthonormal harmonic block."""
    gram = np.zeros((dom.dim + extra, dom.dim + extra))
    gram[:dom.dim, :dom.dim] = dom.gram
    gram[dom.dim:, dom.dim:] = np.eye(extra)

    def pack(obj):
        s, coeffs = obj
        return np.concatenate([dom.pack(s), np.asarray(coeffs, dtype=float)])

    def unpack(v):
        return dom.unpack(v[:dom.dim]), v[dom.dim:].copy()

    out = FieldSpaceDescriptor.__new__(FieldSpaceDescriptor)
    out.kind = dom.kind + "+H2"
    out.grid = dom.grid
    out.modes = dom.modes
    out.ncomp = dom.ncomp
    out.dim = dom.dim + extra
    out.gram = gram
    out.chol = sla.cholesky(gram, lower=True)
    out._pack = pack
    out._unpack = unpack
    return out


def _df_operator(dom, cod, twist, step):
    grid = dom.grid
    modes = dom.modes
    m = modes.dim
    n = grid.n
    c1, c2, c3 = (n_components(n, k) for k in (1, 2, 3))
    if step == 1:
        mat = np.zeros((cod.dim, dom.dim))
        mat[:c2 * m, :c1 * m] = _scalar_d_blocks(grid, 1)
        mat[:c2 * m, c1 * m:] = 2.0 * _wedge_f_blocks(grid, twist.F, 0)
        mat[c2 * m:, c1 * m:] = _scalar_d_blocks(grid, 0)
    else:
        mat = np.zeros((cod.dim, dom.dim))
        if c3:
            mat[:c3 * m, :c2 * m] = _scalar_d_blocks(grid, 2)
            mat[:c3 * m, c2 * m:] = -2.0 * _wedge_f_blocks(grid, twist.F, 1)
        mat[c3 * m:, c2 * m:] = _scalar_d_blocks(grid, 1)
    return OperatorMatrix(dom, cod, mat)


# ---------------------------------------------------------------------------
# complex checks and Green operators
# ---------------------------------------------------------------------------

def complex_check(Bop, Aop):
    """Normalized spectral norm of A o B; ~0 certifies a complex."""
    if Bop.cod.dim != Aop.dom.dim:
        raise ValueError("codomain/domain mismatch in complex_check")
    prod = compose_ops(Aop, Bop)
    denom = Aop.norm2() * Bop.norm2()
    return prod.norm2() / denom if denom > 0 else prod.norm2()


def complex_green(Aop, Bop, rtol=RANK_RTOL):
    """Green operator of Delta_c = A*A + BB* on the middle space.

    Returns an OperatorMatrix with attributes ``kernel_projector`` (matrix)
    and ``kernel_dim``; raises on uncertifiable rank and reports
    conditioning through ``smallest_nonzero``.
    """
    mid = Aop.dom
    Astar = adjoint(Aop)
    Bstar = adjoint(Bop)
    delta = Astar.mat @ Aop.mat + Bop.mat @ Bstar.mat
    L = mid.chol
    C = L.T @ sla.solve_triangular(L, delta.T, lower=True).T
    C = 0.5 * (C + C.T)
    evals, Q = np.linalg.eigh(C)
    emax = max(evals[-1], 1.0)
    thresh = rtol * emax
    tied = np.sum((evals > thresh / 10) & (evals < thresh * 10))
    if tied:
        warnings.warn("eigenvalues within a decade of the kernel threshold; "
                      "re-accumulating at higher precision")
        deltah = (Astar.mat.astype(np.longdouble) @ Aop.mat.astype(np.longdouble)
                  + Bop.mat.astype(np.longdouble) @ Bstar.mat.astype(np.longdouble))
        Ch = L.T @ sla.solve_triangular(L, deltah.astype(np.float64).T, lower=True).T
        e2 = np.linalg.eigvalsh(0.5 * (Ch + Ch.T))
        if int(np.sum(evals < thresh)) != int(np.sum(e2 < rtol * max(e2[-1], 1.0))):
            raise RankAmbiguity("kernel dimension of Delta_c undecidable")
    kdim = int(np.sum(evals < thresh))
    inv = np.zeros_like(evals)
    inv[kdim:] = 1.0 / evals[kdim:]
    back = sla.solve_triangular(L.T, Q, lower=False)
    Gmat = back @ (inv[:, None] * (Q.T @ L.T))
    Pker = back[:, :kdim] @ (back[:, :kdim].T @ mid.gram)
    out = OperatorMatrix(mid, mid, Gmat)
    out.kernel_projector = Pker
    out.kernel_dim = kdim
    out.smallest_nonzero = float(evals[kdim]) if kdim < len(evals) else math.inf
    if out.smallest_nonzero < 1e-10 * emax:
        warnings.warn(f"Delta_c poorly conditioned: smallest nonzero eigenvalue "
                      f"{out.smallest_nonzero:.3e}")
    return out


def orbit_projector(Aop, Gc):
    """P = A Gc A*: Gram-symmetric idempotent with range Im A."""
    Astar = adjoint(Aop)
    mat = Aop.mat @ Gc.mat @ Astar.mat
    return OperatorMatrix(Aop.cod, Aop.cod, mat)


# ---------------------------------------------------------------------------
# full-group decomposition and direct-sum lemmas
# ---------------------------------------------------------------------------

def full_group_decomposition(Aop, h2_forms, rtol=RANK_RTOL):
    """Split the harmonic directions against Im A in the codomain.

    For each harmonic 2-form h_i, the augmented operator maps the extra
    generator to y_i = (0, h_i); decompose y_i = A x_i + f_i with f_i in
    ker A*.  Returns a dict with the F basis (columns), the projector p0
    onto span{f_i} within the codomain, a Gram-orthonormal basis of
    nu' = ker A* ∩ ker p0, and rank bookkeeping.
    """
    from .grid import SymTensor2 as _S2
    cod = Aop.cod
    grid = cod.grid
    ys = np.stack([cod.pack(GMTangent(_S2.zero(grid), h)) for h in h2_forms], axis=1)
    W = Aop.whitened()
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    r = Aop.rank(rtol)
    yw = cod.chol.T @ ys
    proj = U[:, :r] @ (U[:, :r].T @ yw)       # Im A component (whitened)
    fw = yw - proj
    fs = cod.unwhiten(fw)
    # numerical rank of the f_i family
    fU, fsv, _ = np.linalg.svd(fw, full_matrices=False)
    fdim = int(np.sum(fsv > rtol * max(fsv[0], 1e-30))) if fsv.size else 0
    fbasis = cod.unwhiten(fU[:, :fdim])
    p0 = fbasis @ (fbasis.T @ cod.gram)
    # nu' = ker A* ∩ ker p0
    coker = Aop.cokernel_basis(rtol)          # Gram-orthonormal columns
    cw = cod.chol.T @ coker
    cw_perp = cw - fU[:, :fdim] @ (fU[:, :fdim].T @ cw)
    nU, nsv, _ = np.linalg.svd(cw_perp, full_matrices=False)
    ndim = int(np.sum(nsv > 1e-10))
    nu_prime = cod.unwhiten(nU[:, :ndim])
    # Im A' = Im A + span{y_i}: rank check
    aug = np.hstack([U[:, :r] * s[:r], yw])
    rank_APrime = int(np.linalg.matrix_rank(aug, tol=rtol * max(s[0], 1.0)))
    return {
        "f_columns": fs,
        "f_dim": fdim,
        "p0": p0,
        "nu_prime": nu_prime,
        "rank_A": r,
        "rank_A_full": rank_APrime,
        "im_split_ok": rank_APrime == r + fdim,
        "codomain_dims_ok": r + fdim + ndim == cod.dim,
    }


def direct_sum_checks(Afull, Aexact, h2_forms, rtol=RANK_RTOL):
    """Numerical checks of the kernel/image direct-sum lemmas.

    Domain of Afull = domain of Aexact ⊕ R^{b2} (harmonic block).  Verifies
    dim ker A >= dim ker A0, builds the completion H' and checks
    dim E = dim ker A + dim E2 + dim H', and certifies the orthogonal
    splitting codomain = Im A ⊕ ker A*.
    """
    E = Afull.dom
    E0dim = Aexact.dom.dim
    b2 = E.dim - E0dim
    kerA = Afull.kernel_basis(rtol)
    kerA0 = Aexact.kernel_basis(rtol)
    dim_kerA = kerA.shape[1]
    dim_kerA0 = kerA0.shape[1]
    rank_A0 = E0dim - dim_kerA0
    # embed ker A0 into E and project ker A onto its complement
    kerA0_emb = np.vstack([kerA0, np.zeros((b2, dim_kerA0))])
    Wk = E.chol.T @ kerA
    Wk0 = E.chol.T @ kerA0_emb
    q0, _ = np.linalg.qr(Wk0) if dim_kerA0 else (np.zeros((E.dim, 0)), None)
    resid = Wk - q0 @ (q0.T @ Wk)
    rU, rsv, _ = np.linalg.svd(resid, full_matrices=False)
    extra = int(np.sum(rsv > 1e-10))
    # H' = complement in the harmonic block of the extra kernel directions
    h_comps = E.unwhiten(rU[:, :extra])[E0dim:, :]
    hU, hsv, _ = np.linalg.svd(h_comps, full_matrices=False) if extra else \
        (np.zeros((b2, 0)), np.zeros(0), None)
    used = int(np.sum(hsv > 1e-10)) if extra else 0
    dim_Hprime = b2 - used
    dim_E2 = rank_A0
    bookkeeping = dim_kerA + dim_E2 + dim_Hprime == E.dim
    # codomain = Im A ⊕ ker A*, orthogonal
    rng = Afull.range_basis(rtol)
    cok = Afull.cokernel_basis(rtol)
    cross = rng.T @ Afull.cod.gram @ cok
    ortho = float(np.max(np.abs(cross))) if cross.size else 0.0
    return {
        "dim_ker_A": dim_kerA,
        "dim_ker_A0": dim_kerA0,
        "kernel_monotone": dim_kerA >= dim_kerA0,
        "dim_E2": dim_E2,
        "dim_Hprime": dim_Hprime,
        "dim_E": E.dim,
        "bookkeeping_ok": bookkeeping,
        "im_coker_orthogonality": ortho,
        "codomain_split_ok": rng.shape[1] + cok.shape[1] == Afull.cod.dim,
    }


def decomposition_report_json(name, op, residuals):
    import json
    return json.dumps({
        "operator": name,
        "dims": [op.cod.dim, op.dom.dim],
        "rank": op.rank(),
        "kernel_dim": op.dom.dim - op.rank(),
        "residuals": residuals,
        "pass": all(v <= 1e-7 for v in residuals.values()
                    if isinstance(v, float)),
    }, sort_keys=True)
