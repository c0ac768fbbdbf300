"""Desk-scale stratification machinery: finite generalized isometry groups,
conjugacy classification, the Hodge-theoretic stratum conjugator, invariant
perturbations, and moduli projection tables.

Diffeomorphisms are drawn from a finite pool of lattice-affine maps
(finite-order GL(n,Z) matrices, grid translations), on which group laws
hold exactly.  Isometry groups are formed by pairing each metric isometry
phi with the forced B-field phi^* omega - omega and keeping the members of
the automorphism group; the conjugation identity

    (psi,C)^{-1} Isom_H(g,omega) (psi,C)
        = Isom_{psi^*(H+dC)}(psi^* g, psi^* omega - C)

is available as a set-level check.
"""

from __future__ import annotations

import itertools

import numpy as np

from .calculus import AffineDiffeo, ext_deriv, pullback
from .genmetric import GenMetric, act, average, isometry_defect
from .grid import KForm, SymTensor2
from .hodge import flat_context
from .symmetry import GroupElement, compose, conjugate, inverse, membership_defect

__all__ = [
    "FiniteSymmetryGroup", "StratumLabel", "candidate_pool", "gl_pool",
    "isometry_group", "conjugacy_classify", "stratum_conjugator",
    "invariant_perturbation", "moduli_projection_report",
]

_POOL_GUARD = 60000


class FiniteSymmetryGroup:
    """A finite set of GroupElements verified to form a group.

    The multiplication table is built exhaustively on the (exact, integer)
    diffeomorphism parts, bucketed by lattice key; the B-field slots are
    verified against full composition on all pairs up to a sample cap
    (every pair for groups of order <= 64).
    """

    def __init__(self, elements, tol=1e-9, verify_pairs=2000):
        self.elements = list(elements)
        if not self.elements:
            raise ValueError("empty element list")
        self.tol = tol
        self._index = {}
        for i, g in enumerate(self.elements):
            self._index.setdefault(g.phi.key(), []).append(i)
        self.table = self._build_table(verify_pairs)

    def _find(self, g):
        for i in self._index.get(g.phi.key(), ()):
            if g.distance(self.elements[i]) <= self.tol:
                return i
        return None

    def _build_table(self, verify_pairs):
        n = len(self.elements)
        grid = self.elements[0].grid
        if self._find(GroupElement.identity(grid, self.elements[0].kind)) is None:
            raise ValueError("identity missing from element list")
        for g1 in self.elements:
            if self._find(inverse(g1)) is None:
                raise ValueError("element list not closed under inverse")
        # exhaustive integer-level closure of the diffeomorphism parts
        mats = np.stack([g.phi.matrix for g in self.elements])
        shifts = np.stack([g.phi.shift for g in self.elements])
        prodA = np.einsum("aij,bjk->abik", mats, mats)
        prodS = (np.einsum("aij,bj->abi", mats, shifts)
                 + shifts[:, None, :]) % grid.N
        table = np.empty((n, n), dtype=int)
        ambiguous = []
        for i in range(n):
            pa, ps = prodA[i], prodS[i]
            for j in range(n):
                key = (tuple(map(tuple, pa[j].tolist())), tuple(ps[j].tolist()))
                hits = self._index.get(key, ())
                if not hits:
                    raise ValueError("element list not closed under composition")
                table[i, j] = hits[0]
                if len(hits) > 1:
                    ambiguous.append((i, j))
        for i, j in ambiguous:
            k = self._find(compose(self.elements[i], self.elements[j]))
            if k is None:
                raise ValueError("element list not closed under composition")
            table[i, j] = k
        # closure of the field slots, exhaustive up to the sample cap
        pairs = [(i, j) for i in range(n) for j in range(n)]
        if len(pairs) > verify_pairs:
            step = max(1, len(pairs) // verify_pairs)
            pairs = pairs[::step]
        for i, j in pairs:
            prod = compose(self.elements[i], self.elements[j])
            k = self._find(prod)
            if k is None:
                raise ValueError("field slots break closure at the tolerance")
            table[i, j] = k
        return table

    @property
    def order(self):
        return len(self.elements)

    def element_orders(self):
        idx_id = self._find(GroupElement.identity(self.elements[0].grid,
                                                  self.elements[0].kind))
        out = []
        for i in range(self.order):
            j, m = i, 1
            while j != idx_id:
                j = self.table[j, i]
                m += 1
                if m > self.order + 1:
                    raise RuntimeError("inconsistent multiplication table")
            out.append(m)
        return sorted(out)

    def is_abelian(self):
        return bool(np.array_equal(self.table, self.table.T))

    def conjugacy_class_sizes(self):
        n = self.order
        inv_idx = [self._find(inverse(g)) for g in self.elements]
        seen = [False] * n
        sizes = []
        for i in range(n):
            if seen[i]:
                continue
            orbit = {self.table[self.table[j, i], inv_idx[j]] for j in range(n)}
            for k in orbit:
                seen[k] = True
            sizes.append(len(orbit))
        return sorted(sizes)

    def harmonic_signature(self):
        """Multiset of (trace, det) of each element's matrix action on the
        constant 1-forms; invariant under conjugation in the pool."""
        sig = []
        for g in self.elements:
            A = g.phi.matrix
            sig.append((int(round(np.trace(A))), int(round(np.linalg.det(A)))))
        return tuple(sorted(sig))


class StratumLabel:
    """Conjugacy-class label: invariants + representative index."""

    def __init__(self, rep_index, group):
        self.rep_index = rep_index
        self.order = group.order
        self.element_orders = tuple(group.element_orders())
        self.abelian = group.is_abelian()
        self.class_sizes = tuple(group.conjugacy_class_sizes())
        self.signature = group.harmonic_signature()

    def invariants(self):
        return (self.order, self.element_orders, self.abelian,
                self.class_sizes, self.signature)

    def __eq__(self, other):
        return isinstance(other, StratumLabel) and self.rep_index == other.rep_index

    def __hash__(self):
        return hash(self.rep_index)


# ---------------------------------------------------------------------------
# candidate pools
# ---------------------------------------------------------------------------

def signed_permutations(n):
    """Signed permutation matrices: the lattice maps that preserve every
    wavevector band exactly."""
    out = []
    for perm in itertools.permutations(range(n)):
        for signs in itertools.product((-1, 1), repeat=n):
            A = np.zeros((n, n), dtype=np.int64)
            for i, p in enumerate(perm):
                A[p, i] = signs[i]
            out.append(A)
    return out


def gl_pool(n, max_order=6):
    """Finite-order GL(n,Z) matrices: entries in {-1,0,1} with order <= 6
    for n = 2, signed permutation matrices for n = 3."""
    if n != 2:
        return signed_permutations(n)
    out = []
    for entries in itertools.product((-1, 0, 1), repeat=4):
        A = np.array(entries, dtype=np.int64).reshape(2, 2)
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        if abs(det) != 1:
            continue
        M = np.eye(2, dtype=np.int64)
        for order in range(1, max_order + 1):
            M = M @ A
            if np.array_equal(M, np.eye(2, dtype=np.int64)):
                out.append(A)
                break
    return out


def candidate_pool(grid, g, tol=1e-9, translations="all"):
    """All pool diffeos preserving the metric g: finite-order lattice
    matrices combined with grid translations, filtered by phi^* g = g."""
    mats = gl_pool(grid.n)
    if translations == "all":
        shifts = list(itertools.product(range(grid.N), repeat=grid.n))
    else:
        shifts = list(translations)
    if len(mats) * len(shifts) > _POOL_GUARD:
        raise ValueError(
            f"candidate pool would have {len(mats) * len(shifts)} elements"
            f" > guard {_POOL_GUARD}; restrict translations")
    scale = max(g.max_abs(), 1.0)
    out = []
    for A in mats:
        for s in shifts:
            phi = AffineDiffeo(grid, A, np.array(s, dtype=np.int64))
            if (pullback(phi, g) - g).max_abs() <= tol * scale:
                out.append(phi)
    return out


# ---------------------------------------------------------------------------
# isometry groups
# ---------------------------------------------------------------------------

def isometry_group(twist, V, pool, tol=1e-9):
    """Members (phi, phi^*omega - omega) of the pool that are generalized
    isometries of V; the result is certified to be a group."""
    if V.kind != "exact" or twist.kind != "exact":
        raise ValueError("stratification implemented for the exact kind")
    els = []
    scale = max(V.g.max_abs(), V.omega.max_abs(), 1.0)
    for phi in pool:
        if (pullback(phi, V.g) - V.g).max_abs() > tol * scale:
            continue
        B = pullback(phi, V.omega) - V.omega
        gel = GroupElement(phi, B, kind="exact")
        if membership_defect(twist, gel) > tol * (1.0 + twist.scale()):
            continue
        if isometry_defect(twist, gel, V) > tol * scale:
            continue
        els.append(gel)
    return FiniteSymmetryGroup(els, tol=max(tol * scale * 10, 1e-9))


def group_equal(G1, G2, tol=1e-8):
    if G1.order != G2.order:
        return False
    index = {}
    for i, g in enumerate(G2.elements):
        index.setdefault(g.phi.key(), []).append(i)
    for g in G1.elements:
        if not any(g.distance(G2.elements[i]) <= tol
                   for i in index.get(g.phi.key(), ())):
            return False
    return True


def conjugate_group(G, h, tol=1e-9):
    return FiniteSymmetryGroup([conjugate(g, h) for g in G.elements], tol=tol)


def conjugate_set_equal(G, h, G2, tol=1e-8):
    """Set-level check h^{-1} G h = G2 without building a new table."""
    if G.order != G2.order:
        return False
    hinv = inverse(h)
    for g in G.elements:
        cg = compose(compose(hinv, g), h)
        if not any(cg.distance(G2.elements[i]) <= tol
                   for i in G2._index.get(cg.phi.key(), ())):
            return False
    return True


def conjugacy_classify(groups, conjugators, tol=1e-8):
    """Partition groups into conjugacy classes over the given conjugator
    pool (GroupElements); returns a StratumLabel per input group."""
    labels = [StratumLabel(i, G) for i, G in enumerate(groups)]
    reps: list[int] = []
    assign = [None] * len(groups)
    for i, G in enumerate(groups):
        placed = False
        for r in reps:
            if labels[i].invariants() != labels[r].invariants():
                continue
            if _conjugate_in_pool(groups[r], G, conjugators, tol):
                assign[i] = labels[r]
                placed = True
                break
        if not placed:
            reps.append(i)
            assign[i] = labels[i]
    return assign


def _conjugate_in_pool(G1, G2, conjugators, tol):
    if G1.order != G2.order:
        return False
    for h in conjugators:
        ok = True
        for g in G1.elements:
            cg = conjugate(g, h)
            if all(cg.distance(k) > tol for k in G2.elements):
                ok = False
                break
        if ok:
            return True
    return False


def b_field_lattice(grid, kmax=2, amplitudes=(1.0, -1.0, 0.5, -0.5)):
    """Finite lattice of single-mode B-field conjugators (plus zero)."""
    from .grid import FourierModeSpec, Mode, sample, index_sets
    out = [GroupElement.identity(grid, "exact")]
    sets = index_sets(grid.n, 2)
    seen = set()
    for comp in sets:
        for kv in itertools.product(range(-kmax, kmax + 1), repeat=grid.n):
            if all(c == 0 for c in kv):
                continue
            canon = kv if next(c for c in kv if c != 0) > 0 else tuple(-c for c in kv)
            key = (comp, canon)
            if key in seen:
                continue
            seen.add(key)
            for amp in amplitudes:
                spec = FourierModeSpec(2, [Mode(comp, canon, amp)])
                out.append(GroupElement.b_field(sample(spec, grid)))
    return out


# ---------------------------------------------------------------------------
# the stratum conjugator
# ---------------------------------------------------------------------------

def stratum_conjugator(twist, V, G, ctx=None, tol=1e-8):
    """2-form C with (Id,-C) Isom (Id,C) consisting of pure (phi, 0) pairs.

    C = C1 + C2: C1 solves dC1 = H' - H for H' the average of H over the
    isometry pool (via C1 = d* Green (H'-H), certified afterwards), and C2
    is the closed-part projection of omega - C1.  Raises when H' - H is
    not exact at the tolerance.
    """
    grid = V.grid
    ctx = ctx or flat_context(grid)
    if grid.n >= 3 and twist.H is not None:
        Havg = KForm.zero(grid, 3)
        for gel in G.elements:
            Havg = Havg + pullback(gel.phi, twist.H)
        Havg = (1.0 / G.order) * Havg
        diff = Havg - twist.H
        C1 = ctx.codiff(ctx.green(diff))
        certify = (ext_deriv(C1) - diff) if C1.degree < grid.n else None
        if certify is not None and certify.norm() > tol * (1.0 + diff.norm()):
            raise ValueError(
                "averaged twist differs by a non-exact 3-form (cohomology "
                f"obstruction, residual {certify.norm():.3e})")
    else:
        C1 = KForm.zero(grid, 2)
    rem = V.omega - C1
    if grid.n >= 3:
        exact_p, coexact_p, harm_p = ctx.hodge_decompose(rem)
        C2 = exact_p + harm_p
    else:
        # on T^2 every 2-form is closed
        C2 = rem
    return C1 + C2


# ---------------------------------------------------------------------------
# invariant perturbations and moduli projections
# ---------------------------------------------------------------------------

def invariant_perturbation(twist, V, G, Gprime, pool, rng, trials=40,
                           ts=(1e-2, 1e-3), tol=1e-9):
    """Search for a Pi(G)-invariant pair (h, omega_h) whose perturbation
    keeps G but breaks Gprime, certified by recomputing isometry groups.

    Returns (h, omega_h) or None when the lattice search is exhausted.
    """
    from .rng import random_kform, random_metric
    if G.order >= Gprime.order:
        return None
    grid = V.grid
    for _ in range(trials):
        h_raw = random_metric(grid, rng, amplitude=0.5, kmax=2, n_modes=3) \
            - SymTensor2.flat(grid)
        w_raw = random_kform(grid, 2, rng, kmax=2, n_modes=3)
        # average over G to force Pi(G)-invariance
        h_acc, w_acc = None, None
        for gel in G.elements:
            ph = pullback(gel.phi, h_raw)
            pw = pullback(gel.phi, w_raw)
            h_acc = ph if h_acc is None else h_acc + ph
            w_acc = pw if w_acc is None else w_acc + pw
        h = h_acc * (1.0 / G.order)
        w_h = w_acc * (1.0 / G.order)
        if h.max_abs() < 1e-12 and w_h.max_abs() < 1e-12:
            continue
        ok = True
        for t in ts:
            gp = SymTensor2(grid, V.g.comps + t * h.comps)
            if not gp.is_positive_definite():
                ok = False
                break
            Vp = GenMetric(gp, V.omega + t * w_h)
            Gp = isometry_group(twist, Vp, pool, tol=tol)
            contains_G = all(
                any(e.distance(f) <= 1e-8 for f in Gp.elements) for e in G.elements)
            contains_Gp = all(
                any(e.distance(f) <= 1e-8 for f in Gp.elements)
                for e in Gprime.elements)
            if not contains_G or contains_Gp:
                ok = False
                break
        if ok:
            return h, w_h
    return None


def moduli_projection_report(samples, pool_builder=None, conjugators=None,
                             tol=1e-9):
    """Tabulate, per (twist, V) sample: the generalized isometry group, the
    metric isometry pool, the stratum conjugator, and containment checks.

    With a conjugator pool, generalized isometry groups additionally get a
    conjugacy-class label shared across the samples.
    """
    out = []
    groups = []
    for twist, V in samples:
        grid = V.grid
        pool = pool_builder(grid, V.g) if pool_builder else candidate_pool(grid, V.g)
        Gh = isometry_group(twist, V, pool, tol=tol)
        groups.append(Gh)
        C = stratum_conjugator(twist, V, Gh)
        conjugated = [conjugate(g, GroupElement.b_field(C)) for g in Gh.elements]
        pure = max((g.B.norm() for g in conjugated), default=0.0)
        contained = all(
            any(gel.phi == phi for phi in pool) for gel in Gh.elements)
        out.append({
            "isom_order": Gh.order,
            "metric_isom_order": len(pool),
            "conjugator_found": True,
            "conjugated_pure_residual": pure,
            "generalized_subgroup_of_metric": contained,
        })
    if conjugators is not None:
        labels = conjugacy_classify(groups, conjugators)
        for row, label in zip(out, labels):
            row["isom_class_label"] = label.rep_index
            row["projection_class"] = (label.order, label.signature)
    return out


def stratification_csv(rows, path_or_buf):
    """CSV table of the per-sample stratification report."""
    cols = ["isom_order", "isom_class_label", "metric_isom_order",
            "conjugator_found", "projection_class"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row.get(c, "")).replace(",", ";")
                              for c in cols))
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, (str, bytes)):
        with open(path_or_buf, "w") as fh:
            fh.write(text)
    else:
        path_or_buf.write(text)
