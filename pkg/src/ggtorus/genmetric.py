"""Generalized metrics and the right action of the symmetry groups.

A generalized metric is stored as a pair (g, omega) in the exact case or a
triple (g, (omega, gamma)) in the odd case; the positive subbundle is the
pointwise graph

    exact: { u + i_u g + i_u omega }
    odd:   exp(omega, gamma) { u + r + i_u g },

and the group acts on the right by

    exact: (g, omega) . (phi, B)      = (phi^* g, phi^* omega - B)
    odd:   (g, (omega, gamma)) . (phi, (B, A))
           = (phi^* g, (phi^* omega - B - A ^ phi^* gamma, phi^* gamma - A)).

Averaging over a finite subgroup happens in this affine parametrization;
the posterior isometry check certifies invariance.
"""

from __future__ import annotations

import numpy as np

from .calculus import interior, pullback, wedge
from .courant import ExactSection, OddSection, pairing
from .grid import KForm, ScalarField, SymTensor2, VectorField
from .hodge import _MetricData
from .symmetry import compose, inverse, membership_defect

__all__ = [
    "GenMetric", "GMTangent", "graph_frame", "from_subbundle", "act",
    "isometry_defect", "isometry_residuals", "average", "tangent_inner",
    "tangent_push", "genmetric_to_json",
]


class GenMetric:
    """Generalized metric (g, omega[, gamma])."""

    __slots__ = ("g", "omega", "gamma", "kind")

    def __init__(self, g, omega, gamma=None, kind=None):
        grid = g.grid
        if not g.is_positive_definite():
            raise ValueError("metric component must be pointwise positive definite")
        if omega.degree != 2 or omega.grid != grid:
            raise ValueError("omega must be a 2-form on the grid")
        if kind is None:
            kind = "odd" if gamma is not None else "exact"
        if kind == "odd":
            gamma = KForm.zero(grid, 1) if gamma is None else gamma
            if gamma.degree != 1 or gamma.grid != grid:
                raise ValueError("gamma must be a 1-form on the grid")
        elif gamma is not None:
            raise ValueError("exact generalized metrics carry no gamma")
        self.g = g
        self.omega = omega
        self.gamma = gamma
        self.kind = kind

    @property
    def grid(self):
        return self.g.grid

    @classmethod
    def flat(cls, grid, kind="exact"):
        gamma = KForm.zero(grid, 1) if kind == "odd" else None
        return cls(SymTensor2.flat(grid), KForm.zero(grid, 2), gamma, kind)

    def distance(self, other):
        d = max((self.g - other.g).max_abs(), (self.omega - other.omega).max_abs())
        if self.kind == "odd":
            d = max(d, (self.gamma - other.gamma).max_abs())
        return d


class GMTangent:
    """Tangent vector (g_dot, omega_dot[, gamma_dot]) at a generalized metric."""

    __slots__ = ("g_dot", "omega_dot", "gamma_dot", "kind")

    def __init__(self, g_dot, omega_dot, gamma_dot=None, kind=None):
        if kind is None:
            kind = "odd" if gamma_dot is not None else "exact"
        if kind == "odd" and gamma_dot is None:
            gamma_dot = KForm.zero(g_dot.grid, 1)
        self.g_dot = g_dot
        self.omega_dot = omega_dot
        self.gamma_dot = gamma_dot
        self.kind = kind

    @property
    def grid(self):
        return self.g_dot.grid


# ---------------------------------------------------------------------------
# graph frames
# ---------------------------------------------------------------------------

def graph_frame(V):
    """Pointwise frame of the positive subbundle, as sections.

    Exact: n sections  e_i + i_{e_i} g + i_{e_i} omega.
    Odd:   those (with the gamma corrections) plus the pure scalar-slot
    direction 1 - 2 gamma; the pairing Gram of the tangent-frame block is
    g pointwise and the scalar direction is unit and orthogonal to it.
    """
    grid = V.grid
    kit = grid.kit
    frame = []
    gfull = V.g.full_matrix()
    for i in range(grid.n):
        u = VectorField.frame(grid, i)
        alpha = interior(u, V.omega) + KForm(grid, 1, gfull[i])
        if V.kind == "exact":
            frame.append(ExactSection(u, alpha))
        else:
            gam_i = ScalarField(grid, V.gamma.comps[i])
            alpha = alpha - KForm(grid, 1, kit.mul_padded(
                gam_i.to_form().padded(), V.gamma.padded()))
            frame.append(OddSection(u, gam_i, alpha))
    if V.kind == "odd":
        frame.append(OddSection(VectorField.zero(grid),
                                ScalarField.constant(grid, 1.0),
                                -2.0 * V.gamma))
    return frame


def from_subbundle(frame):
    """Recover the (g, omega[, gamma]) data from any pointwise frame of the
    positive subbundle.  Raises on rank deficiency or positivity failure."""
    grid = frame[0].grid
    n = grid.n
    odd = isinstance(frame[0], OddSection)
    r = n + 1 if odd else n
    if len(frame) != r:
        raise ValueError(f"frame must have {r} sections")
    shape = grid.shape
    if odd:
        proj = np.empty(shape + (r, r))
        alph = np.empty(shape + (r, n))
        for a, s in enumerate(frame):
            for i in range(n):
                proj[..., a, i] = s.u.comps[i]
                alph[..., a, i] = s.alpha.comps[i]
            proj[..., a, n] = s.f.values
        if np.min(np.abs(np.linalg.det(proj))) < 1e-10:
            raise ValueError("frame does not project isomorphically to TM + 1")
        atil = np.linalg.solve(proj, alph)   # rows: n tangent dirs, then pure slot
        gamma = -0.5 * np.moveaxis(atil[..., n, :], -1, 0)
        gam = np.moveaxis(gamma, 0, -1)
        # tangent rows carry (g + omega)_ij + gamma_i gamma_j
        S = atil[..., :n, :] - np.einsum("...i,...j->...ij", gam, gam)
        gmat = 0.5 * (S + np.swapaxes(S, -1, -2))
        omat = 0.5 * (S - np.swapaxes(S, -1, -2))
        g = SymTensor2.from_full_matrix(grid, np.moveaxis(gmat, (-2, -1), (0, 1)))
        if not g.is_positive_definite():
            raise ValueError("recovered metric is not positive definite")
        om = _two_form_from_matrix(grid, omat)
        gma = KForm(grid, 1, gamma)
        return GenMetric(g, om, gma, "odd")
    proj = np.empty(shape + (n, n))
    alph = np.empty(shape + (n, n))
    for a, s in enumerate(frame):
        for i in range(n):
            proj[..., a, i] = s.u.comps[i]
            alph[..., a, i] = s.alpha.comps[i]
    if np.min(np.abs(np.linalg.det(proj))) < 1e-10:
        raise ValueError("frame does not project isomorphically to TM")
    S = np.linalg.solve(proj, alph)          # alpha = u . (g + omega)
    gmat = 0.5 * (S + np.swapaxes(S, -1, -2))
    omat = 0.5 * (S - np.swapaxes(S, -1, -2))
    g = SymTensor2.from_full_matrix(grid, np.moveaxis(gmat, (-2, -1), (0, 1)))
    if not g.is_positive_definite():
        raise ValueError("recovered metric is not positive definite")
    return GenMetric(g, _two_form_from_matrix(grid, omat))


def _two_form_from_matrix(grid, omat):
    from .grid import index_sets
    comps = np.stack([omat[..., i, j] for (i, j) in index_sets(grid.n, 2)])
    return KForm(grid, 2, comps)


# ---------------------------------------------------------------------------
# group action
# ---------------------------------------------------------------------------

def act(gel, V):
    """Right action of a group element on a generalized metric."""
    if gel.kind != V.kind:
        raise ValueError("kind mismatch in act")
    phi = gel.phi
    g_new = pullback(phi, V.g)
    if V.kind == "exact":
        return GenMetric(g_new, pullback(phi, V.omega) - gel.B)
    pg = pullback(phi, V.gamma)
    om = pullback(phi, V.omega) - gel.B - wedge(gel.A, pg)
    return GenMetric(g_new, om, pg - gel.A, "odd")


def isometry_residuals(twist, gel, V):
    """Membership residual plus metric and full-data invariance residuals."""
    res = {"membership": membership_defect(twist, gel)}
    moved = act(gel, V)
    res["metric"] = (moved.g - V.g).max_abs()
    d = (moved.omega - V.omega).max_abs()
    if V.kind == "odd":
        d = max(d, (moved.gamma - V.gamma).max_abs())
    res["splitting"] = d
    return res


def isometry_defect(twist, gel, V):
    return max(isometry_residuals(twist, gel, V).values())


def average(group, V):
    """Average of V over a finite group (affine parametrization).

    ``group`` must be closed under composition and inverse; the result is
    invariant under every listed element.
    """
    _check_group(group)
    n = len(group)
    g_acc = None
    om_acc = None
    gam_acc = None
    for gel in group:
        moved = act(gel, V)
        g_acc = moved.g if g_acc is None else g_acc + moved.g
        om_acc = moved.omega if om_acc is None else om_acc + moved.omega
        if V.kind == "odd":
            gam_acc = moved.gamma if gam_acc is None else gam_acc + moved.gamma
    scale = 1.0 / n
    if V.kind == "exact":
        return GenMetric(g_acc * scale, om_acc * scale)
    return GenMetric(g_acc * scale, om_acc * scale, gam_acc * scale, "odd")


def _check_group(group, tol=1e-9):
    if not any(g.is_identity(tol) for g in group):
        raise ValueError("element list does not contain the identity")
    for g1 in group:
        if _find(group, inverse(g1), tol) is None:
            raise ValueError("element list is not closed under inverse")
        for g2 in group:
            if _find(group, compose(g1, g2), tol) is None:
                raise ValueError("element list is not closed under composition")


def _find(group, g, tol=1e-9):
    for i, h in enumerate(group):
        if g.distance(h) <= tol:
            return i
    return None


# ---------------------------------------------------------------------------
# the invariant weak metric on tangents
# ---------------------------------------------------------------------------

def tangent_inner(V, t1, t2):
    """Invariant weak pairing of tangents at V.

    Exact: int <omega_dot_1, omega_dot_2>_g + <g_dot_1, g_dot_2>_g dvol_g.
    Odd:   the omega slot is twisted to omega_dot - gamma ^ gamma_dot.
    """
    if t1.kind != V.kind or t2.kind != V.kind:
        raise ValueError("tangent kinds must match the base point")
    grid = V.grid
    md = _MetricData(grid, V.g)
    kit = grid.kit
    P = 2 * grid.N

    def form_term(a, b, k):
        from .grid import index_sets
        sets = index_sets(grid.n, k)
        ap = kit.pad(a.comps, P)
        bp = kit.pad(b.comps, P)
        tot = np.zeros((P,) * grid.n)
        for ai, I in enumerate(sets):
            for bi, J in enumerate(sets):
                tot += md.form_weight(k, I, J) * ap[ai] * bp[bi]
        return float(np.mean(tot) * grid.volume)

    def sym_term(a, b):
        ginv2 = md.ginv_2N
        dens = md.sqrtdet_2N
        afull = np.stack([a.full_matrix()[i, j] for i in range(grid.n)
                          for j in range(grid.n)])
        bfull = np.stack([b.full_matrix()[i, j] for i in range(grid.n)
                          for j in range(grid.n)])
        ap = kit.pad(afull, P).reshape((grid.n, grid.n) + (P,) * grid.n)
        bp = kit.pad(bfull, P).reshape((grid.n, grid.n) + (P,) * grid.n)
        raised = np.einsum("ik...,jl...,kl...->ij...", ginv2, ginv2, bp)
        tot = np.einsum("ij...,ij...->...", ap, raised) * dens
        return float(np.mean(tot) * grid.volume)

    if V.kind == "exact":
        return form_term(t1.omega_dot, t2.omega_dot, 2) + sym_term(t1.g_dot, t2.g_dot)
    w1 = t1.omega_dot - wedge(V.gamma, t1.gamma_dot)
    w2 = t2.omega_dot - wedge(V.gamma, t2.gamma_dot)
    return form_term(w1, w2, 2) + form_term(t1.gamma_dot, t2.gamma_dot, 1) \
        + sym_term(t1.g_dot, t2.g_dot)


def tangent_push(gel, t):
    """Differential of the action:
    exact (g., w.) -> (phi^*g., phi^*w.); odd also twists the omega slot by
    -A ^ phi^*gamma_dot and pulls back gamma_dot."""
    if gel.kind != t.kind:
        raise ValueError("kind mismatch in tangent_push")
    phi = gel.phi
    gd = pullback(phi, t.g_dot)
    wd = pullback(phi, t.omega_dot)
    if t.kind == "exact":
        return GMTangent(gd, wd)
    gad = pullback(phi, t.gamma_dot)
    return GMTangent(gd, wd - wedge(gel.A, gad), gad, "odd")


def genmetric_to_json(V):
    from .symmetry import _form_to_modespec
    data = {
        "g": {f"{i+1}{j+1}": None for (i, j) in V.g.index_pairs},
        "omega": _form_to_modespec(V.omega).to_json(),
    }
    for a, (i, j) in enumerate(V.g.index_pairs):
        comp = KForm(V.grid, 0, V.g.comps[a:a + 1])
        data["g"][f"{i+1}{j+1}"] = _form_to_modespec(comp).to_json()
    if V.kind == "odd":
        data["gamma"] = _form_to_modespec(V.gamma).to_json()
    return data
