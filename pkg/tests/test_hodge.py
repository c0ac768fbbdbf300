import io
import json
import math

import numpy as np
import pytest

from ggtorus import (
    AffineDiffeo, HodgeContext, KForm, ScalarField, SymTensor2, ext_deriv,
    flat_context, make_grid, pullback,
)
from ggtorus.hodge import codiff_sign, hodge_summary_json, spectrum_csv
from ggtorus.rng import CounterRng, random_kform, random_metric


@pytest.fixture(scope="module")
def curved_t2():
    grid = make_grid(2, 16)
    x1, x2 = grid.coords
    g = SymTensor2(grid, np.stack([1 + 0.3 * np.sin(x1),
                                   0.1 * np.cos(x1 + x2),
                                   1 + 0.2 * np.cos(x2)]))
    return HodgeContext(grid, g)


@pytest.fixture(scope="module")
def curved_t3():
    grid = make_grid(3, 8)
    rng = CounterRng(7, "curved-t3")
    return HodgeContext(grid, random_metric(grid, rng, amplitude=0.3))


# ---------------------------------------------------------------------------
# star
# ---------------------------------------------------------------------------

def test_star_flat_t2(t2):
    ctx = flat_context(t2)
    s = ctx.star(KForm.constant(t2, 1, [1.0, 0.0]))
    assert np.allclose(s.comps[0], 0.0) and np.allclose(s.comps[1], 1.0)


def test_star_involution_flat(t2, rng):
    ctx = flat_context(t2)
    for k in (0, 1, 2):
        w = random_kform(t2, k, rng, kmax=3)
        ss = ctx.star(ctx.star(w))
        sign = (-1) ** (k * (2 - k))
        assert (ss - sign * w).max_abs() < 1e-13


def test_star_conformal_invariance_on_one_forms(t2, rng):
    # pointwise 2x2 linear-algebra oracle: for g = e^{2f} delta on T^2 the
    # star on 1-forms is conformally invariant, i.e. equals the flat star
    x1 = t2.coords[0]
    f = 0.2 * np.sin(x1)
    g = SymTensor2(t2, np.stack([np.exp(2 * f), np.zeros(t2.shape),
                                 np.exp(2 * f)]))
    ctx = HodgeContext(t2, g, method="dense")
    w = random_kform(t2, 1, rng, kmax=3)
    flat = flat_context(t2).star(w)
    curved = ctx.star(w)
    assert (curved - flat).max_abs() <= 1e-12 * max(w.max_abs(), 1.0)


# ---------------------------------------------------------------------------
# inner products and codifferential
# ---------------------------------------------------------------------------

def test_l2_inner_analytic(t2):
    # int cos^2(x1) over [0,2pi]^2 = 2 pi^2 (independent analytic oracle)
    ctx = flat_context(t2)
    f = ScalarField(t2, np.cos(t2.coords[0])).to_form()
    assert abs(ctx.l2_inner(f, f) - 2 * np.pi ** 2) < 1e-12


def test_l2_inner_orthogonality_and_pd(t2, rng):
    ctx = flat_context(t2)
    dx1 = KForm.constant(t2, 1, [1.0, 0.0])
    dx2 = KForm.constant(t2, 1, [0.0, 1.0])
    assert abs(ctx.l2_inner(dx1, dx2)) < 1e-14
    w = random_kform(t2, 1, rng, kmax=3)
    assert ctx.l2_inner(w, w) > 0
    assert abs(ctx.l2_inner(KForm.zero(t2, 1), KForm.zero(t2, 1))) == 0.0


def test_l2_inner_degree_mismatch(t2):
    ctx = flat_context(t2)
    with pytest.raises(ValueError):
        ctx.l2_inner(KForm.zero(t2, 0), KForm.zero(t2, 1))


def test_codiff_constant_one_form(t2):
    assert flat_context(t2).codiff(KForm.constant(t2, 1, [2.0, -1.0])).max_abs() < 1e-13


def test_codiff_on_gradients_is_laplacian(t2):
    ctx = flat_context(t2)
    x1 = t2.coords[0]
    f = ScalarField(t2, np.cos(x1)).to_form()
    out = ctx.codiff(ext_deriv(f))
    assert np.allclose(out.comps[0], np.cos(x1), atol=1e-12)  # eigenvalue 1


def test_codiff_example_and_adjoint_oracle(t2, rng):
    ctx = flat_context(t2)
    x1 = t2.coords[0]
    w = KForm(t2, 1, np.stack([np.cos(x1), np.zeros(t2.shape)]))
    cd = ctx.codiff(w)
    assert np.allclose(cd.comps[0], np.sin(x1), atol=1e-12)
    # adjoint-identity oracle on random alpha
    for _ in range(5):
        a = random_kform(t2, 0, rng, kmax=3)
        lhs = ctx.l2_inner(ext_deriv(a), w)
        rhs = ctx.l2_inner(a, cd)
        assert abs(lhs - rhs) <= 1e-11 * (1 + abs(lhs))


@pytest.mark.parametrize("fixture", ["curved_t2", "curved_t3"])
def test_adjointness_curved(fixture, rng, request):
    ctx = request.getfixturevalue(fixture)
    grid = ctx.grid
    for k in range(1, grid.n + 1):
        for _ in range(8):
            a = random_kform(grid, k - 1, rng, kmax=2)
            w = random_kform(grid, k, rng, kmax=2)
            lhs = ctx.l2_inner(ext_deriv(a), w)
            rhs = ctx.l2_inner(a, ctx.codiff(w))
            assert abs(lhs - rhs) <= 1e-9 * (1 + a.norm() * w.norm())


def test_codiff_degree_zero_rejected(t2):
    with pytest.raises(ValueError):
        flat_context(t2).codiff(KForm.zero(t2, 0))


def test_codiff_star_formula_matches_adjoint(curved_t2, rng):
    # design realization d* = (-1)^{n(k+1)+1} star d star: exact on the
    # flat path, spectrally convergent for curved metrics
    w = random_kform(curved_t2.grid, 1, rng, kmax=2)
    d1 = curved_t2.codiff(w)
    d2 = curved_t2.codiff_star_formula(w)
    assert (d1 - d2).norm() <= 1e-3 * max(d1.norm(), 1.0)
    assert codiff_sign(2, 1) == -1


# ---------------------------------------------------------------------------
# Laplacian, harmonic bases, Green operator
# ---------------------------------------------------------------------------

def test_laplacian_kernel_and_eigenfunction(t2):
    ctx = flat_context(t2)
    assert ctx.laplacian(KForm.constant(t2, 0, [3.0])).max_abs() < 1e-13
    f = ScalarField(t2, np.cos(t2.coords[0])).to_form()
    assert (ctx.laplacian(f) - f).max_abs() < 1e-12


def test_laplacian_nonnegative(curved_t2, rng):
    for _ in range(5):
        w = random_kform(curved_t2.grid, 1, rng, kmax=2)
        assert curved_t2.l2_inner(curved_t2.laplacian(w), w) >= -1e-10


def test_harmonic_basis_flat(t2):
    ctx = flat_context(t2)
    basis = ctx.harmonic_basis(1)
    assert len(basis) == 2
    for i, h in enumerate(basis):
        for j, k in enumerate(basis):
            want = 1.0 if i == j else 0.0
            assert abs(ctx.l2_inner(h, k) - want) < 1e-12


def test_kernel_dims_match_binomials(curved_t2, curved_t3):
    for ctx in (curved_t2, curved_t3):
        n = ctx.grid.n
        dims = ctx.kernel_dims()
        assert dims == {k: math.comb(n, k) for k in range(n + 1)}


def test_kernel_dims_by_dense_eigensolve_oracle(t2_small):
    # independent oracle: count near-zero eigenvalues of the assembled
    # Laplacian (dense eigensolve at N=8)
    rng = CounterRng(3, "eig-oracle")
    ctx = HodgeContext(t2_small, random_metric(t2_small, rng, amplitude=0.4),
                       method="dense")
    for k in range(3):
        evals = ctx.eigenvalues(k)
        near_zero = int(np.sum(evals < 1e-8 * max(evals[-1], 1.0)))
        assert near_zero == math.comb(2, k)


def test_green_annihilates_harmonics(curved_t2):
    h = curved_t2.harmonic_basis(1)[0]
    assert curved_t2.green(h).norm() < 1e-10


def test_green_flat_eigenfunction(t2):
    ctx = flat_context(t2)
    f = ScalarField(t2, np.cos(t2.coords[0])).to_form()
    assert (ctx.green(f) - f).max_abs() < 1e-12


@pytest.mark.parametrize("fixture", ["curved_t2", "curved_t3"])
def test_green_identity(fixture, rng, request):
    ctx = request.getfixturevalue(fixture)
    for k in range(ctx.grid.n + 1):
        w = random_kform(ctx.grid, k, rng, kmax=2)
        resid = (ctx.laplacian(ctx.green(w)) + ctx.harmonic_projection(w) - w)
        assert resid.norm() <= 1e-9 * max(w.norm(), 1e-12)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

def test_decompose_closed_has_no_coexact(curved_t2, rng):
    w = ext_deriv(random_kform(curved_t2.grid, 0, rng, kmax=2))
    e, c, h = curved_t2.hodge_decompose(w)
    assert c.norm() <= 1e-10 * max(w.norm(), 1e-12)


def test_decompose_harmonic_is_fixed(curved_t2):
    h0 = curved_t2.harmonic_basis(1)[1]
    e, c, h = curved_t2.hodge_decompose(h0)
    assert e.norm() < 1e-10 and c.norm() < 1e-10
    assert (h - h0).norm() < 1e-10


@pytest.mark.parametrize("fixture", ["curved_t2", "curved_t3"])
def test_decompose_random(fixture, rng, request):
    ctx = request.getfixturevalue(fixture)
    k = 2 if ctx.grid.n == 3 else 1
    w = random_kform(ctx.grid, k, rng, kmax=2)
    e, c, h = ctx.hodge_decompose(w)
    assert (e + c + h - w).norm() <= 1e-9 * w.norm()
    for a, b in ((e, c), (e, h), (c, h)):
        assert abs(ctx.l2_inner(a, b)) <= 1e-10 * max(w.norm() ** 2, 1.0)


# ---------------------------------------------------------------------------
# isometry naturality and engine cross-checks
# ---------------------------------------------------------------------------

def test_isometry_naturality(t2_small, rng):
    # average a metric over the C4 rotation so phi is an isometry
    rot = AffineDiffeo(t2_small, [[0, -1], [1, 0]])
    g0 = random_metric(t2_small, rng, amplitude=0.25)
    acc, cur = g0, rot
    for _ in range(3):
        acc = acc + pullback(cur, g0)
        cur = cur.compose(rot)
    g = acc * 0.25
    assert (pullback(rot, g) - g).max_abs() < 1e-12
    ctx = HodgeContext(t2_small, g, method="dense")
    w = random_kform(t2_small, 1, rng, kmax=2)
    scale = max(w.norm(), 1.0)
    assert (pullback(rot, ctx.star(w)) - ctx.star(pullback(rot, w))).norm() \
        <= 1e-10 * scale
    assert (pullback(rot, ctx.laplacian(w)) - ctx.laplacian(pullback(rot, w))).norm() \
        <= 1e-10 * scale
    assert (pullback(rot, ctx.green(w)) - ctx.green(pullback(rot, w))).norm() \
        <= 1e-10 * scale
    assert (pullback(rot, ctx.harmonic_projection(w))
            - ctx.harmonic_projection(pullback(rot, w))).norm() <= 1e-10 * scale


def test_cg_engine_matches_dense(t2_small, rng):
    g = random_metric(t2_small, rng, amplitude=0.3)
    dense = HodgeContext(t2_small, g, method="dense")
    cg = HodgeContext(t2_small, g, method="cg")
    w = random_kform(t2_small, 1, rng, kmax=2)
    assert (dense.green(w) - cg.green(w)).norm() <= 1e-10 * max(w.norm(), 1.0)
    resid = (cg.laplacian(cg.green(w)) + cg.harmonic_projection(w) - w).norm()
    assert resid <= 1e-9 * max(w.norm(), 1e-12)


def test_metric_positivity_enforced(t2):
    bad = SymTensor2(t2, np.stack([np.cos(t2.coords[0]),
                                   np.zeros(t2.shape),
                                   np.ones(t2.shape)]))
    with pytest.raises(ValueError):
        HodgeContext(t2, bad, method="dense")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_summary_and_spectrum_export(t2_small, rng):
    ctx = HodgeContext(t2_small, random_metric(t2_small, rng, amplitude=0.2),
                       method="dense")
    data = json.loads(hodge_summary_json(ctx, residuals={"demo": 0.0}))
    assert data["kernel_dims"] == {"0": 1, "1": 2, "2": 1}
    buf = io.StringIO()
    spectrum_csv(ctx, buf, count=4)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "degree,index,eigenvalue"
    assert len(lines) == 1 + 3 * 4


def test_adjointness_200_pairs_per_degree(curved_t2):
    # the quantified adjointness bound over 200 random pairs per degree
    rng = CounterRng(77, "adjoint-mass")
    ctx = curved_t2
    flat = flat_context(ctx.grid)
    for context in (flat, ctx):
        for k in (1, 2):
            worst = 0.0
            for _ in range(200):
                a = random_kform(context.grid, k - 1, rng, kmax=2, n_modes=2)
                w = random_kform(context.grid, k, rng, kmax=2, n_modes=2)
                lhs = context.l2_inner(ext_deriv(a), w)
                rhs = context.l2_inner(a, context.codiff(w))
                worst = max(worst, abs(lhs - rhs) / (1 + a.norm() * w.norm()))
            assert worst <= 1e-9
