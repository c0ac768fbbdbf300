import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ggtorus import (
    AffineDiffeo, FourierModeSpec, KForm, Mode, ScalarField, SymTensor2,
    VectorField, ext_deriv, field_to_csv, grad, interior, lie_bracket,
    lie_form, lie_sym, make_grid, pullback, pushforward, sample, wedge,
)
from ggtorus.calculus import lie_scalar
from ggtorus.rng import CounterRng, random_kform, random_scalar, random_vector


# ---------------------------------------------------------------------------
# grids and sampling
# ---------------------------------------------------------------------------

def test_make_grid_node_counts():
    assert make_grid(2, 16).node_count == 256
    assert make_grid(3, 8).node_count == 512


@pytest.mark.parametrize("n,N", [(2, 7), (2, 6), (4, 16), (1, 16), (2, 9)])
def test_make_grid_rejects(n, N):
    with pytest.raises(ValueError):
        make_grid(n, N)


def test_sample_single_mode(t2):
    spec = FourierModeSpec(0, [Mode((), (1, 0), 1.0, 0.0)])
    f = sample(spec, t2)
    assert np.allclose(f.comps[0], np.cos(t2.coords[0]))


def test_sample_empty_is_zero(t2):
    assert sample(FourierModeSpec(1, []), t2).max_abs() == 0.0


def test_sample_cancellation(t2):
    spec = FourierModeSpec(0, [Mode((), (2, 1), 0.7, 0.3),
                               Mode((), (2, 1), -0.7, 0.3)])
    assert sample(spec, t2).max_abs() < 1e-15


def test_sample_rejects_aliased(t2):
    spec = FourierModeSpec(0, [Mode((), (t2.N // 2, 0), 1.0)])
    with pytest.raises(ValueError):
        sample(spec, t2)


def test_modespec_json_roundtrip(t2):
    spec = FourierModeSpec(1, [Mode((0,), (2, -1), 0.5, 1.2),
                               Mode((1,), (0, 3), -0.25, 0.0)])
    back = FourierModeSpec.loads(spec.dumps())
    assert (sample(back, t2) - sample(spec, t2)).max_abs() < 1e-15


# ---------------------------------------------------------------------------
# exterior derivative
# ---------------------------------------------------------------------------

def test_d_of_cos(t2):
    x1 = t2.coords[0]
    df = ext_deriv(ScalarField(t2, np.cos(x1)).to_form())
    assert np.allclose(df.comps[0], -np.sin(x1), atol=1e-12)
    assert np.allclose(df.comps[1], 0.0, atol=1e-14)


def test_d_constant_form_closed(t2):
    assert ext_deriv(KForm.constant(t2, 1, [0.0, 3.5])).max_abs() < 1e-13


def test_d_sin_dx2(t2):
    x1 = t2.coords[0]
    w = KForm(t2, 1, np.stack([np.zeros_like(x1), np.sin(x1)]))
    assert np.allclose(ext_deriv(w).comps[0], np.cos(x1), atol=1e-12)


def test_d_rejects_top_degree(t2):
    with pytest.raises(ValueError):
        ext_deriv(KForm.zero(t2, 2))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_dd_zero_property(seed):
    grid = make_grid(2, 16)
    rng = CounterRng(seed, "dd")
    w = random_kform(grid, 0, rng, kmax=5, n_modes=5)
    dd = ext_deriv(ext_deriv(w))
    assert dd.norm() <= 1e-10 * max(w.norm(), 1e-12)


def test_dd_zero_t3(t3, rng):
    for k in (0, 1):
        w = random_kform(t3, k, rng, kmax=3, n_modes=6)
        assert ext_deriv(ext_deriv(w)).norm() <= 1e-10 * w.norm()


# ---------------------------------------------------------------------------
# wedge
# ---------------------------------------------------------------------------

def test_wedge_self_zero(t2):
    dx1 = KForm.constant(t2, 1, [1.0, 0.0])
    assert wedge(dx1, dx1).max_abs() < 1e-15


def test_wedge_anticommute(t2):
    dx1 = KForm.constant(t2, 1, [1.0, 0.0])
    dx2 = KForm.constant(t2, 1, [0.0, 1.0])
    assert (wedge(dx1, dx2) + wedge(dx2, dx1)).max_abs() < 1e-15


def test_wedge_pointwise_oracle(t2):
    x1, x2 = t2.coords
    a = KForm(t2, 1, np.stack([np.cos(x1), np.zeros_like(x1)]))
    b = KForm(t2, 1, np.stack([np.zeros_like(x1), np.sin(x2)]))
    expected = np.cos(x1) * np.sin(x2)  # independent nodewise product
    assert np.allclose(wedge(a, b).comps[0], expected, atol=1e-12)


def test_wedge_degree_overflow(t2):
    with pytest.raises(ValueError):
        wedge(KForm.zero(t2, 1), KForm.zero(t2, 2))


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_graded_anticommutativity_property(seed):
    grid = make_grid(3, 12)
    rng = CounterRng(seed, "graded")
    a = random_kform(grid, 1, rng, kmax=2)
    b = random_kform(grid, 2, rng, kmax=2)
    diff = wedge(a, b) - wedge(b, a)  # (-1)^{1*2} = +1
    assert diff.norm() <= 1e-10 * max(a.norm() * b.norm(), 1e-12)


def test_graded_leibniz(t3, rng):
    a = random_kform(t3, 1, rng, kmax=2)
    b = random_kform(t3, 1, rng, kmax=2)
    lhs = ext_deriv(wedge(a, b))
    rhs = wedge(ext_deriv(a), b) - wedge(a, ext_deriv(b))
    assert (lhs - rhs).norm() <= 1e-8 * max(lhs.norm(), 1e-12)


# ---------------------------------------------------------------------------
# interior product
# ---------------------------------------------------------------------------

def test_interior_frame_contractions(t2):
    dx12 = KForm.constant(t2, 2, [1.0])
    i1 = interior(VectorField.frame(t2, 0), dx12)
    i2 = interior(VectorField.frame(t2, 1), dx12)
    assert np.allclose(i1.comps[1], 1.0) and np.allclose(i1.comps[0], 0.0)
    assert np.allclose(i2.comps[0], -1.0)


def test_interior_pointwise_oracle(t2, rng):
    f = random_scalar(t2, rng, kmax=2)
    u = random_vector(t2, rng, kmax=2)
    w = KForm(t2, 1, np.stack([f.values, np.zeros(t2.shape)]))
    got = interior(u, w)
    expected = f.values * u.comps[0]
    assert np.allclose(got.comps[0], expected, atol=1e-10)


def test_interior_squared_zero(t3, rng):
    u = random_vector(t3, rng, kmax=2)
    w = random_kform(t3, 2, rng, kmax=2)
    assert interior(u, interior(u, w)).norm() <= 1e-10 * max(w.norm(), 1e-12)


def test_interior_rejects_degree_zero(t2):
    with pytest.raises(ValueError):
        interior(VectorField.zero(t2), KForm.zero(t2, 0))


# ---------------------------------------------------------------------------
# Lie derivatives
# ---------------------------------------------------------------------------

def test_lie_scalar_directional(t2):
    x1 = t2.coords[0]
    out = lie_scalar(VectorField.frame(t2, 0), ScalarField(t2, np.cos(x1)))
    assert np.allclose(out.values, -np.sin(x1), atol=1e-12)


def test_lie_constant_top_form(t2):
    u = VectorField(t2, np.stack([np.full(t2.shape, 0.3),
                                  np.full(t2.shape, -1.2)]))
    top = KForm.constant(t2, 2, [2.0])
    assert lie_form(u, top).max_abs() < 1e-13


def test_lie_d_commute(t3, rng):
    u = random_vector(t3, rng, kmax=2)
    a = random_kform(t3, 1, rng, kmax=2)
    lhs = lie_form(u, ext_deriv(a))
    rhs = ext_deriv(lie_form(u, a))
    assert (lhs - rhs).norm() <= 1e-8 * max(lhs.norm(), 1e-12)


def test_cartan_formula_matches_componentwise(t2, rng):
    # advective formula as an independent evaluation path
    u = random_vector(t2, rng, kmax=2)
    a = random_kform(t2, 1, rng, kmax=2)
    kit = t2.kit
    comp = np.zeros_like(a.comps)
    for i in range(2):
        da_i = np.stack([kit.deriv(a.comps[i], j) for j in range(2)])
        comp[i] = np.sum(kit.mul(u.comps, da_i), axis=0)
        du = np.stack([kit.deriv(u.comps[j], i) for j in range(2)])
        comp[i] += np.sum(kit.mul(a.comps, du), axis=0)
    lhs = lie_form(u, a)
    assert np.max(np.abs(lhs.comps - comp)) <= 1e-8 * max(lhs.max_abs(), 1.0)


def test_lie_sym_translation_invariance(t2):
    u = VectorField(t2, np.stack([np.full(t2.shape, 1.0),
                                  np.full(t2.shape, 2.0)]))
    g = SymTensor2(t2, np.stack([np.full(t2.shape, 2.0),
                                 np.full(t2.shape, 0.3),
                                 np.full(t2.shape, 1.5)]))
    assert lie_sym(u, g).max_abs() < 1e-13


def test_lie_sym_directional(t2):
    x1 = t2.coords[0]
    u = VectorField.frame(t2, 0)
    g = SymTensor2(t2, np.stack([1 + 0.5 * np.sin(x1), np.zeros(t2.shape),
                                 1 + 0.5 * np.sin(x1)]))
    out = lie_sym(u, g)
    assert np.allclose(out.comps[0], 0.5 * np.cos(x1), atol=1e-12)
    assert np.allclose(out.comps[2], 0.5 * np.cos(x1), atol=1e-12)


def test_killing_flat(t2):
    u = VectorField(t2, np.stack([np.full(t2.shape, 0.7),
                                  np.full(t2.shape, -0.1)]))
    assert lie_sym(u, SymTensor2.flat(t2)).max_abs() < 1e-14


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------

def test_pullback_identity(t2, rng):
    w = random_kform(t2, 1, rng, kmax=3)
    assert (pullback(AffineDiffeo.identity(t2), w) - w).max_abs() < 1e-15


def test_pullback_translation_constant(t2):
    w = KForm.constant(t2, 2, [1.7])
    phi = AffineDiffeo.translation(t2, [3, 5])
    assert (pullback(phi, w) - w).max_abs() < 1e-15


def test_pullback_rotation_oracle(t2):
    # 90 degree lattice rotation: direct index computation gives
    # rot^* dx1 = sum_j A_{j1} dx_j with A = [[0,-1],[1,0]] -> -dx2
    rot = AffineDiffeo(t2, [[0, -1], [1, 0]])
    p = pullback(rot, KForm.constant(t2, 1, [1.0, 0.0]))
    assert np.allclose(p.comps[0], 0.0) and np.allclose(p.comps[1], -1.0)


def test_pullback_functoriality(t2, rng):
    phi = AffineDiffeo(t2, [[0, -1], [1, 0]], [1, 2])
    psi = AffineDiffeo(t2, [[1, 0], [0, -1]], [4, 7])
    for field in (random_scalar(t2, rng, kmax=3),
                  random_kform(t2, 1, rng, kmax=3),
                  random_vector(t2, rng, kmax=3)):
        lhs = pullback(phi.compose(psi), field)
        rhs = pullback(psi, pullback(phi, field))
        assert (lhs - rhs).max_abs() < 1e-13


def test_pullback_commutes_with_d(t3, rng):
    phi = AffineDiffeo(t3, [[0, 1, 0], [0, 0, 1], [1, 0, 0]], [2, 0, 5])
    w = random_kform(t3, 1, rng, kmax=2)
    diff = pullback(phi, ext_deriv(w)) - ext_deriv(pullback(phi, w))
    assert diff.max_abs() <= 1e-12 * max(w.max_abs(), 1.0)


def test_pullback_metric_naturality(t2, rng):
    phi = AffineDiffeo(t2, [[0, -1], [1, 0]], [3, 1])
    from ggtorus.rng import random_metric
    g = random_metric(t2, rng, amplitude=0.3)
    u = random_vector(t2, rng, kmax=2)
    lhs = lie_sym(pullback(phi, u), pullback(phi, g))
    rhs = pullback(phi, lie_sym(u, g))
    assert (lhs - rhs).max_abs() <= 1e-10 * max(rhs.max_abs(), 1.0)


def test_affine_diffeo_rejects_non_unimodular(t2):
    with pytest.raises(ValueError):
        AffineDiffeo(t2, [[2, 0], [0, 1]])


def test_lie_bracket_coordinates(t2):
    x1 = t2.coords[0]
    u = VectorField(t2, np.stack([np.sin(x1), np.zeros(t2.shape)]))
    v = VectorField.frame(t2, 0)
    out = lie_bracket(u, v)  # [u, v] = -v(sin x1) d1 = -cos x1 d1
    assert np.allclose(out.comps[0], -np.cos(x1), atol=1e-12)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def test_csv_export(t2_small):
    buf = io.StringIO()
    field_to_csv(KForm.constant(t2_small, 1, [1.0, 2.0]), buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "x1,x2,dx1,dx2"
    assert len(lines) == 1 + t2_small.node_count


def test_dd_zero_mass_sample():
    # 1000 random band-limited forms across degrees and both dimensions
    grid2 = make_grid(2, 16)
    grid3 = make_grid(3, 8)
    rng = CounterRng(99, "dd-mass")
    for i in range(1000):
        if i % 2 == 0:
            w = random_kform(grid2, 0, rng, kmax=5, n_modes=3)
        else:
            w = random_kform(grid3, i % 2, rng, kmax=2, n_modes=3)
        dd = ext_deriv(ext_deriv(w))
        assert dd.norm() <= 1e-10 * max(w.norm(), 1e-12)
