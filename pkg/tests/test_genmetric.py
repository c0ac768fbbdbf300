import numpy as np
import pytest

from ggtorus import (
    AffineDiffeo, GMTangent, GenMetric, GroupElement, KForm, ScalarField,
    SymTensor2, TwistData, VectorField, make_grid, pairing,
)
from ggtorus.genmetric import (
    act, average, from_subbundle, genmetric_to_json, graph_frame,
    isometry_defect, isometry_residuals, tangent_inner, tangent_push,
)
from ggtorus.symmetry import GroupElement, act_section, compose, inverse
from ggtorus.rng import CounterRng, random_kform, random_metric, random_scalar


def _rand_gm(grid, rng, kind="exact", amplitude=0.3):
    gamma = random_kform(grid, 1, rng, kmax=1) if kind == "odd" else None
    return GenMetric(random_metric(grid, rng, amplitude=amplitude),
                     random_kform(grid, 2, rng, kmax=1), gamma, kind)


def _rand_elem(grid, rng, kind):
    from ggtorus.strata import signed_permutations
    phi = AffineDiffeo(grid, rng.choice(signed_permutations(grid.n)),
                       [rng.randint(0, grid.N - 1) for _ in range(grid.n)])
    A = random_kform(grid, 1, rng, kmax=1) if kind == "odd" else None
    return GroupElement(phi, random_kform(grid, 2, rng, kmax=1), A, kind)


# ---------------------------------------------------------------------------
# graph frames
# ---------------------------------------------------------------------------

def test_flat_graph_frame(t2_small):
    V = GenMetric.flat(t2_small)
    fr = graph_frame(V)
    for i, s in enumerate(fr):
        assert np.allclose(s.u.comps[i], 1.0)
        assert np.allclose(s.alpha.comps[i], 1.0)


def test_odd_flat_frame_has_pure_scalar_direction(t2_small):
    V = GenMetric.flat(t2_small, kind="odd")
    fr = graph_frame(V)
    assert len(fr) == 3
    last = fr[-1]
    assert np.allclose(last.f.values, 1.0)
    assert last.u.norm() == 0.0 and last.alpha.norm() == 0.0


@pytest.mark.parametrize("kind", ["exact", "odd"])
def test_frame_gram_equals_metric(t2_small, rng, kind):
    V = _rand_gm(t2_small, rng, kind)
    fr = graph_frame(V)
    gm = V.g.full_matrix()
    n = t2_small.n
    for i in range(n):
        for j in range(n):
            p = pairing(fr[i], fr[j])
            assert np.max(np.abs(p.values - gm[i, j])) < 1e-10
    if kind == "odd":
        assert np.max(np.abs(pairing(fr[n], fr[n]).values - 1.0)) < 1e-12
        for i in range(n):
            assert pairing(fr[i], fr[n]).max_abs() < 1e-10


@pytest.mark.parametrize("kind", ["exact", "odd"])
def test_subbundle_round_trip(t2_small, rng, kind):
    V = _rand_gm(t2_small, rng, kind)
    assert from_subbundle(graph_frame(V)).distance(V) < 1e-12


def test_subbundle_span_invariance(t2_small, rng):
    # remixing the frame by pointwise invertible combinations keeps the
    # recovered data
    V = _rand_gm(t2_small, rng)
    fr = graph_frame(V)
    m11 = 1.0 + 0.3 * np.sin(t2_small.coords[0])
    remix = [
        type(fr[0])(VectorField(t2_small, m11 * fr[0].u.comps),
                    KForm(t2_small, 1, m11 * fr[0].alpha.comps)),
        type(fr[0])(VectorField(t2_small, fr[1].u.comps + 2.0 * fr[0].u.comps),
                    KForm(t2_small, 1, fr[1].alpha.comps + 2.0 * fr[0].alpha.comps)),
    ]
    assert from_subbundle(remix).distance(V) < 1e-10


def test_bfield_image_of_flat_graph(t2_small, rng):
    V = GenMetric.flat(t2_small)
    B = random_kform(t2_small, 2, rng, kmax=1)
    moved = [act_section(GroupElement.b_field(B), s) for s in graph_frame(V)]
    out = from_subbundle(moved)
    assert (out.omega - B).max_abs() < 1e-12
    assert (out.g - V.g).max_abs() < 1e-12


def test_from_subbundle_rejects_bad_projection(t2_small):
    from ggtorus import ExactSection
    bad = [ExactSection(VectorField.zero(t2_small), KForm.constant(t2_small, 1, [1, 0])),
           ExactSection(VectorField.frame(t2_small, 1), KForm.zero(t2_small, 1))]
    with pytest.raises(ValueError):
        from_subbundle(bad)


# ---------------------------------------------------------------------------
# the right action
# ---------------------------------------------------------------------------

def test_bfield_action_formula(t2_small, rng):
    V = _rand_gm(t2_small, rng)
    B = random_kform(t2_small, 2, rng, kmax=1)
    out = act(GroupElement.b_field(B), V)
    assert (out.omega - (V.omega - B)).max_abs() < 1e-14
    assert (out.g - V.g).max_abs() == 0.0


def test_identity_action_gm(t2_small, rng):
    for kind in ("exact", "odd"):
        V = _rand_gm(t2_small, rng, kind)
        assert act(GroupElement.identity(t2_small, kind), V).distance(V) < 1e-14


def test_translation_invariance_constant_data(t2_small):
    V = GenMetric(SymTensor2.flat(t2_small), KForm.constant(t2_small, 2, [0.4]),
                  KForm.constant(t2_small, 1, [0.1, -0.2]), "odd")
    gel = GroupElement(AffineDiffeo.translation(t2_small, [3, 5]),
                       KForm.zero(t2_small, 2), KForm.zero(t2_small, 1), "odd")
    assert act(gel, V).distance(V) < 1e-14


@pytest.mark.parametrize("kind", ["exact", "odd"])
def test_right_action_law(t2_small, rng, kind):
    V = _rand_gm(t2_small, rng, kind)
    g1, g2 = _rand_elem(t2_small, rng, kind), _rand_elem(t2_small, rng, kind)
    lhs = act(g2, act(g1, V))
    rhs = act(compose(g1, g2), V)
    assert lhs.distance(rhs) < 1e-12


@pytest.mark.parametrize("kind", ["exact", "odd"])
def test_action_equals_subbundle_inverse_image(t2_small, rng, kind):
    V = _rand_gm(t2_small, rng, kind)
    gel = _rand_elem(t2_small, rng, kind)
    lhs = act(gel, V)
    moved = [act_section(inverse(gel), s) for s in graph_frame(V)]
    rhs = from_subbundle(moved)
    assert lhs.distance(rhs) < 1e-11


def test_metric_component_ignores_bfield(t2_small, rng):
    # the g-component of the action depends only on phi, never on B (or A)
    V = _rand_gm(t2_small, rng, "odd")
    phi = AffineDiffeo(t2_small, [[0, -1], [1, 0]], [1, 2])
    outs = []
    for _ in range(3):
        gel = GroupElement(phi, random_kform(t2_small, 2, rng, kmax=1),
                           random_kform(t2_small, 1, rng, kmax=1), "odd")
        outs.append(act(gel, V).g)
    assert (outs[0] - outs[1]).max_abs() < 1e-14
    assert (outs[1] - outs[2]).max_abs() < 1e-14


# ---------------------------------------------------------------------------
# isometry residuals
# ---------------------------------------------------------------------------

def test_isometry_identity(t2_small, rng):
    V = _rand_gm(t2_small, rng)
    T = TwistData.exact(t2_small, None)
    assert isometry_defect(T, GroupElement.identity(t2_small), V) < 1e-14


def test_isometry_forced_bfield(t2_small, rng):
    from ggtorus import pullback
    V = GenMetric(SymTensor2.flat(t2_small), random_kform(t2_small, 2, rng, kmax=1))
    T = TwistData.exact(t2_small, None)
    phi = AffineDiffeo(t2_small, [[0, -1], [1, 0]], [2, 6])
    B = pullback(phi, V.omega) - V.omega
    assert isometry_defect(T, GroupElement(phi, B), V) < 1e-12


def test_isometry_detects_metric_mismatch(t2_small, rng):
    V = _rand_gm(t2_small, rng)           # generic metric
    T = TwistData.exact(t2_small, None)
    phi = AffineDiffeo(t2_small, [[0, -1], [1, 0]])
    res = isometry_residuals(T, GroupElement.from_diffeo(phi), V)
    assert res["metric"] > 1e-3


# ---------------------------------------------------------------------------
# averaging
# ---------------------------------------------------------------------------

def test_average_trivial_group(t2_small, rng):
    V = _rand_gm(t2_small, rng)
    out = average([GroupElement.identity(t2_small)], V)
    assert out.distance(V) < 1e-14


def test_average_fixed_point(t2_small):
    V = GenMetric.flat(t2_small)
    rot = AffineDiffeo(t2_small, [[0, -1], [1, 0]])
    group = [GroupElement.identity(t2_small)]
    cur = rot
    for _ in range(3):
        group.append(GroupElement.from_diffeo(cur))
        cur = cur.compose(rot)
    assert average(group, V).distance(V) < 1e-14


def test_average_c4_invariance(t2_small, rng):
    V = _rand_gm(t2_small, rng)
    rot = AffineDiffeo(t2_small, [[0, -1], [1, 0]])
    group = [GroupElement.identity(t2_small)]
    cur = rot
    for _ in range(3):
        group.append(GroupElement.from_diffeo(cur))
        cur = cur.compose(rot)
    Vav = average(group, V)
    T = TwistData.exact(t2_small, None)
    for gel in group:
        assert isometry_defect(T, gel, Vav) < 1e-9


def test_average_rejects_non_group(t2_small, rng):
    V = _rand_gm(t2_small, rng)
    rot = AffineDiffeo(t2_small, [[0, -1], [1, 0]])
    with pytest.raises(ValueError):
        average([GroupElement.identity(t2_small), GroupElement.from_diffeo(rot)], V)


# ---------------------------------------------------------------------------
# tangent pairing
# ---------------------------------------------------------------------------

def test_tangent_inner_zero(t2_small):
    V = GenMetric.flat(t2_small)
    t0 = GMTangent(SymTensor2.zero(t2_small), KForm.zero(t2_small, 2))
    assert tangent_inner(V, t0, t0) == 0.0


def test_tangent_inner_analytic(t2_small):
    V = GenMetric.flat(t2_small)
    t = GMTangent(SymTensor2.zero(t2_small), KForm.constant(t2_small, 2, [1.0]))
    assert abs(tangent_inner(V, t, t) - (2 * np.pi) ** 2) < 1e-12


def test_tangent_inner_odd_gamma_zero_reduces(t2_small, rng):
    g = random_metric(t2_small, rng, amplitude=0.2)
    V_odd = GenMetric(g, KForm.zero(t2_small, 2), KForm.zero(t2_small, 1), "odd")
    V_ex = GenMetric(g, KForm.zero(t2_small, 2))
    gd = random_metric(t2_small, rng, amplitude=0.2) - SymTensor2.flat(t2_small)
    wd = random_kform(t2_small, 2, rng, kmax=1)
    t_odd = GMTangent(gd, wd, KForm.zero(t2_small, 1), "odd")
    t_ex = GMTangent(gd, wd)
    assert abs(tangent_inner(V_odd, t_odd, t_odd)
               - tangent_inner(V_ex, t_ex, t_ex)) < 1e-12


@pytest.mark.parametrize("kind", ["exact", "odd"])
def test_tangent_inner_invariance(t2_small, rng, kind):
    V = _rand_gm(t2_small, rng, kind)
    gel = _rand_elem(t2_small, rng, kind)

    def rand_tangent():
        gd = random_metric(t2_small, rng, amplitude=0.2) - SymTensor2.flat(t2_small)
        gam = random_kform(t2_small, 1, rng, kmax=1) if kind == "odd" else None
        return GMTangent(gd, random_kform(t2_small, 2, rng, kmax=1), gam, kind)

    t1, t2v = rand_tangent(), rand_tangent()
    lhs = tangent_inner(act(gel, V), tangent_push(gel, t1), tangent_push(gel, t2v))
    rhs = tangent_inner(V, t1, t2v)
    assert abs(lhs - rhs) <= 1e-8 * (1 + abs(rhs))


def test_positive_definite_required(t2_small):
    bad = SymTensor2(t2_small, np.stack([np.cos(t2_small.coords[0]),
                                         np.zeros(t2_small.shape),
                                         np.ones(t2_small.shape)]))
    with pytest.raises(ValueError):
        GenMetric(bad, KForm.zero(t2_small, 2))


def test_genmetric_json(t2_small, rng):
    V = _rand_gm(t2_small, rng, "odd")
    data = genmetric_to_json(V)
    assert "omega" in data and "gamma" in data and "11" in data["g"]
