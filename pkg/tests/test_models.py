import numpy as np
import pytest

from calabi.holonomy import ricci_tensor
from calabi.models import (
    ChartDomainError,
    ModelError,
    constant_curvature_model,
    fubini_study_model,
    make_chart,
    make_warped_chart,
    model_from_spec,
    product_model,
    standard_complex_structure,
)
from calabi.spaces import SpaceSpecError, format_space_spec, parse_space_spec
from calabi.tensors import riemann_project


def test_flat_model_has_zero_curvature():
    m = constant_curvature_model(3, 0.0)
    assert np.abs(m.riemann.components).max() == 0.0
    assert m.factors[0].kind == "flat"


def test_unit_two_sphere_is_unit_ricci():
    m = constant_curvature_model(2, 1.0, "unit_curvature")
    # R_ab = (n - 1) kappa g_ab = g_ab in dimension 2
    assert np.allclose(ricci_tensor(m).components, np.eye(2), atol=1e-13)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_unit_ricci_spheres(n):
    m = constant_curvature_model(n, 1.0, "unit_ricci")
    assert np.allclose(ricci_tensor(m).components, np.eye(n), atol=1e-12)
    # frame curvature coefficient is 1 / (n - 1)
    assert m.riemann.components[0, 1, 0, 1] == pytest.approx(1.0 / (n - 1))


def test_unit_ricci_rejects_flat_and_dim_one():
    with pytest.raises(ModelError):
        constant_curvature_model(3, 0.0, "unit_ricci")
    with pytest.raises(ModelError):
        constant_curvature_model(1, 1.0, "unit_ricci")


def test_cp1_equals_unit_ricci_two_sphere():
    cp1 = fubini_study_model(1)
    s2 = constant_curvature_model(2, 1.0, "unit_ricci")
    assert np.allclose(cp1.riemann.components, s2.riemann.components, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fubini_study_ricci_is_metric(n):
    m = fubini_study_model(n)
    assert np.allclose(ricci_tensor(m).components, np.eye(2 * n), atol=1e-12)


def test_fubini_study_kahler_in_kernel():
    m = fubini_study_model(2)
    j = m.kahler.components
    rm = np.einsum("abed,ec->abcd", m.riemann.components, m.metric.g_inv.components)
    act = np.einsum("abec,de->abcd", rm, j) - np.einsum("abed,ce->abcd", rm, j)
    assert np.abs(act).max() < 1e-13


def test_model_riemann_is_projector_fixed_point():
    m = fubini_study_model(3)
    p = riemann_project(m.riemann)
    assert np.allclose(p.components, m.riemann.components, atol=1e-12)


def test_product_s2xs1_block_structure():
    m = model_from_spec("S2xS1")
    r = m.riemann.components
    assert np.abs(r[:2, :2, :2, :2]).max() > 0
    mask = np.zeros((3, 3, 3, 3), dtype=bool)
    mask[:2, :2, :2, :2] = True
    assert np.abs(r[~mask]).max() == 0.0


def test_product_s3xs1_ricci_blocks():
    m = model_from_spec("S3xS1")
    ric = ricci_tensor(m).components
    assert np.allclose(ric, np.diag([2.0, 2.0, 2.0, 0.0]), atol=1e-13)


def test_product_of_unit_ricci_factors_is_unit_ricci():
    a = constant_curvature_model(2, 1.0, "unit_ricci")
    b = fubini_study_model(2)
    prod = product_model([a, b])
    assert prod.normalization == "unit_ricci"
    assert np.allclose(ricci_tensor(prod).components, np.eye(6), atol=1e-12)


def test_product_requires_two_factors():
    with pytest.raises(ModelError):
        product_model([])
    with pytest.raises(ModelError):
        product_model([constant_curvature_model(2, 1.0)])


# -- space specs -----------------------------------------------------------------

def test_parse_simple_specs():
    spec = parse_space_spec("S3xS1")
    assert [(f.kind, f.n, f.scale) for f in spec.factors] == [("S", 3, 1.0), ("S", 1, 1.0)]
    spec = parse_space_spec("CP2xR1")
    assert [(f.kind, f.n) for f in spec.factors] == [("CP", 2), ("R", 1)]
    assert spec.dim == 5
    spec = parse_space_spec("S2@2xH2")
    assert [(f.kind, f.n, f.scale) for f in spec.factors] == [("S", 2, 2.0), ("H", 2, 1.0)]


def test_parse_print_roundtrip():
    for text in ["S2", "S3xS1", "CP2xR1", "S2@2xH2", "S2@0.5xCP1", "H3xR2"]:
        spec = parse_space_spec(text)
        assert format_space_spec(spec) == text
        assert parse_space_spec(format_space_spec(spec)) == spec


def test_parse_is_case_insensitive():
    assert parse_space_spec("cp2xr1") == parse_space_spec("CP2xR1")


@pytest.mark.parametrize("bad", ["", "S0", "Q2", "S2x", "S2 x S2", "S2@", "S2@-1", "S2@0", "S2yS2"])
def test_parse_errors(bad):
    with pytest.raises(SpaceSpecError):
        parse_space_spec(bad)


def test_parse_error_carries_position():
    with pytest.raises(SpaceSpecError) as err:
        parse_space_spec("S2xQ3")
    assert err.value.pos == 3


# -- charts ------------------------------------------------------------------------

def test_sphere_chart_metric_at_origin():
    chart = make_chart("S2")
    g = chart.metric_jets([0.0, 0.0], 3)
    vals = np.array([[g[a, b].value for b in range(2)] for a in range(2)])
    assert np.allclose(vals, 4 * np.eye(2), atol=1e-14)


def test_sphere_chart_conformal_factor_off_origin():
    chart = make_chart("S2")
    pt = [0.3, -0.1]
    lam = 4.0 / (1 + 0.3 ** 2 + 0.1 ** 2) ** 2
    g = chart.metric_jets(pt, 2)
    assert g[0, 0].value == pytest.approx(lam, rel=1e-14)
    assert g[0, 1].value == pytest.approx(0.0, abs=1e-15)


def test_hyperbolic_chart_domain_error():
    chart = make_chart("H2")
    with pytest.raises(ChartDomainError):
        chart.metric_jets([0.8, 0.7], 2)


def test_cp1_chart_matches_unit_sphere_chart():
    cp1 = make_chart("CP1")
    s2 = make_chart("S2")
    pt = [0.2, -0.3]
    g1 = cp1.metric_jets(pt, 3)
    g2 = s2.metric_jets(pt, 3)
    for a in range(2):
        for b in range(2):
            assert np.allclose(g1[a, b].coeffs, g2[a, b].coeffs, atol=1e-11)


def test_product_chart_blocks_and_model_link():
    chart = make_chart("S2xS1")
    assert chart.num_coords == 3
    g = chart.metric_jets([0.1, 0.2, 0.4], 2)
    assert g[2, 2].value == pytest.approx(1.0)
    assert g[0, 2].value == pytest.approx(0.0, abs=1e-15)
    model = chart.model_at()
    assert model.dim == 3
    assert [f.kind for f in model.factors] == ["sphere", "flat"]


def test_unit_ricci_chart_normalisation():
    chart = make_chart("S3", normalization="unit_ricci")
    # metric is scaled by (n-1) = 2 relative to the unit sphere
    g = chart.metric_jets([0.0, 0.0, 0.0], 2)
    assert g[0, 0].value == pytest.approx(8.0)
    model = chart.model_at()
    assert np.allclose(ricci_tensor(model).components, np.eye(3), atol=1e-12)


def test_warped_chart_flat_when_omega_is_one():
    chart = make_warped_chart("one")
    g = chart.metric_jets([0.1, 0.7], 4)
    assert g[0, 0].value == pytest.approx(1.0)
    assert np.abs(g[0, 0].coeffs[1:]).max() == 0.0


def test_warped_chart_cosh_metric():
    chart = make_warped_chart("cosh")
    g = chart.metric_jets([0.0, 0.3], 3)
    assert g[0, 0].value == pytest.approx(np.cosh(0.3) ** 2, rel=1e-13)
    assert g[1, 1].value == pytest.approx(1.0)


def test_kahler_form_jets_on_sphere_block():
    chart = make_chart("S2xS1")
    pt = [0.2, 0.1, 0.5]
    j = chart.kahler_form_jets(pt, 2)
    lam = 4.0 / (1 + 0.05) ** 2
    assert j[0, 1].value == pytest.approx(lam, rel=1e-13)
    assert j[1, 0].value == pytest.approx(-lam, rel=1e-13)
    assert j[2, 0].value == pytest.approx(0.0, abs=1e-15)


def test_standard_complex_structure_squares_to_minus_identity():
    j = standard_complex_structure(6)
    assert np.allclose(j @ j, -np.eye(6))
