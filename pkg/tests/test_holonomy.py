import numpy as np
import pytest

from calabi.holonomy import (
    AmbiguousRankError,
    DegenerateRicciError,
    NormalizationError,
    curvature_homomorphism,
    curvature_homomorphism_matrix,
    curvature_operator_matrix,
    curvature_operator_spectrum,
    full_equation_kernel_sv,
    jacobi_eigh,
    kahler_detect,
    lts_residual,
    ricci_tensor,
    s_operator_spectrum,
    s_tensor,
    split_two_forms,
    trace_equation_kernel_sv,
    traced_identity_residual,
)
from calabi.models import constant_curvature_model, fubini_study_model, model_from_spec
from calabi.tensors import (
    PointTensor,
    riemann_project,
    tensor_inner,
    two_form_basis,
    two_form_tensor,
    two_form_to_vector,
)


def unit_ricci(spec):
    return model_from_spec(spec, normalization="unit_ricci")


# -- eigensolver -------------------------------------------------------------------

def test_jacobi_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 12))
    sym = a + a.T
    eigs, vecs = jacobi_eigh(sym)
    ref = np.linalg.eigvalsh(sym)
    assert np.allclose(eigs, ref, atol=1e-10)
    assert np.allclose(vecs.T @ vecs, np.eye(12), atol=1e-12)
    assert np.allclose(vecs @ np.diag(eigs) @ vecs.T, sym, atol=1e-10)


# -- curvature homomorphism ----------------------------------------------------------

def test_homomorphism_vanishes_on_constant_curvature():
    m = constant_curvature_model(4, 1.0, "unit_ricci")
    for pair in two_form_basis(4):
        out = curvature_homomorphism(m, two_form_tensor(4, pair))
        assert np.abs(out.components).max() < 1e-13


def test_homomorphism_on_cp1_kahler_form():
    m = fubini_study_model(1)
    out = curvature_homomorphism(m, m.kahler)
    assert np.abs(out.components).max() < 1e-13


def test_homomorphism_nonzero_on_cp2_antiinvariant_forms():
    m = fubini_study_model(2)
    j = m.kahler.components
    # a 2-form with J mu J^T = +mu is anti-invariant under the complex
    # structure action mu -> J^T mu J used for type decomposition
    split = split_two_forms(m)
    assert split.dim_c == 2
    for form in split.c_basis:
        out = curvature_homomorphism(m, form)
        assert np.abs(out.components).max() > 1e-3


def test_split_dims_spheres_and_cp2():
    for n in (2, 3, 4, 5):
        split = split_two_forms(constant_curvature_model(n, 1.0, "unit_ricci"))
        assert split.dim_c == 0
        assert split.dim_k == n * (n - 1) // 2
    split = split_two_forms(fubini_study_model(2))
    assert (split.dim_k, split.dim_c) == (4, 2)


def test_split_dims_cp2_against_bruteforce_rank():
    m = fubini_study_model(2)
    mat = curvature_homomorphism_matrix(m)
    rank = np.linalg.matrix_rank(mat, tol=1e-9)
    assert rank == 2  # dim C
    assert mat.shape[1] - rank == 4  # dim K


def test_cp_split_matches_complex_type_decomposition():
    # K is the J-invariant 2-forms, C the anti-invariant ones
    m = fubini_study_model(2)
    j = m.kahler.components
    split = split_two_forms(m)
    for form in split.k_basis:
        w = form.values()
        assert np.allclose(j.T @ w @ j, w, atol=1e-9)
    for form in split.c_basis:
        w = form.values()
        assert np.allclose(j.T @ w @ j, -w, atol=1e-9)


def test_split_s2xs1_and_curvature_in_k_odot_k():
    m = model_from_spec("S2xS1")
    split = split_two_forms(m)
    assert (split.dim_k, split.dim_c) == (1, 2)
    k0 = split.k_basis[0].values()
    assert np.abs(k0[2, :]).max() < 1e-12  # supported on the sphere block
    # curvature is a section of K (.) K: expanding R in elementary 2-form
    # pairs leaves nothing orthogonal to k0 (x) k0
    r = m.riemann.components
    kk = np.einsum("ab,cd->abcd", k0, k0)
    coef = (r * kk).sum() / (kk * kk).sum()
    assert np.abs(r - coef * kk).max() < 1e-12


def test_split_orthogonality_and_normalisation():
    m = fubini_study_model(2)
    split = split_two_forms(m)
    for i, a in enumerate(split.k_basis + split.c_basis):
        for j, b in enumerate(split.k_basis + split.c_basis):
            expected = 1.0 if i == j else 0.0
            assert tensor_inner(a, b, m.metric) == pytest.approx(expected, abs=1e-10)


def test_split_ambiguous_rank_raises():
    m = fubini_study_model(2)
    # an absurd tolerance pushes the threshold into the singular-value range
    with pytest.raises(AmbiguousRankError):
        split_two_forms(m, tol=0.5)


# -- curvature operator spectrum -----------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_sphere_spectrum(n):
    report = curvature_operator_spectrum(constant_curvature_model(n, 1.0, "unit_ricci"))
    assert len(report.multiplicities) == 1
    val, count = report.multiplicities[0]
    assert val == pytest.approx(2.0 / (n - 1), abs=1e-12)
    assert count == n * (n - 1) // 2
    assert report.all_in_bounds


@pytest.mark.parametrize("n,expected", [
    (1, [(2.0, 1)]),
    (2, [(0.0, 2), (2.0 / 3.0, 3), (2.0, 1)]),
    (3, [(0.0, 6), (0.5, 8), (2.0, 1)]),
])
def test_cp_spectra(n, expected):
    report = curvature_operator_spectrum(fubini_study_model(n))
    assert len(report.multiplicities) == len(expected)
    for (val, count), (eval_, ecount) in zip(report.multiplicities, expected):
        assert val == pytest.approx(eval_, abs=1e-12)
        assert count == ecount
    assert report.eigenvalues.sum() == pytest.approx(2 * n, abs=1e-11)
    assert report.all_in_bounds
    assert report.top_is_kahler


def test_cp2_spectrum_against_numpy_oracle():
    m = fubini_study_model(2)
    mat = curvature_operator_matrix(m)
    ref = np.linalg.eigvalsh(mat)
    report = curvature_operator_spectrum(m)
    assert np.allclose(report.eigenvalues, ref, atol=1e-11)


def test_h2_spectrum_mirrored():
    m = constant_curvature_model(2, -1.0, "unit_ricci")
    report = curvature_operator_spectrum(m)
    assert report.bounds == (-2.0, 0.0)
    assert report.eigenvalues[0] == pytest.approx(-2.0, abs=1e-12)
    assert report.all_in_bounds
    assert report.top_is_kahler  # H^2 is Hermitian


def test_zero_eigenspace_is_c_for_cp2():
    m = fubini_study_model(2)
    split = split_two_forms(m)
    report = curvature_operator_spectrum(m)
    zero_vecs = np.array([
        two_form_to_vector(f) * np.sqrt(2)
        for lam, f in zip(report.eigenvalues, report.eigenforms) if abs(lam) < 1e-9
    ]).T
    # principal angles between the zero eigenspace and C
    q1, _ = np.linalg.qr(zero_vecs)
    q2 = split.c_vectors
    sv = np.linalg.svd(q1.T @ q2, compute_uv=False)
    assert np.abs(sv - 1.0).max() < 1e-9


# -- identities -----------------------------------------------------------------------

@pytest.mark.parametrize("spec", ["S2", "S4", "CP2", "H2", "S2xS2", "S3xS1", "CP2xS2", "S2xS1"])
def test_lts_residual_small_for_models(spec):
    assert lts_residual(model_from_spec(spec)) < 1e-10


def test_lts_residual_zero_for_flat():
    assert lts_residual(constant_curvature_model(3, 0.0)) == 0.0


def test_lts_residual_positive_for_random_symmetric_tensor():
    rng = np.random.default_rng(42)
    hits = 0
    trials = 100
    for _ in range(trials):
        t = riemann_project(PointTensor(4, "llll", rng.uniform(-1, 1, (4,) * 4)))
        t = PointTensor(4, "llll", t.components / np.sqrt((t.components ** 2).sum()))
        if lts_residual(t) > 1e-3:
            hits += 1
    assert hits >= 99


@pytest.mark.parametrize("spec", ["S3", "S5", "CP2", "CP3", "S2xS3"])
def test_traced_identity_for_unit_ricci_models(spec):
    assert traced_identity_residual(unit_ricci(spec)) < 1e-10


def test_traced_identity_rejects_wrong_normalisation():
    with pytest.raises(NormalizationError):
        traced_identity_residual(constant_curvature_model(3, 1.0, "unit_curvature"))


# -- twisted operator -----------------------------------------------------------------

def test_s_tensor_equals_riemann_for_unit_ricci():
    m = unit_ricci("CP2")
    s = s_tensor(m)
    assert np.allclose(s.components, m.riemann.components, atol=1e-12)


def test_s_tensor_scale_invariant():
    a = model_from_spec("S2xS3")
    b = model_from_spec("S2@3xS3@3")  # metric rescaled by 9 on both factors
    assert np.allclose(s_tensor(a).components, s_tensor(b).components, atol=1e-12)


def test_s_tensor_flags_flat_factor():
    with pytest.raises(DegenerateRicciError) as err:
        s_tensor(model_from_spec("S2xS1"))
    assert "flat" in str(err.value)


def test_s_operator_spectrum_mixed_scales():
    report = s_operator_spectrum(model_from_spec("S2@1.3xS3@0.7"))
    assert report.all_in_bounds
    # the Hermitian S^2 factor contributes the eigenvalue 2
    assert report.eigenvalues[-1] == pytest.approx(2.0, abs=1e-10)
    assert report.top_is_kahler


def test_s_operator_spectrum_no_hermitian_factor():
    report = s_operator_spectrum(model_from_spec("S3@1.5xS4"))
    assert report.all_in_bounds
    assert report.eigenvalues[-1] < 2.0 - 1e-6
    assert not report.top_is_kahler


def test_s_operator_handles_hyperbolic_factor():
    report = s_operator_spectrum(model_from_spec("S2xH2"))
    assert report.all_in_bounds
    assert report.eigenvalues[-1] == pytest.approx(2.0, abs=1e-10)


# -- Kahler detection -------------------------------------------------------------------

def test_kahler_detect_cp2():
    m = fubini_study_model(2)
    found = kahler_detect(m)
    assert len(found) == 1
    assert np.allclose(np.abs(found[0].values()), np.abs(m.kahler.components), atol=1e-9)


def test_kahler_detect_s3_none():
    assert kahler_detect(unit_ricci("S3")) == []


def test_kahler_detect_s2xs2_two_candidates():
    found = kahler_detect(unit_ricci("S2xS2"))
    assert len(found) == 2
    blocks = {tuple(np.nonzero(np.abs(f.values()) > 1e-8)[0]) for f in found}
    assert blocks == {(0, 1), (2, 3)}


def test_kahler_detect_s2xs1():
    found = kahler_detect(model_from_spec("S2xS1"))
    assert len(found) == 1


# -- kernel certificates -------------------------------------------------------------------

def test_trace_equation_kernel_trivial_on_spheres_and_cp():
    assert trace_equation_kernel_sv(unit_ricci("S3")) == float("inf")
    for n in (1, 2):
        sv = trace_equation_kernel_sv(fubini_study_model(n)) if n > 1 else float("inf")
        assert sv > 1e-9
    assert trace_equation_kernel_sv(fubini_study_model(2)) > 1e-9


def test_full_equation_kernel_trivial_on_cp2_and_cp3():
    assert full_equation_kernel_sv(fubini_study_model(2)) > 1e-9
    assert full_equation_kernel_sv(fubini_study_model(3)) > 1e-9


def test_image_orthogonality_r_annihilates_lambda1_c():
    # contractions of the curvature with 1-form (x) C tensors vanish
    m = fubini_study_model(2)
    split = split_two_forms(m)
    rng = np.random.default_rng(5)
    r = m.riemann.components
    for _ in range(5):
        x = np.zeros((4, 4, 4))
        for a in range(4):
            for j, c in enumerate(split.c_basis):
                x[a] += rng.uniform(-1, 1) * c.values()
        val = np.einsum("acdb,cdb->a", r, x)
        assert np.abs(val).max() < 1e-12
