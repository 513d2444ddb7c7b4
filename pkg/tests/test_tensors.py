import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calabi.tensors import (
    Metric,
    PointTensor,
    TensorError,
    antisymmetrize,
    contract,
    raise_lower,
    riemann_project,
    riemann_projector_matrix,
    symmetrize,
    tensor_inner,
    two_form_basis,
    two_form_tensor,
    two_form_to_vector,
    vector_to_two_form,
)


def rand_tensor(rng, dim, variance):
    return PointTensor(dim, variance, rng.uniform(-1, 1, (dim,) * len(variance)))


def test_contract_identity_gives_dimension():
    n = 5
    delta = PointTensor(n, "lu", np.eye(n))
    out = contract(delta, 0, 1)
    assert out.rank == 0
    assert out.values() == pytest.approx(n)


def test_contract_metric_with_inverse_gives_delta():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (4, 4))
    g = a @ a.T + 4 * np.eye(4)
    metric = Metric(PointTensor(4, "ll", g))
    prod = np.einsum("ab,bc->ac", g, metric.g_inv.components)
    assert np.allclose(prod, np.eye(4), atol=1e-12)


def test_contract_ricci_of_unit_three_sphere():
    # R_abcd = g_ac g_bd - g_bc g_ad with g = id in dim 3; the (1,3)-slot
    # trace gives 2 g_bd.
    n = 3
    g = np.eye(n)
    riem = np.einsum("ac,bd->abcd", g, g) - np.einsum("bc,ad->abcd", g, g)
    mixed = PointTensor(n, "lluu", riem)  # frame is orthonormal: raising is free
    ricci = contract(mixed, 0, 2)
    assert np.allclose(ricci.values(), 2 * g, atol=1e-14)


def test_contract_same_variance_rejected():
    t = PointTensor(3, "ll", np.zeros((3, 3)))
    with pytest.raises(TensorError):
        contract(t, 0, 1)


def test_raise_then_lower_roundtrip():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, (4, 4))
    metric = Metric(PointTensor(4, "ll", a @ a.T + 4 * np.eye(4)))
    t = rand_tensor(rng, 4, "lll")
    back = raise_lower(raise_lower(t, 1, metric), 1, metric)
    assert np.allclose(back.values(), t.values(), atol=1e-12)
    assert back.variance == "lll"


def test_lower_with_diagonal_metric():
    g = np.diag([4.0, 1.0, 1.0])
    metric = Metric(PointTensor(3, "ll", g))
    x = PointTensor(3, "u", np.array([1.0, 0.0, 0.0]))
    lowered = raise_lower(x, 0, metric)
    assert np.allclose(lowered.values(), [4.0, 0.0, 0.0])
    assert lowered.variance == "l"


def test_two_form_norm_invariant_under_rotation():
    rng = np.random.default_rng(2)
    dim = 4
    metric = Metric.euclidean(dim)
    omega = antisymmetrize(rand_tensor(rng, dim, "ll"), (0, 1))
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    rotated = PointTensor(dim, "ll", q.T @ omega.values() @ q)
    n1 = tensor_inner(omega, omega, metric)
    n2 = tensor_inner(rotated, rotated, metric)
    assert n1 == pytest.approx(n2, rel=1e-12)


def test_antisymmetrize_kills_symmetric():
    rng = np.random.default_rng(3)
    s = symmetrize(rand_tensor(rng, 4, "ll"), (0, 1))
    killed = antisymmetrize(s, (0, 1))
    assert np.abs(killed.values()).max() < 1e-14


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_symmetrize_idempotent(seed, dim):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, dim, "lll")
    once = symmetrize(t, (0, 2))
    twice = symmetrize(once, (0, 2))
    assert np.allclose(once.values(), twice.values(), atol=1e-13)


def test_antisymmetric_image_dimension():
    # rank of the antisymmetrisation projector on 2 slots in dim 4 is 6
    dim = 4
    mat = np.empty((dim * dim, dim * dim))
    basis = np.zeros((dim, dim))
    for col in range(dim * dim):
        idx = np.unravel_index(col, (dim, dim))
        basis[idx] = 1.0
        mat[:, col] = antisymmetrize(PointTensor(dim, "ll", basis), (0, 1)).values().reshape(-1)
        basis[idx] = 0.0
    assert round(np.trace(mat)) == 6


def test_mixed_variance_symmetrize_rejected():
    t = PointTensor(3, "lu", np.zeros((3, 3)))
    with pytest.raises(TensorError):
        symmetrize(t, (0, 1))


# -- curvature symmetry class -------------------------------------------------

def constant_curvature_tensor(dim):
    g = np.eye(dim)
    return np.einsum("ac,bd->abcd", g, g) - np.einsum("bc,ad->abcd", g, g)


def test_riemann_project_fixes_constant_curvature():
    t = PointTensor(3, "llll", constant_curvature_tensor(3))
    p = riemann_project(t)
    assert np.allclose(p.values(), t.values(), atol=1e-13)


def test_riemann_project_kills_fully_symmetric():
    rng = np.random.default_rng(4)
    t = rand_tensor(rng, 3, "llll")
    sym = symmetrize(t, (0, 1, 2, 3))
    assert np.abs(riemann_project(sym).values()).max() < 1e-13


@pytest.mark.parametrize("dim,expected", [(3, 6), (4, 20)])
def test_riemann_image_dimension(dim, expected):
    # oracle: the curvature symmetry class has dimension n^2 (n^2 - 1) / 12
    assert expected == dim ** 2 * (dim ** 2 - 1) // 12
    mat = riemann_projector_matrix(dim)
    assert round(np.trace(mat)) == expected


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_riemann_project_idempotent_and_self_adjoint(seed, dim):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, dim, "llll")
    u = rand_tensor(rng, dim, "llll")
    pt = riemann_project(t)
    ptt = riemann_project(pt)
    assert np.allclose(pt.values(), ptt.values(), atol=1e-12)
    lhs = (riemann_project(t).values() * u.values()).sum()
    rhs = (t.values() * riemann_project(u).values()).sum()
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_riemann_project_output_symmetries(seed):
    rng = np.random.default_rng(seed)
    dim = 4
    out = riemann_project(rand_tensor(rng, dim, "llll")).values()
    # first Bianchi: antisymmetrisation over the first three slots vanishes
    bianchi = out + np.transpose(out, (1, 2, 0, 3)) + np.transpose(out, (2, 0, 1, 3))
    assert np.abs(bianchi).max() < 1e-12
    # pair interchange follows
    assert np.allclose(out, np.transpose(out, (2, 3, 0, 1)), atol=1e-12)
    assert np.allclose(out, -np.transpose(out, (1, 0, 2, 3)), atol=1e-12)


def test_riemann_project_rejects_wrong_rank():
    with pytest.raises(TensorError):
        riemann_project(PointTensor(3, "ll", np.zeros((3, 3))))


# -- two-form basis conventions ------------------------------------------------

def test_two_form_basis_small_dims():
    assert two_form_basis(2) == ((0, 1),)
    basis4 = two_form_basis(4)
    assert len(basis4) == 6
    assert basis4 == tuple(sorted(basis4))


def test_two_form_norm_convention():
    e01 = two_form_tensor(4, (0, 1))
    metric = Metric.euclidean(4)
    assert tensor_inner(e01, e01, metric) == pytest.approx(2.0)


def test_two_form_vector_roundtrip():
    rng = np.random.default_rng(5)
    omega = antisymmetrize(rand_tensor(rng, 5, "ll"), (0, 1))
    vec = two_form_to_vector(omega)
    back = vector_to_two_form(5, vec)
    assert np.allclose(back.values(), omega.values(), atol=1e-14)


def test_metric_rejects_indefinite():
    bad = np.diag([1.0, -1.0])
    with pytest.raises(TensorError):
        Metric(PointTensor(2, "ll", bad))
