"""Pointwise curvature algebra on 2-forms.

Implements the homomorphism taking a 2-form mu_cd to

    2 R_ab^e_[c mu_d]e + 2 R_cd^e_[a mu_b]e,

the induced orthogonal split of the 2-forms into its kernel K and the
complement C, the curvature operator omega_ab -> R_ab^cd omega_cd with its
spectrum, the Lie-triple-system residuals, the Ricci-twisted operator used
for products, and detection of parallel (Kahler) 2-forms.

All operations act on algebraic curvature models at a basepoint with an
orthonormal frame; everything here is plain dense linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    Metric,
    PointTensor,
    TensorError,
    riemann_project,
    tensor_inner,
    two_form_basis,
    two_form_tensor,
    two_form_to_vector,
    vector_to_two_form,
)

__all__ = [
    "HolonomyError",
    "AmbiguousRankError",
    "NormalizationError",
    "DegenerateRicciError",
    "TwoFormSplit",
    "SpectrumReport",
    "jacobi_eigh",
    "curvature_homomorphism",
    "curvature_homomorphism_matrix",
    "split_two_forms",
    "curvature_operator_matrix",
    "curvature_operator_spectrum",
    "s_tensor",
    "s_operator_spectrum",
    "lts_residual",
    "traced_identity_residual",
    "kahler_detect",
    "ricci_tensor",
    "trace_equation_kernel_sv",
    "full_equation_kernel_sv",
]


class HolonomyError(ValueError):
    pass


class AmbiguousRankError(HolonomyError):
    """Singular values straddle the rank threshold; pass an explicit tol."""


class NormalizationError(HolonomyError):
    """Operation requires a unit-Ricci normalised model."""


class DegenerateRicciError(HolonomyError):
    """Ricci tensor is singular (a flat factor is present)."""


# -- eigensolver ---------------------------------------------------------------

def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues ascending and the matching orthonormal eigenvector
    columns.  Dimensions in this package never exceed a few dozen, where
    Jacobi is simple and accurate to machine precision.
    """
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise HolonomyError("jacobi_eigh expects a square matrix")
    if n and not np.allclose(a, a.T, atol=1e-10 * (1 + np.abs(a).max())):
        raise HolonomyError("jacobi_eigh expects a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(((a - np.diag(np.diag(a))) ** 2).sum())
        if off <= tol * max(1.0, np.abs(np.diag(a)).max() if n else 1.0):
            break
        for p in range(n):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= 1e-300:
                    continue
                phi = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(phi), np.sin(phi)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    else:
        raise HolonomyError("Jacobi iteration failed to converge; matrix may not be symmetric")
    order = np.argsort(np.diag(a), kind="stable")
    return np.diag(a)[order], v[:, order]


# -- the curvature homomorphism on 2-forms --------------------------------------

def _riemann_mixed(model) -> np.ndarray:
    """Components R_ab^e_d (third slot raised) from the model's (0,4) tensor."""
    ginv = model.metric.g_inv.components
    return np.einsum("abed,ec->abcd", model.riemann.components, ginv)


def curvature_homomorphism(model, mu: PointTensor) -> PointTensor:
    """Image of a 2-form under the curvature action into curvature-type tensors."""
    if mu.variance != "ll":
        raise TensorError("expected a (0,2) form")
    comp = mu.values()
    scale = 1.0 + np.abs(comp).max()
    if not np.allclose(comp, -comp.T, atol=1e-10 * scale):
        raise TensorError("input 2-form is not antisymmetric")
    rm = _riemann_mixed(model)
    first = np.einsum("abec,de->abcd", rm, comp) - np.einsum("abed,ce->abcd", rm, comp)
    second = np.einsum("cdea,be->abcd", rm, comp) - np.einsum("cdeb,ae->abcd", rm, comp)
    out = PointTensor(model.dim, "llll", first + second)
    check = riemann_project(out)
    if not np.allclose(check.values(), out.values(), atol=1e-10 * (1 + out.norm())):
        raise HolonomyError("curvature homomorphism output lost curvature symmetry")
    return out


def curvature_homomorphism_matrix(model) -> np.ndarray:
    """Matrix of the homomorphism: columns are flattened images of basis 2-forms."""
    basis = two_form_basis(model.dim)
    cols = np.empty((model.dim ** 4, len(basis)))
    for j, pair in enumerate(basis):
        cols[:, j] = curvature_homomorphism(model, two_form_tensor(model.dim, pair)).components.reshape(-1)
    return cols


@dataclass
class TwoFormSplit:
    """Orthogonal split of the 2-forms into the homomorphism kernel K and C = K-perp."""

    dim: int
    k_basis: list = field(repr=False)
    c_basis: list = field(repr=False)
    k_vectors: np.ndarray = field(repr=False)
    c_vectors: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)

    @property
    def dim_k(self) -> int:
        return len(self.k_basis)

    @property
    def dim_c(self) -> int:
        return len(self.c_basis)

    def project_k(self, vec: np.ndarray) -> np.ndarray:
        if self.dim_k == 0:
            return np.zeros_like(vec)
        return self.k_vectors @ (self.k_vectors.T @ vec)

    def project_c(self, vec: np.ndarray) -> np.ndarray:
        if self.dim_c == 0:
            return np.zeros_like(vec)
        return self.c_vectors @ (self.c_vectors.T @ vec)


def split_two_forms(model, tol: float = 1e-9) -> TwoFormSplit:
    """Kernel/complement split of the 2-forms under the curvature action.

    The kernel is read from the singular values of the homomorphism matrix
    at relative threshold ``tol``.  If any singular value falls within a
    factor of 10 of the cut on either side, the rank is ambiguous and an
    explicit tolerance override is required.
    """
    basis = two_form_basis(model.dim)
    m = len(basis)
    if m == 0:
        empty = np.zeros((0, 0))
        return TwoFormSplit(model.dim, [], [], empty, empty, np.zeros(0))
    mat = curvature_homomorphism_matrix(model)
    u, sv, vt = np.linalg.svd(mat)
    smax = sv[0] if sv.size else 0.0
    if smax == 0.0:
        k_vec = np.eye(m)
        c_vec = np.zeros((m, 0))
        sv = np.zeros(m)
    else:
        cut = tol * smax
        near = (sv > cut / 10) & (sv < cut * 10)
        if near.any():
            raise AmbiguousRankError(
                f"singular values {sv[near]} lie within 10x of the threshold {cut:.3e}; "
                "pass an explicit tol"
            )
        rank = int((sv > cut).sum())
        c_vec = vt[:rank].T
        k_vec = vt[rank:].T
    # basis coordinates are with respect to elementary 2-forms of squared
    # norm 2; rescale so the returned forms are unit in the tensor product
    k_forms = [vector_to_two_form(model.dim, k_vec[:, j] / np.sqrt(2)) for j in range(k_vec.shape[1])]
    c_forms = [vector_to_two_form(model.dim, c_vec[:, j] / np.sqrt(2)) for j in range(c_vec.shape[1])]
    split = TwoFormSplit(model.dim, k_forms, c_forms, k_vec, c_vec, sv)
    metric = model.metric
    for i, ki in enumerate(k_forms):
        for cj in c_forms:
            if abs(tensor_inner(ki, cj, metric)) > 1e-10:
                raise HolonomyError("kernel and complement are not orthogonal")
    return split


# -- the curvature operator ------------------------------------------------------

def curvature_operator_matrix(model) -> np.ndarray:
    """Symmetric matrix of omega_ab -> R_ab^cd omega_cd in the normalised 2-form basis."""
    basis = two_form_basis(model.dim)
    ginv = model.metric.g_inv.components
    r_up = np.einsum("abef,ec,fd->abcd", model.riemann.components, ginv, ginv)
    m = len(basis)
    mat = np.empty((m, m))
    for i, (a, b) in enumerate(basis):
        for j, (c, d) in enumerate(basis):
            mat[i, j] = 2.0 * r_up[a, b, c, d]
    return mat


@dataclass
class SpectrumReport:
    """Eigen-decomposition of a symmetric operator on 2-forms."""

    operator: str
    dim: int
    eigenvalues: np.ndarray
    multiplicities: list
    eigenforms: list = field(repr=False)
    all_in_bounds: bool = False
    top_is_kahler: bool = False
    bounds: tuple = (0.0, 2.0)

    def grouped(self) -> list:
        """(eigenvalue, multiplicity) pairs, ascending."""
        return list(self.multiplicities)


def _group_eigenvalues(eigs: np.ndarray, tol: float = 1e-7) -> list:
    groups = []
    for lam in eigs:
        if groups and abs(lam - groups[-1][0] * 1.0) < tol:
            val, count = groups[-1]
            groups[-1] = ((val * count + lam) / (count + 1), count + 1)
        else:
            groups.append((float(lam), 1))
    return [(float(v), int(c)) for v, c in groups]


def _kahler_validates(model, omega: PointTensor, tol: float = 1e-8) -> bool:
    """A 2-form is Kahler-like if the curvature action kills it and it is
    nondegenerate on some factor block."""
    rm = _riemann_mixed(model)
    comp = omega.values()
    act = np.einsum("abec,de->abcd", rm, comp) - np.einsum("abed,ce->abcd", rm, comp)
    if np.abs(act).max() > tol * (1 + np.abs(comp).max()):
        return False
    for f in model.factors:
        block = comp[f.offset:f.offset + f.dim, f.offset:f.offset + f.dim]
        if f.dim >= 2 and abs(np.linalg.det(block)) > tol:
            return True
    return False


def curvature_operator_spectrum(model, tol: float = 1e-10) -> SpectrumReport:
    """Full symmetric eigen-decomposition of the curvature operator.

    Bound flags follow the eigenvalue theorem for unit-Ricci models:
    [0, 2] for compact type, [-2, 0] for non-compact type.
    """
    mat = curvature_operator_matrix(model)
    eigs, vecs = jacobi_eigh(mat)
    m = mat.shape[0]
    scale = 1 + (np.abs(eigs).max() if m else 0.0)
    for j in range(m):
        res = mat @ vecs[:, j] - eigs[j] * vecs[:, j]
        if np.linalg.norm(res) > tol * scale:
            raise HolonomyError("eigenvector residual exceeds tolerance")
    forms = [vector_to_two_form(model.dim, vecs[:, j] / np.sqrt(2)) for j in range(m)]
    noncompact = all(f.kind == "hyperbolic" for f in model.factors if f.kind != "flat") and any(
        f.kind == "hyperbolic" for f in model.factors
    )
    bounds = (-2.0, 0.0) if noncompact else (0.0, 2.0)
    slack = 1e-9
    in_bounds = bool(m == 0 or ((eigs >= bounds[0] - slack) & (eigs <= bounds[1] + slack)).all())
    if m:
        extreme = np.argmax(np.abs(eigs))
        top_is_kahler = abs(abs(eigs[extreme]) - 2.0) < 1e-7 and _kahler_validates(model, forms[extreme])
    else:
        top_is_kahler = False
    report = SpectrumReport(
        operator="curvature",
        dim=model.dim,
        eigenvalues=eigs,
        multiplicities=_group_eigenvalues(eigs),
        eigenforms=forms,
        all_in_bounds=in_bounds,
        top_is_kahler=top_is_kahler,
        bounds=bounds,
    )
    total = sum(c for _, c in report.multiplicities)
    if total != m:
        raise HolonomyError("multiplicities do not sum to the 2-form dimension")
    return report


# -- Ricci, the twisted operator for products, and identities --------------------

def ricci_tensor(model) -> PointTensor:
    """Ricci tensor R_bd, the (1,3)-trace of the curvature."""
    rm = _riemann_mixed(model)
    return PointTensor(model.dim, "ll", np.einsum("abad->bd", rm))


def s_tensor(model, tol: float = 1e-10) -> PointTensor:
    """Curvature twisted by the inverse Ricci tensor.

    S_abcd = R_abc^e S_de with S the Ricci inverse; the result has curvature
    symmetries and ignores constant rescalings of the metric.  Requires a
    nondegenerate Ricci tensor: any flat factor makes it singular.
    """
    ric = ricci_tensor(model).components
    eigs = np.linalg.eigvalsh(ric)
    if np.abs(eigs).min() <= tol * max(1.0, np.abs(eigs).max()):
        flat = [f"factor {i} ({f.kind}, dim {f.dim})" for i, f in enumerate(model.factors)
                if f.kind == "flat"]
        detail = "; ".join(flat) if flat else "no factor is tagged flat, but Ricci is singular"
        raise DegenerateRicciError(f"Ricci tensor is degenerate: {detail}")
    s_inv = np.linalg.inv(ric)
    ginv = model.metric.g_inv.components
    r_mixed_last = np.einsum("abcf,fe->abce", model.riemann.components, ginv)
    s_comp = np.einsum("abce,de->abcd", r_mixed_last, s_inv)
    out = PointTensor(model.dim, "llll", s_comp)
    proj = riemann_project(out)
    if not np.allclose(proj.values(), out.values(), atol=1e-9 * (1 + out.norm())):
        raise HolonomyError("twisted curvature lost its symmetry class")
    return out


def s_operator_spectrum(model) -> SpectrumReport:
    """Spectrum of omega_ab -> S_ab^cd omega_cd for the twisted curvature."""
    s = s_tensor(model)
    ginv = model.metric.g_inv.components
    s_up = np.einsum("abef,ec,fd->abcd", s.components, ginv, ginv)
    basis = two_form_basis(model.dim)
    m = len(basis)
    mat = np.empty((m, m))
    for i, (a, b) in enumerate(basis):
        for j, (c, d) in enumerate(basis):
            mat[i, j] = 2.0 * s_up[a, b, c, d]
    eigs, vecs = jacobi_eigh(mat)
    forms = [vector_to_two_form(model.dim, vecs[:, j] / np.sqrt(2)) for j in range(m)]
    in_bounds = bool(m == 0 or ((eigs >= -1e-9) & (eigs <= 2 + 1e-9)).all())
    top = bool(m and abs(eigs[-1] - 2.0) < 1e-7 and _kahler_validates(model, forms[-1]))
    return SpectrumReport(
        operator="ricci-twisted curvature",
        dim=model.dim,
        eigenvalues=eigs,
        multiplicities=_group_eigenvalues(eigs),
        eigenforms=forms,
        all_in_bounds=in_bounds,
        top_is_kahler=top,
        bounds=(0.0, 2.0),
    )


def lts_residual(model_or_riemann, metric: Metric | None = None) -> float:
    """Residual of the quadratic Lie-triple-system identity.

    Computes the norm of R_ab^e_[c R_d]e^f_g + R_cd^e_[a R_b]e^f_g over all
    six free indices; locally symmetric curvature satisfies it exactly.
    """
    if isinstance(model_or_riemann, PointTensor):
        riem = model_or_riemann
        metric = metric or Metric.euclidean(riem.dim)
    else:
        riem = model_or_riemann.riemann
        metric = model_or_riemann.metric
    ginv = metric.g_inv.components
    rm = np.einsum("abed,ec->abcd", riem.components, ginv)  # R_ab^c_d
    a_term = np.einsum("abec,dehg->abcdhg", rm, rm)
    first = 0.5 * (a_term - a_term.transpose(0, 1, 3, 2, 4, 5))
    second = 0.5 * (
        np.einsum("cdea,behg->abcdhg", rm, rm)
        - np.einsum("cdeb,aehg->abcdhg", rm, rm)
    )
    total = first + second
    return float(np.sqrt((total ** 2).sum()))


def traced_identity_residual(model) -> float:
    """Residual of the unit-Ricci trace of the Lie-triple-system identity.

    Checks R_abcd = 1/2 R_ab^ef R_cdef + R_a^ef_c R_befd - R_b^ef_c R_aefd,
    which requires the model to be normalised with Ricci equal to the
    metric.
    """
    ric = ricci_tensor(model).components
    g = model.metric.g.components
    if not np.allclose(ric, g, atol=1e-10 * (1 + np.abs(g).max())):
        raise NormalizationError("traced identity requires Ricci = metric")
    ginv = model.metric.g_inv.components
    r = model.riemann.components
    r_upef = np.einsum("abef,ec,fd->abcd", r, ginv, ginv)  # R_ab^{cd}
    term1 = 0.5 * np.einsum("abef,cdef->abcd", r_upef, r)
    r_a_ef_c = np.einsum("aefc,eg,fh->aghc", r, ginv, ginv)  # R_a^{ef}_c
    term2 = np.einsum("aefc,befd->abcd", r_a_ef_c, r)
    term3 = np.einsum("befc,aefd->abcd", r_a_ef_c, r)
    residual = r - (term1 + term2 - term3)
    return float(np.sqrt((residual ** 2).sum()))


class _SubModel:
    """Minimal model view of a single factor block (duck-typed)."""

    __slots__ = ("dim", "metric", "riemann", "factors")

    def __init__(self, dim, metric, riemann, factors):
        self.dim = dim
        self.metric = metric
        self.riemann = riemann
        self.factors = factors


def _factor_submodel(model, f) -> "_SubModel":
    block = slice(f.offset, f.offset + f.dim)
    sub_riemann = model.riemann.components[block, block, block, block]
    sub_factor = type(f)(kind=f.kind, dim=f.dim, offset=0, scale=f.scale) if hasattr(f, "scale") else f
    return _SubModel(
        dim=f.dim,
        metric=Metric.euclidean(f.dim),
        riemann=PointTensor(f.dim, "llll", sub_riemann),
        factors=(sub_factor,),
    )


def kahler_detect(model, tol: float = 1e-7) -> list:
    """Parallel nondegenerate 2-form candidates, one per Hermitian factor.

    For each non-flat factor, the curvature operator of the factor block is
    diagonalised on its own; an eigenform whose eigenvalue is twice the
    factor's Einstein constant is normalised so its square is minus the
    identity on the block, embedded into the full space, and validated: the
    full curvature action must kill it and the block must be nondegenerate.
    Returns an empty list when no factor is Hermitian.
    """
    ric = ricci_tensor(model).components
    candidates = []
    for f in model.factors:
        if f.kind == "flat" or f.dim < 2:
            continue
        block = slice(f.offset, f.offset + f.dim)
        coef = np.trace(ric[block, block]) / f.dim
        if abs(coef) < 1e-12:
            continue
        sub = _factor_submodel(model, f)
        report = curvature_operator_spectrum(sub)
        target = 2.0 * coef
        for lam, form in zip(report.eigenvalues, report.eigenforms):
            if abs(lam - target) > tol:
                continue
            comp = form.values()
            sq = -comp @ comp
            scale = np.trace(sq) / f.dim
            if scale <= tol:
                continue
            comp = comp / np.sqrt(scale)
            if np.abs(-comp @ comp - np.eye(f.dim)).max() > 1e-6:
                continue
            embedded = np.zeros((model.dim, model.dim))
            embedded[block, block] = comp
            cand = PointTensor(model.dim, "ll", embedded)
            if _kahler_validates(model, cand):
                if not any(np.allclose(np.abs(cand.values()), np.abs(prev.values()), atol=1e-8)
                           for prev in candidates):
                    candidates.append(cand)
    return candidates


# -- kernel checks for the algebraic lemmas --------------------------------------

def _lambda1_c_basis(model, split: TwoFormSplit):
    """Basis of 1-form tensor C as (dim * dim_c) index pairs."""
    return [(a, j) for a in range(model.dim) for j in range(split.dim_c)]


def trace_equation_kernel_sv(model, split: TwoFormSplit | None = None) -> float:
    """Smallest singular value of the Ricci-traced equation on X in Lambda^1 (x) C.

    The equation R_b^d X_ade - R_a^d X_bde = R_ab^cd X_cde - R_ab^d_e X^c_cd
    should force X = 0 on irreducible unit-Ricci models; a positive smallest
    singular value certifies the trivial kernel.  Returns +inf when C = 0
    (the condition is vacuous).
    """
    split = split or split_two_forms(model)
    if split.dim_c == 0:
        return float("inf")
    ginv = model.metric.g_inv.components
    ric = ricci_tensor(model).components
    ric_up = ric @ ginv  # R_b^d as matrix [b, d]
    r = model.riemann.components
    r_upcd = np.einsum("abef,ec,fd->abcd", r, ginv, ginv)  # R_ab^{cd}
    rm = _riemann_mixed(model)  # R_ab^c_d

    dim = model.dim
    rows = []
    for a_idx, j in _lambda1_c_basis(model, split):
        x = np.zeros((dim, dim, dim))
        x[a_idx] = split.c_basis[j].values()
        lhs = np.einsum("bd,ade->abe", ric_up, x) - np.einsum("ad,bde->abe", ric_up, x)
        x_trace = np.einsum("cf,fcd->d", ginv, x)  # X^c_{cd}
        rhs = np.einsum("abcd,cde->abe", r_upcd, x) - np.einsum("abde,d->abe", rm, x_trace)
        rows.append((lhs - rhs).reshape(-1))
    mat = np.array(rows).T
    sv = np.linalg.svd(mat, compute_uv=False)
    return float(sv.min())


def full_equation_kernel_sv(model, split: TwoFormSplit | None = None) -> float:
    """Smallest singular value of the full second-derivative equation on X.

    The stronger (untraced) equation antisymmetrises the curvature action
    over three 1-form slots; its trivial kernel on irreducible unit-Ricci
    models is what makes the second-order integrability conditions work.
    """
    split = split or split_two_forms(model)
    if split.dim_c == 0:
        return float("inf")
    rm = _riemann_mixed(model)  # R_ab^f_d appears as rm[a, b, f, d]

    dim = model.dim
    rows = []
    for a_idx, j in _lambda1_c_basis(model, split):
        x = np.zeros((dim, dim, dim))
        x[a_idx] = split.c_basis[j].values()
        t1 = np.einsum("abfd,cef->abcde", rm, x)
        t2 = np.einsum("cafd,bef->abcde", rm, x)
        t3 = np.einsum("bcfd,aef->abcde", rm, x)
        u1 = np.einsum("abfe,cdf->abcde", rm, x)
        u2 = np.einsum("cafe,bdf->abcde", rm, x)
        u3 = np.einsum("bcfe,adf->abcde", rm, x)
        rows.append((t1 + t2 + t3 - u1 - u2 - u3).reshape(-1))
    mat = np.array(rows).T
    sv = np.linalg.svd(mat, compute_uv=False)
    return float(sv.min())
