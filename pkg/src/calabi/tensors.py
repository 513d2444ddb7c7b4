"""Dense pointwise tensor algebra with explicit index variance.

Components live in a fixed frame at one point.  Entries are floats for the
algebraic curvature models and may be :class:`~calabi.jets.Jet` values for
field computations (the chart operators build those).  Conventions used
throughout the package:

* the inner product on 2-forms is the full contraction
  ``<mu, nu> = mu_ab nu^ab`` with no 1/2 factor, so the elementary 2-forms
  returned by :func:`two_form_basis` have squared norm 2;
* (anti)symmetrisation over k slots carries the 1/k! weight.
"""

from __future__ import annotations

from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PointTensor",
    "Metric",
    "TensorError",
    "contract",
    "raise_lower",
    "symmetrize",
    "antisymmetrize",
    "riemann_project",
    "riemann_projector_matrix",
    "two_form_basis",
    "two_form_tensor",
    "two_form_to_vector",
    "vector_to_two_form",
    "tensor_inner",
]


class TensorError(ValueError):
    """Shape or variance violation in a tensor operation."""


def _parity(perm: Sequence[int]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class PointTensor:
    """Tensor components at a point with per-slot variance ('l' or 'u')."""

    __slots__ = ("dim", "variance", "components")

    def __init__(self, dim: int, variance: str, components):
        if any(v not in "lu" for v in variance):
            raise TensorError(f"variance must use 'l'/'u', got {variance!r}")
        arr = np.asarray(components)
        if arr.dtype != object:
            arr = np.asarray(arr, dtype=float)
        if arr.shape != (dim,) * len(variance):
            raise TensorError(
                f"components shape {arr.shape} does not match dim={dim}, rank={len(variance)}"
            )
        self.dim = dim
        self.variance = variance
        self.components = arr

    @property
    def rank(self) -> int:
        return len(self.variance)

    @property
    def is_jet_valued(self) -> bool:
        return self.components.dtype == object

    def values(self) -> np.ndarray:
        """Float components; jet entries collapse to their point values."""
        if not self.is_jet_valued:
            return self.components
        out = np.empty(self.components.shape)
        for idx in np.ndindex(*self.components.shape):
            out[idx] = self.components[idx].value
        return out

    def norm(self) -> float:
        return float(np.sqrt((self.values() ** 2).sum()))

    def __repr__(self):
        kind = "jet" if self.is_jet_valued else "float"
        return f"PointTensor(dim={self.dim}, variance={self.variance!r}, {kind})"


class Metric:
    """Positive-definite metric at a point, with its inverse.

    Construction verifies symmetry, checks positive definiteness through an
    eigendecomposition, and validates ``g . g_inv = id`` to 1e-12.
    """

    __slots__ = ("dim", "g", "g_inv")

    def __init__(self, g: PointTensor):
        if g.variance != "ll" or g.is_jet_valued:
            raise TensorError("Metric expects a float (0,2) tensor")
        mat = g.components
        if not np.allclose(mat, mat.T, atol=1e-12):
            raise TensorError("metric is not symmetric")
        eigs = np.linalg.eigvalsh(mat)
        if eigs.min() <= 0:
            raise TensorError(f"metric is not positive definite (min eigenvalue {eigs.min():.3e})")
        inv = np.linalg.inv(mat)
        if not np.allclose(mat @ inv, np.eye(g.dim), atol=1e-12):
            raise TensorError("metric inverse fails the identity check")
        self.dim = g.dim
        self.g = g
        self.g_inv = PointTensor(g.dim, "uu", inv)

    @classmethod
    def euclidean(cls, dim: int) -> "Metric":
        return cls(PointTensor(dim, "ll", np.eye(dim)))


# -- basic operations --------------------------------------------------------

def contract(t: PointTensor, slot_i: int, slot_j: int) -> PointTensor:
    """Trace over a lower/upper slot pair; the rank drops by two."""
    r = t.rank
    if not (0 <= slot_i < r and 0 <= slot_j < r) or slot_i == slot_j:
        raise TensorError("contract needs two distinct valid slots")
    if t.variance[slot_i] == t.variance[slot_j]:
        raise TensorError("contract needs slots of opposite variance")
    comp = t.components.diagonal(axis1=slot_i, axis2=slot_j).sum(axis=-1)
    keep = [k for k in range(r) if k not in (slot_i, slot_j)]
    variance = "".join(t.variance[k] for k in keep)
    if not keep:
        # rank-0 result: keep a 0-d value accessible via .components[()]
        return PointTensor0(comp)
    return PointTensor(t.dim, variance, comp)


class PointTensor0:
    """Rank-0 contraction result (a bare scalar with a uniform interface)."""

    __slots__ = ("components",)

    def __init__(self, value):
        self.components = value

    @property
    def rank(self):
        return 0

    def values(self):
        return self.components.value if hasattr(self.components, "value") else self.components


def raise_lower(t: PointTensor, slot: int, metric: Metric) -> PointTensor:
    """Flip the variance of one slot using the metric or its inverse."""
    if not 0 <= slot < t.rank:
        raise TensorError("slot out of range")
    lower = t.variance[slot] == "u"
    g = metric.g.components if lower else metric.g_inv.components
    moved = np.moveaxis(t.components, slot, -1)
    if t.is_jet_valued:
        out = np.empty(moved.shape, dtype=object)
        for idx in np.ndindex(*moved.shape[:-1]):
            row = moved[idx]
            for a in range(t.dim):
                out[idx + (a,)] = sum(g[a, b] * row[b] for b in range(t.dim))
    else:
        out = moved @ g.T
    out = np.moveaxis(out, -1, slot)
    variance = t.variance[:slot] + ("l" if lower else "u") + t.variance[slot + 1:]
    return PointTensor(t.dim, variance, out)


def _permutation_average(t: PointTensor, slots: Sequence[int], signed: bool) -> PointTensor:
    slots = list(slots)
    if len(set(slots)) != len(slots) or any(not 0 <= s < t.rank for s in slots):
        raise TensorError("slots must be distinct and in range")
    kinds = {t.variance[s] for s in slots}
    if len(kinds) != 1:
        raise TensorError("(anti)symmetrisation slots must share variance")
    acc = None
    for perm in permutations(range(len(slots))):
        axes = list(range(t.rank))
        for pos, p in enumerate(perm):
            axes[slots[pos]] = slots[p]
        term = np.transpose(t.components, axes)
        if signed and _parity(perm) < 0:
            term = -term
        acc = term if acc is None else acc + term
    import math

    acc = acc / math.factorial(len(slots))
    return PointTensor(t.dim, t.variance, acc)


def symmetrize(t: PointTensor, slots: Sequence[int]) -> PointTensor:
    """Symmetric part over the given slots (idempotent projector)."""
    return _permutation_average(t, slots, signed=False)


def antisymmetrize(t: PointTensor, slots: Sequence[int]) -> PointTensor:
    """Antisymmetric part over the given slots (kills symmetric parts)."""
    return _permutation_average(t, slots, signed=True)


# -- symmetry class of curvature tensors -------------------------------------

def _riemann_sym_apply(arr: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a rank-4 array onto curvature-type symmetry.

    The target subspace is {T : T = T_[ab][cd], T_[abc]d = 0}; it equals the
    intersection of pair antisymmetry, pair-interchange symmetry and the
    orthogonal complement of the fully antisymmetric tensors, and all three
    factors commute, so the composite below is the orthogonal projector.
    """
    a = 0.25 * (
        arr
        - arr.transpose(1, 0, 2, 3)
        - arr.transpose(0, 1, 3, 2)
        + arr.transpose(1, 0, 3, 2)
    )
    s = 0.5 * (a + a.transpose(2, 3, 0, 1))
    alt = np.zeros_like(arr)
    for perm in permutations(range(4)):
        term = s.transpose(perm)
        alt = alt + _parity(perm) * term
    alt /= 24.0
    return s - alt


def riemann_project(t: PointTensor) -> PointTensor:
    """Orthogonal projection onto tensors with curvature symmetries.

    Input must be a float rank-4 all-lower tensor.  The output satisfies
    pair antisymmetry, the first Bianchi identity and, as a consequence,
    pair interchange.
    """
    if t.variance != "llll":
        raise TensorError("riemann_project expects a (0,4) tensor")
    if t.is_jet_valued:
        raise TensorError("riemann_project operates on float tensors")
    return PointTensor(t.dim, "llll", _riemann_sym_apply(t.components))


_PROJECTOR_CACHE: dict[int, np.ndarray] = {}


def riemann_projector_matrix(dim: int) -> np.ndarray:
    """Explicit dim^4 x dim^4 projector matrix (cached per dimension)."""
    if dim not in _PROJECTOR_CACHE:
        n4 = dim ** 4
        mat = np.empty((n4, n4))
        basis = np.zeros((dim,) * 4)
        for col in range(n4):
            idx = np.unravel_index(col, (dim,) * 4)
            basis[idx] = 1.0
            mat[:, col] = _riemann_sym_apply(basis).reshape(-1)
            basis[idx] = 0.0
        _PROJECTOR_CACHE[dim] = mat
    return _PROJECTOR_CACHE[dim]


# -- two-form bookkeeping -----------------------------------------------------

def two_form_basis(dim: int) -> tuple[tuple[int, int], ...]:
    """Ordered index pairs (a, b), a < b, labelling the elementary 2-forms.

    The elementary 2-form for (a, b) has components +1 at (a, b) and -1 at
    (b, a); with the full-contraction inner product its squared norm is 2.
    """
    if dim < 1:
        raise TensorError("dim must be >= 1")
    return tuple((a, b) for a in range(dim) for b in range(a + 1, dim))


def two_form_tensor(dim: int, pair: tuple[int, int]) -> PointTensor:
    a, b = pair
    comp = np.zeros((dim, dim))
    comp[a, b] = 1.0
    comp[b, a] = -1.0
    return PointTensor(dim, "ll", comp)


def two_form_to_vector(t: PointTensor) -> np.ndarray:
    """Coordinates of an antisymmetric (0,2) tensor in the (a<b) basis."""
    if t.variance != "ll":
        raise TensorError("expected a (0,2) tensor")
    comp = t.values()
    if not np.allclose(comp, -comp.T, atol=1e-10 * (1 + np.abs(comp).max())):
        raise TensorError("tensor is not antisymmetric")
    return np.array([comp[a, b] for a, b in two_form_basis(t.dim)])


def vector_to_two_form(dim: int, vec: np.ndarray) -> PointTensor:
    basis = two_form_basis(dim)
    if len(vec) != len(basis):
        raise TensorError("vector length does not match the 2-form basis")
    comp = np.zeros((dim, dim))
    for coef, (a, b) in zip(vec, basis):
        comp[a, b] = coef
        comp[b, a] = -coef
    return PointTensor(dim, "ll", comp)


def tensor_inner(a: PointTensor, b: PointTensor, metric: Metric | None = None) -> float:
    """Full-contraction inner product of two all-lower tensors of equal rank."""
    if a.variance != b.variance or set(a.variance) != {"l"}:
        raise TensorError("tensor_inner expects matching all-lower tensors")
    av, bv = a.values(), b.values()
    if metric is None:
        return float((av * bv).sum())
    ginv = metric.g_inv.components
    raised = av
    for slot in range(a.rank):
        raised = np.moveaxis(np.moveaxis(raised, slot, -1) @ ginv.T, -1, slot)
    return float((raised * bv).sum())
