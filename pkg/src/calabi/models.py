"""Curvature models at a basepoint and analytic coordinate charts.

Models are algebraic: metric = identity (orthonormal frame), a curvature
tensor with the right symmetries, optional parallel complex structure, and
factor metadata for products.  Charts are analytic: stereographic for
spheres, Poincare ball for hyperbolic space, an affine chart driven by the
Kahler potential for complex projective space, block products, and the 2D
warped strip.  Charts and models are linked only through frame-invariant
quantities (scalar curvature, curvature norm), never through frame
matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import holonomy
from .jets import Jet, jet_cosh, jet_exp, jet_log
from .spaces import SpaceSpec, SpecFactor, parse_space_spec
from .tensors import Metric, PointTensor, riemann_project

__all__ = [
    "ModelError",
    "ChartError",
    "ChartDomainError",
    "Factor",
    "CurvatureModel",
    "constant_curvature_model",
    "fubini_study_model",
    "product_model",
    "model_from_spec",
    "ChartGeometry",
    "ProductChart",
    "WarpedChart2D",
    "WarpFunction",
    "warp_by_name",
    "make_chart",
    "make_warped_chart",
    "standard_complex_structure",
]


class ModelError(ValueError):
    pass


class ChartError(ValueError):
    pass


class ChartDomainError(ChartError):
    """Sample point escaped the chart's domain of validity."""


@dataclass(frozen=True)
class Factor:
    kind: str    # "sphere" | "hyperbolic" | "fubini_study" | "flat"
    dim: int     # real dimension
    offset: int
    scale: float = 1.0

    @property
    def hermitian(self) -> bool:
        """Carries a parallel nondegenerate 2-form (excluding flat factors)."""
        return self.kind == "fubini_study" or (self.kind in ("sphere", "hyperbolic") and self.dim == 2)


def standard_complex_structure(dim: int) -> np.ndarray:
    """Constant matrix J^a_b pairing coordinates (2k, 2k+1)."""
    if dim % 2:
        raise ModelError("complex structure needs even dimension")
    j = np.zeros((dim, dim))
    for k in range(dim // 2):
        j[2 * k, 2 * k + 1] = 1.0
        j[2 * k + 1, 2 * k] = -1.0
    return j


class CurvatureModel:
    """Algebraic curvature data at a basepoint with an orthonormal frame.

    Construction validates the curvature symmetry class to 1e-12, the
    quadratic local-symmetry identity to 1e-10, and, when a complex
    structure is attached, that it squares to minus the identity and is
    annihilated by the curvature action.
    """

    __slots__ = ("dim", "metric", "riemann", "kahler", "factors", "normalization")

    def __init__(self, dim: int, riemann: PointTensor, kahler: PointTensor | None,
                 factors: Sequence[Factor], normalization: str):
        metric = Metric.euclidean(dim)
        proj = riemann_project(riemann)
        if not np.allclose(proj.components, riemann.components, atol=1e-12 * (1 + riemann.norm())):
            raise ModelError("curvature tensor is not in the curvature symmetry class")
        self.dim = dim
        self.metric = metric
        self.riemann = riemann
        self.kahler = kahler
        self.factors = tuple(factors)
        self.normalization = normalization
        res = holonomy.lts_residual(self)
        if res >= 1e-10:
            raise ModelError(f"model violates the local-symmetry identity (residual {res:.3e})")
        if kahler is not None:
            j = kahler.components
            if not np.allclose(j, -j.T, atol=1e-12):
                raise ModelError("complex structure form is not antisymmetric")
            if not np.allclose(j @ j, -np.eye(dim), atol=1e-12):
                raise ModelError("complex structure does not square to minus the identity")
            rm = np.einsum("abed,ec->abcd", riemann.components, metric.g_inv.components)
            act = np.einsum("abec,de->abcd", rm, j) - np.einsum("abed,ce->abcd", rm, j)
            if np.abs(act).max() > 1e-12 * (1 + riemann.norm()):
                raise ModelError("curvature action does not annihilate the complex structure")

    @property
    def ricci(self) -> PointTensor:
        return holonomy.ricci_tensor(self)

    @property
    def scalar_curvature(self) -> float:
        ric = self.ricci.components
        return float(np.einsum("ab,ab->", self.metric.g_inv.components, ric))

    def riemann_norm_squared(self) -> float:
        r = self.riemann.components
        return float((r ** 2).sum())

    def __repr__(self):
        kinds = "x".join(f"{f.kind}:{f.dim}" for f in self.factors)
        return f"CurvatureModel(dim={self.dim}, factors=[{kinds}], normalization={self.normalization!r})"


def _constant_curvature_riemann(n: int, kappa: float) -> np.ndarray:
    g = np.eye(n)
    return kappa * (np.einsum("ac,bd->abcd", g, g) - np.einsum("bc,ad->abcd", g, g))


def constant_curvature_model(n: int, kappa: float, normalization: str = "custom") -> CurvatureModel:
    """Model with R_abcd = kappa (g_ac g_bd - g_bc g_ad).

    ``unit_curvature`` rescales kappa to +-1; ``unit_ricci`` rescales so the
    Ricci tensor equals +-(metric), i.e. kappa -> sign / (n - 1), which
    needs n >= 2 and kappa != 0.
    """
    if n < 1:
        raise ModelError("dimension must be >= 1")
    if normalization == "unit_curvature":
        kappa_eff = float(np.sign(kappa))
    elif normalization == "unit_ricci":
        if kappa == 0:
            raise ModelError("unit_ricci normalisation is undefined for zero curvature")
        if n < 2:
            raise ModelError("unit_ricci normalisation needs dimension >= 2")
        kappa_eff = float(np.sign(kappa)) / (n - 1)
    elif normalization == "custom":
        kappa_eff = float(kappa)
    else:
        raise ModelError(f"unknown normalization {normalization!r}")
    if n == 1:
        kappa_eff = 0.0
    riemann = PointTensor(n, "llll", _constant_curvature_riemann(n, kappa_eff))
    if kappa_eff > 0:
        kind = "sphere"
    elif kappa_eff < 0:
        kind = "hyperbolic"
    else:
        kind = "flat"
    kahler = None
    if n == 2 and kappa_eff != 0:
        # a 2D oriented factor is Hermitian: the area form is parallel
        kahler = PointTensor(2, "ll", standard_complex_structure(2))
    scale = 1.0 if kappa_eff == 0 else 1.0 / np.sqrt(abs(kappa_eff))
    factor = Factor(kind=kind, dim=n, offset=0, scale=scale)
    return CurvatureModel(n, riemann, kahler, (factor,), normalization)


def fubini_study_model(n_complex: int, normalization: str = "unit_ricci",
                       scale: float = 1.0) -> CurvatureModel:
    """Fubini-Study model in real dimension 2 n_complex.

    With the unit-Ricci normalisation the curvature is

        R_abcd = (g_ac g_bd - g_bc g_ad + J_ac J_bd - J_bc J_ad
                  + 2 J_ab J_cd) / (2 (n + 1)),

    with J the standard symplectic matrix; the Ricci tensor then equals the
    metric.  A custom ``scale`` s multiplies the metric by s^2, dividing
    the frame curvature by s^2.
    """
    if n_complex < 1:
        raise ModelError("complex dimension must be >= 1")
    n = n_complex
    dim = 2 * n
    if normalization == "unit_ricci":
        if scale != 1.0:
            raise ModelError("unit_ricci normalisation fixes the scale to 1")
        coef = 1.0 / (2 * (n + 1))
    elif normalization == "custom":
        coef = 1.0 / (2 * (n + 1) * scale ** 2)
    else:
        raise ModelError(f"unknown normalization {normalization!r}")
    g = np.eye(dim)
    j = standard_complex_structure(dim)
    riemann = coef * (
        np.einsum("ac,bd->abcd", g, g) - np.einsum("bc,ad->abcd", g, g)
        + np.einsum("ac,bd->abcd", j, j) - np.einsum("bc,ad->abcd", j, j)
        + 2 * np.einsum("ab,cd->abcd", j, j)
    )
    factor = Factor(kind="fubini_study", dim=dim, offset=0, scale=scale)
    return CurvatureModel(dim, PointTensor(dim, "llll", riemann),
                          PointTensor(dim, "ll", j), (factor,), normalization)


def product_model(models: Sequence[CurvatureModel]) -> CurvatureModel:
    """Direct-sum model: block-diagonal curvature, concatenated factors."""
    if len(models) == 0:
        raise ModelError("product of an empty list")
    if len(models) < 2:
        raise ModelError("a product needs at least two factors")
    dim = sum(m.dim for m in models)
    riemann = np.zeros((dim,) * 4)
    factors = []
    offset = 0
    for m in models:
        block = slice(offset, offset + m.dim)
        riemann[block, block, block, block] = m.riemann.components
        for f in m.factors:
            factors.append(Factor(kind=f.kind, dim=f.dim, offset=offset + f.offset, scale=f.scale))
        offset += m.dim
    normalization = models[0].normalization
    if any(m.normalization != normalization for m in models):
        normalization = "custom"
    return CurvatureModel(dim, PointTensor(dim, "llll", riemann), None, factors, normalization)


def _factor_model(f: SpecFactor, normalization: str) -> CurvatureModel:
    unit = normalization == "unit_ricci"
    if f.kind in ("S", "H"):
        sign = 1.0 if f.kind == "S" else -1.0
        if f.n == 1:
            return constant_curvature_model(1, 0.0, "custom")
        if unit:
            return constant_curvature_model(f.n, sign, "unit_ricci")
        return constant_curvature_model(f.n, sign / f.scale ** 2, "custom")
    if f.kind == "CP":
        if unit:
            return fubini_study_model(f.n, "unit_ricci")
        return fubini_study_model(f.n, "custom", scale=f.scale)
    if f.kind == "R":
        return constant_curvature_model(f.n, 0.0, "custom")
    raise ModelError(f"unknown factor kind {f.kind!r}")


def model_from_spec(spec: SpaceSpec | str, normalization: str = "as_given") -> CurvatureModel:
    """Model for a parsed space spec.

    ``unit_ricci`` normalises every non-flat factor to Ricci = +-metric
    (flat factors stay flat); ``as_given`` uses the factor scales from the
    spec.
    """
    if isinstance(spec, str):
        spec = parse_space_spec(spec)
    models = [_factor_model(f, normalization) for f in spec.factors]
    if len(models) == 1:
        return models[0]
    return product_model(models)


# -- warp functions -------------------------------------------------------------

@dataclass(frozen=True)
class WarpFunction:
    """Analytic positive warp profile, evaluated on jets of the t coordinate."""

    name: str
    build: Callable[[Jet], Jet]


def _warp_one(t: Jet) -> Jet:
    return Jet.constant(1.0, t.num_vars, t.order)


_WARPS = {
    "cosh": WarpFunction("cosh", jet_cosh),
    "gauss": WarpFunction("gauss", lambda t: jet_exp(t * t * 0.5)),
    "one": WarpFunction("one", _warp_one),
}


def warp_by_name(name: str) -> WarpFunction:
    try:
        return _WARPS[name]
    except KeyError:
        raise ChartError(f"unknown warp function {name!r}; available: {sorted(_WARPS)}") from None


# -- charts ----------------------------------------------------------------------

class ChartGeometry:
    """Base interface: metric components as jets at any sampled point."""

    num_coords: int
    is_locally_symmetric: bool
    factors: tuple

    def coordinate_jets(self, point: Sequence[float], order: int,
                        num_vars: int | None = None) -> list:
        nv = num_vars if num_vars is not None else self.num_coords
        pt = np.asarray(point, dtype=float)
        if len(pt) != self.num_coords:
            raise ChartError(f"point has {len(pt)} coordinates, chart needs {self.num_coords}")
        return [Jet.variable(i, pt[i], nv, order) for i in range(self.num_coords)]

    def metric_jets(self, point, order, num_vars=None):
        raise NotImplementedError

    def model_at(self, point=None) -> CurvatureModel:
        raise NotImplementedError


class ProductChart(ChartGeometry):
    """Product of stereographic / Poincare / affine-projective / flat blocks."""

    is_locally_symmetric = True

    def __init__(self, factors: Sequence[Factor]):
        self.factors = tuple(factors)
        self.num_coords = sum(f.dim for f in factors)
        self._model = None

    def metric_jets(self, point, order, num_vars=None):
        nv = num_vars if num_vars is not None else self.num_coords
        pt = np.asarray(point, dtype=float)
        n = self.num_coords
        zero = Jet.constant(0.0, nv, order)
        g = np.full((n, n), zero, dtype=object)
        for f in self.factors:
            self._fill_block(g, f, pt, order, nv)
        return g

    def _fill_block(self, g, f: Factor, pt, order, nv):
        off, d = f.offset, f.dim
        if f.kind == "flat":
            val = Jet.constant(f.scale ** 2, nv, order)
            for i in range(d):
                g[off + i, off + i] = val
            return
        if f.kind in ("sphere", "hyperbolic"):
            sign = 1.0 if f.kind == "sphere" else -1.0
            if f.kind == "hyperbolic" and float((pt[off:off + d] ** 2).sum()) >= 1.0:
                raise ChartDomainError(
                    f"point leaves the unit ball of the hyperbolic chart (|x|^2 = "
                    f"{(pt[off:off + d] ** 2).sum():.3f})"
                )
            coords = [Jet.variable(off + i, pt[off + i], nv, order) for i in range(d)]
            r2 = coords[0] * coords[0]
            for x in coords[1:]:
                r2 = r2 + x * x
            conf = 1.0 + sign * r2
            lam = (4.0 * f.scale ** 2) / (conf * conf)
            for i in range(d):
                g[off + i, off + i] = lam
            return
        if f.kind == "fubini_study":
            n_c = d // 2
            coef = 2.0 * (n_c + 1) * f.scale ** 2
            coords = [Jet.variable(off + i, pt[off + i], nv, order + 2) for i in range(d)]
            r2 = coords[0] * coords[0]
            for x in coords[1:]:
                r2 = r2 + x * x
            potential = coef * jet_log(1.0 + r2)
            hess = np.empty((d, d), dtype=object)
            for a in range(d):
                da = potential.partial(off + a)
                for b in range(a, d):
                    hess[a, b] = da.partial(off + b)
                    hess[b, a] = hess[a, b]
            jm = standard_complex_structure(d)
            for a in range(d):
                for b in range(a, d):
                    twisted = None
                    for c in range(d):
                        if jm[c, a] == 0.0:
                            continue
                        for e in range(d):
                            if jm[e, b] == 0.0:
                                continue
                            term = (jm[c, a] * jm[e, b]) * hess[c, e]
                            twisted = term if twisted is None else twisted + term
                    val = 0.25 * (hess[a, b] + twisted)
                    g[off + a, off + b] = val
                    g[off + b, off + a] = val
            return
        raise ChartError(f"unknown chart factor kind {f.kind!r}")

    def model_at(self, point=None) -> CurvatureModel:
        if self._model is None:
            models = []
            for f in self.factors:
                if f.kind == "flat":
                    models.append(constant_curvature_model(f.dim, 0.0, "custom"))
                elif f.kind == "sphere":
                    models.append(constant_curvature_model(f.dim, 1.0 / f.scale ** 2, "custom"))
                elif f.kind == "hyperbolic":
                    models.append(constant_curvature_model(f.dim, -1.0 / f.scale ** 2, "custom"))
                elif f.kind == "fubini_study":
                    models.append(fubini_study_model(f.dim // 2, "custom", scale=f.scale))
                else:
                    raise ChartError(f"unknown chart factor kind {f.kind!r}")
            self._model = models[0] if len(models) == 1 else product_model(models)
        return self._model

    def hermitian_factor(self) -> Factor | None:
        for f in self.factors:
            if f.hermitian:
                return f
        return None

    def complex_structure_matrix(self, factor: Factor) -> np.ndarray:
        """Constant J^a_b supported on the factor block, embedded in the chart."""
        if not factor.hermitian:
            raise ChartError("factor carries no parallel complex structure")
        n = self.num_coords
        jm = np.zeros((n, n))
        block = slice(factor.offset, factor.offset + factor.dim)
        jm[block, block] = standard_complex_structure(factor.dim)
        return jm

    def kahler_form_jets(self, point, order, factor: Factor | None = None,
                         num_vars: int | None = None) -> np.ndarray:
        """Jets of the lowered complex structure J_ab = g_ac J^c_b."""
        factor = factor or self.hermitian_factor()
        if factor is None:
            raise ChartError("chart has no Hermitian factor")
        jm = self.complex_structure_matrix(factor)
        g = self.metric_jets(point, order, num_vars=num_vars)
        n = self.num_coords
        nv = num_vars if num_vars is not None else n
        zero = Jet.constant(0.0, nv, order)
        out = np.full((n, n), zero, dtype=object)
        for a in range(n):
            for b in range(n):
                acc = None
                for c in range(n):
                    if jm[c, b] == 0.0:
                        continue
                    term = jm[c, b] * g[a, c]
                    acc = term if acc is None else acc + term
                if acc is not None:
                    out[a, b] = acc
        return out


class WarpedChart2D(ChartGeometry):
    """Coordinates (x, t) with metric diag(Omega(t)^2, 1)."""

    is_locally_symmetric = False
    factors = ()

    def __init__(self, warp: WarpFunction):
        self.warp = warp
        self.num_coords = 2

    def omega_jet(self, point, order, num_vars=None) -> Jet:
        nv = num_vars if num_vars is not None else 2
        t = Jet.variable(1, float(point[1]), nv, order)
        omega = self.warp.build(t)
        if omega.value <= 0:
            raise ChartDomainError("warp function must stay positive")
        return omega

    def metric_jets(self, point, order, num_vars=None):
        nv = num_vars if num_vars is not None else 2
        omega = self.omega_jet(point, order, num_vars=nv)
        zero = Jet.constant(0.0, nv, order)
        g = np.full((2, 2), zero, dtype=object)
        g[0, 0] = omega * omega
        g[1, 1] = Jet.constant(1.0, nv, order)
        return g

    def model_at(self, point=None) -> CurvatureModel:
        raise ChartError("warped charts are not locally symmetric; no algebraic model is linked")


def _chart_factor(f: SpecFactor, normalization: str, offset: int) -> Factor:
    unit = normalization == "unit_ricci"
    if f.kind in ("S", "H"):
        kind = "sphere" if f.kind == "S" else "hyperbolic"
        if f.n == 1:
            return Factor(kind="flat", dim=1, offset=offset, scale=1.0)
        scale = np.sqrt(f.n - 1.0) if unit else f.scale
        return Factor(kind=kind, dim=f.n, offset=offset, scale=scale)
    if f.kind == "CP":
        scale = 1.0 if unit else f.scale
        return Factor(kind="fubini_study", dim=2 * f.n, offset=offset, scale=scale)
    if f.kind == "R":
        return Factor(kind="flat", dim=f.n, offset=offset, scale=1.0 if unit else f.scale)
    raise ChartError(f"unknown factor kind {f.kind!r}")


def make_chart(spec: SpaceSpec | str, normalization: str = "as_given") -> ProductChart:
    """Chart for a space spec.

    ``as_given`` uses unit-curvature blocks scaled by the spec's factor
    scales; ``unit_ricci`` rescales each non-flat factor so its Ricci
    tensor equals +-(metric).
    """
    if isinstance(spec, str):
        spec = parse_space_spec(spec)
    factors = []
    offset = 0
    for f in spec.factors:
        cf = _chart_factor(f, normalization, offset)
        factors.append(cf)
        offset += cf.dim
    return ProductChart(factors)


def make_warped_chart(warp: WarpFunction | str) -> WarpedChart2D:
    if isinstance(warp, str):
        warp = warp_by_name(warp)
    return WarpedChart2D(warp)
