"""Chart differential operators evaluated through jets.

A :class:`ChartFrame` bundles the jet-valued geometry of one chart at one
point: metric, inverse, connection coefficients, curvature, and their
derivatives, each at the maximal order the configured jet depth supports.
Operators consume truncated views, so every computed value is an exact
truncated-Taylor quantity; residual checks at 1e-9 tolerances are
meaningful because no finite differences enter anywhere.

Index conventions: the curvature sign is fixed by the commutator acting on
vector fields, which on the unit sphere chart gives

    R_abcd = g_ac g_bd - g_bc g_ad,

and covariant derivatives always prepend the new (lower) derivative slot.
"""

from __future__ import annotations

import numpy as np

from .jets import Jet, jet_dot, monomial_exponents, monomial_stack
from .tensors import PointTensor, riemann_project, two_form_basis
from .models import ChartGeometry, ProductChart, WarpedChart2D

__all__ = [
    "DiffOpsError",
    "InsufficientOrderError",
    "SingularWarpError",
    "ChartFrame",
    "JetField",
    "christoffel",
    "riemann_from_chart",
    "scalar_curvature_at",
    "killing_op",
    "calabi_op",
    "l_op",
    "complex_residual",
    "diagram_residual",
    "compatibility_residual",
    "prolongation_derivative",
    "prolongation_curvature_residual",
    "trace_composition",
    "trace_lemma_residual",
    "product_calabi_parts",
    "khavkine_j_jet",
    "khavkine_op",
    "deformation_scalar_coefficient",
    "deformation_residual",
    "rotation_killing_form",
    "unitary_killing_form",
    "lowered_vector_field",
    "sphere_kahler_primitive",
    "fs_kahler_primitive",
    "flat_constant_form",
    "symmetrized_product_field",
]


class DiffOpsError(ValueError):
    pass


class InsufficientOrderError(DiffOpsError):
    """The frame's jet order cannot support the requested derivative depth."""


class SingularWarpError(DiffOpsError):
    """Warp profile hits the singular locus of the integrability operator."""


# -- jet-array helpers -------------------------------------------------------------

def _truncate_arr(arr: np.ndarray, order: int) -> np.ndarray:
    first = arr.flat[0]
    if first.order == order:
        return arr
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(*arr.shape):
        out[idx] = arr[idx].truncated(order)
    return out


def _values_arr(arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape)
    for idx in np.ndindex(*arr.shape):
        out[idx] = arr[idx].value
    return out


def _matmul_jets(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        row = [a[i, k] for k in range(n)]
        for j in range(n):
            out[i, j] = jet_dot(row, [b[k, j] for k in range(n)])
    return out


def invert_metric_jets(g: np.ndarray) -> np.ndarray:
    """Jet-valued inverse metric via the truncated Neumann series."""
    n = g.shape[0]
    order = g.flat[0].order
    nv = g.flat[0].num_vars
    g0 = _values_arr(g)
    g0_inv = np.linalg.inv(g0)
    # E = g0^-1 (g - g0) has zero constant term, so the series terminates
    e = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            acc = None
            for k in range(n):
                if g0_inv[i, k] == 0.0 and n > 1:
                    continue
                term = g0_inv[i, k] * (g[k, j] - g0[k, j])
                acc = term if acc is None else acc + term
            e[i, j] = acc if acc is not None else Jet.constant(0.0, nv, order)
    x = np.empty((n, n), dtype=object)
    ident = [[Jet.constant(1.0 if i == j else 0.0, nv, order) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            x[i, j] = ident[i][j]
    for _ in range(order):
        ex = _matmul_jets(e, x)
        for i in range(n):
            for j in range(n):
                x[i, j] = ident[i][j] - ex[i, j]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            acc = None
            for k in range(n):
                term = x[i, k] * g0_inv[k, j]
                acc = term if acc is None else acc + term
            out[i, j] = acc
    return out


def christoffel_jets(g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Connection coefficients Gamma[c, a, b] at one order below the metric."""
    n = g.shape[0]
    order = g.flat[0].order - 1
    dg = np.empty((n, n, n), dtype=object)  # dg[c, a, b] = d_c g_ab
    for a in range(n):
        for b in range(a, n):
            for c in range(n):
                dg[c, a, b] = g[a, b].partial(c)
                dg[c, b, a] = dg[c, a, b]
    ginv_t = _truncate_arr(ginv, order)
    bracket = np.empty((n, n, n), dtype=object)  # bracket[d, a, b]
    for a in range(n):
        for b in range(a, n):
            for d in range(n):
                bracket[d, a, b] = dg[a, d, b] + dg[b, d, a] - dg[d, a, b]
                bracket[d, b, a] = bracket[d, a, b]
    gamma = np.empty((n, n, n), dtype=object)
    for c in range(n):
        row = [ginv_t[c, d] for d in range(n)]
        for a in range(n):
            for b in range(a, n):
                val = 0.5 * jet_dot(row, [bracket[d, a, b] for d in range(n)])
                gamma[c, a, b] = val
                gamma[c, b, a] = val
    return gamma


def riemann_mixed_jets(gamma: np.ndarray) -> np.ndarray:
    """Curvature R[a, b, c, d] = R_ab^c_d from the connection coefficients."""
    n = gamma.shape[0]
    order = gamma.flat[0].order - 1
    gamma_t = _truncate_arr(gamma, order)
    dgamma = np.empty((n, n, n, n), dtype=object)  # dgamma[a, c, b, d] = d_a Gamma^c_bd
    for c in range(n):
        for b in range(n):
            for d in range(b, n):
                for a in range(n):
                    dgamma[a, c, b, d] = gamma[c, b, d].partial(a)
                    dgamma[a, c, d, b] = dgamma[a, c, b, d]
    out = np.empty((n, n, n, n), dtype=object)
    nv = gamma.flat[0].num_vars
    zero = Jet.constant(0.0, nv, order)
    for a in range(n):
        out[a, a, :, :] = zero
        for b in range(a + 1, n):
            for c in range(n):
                row_a = [gamma_t[c, a, e] for e in range(n)]
                row_b = [gamma_t[c, b, e] for e in range(n)]
                for d in range(n):
                    col_b = [gamma_t[e, b, d] for e in range(n)]
                    col_a = [gamma_t[e, a, d] for e in range(n)]
                    val = (
                        dgamma[a, c, b, d] - dgamma[b, c, a, d]
                        + jet_dot(row_a, col_b) - jet_dot(row_b, col_a)
                    )
                    out[a, b, c, d] = val
                    out[b, a, c, d] = -val
    return out


def covd(frame: "ChartFrame", arr: np.ndarray) -> np.ndarray:
    """Covariant derivative of an all-lower jet tensor; new first slot.

    The output order is one below the input's; the frame must have enough
    depth to supply connection coefficients at that order.
    """
    rank = arr.ndim
    n = frame.dim
    order_in = arr.flat[0].order
    if order_in < 1:
        raise InsufficientOrderError("cannot differentiate order-0 jets")
    order = order_in - 1
    gamma = frame.gamma(order)
    arr_t = _truncate_arr(arr, order)
    out = np.empty((n,) * (rank + 1), dtype=object)
    for idx in np.ndindex(*(n,) * rank):
        comp = arr[idx]
        gathered = [
            [arr_t[idx[:s] + (e,) + idx[s + 1:]] for e in range(n)]
            for s in range(rank)
        ]
        for a in range(n):
            val = comp.partial(a)
            for s in range(rank):
                val = val - jet_dot([gamma[e, a, idx[s]] for e in range(n)], gathered[s])
            out[(a,) + idx] = val
    return out


def grad_scalar(frame: "ChartFrame", jet: Jet) -> np.ndarray:
    out = np.empty(frame.dim, dtype=object)
    for a in range(frame.dim):
        out[a] = jet.partial(a)
    return out


# -- the frame ----------------------------------------------------------------------

class ChartFrame:
    """Jet geometry of a chart at one point, at a fixed truncation order."""

    def __init__(self, chart: ChartGeometry, point, order: int = 6, extra_vars: int = 0):
        if order < 1:
            raise InsufficientOrderError("frame order must be >= 1")
        self.chart = chart
        self.point = np.asarray(point, dtype=float)
        self.order = order
        self.dim = chart.num_coords
        self.num_vars = self.dim + extra_vars
        self._cache: dict = {}

    # each artifact is computed once at its maximal supported order;
    # truncated views are memoised.
    def _full(self, name: str):
        if name in self._cache:
            return self._cache[name]
        if name == "metric":
            val = self.chart.metric_jets(self.point, self.order, num_vars=self.num_vars)
        elif name == "ginv":
            val = invert_metric_jets(self._full("metric"))
        elif name == "gamma":
            self._require(2, "connection coefficients")
            val = christoffel_jets(self._full("metric"), self._full("ginv"))
        elif name == "riemann_mixed":
            self._require(3, "curvature")
            val = riemann_mixed_jets(self._full("gamma"))
        elif name == "riemann_lower":
            rm = self._full("riemann_mixed")
            g = _truncate_arr(self._full("metric"), rm.flat[0].order)
            n = self.dim
            val = np.empty((n,) * 4, dtype=object)
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        row = [g[c, e] for e in range(n)]
                        for d in range(n):
                            val[a, b, c, d] = jet_dot(row, [rm[a, b, e, d] for e in range(n)])
        elif name == "ricci":
            rm = self._full("riemann_mixed")
            n = self.dim
            val = np.empty((n, n), dtype=object)
            for b in range(n):
                for d in range(n):
                    acc = rm[0, b, 0, d]
                    for a in range(1, n):
                        acc = acc + rm[a, b, a, d]
                    val[b, d] = acc
        elif name == "scalar":
            ric = self._full("ricci")
            order = ric.flat[0].order
            ginv = _truncate_arr(self._full("ginv"), order)
            n = self.dim
            val = jet_dot([ginv[b, d] for b in range(n) for d in range(n)],
                          [ric[b, d] for b in range(n) for d in range(n)])
        elif name == "grad_riemann_lower":
            self._require(4, "curvature gradient")
            val = covd(self, self._full("riemann_lower"))
        else:
            raise KeyError(name)
        self._cache[name] = val
        return val

    def _require(self, depth: int, what: str):
        if self.order < depth:
            raise InsufficientOrderError(
                f"{what} needs jet order >= {depth}; frame has {self.order}"
            )

    def _view(self, name: str, order: int | None):
        full = self._full(name)
        base_order = full.flat[0].order if isinstance(full, np.ndarray) else full.order
        if order is None or order == base_order:
            return full
        if order > base_order:
            raise InsufficientOrderError(
                f"{name} available at order {base_order}, requested {order} "
                f"(frame order {self.order})"
            )
        key = (name, order)
        if key not in self._cache:
            if isinstance(full, np.ndarray):
                self._cache[key] = _truncate_arr(full, order)
            else:
                self._cache[key] = full.truncated(order)
        return self._cache[key]

    def metric(self, order: int | None = None):
        return self._view("metric", order)

    def ginv(self, order: int | None = None):
        return self._view("ginv", order)

    def gamma(self, order: int | None = None):
        return self._view("gamma", order)

    def riemann_mixed(self, order: int | None = None):
        return self._view("riemann_mixed", order)

    def riemann_lower(self, order: int | None = None):
        return self._view("riemann_lower", order)

    def ricci(self, order: int | None = None):
        return self._view("ricci", order)

    def scalar_curvature(self, order: int | None = None):
        return self._view("scalar", order)

    def grad_riemann_lower(self, order: int | None = None):
        return self._view("grad_riemann_lower", order)

    # float views
    @property
    def metric0(self) -> np.ndarray:
        return self._float("metric")

    @property
    def ginv0(self) -> np.ndarray:
        return self._float("ginv")

    @property
    def gamma0(self) -> np.ndarray:
        return self._float("gamma")

    @property
    def riemann_mixed0(self) -> np.ndarray:
        return self._float("riemann_mixed")

    @property
    def riemann_lower0(self) -> np.ndarray:
        return self._float("riemann_lower")

    @property
    def ricci0(self) -> np.ndarray:
        return self._float("ricci")

    def _float(self, name: str) -> np.ndarray:
        key = (name, "values")
        if key not in self._cache:
            self._cache[key] = _values_arr(self._full(name))
        return self._cache[key]

    def coordinate_jets(self, order: int) -> list:
        key = ("coords", order)
        if key not in self._cache:
            self._cache[key] = [
                Jet.variable(i, self.point[i], self.num_vars, order) for i in range(self.dim)
            ]
        return self._cache[key]

    def monomials(self, degree: int, order: int) -> np.ndarray:
        key = ("monomials", degree, order)
        if key not in self._cache:
            self._cache[key] = monomial_stack(self.point, order, degree, num_vars=self.num_vars)
        return self._cache[key]

    def lop_projection(self):
        """Range data of the 2-form curvature action, for quotient projections."""
        if "lop" not in self._cache:
            rm0 = self.riemann_mixed0
            n = self.dim
            basis = two_form_basis(n)
            cols = np.empty((n ** 4, len(basis)))
            for j, (c, d) in enumerate(basis):
                mu = np.zeros((n, n))
                mu[c, d] = 1.0
                mu[d, c] = -1.0
                img = (
                    np.einsum("abec,de->abcd", rm0, mu)
                    - np.einsum("abed,ce->abcd", rm0, mu)
                    + np.einsum("cdea,be->abcd", rm0, mu)
                    - np.einsum("cdeb,ae->abcd", rm0, mu)
                )
                cols[:, j] = img.reshape(-1)
            raised = np.empty_like(cols)
            gi = self.ginv0
            for j in range(cols.shape[1]):
                t = cols[:, j].reshape((n,) * 4)
                raised[:, j] = np.einsum("ae,bf,cg,dh,efgh->abcd", gi, gi, gi, gi, t).reshape(-1)
            gram = cols.T @ raised
            pinv = np.linalg.pinv(gram, rcond=1e-11)
            self._cache["lop"] = (cols, raised, pinv)
        return self._cache["lop"]

    def metric_norm4(self, t_values: np.ndarray) -> float:
        gi = self.ginv0
        raised = np.einsum("ae,bf,cg,dh,efgh->abcd", gi, gi, gi, gi, t_values)
        return float(np.sqrt(abs((raised * t_values).sum())))


# -- fields ----------------------------------------------------------------------------

class JetField:
    """Tensor field on a chart, evaluated to jets at a frame's point.

    Fields come either from polynomial coefficient tables (evaluated by one
    matrix product against the frame's cached monomial stack) or from
    closed-form builders receiving the frame and the requested order.
    """

    def __init__(self, rank: int, fn, name: str = ""):
        self.rank = rank
        self._fn = fn
        self.name = name

    def evaluate(self, frame: ChartFrame, order: int) -> np.ndarray:
        arr = self._fn(frame, order)
        if self.rank == 0:
            return arr
        expected = (frame.dim,) * self.rank
        if arr.shape != expected:
            raise DiffOpsError(f"field produced shape {arr.shape}, expected {expected}")
        return arr

    @staticmethod
    def polynomial(rank: int, coeff: np.ndarray, degree: int, name: str = "") -> "JetField":
        coeff = np.asarray(coeff, dtype=float)

        def fn(frame: ChartFrame, order: int):
            stack = frame.monomials(degree, order)
            if coeff.shape[-1] != stack.shape[0]:
                raise DiffOpsError("polynomial coefficient table does not match the degree")
            if rank == 0:
                return Jet(frame.num_vars, order, coeff @ stack)
            out = np.empty((frame.dim,) * rank, dtype=object)
            for idx in np.ndindex(*(frame.dim,) * rank):
                out[idx] = Jet(frame.num_vars, order, coeff[idx] @ stack, _trusted=True)
            return out

        return JetField(rank, fn, name=name or "polynomial")

    @staticmethod
    def random_polynomial(rng, dim: int, rank: int, degree: int = 3,
                          symmetric: bool = False, name: str = "") -> "JetField":
        m = len(monomial_exponents(dim, degree))
        shape = (dim,) * rank + (m,)
        coeff = rng.uniform(-1.0, 1.0, size=shape)
        if symmetric and rank == 2:
            coeff = 0.5 * (coeff + coeff.transpose(1, 0, 2))
        return JetField.polynomial(rank, coeff, degree, name=name or "random polynomial")


def lowered_vector_field(vector_fn, name: str = "") -> JetField:
    """1-form field sigma_a = g_ab V^b from a jet-valued vector builder."""

    def fn(frame: ChartFrame, order: int):
        v = vector_fn(frame, order)
        g = frame.metric(order)
        n = frame.dim
        out = np.empty(n, dtype=object)
        for a in range(n):
            out[a] = jet_dot([g[a, b] for b in range(n)], list(v))
        return out

    return JetField(1, fn, name=name)


def rotation_killing_form(chart: ChartGeometry, axes: tuple[int, int], name: str = "") -> JetField:
    """Lowered rotation generator x_i d_j - x_j d_i (an isometry of any
    radial block metric containing both axes, and of flat blocks)."""
    i, j = axes

    def vec(frame: ChartFrame, order: int):
        coords = frame.coordinate_jets(order)
        n = frame.dim
        zero = Jet.constant(0.0, frame.num_vars, order)
        v = np.full(n, zero, dtype=object)
        v[i] = -coords[j]
        v[j] = coords[i]
        return v

    return lowered_vector_field(vec, name=name or f"rotation({i},{j})")


def unitary_killing_form(chart: ProductChart, factor, p_mat: np.ndarray,
                         q_mat: np.ndarray, name: str = "") -> JetField:
    """Lowered holomorphic linear field z -> (P + iQ) z on a projective block.

    P must be antisymmetric and Q symmetric so that P + iQ is
    anti-Hermitian, making the flow unitary and hence isometric.
    """
    if not np.allclose(p_mat, -p_mat.T) or not np.allclose(q_mat, q_mat.T):
        raise DiffOpsError("need P antisymmetric and Q symmetric")
    off = factor.offset
    n_c = factor.dim // 2

    def vec(frame: ChartFrame, order: int):
        coords = frame.coordinate_jets(order)
        zero = Jet.constant(0.0, frame.num_vars, order)
        v = np.full(frame.dim, zero, dtype=object)
        for k in range(n_c):
            re = zero
            im = zero
            for l in range(n_c):
                x = coords[off + 2 * l]
                y = coords[off + 2 * l + 1]
                re = re + p_mat[k, l] * x - q_mat[k, l] * y
                im = im + q_mat[k, l] * x + p_mat[k, l] * y
            v[off + 2 * k] = re
            v[off + 2 * k + 1] = im
        return v

    return lowered_vector_field(vec, name=name or "unitary")


def sphere_kahler_primitive(chart: ProductChart, factor) -> JetField:
    """Area-form primitive on a 2-sphere block: phi with d(phi) equal to the
    lowered complex structure (for the unit block, 2(-y dx + x dy)/(1+r^2))."""
    if factor.kind != "sphere" or factor.dim != 2:
        raise DiffOpsError("primitive defined on 2-sphere blocks")
    off = factor.offset
    s2 = factor.scale ** 2

    def fn(frame: ChartFrame, order: int):
        coords = frame.coordinate_jets(order)
        x, y = coords[off], coords[off + 1]
        denom = 1.0 + x * x + y * y
        zero = Jet.constant(0.0, frame.num_vars, order)
        out = np.full(frame.dim, zero, dtype=object)
        out[off] = (-2.0 * s2) * (y / denom)
        out[off + 1] = (2.0 * s2) * (x / denom)
        return out

    return JetField(1, fn, name="sphere area primitive")


def fs_kahler_primitive(chart: ProductChart, factor) -> JetField:
    """Potential-derived primitive phi_a = 1/2 J^b_a d_b F on a projective
    block; its exterior derivative is exactly twice the Kahler form, i.e.
    the antisymmetrised derivative equals the Kahler form itself."""
    if factor.kind != "fubini_study":
        raise DiffOpsError("primitive defined on projective blocks")
    from .models import standard_complex_structure
    from .jets import jet_log

    off, d = factor.offset, factor.dim
    coef = 2.0 * (d // 2 + 1) * factor.scale ** 2
    jm = standard_complex_structure(d)

    def fn(frame: ChartFrame, order: int):
        coords = [Jet.variable(off + i, frame.point[off + i], frame.num_vars, order + 1)
                  for i in range(d)]
        r2 = coords[0] * coords[0]
        for c in coords[1:]:
            r2 = r2 + c * c
        potential = coef * jet_log(1.0 + r2)
        zero = Jet.constant(0.0, frame.num_vars, order)
        out = np.full(frame.dim, zero, dtype=object)
        for a in range(d):
            acc = None
            for b in range(d):
                if jm[b, a] == 0.0:
                    continue
                term = (0.5 * jm[b, a]) * potential.partial(off + b)
                acc = term if acc is None else acc + term
            out[off + a] = acc
        return out

    return JetField(1, fn, name="projective potential primitive")


def flat_constant_form(chart: ProductChart, axis: int, value: float = 1.0) -> JetField:
    def fn(frame: ChartFrame, order: int):
        zero = Jet.constant(0.0, frame.num_vars, order)
        out = np.full(frame.dim, zero, dtype=object)
        out[axis] = Jet.constant(value, frame.num_vars, order)
        return out

    return JetField(1, fn, name=f"constant d x_{axis}")


def symmetrized_product_field(phi: JetField, theta: JetField, name: str = "") -> JetField:
    """Symmetric 2-tensor h_ab = phi_(a theta_b)."""

    def fn(frame: ChartFrame, order: int):
        a = phi.evaluate(frame, order)
        b = theta.evaluate(frame, order)
        n = frame.dim
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(i, n):
                val = 0.5 * (a[i] * b[j] + a[j] * b[i])
                out[i, j] = val
                out[j, i] = val
        return out

    return JetField(2, fn, name=name or "symmetrised product")


# -- named operators ----------------------------------------------------------------

def frame_at(chart: ChartGeometry, point, order: int = 6, extra_vars: int = 0) -> ChartFrame:
    return ChartFrame(chart, point, order=order, extra_vars=extra_vars)


def christoffel(chart: ChartGeometry, point, order: int = 1) -> np.ndarray:
    """Connection coefficients Gamma[c, a, b] as jets of the given order."""
    frame = ChartFrame(chart, point, order=order + 1)
    return frame.gamma(order)


def riemann_from_chart(chart: ChartGeometry, point, order: int = 3) -> PointTensor:
    """All-lower curvature tensor values at a chart point."""
    frame = ChartFrame(chart, point, order=max(order, 3))
    return PointTensor(chart.num_coords, "llll", frame.riemann_lower0)


def scalar_curvature_at(chart: ChartGeometry, point, order: int = 3) -> float:
    frame = ChartFrame(chart, point, order=max(order, 3))
    return frame.scalar_curvature(0).value


def killing_op(frame: ChartFrame, sigma: JetField | np.ndarray, out_order: int = 0) -> np.ndarray:
    """Symmetrised covariant derivative of a 1-form, as jets of ``out_order``."""
    arr = sigma.evaluate(frame, out_order + 1) if isinstance(sigma, JetField) else sigma
    d = covd(frame, arr)
    n = frame.dim
    out = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            val = 0.5 * (d[a, b] + d[b, a])
            out[a, b] = val
            out[b, a] = val
    return out


def _calabi_from_h(frame: ChartFrame, h: np.ndarray):
    """Second-order curvature-corrected operator on a symmetric jet tensor.

    Returns (values, scale): the all-lower rank-4 components at the point
    and a magnitude proxy used for relative residuals.
    """
    h2 = _truncate_arr(h, 2) if h.flat[0].order > 2 else h
    if h2.flat[0].order < 2:
        raise InsufficientOrderError("second-order operator needs order-2 jets of the field")
    dh = covd(frame, h2)
    d2h = covd(frame, dh)
    d2 = _values_arr(d2h)  # d2[a, c, b, d] = grad_a grad_c h_bd
    h0 = _values_arr(h2)
    rm0 = frame.riemann_mixed0
    sym = 0.5 * (d2 + d2.transpose(1, 0, 2, 3))  # grad_(a grad_c) h_bd
    second_order = (
        np.einsum("acbd->abcd", sym)
        - np.einsum("bcad->abcd", sym)
        - np.einsum("adbc->abcd", sym)
        + np.einsum("bdac->abcd", sym)
    )
    curv = 0.5 * (
        np.einsum("abec,de->abcd", rm0, h0) - np.einsum("abed,ce->abcd", rm0, h0)
        + np.einsum("cdea,be->abcd", rm0, h0) - np.einsum("cdeb,ae->abcd", rm0, h0)
    )
    values = second_order - curv
    scale = 1.0 + np.abs(h0).max() + np.abs(_values_arr(dh)).max() + np.abs(d2).max()
    return values, scale


def calabi_op(frame: ChartFrame, h: JetField | np.ndarray, validate: bool = True) -> PointTensor:
    """Second-order integrability operator on symmetric 2-tensors.

    The output lands in the curvature symmetry class; ``validate`` checks
    the projector fixed point to 1e-10 relative.
    """
    arr = h.evaluate(frame, 2) if isinstance(h, JetField) else h
    values, scale = _calabi_from_h(frame, arr)
    out = PointTensor(frame.dim, "llll", values)
    if validate:
        proj = riemann_project(out)
        if not np.allclose(proj.components, values, atol=1e-10 * scale):
            raise DiffOpsError("operator output escaped the curvature symmetry class")
    return out


def l_op(frame: ChartFrame, h: JetField | np.ndarray) -> PointTensor:
    """Quotient operator: the second-order image projected onto the
    orthogonal complement of the 2-form curvature action's range."""
    arr = h.evaluate(frame, 2) if isinstance(h, JetField) else h
    values, _ = _calabi_from_h(frame, arr)
    cols, raised, pinv = frame.lop_projection()
    flat = values.reshape(-1)
    coefs = pinv @ (raised.T @ flat)
    proj = flat - cols @ coefs
    return PointTensor(frame.dim, "llll", proj.reshape(values.shape))


def complex_residual(frame: ChartFrame, sigma: JetField) -> float:
    """Relative size of the quotient operator applied to a Killing image."""
    arr = sigma.evaluate(frame, 3)
    h = killing_op(frame, arr)
    values, scale = _calabi_from_h(frame, h)
    cols, raised, pinv = frame.lop_projection()
    flat = values.reshape(-1)
    proj = flat - cols @ (pinv @ (raised.T @ flat))
    return frame.metric_norm4(proj.reshape(values.shape)) / scale


def diagram_residual(frame: ChartFrame, sigma: JetField) -> float:
    """Commuting-square check: the second-order operator on the symmetrised
    derivative equals the curvature action on the antisymmetrised one."""
    arr = sigma.evaluate(frame, 3)
    d = covd(frame, arr)
    n = frame.dim
    h = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            val = 0.5 * (d[a, b] + d[b, a])
            h[a, b] = val
            h[b, a] = val
    values, scale = _calabi_from_h(frame, h)
    mu = 0.5 * (_values_arr(d) - _values_arr(d).T)
    rm0 = frame.riemann_mixed0
    rmu = (
        np.einsum("abec,de->abcd", rm0, mu) - np.einsum("abed,ce->abcd", rm0, mu)
        + np.einsum("cdea,be->abcd", rm0, mu) - np.einsum("cdeb,ae->abcd", rm0, mu)
    )
    return float(np.abs(values - rmu).max() / scale)


# -- prolongation connection -----------------------------------------------------------

def prolongation_derivative(frame: ChartFrame, sigma, mu, out_order: int = 0):
    """One step of the prolongation connection on (1-form, 2-form) pairs.

    Returns jets (A[b, c], B[b, c, d]) with A = grad sigma - mu and
    B = grad mu - curvature . sigma.
    """
    s_arr = sigma.evaluate(frame, out_order + 1) if isinstance(sigma, JetField) else sigma
    m_arr = mu.evaluate(frame, out_order + 1) if isinstance(mu, JetField) else mu
    ds = covd(frame, s_arr)
    dm = covd(frame, m_arr)
    n = frame.dim
    rm = frame.riemann_mixed(out_order)
    s_t = _truncate_arr(s_arr, out_order)
    m_t = _truncate_arr(m_arr, out_order)
    a_out = np.empty((n, n), dtype=object)
    b_out = np.empty((n, n, n), dtype=object)
    s_list = list(s_t)
    for b in range(n):
        for c in range(n):
            a_out[b, c] = ds[b, c] - m_t[b, c]
            for d in range(n):
                b_out[b, c, d] = dm[b, c, d] - jet_dot([rm[c, d, e, b] for e in range(n)], s_list)
    return a_out, b_out


def _coupled_second_derivative(frame: ChartFrame, a_arr, b_arr):
    """Derivative of a 1-form-valued prolongation section (A[b,c], B[b,c,d]).

    Levi-Civita acts on every tensor slot; the twist feeds the derivative
    index into the first 2-form slot of the pair structure.
    """
    da = covd(frame, a_arr)  # da[a, b, c]
    db = covd(frame, b_arr)  # db[a, b, c, d]
    n = frame.dim
    order = da.flat[0].order
    rm = frame.riemann_mixed(order)
    a_t = _truncate_arr(a_arr, order)
    b_t = _truncate_arr(b_arr, order)
    out_a = np.empty((n, n, n), dtype=object)
    out_b = np.empty((n, n, n, n), dtype=object)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                out_a[a, b, c] = da[a, b, c] - b_t[b, a, c]
                row = [a_t[b, e] for e in range(n)]
                for d in range(n):
                    out_b[a, b, c, d] = db[a, b, c, d] - jet_dot(
                        [rm[c, d, e, a] for e in range(n)], row
                    )
    return out_a, out_b


def prolongation_curvature_residual(frame: ChartFrame, sigma, mu,
                                    include_gradient_term: bool | None = None) -> float:
    """Residual of the prolongation connection's curvature identity.

    The antisymmetrised second derivative of (sigma, mu) must reproduce the
    2-form curvature action on mu; away from local symmetry the stated
    formula acquires the extra term -(grad^e R_abcd) sigma_e, included by
    default exactly when the chart is not locally symmetric.
    """
    if include_gradient_term is None:
        include_gradient_term = not frame.chart.is_locally_symmetric
    a1, b1 = prolongation_derivative(frame, sigma, mu, out_order=1)
    da, db = _coupled_second_derivative(frame, a1, b1)
    dav = _values_arr(da)
    dbv = _values_arr(db)
    f_sigma = dav - dav.transpose(1, 0, 2)
    f_mu = dbv - dbv.transpose(1, 0, 2, 3)
    m_arr = mu.evaluate(frame, 1) if isinstance(mu, JetField) else mu
    s_arr = sigma.evaluate(frame, 1) if isinstance(sigma, JetField) else sigma
    mu0 = _values_arr(m_arr)
    rm0 = frame.riemann_mixed0
    rhs = (
        np.einsum("abec,de->abcd", rm0, mu0) - np.einsum("abed,ce->abcd", rm0, mu0)
        + np.einsum("cdea,be->abcd", rm0, mu0) - np.einsum("cdeb,ae->abcd", rm0, mu0)
    )
    if include_gradient_term:
        grad_r = _values_arr(frame.grad_riemann_lower(0))
        sigma0 = _values_arr(s_arr)
        rhs = rhs - np.einsum("fabcd,fe,e->abcd", grad_r, frame.ginv0, sigma0)
    scale = 1.0 + np.abs(dav).max() + np.abs(dbv).max()
    return float((np.abs(f_sigma).max() + np.abs(f_mu - rhs).max()) / scale)


def compatibility_residual(frame: ChartFrame, h: JetField) -> float:
    """The exterior covariant derivative of (h, twice the antisymmetrised
    derivative of h) has no 1-form part and its 2-form part is the
    second-order operator applied to h."""
    arr = h.evaluate(frame, 3)
    dh = covd(frame, arr)  # dh[c, a, b] = grad_c h_ab
    n = frame.dim
    phi = _truncate_arr(arr, 2)
    psi = np.empty((n, n, n), dtype=object)
    for b in range(n):
        for c in range(n):
            for d in range(n):
                psi[b, c, d] = dh[c, d, b] - dh[d, c, b]
    da, db = _coupled_second_derivative(frame, phi, psi)
    dav = _values_arr(da)
    dbv = _values_arr(db)
    first = dav - dav.transpose(1, 0, 2)
    second = dbv - dbv.transpose(1, 0, 2, 3)
    c_values, scale = _calabi_from_h(frame, arr)
    return float((np.abs(first).max() + np.abs(second - c_values).max()) / scale)


# -- scalar trace of the second-order operator ------------------------------------------

def trace_composition(frame: ChartFrame, h: JetField | np.ndarray, out_order: int = 0):
    """Scalar 2 [Lap tr(h) - div div h + Ricci . h].

    Returns a jet of ``out_order`` (a float value sits in ``.value``); this
    is the full metric trace of the second-order operator.
    """
    arr = h.evaluate(frame, out_order + 2) if isinstance(h, JetField) else h
    m = arr.flat[0].order
    if m < out_order + 2:
        raise InsufficientOrderError("trace composition needs two orders of headroom")
    n = frame.dim
    ginv_m = frame.ginv(m)
    tr = jet_dot([ginv_m[a, b] for a in range(n) for b in range(n)],
                 [arr[a, b] for a in range(n) for b in range(n)])
    dtr = covd(frame, grad_scalar(frame, tr))  # dtr[a, b] = grad_a grad_b tr
    ginv_2 = frame.ginv(out_order)
    lap = jet_dot([ginv_2[a, b] for a in range(n) for b in range(n)],
                  [dtr[a, b] for a in range(n) for b in range(n)])
    d2h = covd(frame, covd(frame, arr))  # d2h[a, b, c, d] = grad_a grad_b h_cd
    divdiv_terms_a = []
    divdiv_terms_b = []
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    divdiv_terms_a.append(ginv_2[a, c] * ginv_2[b, d])
                    divdiv_terms_b.append(d2h[a, b, c, d])
    divdiv = jet_dot(divdiv_terms_a, divdiv_terms_b)
    ric = frame.ricci(out_order)
    arr_t = _truncate_arr(arr, out_order)
    ric_terms_a = []
    ric_terms_b = []
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    ric_terms_a.append(ginv_2[a, c] * ginv_2[b, d] * ric[c, d])
                    ric_terms_b.append(arr_t[a, b])
    ric_h = jet_dot(ric_terms_a, ric_terms_b)
    return 2.0 * (lap - divdiv + ric_h)


def trace_lemma_residual(frame: ChartFrame, sigma: JetField) -> float:
    """Scalar-trace identity on Killing images: the trace composition of the
    symmetrised derivative equals minus the scalar-curvature gradient paired
    with the 1-form."""
    arr = sigma.evaluate(frame, 3)
    h = killing_op(frame, arr)
    tc = trace_composition(frame, h).value
    scalar = frame.scalar_curvature(1)
    grad_r = np.array([scalar.partial(a).value for a in range(frame.dim)])
    sigma0 = _values_arr(_truncate_arr(arr, 1))
    pairing = float(np.einsum("a,ab,b->", grad_r, frame.ginv0, sigma0))
    scale = 1.0 + abs(tc) + abs(pairing) + np.abs(sigma0).max()
    return abs(tc + pairing) / scale


# -- product split of the second-order operator ------------------------------------------

def _product_index_split(chart: ProductChart):
    m_idx = []
    f_idx = []
    for f in chart.factors:
        target = f_idx if f.kind == "flat" else m_idx
        target.extend(range(f.offset, f.offset + f.dim))
    if not m_idx or not f_idx:
        raise DiffOpsError("type split needs a product of a curved block with a flat block")
    return m_idx, f_idx


def product_calabi_parts(frame: ChartFrame, h: JetField, project_first: bool = False):
    """Type components of the second-order operator on a mixed symmetric form.

    The chart must be a product of a curved block with a flat block; ``h``
    is a symmetric 2-tensor supported on the mixed type.  Returns four
    float arrays; with ``project_first`` the first component is replaced by
    its residual modulo the curvature action's range (the quotient step).
    """
    if not isinstance(frame.chart, ProductChart):
        raise DiffOpsError("type split needs a product chart")
    m_idx, f_idx = _product_index_split(frame.chart)
    arr = h.evaluate(frame, 2)
    d2 = _values_arr(covd(frame, covd(frame, arr)))  # d2[e, f, a, b] = grad_e grad_f h_ab
    gi = frame.ginv0

    mi = np.ix_
    # part 1: grad_c grad_[a h_b]bb  (all unbarred slots in the curved block)
    p1 = d2[mi(m_idx, m_idx, m_idx, f_idx)]
    part1 = 0.5 * (p1 - p1.transpose(0, 2, 1, 3))
    if project_first:
        rm0 = frame.riemann_mixed0
        rmm = rm0[mi(m_idx, m_idx, m_idx, m_idx)]  # R_ab^d_c on the curved block
        nm, nf = len(m_idx), len(f_idx)
        # best kappa in grad_c grad_[a h_b]bb = R_ab^d_c kappa_d bb
        a_mat = np.einsum("abdc->cabd", rmm).reshape(nm ** 3, nm)
        rhs = part1.transpose(0, 1, 2, 3).reshape(nm ** 3, nf)
        sol, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
        part1 = (rhs - a_mat @ sol).reshape(nm, nm, nm, nf)

    # raise barred slots with the flat block's inverse metric
    gi_f = gi[mi(f_idx, f_idx)]
    raised = np.einsum("aibj,ik,jl->akbl", d2[mi(m_idx, f_idx, m_idx, f_idx)], gi_f, gi_f)
    part2 = 0.25 * (
        raised + raised.transpose(2, 1, 0, 3) + raised.transpose(0, 3, 2, 1) + raised.transpose(2, 3, 0, 1)
    )
    part3 = 0.25 * (
        raised - raised.transpose(2, 1, 0, 3) - raised.transpose(0, 3, 2, 1) + raised.transpose(2, 3, 0, 1)
    )
    # part 4: d^cb d^[ab h_b^bb]  (all barred slots raised, b unbarred)
    d4 = np.einsum("cjbi,jk,il->ckbl", d2[mi(f_idx, f_idx, m_idx, f_idx)], gi_f, gi_f)
    part4 = 0.5 * (d4 - d4.transpose(0, 3, 2, 1))
    return part1, part2, part3, part4


# -- fourth-order integrability operator on the warped strip -------------------------------

def _warp_data(frame: ChartFrame, order: int):
    chart = frame.chart
    if not isinstance(chart, WarpedChart2D):
        raise DiffOpsError("fourth-order operator lives on the 2D warped chart")
    omega = chart.omega_jet(frame.point, order + 1, num_vars=frame.num_vars)
    upsilon = omega.partial(1) / omega.truncated(order)
    return omega.truncated(order), upsilon  # upsilon at ``order``


def khavkine_j_jet(frame: ChartFrame, p: Jet, q: Jet, r: Jet, out_order: int = 2) -> Jet:
    """The scalar J of the fourth-order operator, as a jet of ``out_order``.

    Requires p, q, r at order out_order + 2 and a warp profile whose
    denominator Omega^2 (Ups'' + 2 Ups Ups') stays away from zero.
    """
    need = out_order + 2
    for name, jet in (("p", p), ("q", q), ("r", r)):
        if jet.order < need:
            raise InsufficientOrderError(f"{name} needs order >= {need}")
    omega, upsilon = _warp_data(frame, need)  # upsilon at order need
    om2 = (omega * omega).truncated(out_order)
    ups = upsilon.truncated(out_order)
    ups_p = upsilon.partial(1).truncated(out_order)
    ups_pp = upsilon.partial(1).partial(1).truncated(out_order)
    denom = om2 * (ups_pp + 2.0 * ups * ups_p)
    if abs(denom.value) < 1e-8:
        raise SingularWarpError(
            f"denominator {denom.value:.3e} is within 1e-8 of zero at t = {frame.point[1]:.3f}"
        )
    p2 = p.truncated(need)
    q2 = q.truncated(need)
    r2 = r.truncated(need)
    p_t = p2.partial(1).truncated(out_order)
    p_tt = p2.partial(1).partial(1).truncated(out_order)
    q_xt = q2.partial(0).partial(1).truncated(out_order)
    r_xx = r2.partial(0).partial(0).truncated(out_order)
    r_t = r2.partial(1).truncated(out_order)
    p0 = p2.truncated(out_order)
    r0 = r2.truncated(out_order)
    num = (
        p_tt - 2.0 * ups * p_t - 2.0 * ups_p * p0 - q_xt + r_xx
        - om2 * (ups * r_t + 2.0 * ups_p * r0 + 2.0 * ups * ups * r0)
    )
    return num / denom


def khavkine_op(frame: ChartFrame, p: Jet, q: Jet, r: Jet) -> tuple[float, float]:
    """Fourth-order integrability operator on the warped strip.

    Input scalars follow the type trivialisation p = h_xx, q = 2 h_xt,
    r = h_tt; the output pair vanishes exactly on symmetrised derivatives of
    1-forms.
    """
    j = khavkine_j_jet(frame, p, q, r, out_order=2)
    omega, upsilon = _warp_data(frame, 2)
    om2_0 = omega.value ** 2
    ups_0 = upsilon.value
    ups_p0 = upsilon.partial(1).value
    j_t = j.partial(1)
    out1 = j_t.value - r.value
    out2 = (
        j.partial(0).partial(0).value
        - om2_0 * ups_0 * j_t.value
        - om2_0 * ups_p0 * j.value
        - q.partial(0).value
        + p.partial(1).value
        - 2.0 * ups_0 * p.value
    )
    return out1, out2


def killing_scalars_on_warped(frame: ChartFrame, x_field: JetField, xi_field: JetField,
                              out_order: int = 4):
    """The (p, q, r) scalars of the symmetrised derivative of X dx + xi dt."""
    n = frame.dim
    x_jet = x_field.evaluate(frame, out_order + 1)
    xi_jet = xi_field.evaluate(frame, out_order + 1)
    sigma = np.empty(n, dtype=object)
    sigma[0] = x_jet if isinstance(x_jet, Jet) else x_jet[()]
    sigma[1] = xi_jet if isinstance(xi_jet, Jet) else xi_jet[()]
    h = killing_op(frame, sigma, out_order=out_order)
    return h[0, 0], 2.0 * h[0, 1], h[1, 1]


# -- metric deformation ------------------------------------------------------------------

def deformation_scalar_coefficient(chart: ChartGeometry, h: JetField, point,
                                   order: int = 4) -> float:
    """Linear response of the scalar curvature to a metric perturbation.

    Adds an auxiliary jet variable eps, forms metric + eps * h, pushes the
    deformed metric through the curvature pipeline, and extracts the
    eps-derivative of the scalar curvature at the point.
    """
    if order < 3:
        raise InsufficientOrderError("deformation needs jet order >= 3")
    frame = ChartFrame(chart, point, order=order, extra_vars=1)
    nv = frame.num_vars
    eps = Jet.variable(nv - 1, 0.0, nv, order)
    g = chart.metric_jets(point, order, num_vars=nv)
    h_arr = h.evaluate(frame, order)
    n = chart.num_coords
    g_def = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(n):
            g_def[a, b] = g[a, b] + eps * h_arr[a, b]
    ginv = invert_metric_jets(g_def)
    gamma = christoffel_jets(g_def, ginv)
    rm = riemann_mixed_jets(gamma)
    ric = np.empty((n, n), dtype=object)
    for b in range(n):
        for d in range(n):
            acc = rm[0, b, 0, d]
            for a in range(1, n):
                acc = acc + rm[a, b, a, d]
            ric[b, d] = acc
    scal_order = rm.flat[0].order
    ginv_t = _truncate_arr(ginv, scal_order)
    scalar = jet_dot([ginv_t[a, b] for a in range(n) for b in range(n)],
                     [ric[a, b] for a in range(n) for b in range(n)])
    mi = [0] * nv
    mi[nv - 1] = 1
    return scalar.extract(mi)


def deformation_residual(chart: ChartGeometry, h: JetField, point, order: int = 4) -> float:
    """Check that the eps-linear scalar-curvature coefficient is minus half
    the trace composition of the perturbation."""
    coef = deformation_scalar_coefficient(chart, h, point, order=order)
    frame = ChartFrame(chart, point, order=order)
    tc = trace_composition(frame, h).value
    scale = 1.0 + abs(coef) + abs(tc)
    return abs(coef + 0.5 * tc) / scale
