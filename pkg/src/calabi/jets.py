"""Truncated multivariate Taylor (jet) arithmetic.

All differential operators in this package are evaluated by pushing jets
(truncated Taylor expansions of scalars about a chart point) through
ordinary arithmetic.  Truncated polynomial arithmetic is exact on the
retained coefficients, so derivative values read off a jet carry no
finite-difference error.

Coefficients are stored densely, indexed by graded lexicographic
enumeration of multi-indices of total degree <= ``order``.  Because the
enumeration is graded, truncating a jet to a lower order is a prefix
slice.  Jets are immutable values: every operation returns a new jet and
instances can be shared freely between threads.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

__all__ = [
    "Jet",
    "JetError",
    "jet_arith",
    "jet_compose_univariate",
    "jet_extract",
    "jet_dot",
    "jet_exp",
    "jet_log",
    "jet_sqrt",
    "jet_reciprocal",
    "jet_cos",
    "jet_sin",
    "jet_cosh",
    "jet_sinh",
    "monomial_exponents",
    "monomial_stack",
]

_SCALAR = (int, float, np.integer, np.floating)


class JetError(ValueError):
    """Contract violation in jet arithmetic (shape, order, or bad divisor)."""


@lru_cache(maxsize=None)
def _ncoef(num_vars: int, order: int) -> int:
    return math.comb(num_vars + order, order)


@lru_cache(maxsize=None)
def _exponents(num_vars: int, order: int) -> np.ndarray:
    """Multi-indices with total degree <= order, graded lexicographic."""
    rows: list[list[int]] = []
    for deg in range(order + 1):
        for picks in combinations_with_replacement(range(num_vars), deg):
            exp = [0] * num_vars
            for i in picks:
                exp[i] += 1
            rows.append(exp)
    arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), num_vars)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _lookup(num_vars: int, order: int) -> dict:
    return {tuple(map(int, e)): i for i, e in enumerate(_exponents(num_vars, order))}


@lru_cache(maxsize=None)
def _radix(num_vars: int, order: int):
    # Degree sums never exceed `order`, so base (order + 1) keys add without carries.
    exps = _exponents(num_vars, order)
    weights = (order + 1) ** np.arange(num_vars, dtype=np.int64)
    keys = exps @ weights
    sorter = np.argsort(keys, kind="stable")
    return keys, keys[sorter], sorter


@lru_cache(maxsize=None)
def _mul_table(num_vars: int, order: int):
    """Index triples (i, j, k) with exponent(i) + exponent(j) = exponent(k)."""
    keys, sorted_keys, sorter = _radix(num_vars, order)
    ii_parts, jj_parts = [], []
    for d in range(order + 1):
        i_lo = _ncoef(num_vars, d - 1) if d > 0 else 0
        i_hi = _ncoef(num_vars, d)
        j_hi = _ncoef(num_vars, order - d)
        ii_parts.append(np.repeat(np.arange(i_lo, i_hi), j_hi))
        jj_parts.append(np.tile(np.arange(j_hi), i_hi - i_lo))
    ii = np.concatenate(ii_parts)
    jj = np.concatenate(jj_parts)
    pos = np.searchsorted(sorted_keys, keys[ii] + keys[jj])
    kk = sorter[pos]
    return ii, jj, kk


@lru_cache(maxsize=None)
def _partial_table(num_vars: int, order: int, var: int):
    """Source index and multiplier taking coefficients to the d/dx_var jet."""
    if order < 1:
        raise JetError("cannot differentiate a jet of order 0")
    lookup = _lookup(num_vars, order)
    exps_out = _exponents(num_vars, order - 1)
    src = np.empty(len(exps_out), dtype=np.int64)
    fac = np.empty(len(exps_out))
    for i, e in enumerate(exps_out):
        e2 = list(e)
        e2[var] += 1
        src[i] = lookup[tuple(e2)]
        fac[i] = e2[var]
    src.setflags(write=False)
    fac.setflags(write=False)
    return src, fac


@lru_cache(maxsize=None)
def _factorials(num_vars: int, order: int) -> np.ndarray:
    exps = _exponents(num_vars, order)
    out = np.ones(len(exps))
    for i, e in enumerate(exps):
        f = 1
        for k in e:
            f *= math.factorial(int(k))
        out[i] = f
    out.setflags(write=False)
    return out


class Jet:
    """Taylor coefficients of a scalar about a point, truncated at ``order``.

    ``coeffs[k]`` is the coefficient of the monomial with multi-index
    ``_exponents(num_vars, order)[k]`` in the expansion f(p + h); the
    partial-derivative value is ``coeffs[k] * multi_index!``.
    """

    __slots__ = ("num_vars", "order", "coeffs")

    def __init__(self, num_vars: int, order: int, coeffs, _trusted: bool = False):
        if num_vars < 1:
            raise JetError("num_vars must be >= 1")
        if order < 0:
            raise JetError("order must be >= 0")
        self.num_vars = num_vars
        self.order = order
        if _trusted:
            self.coeffs = coeffs
        else:
            arr = np.asarray(coeffs, dtype=float)
            if arr.shape != (_ncoef(num_vars, order),):
                raise JetError(
                    f"expected {_ncoef(num_vars, order)} coefficients for "
                    f"num_vars={num_vars}, order={order}, got shape {arr.shape}"
                )
            self.coeffs = arr.copy()

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, value: float, num_vars: int, order: int) -> "Jet":
        c = np.zeros(_ncoef(num_vars, order))
        c[0] = value
        return cls(num_vars, order, c, _trusted=True)

    @classmethod
    def variable(cls, var: int, value: float, num_vars: int, order: int) -> "Jet":
        """Jet of the coordinate function x_var at a point where it equals ``value``."""
        if not 0 <= var < num_vars:
            raise JetError(f"variable index {var} out of range")
        c = np.zeros(_ncoef(num_vars, order))
        c[0] = value
        if order >= 1:
            c[1 + var] = 1.0
        return cls(num_vars, order, c, _trusted=True)

    @classmethod
    def from_terms(cls, num_vars: int, order: int, terms: dict) -> "Jet":
        """Build a jet from ``{multi_index: coefficient}`` (Taylor coefficients)."""
        c = np.zeros(_ncoef(num_vars, order))
        lookup = _lookup(num_vars, order)
        for mi, val in terms.items():
            key = tuple(int(m) for m in mi)
            if len(key) != num_vars or key not in lookup:
                raise JetError(f"multi-index {mi} invalid for num_vars={num_vars}, order={order}")
            c[lookup[key]] = val
        return cls(num_vars, order, c, _trusted=True)

    # -- queries ----------------------------------------------------------

    @property
    def value(self) -> float:
        """Value of the underlying function at the expansion point."""
        return float(self.coeffs[0])

    def extract(self, multi_index: Sequence[int]) -> float:
        """Partial-derivative value: multi_index! times the stored coefficient."""
        key = tuple(int(m) for m in multi_index)
        if len(key) != self.num_vars:
            raise JetError("multi-index length does not match num_vars")
        if any(m < 0 for m in key) or sum(key) > self.order:
            raise JetError(f"multi-index {key} exceeds jet order {self.order}")
        idx = _lookup(self.num_vars, self.order)[key]
        fac = 1.0
        for m in key:
            fac *= math.factorial(m)
        return float(self.coeffs[idx] * fac)

    def truncated(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise JetError(f"cannot extend a jet of order {self.order} to order {order}")
        return Jet(self.num_vars, order, self.coeffs[: _ncoef(self.num_vars, order)].copy(), _trusted=True)

    def partial(self, var: int) -> "Jet":
        """Coordinate derivative d/dx_var; the result has one order less."""
        src, fac = _partial_table(self.num_vars, self.order, var)
        return Jet(self.num_vars, self.order - 1, self.coeffs[src] * fac, _trusted=True)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "Jet") -> None:
        if self.num_vars != other.num_vars:
            raise JetError(f"num_vars mismatch: {self.num_vars} vs {other.num_vars}")
        if self.order != other.order:
            raise JetError(f"order mismatch: {self.order} vs {other.order}")

    def __add__(self, other):
        if isinstance(other, _SCALAR):
            c = self.coeffs.copy()
            c[0] += other
            return Jet(self.num_vars, self.order, c, _trusted=True)
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.num_vars, self.order, self.coeffs + other.coeffs, _trusted=True)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.num_vars, self.order, -self.coeffs, _trusted=True)

    def __sub__(self, other):
        if isinstance(other, _SCALAR):
            return self + (-other)
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.num_vars, self.order, self.coeffs - other.coeffs, _trusted=True)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, _SCALAR):
            return Jet(self.num_vars, self.order, self.coeffs * other, _trusted=True)
        if isinstance(other, Jet):
            self._check(other)
            ii, jj, kk = _mul_table(self.num_vars, self.order)
            c = np.bincount(kk, weights=self.coeffs[ii] * other.coeffs[jj],
                            minlength=_ncoef(self.num_vars, self.order))
            return Jet(self.num_vars, self.order, c, _trusted=True)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, _SCALAR):
            return Jet(self.num_vars, self.order, self.coeffs / other, _trusted=True)
        if isinstance(other, Jet):
            self._check(other)
            return self * jet_reciprocal(other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _SCALAR):
            return jet_reciprocal(self) * other
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise JetError("jet powers must be non-negative integers")
        result = Jet.constant(1.0, self.num_vars, self.order)
        base = self
        n = int(n)
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def __repr__(self):
        return f"Jet(num_vars={self.num_vars}, order={self.order}, value={self.value:.6g})"


# -- spec-level operations --------------------------------------------------

def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    """Exact truncated-Taylor arithmetic on two jets of equal shape.

    ``op`` is one of ``add``, ``sub``, ``mul``, ``div``; division is
    power-series inversion and requires a nonzero constant term in ``b``.
    """
    if not isinstance(a, Jet) or not isinstance(b, Jet):
        raise JetError("jet_arith expects two jets")
    a._check(b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise JetError(f"unknown op {op!r}")


def jet_extract(a: Jet, multi_index: Sequence[int]) -> float:
    """Partial-derivative value of the jet at its expansion point."""
    return a.extract(multi_index)


def jet_compose_univariate(outer: Sequence[float], inner: Jet) -> Jet:
    """Compose an analytic function with a jet.

    ``outer`` lists the Taylor coefficients c_k of f about ``inner.value``,
    i.e. f(inner.value + s) = sum c_k s^k, for k = 0 .. inner.order at
    least.  Returns the jet of f(inner) via a Horner evaluation.
    """
    if len(outer) < inner.order + 1:
        raise JetError(
            f"outer series has {len(outer)} coefficients; need {inner.order + 1}"
        )
    shifted = inner - inner.value
    acc = Jet.constant(float(outer[inner.order]), inner.num_vars, inner.order)
    for k in range(inner.order - 1, -1, -1):
        acc = acc * shifted + float(outer[k])
    return acc


def jet_reciprocal(a: Jet) -> Jet:
    if abs(a.value) < 1e-300:
        raise JetError("division by a jet with zero constant term")
    v = a.value
    outer = [(-1.0) ** k / v ** (k + 1) for k in range(a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_exp(a: Jet) -> Jet:
    e = math.exp(a.value)
    outer = [e / math.factorial(k) for k in range(a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_log(a: Jet) -> Jet:
    if a.value <= 0:
        raise JetError("jet_log needs a positive constant term")
    v = a.value
    outer = [math.log(v)]
    outer += [(-1.0) ** (k + 1) / (k * v ** k) for k in range(1, a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_sqrt(a: Jet) -> Jet:
    if a.value <= 0:
        raise JetError("jet_sqrt needs a positive constant term")
    v = a.value
    outer = []
    coef = math.sqrt(v)
    half = 0.5
    for k in range(a.order + 1):
        outer.append(coef)
        coef = coef * (half - k) / ((k + 1) * v)
    return jet_compose_univariate(outer, a)


def _trig_series(a: Jet, table) -> Jet:
    v = a.value
    outer = [table[k % 4](v) / math.factorial(k) for k in range(a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_cos(a: Jet) -> Jet:
    return _trig_series(a, (math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v), math.sin))


def jet_sin(a: Jet) -> Jet:
    return _trig_series(a, (math.sin, math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v)))


def jet_cosh(a: Jet) -> Jet:
    v = a.value
    c, s = math.cosh(v), math.sinh(v)
    outer = [(c if k % 2 == 0 else s) / math.factorial(k) for k in range(a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_sinh(a: Jet) -> Jet:
    v = a.value
    c, s = math.cosh(v), math.sinh(v)
    outer = [(s if k % 2 == 0 else c) / math.factorial(k) for k in range(a.order + 1)]
    return jet_compose_univariate(outer, a)


def jet_dot(a_jets: Sequence[Jet], b_jets: Sequence[Jet]) -> Jet:
    """Sum of elementwise products, with a single coefficient reduction.

    Equivalent to ``sum(a * b for a, b in zip(a_jets, b_jets))`` but much
    faster inside tensor contractions.
    """
    if len(a_jets) != len(b_jets) or not a_jets:
        raise JetError("jet_dot needs two equal-length, non-empty sequences")
    first = a_jets[0]
    nv, order = first.num_vars, first.order
    a_mat = np.empty((len(a_jets), len(first.coeffs)))
    b_mat = np.empty_like(a_mat)
    for r, (a, b) in enumerate(zip(a_jets, b_jets)):
        if a.num_vars != nv or a.order != order or b.num_vars != nv or b.order != order:
            raise JetError("jet_dot operands must share num_vars and order")
        a_mat[r] = a.coeffs
        b_mat[r] = b.coeffs
    ii, jj, kk = _mul_table(nv, order)
    prods = (a_mat[:, ii] * b_mat[:, jj]).sum(axis=0)
    c = np.bincount(kk, weights=prods, minlength=_ncoef(nv, order))
    return Jet(nv, order, c, _trusted=True)


def monomial_exponents(num_vars: int, degree: int) -> np.ndarray:
    """All multi-indices of total degree <= degree (graded lexicographic)."""
    return _exponents(num_vars, degree)


def monomial_stack(point: Sequence[float], order: int, degree: int,
                   num_vars: int | None = None) -> np.ndarray:
    """Coefficient rows of the monomial jets x^beta at ``point``.

    Returns an array of shape (n_monomials, n_coefficients): row r holds the
    jet of the monomial with exponent ``monomial_exponents(...)[r]``.  A
    polynomial field evaluates to jets via a single matrix product against
    this stack.  ``num_vars`` may exceed ``len(point)`` to embed the jets in
    a larger variable space (the extra variables do not appear in the
    monomials).
    """
    pt = np.asarray(point, dtype=float)
    nv = int(num_vars) if num_vars is not None else len(pt)
    if nv < len(pt):
        raise JetError("num_vars smaller than the point dimension")
    coords = [Jet.variable(i, pt[i], nv, order) for i in range(len(pt))]
    # per-variable power ladders
    powers = []
    for x in coords:
        ladder = [Jet.constant(1.0, nv, order), x]
        for _ in range(2, degree + 1):
            ladder.append(ladder[-1] * x)
        powers.append(ladder)
    exps = monomial_exponents(len(pt), degree)
    out = np.empty((len(exps), _ncoef(nv, order)))
    for r, e in enumerate(exps):
        jet = None
        for i, k in enumerate(e):
            if k:
                jet = powers[i][k] if jet is None else jet * powers[i][k]
        if jet is None:
            jet = Jet.constant(1.0, nv, order)
        out[r] = jet.coeffs
    return out
