"""Space-spec grammar shared by the model builders and the CLI.

A spec is a product of factors separated by ``x``; each factor is a kind
letter (S, H, CP, R), a positive dimension, and an optional ``@scale``:

    spec   := factor ('x' factor)*
    factor := kind digits ('@' scale)?
    kind   := 'S' | 'H' | 'CP' | 'R'   (case-insensitive)

Examples: ``S2xS2``, ``S3xS1``, ``CP2xR1``, ``S2@2xH2``.  Whitespace is
rejected.  Parsing and printing are mutually inverse on canonical forms.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["SpaceSpecError", "SpecFactor", "SpaceSpec", "parse_space_spec", "format_space_spec"]

_KINDS = ("CP", "S", "H", "R")  # longest first for the scanner


class SpaceSpecError(ValueError):
    """Malformed space spec; the message carries the offending position."""

    def __init__(self, text: str, pos: int, reason: str):
        super().__init__(f"{reason} at position {pos} in {text!r}")
        self.pos = pos
        self.reason = reason


@dataclass(frozen=True)
class SpecFactor:
    kind: str  # "S" | "H" | "CP" | "R"
    n: int     # S/H/R: dimension; CP: complex dimension (real dim = 2n)
    scale: float = 1.0

    @property
    def real_dim(self) -> int:
        return 2 * self.n if self.kind == "CP" else self.n


@dataclass(frozen=True)
class SpaceSpec:
    factors: tuple

    @property
    def dim(self) -> int:
        return sum(f.real_dim for f in self.factors)

    def __str__(self) -> str:
        return format_space_spec(self)


def format_space_spec(spec: SpaceSpec) -> str:
    parts = []
    for f in spec.factors:
        s = f"{f.kind}{f.n}"
        if f.scale != 1.0:
            s += f"@{f.scale:g}"
        parts.append(s)
    return "x".join(parts)


def parse_space_spec(text: str) -> SpaceSpec:
    """Parse a space spec; errors carry the character position."""
    if not isinstance(text, str) or not text:
        raise SpaceSpecError(str(text), 0, "empty spec")
    for i, ch in enumerate(text):
        if ch.isspace():
            raise SpaceSpecError(text, i, "whitespace not allowed")
    factors = []
    pos = 0
    expect_factor = True
    n = len(text)
    while pos < n:
        kind = None
        for cand in _KINDS:
            if text[pos:pos + len(cand)].upper() == cand:
                kind = cand
                break
        if kind is None:
            raise SpaceSpecError(text, pos, f"unknown factor kind {text[pos]!r}")
        pos += len(kind)
        start = pos
        while pos < n and text[pos].isdigit():
            pos += 1
        if pos == start:
            raise SpaceSpecError(text, start, "missing dimension digits")
        dim = int(text[start:pos])
        if dim == 0:
            raise SpaceSpecError(text, start, "factor dimension must be >= 1")
        scale = 1.0
        if pos < n and text[pos] == "@":
            pos += 1
            start = pos
            while pos < n and (text[pos].isdigit() or text[pos] in ".eE+-"):
                # stop a sign unless it follows an exponent marker
                if text[pos] in "+-" and (pos == start or text[pos - 1] not in "eE"):
                    break
                pos += 1
            token = text[start:pos]
            try:
                scale = float(token)
            except ValueError:
                raise SpaceSpecError(text, start, f"malformed scale {token!r}") from None
            if not scale > 0:
                raise SpaceSpecError(text, start, "scale must be positive")
        factors.append(SpecFactor(kind=kind, n=dim, scale=scale))
        expect_factor = False
        if pos < n:
            if text[pos] not in "xX":
                raise SpaceSpecError(text, pos, f"expected 'x' separator, found {text[pos]!r}")
            pos += 1
            expect_factor = True
    if expect_factor:
        raise SpaceSpecError(text, n, "trailing separator")
    return SpaceSpec(factors=tuple(factors))
