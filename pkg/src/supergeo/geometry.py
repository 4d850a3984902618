"""Points, tangent vectors, 1-forms and coordinate changes on a superdomain.

Also hosts the odd-coefficient expansion ``f = sum_I xi^I f_I`` and the
random sample-point generator shared by every residual check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .compile import compiled
from .errors import NonInvertibleError, ParityError
from .grassmann import GrassmannNumber, Parity, tables
from .superexpr import (
    ONE,
    ZERO,
    CoordinateSystem,
    Expr,
    add,
    as_expr,
    differentiate,
    mul,
    parse,
    substitute,
    var,
)

__all__ = [
    "SuperPoint",
    "TangentVector",
    "OneForm",
    "CoordinateChange",
    "expand_coefficients",
    "reassemble",
    "pushforward_tangent",
    "compose_changes",
    "random_values",
    "random_points",
    "points_to_array",
    "evaluate_exprs",
    "check_value_parity",
]


def check_value_parity(value: GrassmannNumber, odd: int, what: str) -> None:
    par = value.parity()
    if value.is_zero():
        return
    want = Parity.ODD if odd else Parity.EVEN
    if par is not want:
        raise ParityError(f"{what} must be {want.name.lower()}, got {par.name.lower()}")


@dataclass(frozen=True)
class SuperPoint:
    """A Grassmann-valued point; slot ``i`` has the parity of coordinate ``i``."""

    coords: CoordinateSystem
    values: tuple[GrassmannNumber, ...]

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if len(values) != self.coords.n:
            raise ValueError(f"expected {self.coords.n} values, got {len(values)}")
        Ls = {v.num_generators for v in values}
        if len(Ls) > 1:
            raise ValueError("point values use different generator counts")
        for name, e, v in zip(self.coords.names, self.coords.eps, values):
            check_value_parity(v, e, f"value of {name!r}")

    @property
    def num_generators(self) -> int:
        return self.values[0].num_generators if self.values else 0

    def as_dict(self) -> dict[str, GrassmannNumber]:
        return dict(zip(self.coords.names, self.values))

    def array(self) -> np.ndarray:
        return np.stack([v.array for v in self.values])

    @classmethod
    def from_array(cls, coords: CoordinateSystem, arr: np.ndarray) -> "SuperPoint":
        L = arr.shape[-1].bit_length() - 1
        return cls(coords, tuple(GrassmannNumber(L, row) for row in arr))

    def __getitem__(self, name: str) -> GrassmannNumber:
        return self.values[self.coords.index(name)]


@dataclass(frozen=True)
class TangentVector:
    """Components ``v^i`` at a base point.

    For the even tangent bundle ``parity(v^i) = eps_i``; with ``odd=True`` (the
    odd bundle) ``parity(v^i) = eps_i + 1``.
    """

    base: SuperPoint
    components: tuple[GrassmannNumber, ...]
    odd: bool = False

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        coords = self.base.coords
        if len(comps) != coords.n:
            raise ValueError(f"expected {coords.n} components, got {len(comps)}")
        for name, e, v in zip(coords.names, coords.eps, comps):
            if v.num_generators != self.base.num_generators:
                raise ValueError("component and base point use different generator counts")
            check_value_parity(v, (e + int(self.odd)) % 2, f"component along {name!r}")

    @property
    def coords(self) -> CoordinateSystem:
        return self.base.coords

    def array(self) -> np.ndarray:
        return np.stack([v.array for v in self.components])


@dataclass(frozen=True)
class OneForm:
    """``alpha = sum_i alpha_i dx^i`` with components given as expressions."""

    coords: CoordinateSystem
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.coords.n:
            raise ValueError(f"expected {self.coords.n} components, got {len(comps)}")

    @classmethod
    def parse(cls, coords: CoordinateSystem, sources: Sequence[str]) -> "OneForm":
        return cls(coords, tuple(parse(s, coords) for s in sources))

    @classmethod
    def zero(cls, coords: CoordinateSystem) -> "OneForm":
        return cls(coords, (ZERO,) * coords.n)

    def is_even(self) -> bool:
        for e, c in zip(self.coords.eps, self.components):
            if c is ZERO:
                continue
            if c.parity is not (Parity.ODD if e else Parity.EVEN):
                return False
        return True

    def require_even(self) -> None:
        for name, e, c in zip(self.coords.names, self.coords.eps, self.components):
            if c is not ZERO and c.parity is not (Parity.ODD if e else Parity.EVEN):
                raise ParityError(
                    f"1-form component along {name!r} must have parity {e} for an even form, "
                    f"got {c.parity.name.lower()}"
                )

    def contraction_expr(self, v: Sequence[Expr]) -> Expr:
        """``iota(v) alpha = sum_i v^i sigma^{eps_i}(alpha_i)`` for an even form."""
        self.require_even()
        total = ZERO
        for e, vi, ai in zip(self.coords.eps, v, self.components):
            term = mul(vi, ai)
            total = add(total, -term if e else term)
        return total


@dataclass(frozen=True)
class CoordinateChange:
    """Formulas ``y^p(x)`` expressing target coordinates in source coordinates."""

    source: CoordinateSystem
    target: CoordinateSystem
    formulas: tuple[Expr, ...]
    _jacobian: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        formulas = tuple(as_expr(f) for f in self.formulas)
        object.__setattr__(self, "formulas", formulas)
        if len(formulas) != self.target.n or self.target.eps != self.source.eps:
            raise ValueError("coordinate change must map p|q to p|q")
        for name, e, f in zip(self.target.names, self.target.eps, formulas):
            if f is not ZERO and f.parity is not (Parity.ODD if e else Parity.EVEN):
                raise ParityError(f"formula for {name!r} is not parity preserving")

    @classmethod
    def parse(cls, source: CoordinateSystem, target: CoordinateSystem, sources: Sequence[str]) -> "CoordinateChange":
        return cls(source, target, tuple(parse(s, source) for s in sources))

    @classmethod
    def identity(cls, coords: CoordinateSystem) -> "CoordinateChange":
        return cls(coords, coords, tuple(coords.vars()))

    def jacobian(self) -> list[list[Expr]]:
        """``J[i][p] = d y^p / d x^i`` (left derivatives)."""
        if self._jacobian is None:
            memo: dict = {}
            J = [[differentiate(y, xi, memo=memo) for y in self.formulas] for xi in self.source.vars()]
            object.__setattr__(self, "_jacobian", J)
        return self._jacobian

    def second_derivatives(self) -> list[list[list[Expr]]]:
        """``H[j][k][r] = d_j d_k y^r``."""
        J = self.jacobian()
        xs = self.source.vars()
        memo: dict = {}
        return [[[differentiate(J[k][r], xs[j], memo=memo) for r in range(self.target.n)]
                 for k in range(self.source.n)] for j in range(self.source.n)]

    def apply(self, point: SuperPoint) -> SuperPoint:
        if point.coords != self.source:
            raise ValueError("point is not in the source coordinates")
        prog = compiled(self.formulas, self.source.names)
        out = prog(point.array()[None])[0]
        return SuperPoint.from_array(self.target, out)

    def check_jacobian(self, point: SuperPoint) -> None:
        prog = compiled([e for row in self.jacobian() for e in row], self.source.names)
        n = self.source.n
        body = prog(point.array()[None])[0, :, 0].reshape(n, n)
        if n and abs(np.linalg.det(body)) < 1e-14:
            raise NonInvertibleError("Jacobian body is singular at the given point")


def compose_changes(second: CoordinateChange, first: CoordinateChange) -> CoordinateChange:
    """``second after first`` as a single change from ``first.source``."""
    if first.target != second.source:
        raise ValueError("changes do not compose")
    mapping = dict(zip(second.source.names, first.formulas))
    memo: dict = {}
    return CoordinateChange(first.source, second.target, tuple(substitute(f, mapping, memo) for f in second.formulas))


def pushforward_tangent(ch: CoordinateChange, t: TangentVector) -> TangentVector:
    """``w^p = sum_i v^i (d_i y^p)(x)`` with the base point mapped through ``ch``."""
    ch.check_jacobian(t.base)
    n = ch.source.n
    J = ch.jacobian()
    prog = compiled([e for row in J for e in row], ch.source.names)
    Jv = prog(t.base.array()[None])[0].reshape(n, n, -1)
    L = t.base.num_generators
    Jg = [[GrassmannNumber(L, Jv[i, p]) for p in range(n)] for i in range(n)]
    w = []
    for p in range(n):
        total = GrassmannNumber(L)
        for i in range(n):
            total = total + t.components[i] * Jg[i][p]
        w.append(total)
    return TangentVector(ch.apply(t.base), tuple(w), t.odd)


# ---------------------------------------------------------------------------
# Odd-coefficient expansion


def expand_coefficients(e: Expr, odd_vars: Sequence[str], coords: CoordinateSystem) -> dict[tuple[int, ...], Expr]:
    """Expansion ``e = sum_I xi^I e_I`` over the listed odd coordinates.

    Keys are increasing tuples of 1-based positions in ``odd_vars``; the
    coefficient functions no longer depend on those coordinates.  Zero
    coefficients are omitted.
    """
    xs = [var(n, 1) for n in odd_vars]
    for name in odd_vars:
        if coords.parity_of(name) != 1:
            raise ParityError(f"{name!r} is not an odd coordinate")

    def go(f: Expr, start: int) -> dict[tuple[int, ...], Expr]:
        if f is ZERO:
            return {}
        if start == len(xs):
            return {(): f}
        xi = xs[start]
        at_zero = substitute(f, {xi.name: ZERO})
        # d_xi f no longer depends on xi, but its expression may still mention it
        slope = substitute(differentiate(f, xi), {xi.name: ZERO})
        out = go(at_zero, start + 1)
        for key, c in go(slope, start + 1).items():
            out[(start + 1,) + key] = c
        return out

    return go(e, 0)


def reassemble(coeffs: Mapping[tuple[int, ...], Expr], odd_vars: Sequence[str]) -> Expr:
    """Inverse of :func:`expand_coefficients`."""
    total = ZERO
    for key in sorted(coeffs, key=lambda k: (len(k), k)):
        mono = ONE
        for pos in key:
            mono = mul(mono, var(odd_vars[pos - 1], 1))
        total = add(total, mul(mono, coeffs[key]))
    return total


# ---------------------------------------------------------------------------
# Sampling and batch evaluation


def random_values(rng: np.random.Generator, parities: Sequence[int], L: int, size: int,
                  body_range=(0.5, 1.5), soul_scale: float = 0.5) -> np.ndarray:
    """Random coefficient arrays of shape ``(size, len(parities), 2**L)``.

    Even slots get a body in ``body_range`` plus an even soul; odd slots get
    random odd-subset coefficients.  All soul coefficients lie in
    ``[-soul_scale, soul_scale]``.
    """
    t = tables(L)
    N = 1 << L
    out = rng.uniform(-soul_scale, soul_scale, size=(size, len(parities), N))
    for slot, e in enumerate(parities):
        keep = t.odd if e else ~t.odd
        out[:, slot, ~keep] = 0.0
        if not e:
            out[:, slot, 0] = rng.uniform(body_range[0], body_range[1], size=size)
    return out


def random_points(coords: CoordinateSystem, L: int, size: int, rng: np.random.Generator, **kw) -> np.ndarray:
    return random_values(rng, coords.eps, L, size, **kw)


def points_to_array(points: Sequence[SuperPoint]) -> np.ndarray:
    return np.stack([p.array() for p in points])


def evaluate_exprs(exprs: Sequence[Expr], names: Sequence[str], X: np.ndarray) -> np.ndarray:
    """Evaluate ``exprs`` on a batch ``X`` of shape ``(B, len(names), 2**L)``."""
    return compiled(list(exprs), list(names))(X)
