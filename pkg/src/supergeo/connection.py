"""Connections on TM given by Christoffel symbols.

Index convention: ``gamma[i][j][k]`` is the coefficient of ``d/dx^i`` in
``nabla_{d_j} d_k`` (0-based in the API, 1-based in model files).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NonInvertibleError, ParityError
from .geometry import CoordinateChange, evaluate_exprs, random_points
from .grassmann import Parity, mul_arrays, tables
from .superexpr import (
    ZERO,
    CoordinateSystem,
    Expr,
    add,
    as_expr,
    conjugate_expr,
    differentiate,
    mul,
    neg,
    parse,
    sub,
    substitute,
    sum_exprs,
)

__all__ = [
    "ChristoffelField",
    "Tensor3",
    "covariant_derivative",
    "field_parity",
    "torsion",
    "is_torsion_free",
    "difference_tensor",
    "transform_residual",
    "transform_christoffel",
    "solve_transformed",
    "max_residual",
    "default_samples",
]


def _nested(n, fill):
    return [[[fill(i, j, k) for k in range(n)] for j in range(n)] for i in range(n)]


@dataclass(frozen=True)
class Tensor3:
    """``n x n x n`` array of expressions, upper index first."""

    coords: CoordinateSystem
    components: tuple

    def __post_init__(self):
        n = self.coords.n
        comps = tuple(tuple(tuple(as_expr(c) for c in row) for row in plane) for plane in self.components)
        if len(comps) != n or any(len(p) != n or any(len(r) != n for r in p) for p in comps):
            raise ValueError(f"expected an {n}x{n}x{n} array")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, idx) -> Expr:
        i, j, k = idx
        return self.components[i][j][k]

    def flat(self) -> list[Expr]:
        return [c for plane in self.components for row in plane for c in row]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Values on a batch of points, shape ``(B, n, n, n, 2**L)``."""
        n = self.coords.n
        out = evaluate_exprs(self.flat(), self.coords.names, X)
        return out.reshape(X.shape[0], n, n, n, -1)


class ChristoffelField(Tensor3):
    """Christoffel symbols ``Gamma^i_{jk}`` with parity ``eps_i+eps_j+eps_k``."""

    def __post_init__(self):
        super().__post_init__()
        eps = self.coords.eps
        n = self.coords.n
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    c = self.components[i][j][k]
                    if c is ZERO:
                        continue
                    want = Parity.ODD if (eps[i] + eps[j] + eps[k]) % 2 else Parity.EVEN
                    if c.parity is not want:
                        raise ParityError(
                            f"Gamma({i + 1},{j + 1},{k + 1}) must be {want.name.lower()}, "
                            f"got {c.parity.name.lower()}"
                        )

    @classmethod
    def zero(cls, coords: CoordinateSystem) -> "ChristoffelField":
        return cls(coords, _nested(coords.n, lambda i, j, k: ZERO))

    @classmethod
    def from_entries(cls, coords: CoordinateSystem, entries: Mapping[tuple[int, int, int], Expr | str]) -> "ChristoffelField":
        """Build from 1-based ``(i, j, k) -> expr`` entries; missing ones are zero."""
        n = coords.n
        table = {}
        for (i, j, k), e in entries.items():
            if not all(1 <= a <= n for a in (i, j, k)):
                raise IndexError(f"Christoffel index ({i},{j},{k}) out of range 1..{n}")
            table[(i - 1, j - 1, k - 1)] = parse(e, coords) if isinstance(e, str) else as_expr(e)
        return cls(coords, _nested(n, lambda i, j, k: table.get((i, j, k), ZERO)))


def default_samples(coords: CoordinateSystem, L: int | None = None, size: int = 50, seed: int = 0) -> np.ndarray:
    L = coords.q + 2 if L is None else L
    return random_points(coords, L, size, np.random.default_rng(seed))


def max_residual(exprs: Sequence[Expr], coords: CoordinateSystem, samples: np.ndarray) -> float:
    exprs = [e for e in exprs if e is not ZERO]
    if not exprs:
        return 0.0
    return float(np.abs(evaluate_exprs(exprs, coords.names, samples)).max())


def field_parity(components: Sequence[Expr], coords: CoordinateSystem) -> int:
    """Parity of a homogeneous vector field ``sum X^j d_j`` (0 for the zero field)."""
    par = None
    for e, c in zip(coords.eps, components):
        if c is ZERO:
            continue
        if c.parity is Parity.INHOMOGENEOUS:
            raise ParityError("vector field component is inhomogeneous")
        p = (int(c.parity is Parity.ODD) + e) % 2
        if par is None:
            par = p
        elif par != p:
            raise ParityError("vector field is not homogeneous")
    return par or 0


def covariant_derivative(gamma: ChristoffelField, X: Sequence[Expr], Y: Sequence[Expr]) -> list[Expr]:
    """Components of ``nabla_X Y`` for homogeneous fields ``X``, ``Y``.

    ``(nabla_X Y)^i = sum_j X^j d_j Y^i + sum_jk X^j sigma^{eps_j}(Y^k) Gamma^i_jk``.
    """
    coords = gamma.coords
    X = [as_expr(c) for c in X]
    Y = [as_expr(c) for c in Y]
    field_parity(X, coords)
    field_parity(Y, coords)
    n = coords.n
    xs = coords.vars()
    eps = coords.eps
    dY = [[differentiate(Y[i], xs[j]) for j in range(n)] for i in range(n)]
    Ybar = [conjugate_expr(y) for y in Y]
    out = []
    for i in range(n):
        terms = [mul(X[j], dY[i][j]) for j in range(n)]
        for j in range(n):
            if X[j] is ZERO:
                continue
            for k in range(n):
                yk = Ybar[k] if eps[j] else Y[k]
                terms.append(mul(mul(X[j], yk), gamma[i, j, k]))
        out.append(sum_exprs(terms))
    return out


def torsion(gamma: ChristoffelField) -> Tensor3:
    """``T^i_jk = Gamma^i_jk - (-1)^{eps_j eps_k} Gamma^i_kj``."""
    eps = gamma.coords.eps

    def comp(i, j, k):
        other = gamma[i, k, j]
        if eps[j] and eps[k]:
            return add(gamma[i, j, k], other)
        return sub(gamma[i, j, k], other)

    return Tensor3(gamma.coords, _nested(gamma.coords.n, comp))


def is_torsion_free(gamma: ChristoffelField, samples: np.ndarray | None = None, tol: float = 1e-10) -> tuple[bool, float]:
    if samples is None:
        samples = default_samples(gamma.coords)
    res = max_residual(torsion(gamma).flat(), gamma.coords, samples)
    return res <= tol, res


def difference_tensor(gamma: ChristoffelField, gamma_hat: ChristoffelField) -> Tensor3:
    """``S^i_jk = Gamma^i_jk - Gamma_hat^i_jk``."""
    if gamma.coords != gamma_hat.coords:
        raise ValueError("connections live in different coordinate systems")
    return Tensor3(gamma.coords, _nested(gamma.coords.n, lambda i, j, k: sub(gamma[i, j, k], gamma_hat[i, j, k])))


def transform_residual(gamma: ChristoffelField, ch: CoordinateChange, gamma_tilde: ChristoffelField) -> list[Expr]:
    """Residual expressions (in source coordinates) of the Christoffel law

    ``sum_i Gamma^i_jk d_i y^r = d_j d_k y^r
       + sum_st (-1)^{eps_j (eps_t + eps_k)} d_k y^t d_j y^s Gamma_tilde^r_st(y)``.
    """
    if gamma.coords != ch.source or gamma_tilde.coords != ch.target:
        raise ValueError("coordinate systems do not match the change")
    n = ch.source.n
    eps = ch.source.eps
    J = ch.jacobian()
    H = ch.second_derivatives()
    mapping = dict(zip(ch.target.names, ch.formulas))
    memo: dict = {}
    gt = [[[substitute(gamma_tilde[r, s, t], mapping, memo) for t in range(n)] for s in range(n)] for r in range(n)]
    out = []
    for j in range(n):
        for k in range(n):
            for r in range(n):
                lhs = sum_exprs(mul(gamma[i, j, k], J[i][r]) for i in range(n))
                terms = [H[j][k][r]]
                for s in range(n):
                    for t in range(n):
                        term = mul(mul(J[k][t], J[j][s]), gt[r][s][t])
                        terms.append(neg(term) if eps[j] * (eps[t] + eps[k]) % 2 else term)
                out.append(sub(lhs, sum_exprs(terms)))
    return out


def solve_transformed(gamma: ChristoffelField, ch: CoordinateChange, samples: np.ndarray) -> np.ndarray:
    """Values of ``Gamma_tilde^r_st`` at ``y(x_b)`` for each source sample ``x_b``.

    The law is left-linear in the unknowns.  Left multiplication by a fixed
    Grassmann number is a real linear map on coefficient vectors, so for each
    sample and each upper index ``r`` we solve one square real system.
    Returns an array of shape ``(B, n, n, n, 2**L)``.
    """
    n = ch.source.n
    eps = ch.source.eps
    B, _, N = samples.shape
    L = N.bit_length() - 1
    t = tables(L)
    J = evaluate_exprs([e for row in ch.jacobian() for e in row], ch.source.names, samples).reshape(B, n, n, N)
    H = evaluate_exprs([e for a in ch.second_derivatives() for b in a for e in b], ch.source.names, samples)
    H = H.reshape(B, n, n, n, N)
    G = gamma.evaluate(samples)

    def left_matrix(a):
        M = np.zeros((N, N))
        np.add.at(M, (t.K, t.J), t.S * a[t.I])
        return M

    result = np.zeros((B, n, n, n, N))
    for b in range(B):
        A = np.zeros((n * n * N, n * n * N))
        for j in range(n):
            for k in range(n):
                row = (j * n + k) * N
                for s in range(n):
                    for tt in range(n):
                        sign = -1.0 if eps[j] * (eps[tt] + eps[k]) % 2 else 1.0
                        coef = mul_arrays(J[b, k, tt], J[b, j, s], L)
                        col = (s * n + tt) * N
                        A[row:row + N, col:col + N] = sign * left_matrix(coef)
        if abs(np.linalg.det(A)) < 1e-300:
            raise NonInvertibleError("Jacobian body is singular at a sample point")
        for r in range(n):
            rhs = np.zeros(n * n * N)
            for j in range(n):
                for k in range(n):
                    lhs = sum(mul_arrays(G[b, i, j, k], J[b, i, r], L) for i in range(n))
                    rhs[(j * n + k) * N:(j * n + k + 1) * N] = lhs - H[b, j, k, r]
            result[b, r] = np.linalg.solve(A, rhs).reshape(n, n, N)
    return result


def transform_christoffel(gamma: ChristoffelField, ch: CoordinateChange,
                          gamma_tilde: ChristoffelField | None = None,
                          samples: np.ndarray | None = None) -> float:
    """Max residual of the Christoffel transformation law at sample points.

    With ``gamma_tilde`` given, both sides are evaluated symbolically.  Without
    it, the target symbols are first solved from the law (see
    :func:`solve_transformed`) and the residual of that solution is returned.
    """
    if samples is None:
        samples = default_samples(ch.source)
    check_jacobian_samples(ch, samples)
    if gamma_tilde is not None:
        return max_residual(transform_residual(gamma, ch, gamma_tilde), ch.source, samples)
    values = solve_transformed(gamma, ch, samples)
    n = ch.source.n
    eps = ch.source.eps
    B, _, N = samples.shape
    L = N.bit_length() - 1
    J = evaluate_exprs([e for row in ch.jacobian() for e in row], ch.source.names, samples).reshape(B, n, n, N)
    H = evaluate_exprs([e for a in ch.second_derivatives() for b in a for e in b], ch.source.names, samples)
    H = H.reshape(B, n, n, n, N)
    G = gamma.evaluate(samples)
    worst = 0.0
    for j in range(n):
        for k in range(n):
            for r in range(n):
                lhs = sum(mul_arrays(G[:, i, j, k], J[:, i, r], L) for i in range(n))
                rhs = H[:, j, k, r].copy()
                for s in range(n):
                    for tt in range(n):
                        sign = -1.0 if eps[j] * (eps[tt] + eps[k]) % 2 else 1.0
                        coef = mul_arrays(J[:, k, tt], J[:, j, s], L)
                        rhs += sign * mul_arrays(coef, values[:, r, s, tt], L)
                worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def check_jacobian_samples(ch: CoordinateChange, samples: np.ndarray) -> None:
    n = ch.source.n
    body = evaluate_exprs([e for row in ch.jacobian() for e in row], ch.source.names, samples)[..., 0]
    dets = np.linalg.det(body.reshape(-1, n, n)) if n else np.ones(1)
    if np.any(np.abs(dets) < 1e-14):
        raise NonInvertibleError("Jacobian body is singular at a sample point")
