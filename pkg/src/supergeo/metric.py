"""Super metrics, musical isomorphisms, the Levi-Civita connection, the
free-particle Hamiltonian on T*M^(0) and its relation to the geodesic field.

Momenta are named ``p_<coord>`` with the parity of their coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .compile import compiled
from .connection import ChristoffelField, default_samples, max_residual
from .errors import NonInvertibleError, ParityError
from .flows import GeodesicField, VectorField, tangent_names
from .geometry import SuperPoint, TangentVector, check_value_parity, random_values
from .grassmann import GrassmannNumber, Parity, tables
from .superexpr import (
    ONE,
    ZERO,
    CoordinateSystem,
    Expr,
    add,
    as_expr,
    conjugate_expr,
    const,
    differentiate,
    div,
    mul,
    neg,
    parse,
    sub,
    substitute,
    sum_exprs,
    var,
)

__all__ = [
    "SuperMetric",
    "supermatrix_inverse",
    "metric_eval",
    "metric_flat",
    "metric_sharp",
    "levi_civita",
    "compatibility_exprs",
    "compatibility_check",
    "hamiltonian_expr",
    "hamiltonian_eval",
    "hamiltonian_vector_field",
    "hamiltonian_field_from_function",
    "sharp_exprs",
    "energy_expr",
    "intertwine_residuals",
    "intertwine_check",
    "cotangent_samples",
]


def _sign(k: int) -> int:
    return -1 if k % 2 else 1


def _signed(e: Expr, k: int) -> Expr:
    return neg(e) if k % 2 else e


def supermatrix_inverse(A: Sequence[Sequence[Expr]], coords: CoordinateSystem,
                        reference: np.ndarray | None = None) -> list[list[Expr]]:
    """Symbolic inverse of an even supermatrix by Gauss-Jordan elimination.

    Pivots are restricted to entries of the pivot column's parity block (those
    entries are even, hence divisible) and chosen by largest body at a
    reference point, so structurally vanishing pivots such as the odd-odd
    diagonal of a graded-symmetric metric are skipped by row exchange.
    Row operations multiply from the left, which keeps the result valid
    for non-commuting (odd) entries.
    """
    n = coords.n
    eps = coords.eps
    M = [[as_expr(A[i][j]) for j in range(n)] + [ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    if reference is None:
        reference = _reference_point(coords)
    L = reference.shape[-1].bit_length() - 1

    def body(e: Expr) -> float:
        if e is ZERO:
            return 0.0
        return float(compiled([e], coords.names)(reference[None])[0, 0, 0])

    used = [False] * n
    order = []
    for c in range(n):
        candidates = [r for r in range(n) if not used[r] and eps[r] == eps[c]]
        best, best_val = None, 0.0
        for r in candidates:
            val = abs(body(M[r][c]))
            if val > best_val:
                best, best_val = r, val
        if best is None or best_val < 1e-13:
            raise NonInvertibleError("metric matrix has a singular body at the reference point")
        used[best] = True
        order.append(best)
        piv = M[best][c]
        M[best] = [div(e, piv) for e in M[best]]
        for r in range(n):
            if r == best or M[r][c] is ZERO:
                continue
            f = M[r][c]
            M[r] = [sub(M[r][k], mul(f, M[best][k])) for k in range(2 * n)]
    # row `order[c]` now has a 1 in column c
    return [M[order[c]][n:] for c in range(n)]


def _reference_point(coords: CoordinateSystem) -> np.ndarray:
    rng = np.random.default_rng(12345)
    return random_values(rng, coords.eps, 0, 1, body_range=(0.6, 1.4))[0]


@dataclass
class SuperMetric:
    """Graded-symmetric even matrix ``g_ij`` with its symbolic inverse ``g^ij``."""

    coords: CoordinateSystem
    g: tuple
    _inverse: list | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.coords.n
        eps = self.coords.eps
        self.g = tuple(tuple(as_expr(e) for e in row) for row in self.g)
        if len(self.g) != n or any(len(row) != n for row in self.g):
            raise ValueError(f"expected an {n}x{n} matrix")
        for i in range(n):
            for j in range(n):
                e = self.g[i][j]
                if e is ZERO:
                    continue
                want = Parity.ODD if (eps[i] + eps[j]) % 2 else Parity.EVEN
                if e.parity is not want:
                    raise ParityError(f"g({i + 1},{j + 1}) must be {want.name.lower()}, got {e.parity.name.lower()}")

    @classmethod
    def from_upper(cls, coords: CoordinateSystem, entries: Mapping[tuple[int, int], Expr | str]) -> "SuperMetric":
        """Build from 1-based entries with ``i <= j``; the rest follow by graded symmetry."""
        n = coords.n
        eps = coords.eps
        g = [[ZERO] * n for _ in range(n)]
        for (i, j), e in entries.items():
            if not (1 <= i <= n and 1 <= j <= n):
                raise IndexError(f"metric index ({i},{j}) out of range 1..{n}")
            if i > j:
                raise ValueError(f"give metric entries with i <= j, got ({i},{j})")
            e = parse(e, coords) if isinstance(e, str) else as_expr(e)
            g[i - 1][j - 1] = e
            g[j - 1][i - 1] = _signed(e, eps[i - 1] * eps[j - 1])
        return cls(coords, g)

    def __getitem__(self, idx) -> Expr:
        i, j = idx
        return self.g[i][j]

    @property
    def inverse(self) -> list[list[Expr]]:
        if self._inverse is None:
            self._inverse = supermatrix_inverse(self.g, self.coords)
        return self._inverse

    def invariant_residuals(self, samples: np.ndarray) -> dict[str, float]:
        """Max residual of each structural identity at the samples."""
        n = self.coords.n
        eps = self.coords.eps
        gi = self.inverse
        sym = [sub(self.g[i][j], _signed(self.g[j][i], eps[i] * eps[j])) for i in range(n) for j in range(n)]
        right = [sub(sum_exprs(mul(self.g[i][j], gi[j][k]) for j in range(n)), ONE if i == k else ZERO)
                 for i in range(n) for k in range(n)]
        left = [sub(sum_exprs(mul(gi[k][j], self.g[j][i]) for j in range(n)), ONE if i == k else ZERO)
                for i in range(n) for k in range(n)]
        isym = [sub(gi[i][j], _signed(gi[j][i], eps[i] + eps[j] + eps[i] * eps[j])) for i in range(n) for j in range(n)]
        body = evaluate_matrix(self.g, self.coords, samples)[..., 0]
        dets = np.abs(np.linalg.det(body)) if n else np.ones(1)
        vals = evaluate_matrix(gi, self.coords, samples)
        par = 0.0
        odd_mask = tables(samples.shape[-1].bit_length() - 1).odd
        for i in range(n):
            for j in range(n):
                wrong = ~odd_mask if (eps[i] + eps[j]) % 2 else odd_mask
                par = max(par, float(np.abs(vals[:, i, j][:, wrong]).max(initial=0.0)))
        return {
            "graded_symmetry": max_residual(sym, self.coords, samples),
            "inverse_right": max_residual(right, self.coords, samples),
            "inverse_left": max_residual(left, self.coords, samples),
            "inverse_symmetry": max_residual(isym, self.coords, samples),
            "inverse_parity": par,
            "min_body_det": float(dets.min()),
        }


def evaluate_matrix(M: Sequence[Sequence[Expr]], coords: CoordinateSystem, samples: np.ndarray) -> np.ndarray:
    n = len(M)
    flat = [e for row in M for e in row]
    return compiled(flat, coords.names)(samples).reshape(samples.shape[0], n, n, -1)


def metric_eval(g: SuperMetric, v: TangentVector, w: TangentVector) -> GrassmannNumber:
    """``<v, w | g> = sum_ij v^i sigma^{eps_i}(w^j) g_ij``."""
    if v.base != w.base:
        raise ValueError("tangent vectors have different base points")
    n = g.coords.n
    eps = g.coords.eps
    G = evaluate_matrix(g.g, g.coords, v.base.array()[None])[0]
    L = v.base.num_generators
    total = GrassmannNumber(L)
    for i in range(n):
        for j in range(n):
            wj = w.components[j].conjugate() if eps[i] else w.components[j]
            total = total + v.components[i] * wj * GrassmannNumber(L, G[i, j])
    return total


def metric_flat(g: SuperMetric, v: TangentVector) -> list[GrassmannNumber]:
    """Covector components ``(g_flat v)_i = (-1)^{eps_i} sum_j v^j g_ji``."""
    n = g.coords.n
    eps = g.coords.eps
    G = evaluate_matrix(g.g, g.coords, v.base.array()[None])[0]
    L = v.base.num_generators
    out = []
    for i in range(n):
        total = GrassmannNumber(L)
        for j in range(n):
            total = total + v.components[j] * GrassmannNumber(L, G[j, i])
        out.append(-total if eps[i] else total)
    return out


def metric_sharp(g: SuperMetric, base: SuperPoint, alpha: Sequence[GrassmannNumber]) -> TangentVector:
    """``(g_sharp alpha)^j = sum_i (-1)^{eps_i} alpha_i g^ij``."""
    n = g.coords.n
    eps = g.coords.eps
    Gi = evaluate_matrix(g.inverse, g.coords, base.array()[None])[0]
    L = base.num_generators
    comps = []
    for j in range(n):
        total = GrassmannNumber(L)
        for i in range(n):
            term = alpha[i] * GrassmannNumber(L, Gi[i, j])
            total = total - term if eps[i] else total + term
        comps.append(total)
    return TangentVector(base, tuple(comps))


def levi_civita(g: SuperMetric) -> ChristoffelField:
    """``Gamma^i_jk = 1/2 sum_l (d_j g_kl + (-1)^{eps_j eps_k} d_k g_jl
    - (-1)^{eps_l (eps_j + eps_k)} d_l g_jk) g^li``."""
    coords = g.coords
    n = coords.n
    eps = coords.eps
    xs = coords.vars()
    gi = g.inverse
    memo: dict = {}
    dg = [[[differentiate(g.g[a][b], xs[c], memo=memo) for c in range(n)] for b in range(n)] for a in range(n)]
    half = const(0.5)
    comps = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for j in range(n):
        for k in range(n):
            brackets = []
            for l in range(n):
                t = add(dg[k][l][j], _signed(dg[j][l][k], eps[j] * eps[k]))
                t = sub(t, _signed(dg[j][k][l], eps[l] * (eps[j] + eps[k])))
                brackets.append(t)
            for i in range(n):
                comps[i][j][k] = mul(half, sum_exprs(mul(brackets[l], gi[l][i]) for l in range(n) if brackets[l] is not ZERO))
    return ChristoffelField(coords, comps)


def compatibility_exprs(g: SuperMetric, gamma: ChristoffelField) -> list[Expr]:
    """Residuals of ``X<Y,Z|g> = <nabla_X Y, Z|g> + (-1)^{eps(X)eps(Y)} <Y, nabla_X Z|g>``
    for coordinate fields ``X = d_p, Y = d_j, Z = d_k``:

    ``d_p g_jk - sum_i Gamma^i_pj g_ik - (-1)^{eps_j eps_k} sum_i Gamma^i_pk g_ij``.
    """
    coords = g.coords
    n = coords.n
    eps = coords.eps
    xs = coords.vars()
    out = []
    for p in range(n):
        for j in range(n):
            for k in range(n):
                lhs = differentiate(g.g[j][k], xs[p])
                first = sum_exprs(mul(gamma[i, p, j], g.g[i][k]) for i in range(n))
                second = sum_exprs(mul(gamma[i, p, k], g.g[i][j]) for i in range(n))
                out.append(sub(sub(lhs, first), _signed(second, eps[j] * eps[k])))
    return out


def compatibility_check(g: SuperMetric, gamma: ChristoffelField, samples: np.ndarray | None = None) -> float:
    if samples is None:
        samples = default_samples(g.coords)
    return max_residual(compatibility_exprs(g, gamma), g.coords, samples)


# ---------------------------------------------------------------------------
# Cotangent bundle


def momentum_vars(coords: CoordinateSystem, prefix: str = "p_") -> list[Expr]:
    return [var(prefix + name, e) for name, e in zip(coords.names, coords.eps)]


def hamiltonian_expr(g: SuperMetric, prefix: str = "p_") -> Expr:
    """``H(x, p) = 1/2 sum_jk (-1)^{eps_k} g^jk p_k p_j``."""
    n = g.coords.n
    eps = g.coords.eps
    p = momentum_vars(g.coords, prefix)
    gi = g.inverse
    terms = [_signed(mul(mul(gi[j][k], p[k]), p[j]), eps[k]) for j in range(n) for k in range(n) if gi[j][k] is not ZERO]
    return mul(const(0.5), sum_exprs(terms))


def cotangent_names(coords: CoordinateSystem, prefix: str = "p_") -> tuple[str, ...]:
    return coords.names + tuple(prefix + n for n in coords.names)


def hamiltonian_eval(g: SuperMetric, x: SuperPoint, p: Sequence[GrassmannNumber]) -> GrassmannNumber:
    for name, e, pi in zip(g.coords.names, g.coords.eps, p):
        check_value_parity(pi, e, f"momentum p_{name}")
    X = np.concatenate([x.array(), np.stack([pi.array for pi in p])])[None]
    val = compiled([hamiltonian_expr(g)], cotangent_names(g.coords))(X)[0, 0]
    return GrassmannNumber(x.num_generators, val)


def hamiltonian_vector_field(g: SuperMetric, prefix: str = "p_") -> VectorField:
    """``X_H = sum_ik (-1)^{eps_k} p_k g^ki d_{x^i}
    - 1/2 sum_ijk (-1)^{eps_i+eps_k} (d_i g^jk) p_k p_j d_{p_i}``."""
    coords = g.coords
    n = coords.n
    eps = coords.eps
    xs = coords.vars()
    p = momentum_vars(coords, prefix)
    gi = g.inverse
    memo: dict = {}
    xdot = [sum_exprs(_signed(mul(p[k], gi[k][i]), eps[k]) for k in range(n)) for i in range(n)]
    pdot = []
    for i in range(n):
        terms = []
        for j in range(n):
            for k in range(n):
                d = differentiate(gi[j][k], xs[i], memo=memo)
                if d is ZERO:
                    continue
                terms.append(_signed(mul(mul(d, p[k]), p[j]), eps[i] + eps[k]))
        pdot.append(mul(const(-0.5), sum_exprs(terms)))
    return VectorField(cotangent_names(coords, prefix), eps + eps, tuple(xdot) + tuple(pdot))


def hamiltonian_field_from_function(f: Expr, coords: CoordinateSystem, prefix: str = "p_") -> VectorField:
    """``X_f`` defined by ``iota(X_f) omega = -df`` with ``omega = sum dp_i ^ dx^i``:

    ``X_f = sum_i ((-1)^{eps_i} sigma^{eps_i}(d_{p_i} f) d_{x^i} - sigma^{eps_i}(d_{x^i} f) d_{p_i})``.
    """
    n = coords.n
    eps = coords.eps
    xs = coords.vars()
    p = momentum_vars(coords, prefix)
    xdot, pdot = [], []
    for i in range(n):
        dp = differentiate(f, p[i])
        dx = differentiate(f, xs[i])
        if eps[i]:
            xdot.append(neg(conjugate_expr(dp)))
            pdot.append(neg(conjugate_expr(dx)))
        else:
            xdot.append(dp)
            pdot.append(neg(dx))
    return VectorField(cotangent_names(coords, prefix), eps + eps, tuple(xdot) + tuple(pdot))


def sharp_exprs(g: SuperMetric, prefix: str = "p_") -> list[Expr]:
    """``w^j(x, p) = sum_i (-1)^{eps_i} p_i g^ij``."""
    n = g.coords.n
    eps = g.coords.eps
    p = momentum_vars(g.coords, prefix)
    gi = g.inverse
    return [sum_exprs(_signed(mul(p[i], gi[i][j]), eps[i]) for i in range(n)) for j in range(n)]


def energy_expr(g: SuperMetric, prefix: str = "v_") -> Expr:
    """``1/2 <v, v | g>`` as a function on TM^(0)."""
    n = g.coords.n
    eps = g.coords.eps
    v = [var(nm, e) for nm, e in zip(tangent_names(g.coords, prefix), eps)]
    vbar = [conjugate_expr(c) for c in v]
    terms = [mul(mul(v[i], vbar[j] if eps[i] else v[j]), g.g[i][j]) for i in range(n) for j in range(n) if g.g[i][j] is not ZERO]
    return mul(const(0.5), sum_exprs(terms))


def cotangent_samples(coords: CoordinateSystem, L: int | None = None, size: int = 100, seed: int = 0,
                      **kw) -> np.ndarray:
    """Random points ``(x, p)`` of T*M^(0), shape ``(size, 2n, 2**L)``."""
    L = coords.q + 2 if L is None else L
    rng = np.random.default_rng(seed)
    X = random_values(rng, coords.eps, L, size, **kw)
    P = random_values(rng, coords.eps, L, size, body_range=(-1.0, 1.0), soul_scale=kw.get("soul_scale", 0.5))
    return np.concatenate([X, P], axis=1)


def intertwine_residuals(g: SuperMetric, gamma: ChristoffelField | None = None) -> list[Expr]:
    """``T g_sharp (X_H) - G o g_sharp`` as expressions in ``(x, p)``.

    The push-forward of ``X_H`` through ``(x, p) -> (x, w(x, p))`` has
    components ``X_H^{x^i}`` and ``sum_a X_H^a d_a w^j``; the geodesic field of
    ``gamma`` (Levi-Civita by default) is evaluated at ``(x, w)``.
    """
    coords = g.coords
    n = coords.n
    if gamma is None:
        gamma = levi_civita(g)
    XH = hamiltonian_vector_field(g)
    w = sharp_exprs(g)
    memo: dict = {}
    pushed = list(XH.components[:n]) + [XH.apply(wj, memo) for wj in w]
    G = GeodesicField(gamma)
    mapping = dict(zip(tangent_names(coords), w))
    smemo: dict = {}
    target = [substitute(c, mapping, smemo) for c in G.components]
    return [sub(a, b) for a, b in zip(pushed, target)]


def intertwine_check(g: SuperMetric, samples: np.ndarray | None = None, gamma: ChristoffelField | None = None) -> float:
    """Max residual of ``T g_sharp (X_H) = G`` at cotangent sample points."""
    if samples is None:
        samples = cotangent_samples(g.coords)
    res = [e for e in intertwine_residuals(g, gamma) if e is not ZERO]
    if not res:
        return 0.0
    return float(np.abs(compiled(res, cotangent_names(g.coords))(samples)).max())
