"""Projective equivalence of torsion-free connections.

Two torsion-free connections share their geodesics up to reparametrization
exactly when their difference tensor has the 1-form shape

    S(X, Y) = 1/2 (iota(X)beta Y + (-1)^{eps(X)eps(Y)} iota(Y)beta X).

The 1-form ``alpha`` used throughout this module is the one of the shift
``nabla_hat_X Y = nabla_X Y + alpha(X)Y + (-1)^{eps(X)eps(Y)} alpha(Y)X``, so
``S = nabla - nabla_hat`` corresponds to ``beta = -2 alpha``.  The
reparametrization ``r`` of the geodesics of ``nabla`` solves
``r'' = (r')^2 iota(dPsi_1/dt(r)) beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compile import compiled
from .connection import (
    ChristoffelField,
    Tensor3,
    covariant_derivative,
    default_samples,
    difference_tensor,
    is_torsion_free,
    max_residual,
)
from .errors import FlowDomainError, NotProjectiveError
from .flows import DEFAULT_BLOWUP, DEFAULT_STEP, DenseFlow, GeodesicField, VectorField, rk4
from .geometry import OneForm, TangentVector
from .grassmann import GrassmannNumber, mul_arrays
from .superexpr import ONE, ZERO, Expr, add, const, mul, neg, sub, var

__all__ = [
    "shift_connection",
    "projective_difference",
    "recover_oneform",
    "Reparametrization",
    "solve_reparametrization",
    "reparametrization_field",
    "ProjectiveReport",
    "same_geodesics_check",
]


def _basis(n: int, j: int) -> list[Expr]:
    return [ONE if a == j else ZERO for a in range(n)]


def _scale_field(c: Expr, X: Sequence[Expr]) -> list[Expr]:
    return [mul(c, x) for x in X]


def shift_connection(gamma: ChristoffelField, alpha: OneForm) -> ChristoffelField:
    """Christoffel symbols of ``nabla_X Y + alpha(X)Y + (-1)^{eps(X)eps(Y)} alpha(Y)X``.

    The components are obtained by evaluating the shifted covariant
    derivative on pairs of coordinate fields.
    """
    alpha.require_even()
    coords = gamma.coords
    n = coords.n
    eps = coords.eps
    comps = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for j in range(n):
        X = _basis(n, j)
        aX = alpha.contraction_expr(X)
        for k in range(n):
            Y = _basis(n, k)
            aY = alpha.contraction_expr(Y)
            nabla = covariant_derivative(gamma, X, Y)
            first = _scale_field(aX, Y)
            second = _scale_field(aY, X)
            if eps[j] and eps[k]:
                second = [neg(c) for c in second]
            for i in range(n):
                comps[i][j][k] = add(add(nabla[i], first[i]), second[i])
    return ChristoffelField(coords, comps)


def projective_difference(alpha: OneForm) -> Tensor3:
    """``S = nabla - shift_connection(nabla, alpha)`` as a tensor (independent of nabla)."""
    coords = alpha.coords
    n = coords.n
    eps = coords.eps
    comps = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for j in range(n):
        X = _basis(n, j)
        aX = alpha.contraction_expr(X)
        for k in range(n):
            Y = _basis(n, k)
            aY = alpha.contraction_expr(Y)
            for i in range(n):
                term = add(mul(aX, Y[i]), neg(mul(aY, X[i])) if eps[j] and eps[k] else mul(aY, X[i]))
                comps[i][j][k] = neg(term)
    return Tensor3(coords, comps)


def recover_oneform(S: Tensor3, samples: np.ndarray | None = None, tol: float = 1e-12) -> OneForm:
    """The unique ``alpha`` with ``S = projective_difference(alpha)``.

    For even ``j`` the component comes from ``S^j_jj``; for odd ``j`` from
    ``S^i_ij`` with ``i`` even (any ``i != j`` when there is no even
    coordinate).  The reconstruction is then compared with ``S`` at the
    sample points; a mismatch above ``tol * max(1, |S|)`` raises
    :class:`NotProjectiveError`.
    """
    coords = S.coords
    n = coords.n
    eps = coords.eps
    comps = []
    for j in range(n):
        if not eps[j]:
            comps.append(mul(const(-0.5), S[j, j, j]))
            continue
        others = [i for i in range(n) if i != j]
        others.sort(key=lambda i: eps[i])
        if not others:
            comps.append(ZERO)
            continue
        i = others[0]
        sign = (eps[i] * eps[j] + eps[j]) % 2
        comps.append(S[i, i, j] if sign else neg(S[i, i, j]))
    alpha = OneForm(coords, tuple(comps))
    if samples is None:
        samples = default_samples(coords, seed=1)
    rec = projective_difference(alpha)
    diffs = [sub(a, b) for a, b in zip(S.flat(), rec.flat())]
    res = max_residual(diffs, coords, samples)
    scale = max(1.0, max_residual(S.flat(), coords, samples))
    if res > tol * scale:
        raise NotProjectiveError(res)
    return alpha


def reparametrization_field(G: GeodesicField, alpha: OneForm) -> tuple[VectorField, Expr]:
    """Augmented field ``(r, s, Y)' = (s, s^2 kappa(Y), s G(Y))`` and ``kappa``.

    ``kappa = iota(v) beta`` with ``beta = -2 alpha``, evaluated at the state
    ``Y = (x, v)`` of TM^(0).
    """
    coords = G.coords
    n = coords.n
    v = G.vars[n:]
    kappa = mul(const(-2.0), alpha.contraction_expr(v))
    r, s = var("_r"), var("_s")
    comps = (s, mul(mul(s, s), kappa)) + tuple(mul(s, c) for c in G.components)
    return VectorField((r.name, s.name) + G.names, (0, 0) + G.parities, comps), kappa


@dataclass
class Reparametrization:
    """``r(t)`` and ``s(t) = r'(t)`` on a real time grid (Grassmann-valued)."""

    times: np.ndarray
    r: np.ndarray  # (T, 2**L)
    s: np.ndarray  # (T, 2**L)
    h: float
    method: str = "dense"
    states: np.ndarray | None = None  # Psi(r(t)) of the original connection, (T, 2n, 2**L)


def solve_reparametrization(gamma: ChristoffelField, alpha: OneForm, init: TangentVector, t_end: float,
                            h: float = DEFAULT_STEP, method: str = "dense",
                            blowup: float = DEFAULT_BLOWUP) -> Reparametrization:
    """RK4 solution of ``r' = s, s' = s^2 iota(Psi_2(r)) beta(Psi_1(r))``, ``r(0)=0, s(0)=1``.

    ``method="dense"`` evaluates the flow of ``gamma`` at ``r`` from a dense
    precomputed trajectory (cubic Hermite in the real part, exact Lie series
    in the nilpotent part).  ``method="augmented"`` integrates the composite
    state ``(r, s, Psi(r))`` directly, an independent route used for checks.
    """
    alpha.require_even()
    G = GeodesicField(gamma)
    Y0 = np.concatenate([init.base.array(), init.array()])
    L = init.base.num_generators
    N = 1 << L
    rs0 = np.zeros((2, N))
    rs0[1, 0] = 1.0
    if method == "augmented":
        field_, _ = reparametrization_field(G, alpha)
        times, Z = rk4(field_, np.concatenate([rs0, Y0])[None], t_end, h, blowup)
        Z = Z[:, 0]
        return Reparametrization(times, Z[:, 0], Z[:, 1], h, method, Z[:, 2:])
    if method != "dense":
        raise ValueError(f"unknown method {method!r}")
    if t_end < 0:
        raise ValueError("dense reparametrization runs forward in time only")
    n = G.coords.n
    kappa = mul(const(-2.0), alpha.contraction_expr(G.vars[n:]))
    kprog = compiled([kappa], G.names)
    dense = DenseFlow(G, Y0, h, blowup, extent=max(t_end, h))

    def rhs(rs):
        r, s = rs[0], rs[1]
        Y = dense.at(r[None])
        k = kprog(Y[None])[0, 0]
        return np.stack([s, mul_arrays(mul_arrays(s, s, L), k, L)])

    class _Field:
        def __call__(self, Z):
            return rhs(Z[0])[None]

    times, RS = rk4(_Field(), rs0[None], t_end, h, blowup)
    RS = RS[:, 0]
    states = np.stack([dense.at(r[None]) for r in RS[:, 0]])
    return Reparametrization(times, RS[:, 0], RS[:, 1], h, method, states)


@dataclass
class ProjectiveReport:
    equivalent: bool
    reason: str = ""
    alpha: OneForm | None = None
    recovery_residual: float | None = None
    residuals: list = field(default_factory=list)
    r_end: list = field(default_factory=list)
    tolerance: float = 1e-6
    alpha_at_start: list = field(default_factory=list)  # (name, value) at the first initial point

    @property
    def verdict(self) -> str:
        return "EQUIVALENT" if self.equivalent else f"NOT-EQUIVALENT {self.reason}"

    def render(self) -> str:
        lines = []
        for name, value in self.alpha_at_start:
            lines.append(f"alpha[{name}] at first initial point = {value}")
        if self.recovery_residual is not None:
            lines.append(f"recovery residual: {self.recovery_residual:.3e}")
        for k, res in enumerate(self.residuals):
            if isinstance(res, str):
                lines.append(f"init {k + 1}: {res}")
            else:
                lines.append(f"init {k + 1}: coincidence residual {res:.3e}; r(t_end) = {self.r_end[k]}")
        lines.append(f"tolerance: {self.tolerance:.1e}")
        lines.append(self.verdict)
        return "\n".join(lines) + "\n"


def same_geodesics_check(gamma: ChristoffelField, gamma_hat: ChristoffelField, inits: Sequence[TangentVector],
                         t_end: float = 1.0, h: float = DEFAULT_STEP, tol: float = 1e-6,
                         samples: np.ndarray | None = None, method: str = "dense",
                         blowup: float = DEFAULT_BLOWUP) -> ProjectiveReport:
    """Decide whether the two connections have the same geodesics up to reparametrization."""
    for label, g in (("first", gamma), ("second", gamma_hat)):
        ok, res = is_torsion_free(g, samples)
        if not ok:
            return ProjectiveReport(False, f"{label} connection has torsion (residual {res:.3e})", tolerance=tol)
    S = difference_tensor(gamma, gamma_hat)
    try:
        alpha = recover_oneform(S, samples)
    except NotProjectiveError as exc:
        return ProjectiveReport(False, "difference tensor is not of projective form", None, exc.residual, tolerance=tol)
    rec_samples = default_samples(S.coords, seed=1) if samples is None else samples
    rec = projective_difference(alpha)
    rec_res = max_residual([sub(a, b) for a, b in zip(S.flat(), rec.flat())], S.coords, rec_samples)
    report = ProjectiveReport(True, "", alpha, rec_res, tolerance=tol)
    if inits:
        base = inits[0].base
        vals = compiled(list(alpha.components), list(base.coords.names))(base.array()[None])[0]
        report.alpha_at_start = [(nm, str(GrassmannNumber(base.num_generators, v)))
                                 for nm, v in zip(base.coords.names, vals)]
    G_hat = GeodesicField(gamma_hat)
    n = gamma.coords.n
    worst = 0.0
    for init in inits:
        try:
            rep = solve_reparametrization(gamma, alpha, init, t_end, h, method, blowup)
            _, Yh = rk4(G_hat, np.concatenate([init.base.array(), init.array()])[None], t_end, h, blowup)
        except FlowDomainError as exc:
            report.residuals.append(f"integration failed: {exc}")
            report.r_end.append(None)
            report.equivalent = False
            report.reason = "integration left the flow domain"
            continue
        diff = rep.states[:, :n] - Yh[:, 0, :n]
        res = float(np.abs(diff).max())
        worst = max(worst, res)
        report.residuals.append(res)
        report.r_end.append(str(GrassmannNumber(init.base.num_generators, rep.r[-1])))
    if report.equivalent and worst > tol:
        report.equivalent = False
        report.reason = f"geodesics differ (residual {worst:.3e})"
    return report
