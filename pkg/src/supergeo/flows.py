"""Geodesic vector field on TM^(0), its numeric flow, dilations, the
exponential map and the odd-bundle field G'.

States of TM^(0) are stored as arrays of shape ``(2n, 2**L)``: the base
coordinates followed by the velocity components ``v_<name>``.  Time is real
for integration; evaluation at an even Grassmann time ``t + n`` (n nilpotent)
uses the exact Lie series ``sum_k n^k/k! (L_G^k phi)`` around the real time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compile import compiled
from .connection import ChristoffelField, is_torsion_free
from .errors import EvaluationError, FlowDomainError, ParityError, TorsionError
from .geometry import SuperPoint, TangentVector, check_value_parity, random_values
from .grassmann import GrassmannNumber, mul_arrays
from .superexpr import ZERO, CoordinateSystem, Expr, Var, const, differentiate, mul, neg, sum_exprs, var

__all__ = [
    "VectorField",
    "GeodesicField",
    "FlowTrajectory",
    "DenseFlow",
    "rk4",
    "tangent_names",
    "geodesic_field_eval",
    "integrate_flow",
    "dilate",
    "exp_map",
    "odd_geodesic_field",
    "odd_autocommutator_obstruction",
    "autocommutator_x_components",
    "odd_geodesic_flow",
    "DEFAULT_STEP",
    "DEFAULT_BLOWUP",
]

DEFAULT_STEP = 1e-3
DEFAULT_BLOWUP = 1e12


def tangent_names(coords: CoordinateSystem, prefix: str = "v_") -> list[str]:
    return [prefix + name for name in coords.names]


@dataclass
class VectorField:
    """``sum_a X^a d/dz^a`` over named coordinates ``z^a`` with given parities."""

    names: tuple[str, ...]
    parities: tuple[int, ...]
    components: tuple[Expr, ...]
    _lie_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.parities = tuple(int(p) for p in self.parities)
        self.components = tuple(self.components)
        if not (len(self.names) == len(self.parities) == len(self.components)):
            raise ValueError("names, parities and components must have equal length")

    @property
    def vars(self) -> list[Var]:
        return [var(n, p) for n, p in zip(self.names, self.parities)]

    def apply(self, f: Expr, memo: dict | None = None) -> Expr:
        """``X f = sum_a X^a d_a f`` (left derivatives)."""
        memo = {} if memo is None else memo
        return sum_exprs(mul(c, differentiate(f, v, memo=memo)) for c, v in zip(self.components, self.vars) if c is not ZERO)

    def lie_powers(self, order: int) -> list[list[Expr]]:
        """``[L^k phi^a for a]`` for ``k = 0..order`` with ``phi`` the coordinates."""
        levels = self._lie_cache.setdefault("levels", [list(self.vars)])
        memo = self._lie_cache.setdefault("memo", {})
        while len(levels) <= order:
            levels.append([self.apply(f, memo) for f in levels[-1]])
        return levels[: order + 1]

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return compiled(self.components, self.names)(Y)


class GeodesicField(VectorField):
    """``G = sum_i v^i d_{x^i} - sum_ijk v^k v^j Gamma^i_jk(x) d_{v^i}``."""

    def __init__(self, gamma: ChristoffelField, prefix: str = "v_"):
        coords = gamma.coords
        n = coords.n
        vs = [var(nm, e) for nm, e in zip(tangent_names(coords, prefix), coords.eps)]
        accel = []
        for i in range(n):
            terms = []
            for j in range(n):
                for k in range(n):
                    g = gamma[i, j, k]
                    if g is not ZERO:
                        terms.append(mul(mul(vs[k], vs[j]), g))
            accel.append(neg(sum_exprs(terms)))
        super().__init__(coords.names + tuple(v.name for v in vs), coords.eps + coords.eps, tuple(vs) + tuple(accel))
        self.gamma = gamma
        self.coords = coords


def geodesic_field_eval(G: GeodesicField, state: TangentVector) -> tuple[list[GrassmannNumber], list[GrassmannNumber]]:
    """``(xdot, vdot)`` at a point of TM^(0)."""
    if state.odd:
        raise ParityError("the geodesic field lives on the even tangent bundle")
    Y = np.concatenate([state.base.array(), state.array()])[None]
    out = G(Y)[0]
    L = state.base.num_generators
    n = G.coords.n
    vals = [GrassmannNumber(L, row) for row in out]
    return vals[:n], vals[n:]


def _check_domain(Y: np.ndarray, bound: float) -> bool:
    return bool(np.all(np.isfinite(Y)) and np.all(np.abs(Y[..., 0]) <= bound))


def rk4(field: VectorField, Y0: np.ndarray, t_end: float, h: float = DEFAULT_STEP,
        blowup: float = DEFAULT_BLOWUP) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 on all Grassmann coefficients of a batch of states.

    ``Y0`` has shape ``(B, m, 2**L)``.  The step count is ``ceil(|t_end|/h)``
    with uniform steps ending exactly at ``t_end``.  Returns ``(times, Y)``
    with ``Y`` of shape ``(T, B, m, 2**L)``.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    if not math.isfinite(t_end):
        raise ValueError("t_end must be finite")
    steps = max(int(math.ceil(abs(t_end) / h - 1e-9)), 0)
    Y = np.array(Y0, dtype=np.float64)
    out = np.empty((steps + 1,) + Y.shape)
    out[0] = Y
    times = np.linspace(0.0, t_end, steps + 1) if steps else np.zeros(1)
    if steps == 0:
        return times, out
    dt = t_end / steps
    f = field.__call__
    for s in range(steps):
        try:
            k1 = f(Y)
            k2 = f(Y + 0.5 * dt * k1)
            k3 = f(Y + 0.5 * dt * k2)
            k4 = f(Y + dt * k3)
        except EvaluationError as exc:
            raise FlowDomainError(f"left the flow domain ({exc})", float(times[s])) from None
        Ynew = Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not _check_domain(Ynew, blowup):
            raise FlowDomainError("left the flow domain (coefficient blow-up)", float(times[s]))
        Y = Ynew
        out[s + 1] = Y
    return times, out


@dataclass
class FlowTrajectory:
    """Sampled flow of one initial condition on TM^(0)."""

    coords: CoordinateSystem
    times: np.ndarray
    states: np.ndarray  # (T, 2n, 2**L)
    h: float
    integrator: str = "rk4"

    @property
    def num_generators(self) -> int:
        return self.states.shape[-1].bit_length() - 1

    def point(self, k: int) -> SuperPoint:
        return SuperPoint.from_array(self.coords, self.states[k, : self.coords.n])

    def velocity(self, k: int) -> TangentVector:
        L = self.num_generators
        comps = [GrassmannNumber(L, row) for row in self.states[k, self.coords.n:]]
        return TangentVector(self.point(k), tuple(comps))

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, : self.coords.n]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, self.coords.n:]


def _state_array(init: TangentVector) -> np.ndarray:
    if init.odd:
        raise ParityError("initial velocity must lie in the even tangent bundle")
    return np.concatenate([init.base.array(), init.array()])


def integrate_flow(G: GeodesicField, init: TangentVector, t_end: float, h: float = DEFAULT_STEP,
                   blowup: float = DEFAULT_BLOWUP) -> FlowTrajectory:
    """RK4 flow of the geodesic field from ``init`` (negative ``t_end`` runs backwards)."""
    times, Y = rk4(G, _state_array(init)[None], t_end, h, blowup)
    return FlowTrajectory(G.coords, times, Y[:, 0], h)


class DenseFlow:
    """Flow of a field from fixed initial states, evaluable at any time in
    ``[0, extent]`` including even Grassmann times.

    Between grid nodes the state is interpolated by cubic Hermite
    polynomials (error O(h^4)); a nilpotent time shift is applied exactly via
    the Lie series of the field.
    """

    def __init__(self, field: VectorField, Y0: np.ndarray, h: float = DEFAULT_STEP,
                 blowup: float = DEFAULT_BLOWUP, extent: float = 1.0):
        self.field = field
        self.h = h
        self.blowup = blowup
        Y0 = np.asarray(Y0, dtype=np.float64)
        self.batched = Y0.ndim == 3
        self.Y0 = Y0 if self.batched else Y0[None]
        self.L = self.Y0.shape[-1].bit_length() - 1
        self.times = np.zeros(1)
        self.Y = self.Y0[None].copy()
        self.F = field(self.Y0)[None]
        self.extend_to(extent)

    def extend_to(self, t: float) -> None:
        if t <= self.times[-1]:
            return
        steps = max(int(math.ceil((t - self.times[-1]) / self.h - 1e-9)), 1)
        span = steps * self.h
        try:
            times, Y = rk4(self.field, self.Y[-1], span, self.h, self.blowup)
        except FlowDomainError as exc:
            raise FlowDomainError("left the flow domain", float(self.times[-1] + exc.last_time)) from None
        F = np.stack([self.field(y) for y in Y[1:]])
        self.times = np.concatenate([self.times, self.times[-1] + times[1:]])
        self.Y = np.concatenate([self.Y, Y[1:]])
        self.F = np.concatenate([self.F, F])

    def at_real(self, t: np.ndarray) -> np.ndarray:
        """Interpolated states at real times ``t`` (one per batch member)."""
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (self.Y.shape[1],))
        if np.any(t < 0):
            raise FlowDomainError("dense flow evaluated at negative time", 0.0)
        self.extend_to(float(t.max()))
        idx = np.minimum(np.searchsorted(self.times, t, side="right") - 1, len(self.times) - 2)
        idx = np.maximum(idx, 0)
        out = np.empty(self.Y.shape[1:])
        for b in range(out.shape[0]):
            i = idx[b]
            if len(self.times) == 1:
                out[b] = self.Y[0, b]
                continue
            t0, t1 = self.times[i], self.times[i + 1]
            dt = t1 - t0
            u = (t[b] - t0) / dt
            h00 = 2 * u**3 - 3 * u**2 + 1
            h10 = u**3 - 2 * u**2 + u
            h01 = -2 * u**3 + 3 * u**2
            h11 = u**3 - u**2
            out[b] = (h00 * self.Y[i, b] + h10 * dt * self.F[i, b]
                      + h01 * self.Y[i + 1, b] + h11 * dt * self.F[i + 1, b])
        return out

    def at(self, t) -> np.ndarray:
        """States at times ``t``: an array of per-member Grassmann times with
        shape ``(B, 2**L)``, a scalar, or a :class:`GrassmannNumber`."""
        B = self.Y.shape[1]
        N = 1 << self.L
        if isinstance(t, GrassmannNumber):
            t = t.array
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 0:
            arr = np.zeros((B, N))
            arr[:, 0] = t
        elif t.ndim == 1:
            arr = np.broadcast_to(t, (B, N)).copy()
        else:
            arr = t
        body = arr[:, 0]
        nil = arr.copy()
        nil[:, 0] = 0.0
        base = self.at_real(body)
        if not np.any(nil):
            return base if self.batched else base[0]
        order = self.L // 2
        levels = self.field.lie_powers(order)
        out = base.copy()
        power = np.zeros_like(nil)
        power[:, 0] = 1.0
        for k in range(1, order + 1):
            power = mul_arrays(power, nil, self.L)
            if not np.any(power):
                break
            deriv = compiled(levels[k], self.field.names)(base)
            out += mul_arrays(power[:, None, :], deriv, self.L) / math.factorial(k)
        return out if self.batched else out[0]


def dilate(t: TangentVector, lam) -> TangentVector:
    """``D_lambda(x, v) = (x, lambda v)`` for an even ``lambda``."""
    L = t.base.num_generators
    if not isinstance(lam, GrassmannNumber):
        lam = GrassmannNumber.scalar(float(lam), L)
    check_value_parity(lam, 0, "dilation factor")
    return TangentVector(t.base, tuple(lam * c for c in t.components), t.odd)


def exp_map(G: GeodesicField, t: TangentVector, h: float = DEFAULT_STEP, blowup: float = DEFAULT_BLOWUP) -> SuperPoint:
    """``exp_x(v) = pi(Psi(1, x, v))``."""
    try:
        traj = integrate_flow(G, t, 1.0, h, blowup)
    except FlowDomainError as exc:
        raise FlowDomainError("initial vector outside the exponential domain", exc.last_time) from None
    return traj.point(-1)


# ---------------------------------------------------------------------------
# Odd tangent bundle


def odd_geodesic_field(gamma: ChristoffelField, prefix: str = "vb_") -> VectorField:
    """``G' = sum_i vb^i d_{x^i} - sum_ijk (-1)^{eps_k} vb^k vb^j Gamma^i_jk d_{vb^i}``."""
    coords = gamma.coords
    n = coords.n
    eps = coords.eps
    vb = [var(nm, 1 - e) for nm, e in zip(tangent_names(coords, prefix), eps)]
    accel = []
    for i in range(n):
        terms = []
        for j in range(n):
            for k in range(n):
                g = gamma[i, j, k]
                if g is ZERO:
                    continue
                term = mul(mul(vb[k], vb[j]), g)
                terms.append(neg(term) if eps[k] else term)
        accel.append(neg(sum_exprs(terms)))
    return VectorField(coords.names + tuple(v.name for v in vb), eps + tuple(1 - e for e in eps), tuple(vb) + tuple(accel))


def _obstruction_exprs(gamma: ChristoffelField, prefix: str = "vb_") -> list[Expr]:
    coords = gamma.coords
    n = coords.n
    eps = coords.eps
    vb = [var(nm, 1 - e) for nm, e in zip(tangent_names(coords, prefix), eps)]
    out = []
    for i in range(n):
        terms = []
        for j in range(n):
            for k in range(n):
                g = gamma[i, j, k]
                if g is ZERO:
                    continue
                term = mul(mul(vb[k], vb[j]), g)
                terms.append(neg(term) if eps[k] else term)
        out.append(mul(const(-2.0), sum_exprs(terms)))
    return out


def autocommutator_x_components(gamma: ChristoffelField, prefix: str = "vb_") -> list[Expr]:
    """``d_{x^i}`` coefficients of ``[G', G'] = 2 G' o G'`` computed from the field itself."""
    Gp = odd_geodesic_field(gamma, prefix)
    n = gamma.coords.n
    memo: dict = {}
    return [mul(const(2.0), Gp.apply(Gp.components[i], memo)) for i in range(n)]


def _odd_bundle_samples(coords: CoordinateSystem, L: int, size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eps = coords.eps
    return random_values(rng, eps + tuple(1 - e for e in eps), L, size)


def odd_autocommutator_obstruction(gamma: ChristoffelField, samples: np.ndarray | None = None,
                                   L: int | None = None, size: int = 50, seed: int = 0) -> np.ndarray:
    """Per-``i`` max absolute value of the ``d_{x^i}`` coefficient of ``[G', G']``.

    ``samples`` are points ``(x, vb)`` of TM^(1) with shape ``(B, 2n, 2**L)``.
    """
    coords = gamma.coords
    if samples is None:
        samples = _odd_bundle_samples(coords, coords.q + 2 if L is None else L, size, seed)
    exprs = _obstruction_exprs(gamma)
    names = coords.names + tuple(tangent_names(coords, "vb_"))
    vals = compiled(exprs, names)(samples)
    return np.abs(vals).max(axis=(0, 2)) if len(vals) else np.zeros(0)


def odd_geodesic_flow(gamma: ChristoffelField, x: SuperPoint, vbar: TangentVector, tau: GrassmannNumber,
                      samples: np.ndarray | None = None, tol: float = 1e-10) -> tuple[SuperPoint, TangentVector]:
    """Straight odd line ``(x + tau vb, vb)``; requires a torsion-free connection."""
    if not vbar.odd:
        raise ParityError("odd geodesic flow needs an odd tangent vector")
    check_value_parity(tau, 1, "odd time")
    ok, res = is_torsion_free(gamma, samples, tol)
    if not ok:
        obstruction = float(odd_autocommutator_obstruction(gamma).max())
        raise TorsionError(f"[G', G'] does not vanish (obstruction {obstruction:.3e})", res)
    new = SuperPoint(x.coords, tuple(xi + tau * vi for xi, vi in zip(x.values, vbar.components)))
    return new, TangentVector(new, vbar.components, odd=True)

