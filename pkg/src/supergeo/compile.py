"""Compilation of expression DAGs into a flat tape run by a numba kernel.

A :class:`Program` evaluates several expressions at once over a batch of
Grassmann-valued points.  Values are dense coefficient arrays of length
``2**L`` (bitmask indexed, as in :mod:`supergeo.grassmann`).  Registers are
reused after their last use so memory stays proportional to the live set
rather than the tape length.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numba
import numpy as np

from .errors import EvaluationError
from .grassmann import GrassmannNumber, tables
from .superexpr import Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Var

__all__ = ["Program", "compiled"]

OP_CONST, OP_ADD, OP_SUB, OP_MUL, OP_NEG, OP_DIV, OP_POW = 0, 1, 2, 3, 4, 5, 6
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SCALE, OP_COPY = 7, 8, 9, 10, 11, 12
_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG}

STATUS_OK, STATUS_DIV, STATUS_LOG = 0, 1, 2


@numba.njit(cache=True)
def _mul_into(out, x, y, I, J, K, S):
    out[:] = 0.0
    for p in range(I.shape[0]):
        out[K[p]] += S[p] * x[I[p]] * y[J[p]]


@numba.njit(cache=True)
def _series(out, a, coeffs, I, J, K, S, work, power):
    # out = sum_k coeffs[k] * s^k with s the nilpotent part of a
    n = a.shape[0]
    for m in range(n):
        out[m] = 0.0
    out[0] = coeffs[0]
    for m in range(n):
        power[m] = a[m]
    power[0] = 0.0
    s = power.copy()
    for k in range(1, coeffs.shape[0]):
        nz = False
        for m in range(n):
            if power[m] != 0.0:
                nz = True
                break
        if not nz:
            break
        for m in range(n):
            out[m] += coeffs[k] * power[m]
        _mul_into(work, power, s, I, J, K, S)
        power[:] = work


@numba.njit(cache=True)
def _run(code, consts, regs, I, J, K, S, L, status):
    B = regs.shape[1]
    n = regs.shape[2]
    work = np.empty(n)
    power = np.empty(n)
    tmp = np.empty(n)
    coeffs = np.empty(L + 1)
    for t in range(code.shape[0]):
        op = code[t, 0]
        dst = code[t, 1]
        a = code[t, 2]
        b = code[t, 3]
        k = code[t, 4]
        c = consts[t]
        for r in range(B):
            if op == OP_CONST:
                regs[dst, r, :] = 0.0
                regs[dst, r, 0] = c
            elif op == OP_COPY:
                regs[dst, r, :] = regs[a, r, :]
            elif op == OP_ADD:
                regs[dst, r, :] = regs[a, r, :] + regs[b, r, :]
            elif op == OP_SUB:
                regs[dst, r, :] = regs[a, r, :] - regs[b, r, :]
            elif op == OP_NEG:
                regs[dst, r, :] = -regs[a, r, :]
            elif op == OP_SCALE:
                regs[dst, r, :] = c * regs[a, r, :]
            elif op == OP_MUL:
                _mul_into(tmp, regs[a, r], regs[b, r], I, J, K, S)
                regs[dst, r, :] = tmp
            elif op == OP_POW:
                tmp[:] = regs[a, r, :]
                for _ in range(k - 1):
                    _mul_into(work, tmp, regs[a, r], I, J, K, S)
                    tmp[:] = work
                regs[dst, r, :] = tmp
            elif op == OP_DIV:
                b0 = regs[b, r, 0]
                if b0 == 0.0:
                    status[r] = STATUS_DIV
                    regs[dst, r, :] = np.nan
                    continue
                x = 1.0 / b0
                for m in range(L + 1):
                    coeffs[m] = x
                    x = -x / b0
                _series(tmp, regs[b, r], coeffs, I, J, K, S, work, power)
                _mul_into(work, regs[a, r], tmp, I, J, K, S)
                regs[dst, r, :] = work
            else:
                a0 = regs[a, r, 0]
                fact = 1.0
                if op == OP_EXP:
                    e = np.exp(a0)
                    for m in range(L + 1):
                        coeffs[m] = e / fact
                        fact *= m + 1
                elif op == OP_SIN or op == OP_COS:
                    sa = np.sin(a0)
                    ca = np.cos(a0)
                    shift = 0 if op == OP_SIN else 1
                    for m in range(L + 1):
                        j = (m + shift) % 4
                        if j == 0:
                            v = sa
                        elif j == 1:
                            v = ca
                        elif j == 2:
                            v = -sa
                        else:
                            v = -ca
                        coeffs[m] = v / fact
                        fact *= m + 1
                else:
                    if a0 <= 0.0:
                        status[r] = STATUS_LOG
                        regs[dst, r, :] = np.nan
                        continue
                    coeffs[0] = np.log(a0)
                    for m in range(1, L + 1):
                        coeffs[m] = (-1.0) ** (m - 1) / (m * a0**m)
                _series(tmp, regs[a, r], coeffs, I, J, K, S, work, power)
                regs[dst, r, :] = tmp


class Program:
    """Tape for a list of output expressions over named input coordinates.

    ``program(X)`` with ``X`` of shape ``(B, len(inputs), 2**L)`` returns an
    array of shape ``(B, len(outputs), 2**L)``.
    """

    def __init__(self, outputs: Sequence[Expr], inputs: Sequence[str]):
        self.outputs = list(outputs)
        self.inputs = list(inputs)
        index = {name: i for i, name in enumerate(self.inputs)}

        order: list[Expr] = []
        seen: set[int] = set()
        for out in self.outputs:
            stack = [(out, False)]
            while stack:
                node, expanded = stack.pop()
                if id(node) in seen:
                    continue
                if expanded or not node.children:
                    seen.add(id(node))
                    order.append(node)
                else:
                    stack.append((node, True))
                    stack.extend((c, False) for c in reversed(node.children) if id(c) not in seen)

        # last use position of every node (outputs live to the end)
        last_use: dict[int, int] = {}
        for pos, node in enumerate(order):
            for ch in node.children:
                last_use[id(ch)] = pos
        for out in self.outputs:
            last_use[id(out)] = len(order)

        n_in = len(self.inputs)
        reg_of: dict[int, int] = {}
        free: list[int] = []
        next_reg = n_in
        rows: list[tuple[int, int, int, int, int]] = []
        consts: list[float] = []

        def alloc():
            nonlocal next_reg
            if free:
                return free.pop()
            next_reg += 1
            return next_reg - 1

        for pos, node in enumerate(order):
            if isinstance(node, Var):
                if node.name not in index:
                    raise KeyError(f"expression uses coordinate {node.name!r} not among inputs {self.inputs}")
                reg_of[id(node)] = index[node.name]
                continue
            args = [reg_of[id(c)] for c in node.children]
            dst = alloc()
            row = [0, dst, 0, 0, 0]
            cval = 0.0
            if isinstance(node, Const):
                row[0] = OP_CONST
                cval = node.value
            elif isinstance(node, Neg):
                row[0], row[2] = OP_NEG, args[0]
            elif isinstance(node, Add):
                row[0], row[2], row[3] = OP_ADD, args[0], args[1]
            elif isinstance(node, Sub):
                row[0], row[2], row[3] = OP_SUB, args[0], args[1]
            elif isinstance(node, Mul):
                left, right = node.children
                if isinstance(left, Const):
                    row[0], row[2], cval = OP_SCALE, args[1], left.value
                elif isinstance(right, Const):
                    row[0], row[2], cval = OP_SCALE, args[0], right.value
                else:
                    row[0], row[2], row[3] = OP_MUL, args[0], args[1]
            elif isinstance(node, Div):
                row[0], row[2], row[3] = OP_DIV, args[0], args[1]
            elif isinstance(node, Pow):
                row[0], row[2], row[4] = OP_POW, args[0], node.exponent
            elif isinstance(node, Func):
                row[0], row[2] = _FUNC_OPS[node.name], args[0]
            rows.append(tuple(row))
            consts.append(cval)
            reg_of[id(node)] = dst
            for ch in set(node.children):
                if isinstance(ch, Var):
                    continue
                if last_use.get(id(ch)) == pos:
                    free.append(reg_of[id(ch)])

        self.n_registers = max(next_reg, 1)
        self.code = np.array(rows, dtype=np.int64).reshape(-1, 5)
        self.consts = np.array(consts, dtype=np.float64)
        self.output_regs = np.array([reg_of[id(o)] for o in self.outputs], dtype=np.int64)
        self._keepalive = order

    def __len__(self):
        return self.code.shape[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != len(self.inputs):
            raise ValueError(f"expected shape (B, {len(self.inputs)}, 2**L), got {X.shape}")
        B, _, N = X.shape
        L = N.bit_length() - 1
        if N != 1 << L:
            raise ValueError("last axis must have length 2**L")
        t = tables(L)
        regs = np.zeros((self.n_registers, B, N))
        regs[: len(self.inputs)] = X.transpose(1, 0, 2)
        status = np.zeros(B, dtype=np.int64)
        if len(self.code):
            _run(self.code, self.consts, regs, t.I, t.J, t.K, t.S.astype(np.float64), L, status)
        if status.any():
            bad = int(np.flatnonzero(status)[0])
            what = "non-invertible denominator" if status[bad] == STATUS_DIV else "log of non-positive body"
            raise EvaluationError(f"{what} at batch sample {bad}")
        return regs[self.output_regs].transpose(1, 0, 2).copy()

    def evaluate_point(self, point: Mapping[str, GrassmannNumber], num_generators: int | None = None) -> list[GrassmannNumber]:
        if num_generators is None:
            num_generators = next(iter(point.values())).num_generators
        X = np.stack([point[name].with_generators(num_generators).array for name in self.inputs])[None] if self.inputs else np.zeros((1, 0, 1 << num_generators))
        Y = self(X)[0]
        return [GrassmannNumber(num_generators, row) for row in Y]


_CACHE: "dict[tuple, Program]" = {}
_CACHE_LIMIT = 512


def compiled(outputs: Sequence[Expr], inputs: Sequence[str]) -> Program:
    """Program for ``outputs`` over ``inputs``, memoised on node identity."""
    key = (tuple(id(e) for e in outputs), tuple(inputs))
    prog = _CACHE.get(key)
    if prog is None:
        prog = Program(outputs, inputs)
        if len(_CACHE) >= _CACHE_LIMIT:
            _CACHE.pop(next(iter(_CACHE)))
        _CACHE[key] = prog
    return prog
