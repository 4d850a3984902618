"""Exact arithmetic in the truncated Grassmann algebra over L odd generators.

An element is stored densely as a float array of length ``2**L`` indexed by
bitmask: bit ``k-1`` set means generator ``t_k`` is present in the monomial.
The array kernels (``mul_arrays`` and friends) accept arbitrary leading batch
dimensions and are what the numeric layers build on; :class:`GrassmannNumber`
is the immutable scalar wrapper used by the public API.
"""

from __future__ import annotations

import enum
import math
import re
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import GeneratorMismatchError, NonInvertibleError, ParityError, ParseError

__all__ = [
    "Parity",
    "GrassmannTables",
    "tables",
    "mul_arrays",
    "inverse_arrays",
    "conjugate_arrays",
    "GrassmannNumber",
    "gr_add",
    "gr_mul",
    "gr_body",
    "gr_conjugate",
    "gr_inverse",
    "gr_apply_smooth",
    "gr_norm_max",
    "parse_grassmann",
    "subset_label",
    "parse_subset_label",
    "mask_to_indices",
    "indices_to_mask",
]


class Parity(enum.Enum):
    EVEN = 0
    ODD = 1
    INHOMOGENEOUS = 2

    def __mul__(self, other):
        if not isinstance(other, Parity):
            return NotImplemented
        if Parity.INHOMOGENEOUS in (self, other):
            return Parity.INHOMOGENEOUS
        return Parity((self.value + other.value) % 2)

    @classmethod
    def of_bit(cls, bit: int) -> "Parity":
        return cls.ODD if bit % 2 else cls.EVEN


def mask_to_indices(mask: int) -> tuple[int, ...]:
    """1-based generator indices of a bitmask, increasing."""
    out = []
    k = 1
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def indices_to_mask(indices: Iterable[int]) -> tuple[int, int]:
    """Bitmask and reordering sign of the product t_{i1} t_{i2} ... .

    Returns ``(mask, sign)``; a repeated index gives sign 0.
    """
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, 0
    # parity of the sorting permutation
    inversions = sum(1 for a in range(len(idx)) for b in range(a + 1, len(idx)) if idx[a] > idx[b])
    mask = 0
    for i in idx:
        if i < 1:
            raise ValueError(f"generator index must be >= 1, got {i}")
        mask |= 1 << (i - 1)
    return mask, (-1 if inversions % 2 else 1)


def _reorder_sign(a: int, b: int) -> int:
    """Sign of sorting the concatenation (subset a)||(subset b), a & b == 0."""
    swaps = 0
    while b:
        low = b & -b
        # generators of a sitting above this generator of b must hop over it
        swaps += bin(a & ~((low << 1) - 1)).count("1")
        b ^= low
    return -1 if swaps % 2 else 1


class GrassmannTables:
    """Precomputed multiplication structure of Λ(R^L)."""

    def __init__(self, L: int):
        if L < 0:
            raise ValueError("number of generators must be >= 0")
        self.L = L
        self.N = N = 1 << L
        rows = []
        for k in range(N):
            sub = k
            while True:
                i, j = sub, k ^ sub
                rows.append((k, i, j, _reorder_sign(i, j)))
                if sub == 0:
                    break
                sub = (sub - 1) & k
        rows.sort()
        arr = np.array(rows, dtype=np.int64)
        self.K = arr[:, 0].copy()
        self.I = arr[:, 1].copy()
        self.J = arr[:, 2].copy()
        self.S = arr[:, 3].astype(np.float64)
        self.starts = np.searchsorted(self.K, np.arange(N))
        self.popcount = np.array([bin(m).count("1") for m in range(N)], dtype=np.int64)
        self.odd = (self.popcount % 2).astype(bool)
        self.conj_sign = np.where(self.odd, -1.0, 1.0)


@lru_cache(maxsize=None)
def tables(L: int) -> GrassmannTables:
    return GrassmannTables(L)


def mul_arrays(a: np.ndarray, b: np.ndarray, L: int) -> np.ndarray:
    """Wedge product of coefficient arrays with broadcasting over leading axes."""
    t = tables(L)
    prod = a[..., t.I] * b[..., t.J]
    prod *= t.S
    return np.add.reduceat(prod, t.starts, axis=-1)


def conjugate_arrays(a: np.ndarray, L: int) -> np.ndarray:
    return a * tables(L).conj_sign


def inverse_arrays(a: np.ndarray, L: int) -> np.ndarray:
    """Inverse by the finite geometric series in the nilpotent part."""
    body = a[..., :1]
    if np.any(body == 0.0):
        raise NonInvertibleError("non-invertible Grassmann element")
    x = -a / body
    x[..., 0] = 0.0
    total = np.zeros_like(a)
    total[..., 0] = 1.0
    term = total.copy()
    for _ in range(L):
        term = mul_arrays(term, x, L)
        if not term.any():
            break
        total += term
    return total / body


class GrassmannNumber:
    """Immutable element of Λ(R^L).

    ``coefficients`` may be a mapping ``bitmask -> float`` or a dense array of
    length ``2**L``.  Equality is exact coefficient equality.
    """

    __slots__ = ("_L", "_c")

    def __init__(self, num_generators: int, coefficients=None):
        L = int(num_generators)
        N = 1 << L
        if coefficients is None:
            c = np.zeros(N)
        elif isinstance(coefficients, Mapping):
            c = np.zeros(N)
            for mask, value in coefficients.items():
                mask = int(mask)
                if mask < 0 or mask >= N:
                    raise ValueError(f"subset {mask_to_indices(mask)} uses generators beyond t{L}")
                c[mask] += float(value)
        else:
            c = np.array(coefficients, dtype=np.float64)
            if c.shape != (N,):
                raise ValueError(f"expected {N} coefficients for L={L}, got shape {c.shape}")
        c = c + 0.0  # normalise -0.0
        c.setflags(write=False)
        self._L = L
        self._c = c

    # -- constructors -------------------------------------------------------

    @classmethod
    def scalar(cls, value: float, num_generators: int) -> "GrassmannNumber":
        return cls(num_generators, {0: value})

    @classmethod
    def generator(cls, index: int, num_generators: int) -> "GrassmannNumber":
        if not 1 <= index <= num_generators:
            raise ValueError(f"generator t{index} not in t1..t{num_generators}")
        return cls(num_generators, {1 << (index - 1): 1.0})

    @classmethod
    def monomial(cls, indices: Sequence[int], num_generators: int, coefficient: float = 1.0) -> "GrassmannNumber":
        mask, sign = indices_to_mask(indices)
        if mask >= 1 << num_generators:
            raise ValueError("monomial uses generators beyond the algebra")
        return cls(num_generators, {mask: sign * coefficient})

    @classmethod
    def _wrap(cls, L: int, array: np.ndarray) -> "GrassmannNumber":
        obj = cls.__new__(cls)
        array = array + 0.0
        array.setflags(write=False)
        obj._L = L
        obj._c = array
        return obj

    # -- accessors ----------------------------------------------------------

    @property
    def num_generators(self) -> int:
        return self._L

    @property
    def array(self) -> np.ndarray:
        """Read-only dense coefficient array."""
        return self._c

    @property
    def coefficients(self) -> dict[int, float]:
        """Nonzero coefficients keyed by bitmask, in increasing mask order."""
        nz = np.flatnonzero(self._c)
        return {int(m): float(self._c[m]) for m in nz}

    def __getitem__(self, mask: int) -> float:
        return float(self._c[mask])

    def body(self) -> float:
        return float(self._c[0])

    def soul(self) -> "GrassmannNumber":
        c = self._c.copy()
        c[0] = 0.0
        return GrassmannNumber._wrap(self._L, c)

    def parity(self) -> Parity:
        nz = self._c != 0.0
        t = tables(self._L)
        has_odd = bool(np.any(nz & t.odd))
        has_even = bool(np.any(nz & ~t.odd))
        if has_odd and has_even:
            return Parity.INHOMOGENEOUS
        return Parity.ODD if has_odd else Parity.EVEN

    def even_part(self) -> "GrassmannNumber":
        return GrassmannNumber._wrap(self._L, np.where(tables(self._L).odd, 0.0, self._c))

    def odd_part(self) -> "GrassmannNumber":
        return GrassmannNumber._wrap(self._L, np.where(tables(self._L).odd, self._c, 0.0))

    def is_zero(self) -> bool:
        return not self._c.any()

    def norm_max(self) -> float:
        return float(np.max(np.abs(self._c))) if self._c.size else 0.0

    def with_generators(self, num_generators: int) -> "GrassmannNumber":
        """Embed into (or truncate to) an algebra with a different L."""
        N = 1 << num_generators
        c = np.zeros(N)
        m = min(N, self._c.size)
        c[:m] = self._c[:m]
        if self._c[m:].any():
            raise ValueError("truncation would drop nonzero coefficients")
        return GrassmannNumber._wrap(num_generators, c)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> np.ndarray | None:
        if isinstance(other, GrassmannNumber):
            if other._L != self._L:
                raise GeneratorMismatchError(
                    f"generator-count mismatch: {self._L} vs {other._L}"
                )
            return other._c
        if isinstance(other, (int, float, np.integer, np.floating)):
            c = np.zeros_like(self._c)
            c[0] = float(other)
            return c
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return GrassmannNumber._wrap(self._L, self._c + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return GrassmannNumber._wrap(self._L, self._c - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return GrassmannNumber._wrap(self._L, o - self._c)

    def __neg__(self):
        return GrassmannNumber._wrap(self._L, -self._c)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            return GrassmannNumber._wrap(self._L, self._c * float(other))
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return GrassmannNumber._wrap(self._L, mul_arrays(self._c, o, self._L))

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            return GrassmannNumber._wrap(self._L, self._c * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            if other == 0:
                raise NonInvertibleError("non-invertible Grassmann element")
            return GrassmannNumber._wrap(self._L, self._c / float(other))
        if isinstance(other, GrassmannNumber):
            return self * other.inverse()
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            return self.inverse() * float(other)
        return NotImplemented

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = GrassmannNumber.scalar(1.0, self._L)
        for _ in range(int(k)):
            result = result * self
        return result

    def inverse(self) -> "GrassmannNumber":
        return GrassmannNumber._wrap(self._L, inverse_arrays(self._c.copy(), self._L))

    def conjugate(self) -> "GrassmannNumber":
        return GrassmannNumber._wrap(self._L, conjugate_arrays(self._c, self._L))

    def apply_smooth(self, f_derivs: Sequence[Callable[[float], float]]) -> "GrassmannNumber":
        """Extend a smooth real function to this even element by Taylor series.

        ``f_derivs[k]`` is the k-th derivative; the series is exact because the
        nilpotent part n satisfies n**(L//2 + 1) == 0.
        """
        if self.parity() is not Parity.EVEN:
            raise ParityError("smooth functions apply to even Grassmann elements only")
        b = self.body()
        n = self.soul()
        result = np.zeros_like(self._c)
        power = GrassmannNumber.scalar(1.0, self._L)
        k = 0
        while not power.is_zero():
            if k >= len(f_derivs):
                raise ValueError(f"derivative of order {k} needed for L={self._L}")
            result = result + f_derivs[k](b) / math.factorial(k) * power._c
            power = power * n
            k += 1
        return GrassmannNumber._wrap(self._L, result)

    # -- comparison / hashing -----------------------------------------------

    def __eq__(self, other):
        if isinstance(other, GrassmannNumber):
            return self._L == other._L and bool(np.array_equal(self._c, other._c))
        if isinstance(other, (int, float)):
            return self._c[0] == other and not self._c[1:].any()
        return NotImplemented

    def __hash__(self):
        return hash((self._L, self._c.tobytes()))

    def isclose(self, other, tol: float = 1e-12) -> bool:
        return (self - other).norm_max() <= tol

    # -- text ---------------------------------------------------------------

    def __str__(self):
        terms = []
        for mask, value in self.coefficients.items():
            mono = "^".join(f"t{i}" for i in mask_to_indices(mask))
            terms.append((value, mono))
        if not terms:
            return "0.0"
        out = []
        for n, (value, mono) in enumerate(terms):
            mag = repr(abs(value)) if n else repr(value)
            text = f"{mag}*{mono}" if mono else mag
            if n == 0:
                out.append(text)
            else:
                out.append(("- " if value < 0 else "+ ") + text)
        return " ".join(out)

    def __repr__(self):
        return f"GrassmannNumber(L={self._L}, {self})"


# Module-level functional aliases -------------------------------------------------


def gr_add(a: GrassmannNumber, b: GrassmannNumber) -> GrassmannNumber:
    return a + b


def gr_mul(a: GrassmannNumber, b: GrassmannNumber) -> GrassmannNumber:
    return a * b


def gr_body(a: GrassmannNumber) -> float:
    return a.body()


def gr_conjugate(a: GrassmannNumber) -> GrassmannNumber:
    return a.conjugate()


def gr_inverse(a: GrassmannNumber) -> GrassmannNumber:
    return a.inverse()


def gr_apply_smooth(f_derivs, a: GrassmannNumber) -> GrassmannNumber:
    return a.apply_smooth(f_derivs)


def gr_norm_max(a: GrassmannNumber) -> float:
    return a.norm_max()


# Text round trip -----------------------------------------------------------------

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf|nan"
_TERM = re.compile(
    rf"\s*(?P<sign>[+-])?\s*(?:(?P<coef>{_NUM})\s*(?P<star>\*)?)?\s*(?P<mono>t\d+(?:\s*\^\s*t\d+)*)?\s*"
)


def parse_grassmann(text: str, num_generators: int | None = None) -> GrassmannNumber:
    """Parse the rendering produced by ``str(GrassmannNumber)``.

    Accepts e.g. ``"3.0 - 2.0*t1 + 0.5*t1^t2"``; products written out of order
    pick up the reordering sign.  If ``num_generators`` is omitted the largest
    generator index present is used.
    """
    pos = 0
    terms: list[tuple[tuple[int, ...], float]] = []
    text = text.strip()
    if not text:
        raise ParseError("empty Grassmann literal", 0)
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos or (m.group("coef") is None and m.group("mono") is None):
            raise ParseError(f"cannot parse Grassmann literal {text!r}", pos)
        if terms and m.group("sign") is None:
            raise ParseError("missing '+' or '-' between terms", pos)
        if m.group("star") and not m.group("mono"):
            raise ParseError("'*' must be followed by a generator product", m.end())
        coef = float(m.group("coef")) if m.group("coef") is not None else 1.0
        if m.group("sign") == "-":
            coef = -coef
        mono = ()
        if m.group("mono"):
            mono = tuple(int(g) for g in re.findall(r"t(\d+)", m.group("mono")))
        terms.append((mono, coef))
        pos = m.end()
    L = num_generators
    if L is None:
        L = max((max(mono) for mono, _ in terms if mono), default=0)
    coeffs: dict[int, float] = {}
    for mono, coef in terms:
        mask, sign = indices_to_mask(mono)
        if mask >= 1 << L:
            raise ParseError(f"generator beyond t{L} in {text!r}")
        if sign:
            coeffs[mask] = coeffs.get(mask, 0.0) + sign * coef
    return GrassmannNumber(L, coeffs)


def subset_label(mask: int, num_generators: int) -> str:
    """Compact subset label: ``body`` for the empty set, ``12`` for {1,2}.

    With more than nine generators indices are joined by ``:``.
    """
    if mask == 0:
        return "body"
    idx = mask_to_indices(mask)
    if num_generators <= 9:
        return "".join(str(i) for i in idx)
    return ":".join(str(i) for i in idx)


def parse_subset_label(label: str) -> int:
    label = label.strip()
    if label in ("body", ""):
        return 0
    if ":" in label:
        parts = [int(p) for p in label.split(":") if p]
    else:
        parts = [int(ch) for ch in label]
    mask, sign = indices_to_mask(parts)
    if sign != 1:
        raise ParseError(f"subset label {label!r} must list distinct generators in increasing order")
    return mask


def parse_coefficient_literal(text: str, num_generators: int) -> GrassmannNumber:
    """Parse the CLI form ``1.0@body,0.5@12`` into a Grassmann number."""
    coeffs: dict[int, float] = {}
    text = text.strip()
    if not text:
        return GrassmannNumber(num_generators)
    for item in text.split(","):
        item = item.strip()
        if "@" in item:
            value, label = item.split("@", 1)
        else:
            value, label = item, "body"
        try:
            v = float(value)
        except ValueError:
            raise ParseError(f"bad coefficient {value!r} in {text!r}") from None
        mask = parse_subset_label(label)
        if mask >= 1 << num_generators:
            raise ParseError(f"subset {label!r} exceeds t{num_generators}")
        coeffs[mask] = coeffs.get(mask, 0.0) + v
    return GrassmannNumber(num_generators, coeffs)
