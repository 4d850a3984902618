"""Reference implementations kept deliberately naive and independent of the
package internals.  Tests compare the package against these."""

from __future__ import annotations

import itertools
import math

import numpy as np


def reorder_sign(left: tuple[int, ...], right: tuple[int, ...]) -> int:
    """Sign of sorting the concatenated generator word ``left + right``."""
    word = list(left) + list(right)
    swaps = 0
    for a, b in itertools.combinations(range(len(word)), 2):
        if word[a] > word[b]:
            swaps += 1
    return -1 if swaps % 2 else 1


def subsets(L: int) -> list[tuple[int, ...]]:
    """All generator subsets; position ``m`` holds the subset with bitmask ``m``."""
    return [tuple(k + 1 for k in range(L) if m >> k & 1) for m in range(1 << L)]


def naive_mul(a, b, L: int) -> np.ndarray:
    """Product of two dense coefficient arrays by explicit word reordering."""
    words = subsets(L)
    out = np.zeros(1 << L)
    for ma, ca in enumerate(a):
        if ca == 0.0:
            continue
        for mb, cb in enumerate(b):
            if cb == 0.0 or ma & mb:
                continue
            out[ma | mb] += reorder_sign(words[ma], words[mb]) * ca * cb
    return out


def naive_smooth(derivs, a, L: int) -> np.ndarray:
    """``f(a)`` by the Taylor series of ``f`` at the body of ``a``."""
    body = a[0]
    nil = np.array(a, dtype=float)
    nil[0] = 0.0
    out = np.zeros(1 << L)
    power = np.zeros(1 << L)
    power[0] = 1.0
    for k in range(L + 1):
        out += derivs[k](body) / math.factorial(k) * power
        power = naive_mul(power, nil, L)
    return out


def naive_inverse(a, L: int) -> np.ndarray:
    derivs = [lambda x, k=k: (-1) ** k * math.factorial(k) / x ** (k + 1) for k in range(L + 1)]
    return naive_smooth(derivs, a, L)
