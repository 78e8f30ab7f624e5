"""Central finite-difference helpers shared by the derivative-heavy modules."""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import comb

import numpy as np


@lru_cache(maxsize=None)
def central_weights(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Second-order accurate central stencil for the ``order``-th derivative.

    Returns integer offsets and weights (to be divided by ``step**order``).
    """
    if order == 0:
        return np.array([0]), np.array([1.0])
    half = (order + 1) // 2
    offsets = np.arange(-half, half + 1)
    n = offsets.size
    vander = np.vander(offsets.astype(float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    weights = np.linalg.solve(vander, rhs)
    weights[np.abs(weights) < 1e-14] = 0.0
    return offsets, weights


def partial(f, center, index: tuple[int, int], step: float, richardson: bool = True) -> float:
    """Mixed partial d^a/dx^a d^b/dy^b of a scalar function of a 2-point.

    Tensor product of 1D central stencils with one Richardson level, so the
    truncation error is O(step^4).
    """
    a, b = index

    def once(s: float) -> float:
        ox, wx = central_weights(a)
        oy, wy = central_weights(b)
        total = 0.0
        for (i, u), (j, v) in product(zip(ox, wx), zip(oy, wy)):
            if u == 0.0 or v == 0.0:
                continue
            total += u * v * f((center[0] + i * s, center[1] + j * s))
        return total / s ** (a + b)

    if a + b == 0:
        return float(f((center[0], center[1])))
    coarse = once(step)
    if not richardson:
        return coarse
    fine = once(step / 2)
    return (4.0 * fine - coarse) / 3.0


def multi_indices(order: int):
    """All (a, b) with a + b == order, ordered by increasing b."""
    return [(order - k, k) for k in range(order + 1)]


def taylor_from_jet(jet: dict[tuple[int, int], float], max_order: int) -> dict[tuple[int, int], float]:
    """Monomial coefficients sum_{a+b<=n} D^(a,b) f / (a! b!)."""
    out = {}
    for n in range(max_order + 1):
        for a, b in multi_indices(n):
            out[(a, b)] = jet[(a, b)] / (float(np.prod(np.arange(1, a + 1))) * float(np.prod(np.arange(1, b + 1))))
    return out


def symmetric_tensor_contraction(jet_order: dict[tuple[int, int], float], order: int) -> np.ndarray:
    """Coefficients c_k of x^(d-k) y^k in <D^d f, xi, ..., xi>."""
    return np.array([comb(order, k) * jet_order[(order - k, k)] for k in range(order + 1)])
