"""Composite Gauss-Legendre quadrature on boxes."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


@lru_cache(maxsize=64)
def _reference_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def composite_rule(lo: float, hi: float, order: int = 16, cells: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on ``[lo, hi]``."""
    if order < 1 or cells < 1:
        raise ValueError("quadrature order and cell count must be positive")
    nodes, weights = _reference_rule(order)
    edges = np.linspace(lo, hi, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def integrate_box(
    f: Callable[..., np.ndarray],
    bounds: Sequence[tuple[float, float]],
    order: int = 16,
    cells: int = 8,
) -> float:
    """Integrate ``f`` over an axis-aligned box.

    ``f`` is called with one coordinate array per axis (broadcast as a
    tensor grid) and must return values of the broadcast shape.
    """
    rules = [composite_rule(lo, hi, order, cells) for lo, hi in bounds]
    if len(rules) == 1:
        x, w = rules[0]
        return float(np.dot(w, f(x)))
    if len(rules) == 2:
        (x, wx), (y, wy) = rules
        values = f(x[:, None], y[None, :])
        return float(wx @ values @ wy)
    raise ValueError("only 1-D and 2-D boxes are supported")
