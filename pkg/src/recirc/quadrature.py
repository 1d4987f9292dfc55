"""Quadrature rules and P1/P2 shape functions in barycentric coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points in barycentric coordinates, weights normalised to sum to 1.

    Multiply the weights by the cell measure (triangle area or edge length)
    to integrate.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _radon7() -> QuadratureRule:
    # 7-point symmetric rule, exact for degree 5
    s = np.sqrt(15.0)
    a1 = (6.0 - s) / 21.0
    a2 = (6.0 + s) / 21.0
    w1 = (155.0 - s) / 1200.0
    w2 = (155.0 + s) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    return QuadratureRule(np.array(pts), np.array(wts), 5)


def gauss_edge_rule(n: int = 6) -> QuadratureRule:
    """Gauss-Legendre on an edge; points are ``(1 - s, s)`` pairs, degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    return QuadratureRule(np.column_stack([1.0 - s, s]), 0.5 * w, 2 * n - 1)


TRIANGLE_RULE = _radon7()
EDGE_RULE = gauss_edge_rule(6)


def p2_values(lam: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points ``lam[..., 3]`` -> ``[..., 6]``.

    Order: vertices 0, 1, 2, then edge nodes opposite vertex 0, 1, 2.
    """
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)


def p2_dlam(lam: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 shape functions w.r.t. the barycentrics, ``[..., 6, 3]``."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    z = np.zeros_like(l0)
    rows = [
        (4 * l0 - 1, z, z),
        (z, 4 * l1 - 1, z),
        (z, z, 4 * l2 - 1),
        (z, 4 * l2, 4 * l1),
        (4 * l2, z, 4 * l0),
        (4 * l1, 4 * l0, z),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def p2_edge_values(s_pts: np.ndarray) -> np.ndarray:
    """1D quadratic trace basis on an edge for points ``(1 - s, s)``: start, end, midpoint."""
    a, b = s_pts[..., 0], s_pts[..., 1]
    return np.stack([a * (2 * a - 1), b * (2 * b - 1), 4 * a * b], axis=-1)
