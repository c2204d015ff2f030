"""Composite Gauss-Legendre quadrature with tail diagnostics.

All integration in the package funnels through these helpers so that node
placement and summation order are deterministic: nodes are generated in a
fixed order and reductions use numpy's pairwise summation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when an integral cannot be trusted (tail bound not met)."""


def gauss_legendre(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def panel_nodes(a: float, b: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule: `panels` uniform Gauss-Legendre panels on [a, b]."""
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def integrate(f, a: float, b: float, panels: int = 16, order: int = 12) -> float:
    """Integral of a vectorized callable on [a, b]."""
    x, w = panel_nodes(a, b, panels, order)
    return float(np.sum(w * f(x)))


def integrate_2d(f, ax, bx, ay, by, panels=(8, 8), order: int = 12) -> float:
    """Tensor-product panel rule for a vectorized f(X, Y) on a rectangle."""
    x, wx = panel_nodes(ax, bx, panels[0], order)
    y, wy = panel_nodes(ay, by, panels[1], order)
    X, Y = np.meshgrid(x, y, indexing="ij")
    return float(np.einsum("i,j,ij->", wx, wy, f(X, Y)))


def adaptive_interval(f, a: float, b: float, rel_tol: float = 1e-8,
                      order: int = 12, max_panels: int = 512) -> float:
    """Panel-doubling quadrature until successive refinements agree."""
    panels = 4
    prev = integrate(f, a, b, panels, order)
    while panels <= max_panels:
        panels *= 2
        cur = integrate(f, a, b, panels, order)
        if abs(cur - prev) <= rel_tol * (1.0 + abs(cur)):
            return cur
        prev = cur
    raise QuadratureError(
        f"interval quadrature did not converge to rel_tol={rel_tol} "
        f"within {max_panels} panels"
    )


@dataclass(frozen=True)
class TailEstimate:
    """Geometric-decay extrapolation of the truncated tail of a half-axis
    integral, fitted from the outermost composite panels."""

    value: float
    tail: float
    panel_sums: np.ndarray

    @property
    def decaying(self) -> bool:
        return np.isfinite(self.tail)


def tail_from_panels(panel_sums: np.ndarray, floor: float = 1e-280) -> float:
    """Tail bound from the magnitudes of the last two panels.

    Fits a geometric ratio q to the outermost panel integrals (nonnegative
    integrands) and returns m_last * q / (1 - q).  A non-decreasing panel
    sequence yields +inf, signalling a non-integrable orbit.
    """
    m = np.abs(np.asarray(panel_sums, dtype=float))
    if len(m) < 2:
        return np.inf
    return float(tail_from_panels_batch(m[None, :], floor=floor)[0])


def tail_from_panels_batch(panel_sums: np.ndarray, floor: float = 1e-280) -> np.ndarray:
    """Vectorized tail_from_panels over rows of an (M, panels) array."""
    m = np.abs(np.asarray(panel_sums, dtype=float))
    last = m[:, -1]
    prev = m[:, -2]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = last / prev
        tail = last * q / (1.0 - q)
    out = np.where(q >= 0.95, np.inf, tail)
    out = np.where(prev <= floor, np.inf, out)
    out = np.where(last <= floor, 0.0, out)
    return out
