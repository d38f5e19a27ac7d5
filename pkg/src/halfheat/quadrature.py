"""Quadrature against the weighted measure y^c dy on the half-line.

The weight is integrable but not smooth at y = 0 when c is not a
nonnegative integer, so the first panel uses Gauss-Jacobi nodes (which
absorb the y^c factor exactly) and the rest of the axis is covered by
adaptive QUADPACK panels.  Tensor grids for half-space integrals
combine these y-rules with Gauss-Legendre panels in x.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _sp

from .errors import DomainError, ParameterError

__all__ = [
    "jacobi_panel",
    "legendre_panel",
    "y_weighted_nodes",
    "integrate_y_weighted",
    "halfspace_nodes",
]


def jacobi_panel(upper: float, c: float, n: int = 32):
    """Nodes/weights integrating f(y) y^c dy exactly-for-polynomials on [0, upper].

    Gauss-Jacobi with weight (1+x)^c mapped from [-1, 1]; the returned
    weights already contain the y^c factor.
    """
    if not c + 1.0 > 0.0:
        raise ParameterError(f"weight exponent must satisfy c+1 > 0, got c={c}")
    if upper <= 0.0:
        raise DomainError("panel upper bound must be positive")
    x, w = _sp.roots_jacobi(n, 0.0, c)
    y = 0.5 * upper * (1.0 + x)
    wy = (0.5 * upper) ** (c + 1.0) * w
    return y, wy


def legendre_panel(a: float, b: float, n: int = 32):
    """Plain Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def y_weighted_nodes(c: float, upper: float, n_panel: int = 32,
                     split: float | None = None, growth: float = 2.0):
    """Composite rule for integrals of f(y) y^c dy over (0, upper].

    One Jacobi panel handles (0, split]; geometrically growing Legendre
    panels cover the rest, with the y^c weight folded into the weights.
    """
    if split is None:
        split = min(1.0, upper / 4.0)
    split = min(split, upper)
    ys, ws = jacobi_panel(split, c, n_panel)
    nodes = [ys]
    weights = [ws]
    a = split
    width = split
    while a < upper:
        b = min(a + width, upper)
        y, w = legendre_panel(a, b, n_panel)
        nodes.append(y)
        weights.append(w * y ** c)
        a = b
        width *= growth
    return np.concatenate(nodes), np.concatenate(weights)


def _jacobi_integral(f, c: float, upper: float, n: int) -> float:
    y, w = jacobi_panel(upper, c, n)
    try:
        v = np.asarray(f(y), dtype=float)
        if v.shape != y.shape:
            raise TypeError
    except (TypeError, ValueError):
        v = np.array([float(f(yi)) for yi in y])
    return float(np.dot(w, v))


def integrate_y_weighted(f, c: float, upper: float, rtol: float = 1e-10,
                         points=None) -> float:
    """Adaptive integral of f(y) y^c dy over (0, upper].

    The endpoint panel uses nested Gauss-Jacobi rules (open nodes, so f
    is never evaluated at y = 0) and shrinks geometrically until they
    agree to rtol; the smooth remainder goes to QUADPACK.
    """
    if not c + 1.0 > 0.0:
        raise ParameterError(f"weight exponent must satisfy c+1 > 0, got c={c}")
    if upper <= 0.0:
        raise DomainError("upper bound must be positive")
    delta = min(0.5, upper / 2.0)
    d = delta
    while True:
        coarse = _jacobi_integral(f, c, d, 24)
        fine = _jacobi_integral(f, c, d, 48)
        if abs(fine - coarse) <= rtol * max(abs(fine), 1e-300) or d <= 1e-13 * delta:
            head = fine
            break
        d /= 4.0
    pts = sorted({p for p in [*(points or []), delta] if d < p < upper})
    tail, _ = _integrate.quad(lambda y: f(y) * y ** c, d, upper,
                              epsabs=0.0, epsrel=rtol, limit=400,
                              points=pts or None)
    return head + tail


def halfspace_nodes(c: float, x_extent: float, y_extent: float,
                    n_x: int = 120, n_panel: int = 24, x_center: float = 0.0):
    """Tensor quadrature grid over [x0-Lx, x0+Lx] x (0, Ly] with weight y^c.

    Returns flat arrays (x, y, w) with w containing the full measure
    y^c dx dy.  Only N = 1 in x is supported here; the callers that need
    other dimensions integrate factorized forms instead.
    """
    xs, wxs = legendre_panel(x_center - x_extent, x_center + x_extent, n_x)
    ys, wys = y_weighted_nodes(c, y_extent, n_panel=n_panel)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(wxs, wys)
    return X.ravel(), Y.ravel(), W.ravel()
