"""Shared quadrature machinery: Gauss-Legendre panels, dyadically graded
panelizations toward singular points, and an adaptive Simpson primitive.

All routines are pure; reductions use numpy's pairwise summation so that
results are reproducible regardless of how batteries are parallelised.
"""

from __future__ import annotations

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_rule(a: float, b: float, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [a, b]."""
    x, w = gauss_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def panels_rule(edges: np.ndarray, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule over consecutive panels given by edges."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(n)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halfs = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mids[:, None] + halfs[:, None] * x[None, :]).ravel()
    weights = (halfs[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_edges(a: float, b: float, toward: str = "left",
                 ratio: float = 0.5, levels: int = 40) -> np.ndarray:
    """Panel edges on [a, b] graded dyadically toward one endpoint.

    With ratio 1/2 and L levels the panels nearest the endpoint have length
    (b-a) * ratio**L; the panel count is levels + 1.
    """
    if b <= a:
        raise ValueError("graded_edges needs b > a")
    fracs = ratio ** np.arange(levels, -1, -1.0)
    fracs = np.concatenate(([0.0], fracs))
    if toward == "left":
        return a + (b - a) * fracs
    if toward == "right":
        return b - (b - a) * fracs[::-1]
    raise ValueError(f"unknown grading direction {toward!r}")


def graded_panels(a: float, b: float, toward: str = "left", ratio: float = 0.5,
                  levels: int = 40, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite GL rule on [a, b] with dyadic grading toward an endpoint."""
    return panels_rule(graded_edges(a, b, toward, ratio, levels), n)


def singular_interval_rule(lo: float, hi: float, sing: float,
                           cutoff: float = 0.0, levels: int = 40,
                           n: int = 16, splits=()) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on [lo, hi] minus a cutoff neighbourhood of a singular point.

    Integrates over {y in [lo, hi] : |y - sing| >= cutoff} with panels graded
    dyadically toward the excluded point on both sides.  cutoff = 0 grades all
    the way down (usable for integrable singularities).  Extra panel edges are
    inserted at the split abscissae (coefficient jumps and the like).
    """
    nodes, weights = [], []

    def one_side(a, b, toward):
        gap = b - a
        lev = levels if cutoff == 0.0 else min(
            levels, max(4, int(np.ceil(np.log2(max(gap / max(cutoff, 1e-300),
                                                   2.0))))))
        edges = graded_edges(a, b, toward=toward, levels=lev)
        cuts = [s for s in splits if a < s < b]
        if cuts:
            edges = np.unique(np.concatenate([edges, np.asarray(cuts)]))
        xs, ws = panels_rule(edges, n)
        nodes.append(xs)
        weights.append(ws)

    left_hi = min(hi, sing - cutoff)
    if left_hi > lo:
        one_side(lo, left_hi, "right")
    right_lo = max(lo, sing + cutoff)
    if hi > right_lo:
        one_side(right_lo, hi, "left")
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-12,
                     max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature of a scalar callable on [a, b]."""
    def simp(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simp(fa, flm, fm, a, m)
        right = simp(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, depth - 1)
                + rec(m, b, fm, frm, fb, right, depth - 1))

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return rec(a, b, fa, fm, fb, simp(fa, fm, fb, a, b), max_depth)


def primitive(f, anchor: float = 0.0, tol: float = 1e-12,
              breakpoints: tuple[float, ...] = ()) -> "Primitive":
    """Antiderivative of f anchored to zero at `anchor`.

    Integration is split at the listed breakpoints so that piecewise-smooth
    integrands keep full adaptive-Simpson accuracy.
    """
    return Primitive(f, anchor, tol, tuple(sorted(breakpoints)))


class Primitive:
    """Callable antiderivative built on adaptive Simpson, with memoised
    checkpoints so repeated evaluation stays cheap."""

    def __init__(self, f, anchor, tol, breakpoints):
        self.f = f
        self.anchor = float(anchor)
        self.tol = tol
        self.breakpoints = breakpoints
        self._cache: dict[float, float] = {anchor: 0.0}

    def _segment(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        sign = 1.0
        if b < a:
            a, b, sign = b, a, -1.0
        cuts = [a] + [p for p in self.breakpoints if a < p < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += adaptive_simpson(self.f, lo, hi, tol=self.tol)
        return sign * total

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            key = round(float(xi), 14)
            if key not in self._cache:
                # integrate from the nearest cached checkpoint
                base = min(self._cache, key=lambda c: abs(c - xi))
                self._cache[key] = self._cache[base] + self._segment(base, float(xi))
            out[i] = self._cache[key]
        return out[0] if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def fit_power(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares fit y ~ C * x**p on log-log axes; returns (p, C)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0)
    lx, ly = np.log(x[mask]), np.log(y[mask])
    p, logc = np.polyfit(lx, ly, 1)
    return float(p), float(np.exp(logc))
