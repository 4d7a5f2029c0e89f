"""Harmonic-analysis functionals on the boundary and on the domain:
non-tangential maximal functions, square function, Hardy-Littlewood maximal
operator, Hilbert transform, BMO norm, atoms, tent functionals, and the
solvability-constant sweeps.

Boundary functions carry their own quadrature weights (including the
surface-measure weight), so every norm here is a weighted discrete norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import (LipschitzGraph, GradedMesh, Cone, arc_weight,
                       boundary_distance, cone_points)

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# boundary functions
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Samples of a function on the boundary parameter grid.

    values may be scalar (n,) or matrix-valued (n, 2, 2); norms integrate
    against surface measure via the arc weight.
    """

    x: np.ndarray
    values: np.ndarray
    graph: LipschitzGraph

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def dx_weights(self) -> np.ndarray:
        x = self.x
        w = np.empty_like(x)
        w[1:-1] = 0.5 * (x[2:] - x[:-2])
        w[0] = 0.5 * (x[1] - x[0])
        w[-1] = 0.5 * (x[-1] - x[-2])
        return w

    @property
    def sigma_weights(self) -> np.ndarray:
        return self.dx_weights * arc_weight(self.graph, self.x)

    def _mag(self) -> np.ndarray:
        if self.values.ndim == 1:
            return np.abs(self.values)
        return np.abs(self.values).max(axis=(1, 2))

    def lp_norm(self, p: float) -> float:
        m = self._mag()
        if p == np.inf:
            return float(m.max())
        return float(((m ** p) @ self.sigma_weights) ** (1.0 / p))

    def l2_tilde_norm(self) -> float:
        """Weighted L2 norm with the 1/(1+|X|) surface weight."""
        pts = self.graph.point(self.x)
        w = self.sigma_weights / (1.0 + np.hypot(pts[:, 0], pts[:, 1]))
        return float(math.sqrt((self._mag() ** 2) @ w))

    def tangential_derivative(self) -> "BoundaryFunction":
        """Arc-length derivative of the boundary values."""
        pts = self.graph.point(self.x)
        s = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(pts[:, 0]),
                                                      np.diff(pts[:, 1])))))
        d = np.gradient(self.values, s, axis=0)
        return replace(self, values=d)

    def w1p_norm(self, p: float) -> float:
        return self.lp_norm(p) + self.tangential_derivative().lp_norm(p)

    def h1_norm(self) -> float:
        """Atom-space norm through the Riesz characterisation: the L1 norms
        of the flattened density f * arcweight and of its Hilbert transform."""
        dens = self.values * arc_weight(self.graph, self.x)
        flat = BoundaryFunction(self.x, dens, _flat_graph())
        return flat.lp_norm(1.0) + hilbert(flat).lp_norm(1.0)


_FLAT = None  # placeholder, assigned after make_profile import cycle resolves


def _flat_graph():
    global _FLAT
    if _FLAT is None:
        from .geometry import make_profile
        _FLAT = make_profile("flat")
    return _FLAT


def boundary_function(g: LipschitzGraph, fn_or_values, x=None) -> BoundaryFunction:
    if x is None:
        lo, hi = g.window
        x = np.linspace(lo, hi, 2049)
    vals = fn_or_values(np.asarray(x)) if callable(fn_or_values) else fn_or_values
    return BoundaryFunction(np.asarray(x, dtype=float), vals, g)


# ----------------------------------------------------------------------------
# atoms
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class H1Atom:
    """Smooth atom: supported in the interval, L2-normalised against the
    interval length, exactly cancelling."""

    interval: tuple[float, float]
    x: np.ndarray
    values: np.ndarray

    def check(self, tol_cancel: float = 1e-12) -> bool:
        lo, hi = self.interval
        sup_ok = np.all((self.values == 0) | ((self.x >= lo) & (self.x <= hi)))
        w = np.gradient(self.x)
        l2 = math.sqrt((self.values ** 2) @ w)
        size_ok = l2 <= (hi - lo) ** -0.5 + 1e-9
        cancel_ok = abs(self.values @ w) <= tol_cancel * max(1.0, np.abs(self.values).max())
        return bool(sup_ok and size_ok and cancel_ok)


def make_atom(center: float, half_width: float, n: int = 1025,
              wobble: float = 0.0, rng=None) -> H1Atom:
    """Difference of mollified half-interval bumps: smooth, mean zero by
    antisymmetrisation, L2-normalised to |I|^{-1/2}."""
    lo, hi = center - half_width, center + half_width
    x = np.linspace(lo, hi, n)
    u = (x - center) / half_width
    base = np.where(np.abs(u) < 1.0, np.exp(-1.0 / np.clip(1 - u * u, 1e-300, None)), 0.0)
    prof = base * u
    if rng is not None and wobble > 0:
        prof = base * (u + wobble * np.sin(3.0 * u * rng.uniform(0.5, 2.0)))
    w = np.gradient(x)
    prof = prof - base * ((prof @ w) / (base @ w))     # exact cancellation
    l2 = math.sqrt((prof ** 2) @ w)
    prof = prof / (l2 * math.sqrt(2.0 * half_width) + 1e-300)
    return H1Atom((lo, hi), x, prof)


# ----------------------------------------------------------------------------
# cone functionals
# ----------------------------------------------------------------------------

_DIST_CACHE: dict[int, np.ndarray] = {}


def node_distances(g: LipschitzGraph, mesh: GradedMesh,
                   n_boundary: int = 4096) -> np.ndarray:
    """Boundary distance of every mesh node (cached per mesh object).

    Vectorised: coarse argmin over a dense boundary sampling followed by one
    parabolic refinement of the squared-distance profile; exact for flat
    boundaries, and within O(sample spacing^2) in general."""
    key = id(mesh)
    if key in _DIST_CACHE:
        return _DIST_CACHE[key]
    pts = mesh.points(g)
    if g.lipschitz_k == 0.0:
        d = np.abs(pts[:, 1] - np.asarray(g.value(pts[:, 0])))
    else:
        lo, hi = g.window
        ys = np.linspace(lo, hi, n_boundary)
        bpts = g.point(ys)
        d = np.empty(len(pts))
        for start in range(0, len(pts), 2048):
            blk = pts[start:start + 2048]
            d2 = ((blk[:, None, :] - bpts[None, :, :]) ** 2).sum(axis=2)
            j = np.clip(np.argmin(d2, axis=1), 1, n_boundary - 2)
            rows = np.arange(len(blk))
            f0, f1, f2 = d2[rows, j - 1], d2[rows, j], d2[rows, j + 1]
            denom = f0 - 2 * f1 + f2
            shift = np.where(np.abs(denom) > 1e-300,
                             0.5 * (f0 - f2) / np.where(denom == 0, 1, denom),
                             0.0)
            fmin = f1 - 0.125 * (f0 - f2) * shift
            d[start:start + 2048] = np.sqrt(np.clip(np.minimum(fmin, f1),
                                                    0.0, None))
    _DIST_CACHE[key] = d
    return d


def _cone_mask(u, q: float, aperture: float, cap: float):
    g, mesh = u.graph, u.mesh
    dist = node_distances(g, mesh)
    pts = mesh.points(g)
    Q = np.array([q, float(g.value(q))])
    r = np.hypot(pts[:, 0] - Q[0], pts[:, 1] - Q[1])
    mask = (r <= (1.0 + aperture) * dist) & (dist <= cap) & (dist > 0)
    return mask, pts, dist


def nt_max(u, q: float, aperture: float = 1.0, cap: float = 4.0) -> float:
    """Non-tangential maximal function: sup of |u| over the truncated cone."""
    mask, _, _ = _cone_mask(u, q, aperture, cap)
    if not mask.any():
        raise ValueError("empty cone on this mesh")
    return float(np.abs(u.values[mask]).max())


def nt_max_avg(u, q: float, aperture: float = 1.0, cap: float = 4.0,
               use_gradient: bool = True, n_ball: int = 33) -> float:
    """Averaged variant: sup over cone points of the RMS average of the
    field over the ball of radius dist/2 around each point."""
    mask, pts, dist = _cone_mask(u, q, aperture, cap)
    if not mask.any():
        raise ValueError("empty cone on this mesh")
    centers = pts[mask]
    radii = 0.5 * dist[mask]
    rad = np.array([0.0, 0.45, 0.75, 0.95])
    ang = np.linspace(0, TWO_PI, 8, endpoint=False)
    offs = np.concatenate([[np.zeros(2)]] + [
        np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1) for r in rad[1:]])
    samples = centers[:, None, :] + radii[:, None, None] * offs[None, :, :]
    flat = samples.reshape(-1, 2)
    if use_gradient:
        vals = u.interp_grad_sq(flat)
    else:
        vals = u.interp(flat) ** 2
    vals = vals.reshape(len(centers), -1)
    return float(math.sqrt(max(vals.mean(axis=1).max(), 0.0)))


def square_function(u, q: float, aperture: float = 1.0, cap: float = 4.0) -> float:
    """Truncated-cone energy (cell-sum quadrature on the tensor mesh; the
    graph-coordinate map is area preserving so cell areas are exact)."""
    mask, _, _ = _cone_mask(u, q, aperture, cap)
    mesh = u.mesh
    wx = _trap_weights(mesh.x_nodes)
    ws = _trap_weights(mesh.s_levels)
    area = (wx[:, None] * ws[None, :]).ravel()
    g2 = u.grad_x ** 2 + u.grad_t ** 2
    return float(math.sqrt((g2 * area)[mask].sum()))


def _trap_weights(x):
    x = np.asarray(x, dtype=float)
    w = np.empty_like(x)
    if len(x) == 1:
        return np.ones(1)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


# ----------------------------------------------------------------------------
# maximal operator, Hilbert transform, BMO
# ----------------------------------------------------------------------------

def hl_maximal(f: BoundaryFunction, q: float, r_grid=None) -> float:
    """Centered Hardy-Littlewood maximal function over boundary balls."""
    pts = f.graph.point(f.x)
    Q = f.graph.point(np.array(q)) if np.ndim(q) == 0 else q
    chord = np.hypot(pts[:, 0] - Q[0], pts[:, 1] - Q[1])
    w = f.sigma_weights
    m = f._mag()
    if r_grid is None:
        span = float(f.x[-1] - f.x[0])
        r_grid = np.geomspace(max(np.diff(f.x).min(), 1e-6) * 2.0,
                              2.0 * span, 256)
    best = 0.0
    order = np.argsort(chord)
    cm = np.cumsum(m[order] * w[order])
    cw = np.cumsum(w[order])
    sorted_chord = chord[order]
    idx = np.searchsorted(sorted_chord, r_grid, side="right") - 1
    ok = idx >= 0
    avg = np.where(ok & (cw[idx] > 0), cm[idx] / np.where(cw[idx] > 0, cw[idx], 1.0), 0.0)
    return float(avg.max())


def hilbert(f: BoundaryFunction, oversample: int = 4) -> BoundaryFunction:
    """Spectral Hilbert transform with the classical sign (H cos = sin),
    frequency multiplier -i sign(xi), computed on a padded uniform grid."""
    x = f.x
    n = 1 << int(math.ceil(math.log2(len(x))))
    xi_grid = np.linspace(x[0], x[-1], n)
    vals = np.interp(xi_grid, x, f.values)
    m = n * oversample
    padded = np.zeros(m)
    padded[:n] = vals
    spec = np.fft.fft(padded)
    freqs = np.fft.fftfreq(m)
    mult = -1j * np.sign(freqs)
    out = np.real(np.fft.ifft(spec * mult))[:n]
    return BoundaryFunction(xi_grid, out, f.graph)


def hilbert_pv(f: BoundaryFunction, xq) -> np.ndarray:
    """Principal-value quadrature of the Hilbert transform at query points
    (midpoint rule on the symmetric complement of the singular cell)."""
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    out = np.empty_like(xq)
    w = f.dx_weights
    for i, q in enumerate(xq):
        d = q - f.x
        mask = np.abs(d) > 1.5 * np.median(np.diff(f.x))
        out[i] = (f.values[mask] / d[mask]) @ w[mask] / math.pi
    return out


def bmo_norm(f: BoundaryFunction) -> float:
    """Mean-oscillation sup over dyadic and half-shifted dyadic intervals of
    the sample grid (classically comparable to the full interval sup)."""
    v = f.values
    n = len(v)
    best = 0.0
    L = 2
    while L <= n:
        for start in (0, L // 2):
            m = (n - start) // L
            if m == 0:
                break
            blk = v[start:start + m * L].reshape(m, L)
            mu = blk.mean(axis=1, keepdims=True)
            best = max(best, float(np.abs(blk - mu).mean(axis=1).max()))
        L *= 2
    return best


# ----------------------------------------------------------------------------
# tent functionals on the reflected region
# ----------------------------------------------------------------------------

def tent_functionals(field_fn, g: LipschitzGraph, mesh: GradedMesh, q: float,
                     aperture: float = 1.0, cap: float = 4.0,
                     r_grid=None) -> tuple[float, float]:
    """Carleson-type tent sup and cone square integral of a field on the
    region below the graph; quadrature is the cell sum on the reflected
    tensor mesh, with the distance weights delta and delta^2."""
    assert mesh.side == -1, "tent functionals live below the graph"
    pts = mesh.points(g)
    dist = node_distances(g, mesh)
    wts = (_trap_weights(mesh.x_nodes)[:, None]
           * _trap_weights(mesh.s_levels)[None, :]).ravel()
    Fv = np.asarray(field_fn(pts), dtype=float)
    interior = dist > 0
    Q = np.array([q, float(g.value(q))])
    r = np.hypot(pts[:, 0] - Q[0], pts[:, 1] - Q[1])

    # sup over boundary balls containing q: centers sampled around q up to
    # the largest radius still inside the window
    if r_grid is None:
        r_grid = np.geomspace(4.0 * np.diff(mesh.x_nodes).min(),
                              0.5 * (g.window[1] - g.window[0]), 24)
    span = float(r_grid[-1])
    centers = q + span * np.linspace(-1, 1, 25)
    centers = centers[(centers > g.window[0]) & (centers < g.window[1])]
    bpts = g.point(centers)
    dens = Fv ** 2 / np.where(interior, dist, 1.0) * wts * interior
    best = 0.0
    for cp in bpts:
        dq = np.hypot(Q[0] - cp[0], Q[1] - cp[1])
        rv = np.hypot(pts[:, 0] - cp[0], pts[:, 1] - cp[1])
        for rr in r_grid[r_grid >= dq]:
            val = dens[rv < rr].sum() / (2.0 * rr)
            best = max(best, val)
    tent = math.sqrt(max(best, 0.0))

    cone = interior & (r <= (1.0 + aperture) * dist) & (dist <= cap)
    sq = math.sqrt(max((Fv[cone] ** 2 / dist[cone] ** 2 * wts[cone]).sum(), 0.0))
    return tent, sq


def tent_duality_constant(g, mesh, F_fn, G_fn, q_grid, aperture=1.0,
                          cap=4.0) -> float:
    """Empirical constant in the tent-space duality pairing: the weighted
    product integral against the integrated sup/square functionals."""
    pts = mesh.points(g)
    dist = node_distances(g, mesh)
    wts = (_trap_weights(mesh.x_nodes)[:, None]
           * _trap_weights(mesh.s_levels)[None, :]).ravel()
    inter = dist > 0
    lhs = (np.abs(F_fn(pts)[inter] * G_fn(pts)[inter]) / dist[inter]
           * wts[inter]).sum()
    qw = np.gradient(np.asarray(q_grid, dtype=float)) * arc_weight(g, q_grid)
    rhs = 0.0
    for qq, ww in zip(q_grid, qw):
        t, _ = tent_functionals(F_fn, g, mesh, qq, aperture, cap)
        _, s = tent_functionals(G_fn, g, mesh, qq, aperture, cap)
        rhs += t * s * ww
    return float(lhs / (rhs + 1e-300))


# ----------------------------------------------------------------------------
# adapted distance surrogate
# ----------------------------------------------------------------------------

class AdaptedDistance:
    """Mollified vertical distance below the graph.

    Solves s = (profile * gaussian_{lam s})(x) - t by fixed point; for small
    lam * k the map is a contraction, the solution is smooth, comparable to
    the true distance, and has bounded gradient.  This is a surrogate for
    the classical adapted distance; every report derived from it is labeled
    as such.
    """

    def __init__(self, g: LipschitzGraph, lam: float = 0.2, n_kernel: int = 33):
        self.g = g
        self.lam = min(lam, 0.4 / max(g.lipschitz_k, 1e-9)) if g.lipschitz_k > 0 else lam
        gx, gw = np.polynomial.legendre.leggauss(n_kernel)
        self._u = 5.0 * gx
        self._w = 5.0 * gw * np.exp(-0.5 * self._u ** 2) / math.sqrt(TWO_PI)
        self._w /= self._w.sum()

    def _mollified(self, x, sigma):
        x = np.asarray(x, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        pts = x[:, None] - sigma[:, None] * self._u[None, :]
        return (np.asarray(self.g.value(pts.ravel())).reshape(pts.shape)
                @ self._w)

    def value(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        x, t = P[:, 0], P[:, 1]
        s = np.asarray(self.g.value(x)) - t
        if np.any(s < 0):
            raise ValueError("adapted distance is defined below the graph")
        for _ in range(40):
            new = self._mollified(x, self.lam * np.clip(s, 1e-12, None)) - t
            if np.abs(new - s).max() < 1e-13 * max(1.0, np.abs(s).max()):
                s = new
                break
            s = new
        return s

    def gradient(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        h = np.clip(self.value(P) / 50.0, 1e-7, None)
        out = np.empty_like(P)
        for j, e in enumerate(np.eye(2)):
            out[:, j] = (self.value(P + h[:, None] * e)
                         - self.value(P - h[:, None] * e)) / (2 * h)
        return out

    def second(self, P, i: int, j: int) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        h = np.clip(self.value(P) / 30.0, 1e-6, None)
        ei, ej = np.eye(2)[i], np.eye(2)[j]
        if i == j:
            return (self.value(P + h[:, None] * ei) - 2 * self.value(P)
                    + self.value(P - h[:, None] * ei)) / h ** 2
        pp = self.value(P + h[:, None] * (ei + ej))
        pm = self.value(P + h[:, None] * (ei - ej))
        mp = self.value(P + h[:, None] * (ej - ei))
        mm = self.value(P - h[:, None] * (ei + ej))
        return (pp - pm - mp + mm) / (4 * h ** 2)


def adapted_distance(g: LipschitzGraph, **kw) -> AdaptedDistance:
    return AdaptedDistance(g, **kw)


# ----------------------------------------------------------------------------
# solvability-constant sweeps
# ----------------------------------------------------------------------------

def lp_problem_constant(problem: str, field, g: LipschitzGraph, p: float,
                        data_battery, mesh_kw: dict | None = None,
                        q_grid=None, aperture: float = 1.0,
                        cap: float = 4.0) -> dict:
    """Empirical solvability constant: the sup over a data battery of a
    problem-defining ratio (maximal function norm over data norm), with a
    two-level refinement stability flag."""
    from . import bvpsolver  # local import; bvpsolver depends on this module

    problem = problem.upper()
    mesh_kw = dict(mesh_kw or {})
    results = []
    for level in (0, 1):
        kw = dict(mesh_kw)
        if level == 1:
            kw["nx"] = int(kw.get("nx", 96) * 1.5)
            kw["s_min"] = kw.get("s_min", 1e-3) / 2.0
        ratios = []
        for data in data_battery:
            if problem in ("D", "R"):
                u = bvpsolver.solve_dirichlet(field, g, data, **kw)
            else:
                u = bvpsolver.solve_neumann(field, g, data, **kw)
            qs = q_grid if q_grid is not None else np.linspace(
                g.window[0] * 0.5, g.window[1] * 0.5, 17)
            qw = np.gradient(qs) * arc_weight(g, qs)
            if problem == "D":
                num = np.array([nt_max(u, q, aperture, cap) for q in qs])
                den = data.lp_norm(p)
            else:
                num = np.array([nt_max_avg(u, q, aperture, cap) for q in qs])
                den = (data.tangential_derivative().lp_norm(p)
                       if problem == "R" else data.lp_norm(p))
            num_norm = float(((num ** p) @ qw) ** (1 / p))
            if den == 0 and num_norm < 1e-10:
                continue
            ratios.append(num_norm / (den + 1e-300))
        results.append(max(ratios) if ratios else 0.0)
    c0, c1 = results
    drift = c1 / (c0 + 1e-300)
    return {"problem": problem, "p": p, "constant": c1,
            "coarse_constant": c0, "drift": drift,
            "stable": bool(drift <= 2.0 and drift >= 0.5)}
