"""Lipschitz graph domains: boundary calculus, distance, cones and meshes.

The domain is Omega = {(x, t) : t > phi(x)} for a Lipschitz profile phi.
All objects here are immutable after construction and every operation is
pure, so concurrent read access is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden ratio section


# ----------------------------------------------------------------------------
# profiles
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzGraph:
    """The boundary profile phi with its Lipschitz data.

    profile / slope are vectorised callables; slope is the right-hand
    derivative at breakpoints of piecewise-linear profiles so that the
    tangent map is total.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    slope: Callable[[np.ndarray], np.ndarray]
    lipschitz_k: float
    slope_center: float  # alpha_0
    oscillation: float   # eps_0, with |phi' - alpha_0| <= eps_0
    window: tuple[float, float] = (-8.0, 8.0)
    name: str = "custom"

    def __post_init__(self):
        if self.oscillation > self.lipschitz_k + 1e-12 and self.lipschitz_k > 0:
            raise ValueError("oscillation eps_0 must not exceed lipschitz_k")
        if abs(self.slope_center) > self.lipschitz_k + 1e-12:
            raise ValueError("|alpha_0| must not exceed lipschitz_k")

    def value(self, x):
        return self.profile(np.asarray(x, dtype=float))

    def point(self, x):
        """Boundary point (x, phi(x)); accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        return np.stack([x, self.value(x)], axis=-1)

    def inside(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X[:, 1] > self.value(X[:, 0])


def tangent(g: LipschitzGraph, x):
    """Unit tangent (1, phi')/(1 + phi'^2)^(1/2)."""
    s = np.asarray(g.slope(x), dtype=float)
    w = np.sqrt(1.0 + s * s)
    return np.stack([1.0 / w, s / w], axis=-1)


def outward_normal(g: LipschitzGraph, x):
    """Unit outward normal (phi', -1)/(1 + phi'^2)^(1/2), pointing below."""
    s = np.asarray(g.slope(x), dtype=float)
    w = np.sqrt(1.0 + s * s)
    return np.stack([s / w, -1.0 / w], axis=-1)


def arc_weight(g: LipschitzGraph, x):
    """Surface-measure weight (1 + phi'^2)^(1/2), in [1, (1+k^2)^(1/2)]."""
    s = np.asarray(g.slope(x), dtype=float)
    return np.sqrt(1.0 + s * s)


def boundary_distance(g: LipschitzGraph, X, rtol: float = 1e-10,
                      nseed: int = 257) -> float:
    """dist(X, boundary) by golden-section search over the graph parameter.

    The 1D objective is seeded on a uniform grid over the horizontal range
    that can contain the minimiser (|y - x| <= vertical distance), then
    refined by golden section between the neighbours of the best seed.
    Raises ValueError when the seed window collides with the truncation
    window edge, where the distance could be underestimated.
    """
    X = np.asarray(X, dtype=float)
    x, t = float(X[0]), float(X[1])
    vert = abs(t - g.value(x))
    if vert == 0.0:
        return 0.0
    half = vert * 1.0000001
    lo, hi = x - half, x + half
    wlo, whi = g.window
    if lo < wlo - 1e-12 or hi > whi + 1e-12:
        # minimiser search may touch the window edge; clamp but warn via error
        # only when the clamped edge is actually the argmin
        lo, hi = max(lo, wlo), min(hi, whi)
    ys = np.linspace(lo, hi, nseed)
    d2 = (ys - x) ** 2 + (g.value(ys) - t) ** 2
    i = int(np.argmin(d2))
    if i in (0, nseed - 1) and (ys[i] in (wlo, whi)):
        raise ValueError("distance minimiser hit the truncation window edge")
    a = ys[max(i - 1, 0)]
    b = ys[min(i + 1, nseed - 1)]

    def f(y):
        return (y - x) ** 2 + (g.value(y) - t) ** 2

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * max(1.0, abs(a) + abs(b)) * 1e-2 and (b - a) > 1e-15:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return math.sqrt(min(fc, fd, f(0.5 * (a + b))))


# ----------------------------------------------------------------------------
# cones and meshes
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Cone:
    """Non-tangential approach region with vertex on the boundary.

    Membership: |X - Q| <= (1 + aperture) * dist(X, boundary), truncated at
    dist(X, boundary) <= height_cap.  The vertex is stored as the boundary
    abscissa q with Q = (q, phi(q)).
    """

    q: float
    aperture: float = 1.0
    height_cap: float = 4.0

    def vertex(self, g: LipschitzGraph) -> np.ndarray:
        return np.array([self.q, float(g.value(self.q))])


@dataclass(frozen=True)
class GradedMesh:
    """Tensor mesh of the truncated domain in graph coordinates.

    Nodes are (x_i, phi(x_i) + side * s_j) where the s-levels are graded
    geometrically toward the boundary (s = 0).  side = +1 meshes Omega,
    side = -1 meshes the reflected region below the graph.
    """

    x_nodes: np.ndarray
    s_levels: np.ndarray
    side: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x_nodes", np.asarray(self.x_nodes, dtype=float))
        object.__setattr__(self, "s_levels", np.asarray(self.s_levels, dtype=float))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x_nodes), len(self.s_levels)

    def points(self, g: LipschitzGraph) -> np.ndarray:
        """All mesh nodes as an (nx * ns, 2) array, x-major."""
        phi = g.value(self.x_nodes)
        xs = np.repeat(self.x_nodes, len(self.s_levels))
        ts = (phi[:, None] + self.side * self.s_levels[None, :]).ravel()
        return np.stack([xs, ts], axis=-1)

    def grid_values(self, fn, g: LipschitzGraph) -> np.ndarray:
        """Evaluate fn on the node grid, returned with shape (nx, ns)."""
        pts = self.points(g)
        return np.asarray(fn(pts)).reshape(self.shape)


def geometric_levels(s_min: float, s_max: float, per_decade: int = 8,
                     include_zero: bool = True) -> np.ndarray:
    """Geometric level ladder from s_min up to s_max, optionally with 0."""
    n = max(2, int(np.ceil(per_decade * np.log10(s_max / s_min))) + 1)
    lv = np.geomspace(s_min, s_max, n)
    if include_zero:
        lv = np.concatenate(([0.0], lv))
    return lv


def refined_x_nodes(window: tuple[float, float], nx: int,
                    refine_at: Sequence[float] = (), r_min: float = 1e-3,
                    per_decade: int = 8) -> np.ndarray:
    """Uniform x-nodes plus geometric clusters around marked abscissae."""
    lo, hi = window
    nodes = [np.linspace(lo, hi, nx)]
    for c in refine_at:
        span = max(hi - c, c - lo)
        ladder = np.geomspace(r_min, span, max(2, int(per_decade * np.log10(span / r_min)) + 1))
        nodes.append(np.clip(c + ladder, lo, hi))
        nodes.append(np.clip(c - ladder, lo, hi))
        nodes.append(np.array([c]))
    out = np.unique(np.concatenate(nodes))
    return out


def graded_mesh(g: LipschitzGraph, nx: int = 96, s_min: float = 1e-3,
                s_max: float = 4.0, per_decade: int = 8, side: int = 1,
                refine_at: Sequence[float] = ()) -> GradedMesh:
    xs = refined_x_nodes(g.window, nx, refine_at=refine_at, r_min=s_min,
                         per_decade=per_decade)
    return GradedMesh(xs, geometric_levels(s_min, s_max, per_decade), side)


def cone_points(g: LipschitzGraph, cone: Cone, mesh: GradedMesh) -> np.ndarray:
    """Mesh nodes lying in the truncated cone at Q = (q, phi(q)).

    Returns an (m, 2) array; empty when the cap sits below the first mesh
    layer.  Raises ValueError when the vertex is outside the mesh footprint.
    """
    lo, hi = mesh.x_nodes[0], mesh.x_nodes[-1]
    if not (lo <= cone.q <= hi):
        raise ValueError("cone vertex outside mesh footprint")
    Q = cone.vertex(g)
    pts = mesh.points(g)
    interior = mesh.side * (pts[:, 1] - g.value(pts[:, 0])) > 0
    pts = pts[interior]
    dist = np.array([boundary_distance(g, p) for p in pts])
    keep = dist <= cone.height_cap
    r = np.hypot(pts[:, 0] - Q[0], pts[:, 1] - Q[1])
    keep &= r <= (1.0 + cone.aperture) * dist
    return pts[keep]


# ----------------------------------------------------------------------------
# profile registry
# ----------------------------------------------------------------------------

def from_samples(x: np.ndarray, vals: np.ndarray, name: str = "samples",
                 window: tuple[float, float] | None = None) -> LipschitzGraph:
    """Piecewise-linear profile through strictly increasing sample abscissae.

    The slope at a breakpoint is the right-hand derivative (at the last
    breakpoint the left-hand one), keeping the tangent map total.
    """
    x = np.asarray(x, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("need strictly increasing sample abscissae")
    slopes = np.diff(vals) / np.diff(x)

    def prof(y):
        return np.interp(np.asarray(y, dtype=float), x, vals)

    def slope(y):
        idx = np.searchsorted(x, np.asarray(y, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(slopes) - 1)
        return slopes[idx]

    k = float(np.max(np.abs(slopes)))
    a0 = 0.5 * float(slopes.max() + slopes.min())
    eps = 0.5 * float(slopes.max() - slopes.min())
    if window is None:
        window = (float(x[0]), float(x[-1]))
    return LipschitzGraph(prof, slope, max(k, 1e-15), a0, eps, window, name)


def make_profile(spec: str, window: tuple[float, float] = (-8.0, 8.0)) -> LipschitzGraph:
    """Named boundary profiles: "flat", "vee:k", "ramp:a0", "bump[:amp[:w]]",
    "saw:k:teeth" and "csv:PATH" (two columns x, phi(x))."""
    parts = spec.split(":")
    kind = parts[0]
    if kind == "flat":
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return LipschitzGraph(zero, zero, 0.0, 0.0, 0.0, window, "flat")
    if kind == "vee":
        k = float(parts[1]) if len(parts) > 1 else 1.0
        return LipschitzGraph(
            lambda x: k * np.abs(np.asarray(x, dtype=float)),
            lambda x: k * np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0),
            k, 0.0, k, window, f"vee:{k:g}")
    if kind == "ramp":
        a = float(parts[1]) if len(parts) > 1 else 0.5
        return LipschitzGraph(
            lambda x: a * np.asarray(x, dtype=float),
            lambda x: np.full_like(np.asarray(x, dtype=float), a),
            abs(a) if a != 0 else 0.0, a, 0.0, window, f"ramp:{a:g}")
    if kind == "bump":
        amp = float(parts[1]) if len(parts) > 1 else 0.5
        w = float(parts[2]) if len(parts) > 2 else 1.0

        def prof(x):
            x = np.asarray(x, dtype=float)
            return amp * np.exp(-((x / w) ** 2))

        def slope(x):
            x = np.asarray(x, dtype=float)
            return amp * np.exp(-((x / w) ** 2)) * (-2.0 * x / w ** 2)

        k = abs(amp) * math.sqrt(2.0) / w * math.exp(-0.5)
        return LipschitzGraph(prof, slope, k, 0.0, k, window, f"bump:{amp:g}:{w:g}")
    if kind == "saw":
        k = float(parts[1]) if len(parts) > 1 else 1.0
        teeth = int(parts[2]) if len(parts) > 2 else 8
        lo, hi = window
        xs = np.linspace(lo, hi, 2 * teeth + 1)
        vals = np.zeros_like(xs)
        vals[1::2] = k * (xs[1] - xs[0])   # slopes alternate +-k
        return from_samples(xs, vals, name=f"saw:{k:g}:{teeth}", window=window)
    if kind == "csv":
        data = np.loadtxt(parts[1], delimiter=",")
        return from_samples(data[:, 0], data[:, 1], name=spec)
    raise ValueError(f"unknown profile spec {spec!r}")
