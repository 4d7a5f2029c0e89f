"""Weak-form Dirichlet/Neumann solvers on truncated graph domains, the
half-plane Poisson extension, traces, energy norms, and the layer-potential
representation check.

The mesh is the graph-coordinate tensor mesh of geometry.GradedMesh mapped
by (x, s) -> (x, phi(x) + s); that map preserves area, so quadrature weights
on the mesh are exact.  Assembly is nonsymmetric on purpose: nothing here
assumes A = A^t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.special import beta as beta_fn

from .coefficients import CoefficientField, conjugate_field
from .funcestim import (BoundaryFunction, boundary_function, hl_maximal,
                        nt_max, nt_max_avg, bmo_norm, _trap_weights)
from .geometry import LipschitzGraph, GradedMesh, arc_weight, graded_mesh, make_profile
from .quadrature import fit_power


# ----------------------------------------------------------------------------
# solution container
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSolution:
    """Nodal solution on a graded graph mesh with physical gradients.

    values / grad_x / grad_t are flat arrays in x-major node order.  meta
    carries solver diagnostics (weak residual, trace error, decay tag).
    """

    mesh: GradedMesh
    graph: LipschitzGraph
    values: np.ndarray
    grad_x: np.ndarray
    grad_t: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def _grid(self, arr):
        return np.asarray(arr).reshape(self.mesh.shape)

    def _to_graph_coords(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        s = P[:, 1] - np.asarray(self.graph.value(P[:, 0]))
        return np.stack([P[:, 0], self.mesh.side * s], axis=-1)

    def interp(self, P) -> np.ndarray:
        itp = RegularGridInterpolator(
            (self.mesh.x_nodes, self.mesh.s_levels), self._grid(self.values),
            bounds_error=False, fill_value=None)
        return itp(self._to_graph_coords(P))

    def interp_grad_sq(self, P) -> np.ndarray:
        itp = RegularGridInterpolator(
            (self.mesh.x_nodes, self.mesh.s_levels),
            self._grid(self.grad_x ** 2 + self.grad_t ** 2),
            bounds_error=False, fill_value=None)
        return itp(self._to_graph_coords(P))

    def energy_norm(self) -> float:
        w = (_trap_weights(self.mesh.x_nodes)[:, None]
             * _trap_weights(self.mesh.s_levels)[None, :]).ravel()
        return float(math.sqrt(((self.grad_x ** 2 + self.grad_t ** 2) * w).sum()))

    def weighted_l2_norm(self) -> float:
        """L2 norm against dX / (1 + |X|^2)."""
        pts = self.mesh.points(self.graph)
        w = (_trap_weights(self.mesh.x_nodes)[:, None]
             * _trap_weights(self.mesh.s_levels)[None, :]).ravel()
        w = w / (1.0 + pts[:, 0] ** 2 + pts[:, 1] ** 2)
        return float(math.sqrt((self.values ** 2 * w).sum()))

    def sobolev_tilde_norm(self) -> float:
        return math.hypot(self.weighted_l2_norm(), self.energy_norm())


def field_on_mesh(g: LipschitzGraph, mesh: GradedMesh, fn, grad_fn=None,
                  meta=None) -> GridSolution:
    """Wrap closed-form fields as grid solutions (for oracles/batteries)."""
    pts = mesh.points(g)
    vals = np.asarray(fn(pts), dtype=float)
    if grad_fn is not None:
        gr = np.atleast_2d(np.asarray(grad_fn(pts), dtype=float))
        gx, gt = gr[:, 0], gr[:, 1]
    else:
        gx, gt = _numeric_gradients(g, mesh, vals)
    return GridSolution(mesh, g, vals, gx, gt, meta or {})


def _numeric_gradients(g, mesh, vals):
    nx, ns = mesh.shape
    V = vals.reshape(nx, ns)
    dVdx = np.gradient(V, mesh.x_nodes, axis=0)
    dVds = np.gradient(V, mesh.s_levels, axis=1) * mesh.side
    slope = np.asarray(g.slope(mesh.x_nodes))[:, None]
    gx = dVdx - slope * dVds       # physical x-derivative at fixed t
    return gx.ravel(), dVds.ravel()


def t_derivative(u: GridSolution) -> GridSolution:
    """Discrete t-derivative field (itself a solution for t-independent A)."""
    gx, gt = _numeric_gradients(u.graph, u.mesh, u.grad_t)
    return replace(u, values=u.grad_t.copy(), grad_x=gx, grad_t=gt,
                   meta={**u.meta, "derived": "t-derivative"})


# ----------------------------------------------------------------------------
# P1 assembly on the mapped tensor mesh
# ----------------------------------------------------------------------------

def _mesh_triangulation(g: LipschitzGraph, mesh: GradedMesh):
    nx, ns = mesh.shape
    pts = mesh.points(g)
    idx = np.arange(nx * ns).reshape(nx, ns)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    n01 = idx[:-1, 1:].ravel()
    tris = np.concatenate([np.stack([n00, n10, n11], axis=-1),
                           np.stack([n00, n11, n01], axis=-1)])
    return pts, tris


def _assemble(field: CoefficientField, pts, tris):
    p = pts[tris]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    area = 0.5 * np.abs(det)
    grads = np.empty((len(tris), 3, 2))
    grads[:, 1, 0] = v2[:, 1] / det
    grads[:, 1, 1] = -v2[:, 0] / det
    grads[:, 2, 0] = -v1[:, 1] / det
    grads[:, 2, 1] = v1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    cx = p[:, :, 0].mean(axis=1)
    A = field.matrix(cx)
    # local a(u, v) = area * grad_v . A grad_u  (row = test, col = trial)
    Ag = np.einsum("tij,tnj->tni", A, grads)          # A grad(trial n)
    loc = np.einsum("tmi,tni->tmn", grads, Ag) * area[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    K = sp.coo_matrix((loc.ravel(), (rows, cols)),
                      shape=(len(pts), len(pts))).tocsr()
    return K


def _boundary_masks(mesh: GradedMesh):
    nx, ns = mesh.shape
    idx = np.arange(nx * ns).reshape(nx, ns)
    bottom = idx[:, 0]
    top = idx[:, -1]
    sides = np.concatenate([idx[0, 1:-1], idx[-1, 1:-1]])
    return bottom, top, sides


def _post_gradients(u_vals, g, mesh):
    gx, gt = _numeric_gradients(g, mesh, u_vals)
    return gx, gt


def solve_dirichlet(field: CoefficientField, g: LipschitzGraph,
                    f0, nx: int = 128, s_min: float = 1e-3, s_max: float = 4.0,
                    per_decade: int = 8, refine_at=(), artificial=None,
                    mesh: GradedMesh | None = None) -> GridSolution:
    """Weak Dirichlet solve on the truncated domain.

    f0 is a BoundaryFunction or callable of x.  The artificial boundary
    (top and sides of the truncation window) takes values from `artificial`
    (callable of points), zero by default; the truncation error is assessed
    by the two-window comparison utilities.
    """
    if mesh is None:
        mesh = graded_mesh(g, nx=nx, s_min=s_min, s_max=s_max,
                           per_decade=per_decade, refine_at=refine_at)
    pts, tris = _mesh_triangulation(g, mesh)
    K = _assemble(field, pts, tris)
    bottom, top, sides = _boundary_masks(mesh)
    data = f0 if callable(f0) else (lambda x: np.interp(x, f0.x, f0.values))
    vals = np.zeros(len(pts))
    vals[bottom] = data(pts[bottom, 0])
    art = np.concatenate([top, sides])
    if artificial is not None:
        vals[art] = artificial(pts[art])
    fixed = np.zeros(len(pts), dtype=bool)
    fixed[bottom] = True
    fixed[art] = True
    free = ~fixed
    rhs = -K[free][:, fixed] @ vals[fixed]
    vals[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
    gx, gt = _post_gradients(vals, g, mesh)
    res = _weak_residual(K, vals, free)
    tr_err = float(np.abs(vals[bottom] - data(pts[bottom, 0])).max())
    return GridSolution(mesh, g, vals, gx, gt,
                        {"weak_residual": res, "trace_error": tr_err,
                         "problem": "dirichlet"})


def solve_neumann(field: CoefficientField, g: LipschitzGraph, g0,
                  nx: int = 128, s_min: float = 1e-3, s_max: float = 4.0,
                  per_decade: int = 8, refine_at=(), artificial=None,
                  mesh: GradedMesh | None = None) -> GridSolution:
    """Weak Neumann solve: conormal data on the graph boundary, natural
    (zero-flux) artificial boundary unless `artificial` supplies Dirichlet
    values there.  Pure-Neumann solves are gauged to zero mean over the
    central reference panel; incompatible data (nonzero total flux on the
    truncation) is flagged in meta."""
    if mesh is None:
        mesh = graded_mesh(g, nx=nx, s_min=s_min, s_max=s_max,
                           per_decade=per_decade, refine_at=refine_at)
    pts, tris = _mesh_triangulation(g, mesh)
    K = _assemble(field, pts, tris)
    bottom, top, sides = _boundary_masks(mesh)
    data = g0 if callable(g0) else (lambda x: np.interp(x, g0.x, g0.values))
    load = np.zeros(len(pts))
    xb = pts[bottom, 0]
    # edge-wise 2-point Gauss quadrature of int g0 tr(phi) dsigma
    gl_x, gl_w = np.polynomial.legendre.leggauss(2)
    for i in range(len(xb) - 1):
        a, b = xb[i], xb[i + 1]
        xm = 0.5 * (a + b) + 0.5 * (b - a) * gl_x
        wm = 0.5 * (b - a) * gl_w * np.asarray(arc_weight(g, xm)) * np.asarray(data(xm))
        lam = (xm - a) / (b - a)
        load[bottom[i]] += ((1 - lam) * wm).sum()
        load[bottom[i + 1]] += (lam * wm).sum()
    total_flux = float(load.sum())
    vals = np.zeros(len(pts))
    if artificial is not None:
        art = np.concatenate([top, sides])
        fixed = np.zeros(len(pts), dtype=bool)
        fixed[art] = True
        vals[art] = artificial(pts[art])
        free = ~fixed
        rhs = load[free] - K[free][:, fixed] @ vals[fixed]
        vals[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
        gauge = "dirichlet_ref"
    else:
        # pure Neumann: pin one interior node, then re-gauge to the panel
        pin = len(pts) // 2
        free = np.ones(len(pts), dtype=bool)
        free[pin] = False
        rhs = load[free]
        vals[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
        gauge = "panel_mean"
    # zero-mean gauge over the central fifth of the boundary
    xb_all, wb = xb, _trap_weights(xb) * np.asarray(arc_weight(g, xb))
    span = xb_all[-1] - xb_all[0]
    panel = np.abs(xb_all - 0.5 * (xb_all[0] + xb_all[-1])) < span / 10.0
    mean = (vals[bottom][panel] @ wb[panel]) / wb[panel].sum()
    vals -= mean
    gx, gt = _post_gradients(vals, g, mesh)
    meta = {"problem": "neumann", "gauge": gauge,
            "flux_imbalance": total_flux,
            "compatible": bool(abs(total_flux) < 1e-8 or artificial is not None)}
    return GridSolution(mesh, g, vals, gx, gt, meta)


def _weak_residual(K, vals, free) -> float:
    r = (K @ vals)[free]
    scale = float(np.abs(K @ vals).max() + 1e-300)
    return float(np.abs(r).max() / scale)


def coercivity_floor(field: CoefficientField, g: LipschitzGraph,
                     mesh: GradedMesh) -> float:
    """Smallest Ritz value of the symmetrised form on the zero-trace space,
    normalised by the mass matrix diagonal (a cheap surrogate)."""
    pts, tris = _mesh_triangulation(g, mesh)
    K = _assemble(field, pts, tris)
    bottom, top, sides = _boundary_masks(mesh)
    fixed = np.zeros(len(pts), dtype=bool)
    fixed[np.concatenate([bottom, top, sides])] = True
    free = ~fixed
    Ks = 0.5 * (K + K.T)
    sub = Ks[free][:, free].tocsc()
    try:
        val = spla.eigsh(sub, k=1, which="SA",
                         return_eigenvectors=False, maxiter=3000)
        return float(val[0])
    except Exception:
        rng = np.random.default_rng(0)
        v = rng.standard_normal(sub.shape[0])
        lo = np.inf
        for _ in range(50):
            v = spla.spsolve(sub + 1e-10 * sp.eye(sub.shape[0]), v)
            v /= np.linalg.norm(v)
            lo = float(v @ (sub @ v))
        return lo


# ----------------------------------------------------------------------------
# Poisson extension on the half plane
# ----------------------------------------------------------------------------

def poisson_kernel(x, t):
    x = np.asarray(x, dtype=float)
    return t / (math.pi * (x * x + t * t))


def poisson_kernel_lq_norm(q: float, t: float) -> float:
    """Closed form ||P_t||_q from the Beta function."""
    B = beta_fn(0.5, q - 0.5)
    return float((math.pi ** -q * t ** (1.0 - q) * B) ** (1.0 / q))


def poisson_tail_exponent(q: float = 119.0 / 59.0, power: float = 17.0 / 6.0,
                          ts=(1.0, 2.0, 4.0, 8.0)) -> tuple[float, float]:
    """Fitted exponent of ||P_t||_q^power computed by quadrature (the known
    scaling identity makes the closed form an independent cross-check)."""
    vals = []
    for t in ts:
        xs = np.linspace(-2000 * t, 2000 * t, 400001)
        v = np.abs(poisson_kernel(xs, t)) ** q
        integral = np.trapezoid(v, xs)
        # analytic tail of |P_t|^q beyond the window: (t/pi)^q x^{1-2q}/(2q-1)
        X = xs[-1]
        integral += 2.0 * (t / math.pi) ** q * X ** (1 - 2 * q) / (2 * q - 1)
        vals.append(integral ** (power / q))
    expo, _ = fit_power(np.asarray(ts), np.asarray(vals))
    closed = [poisson_kernel_lq_norm(q, t) ** power for t in ts]
    expo_closed, _ = fit_power(np.asarray(ts), np.asarray(closed))
    return float(expo), float(expo_closed)


def poisson_gradient_l1_exponent(ts=(1.0, 2.0, 4.0, 8.0)) -> float:
    """Fitted scaling exponent of ||d/dx P_t||_L1 (reported, not assumed)."""
    vals = []
    for t in ts:
        xs = np.linspace(-4000 * t, 4000 * t, 800001)
        px = -2.0 * t * xs / (math.pi * (xs ** 2 + t ** 2) ** 2)
        vals.append(np.trapezoid(np.abs(px), xs))
    return float(fit_power(np.asarray(ts), np.asarray(vals))[0])


def poisson_extend(f0, window=(-16.0, 16.0), n: int = 4096,
                   s_levels=None) -> GridSolution:
    """Harmonic extension of flat-boundary data by spectral convolution with
    the half-plane kernel; gradients come from the same multipliers."""
    g = make_profile("flat", window=window)
    if s_levels is None:
        s_levels = np.concatenate(([0.0], np.geomspace(1e-3, 6.0, 64)))
    xs = np.linspace(window[0], window[1], n, endpoint=False)
    fv = np.asarray(f0(xs) if callable(f0) else np.interp(xs, f0.x, f0.values))
    pad = 4
    m = n * pad
    buf = np.zeros(m)
    buf[:n] = fv
    # roll so the data sits centered in the padded buffer (reduces wrap)
    buf = np.roll(buf, (m - n) // 2)
    spec = np.fft.fft(buf)
    xi = 2.0 * math.pi * np.fft.fftfreq(m, d=xs[1] - xs[0])
    vals = np.empty((n, len(s_levels)))
    gxs = np.empty_like(vals)
    gts = np.empty_like(vals)
    for j, t in enumerate(s_levels):
        damp = np.exp(-np.abs(xi) * t)
        layer = np.fft.ifft(spec * damp).real
        lx = np.fft.ifft(spec * damp * 1j * xi).real
        lt = np.fft.ifft(spec * damp * (-np.abs(xi))).real
        roll = -(m - n) // 2
        vals[:, j] = np.roll(layer, roll)[:n]
        gxs[:, j] = np.roll(lx, roll)[:n]
        gts[:, j] = np.roll(lt, roll)[:n]
    mesh = GradedMesh(xs, np.asarray(s_levels))
    return GridSolution(mesh, g, vals.ravel(), gxs.ravel(), gts.ravel(),
                        {"problem": "poisson_extension",
                         "decay": "O(|X|^{-1}) for integrable data"})


# ----------------------------------------------------------------------------
# traces
# ----------------------------------------------------------------------------

def trace(u: GridSolution) -> BoundaryFunction:
    nx, ns = u.mesh.shape
    return BoundaryFunction(u.mesh.x_nodes, u._grid(u.values)[:, 0], u.graph)


def trace_bmo_bound(u_family) -> dict:
    """Empirical trace bound into BMO from the homogeneous energy space."""
    ratios = []
    for u in u_family:
        en = u.energy_norm()
        if en < 1e-14:
            ratios.append(0.0)
            continue
        ratios.append(bmo_norm(trace(u)) / en)
    return {"sup_ratio": float(max(ratios)), "count": len(ratios)}


# ----------------------------------------------------------------------------
# representation of the t-derivative through layer potentials
# ----------------------------------------------------------------------------

def representation_residual(G, field: CoefficientField, g: LipschitzGraph,
                            X_batch, ut_boundary, ut_conj_boundary,
                            ut_at, window=None, n_quad: int = 4096) -> dict:
    """Residual of the boundary representation of the t-derivative:

      u_t(X) = int (nu . A^t grad G_X) u_t + (tau . grad G_X) conj(u_t) dsigma

    ut_boundary / ut_conj_boundary are callables of the boundary abscissa;
    ut_at evaluates the left side at interior points."""
    lo, hi = window if window is not None else g.window
    out = []
    for X in np.atleast_2d(np.asarray(X_batch, dtype=float)):
        xs = _graded_line(lo, hi, X[0], n_quad)
        w = _trap_weights(xs) * np.asarray(arc_weight(g, xs))
        Ys = g.point(xs)
        gy = np.atleast_2d(G.grad_y(X, Ys))
        A = field.matrix(xs)
        slope = np.asarray(g.slope(xs))
        rt = np.sqrt(1.0 + slope ** 2)
        nu = np.stack([slope / rt, -1.0 / rt], axis=-1)
        tau = np.stack([1.0 / rt, slope / rt], axis=-1)
        nuAt = np.einsum("ni,nij->nj", nu, A)       # nu . A^t grad = (A^t)^t nu . grad
        kern_k = np.einsum("nj,nj->n", nuAt, gy)
        kern_l = np.einsum("nj,nj->n", tau, gy)
        rhs = ((kern_k * ut_boundary(xs) + kern_l * ut_conj_boundary(xs)) @ w)
        lhs = float(ut_at(X))
        out.append((lhs, rhs, abs(lhs - rhs) / (abs(lhs) + 1e-12)))
    worst = max(r for _, _, r in out)
    return {"points": out, "max_rel": float(worst)}


def _graded_line(lo, hi, around, n):
    base = np.linspace(lo, hi, n)
    if lo < around < hi:
        lad = around + np.concatenate([-np.geomspace(1e-4, 1.0, 40),
                                       np.geomspace(1e-4, 1.0, 40)])
        base = np.unique(np.concatenate([base, lad[(lad > lo) & (lad < hi)]]))
    return base


# ----------------------------------------------------------------------------
# Rellich-type probes
# ----------------------------------------------------------------------------

def rellich_probe(field: CoefficientField, g: LipschitzGraph, data,
                  p: float = 2.0, problem: str = "regularity",
                  levels: int = 2, nx: int = 96, s_min: float = 1e-3,
                  aperture: float = 1.0, cap: float = 2.0,
                  refine_at=(), artificial=None, q_grid=None) -> dict:
    """Boundary-gradient estimate probe: the ratio of the averaged maximal
    function of the gradient to the data norm across mesh refinements, plus
    the pointwise domination constant against maximal functions of the
    tangential derivative and of the t-derivative's maximal function."""
    problem = problem.lower()
    ratios, pointwise = [], []
    for lev in range(levels):
        kw = dict(nx=int(nx * 1.4 ** lev), s_min=s_min / 2.0 ** lev,
                  refine_at=refine_at, artificial=artificial)
        if problem == "regularity":
            u = solve_dirichlet(field, g, data, **kw)
            den = data.tangential_derivative().lp_norm(p)
        else:
            u = solve_neumann(field, g, data, **kw)
            den = data.lp_norm(p)
        qs = q_grid if q_grid is not None else np.linspace(
            0.45 * g.window[0], 0.45 * g.window[1], 15)
        qw = np.gradient(qs) * np.asarray(arc_weight(g, qs))
        ntg = np.array([nt_max_avg(u, q, aperture, cap) for q in qs])
        num = float(((ntg ** p) @ qw) ** (1.0 / p))
        if den < 1e-14:
            ratios.append(0.0 if num < 1e-10 else np.inf)
            continue
        ratios.append(num / den)
        # pointwise domination by maximal functions
        ut = t_derivative(u)
        tr_u = trace(u).tangential_derivative()
        nut = boundary_function(
            g, np.array([nt_max(ut, q, aperture, cap) for q in qs]), x=qs)
        m1 = np.array([hl_maximal(tr_u, q) for q in qs])
        m2 = np.array([hl_maximal(nut, q) for q in qs])
        cpt = ntg / np.where(m1 + m2 > 1e-14, m1 + m2, np.inf)
        pointwise.append(float(np.nanmax(cpt)))
    drift = ratios[-1] / (ratios[0] + 1e-300) if ratios else np.inf
    return {"problem": problem, "p": p, "ratios": ratios,
            "pointwise_constants": pointwise, "drift": float(drift),
            "stable": bool(np.isfinite(drift) and 0.5 <= drift <= 2.0)}
