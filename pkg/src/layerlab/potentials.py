"""Singular-integral layer potentials on the graph boundary.

The boundary kernel packs the two components of the pole-offset gradient of
the fundamental solution into a rank-one 2x2 matrix; the tilde variant does
the same with the pole gradient of the conjugate fundamental solution.  On
top of these sit the truncated/maximal operators, the double-layer and
tangential potentials with their vanishing-offset limits, the multiplier
matrices built from the boundary frame, and the weak-boundedness / BMO
pairing probes.

Quadrature follows one rule everywhere: composite Gauss-Legendre panels
graded dyadically toward the singular abscissa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField
from .funcestim import BoundaryFunction, H1Atom, hilbert
from .geometry import LipschitzGraph, arc_weight
from .greenfn import ConjugateGreen
from .quadrature import (fit_power, graded_edges, panels_rule,
                         singular_interval_rule)

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# kernels
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CZKernel:
    """Matrix kernel with an offset parameter h >= 0.

    evaluate(x, y, h) is vectorised over y and returns (n, 2, 2).  For the
    boundary kernel both rows equal the gradient of the fundamental solution
    with pole lifted h above the boundary point at x.
    """

    graph: LipschitzGraph
    evaluate_rows: callable          # (x, y_array, h) -> (n, 2) row vector
    name: str = "K"

    def evaluate(self, x: float, y, h: float = 0.0) -> np.ndarray:
        rows = np.atleast_2d(self.evaluate_rows(x, np.atleast_1d(y), h))
        K = np.empty((len(rows), 2, 2))
        K[:, 0, :] = rows
        K[:, 1, :] = rows
        return K


def kernel_K(g: LipschitzGraph, G, h: float, x: float, y) -> np.ndarray:
    """Boundary kernel rows from the field-point gradient of G."""
    return _green_kernel(g, G).evaluate(x, y, h)


def _green_kernel(g: LipschitzGraph, G) -> CZKernel:
    def rows(x, ys, h):
        X = np.array([x, float(g.value(x)) + h])
        Ys = g.point(ys)
        if h == 0.0:
            same = np.isclose(ys, x)
            if same.any():
                raise ValueError("kernel pole: x == y at zero offset")
        return np.atleast_2d(G.grad_y(X, Ys))

    return CZKernel(g, rows, name="K")


def kernel_Ktilde(g: LipschitzGraph, G_adj, field: CoefficientField,
                  h: float, x: float, y) -> np.ndarray:
    """Tilde kernel rows from the pole gradient of the conjugate of the
    adjoint fundamental solution."""
    return _conjugate_kernel(g, G_adj, field).evaluate(x, y, h)


def _conjugate_kernel(g: LipschitzGraph, G_adj, field: CoefficientField) -> CZKernel:
    def rows(x, ys, h):
        X = np.array([x, float(g.value(x)) + h])
        ys = np.atleast_1d(ys)
        if h == 0.0 and np.isclose(ys, x).any():
            raise ValueError("kernel pole: x == y at zero offset")
        on_ray = np.isclose(ys, X[0]) & (np.asarray(g.value(ys)) >= X[1])
        if on_ray.any():
            raise ValueError("field point on the excluded upward ray")
        cg = ConjugateGreen(G_adj, field, X)
        return np.atleast_2d(cg.grad_x(g.point(ys)))

    return CZKernel(g, rows, name="Ktilde")


def cz_constants(kernel: CZKernel, pairs_rng, n_pairs: int = 2000,
                 h: float = 0.0, span: float = 4.0,
                 holder_ratio: float = 0.25, flat_cone: float | None = None,
                 x_range=(-3.0, 3.0)) -> dict:
    """Empirical Calderon-Zygmund constants on random pairs and triples.

    Fits the size constant sup |K| |x-y| and the two Hoelder quotients with
    a log-log exponent fit across separation scales; admissible triples obey
    the half-separation constraint.  flat_cone restricts sampled pairs to
    |phi(x)+h-phi(y)| <= flat_cone * |x-y| (the tilde-kernel evaluation
    region)."""
    rng = pairs_rng
    g = kernel.graph

    def admissible(xx, yy):
        if flat_cone is None:
            return True
        return abs(float(g.value(xx)) + h - float(g.value(yy))) \
            <= flat_cone * abs(xx - yy)

    size_vals = []
    hold_x, hold_y = [], []       # (increment, |x-y|, |x'-y| or |x-y'|, osc)
    tries = 0
    while len(size_vals) < n_pairs and tries < 50 * n_pairs:
        tries += 1
        x = rng.uniform(*x_range)
        d = span * 2.0 ** -rng.uniform(0.0, 10.0)
        y = x + rng.choice([-1.0, 1.0]) * d
        if not admissible(x, y):
            continue
        K = kernel.evaluate(x, np.array([y]), h)[0]
        size_vals.append(np.abs(K).max() * abs(x - y))
        dx = holder_ratio * d * rng.uniform(0.3, 1.0)
        x2 = x + rng.choice([-1.0, 1.0]) * dx
        if admissible(x2, y):
            K2 = kernel.evaluate(x2, np.array([y]), h)[0]
            hold_x.append((dx, abs(x - y), abs(x2 - y), np.abs(K - K2).max()))
        dy = holder_ratio * d * rng.uniform(0.3, 1.0)
        y2 = y + rng.choice([-1.0, 1.0]) * dy
        if admissible(x, y2):
            K3 = kernel.evaluate(x, np.array([y2]), h)[0]
            hold_y.append((dy, abs(x - y), abs(x - y2), np.abs(K - K3).max()))
    C_size = float(np.max(size_vals))

    def fit_alpha(data):
        # osc * (r+r') ~ C (incr / r)^alpha at matched separations
        inc = np.array([q[0] for q in data])
        rs = np.array([q[1] + q[2] for q in data])
        osc = np.array([q[3] for q in data])
        mask = osc * rs > 1e-13
        if mask.sum() < 10:
            return 1.0
        a, _ = fit_power((inc / rs)[mask], (osc * rs)[mask])
        return float(np.clip(a, 1e-3, 1.0))

    alpha = min(fit_alpha(hold_x), fit_alpha(hold_y))

    def cert(data):
        if not data:
            return 0.0
        inc = np.array([q[0] for q in data])
        rs = np.array([q[1] + q[2] for q in data])
        osc = np.array([q[3] for q in data])
        return float((osc * rs ** (1 + alpha) / inc ** alpha).max())

    return {"C_size": C_size, "alpha": alpha,
            "C_holder_x": cert(hold_x), "C_holder_y": cert(hold_y),
            "samples": int(len(size_vals))}


# ----------------------------------------------------------------------------
# truncated and maximal operators
# ----------------------------------------------------------------------------

def truncated_apply(kernel: CZKernel, delta: float, F, x: float,
                    window=None, h: float = 0.0, n_gl: int = 16,
                    levels: int = 40) -> np.ndarray:
    """Truncated singular integral: quadrature of K(x, y) F(y) over
    {|y - x| >= delta} with dyadically graded panels toward the cutoff."""
    if delta <= 0:
        raise ValueError("truncation radius must be positive")
    g = kernel.graph
    lo, hi = window if window is not None else g.window
    ys, ws = singular_interval_rule(lo, hi, x, cutoff=delta,
                                    levels=levels, n=n_gl)
    if len(ys) == 0:
        return np.zeros((2, 2))
    K = kernel.evaluate(x, ys, h)
    Fv = _eval_matrix_function(F, ys)
    return np.einsum("nij,njk,n->ik", K, Fv, ws)


def maximal_apply(kernel: CZKernel, F, x: float, delta_grid=None,
                  window=None, h: float = 0.0) -> float:
    """Maximal truncation: sup over the cutoff grid of |truncated integral|."""
    g = kernel.graph
    lo, hi = window if window is not None else g.window
    if delta_grid is None:
        delta_grid = np.geomspace(1e-3, hi - lo, 36)
    best = 0.0
    for d in delta_grid:
        val = truncated_apply(kernel, d, F, x, window=window, h=h)
        best = max(best, float(np.abs(val).max()))
    return best


def _eval_matrix_function(F, ys):
    if callable(F):
        out = np.asarray(F(ys), dtype=float)
    else:
        out = np.asarray(F, dtype=float)
    if out.ndim == 1:
        eye = np.eye(2)
        return out[:, None, None] * eye[None, :, :]
    return out


# ----------------------------------------------------------------------------
# layer potentials
# ----------------------------------------------------------------------------

def _layer_quadrature(g, G, field, f, x, h, which, window, n_gl=16, levels=48):
    # the lifted pole keeps the integrand smooth at scale h; panels graded
    # all the way down resolve it without excluding any mass
    lo, hi = window
    ys, ws = singular_interval_rule(lo, hi, x, cutoff=0.0,
                                    levels=levels, n=n_gl)
    X = np.array([x, float(g.value(x)) + h])
    Ys = g.point(ys)
    gy = np.atleast_2d(G.grad_y(X, Ys))
    slope = np.asarray(g.slope(ys))
    rt = np.sqrt(1.0 + slope ** 2)
    if which == "conormal":
        nu = np.stack([slope / rt, -1.0 / rt], axis=-1)
        A = field.matrix(ys)
        vec = np.einsum("ni,nij->nj", nu, A)     # (A^t nu) rows
    else:
        vec = np.stack([1.0 / rt, slope / rt], axis=-1)
    kern = np.einsum("nj,nj->n", vec, gy)
    fv = np.asarray(f(ys), dtype=float)
    return float((kern * fv * rt) @ ws)


def layer_K(g: LipschitzGraph, G, field: CoefficientField, f, x: float,
            h_seq=None, window=None, rich: bool = True) -> tuple[float, dict]:
    """Double-layer potential value at the boundary point over x: the
    vanishing-offset limit of the conormal-kernel integral, accelerated by
    one Richardson step on the geometric offset sequence, with a Cauchy
    convergence diagnostic."""
    window = window if window is not None else g.window
    if h_seq is None:
        h_seq = 0.02 * 2.0 ** -np.arange(6.0)
    vals = np.array([_layer_quadrature(g, G, field, f, x, h, "conormal", window)
                     for h in h_seq])
    return _offset_limit(vals, h_seq, rich)


def layer_L(g: LipschitzGraph, G, field: CoefficientField, f, x: float,
            h_seq=None, window=None, rich: bool = True) -> tuple[float, dict]:
    """Tangential-kernel potential, same limiting procedure as layer_K."""
    window = window if window is not None else g.window
    if h_seq is None:
        h_seq = 0.02 * 2.0 ** -np.arange(6.0)
    vals = np.array([_layer_quadrature(g, G, field, f, x, h, "tangential", window)
                     for h in h_seq])
    return _offset_limit(vals, h_seq, rich)


def _offset_limit(vals, h_seq, rich):
    diffs = np.abs(np.diff(vals))
    cauchy = bool(len(diffs) >= 2 and diffs[-1] <= max(2.0 * diffs[-2], 1e-13))
    # one Richardson step assuming O(h) truncation of the limit
    limit = 2.0 * vals[-1] - vals[-2] if rich and len(vals) >= 2 else vals[-1]
    return float(limit), {"values": vals.tolist(), "converged": cauchy,
                          "last_diff": float(diffs[-1]) if len(diffs) else 0.0}


def domain_potential(kernel_or_g, G, F, Z, window=None) -> np.ndarray:
    """Kernel integral at an interior point: the pole sits at Z itself, so
    the integrand is smooth and plain graded panels suffice."""
    g = kernel_or_g
    lo, hi = window if window is not None else g.window
    z, r = float(Z[0]), float(Z[1])
    h = r - float(g.value(z))
    if h <= 0:
        raise ValueError("interior evaluation point required")
    kern = _green_kernel(g, G)
    ys, ws = singular_interval_rule(lo, hi, z, cutoff=0.0, levels=40, n=12)
    K = kern.evaluate(z, ys, h)
    Fv = _eval_matrix_function(F, ys)
    return np.einsum("nij,njk,n->ik", K, Fv, ws)


# ----------------------------------------------------------------------------
# boundary multiplier matrices
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BMatrices:
    """The three multiplier matrices of the boundary frame.

    first: columns are the scaled conormal direction A nu and tangent;
    second/third: scalar matrices from the frame pairings against the
    reference direction (1, alpha0) and its quarter turn."""

    graph: LipschitzGraph
    field: CoefficientField
    alpha0: float

    def first(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        slope = np.asarray(self.graph.slope(x))
        A = self.field.matrix(x)
        col1 = np.einsum("nij,nj->ni", A, np.stack([slope, -np.ones_like(slope)], axis=-1))
        col2 = np.stack([np.ones_like(slope), slope], axis=-1)
        return np.stack([col1, col2], axis=-1)      # (n, 2, 2) columns

    def second(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        slope = np.asarray(self.graph.slope(x))
        A = self.field.matrix(x)
        nu_s = np.stack([slope, -np.ones_like(slope)], axis=-1)
        kperp = np.array([-self.alpha0, 1.0])
        diag = np.einsum("nij,nj->ni", A, nu_s) @ kperp
        return diag[:, None, None] * np.eye(2)[None, :, :]

    def third(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        slope = np.asarray(self.graph.slope(x))
        diag = 1.0 + self.alpha0 * slope
        return diag[:, None, None] * np.eye(2)[None, :, :]

    def invertibility(self, x_grid=None) -> dict:
        if x_grid is None:
            x_grid = np.linspace(*self.graph.window, 801)
        out = {}
        for name, fn in (("B1", self.first), ("B2", self.second),
                         ("B3", self.third)):
            M = fn(x_grid)
            dets = np.abs(np.linalg.det(M))
            sup = np.abs(M).max()
            inv_sup = float(np.abs(np.linalg.inv(M)).max()) if dets.min() > 1e-14 else np.inf
            out[name] = {"sup": float(sup), "inv_sup": inv_sup,
                         "min_abs_det": float(dets.min()),
                         "invertible": bool(dets.min() > 1e-12),
                         "worst_x": float(x_grid[int(np.argmin(dets))])}
        out["pass"] = all(out[k]["invertible"] for k in ("B1", "B2", "B3"))
        return out


def build_B(g: LipschitzGraph, field: CoefficientField, alpha0: float) -> BMatrices:
    B = BMatrices(g, field, alpha0)
    rep = B.invertibility()
    if not rep["pass"]:
        bad = {k: v for k, v in rep.items() if k != "pass" and not v["invertible"]}
        raise ValueError(f"multiplier matrix not invertible: {bad}")
    return B


# ----------------------------------------------------------------------------
# normalised bumps and the weak boundedness probe
# ----------------------------------------------------------------------------

def normalized_bump(seed_matrix: np.ndarray, shift: float = 0.0,
                    squeeze: float = 1.0):
    """Smooth matrix bump supported in a radius-10 ball with all seminorms
    sup |d^beta f| <= 1 for beta = 0, 1, 2."""
    M = np.asarray(seed_matrix, dtype=float)

    def fn(x):
        x = np.asarray(x, dtype=float)
        u = (x - shift) * squeeze / 10.0
        base = np.where(np.abs(u) < 1.0,
                        np.exp(1.0 - 1.0 / np.clip(1.0 - u * u, 1e-300, None)),
                        0.0)
        return base[..., None, None] * M[None, :, :]

    # normalise the three seminorms numerically
    xs = np.linspace(shift - 10.5, shift + 10.5, 4001)
    v = fn(xs)[:, 0, 0] / (M[0, 0] if M[0, 0] != 0 else M.max())
    d1 = np.gradient(v, xs)
    d2 = np.gradient(d1, xs)
    scale = max(np.abs(v).max(), np.abs(d1).max(), np.abs(d2).max(),
                1e-12) * max(np.abs(M).max(), 1e-12)

    def bump(x):
        return fn(x) / scale

    return bump


def pair_operator(g: LipschitzGraph, G, F_fn, G_fn, h: float,
                  outer_window, inner_window=None, n_outer: int = 48,
                  n_gl: int = 12, levels: int = 30, outer_gl: int = 4,
                  inner_cutoff=None, splits=None) -> float:
    """Bilinear pairing <G, T F> at offset h: the trace inner product of the
    test matrix against the kernel-smeared trial matrix, with the inner
    integral panel-graded toward the moving singular abscissa."""
    lo, hi = outer_window
    ilo, ihi = inner_window if inner_window is not None else outer_window
    kern = _green_kernel(g, G)
    if splits is None:
        splits = getattr(G, "field", None).jump_points if hasattr(G, "field") else ()
    xs, wx = panels_rule(np.linspace(lo, hi, n_outer + 1), outer_gl)
    cutoff = max(h / 4, 1e-12) if inner_cutoff is None else inner_cutoff
    total = 0.0
    for x, w in zip(xs, wx):
        ys, wy = singular_interval_rule(ilo, ihi, x, cutoff=cutoff,
                                        levels=levels, n=n_gl, splits=splits)
        K = kern.evaluate(x, ys, h)
        Gx = np.asarray(G_fn(np.array([x])))[0]
        Fy = np.asarray(F_fn(ys))
        inner = np.einsum("ij,nik,nkl,n->jl", Gx, K, Fy, wy)
        total += w * np.trace(inner)
    return float(total)


def wbp_probe(g: LipschitzGraph, G, field: CoefficientField, B_left, B_right,
              bump_pairs, R_grid=None, h_rule=None, window_pad: float = 1.0,
              n_outer: int = 48, levels: int = 30) -> dict:
    """Weak boundedness probe for M_{B_left^t} T M_{B_right}: the scaled
    pairing R |<G_R, T F_R>| over dilated normalised bumps, reported as the
    sup over the scale grid and the bump battery."""
    if R_grid is None:
        R_grid = 2.0 ** np.arange(-5.0, 5.01, 1.0)
    sup = 0.0
    table = []
    for R in R_grid:
        h = (h_rule(R) if h_rule else 1e-3 * R)
        for Fb, Gb in bump_pairs:
            def F_fn(y, Fb=Fb, R=R):
                return _apply_matrix(B_right, y) @ _dilate(Fb, R)(y)

            def G_fn(x, Gb=Gb, R=R):
                return _apply_matrix(B_left, x) @ _dilate(Gb, R)(x)

            window = (-10.5 * R - window_pad, 10.5 * R + window_pad)
            val = pair_operator(g, G, F_fn, G_fn, h, window,
                                n_outer=n_outer, levels=levels)
            table.append({"R": float(R), "pairing": val,
                          "scaled": float(R * abs(val))})
            sup = max(sup, R * abs(val))
    return {"sup_R_pairing": float(sup), "table": table}


def _dilate(bump, R):
    def fn(x):
        return bump(np.asarray(x) / R) / R
    return fn


def _apply_matrix(B, x):
    if B is None:
        return np.broadcast_to(np.eye(2), (len(np.atleast_1d(x)), 2, 2)).copy()
    return B(np.atleast_1d(x))


# ----------------------------------------------------------------------------
# BMO pairing of T against bounded matrix functions
# ----------------------------------------------------------------------------

def bmo_pairing(g: LipschitzGraph, G, B0_fn, atom: H1Atom,
                eta_factor: float = 2.0, h: float = 5e-4,
                far_window: float = 120.0) -> float:
    """Pairing of an atom against T(B0) through the cutoff decomposition:
    the near part pairs the atom with T of the cutoff-localised symbol, the
    far part integrates the atom-smeared kernel against the tail.

    The cutoff is identically one on the doubled atom interval and dies at
    eta_factor times the double.  All quadrature families are anchored to
    the atom alone (never to the cutoff), so recomputing with a different
    cutoff reuses identical nodes and the cutoff independence of the sum is
    preserved down to the quadrature floor."""
    if not atom.check():
        raise ValueError("atom violates the support/size/cancellation rules")
    lo_a, hi_a = atom.interval
    c, r = 0.5 * (lo_a + hi_a), 0.5 * (hi_a - lo_a)
    one_r, supp_r = 2.0 * r, 2.0 * r * eta_factor

    def smoothstep(v):
        # C-infinity step: 0 for v <= 0, 1 for v >= 1
        v = np.clip(v, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            sa = np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)
            sb = np.where(v < 1, np.exp(-1.0 / np.where(v < 1, 1.0 - v, 1.0)), 0.0)
        return sa / (sa + sb)

    def eta(y):
        y = np.asarray(y, dtype=float)
        u = (np.abs(y - c) - one_r) / (supp_r - one_r)
        return 1.0 - smoothstep(u)

    def atom_matrix(x):
        v = np.interp(np.asarray(x), atom.x, atom.values, left=0.0, right=0.0)
        return v[:, None, None] * np.eye(2)[None, :, :]

    def near_F(y):
        return eta(y)[:, None, None] * np.asarray(B0_fn(y))

    # one shared atom-variable rule for both parts, so the smearing errors
    # cancel when the pairing is recomputed with another cutoff
    n_atom = 48
    near = pair_operator(g, G, near_F, atom_matrix, h,
                         outer_window=(lo_a, hi_a),
                         inner_window=(c - far_window, c + far_window),
                         n_outer=n_atom, n_gl=20, levels=48, outer_gl=8,
                         inner_cutoff=0.0)

    # far part on a cutoff-independent log-radial panel family around the
    # atom: the smeared kernel is smooth out here because the atom support
    # stays far from every tail node
    kern = _green_kernel(g, G)
    xa, wa = panels_rule(np.linspace(lo_a, hi_a, n_atom + 1), 8)
    va = np.interp(xa, atom.x, atom.values, left=0.0, right=0.0)
    ladder = one_r * 2.0 ** (np.arange(0, 12 * 14 + 1) / 12.0)
    ladder = ladder[ladder <= far_window]
    jumps = getattr(G, "field", None).jump_points if hasattr(G, "field") else ()
    far = 0.0
    for sgn in (-1.0, 1.0):
        edges = c + sgn * ladder
        cuts = [p for p in jumps
                if min(edges[0], edges[-1]) < p < max(edges[0], edges[-1])]
        if cuts:
            edges = np.concatenate([edges, np.asarray(cuts)])
        edges = np.sort(edges)
        ys, wy = panels_rule(edges, 16)
        tail = (1.0 - eta(ys)) * wy
        live = tail != 0.0
        if not live.any():
            continue
        smear = np.zeros((int(live.sum()), 2, 2))
        for xx, ww, vv in zip(xa, wa, va):
            if vv == 0.0:
                continue
            smear += (vv * ww) * kern.evaluate(float(xx), ys[live], h)
        B = np.asarray(B0_fn(ys[live]))
        # trace(smear @ B) summed against the tail weights
        far += float(np.einsum("nij,nji,n->", smear, B, tail[live]))
    return float(near + far)


# ----------------------------------------------------------------------------
# operator norm estimates
# ----------------------------------------------------------------------------

def nystrom_matrix(scalar_kernel, x_grid, h: float = 0.0) -> np.ndarray:
    """Dense collocation matrix of a scalar boundary kernel on a uniform
    grid; the diagonal holds the offset-kernel self-interaction (zero when
    h = 0, the principal-value convention for odd kernels)."""
    x = np.asarray(x_grid, dtype=float)
    w = np.gradient(x)
    M = np.empty((len(x), len(x)))
    for i, xi in enumerate(x):
        M[i] = scalar_kernel(xi, x, h) * w
        if h == 0.0:
            M[i, i] = 0.0
    return M


def op_norm_estimate(op, x_grid, p: float = 2.0, trials: int = 12,
                     seed: int = 0) -> float:
    """Operator-norm estimate on the discretised line.

    `op` is a dense matrix or an apply callable.  p = 2 uses power iteration
    on the normal matrix in the weighted inner product (run to convergence
    via the spectral norm for dense input); other p report the best
    randomised ratio, a lower bound only."""
    x = np.asarray(x_grid, dtype=float)
    w = np.gradient(x)

    def norm(v, q):
        if q == np.inf:
            return float(np.abs(v).max())
        return float(((np.abs(v) ** q) @ w) ** (1.0 / q))

    apply_fn = (lambda v: op @ v) if isinstance(op, np.ndarray) else op
    rng = np.random.default_rng(seed)
    if p == 2.0 and isinstance(op, np.ndarray):
        sq = np.sqrt(w)
        return float(np.linalg.norm((sq[:, None] * op) / sq[None, :], 2))
    best = 0.0
    for _ in range(trials):
        v = rng.standard_normal(len(x))
        best = max(best, norm(apply_fn(v), p) / norm(v, p))
    return float(best)
