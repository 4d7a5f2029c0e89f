"""Coefficient matrices A(x), ellipticity checks, the triangular-reduction
change of variables, and conjugate-pair algebra.

Matrices are t-independent by construction: every entry is a function of the
horizontal coordinate only.  Fields are immutable and evaluation is pure.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import LipschitzGraph, from_samples
from .quadrature import primitive

Entry = Callable[[np.ndarray], np.ndarray]


def _const(c: float) -> Entry:
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


@dataclass(frozen=True)
class CoefficientField:
    """2x2 coefficient matrix A(x) with ellipticity bounds.

    lam / Lam are the claimed constants: lam |xi|^2 <= xi . A xi and
    max_ij |a_ij| <= Lam.  jump_points lists declared discontinuities so
    quadratures can split there.  identity_radius (optional) asserts A = I
    for |x| beyond it.
    """

    a11: Entry
    a12: Entry
    a21: Entry
    a22: Entry
    lam: float
    Lam: float
    jump_points: tuple[float, ...] = ()
    identity_radius: float | None = None
    name: str = "custom"

    def matrix(self, x) -> np.ndarray:
        """A(x) with shape x.shape + (2, 2)."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (2, 2))
        out[..., 0, 0] = self.a11(x)
        out[..., 0, 1] = self.a12(x)
        out[..., 1, 0] = self.a21(x)
        out[..., 1, 1] = self.a22(x)
        return out

    def det(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a11(x) * self.a22(x) - self.a12(x) * self.a21(x)

    def transpose(self) -> "CoefficientField":
        return dataclasses.replace(self, a12=self.a21, a21=self.a12,
                                   name=self.name + "^t")

    def apply(self, x, v) -> np.ndarray:
        """A(x) v for a stack of 2-vectors v."""
        return np.einsum("...ij,...j->...i", self.matrix(x), np.asarray(v, float))

    @property
    def is_constant(self) -> bool:
        xs = np.linspace(-7.3, 7.9, 41)
        M = self.matrix(xs)
        return bool(np.all(np.abs(M - M[0]) < 1e-14))

    def constant_matrix(self) -> np.ndarray:
        return self.matrix(np.array(0.37))


IDENTITY = CoefficientField(_const(1.0), _const(0.0), _const(0.0), _const(1.0),
                            1.0, 1.0, identity_radius=0.0, name="identity")


@dataclass(frozen=True)
class EllipticityReport:
    lam_emp: float
    Lam_emp: float
    passed: bool
    violations: tuple


def check_ellipticity(field: CoefficientField, x_grid=None, xi_grid=None) -> EllipticityReport:
    """Empirical ellipticity scan over an x-grid and a direction grid.

    lam_emp is the minimum of xi.A(x)xi / |xi|^2, Lam_emp the largest entry
    magnitude; the report passes when the claimed (lam, Lam) are respected.
    """
    if x_grid is None:
        x_grid = np.linspace(-10, 10, 401)
    if xi_grid is None:
        ang = np.linspace(0, np.pi, 64, endpoint=False)
        xi_grid = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    x_grid = np.asarray(x_grid, dtype=float)
    xi = np.asarray(xi_grid, dtype=float)
    M = field.matrix(x_grid)                       # (nx, 2, 2)
    quad = np.einsum("di,xij,dj->xd", xi, M, xi)   # xi . A xi
    quad = quad / np.sum(xi * xi, axis=-1)[None, :]
    lam_emp = float(quad.min())
    Lam_emp = float(np.abs(M).max())
    passed = (lam_emp >= field.lam - 1e-12) and (Lam_emp <= field.Lam + 1e-12)
    violations = ()
    if not passed:
        bad = np.argwhere(quad < field.lam - 1e-12)
        violations = tuple((float(x_grid[i]), tuple(xi[j])) for i, j in bad[:8])
    return EllipticityReport(lam_emp, Lam_emp, passed, violations)


# ----------------------------------------------------------------------------
# triangular reduction (change of variables)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TriangularReduction:
    """Change of variables (y,s) -> (f(y), s + g(y)) and the reduced matrix.

    forward maps new coordinates into the original ones; B is the pulled-back
    coefficient field on the new domain, certified triangular within tol_form.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    g_shift: Callable[[np.ndarray], np.ndarray]
    B: CoefficientField
    new_profile: LipschitzGraph
    lam_prime: float
    tol_form: float
    kind: str  # "upper" | "lower"


def _tabulate_increasing(fn, lo, hi, n=2049):
    xs = np.linspace(lo, hi, n)
    vals = np.asarray(fn(xs), dtype=float)
    if np.any(np.diff(vals) <= 0):
        raise ValueError("primitive is not strictly increasing")
    return xs, vals


def _reduce(field: CoefficientField, g: LipschitzGraph, kind: str,
            tol_form: float = 1e-10, n_grid: int = 2049) -> TriangularReduction:
    lo, hi = g.window
    xs_chk = np.linspace(lo, hi, 801)
    if np.any(field.a11(xs_chk) < 0.5 * field.lam):
        raise ValueError("a11 dips below lam/2; reduction rejected")

    # f^{-1} is the primitive of 1/a11 (anchored at 0); tabulate and invert.
    finv = primitive(lambda x: 1.0 / field.a11(np.asarray(x)), anchor=0.0,
                     tol=1e-12, breakpoints=field.jump_points)
    xs, finv_vals = _tabulate_increasing(finv, lo, hi, n_grid)

    def f(y):
        return np.interp(np.asarray(y, dtype=float), finv_vals, xs)

    y_lo, y_hi = float(finv_vals[0]), float(finv_vals[-1])
    jumps_y = tuple(float(finv(p)) for p in field.jump_points)

    src = field.a21 if kind == "upper" else field.a12
    gprime = lambda y: src(f(y))
    gfun = primitive(gprime, anchor=0.0, tol=1e-12, breakpoints=jumps_y)
    ys = np.linspace(y_lo, y_hi, n_grid)
    g_vals = np.asarray(gfun(ys), dtype=float)

    def g_shift(y):
        return np.interp(np.asarray(y, dtype=float), ys, g_vals)

    def forward(P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return np.stack([f(P[:, 0]), P[:, 1] + g_shift(P[:, 0])], axis=-1)

    def inverse(P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        y = np.interp(P[:, 0], xs, finv_vals)
        return np.stack([y, P[:, 1] - g_shift(y)], axis=-1)

    # standard divergence-form pullback B = (det DPhi) DPhi^{-1} A DPhi^{-t}
    def B_at(y):
        y = np.asarray(y, dtype=float)
        x = f(y)
        fp = field.a11(x)                     # f'(y) = a11(f(y))
        gp = src(x)
        A = field.matrix(x)
        Dinv = np.zeros(y.shape + (2, 2))
        Dinv[..., 0, 0] = 1.0 / fp
        Dinv[..., 1, 0] = -gp / fp
        Dinv[..., 1, 1] = 1.0
        return fp[..., None, None] * np.einsum("...ij,...jk,...lk->...il",
                                               Dinv, A, Dinv)

    def entry(i, j):
        return lambda y: B_at(y)[..., i, j]

    lam_prime = float(field.det(np.linspace(lo, hi, 801)).min())
    if lam_prime <= 0:
        raise ValueError("det A is not positive; reduced d entry degenerates")
    B = CoefficientField(entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1),
                         lam=_emp_lam(B_at, y_lo, y_hi),
                         Lam=float(np.abs(B_at(np.linspace(y_lo, y_hi, 801))).max()) + 1e-12,
                         jump_points=jumps_y, name=f"{field.name}|{kind}")

    # certify the triangular form
    yy = np.linspace(y_lo, y_hi, 801)
    Bv = B_at(yy)
    unit_err = float(np.abs(Bv[:, 0, 0] - 1.0).max())
    zero_err = float(np.abs(Bv[:, 1, 0]).max()) if kind == "upper" \
        else float(np.abs(Bv[:, 0, 1]).max())
    if max(unit_err, zero_err) > tol_form:
        raise ValueError(f"triangular form violated: unit={unit_err:.2e} "
                         f"zero={zero_err:.2e}")

    # new boundary profile: psi(y) = phi(f(y)) - g(y)
    psi_y = np.linspace(y_lo, y_hi, n_grid)
    psi_vals = np.asarray(g.value(f(psi_y)), dtype=float) - np.asarray(g_shift(psi_y))
    new_profile = from_samples(psi_y, psi_vals, name=f"{g.name}|{field.name}",
                               window=(y_lo, y_hi))
    return TriangularReduction(forward, inverse, f, g_shift, B, new_profile,
                               lam_prime, tol_form, kind)


def _emp_lam(B_at, y_lo, y_hi):
    yy = np.linspace(y_lo, y_hi, 801)
    Bv = B_at(yy)
    ang = np.linspace(0, np.pi, 32, endpoint=False)
    xi = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    quad = np.einsum("di,xij,dj->xd", xi, Bv, xi)
    return float(quad.min())


def reduce_upper(field: CoefficientField, g: LipschitzGraph,
                 tol_form: float = 1e-10) -> TriangularReduction:
    """Reduction to upper-triangular B = (1 c; 0 d) with d = det A o f."""
    return _reduce(field, g, "upper", tol_form)


def reduce_lower(field: CoefficientField, g: LipschitzGraph,
                 tol_form: float = 1e-10) -> TriangularReduction:
    """Reduction to lower-triangular (1 0; c d) form."""
    return _reduce(field, g, "lower", tol_form)


def conjugate_matrix(field: CoefficientField) -> CoefficientField:
    """Conjugate coefficient matrix A^t / det A."""
    xs = np.linspace(-10, 10, 801)
    dets = field.det(xs)
    if np.any(dets <= 0):
        raise ValueError("singular determinant; conjugate matrix undefined")

    def entry(fn_t):
        return lambda x: fn_t(np.asarray(x)) / field.det(np.asarray(x))

    tilde = CoefficientField(
        entry(field.a11), entry(field.a21), entry(field.a12), entry(field.a22),
        lam=field.lam / float(dets.max()),
        Lam=float(np.abs(field.matrix(xs)).max() / dets.min()) + 1e-12,
        jump_points=field.jump_points, name=f"conj({field.name})")
    return tilde


# ----------------------------------------------------------------------------
# conjugate solution fields on meshes
# ----------------------------------------------------------------------------

def conjugate_field(u, field: CoefficientField):
    """Conjugate of a mesh solution via vertical-ray path integrals.

    u is a grid solution (mesh with x-major node layout, nodal values and
    gradients); the conjugate is anchored so that it vanishes at the top-left
    mesh corner, integrating first along the top edge and then down each
    vertical column.  Its gradient field is assigned exactly from the
    defining quarter-turn system, and the divergence defect of A grad u is
    reported as the path-dependence estimate.
    """
    mesh, g = u.mesh, u.graph
    xs, ss = mesh.x_nodes, mesh.s_levels
    nx, ns = mesh.shape
    vals = u.values.reshape(nx, ns)
    ux = u.grad_x.reshape(nx, ns)
    ut = u.grad_t.reshape(nx, ns)

    A = field.matrix(xs)                                   # (nx, 2, 2)
    flux1 = A[:, 0, 0, None] * ux + A[:, 0, 1, None] * ut  # (A grad u)_1
    flux2 = A[:, 1, 0, None] * ux + A[:, 1, 1, None] * ut  # (A grad u)_2

    # top edge: t = phi(x) + s_top is not a level line, so the derivative of
    # conj along it is conj_x + phi' conj_t = -(A grad u)_2 + phi' (A grad u)_1
    phi_p = g.slope(xs)
    top = -flux2[:, -1] + phi_p * flux1[:, -1]
    top_line = _cumtrapz(top, xs)

    # columns: d/dt conj = (A grad u)_1, integrated downward from the top.
    conj = np.empty_like(vals)
    for i in range(nx):
        col = _cumtrapz(flux1[i, ::-1], ss[::-1])          # from top downward
        conj[i] = top_line[i] + col[::-1]

    res = divergence_defect(u, field)
    out = dataclasses.replace(u, values=conj.ravel(), grad_x=(-flux2).ravel(),
                              grad_t=flux1.ravel())
    return out, res


def _cumtrapz(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def divergence_defect(u, field: CoefficientField) -> float:
    """Max loop circulation of the rotated flux over mesh cells, normalised
    by the flux magnitude; zero iff A grad u is discretely divergence free."""
    mesh = u.mesh
    xs, ss = mesh.x_nodes, mesh.s_levels
    nx, ns = mesh.shape
    ux = u.grad_x.reshape(nx, ns)
    ut = u.grad_t.reshape(nx, ns)
    A = field.matrix(xs)
    f1 = A[:, 0, 0, None] * ux + A[:, 0, 1, None] * ut
    f2 = A[:, 1, 0, None] * ux + A[:, 1, 1, None] * ut
    # circulation of (-f2, f1) . dl around each cell (midpoint rule)
    dx = np.diff(xs)[:, None]
    ds = np.diff(ss)[None, :]
    bottom = 0.5 * (-f2[:-1, :-1] - f2[1:, :-1]) * dx
    top = -0.5 * (-f2[:-1, 1:] - f2[1:, 1:]) * dx
    right = 0.5 * (f1[1:, :-1] + f1[1:, 1:]) * ds
    left = -0.5 * (f1[:-1, :-1] + f1[:-1, 1:]) * ds
    circ = bottom + top + right + left
    scale = np.abs(f1).max() + np.abs(f2).max() + 1e-300
    return float(np.abs(circ).max() / scale)


# ----------------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------------

def make_field(spec: str) -> CoefficientField:
    """Named coefficient fields.

    "identity"; "kkpt:h" (piecewise rotation, m(x) = h sign x); "rot:h"
    (constant rotation part); "diag:d1:d2"; "bump[:amp]" (smooth
    non-symmetric perturbation of I); "sym-bump[:amp]"; "upper:c:d";
    "csv:PATH" with columns x, a11, a12, a21, a22.
    """
    parts = spec.split(":")
    kind = parts[0]
    if kind == "identity":
        return IDENTITY
    if kind == "kkpt":
        h = float(parts[1]) if len(parts) > 1 else 1.0

        def m(x):
            return h * np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0)

        return CoefficientField(_const(1.0), m, lambda x: -m(x), _const(1.0),
                                1.0, max(1.0, abs(h)), jump_points=(0.0,),
                                name=f"kkpt:{h:g}")
    if kind == "rot":
        h = float(parts[1]) if len(parts) > 1 else 1.0
        return CoefficientField(_const(1.0), _const(h), _const(-h), _const(1.0),
                                1.0, max(1.0, abs(h)), name=f"rot:{h:g}")
    if kind == "diag":
        d1, d2 = float(parts[1]), float(parts[2])
        return CoefficientField(_const(d1), _const(0.0), _const(0.0), _const(d2),
                                min(d1, d2), max(abs(d1), abs(d2)),
                                name=f"diag:{d1:g}:{d2:g}")
    if kind == "upper":
        c, d = float(parts[1]), float(parts[2])
        lam = min(np.linalg.eigvalsh(np.array([[1.0, c / 2], [c / 2, d]])))
        return CoefficientField(_const(1.0), _const(c), _const(0.0), _const(d),
                                float(lam), max(1.0, abs(c), abs(d)),
                                name=f"upper:{c:g}:{d:g}")
    if kind in ("bump", "sym-bump"):
        amp = float(parts[1]) if len(parts) > 1 else 0.5
        if kind == "bump":
            S = np.array([[0.5, 0.45], [0.05, 0.4]])
        else:
            S = np.array([[0.6, 0.2], [0.2, 0.4]])

        def entry(i, j):
            base = 1.0 if i == j else 0.0
            return lambda x: base + amp * S[i, j] * np.exp(-np.asarray(x, float) ** 2)

        sym = 0.5 * (S + S.T)
        lam = 1.0 + amp * min(0.0, float(np.linalg.eigvalsh(sym).min()))
        return CoefficientField(entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1),
                                lam, 1.0 + amp * float(np.abs(S).max()),
                                identity_radius=6.0, name=f"{kind}:{amp:g}")
    if kind == "csv":
        data = np.loadtxt(parts[1], delimiter=",")
        xs = data[:, 0]

        def col(j):
            return lambda x: np.interp(np.asarray(x, dtype=float), xs, data[:, j])

        M = data[:, 1:].reshape(-1, 2, 2)
        sym = 0.5 * (M + np.swapaxes(M, 1, 2))
        lam = float(min(np.linalg.eigvalsh(s).min() for s in sym))
        return CoefficientField(col(1), col(2), col(3), col(4),
                                lam, float(np.abs(data[:, 1:]).max()), name=spec)
    raise ValueError(f"unknown coefficient spec {spec!r}")


def kkpt_h(field: CoefficientField) -> float | None:
    """Return h when the field is the piecewise-rotation preset, else None."""
    if field.name.startswith("kkpt:"):
        return float(field.name.split(":")[1])
    return None
