"""Rising-sun replacement steps, the oscillation-shrinking schedule in exact
rational arithmetic, the corona decomposition tree, and the bound-transfer
probe.

The replacement step works on piecewise-linear profiles and is exact: the
envelope of the shifted primitive is computed cell by cell with the crossing
abscissae inserted, so the retained set is a finite union of intervals, the
replacement agrees with the profile there identically, and the slope window
holds at every sample.

Branch selection tries both one-sided windows and keeps the larger retained
set; a mass-balance argument over the shadow components shows the better
branch always retains at least a third of the interval, which is stronger
than the certified bound |E| >= |I| / (3 sqrt(1 + (k + eps)^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import LipschitzGraph, from_samples


# ----------------------------------------------------------------------------
# the replacement step
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SunriseStep:
    interval: tuple[float, float]
    retained: tuple[tuple[float, float], ...]
    branch: str                     # "upper" | "lower"
    x: np.ndarray                   # piecewise-linear replacement profile
    vals: np.ndarray
    measure: float
    measure_bound: float
    new_center: float
    new_oscillation: float

    @property
    def measure_ratio(self) -> float:
        lo, hi = self.interval
        return self.measure / (hi - lo)

    def profile(self) -> LipschitzGraph:
        return from_samples(self.x, self.vals, name="sunrise",
                            window=self.interval)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape, dtype=bool)
        for a, b in self.retained:
            out |= (pts >= a) & (pts <= b)
        return out


def _running_envelope(x, gvals):
    """Left-to-right running maximum of a piecewise-linear function.

    Returns the envelope nodes (x with crossings inserted), envelope values,
    and the retained intervals where the envelope touches the function along
    a whole segment."""
    env_x = [x[0]]
    env_v = [gvals[0]]
    retained = []
    m = gvals[0]
    on = True          # currently tracking g itself
    seg_start = x[0]
    for i in range(len(x) - 1):
        x0, x1 = x[i], x[i + 1]
        g0, g1 = gvals[i], gvals[i + 1]
        if on:
            if g1 >= m - 0.0:
                # still climbing (or flat): envelope follows g
                m = g1
                env_x.append(x1)
                env_v.append(m)
            else:
                # shadow opens at x0
                retained.append((seg_start, x0))
                on = False
                env_x.append(x1)
                env_v.append(m)
        else:
            if g1 > m:
                # g re-crosses the running max inside this cell
                xc = x0 + (m - g0) / (g1 - g0) * (x1 - x0)
                env_x.extend([xc, x1])
                env_v.extend([m, g1])
                m = g1
                on = True
                seg_start = xc
            else:
                env_x.append(x1)
                env_v.append(m)
    if on:
        retained.append((seg_start, x[-1]))
    retained = tuple((a, b) for a, b in retained if b > a)
    return np.asarray(env_x), np.asarray(env_v), retained


def _one_branch(x, vals, alpha0, eps0, branch):
    if branch == "upper":
        theta = alpha0 - 0.8 * eps0      # flatten slopes onto this floor
        gv = vals - theta * x
        ex, ev, retained = _running_envelope(x, gv)
        psi = ev + theta * ex
        new_center = alpha0 + eps0 / 10.0
    else:
        theta = alpha0 + 0.8 * eps0      # ceiling
        gv = theta * x - vals
        ex, ev, retained = _running_envelope(x, gv)
        psi = theta * ex - ev
        new_center = alpha0 - eps0 / 10.0
    measure = sum(b - a for a, b in retained)
    return ex, psi, retained, measure, new_center


def rising_sun(g_or_x, vals_or_none=None, alpha0: float | None = None,
               eps0: float | None = None, interval=None) -> SunriseStep:
    """One replacement step on a piecewise-linear profile over an interval.

    Accepts a LipschitzGraph or raw sample arrays.  Both one-sided windows
    are constructed; the branch retaining more measure wins.  All three
    certified properties (retained measure, exact agreement, slope window)
    are re-measured on the output before returning."""
    if isinstance(g_or_x, LipschitzGraph):
        g = g_or_x
        lo, hi = interval if interval is not None else g.window
        n = 2049
        x = np.linspace(lo, hi, n)
        vals = np.asarray(g.value(x), dtype=float)
        if alpha0 is None:
            alpha0 = g.slope_center
        if eps0 is None:
            eps0 = g.oscillation
    else:
        x = np.asarray(g_or_x, dtype=float)
        vals = np.asarray(vals_or_none, dtype=float)
        lo, hi = (x[0], x[-1]) if interval is None else interval
        m = (x >= lo) & (x <= hi)
        x, vals = x[m], vals[m]
    slopes = np.diff(vals) / np.diff(x)
    if np.any(np.abs(slopes - alpha0) > eps0 * (1 + 1e-9) + 1e-12):
        raise ValueError("input slope oscillation exceeds the declared window")

    cands = [(_one_branch(x, vals, alpha0, eps0, b), b)
             for b in ("upper", "lower")]
    (ex, psi, retained, measure, new_center), branch = max(
        cands, key=lambda c: c[0][3])

    k_here = abs(alpha0) + eps0
    bound = (hi - lo) / (3.0 * math.sqrt(1.0 + k_here ** 2))
    step = SunriseStep((float(lo), float(hi)), retained, branch,
                       ex, psi, float(measure), float(bound),
                       float(new_center), 0.9 * eps0)
    _certify(step, x, vals, alpha0, eps0)
    return step


def _certify(step: SunriseStep, x, vals, alpha0, eps0, cell_tol=None):
    lo, hi = step.interval
    if cell_tol is None:
        cell_tol = (x[1] - x[0]) if len(x) > 1 else 0.0
    if step.measure < step.measure_bound - cell_tol - 1e-12:
        raise AssertionError("retained-measure bound violated")
    # exact agreement on the retained set
    mid = 0.5 * (step.x[:-1] + step.x[1:])
    inside = step.contains(mid)
    pv = np.interp(mid[inside], step.x, step.vals)
    fv = np.interp(mid[inside], x, vals)
    if len(pv) and np.abs(pv - fv).max() > 1e-10 * max(1.0, np.abs(vals).max()):
        raise AssertionError("replacement does not agree on the retained set")
    # one-sided slope window almost everywhere (every replacement cell)
    sl = np.diff(step.vals) / np.diff(step.x)
    if step.branch == "upper":
        okay = (sl >= alpha0 - 0.8 * eps0 - 1e-10) & (sl <= alpha0 + eps0 + 1e-10)
    else:
        okay = (sl >= alpha0 - eps0 - 1e-10) & (sl <= alpha0 + 0.8 * eps0 + 1e-10)
    keep = np.diff(step.x) > 1e-13
    if not np.all(okay[keep]):
        raise AssertionError("one-sided slope window violated")


# ----------------------------------------------------------------------------
# the oscillation schedule (exact rationals)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BuildUpSchedule:
    k: Fraction
    eps_target: Fraction
    m: int
    a: tuple[Fraction, ...]         # a_0 ... a_m
    theta: float

    @property
    def a0(self) -> Fraction:
        return self.a[0]


def build_schedule(k, eps_target) -> BuildUpSchedule:
    """Minimal number of shrink steps with (9/10)^m k/8 below the target,
    and the slope budgets a_j = 1/4 - (1/80) sum_{i=j}^{m-1} (9/10)^i, all
    in exact rational arithmetic so a_0 > 1/8 is a theorem, not a float."""
    k = Fraction(str(k)) if not isinstance(k, Fraction) else k
    eps_target = Fraction(str(eps_target)) if not isinstance(eps_target, Fraction) \
        else eps_target
    if eps_target <= 0:
        raise ValueError("target oscillation must be positive")
    q = Fraction(9, 10)
    m = 0
    cur = k / 8
    while cur >= eps_target:
        cur *= q
        m += 1
    tail = Fraction(0)
    a_rev = [Fraction(1, 4)]                 # a_m
    for i in range(m - 1, -1, -1):
        tail += q ** i
        a_rev.append(Fraction(1, 4) - tail / 80)
    a = tuple(reversed(a_rev))
    if not a[0] > Fraction(1, 8):
        raise AssertionError("slope budget dropped to the floor")
    for j in range(1, len(a)):
        if not a[j - 1] < a[j]:
            raise AssertionError("slope budgets must increase along the build-up")
    theta = 1.0 / (3.0 * math.sqrt(1.0 + float(k) ** 2))
    return BuildUpSchedule(k, eps_target, m, a, theta)


# ----------------------------------------------------------------------------
# corona decomposition
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CoronaNode:
    level: int
    interval: tuple[float, float]
    step: SunriseStep
    children: tuple


def corona_decompose(g: LipschitzGraph, k: float, schedule: BuildUpSchedule,
                     interval_budget: int = 63, interval=None,
                     alpha0: float | None = None,
                     eps0: float | None = None) -> CoronaNode:
    """Dyadic tree of replacement steps: each node replaces its parent's
    profile on its interval, shrinking the slope oscillation by 9/10 per
    level until the schedule (or the interval budget) is exhausted."""
    lo, hi = interval if interval is not None else g.window
    a0 = g.slope_center if alpha0 is None else alpha0
    e0 = g.oscillation if eps0 is None else eps0
    budget = [interval_budget]

    def build(x, vals, level, ival, a_c, e_c):
        step = rising_sun(x, vals, alpha0=a_c, eps0=e_c, interval=ival)
        budget[0] -= 1
        children = []
        if level + 1 < schedule.m and budget[0] > 0:
            mid = 0.5 * (ival[0] + ival[1])
            for half in ((ival[0], mid), (mid, ival[1])):
                if budget[0] <= 0:
                    break
                children.append(build(step.x, step.vals, level + 1, half,
                                      step.new_center, step.new_oscillation))
        return CoronaNode(level, ival, step, tuple(children))

    n = 2049
    x = np.linspace(lo, hi, n)
    return build(x, np.asarray(g.value(x), dtype=float), 0, (lo, hi), a0, e0)


def tree_nodes(root: CoronaNode):
    out = [root]
    for ch in root.children:
        out.extend(tree_nodes(ch))
    return out


def tree_stats(root: CoronaNode) -> list[dict]:
    rows = []
    for node in tree_nodes(root):
        s = node.step
        rows.append({"level": node.level, "lo": node.interval[0],
                     "hi": node.interval[1], "branch": s.branch,
                     "measure_ratio": s.measure_ratio,
                     "bound_ratio": s.measure_bound / (s.interval[1] - s.interval[0]),
                     "pieces": len(s.retained)})
    return rows


# ----------------------------------------------------------------------------
# kernel agreement and the transfer probe
# ----------------------------------------------------------------------------

def kernel_agreement(root: CoronaNode, kernel_factory, rng,
                     n_pairs: int = 24) -> float:
    """Worst relative kernel mismatch over retained-set pairs: the node
    kernels come from profiles that agree with the parent profile on the
    retained set, and the free-space kernel only sees profile values, so the
    mismatch is zero up to evaluator tolerance."""
    worst = 0.0
    for node in tree_nodes(root):
        s = node.step
        parent_profile = from_samples(s.x, s.vals, window=s.interval)
        # pairs drawn from the retained set
        lens = np.array([b - a for a, b in s.retained], dtype=float)
        if lens.sum() <= 0:
            continue
        K_node = kernel_factory(s.profile())
        K_ref = kernel_factory(parent_profile)
        for _ in range(max(2, n_pairs // max(len(tree_nodes(root)), 1))):
            seg = rng.choice(len(lens), p=lens / lens.sum(), size=2)
            xq = s.retained[seg[0]][0] + rng.uniform() * lens[seg[0]]
            yq = s.retained[seg[1]][0] + rng.uniform() * lens[seg[1]]
            if abs(xq - yq) < 1e-3:
                continue
            a = K_node(xq, yq)
            b = K_ref(xq, yq)
            worst = max(worst, float(np.abs(a - b).max()
                                     / (np.abs(b).max() + 1e-300)))
    return worst


def transfer_probe(kernel_for_profile, root: CoronaNode, F_battery,
                   x_probes=None) -> dict:
    """Consistency probe of the bound transfer: the maximal-operator
    estimate for the root kernel against the largest node estimate."""
    from .potentials import maximal_apply

    if x_probes is None:
        lo, hi = root.interval
        x_probes = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 5)
    root_kernel = kernel_for_profile(
        from_samples(root.step.x, root.step.vals, window=root.interval))
    node_sup, root_sup = 0.0, 0.0
    for F in F_battery:
        for xq in x_probes:
            root_sup = max(root_sup, maximal_apply(
                root_kernel, F, float(xq), window=root.interval))
        for node in tree_nodes(root):
            kern = kernel_for_profile(node.step.profile())
            mid = 0.5 * (node.interval[0] + node.interval[1])
            node_sup = max(node_sup, maximal_apply(
                kern, F, float(mid), window=node.interval))
    C = root_sup / (node_sup + 1e-300)
    return {"root_sup": float(root_sup), "node_sup": float(node_sup),
            "fitted_constant": float(C)}
