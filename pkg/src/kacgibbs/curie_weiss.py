"""Scalar Curie-Weiss reduction of the conditioned variational problem.

For independent unit-rate spin flips the optimal magnetisation path between
``m`` (time 0) and ``m'`` (time ``t``) is the sinh interpolation, and the cost of
starting at ``m`` is ``static(m) + action(m, m', t)``.  Bifurcation of the global
minimiser in ``m`` marks a bad final magnetisation ``m'``.

Two independent routes to the action are provided: adaptive quadrature of the
Lagrangian along the explicit path (:func:`cw_action`) and a closed form in the
conserved-energy variables (:func:`cw_action_closed`), which is what the scans use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .errors import ConvergenceError
from .torus import entropy_phi

log = logging.getLogger(__name__)

GAP_TOL = 1e-8
SEPARATION = 1e-4
ACTION_ABS_TOL = 1e-9


@dataclass(frozen=True)
class CWModel:
    j_cw: float
    h_cw: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.j_cw) and self.j_cw > 0):
            raise ValueError("j_cw must be a positive number")
        if not np.isfinite(self.h_cw):
            raise ValueError("h_cw must be finite")


def _check_unit(name, x):
    if np.any(np.abs(x) > 1.0):
        raise ValueError(f"{name} must lie in [-1, 1]")


# ---------------------------------------------------------------------------
# Lagrangian and explicit path

def cw_lagrangian(m, q):
    """Curie-Weiss Lagrangian ``L(m, q)`` for infinite-temperature dynamics.

    Evaluated through the spin-flip symmetry ``L(m, q) = L(-m, -q)`` so that the
    logarithm is always taken in its cancellation-free form.  At ``|m| = 1`` the
    continuous limit is returned (``+inf`` for velocities pointing out of
    ``[-1, 1]``).
    """
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_unit("m", m)
    m, q = np.broadcast_arrays(m, q)
    flip = q > 0
    mm = np.where(flip, -m, m)
    qq = np.where(flip, -q, q)
    S = np.sqrt(4.0 * (1.0 - mm * mm) + qq * qq)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.log(2.0 * (1.0 + mm)) - np.log(S - qq)
        drift = np.where(qq == 0.0, 0.0, 0.5 * qq * logterm)
    # L >= 0 exactly; clip the rounding residue near the zero-cost flow
    out = np.maximum(1.0 - 0.5 * S + drift, 0.0)
    return float(out) if out.ndim == 0 else out


def _path_weights(t, s):
    """Return ``sinh(2(t-s))/sinh(2t)`` and ``sinh(2s)/sinh(2t)`` without overflow."""
    den = -np.expm1(-4.0 * t)
    w0 = (np.exp(-2.0 * s) - np.exp(2.0 * s - 4.0 * t)) / den
    w1 = (np.exp(2.0 * s - 2.0 * t) - np.exp(-2.0 * s - 2.0 * t)) / den
    return w0, w1


def cw_trajectory(m, m_prime, t, s):
    """Optimal path ``m sinh(2(t-s))/sinh(2t) + m' sinh(2s)/sinh(2t)``."""
    _check_unit("m", m)
    _check_unit("m_prime", m_prime)
    s = np.asarray(s, dtype=float)
    if t < 0 or np.any(s < 0) or np.any(s > t):
        raise ValueError("need 0 <= s <= t")
    if t == 0:
        if np.any(np.asarray(m) != np.asarray(m_prime)):
            raise ValueError("incompatible endpoints: t = 0 with m != m'")
        return np.broadcast_to(np.asarray(m, dtype=float), s.shape).copy() if s.ndim else float(m)
    w0, w1 = _path_weights(t, s)
    out = m * w0 + m_prime * w1
    # closed-form endpoints are exact, not just to rounding
    out = np.where(s == 0, m, np.where(s == t, m_prime, out))
    return float(out) if out.ndim == 0 else out


def cw_trajectory_velocity(m, m_prime, t, s):
    """``d/ds`` of :func:`cw_trajectory`."""
    if t <= 0:
        raise ValueError("velocity undefined for t = 0")
    s = np.asarray(s, dtype=float)
    den = -np.expm1(-4.0 * t)
    c0 = (np.exp(-2.0 * s) + np.exp(2.0 * s - 4.0 * t)) / den
    c1 = (np.exp(2.0 * s - 2.0 * t) + np.exp(-2.0 * s - 2.0 * t)) / den
    out = -2.0 * m * c0 + 2.0 * m_prime * c1
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# action: quadrature route

def cw_action(m: float, m_prime: float, t: float, abs_tol: float = ACTION_ABS_TOL) -> float:
    """Action of the optimal path by adaptive Gauss-Kronrod quadrature.

    Raises :class:`ConvergenceError` if the quadrature error estimate exceeds
    ``abs_tol``.
    """
    _check_unit("m", m)
    _check_unit("m_prime", m_prime)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0 if m == m_prime else math.inf

    def integrand(s):
        return cw_lagrangian(cw_trajectory(m, m_prime, t, s), cw_trajectory_velocity(m, m_prime, t, s))

    # the cost concentrates in O(1) layers at both ends when t is large
    points = None
    if t > 2.0:
        points = [1.0, t - 1.0]
    val, err, *rest = quad(integrand, 0.0, t, epsabs=abs_tol / 10, epsrel=1e-12,
                           limit=400, points=points, full_output=1)
    if len(rest) > 1 or not np.isfinite(val) or err > abs_tol:
        raise ConvergenceError(f"action quadrature failed for m={m}, m'={m_prime}, t={t}: err={err:.3g}",
                               residual=err)
    return float(max(val, 0.0))


# ---------------------------------------------------------------------------
# action: closed-form route
#
# With the path written as a e^{2s} + b e^{-2s}, the conjugate momentum along it is
# p(s) = artanh(2 a e^{2s} / (1 + c)), c = sqrt(1 - 4ab), and the action is
# (G(u_t) - G(u_0)) / 2 with u = tanh p and
# G(u) = K/(2u) [(u + r)(1+u)log(1+u) + (u - r)(1-u)log(1-u)], K = 1 + c, r = 4ab/K^2.

def _path_coefficients(m, m_prime, t):
    e = np.exp(-2.0 * t)
    den = -np.expm1(-4.0 * t)
    a = (m_prime - m * e) * e / den
    b = m - a
    c = np.sqrt(np.maximum(1.0 - 4.0 * a * b, 0.0))
    K = 1.0 + c
    u0 = np.clip(2.0 * a / K, -1.0, 1.0)
    u1 = np.clip(2.0 * (m_prime - m * e) / (K * den), -1.0, 1.0)
    return a, b, c, K, u0, u1


def _G(u, K, r):
    small = np.abs(u) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        body = (u + r) * xlogy(1.0 + u, 1.0 + u) + (u - r) * xlogy(1.0 - u, 1.0 - u)
        g = K / (2.0 * u) * body
    # even/odd Taylor parts of (1 +- u) log(1 +- u); error O(u^6)
    u2 = u * u
    series = K * (r + u2 * (0.5 - r / 6.0) + u2 * u2 * (1.0 / 12.0 - r / 20.0))
    return np.where(small, series, g)


def cw_action_closed(m, m_prime, t):
    """Vectorised closed-form action; agrees with :func:`cw_action` to quadrature accuracy."""
    m = np.asarray(m, dtype=float)
    m_prime = np.asarray(m_prime, dtype=float)
    _check_unit("m", m)
    _check_unit("m_prime", m_prime)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        out = np.where(m == m_prime, 0.0, np.inf)
        return float(out) if out.ndim == 0 else out
    a, b, c, K, u0, u1 = _path_coefficients(m, m_prime, t)
    r = 4.0 * a * b / K**2
    out = 0.5 * (_G(u1, K, r) - _G(u0, K, r))
    out = np.where(a == 0.0, 0.0, np.maximum(out, 0.0))
    return float(out) if out.ndim == 0 else out


def cw_action_gradient(m, m_prime, t):
    """Partial derivatives ``(dA/dm, dA/dm')`` = ``(-p(0), p(t))`` of the action."""
    if t <= 0:
        raise ValueError("t must be positive")
    m = np.asarray(m, dtype=float)
    m_prime = np.asarray(m_prime, dtype=float)
    _, _, _, _, u0, u1 = _path_coefficients(m, m_prime, t)
    with np.errstate(divide="ignore"):
        return -np.arctanh(u0), np.arctanh(u1)


# ---------------------------------------------------------------------------
# costs

def _static(m, j, h):
    return -0.5 * j * m * m - h * m + entropy_phi(m)


def cw_static_rate(m, cw: CWModel):
    """``-j m^2 / 2 - h m + Phi(m)``."""
    _check_unit("m", m)
    return _static(np.asarray(m, dtype=float), cw.j_cw, cw.h_cw) if np.ndim(m) else float(
        _static(float(m), cw.j_cw, cw.h_cw))


def _cost(m, m_prime, t, j, h):
    return _static(m, j, h) + cw_action_closed(m, m_prime, t)


def cw_cost(m, m_prime, t, cw: CWModel, method: str = "closed"):
    """Total cost ``static(m) + action(m, m', t)``; ``method`` is ``"closed"`` or ``"quad"``."""
    if method == "quad":
        return float(cw_static_rate(m, cw) + cw_action(float(m), float(m_prime), t))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    _check_unit("m", m)
    out = _cost(np.asarray(m, dtype=float), m_prime, t, cw.j_cw, cw.h_cw)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# global minima by dense scan

@dataclass
class CWCostCurve:
    t: float
    m_prime: float
    m: np.ndarray = field(repr=False)
    cost: np.ndarray = field(repr=False)
    minima: list = field(default_factory=list)          # [(m, cost)] local minima, by cost
    global_minima: list = field(default_factory=list)   # [(m, cost)] within the gap tolerance

    @property
    def multiplicity(self) -> int:
        return len(self.global_minima)

    @property
    def unique(self) -> bool:
        return self.multiplicity == 1


def _dedupe_minima(cands, separation):
    """Merge candidates closer than ``separation`` keeping the cheaper one."""
    kept = []
    for m, c in sorted(cands, key=lambda mc: mc[1]):
        if all(abs(m - k[0]) >= separation for k in kept):
            kept.append((m, c))
    return kept


def cw_global_minima(t: float, m_prime: float, cw: CWModel, gap_tol: float = GAP_TOL,
                     step: float = 1e-3, eps: float = 1e-3, xtol: float = 1e-10) -> CWCostCurve:
    """All local minima of ``m -> cw_cost(m, m', t)`` and the global set.

    Dense scan on ``[-1+eps, 1-eps]`` followed by bounded Brent refinement of
    every sampled local minimum.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    _check_unit("m_prime", m_prime)
    n = int(round((2.0 - 2.0 * eps) / step))
    ms = np.linspace(-1.0 + eps, 1.0 - eps, n + 1)
    cs = _cost(ms, m_prime, t, cw.j_cw, cw.h_cw)
    left = np.r_[np.inf, cs[:-1]]
    right = np.r_[cs[1:], np.inf]
    idx = np.flatnonzero((cs <= left) & (cs <= right))
    cands = []
    for i in idx:
        lo = ms[max(i - 1, 0)]
        hi = ms[min(i + 1, n)]
        res = minimize_scalar(lambda x: float(_cost(x, m_prime, t, cw.j_cw, cw.h_cw)),
                              bounds=(lo, hi), method="bounded", options={"xatol": xtol})
        if not res.success:
            raise ConvergenceError(f"refinement failed on bracket [{lo}, {hi}]")
        cands.append((float(res.x), float(res.fun)))
    minima = _dedupe_minima(cands, SEPARATION)
    best = minima[0][1]
    glob = sorted([mc for mc in minima if mc[1] - best <= gap_tol], key=lambda mc: mc[0])
    return CWCostCurve(t, float(m_prime), ms, cs, minima, glob)


# ---------------------------------------------------------------------------
# critical curve: dC/dm = 0  <=>  g_t(m) = m'
#
# Scaled by 1/cosh(2t):  g(m) = m + tanh(2t) (m cosh B - sinh B),  B = 2(j m + h).
# sign(dC/dm) = sign(g(m) - m'), so local minima sit on increasing stretches of g.

class CriticalCurve:
    """Critical-point structure of the Curie-Weiss cost at a fixed time."""

    def __init__(self, t: float, j: float, h: float, samples: int = 4001):
        if t <= 0:
            raise ValueError("t must be positive")
        self.t, self.j, self.h = float(t), float(j), float(h)
        self.scale = math.cosh(2 * t) if t < 300 else math.inf
        self.th = math.tanh(2 * t)
        ms = np.linspace(-1.0, 1.0, samples)
        d = self._dg(ms)
        turning = []
        for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
            turning.append(brentq(self._dg, ms[i], ms[i + 1], xtol=1e-15))
        edges = [-1.0] + turning + [1.0]
        self.branches = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if self._dg(0.5 * (lo + hi)) > 0:
                self.branches.append((lo, hi, self.g(lo), self.g(hi)))

    def g(self, m):
        B = 2.0 * (self.j * m + self.h)
        return m + self.th * (m * np.cosh(B) - np.sinh(B))

    def _dg(self, m):
        B = 2.0 * (self.j * m + self.h)
        return 1.0 + self.th * (np.cosh(B) + 2 * self.j * m * np.sinh(B) - 2 * self.j * np.cosh(B))

    def target(self, m_prime):
        if math.isinf(self.scale):
            return np.zeros_like(np.asarray(m_prime, dtype=float))
        return np.asarray(m_prime, dtype=float) / self.scale

    def branch_minimizers(self, m_prime) -> np.ndarray:
        """Local minimisers per increasing branch, shape ``(n_branches, len(m'))``, NaN if absent."""
        y = np.atleast_1d(self.target(m_prime))
        out = np.full((len(self.branches), y.size), np.nan)
        for k, (lo, hi, glo, ghi) in enumerate(self.branches):
            inside = (y >= glo) & (y <= ghi)
            if not inside.any():
                continue
            a = np.full(inside.sum(), lo)
            b = np.full(inside.sum(), hi)
            yy = y[inside]
            for _ in range(64):
                mid = 0.5 * (a + b)
                up = self.g(mid) < yy
                a = np.where(up, mid, a)
                b = np.where(up, b, mid)
            out[k, inside] = 0.5 * (a + b)
        return out

    def branch_costs(self, m_prime):
        mins = self.branch_minimizers(m_prime)
        mp = np.broadcast_to(np.atleast_1d(np.asarray(m_prime, dtype=float)), mins.shape)
        safe = np.where(np.isnan(mins), 0.0, mins)
        costs = np.where(np.isnan(mins), np.inf, _cost(safe, mp, self.t, self.j, self.h))
        return mins, costs


@dataclass
class SliceResult:
    """Global-minimum data for one time and a grid of final magnetisations."""

    t: float
    m_prime: np.ndarray
    multiplicity: np.ndarray
    global_min_1: np.ndarray
    global_min_2: np.ndarray
    cost: np.ndarray
    branch: np.ndarray


def _slice(curve: CriticalCurve, m_prime, gap_tol=GAP_TOL) -> SliceResult:
    mp = np.atleast_1d(np.asarray(m_prime, dtype=float))
    mins, costs = curve.branch_costs(mp)
    best = np.argmin(costs, axis=0)
    cbest = costs[best, np.arange(mp.size)]
    near = (costs - cbest[None, :]) <= gap_tol
    mult = np.ones(mp.size, dtype=int)
    g1 = mins[best, np.arange(mp.size)]
    g2 = np.full(mp.size, np.nan)
    for i in np.flatnonzero(near.sum(axis=0) > 1):
        pts = _dedupe_minima([(mins[k, i], costs[k, i]) for k in np.flatnonzero(near[:, i])], SEPARATION)
        pts.sort()
        mult[i] = len(pts)
        g1[i] = pts[0][0]
        if len(pts) > 1:
            g2[i] = pts[-1][0]
    return SliceResult(curve.t, mp, mult, g1, g2, cbest, best)


# ---------------------------------------------------------------------------
# bad sets and the phase diagram

@dataclass
class BadSetReport:
    t: float
    bad_points: list = field(default_factory=list)   # sorted m'
    minimizer_pairs: list = field(default_factory=list)  # (m_low, m_high) per bad point

    @property
    def empty(self) -> bool:
        return not self.bad_points


def _mprime_grid(step):
    k = int(round(1.0 / step))
    return np.arange(-k, k + 1) / k


def _refine_switch(curve, lo, hi, b_lo, b_hi, tol):
    """Locate the tie between branches ``b_lo`` (wins at lo) and ``b_hi`` (wins at hi)."""

    def diff(x):
        _, c = curve.branch_costs(x)
        return c[b_lo, 0] - c[b_hi, 0]

    d_lo, d_hi = diff(lo), diff(hi)
    if np.isfinite(d_lo) and np.isfinite(d_hi) and d_lo <= 0 <= d_hi:
        x = brentq(diff, lo, hi, xtol=1e-13)
    else:
        # a branch leaves the bracket: fall back to bisection on the winner
        a, b = lo, hi
        while b - a > tol:
            mid = 0.5 * (a + b)
            if _slice(curve, mid).branch[0] == b_lo:
                a = mid
            else:
                b = mid
        x = 0.5 * (a + b)
    mins, _ = curve.branch_costs(x)
    pair = tuple(sorted((float(mins[b_lo, 0]), float(mins[b_hi, 0]))))
    return float(x), pair


def cw_bad_set(t: float, cw: CWModel, step: float = 1e-3, tol: float = 1e-6,
               gap_tol: float = GAP_TOL) -> BadSetReport:
    """Final magnetisations with two or more global minimisers at time ``t``."""
    if t <= 0:
        raise ValueError("t must be positive")
    curve = CriticalCurve(t, cw.j_cw, cw.h_cw)
    if len(curve.branches) < 2:
        return BadSetReport(float(t))
    grid = _mprime_grid(step)
    sl = _slice(curve, grid, gap_tol)
    found = []
    for i in np.flatnonzero(sl.multiplicity > 1):
        found.append((float(grid[i]), (float(sl.global_min_1[i]), float(sl.global_min_2[i]))))
    for i in np.flatnonzero(sl.branch[:-1] != sl.branch[1:]):
        if sl.multiplicity[i] > 1 or sl.multiplicity[i + 1] > 1:
            continue
        found.append(_refine_switch(curve, grid[i], grid[i + 1], sl.branch[i], sl.branch[i + 1], tol))
    found.sort()
    points, pairs = [], []
    for x, pair in found:
        if points and abs(x - points[-1]) < 10 * tol:
            continue
        if abs(pair[1] - pair[0]) < SEPARATION:
            continue
        points.append(x)
        pairs.append(pair)
    return BadSetReport(float(t), points, pairs)


def bad_set_topology(points, zero_tol=1e-3, sym_tol=1e-6) -> str:
    """Qualitative shape of a bad set: empty, zero, pair, single, two or other."""
    if not points:
        return "empty"
    if len(points) == 1:
        return "zero" if abs(points[0]) <= zero_tol else "single"
    if len(points) == 2:
        a, b = points
        if abs(a + b) <= sym_tol and min(abs(a), abs(b)) > zero_tol:
            return "pair"
        return "two"
    return f"other{len(points)}"


_LABELS = {
    ("empty", "pair"): "Psi_U",
    ("pair", "zero"): "Psi_c",
    ("empty", "zero"): "Psi_c",
    ("empty", "single"): "Psi_U",
    ("single", "two"): "Psi_L",
    ("two", "single"): "Psi_T",
    ("single", "empty"): "Psi_*",
}


@dataclass
class TransitionFeature:
    label: str
    t: float
    bad_set_before: list
    bad_set_after: list

    def to_dict(self):
        return {"label": self.label, "t": self.t,
                "bad_set_before": list(self.bad_set_before), "bad_set_after": list(self.bad_set_after)}


def detect_transition_times(cw: CWModel, t_max: float, dt: float = 0.01, t_tol: float = 1e-4,
                            step: float = 1e-3):
    """Times at which the topology of the bad set changes, located by bisection.

    Returns an empty list when nothing changes in ``(0, t_max]``.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = max(1, int(round(t_max / dt)))
    times = np.arange(1, n + 1) * (t_max / n)

    def topo(t):
        rep = cw_bad_set(t, cw, step=step)
        return bad_set_topology(rep.bad_points), rep.bad_points

    feats = []
    prev_t, (prev_topo, prev_pts) = None, ("empty", [])
    for t in times:
        cur_topo, cur_pts = topo(t)
        if prev_t is not None and cur_topo != prev_topo:
            lo, hi = prev_t, t
            lo_pts, hi_pts = prev_pts, cur_pts
            while hi - lo > t_tol:
                mid = 0.5 * (lo + hi)
                mid_topo, mid_pts = topo(mid)
                if mid_topo == prev_topo:
                    lo, lo_pts = mid, mid_pts
                else:
                    hi, hi_pts = mid, mid_pts
            label = _LABELS.get((prev_topo, cur_topo), f"{prev_topo}->{cur_topo}")
            feats.append(TransitionFeature(label, 0.5 * (lo + hi), lo_pts, hi_pts))
        prev_t, prev_topo, prev_pts = t, cur_topo, cur_pts
    if not feats:
        log.info("no transition in window (0, %g] for %s", t_max, cw)
    return feats


def cw_phase_diagram(cw: CWModel, t_values, step: float = 1e-3, gap_tol: float = GAP_TOL):
    """Rows ``(t, m', multiplicity, global_min_1, global_min_2, cost)`` over a (t, m') grid."""
    grid = _mprime_grid(step)
    rows = []
    for t in t_values:
        if t <= 0:
            for mp in grid:
                rows.append((float(t), float(mp), 1, float(mp), math.nan, 0.0))
            continue
        sl = _slice(CriticalCurve(t, cw.j_cw, cw.h_cw), grid, gap_tol)
        for i, mp in enumerate(grid):
            rows.append((float(t), float(mp), int(sl.multiplicity[i]), float(sl.global_min_1[i]),
                         float(sl.global_min_2[i]), float(sl.cost[i])))
    return rows
