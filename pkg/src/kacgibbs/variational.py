"""Profile-level rate functions and the conditioned minimisation problem.

The cost of an initial profile ``alpha`` given the final profile ``alpha_prime``
at time ``t`` (infinite-temperature dynamics) is

    C(alpha) = I_S(alpha) + mean_u A(alpha(u), alpha_prime(u), t)

with ``A`` the Curie-Weiss action.  Critical points solve a node-wise nonlinear
equation that is iterated here as a fixed point and polished by Newton steps.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import curie_weiss as cw
from .errors import ConvergenceError, GridMismatchError, SelectionAnomaly, UnsupportedRegimeError
from .torus import (
    DENSE_MATRIX_MAX_NODES,
    KacModel,
    Profile,
    TorusGrid,
    entropy_phi,
    quadratic_form_values,
    static_rate_values,
)

log = logging.getLogger(__name__)

GAP_TOL = cw.GAP_TOL
SEPARATION = cw.SEPARATION
RESIDUAL_TOL = 1e-10
BOX_COLLAPSE_TOL = 1e-9


def _require_infinite_temperature(model: KacModel):
    if model.beta_prime != 0.0:
        raise UnsupportedRegimeError("minimisation is only defined for beta_prime = 0")


def _values(p, grid: TorusGrid) -> np.ndarray:
    if isinstance(p, Profile):
        if p.grid != grid:
            raise GridMismatchError(f"profile on {p.grid}, model on {grid}")
        return p.values
    return Profile(grid, p).values


# ---------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class TrajectoryGrid:
    """Profiles sampled at increasing times ``0 = s_0 < ... < s_K = t``."""

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray = field(repr=False)  # shape (K + 1, *grid.shape)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        vals = np.asarray(self.values, dtype=float).reshape((times.size,) + self.grid.shape)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a trajectory needs at least two time samples")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if np.any(np.abs(vals) > 1.0):
            raise ValueError("trajectory values must lie in [-1, 1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", vals)

    @property
    def t(self) -> float:
        return float(self.times[-1])

    def velocities(self) -> np.ndarray:
        """Centred differences inside, second-order one-sided differences at the ends."""
        edge = 2 if self.times.size > 2 else 1
        return np.gradient(self.values, self.times, axis=0, edge_order=edge)

    def profile(self, k: int) -> Profile:
        return Profile(self.grid, self.values[k])

    def to_csv(self) -> str:
        flat = self.values.reshape(self.times.size, -1)
        lines = ["time," + ",".join(f"node{i}" for i in range(flat.shape[1]))]
        for s, row in zip(self.times, flat):
            lines.append(",".join(format(float(x), ".17g") for x in (s, *row)))
        return "\n".join(lines) + "\n"


def optimal_trajectory(alpha, alpha_prime, t: float, grid: TorusGrid, steps: int = 1000) -> TrajectoryGrid:
    """Node-wise Curie-Weiss optimal path from ``alpha`` to ``alpha_prime``."""
    a = _values(alpha, grid)
    ap = _values(alpha_prime, grid)
    if t <= 0:
        raise ValueError("t must be positive")
    times = np.linspace(0.0, t, steps + 1)
    times[-1] = t
    vals = np.stack([cw.cw_trajectory(a, ap, t, s) * np.ones(grid.shape) for s in times])
    vals[0] = a
    vals[-1] = ap
    return TrajectoryGrid(grid, times, np.clip(vals, -1.0, 1.0))


# ---------------------------------------------------------------------------
# rate functions

def kac_lagrangian_density(p, q, F, beta_prime: float):
    """Pointwise Lagrangian of the spin-flip dynamics in the local field ``F``.

    Vanishes exactly on the law-of-large-numbers velocity
    ``q = 2 [sinh(beta' F) - p cosh(beta' F)]``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p) > 1.0):
        raise ValueError("p must lie in [-1, 1]")
    b = beta_prime * np.asarray(F, dtype=float)
    q = np.asarray(q, dtype=float)
    # the beta' = 0 part carries the square root and the logarithm
    base = np.asarray(cw.cw_lagrangian(p, q)) - 1.0
    with np.errstate(invalid="ignore"):
        out = base - 0.5 * q * b + np.cosh(b) - p * np.sinh(b)
    out = np.where(np.isnan(out) & np.isinf(base), np.inf, out)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def dynamic_rate(traj: TrajectoryGrid, model: KacModel) -> float:
    """Time integral (trapezoid) of the space-averaged Lagrangian along ``traj``."""
    if traj.grid != model.grid:
        raise ValueError("trajectory and model live on different grids")
    vel = traj.velocities()
    dens = np.empty(traj.times.size)
    for k in range(traj.times.size):
        phi = traj.values[k]
        F = model.local_field(phi) if model.beta_prime else 0.0
        dens[k] = np.mean(kac_lagrangian_density(phi, vel[k], F, model.beta_prime))
    return float(trapezoid(dens, traj.times))


def total_rate(traj: TrajectoryGrid, model: KacModel) -> float:
    return static_rate_values(traj.values[0], model) + dynamic_rate(traj, model)


# ---------------------------------------------------------------------------
# the conditioned cost

def kac_cost(alpha, alpha_prime, t: float, model: KacModel, method: str = "closed") -> float:
    """``I_S(alpha) + mean_u A(alpha(u), alpha'(u), t)``."""
    _require_infinite_temperature(model)
    a = _values(alpha, model.grid)
    ap = _values(alpha_prime, model.grid)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if method == "closed" or t == 0:
        act = cw.cw_action_closed(a, ap, t)
    elif method == "quad":
        act = np.array([cw.cw_action(x, y, t) for x, y in zip(a.ravel(), ap.ravel())])
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(static_rate_values(a, model) + np.mean(act))


def kac_cost_pt(alpha, alpha_prime, t: float, model: KacModel, rescale: bool = False) -> float:
    """Cost written as a quadratic interaction form plus a node-wise local cost.

    The split assumes ``<J> = 1``; with ``rescale=True`` the model is rewritten as
    ``(J/<J>, h/<J>, beta <J>)``, which leaves the cost unchanged.
    """
    _require_infinite_temperature(model)
    a = _values(alpha, model.grid)
    ap = _values(alpha_prime, model.grid)
    Jm = model.J.mean()
    if abs(Jm - 1.0) > 1e-9 and not rescale:
        raise ValueError(f"kernel mean is {Jm!r}, expected 1 (pass rescale=True)")
    # beta J and beta h are invariant under the rescaling, so only <J> shows up here
    beta = model.beta
    qf = quadratic_form_values(a, model.J, beta)
    local = (-0.5 * beta * Jm * a * a - beta * model.h.values * a + entropy_phi(a)
             + cw.cw_action_closed(a, ap, t))
    return float(qf + np.mean(local))


def critical_residual(alpha, alpha_prime, t: float, model: KacModel) -> np.ndarray:
    """``sinh(2bF) - a cosh(2bF) - a coth(2t) + a' / sinh(2t)`` with ``F = J * a + h``."""
    _require_infinite_temperature(model)
    if t <= 0:
        raise ValueError("the critical equation needs t > 0")
    a = _values(alpha, model.grid)
    ap = _values(alpha_prime, model.grid)
    return _residual(a, ap, t, model)


def _residual(a, ap, t, model):
    x = 2.0 * model.beta * model.local_field(a)
    return np.sinh(x) - a * np.cosh(x) - a / math.tanh(2 * t) + ap / math.sinh(2 * t)


def cost_gradient(alpha, alpha_prime, t: float, model: KacModel) -> np.ndarray:
    """Node-wise Frechet gradient ``artanh(a) - beta F - p_0`` of :func:`kac_cost`.

    ``p_0`` is the initial momentum of the optimal local path; the directional
    derivative along ``eta`` is ``mean(gradient * eta)``.
    """
    _require_infinite_temperature(model)
    a = _values(alpha, model.grid)
    ap = _values(alpha_prime, model.grid)
    dA, _ = cw.cw_action_gradient(a, ap, t)
    return np.arctanh(a) - model.beta * model.local_field(a) + dA


def gradient_from_residual(residual, alpha, model: KacModel) -> np.ndarray:
    """Recover the Frechet gradient from the critical residual.

    With ``y = artanh(a) - 2 beta F`` the gradient is
    ``(y - asinh(sinh y + R cosh artanh a)) / 2``; it vanishes exactly where ``R`` does.
    """
    a = np.asarray(alpha, dtype=float)
    r = np.asarray(residual, dtype=float)
    at = np.arctanh(a)
    y = at - 2.0 * model.beta * model.local_field(a)
    return 0.5 * (y - np.arcsinh(np.sinh(y) + r * np.cosh(at)))


# ---------------------------------------------------------------------------
# critical points

def fixed_point_map(alpha, alpha_prime, t: float, model: KacModel) -> np.ndarray:
    """``[sinh(2bF) + a'/sinh(2t)] / [cosh(2bF) + coth(2t)]``; maps [-1, 1] into its interior."""
    a = np.asarray(alpha, dtype=float)
    x = 2.0 * model.beta * model.local_field(a)
    return (np.sinh(x) + alpha_prime / math.sinh(2 * t)) / (np.cosh(x) + 1.0 / math.tanh(2 * t))


def _newton(a, ap, t, model, max_steps=30):
    """Newton polish of the critical equation with the dense Jacobian."""
    n = model.grid.size
    Jd = model.J._dense
    c2 = 1.0 / math.tanh(2 * t)
    r = _residual(a, ap, t, model)
    for _ in range(max_steps):
        rn = np.max(np.abs(r))
        if rn <= 1e-14:
            break
        x = (2.0 * model.beta * model.local_field(a)).reshape(n)
        af = a.reshape(n)
        jac = (2.0 * model.beta * (np.cosh(x) - af * np.sinh(x)))[:, None] * Jd
        jac[np.diag_indices(n)] -= np.cosh(x) + c2
        step = np.linalg.solve(jac, -r.reshape(n)).reshape(model.grid.shape)
        trial = np.clip(a + step, -1 + 1e-15, 1 - 1e-15)
        r_trial = _residual(trial, ap, t, model)
        if np.max(np.abs(r_trial)) >= rn:
            break
        a, r = trial, r_trial
    return a, r


def solve_critical(alpha_prime, t: float, model: KacModel, seed=None, damping: float = 1.0,
                   max_iter: int = 100_000, tol: float = 1e-12, newton: bool = True):
    """Damped fixed-point iteration for the critical-profile equation.

    Returns ``(profile, sup residual, iterations)``.  The damping is halved when
    successive updates reverse direction without shrinking.  When the grid is small enough for a dense
    Jacobian, Newton steps polish the converged iterate.
    """
    _require_infinite_temperature(model)
    if t <= 0:
        raise ValueError("t must be positive")
    grid = model.grid
    ap = _values(alpha_prime, grid)
    a = np.zeros(grid.shape) if seed is None else np.array(_values(seed, grid))
    theta = float(damping)
    if not 0 < theta <= 1:
        raise ValueError("damping must be in (0, 1]")
    prev, prev_step = math.inf, None
    it = 0
    switch = 1e-8 if (newton and grid.size <= DENSE_MATRIX_MAX_NODES) else 0.0
    while it < max_iter:
        it += 1
        step = theta * (fixed_point_map(a, ap, t, model) - a)
        upd = float(np.max(np.abs(step)))
        a = a + step
        if upd < tol or upd < switch:
            break
        # oscillation: the update flips direction without shrinking
        if prev_step is not None and upd >= prev and np.vdot(step, prev_step) < 0 and theta > 1e-3:
            theta *= 0.5
        prev, prev_step = upd, step
    if switch:
        a, r = _newton(a, ap, t, model)
    else:
        r = _residual(a, ap, t, model)
    res = float(np.max(np.abs(r)))
    if res > RESIDUAL_TOL:
        raise ConvergenceError(f"critical solver stopped with residual {res:.3g} after {it} iterations",
                               residual=res, iterations=it)
    return Profile(grid, a), res, it


@dataclass
class CriticalProfile:
    profile: Profile
    cost: float
    residual: float
    iterations: int
    seed_name: str = ""


@dataclass
class MinimizerReport:
    alpha_prime: Profile
    t: float
    critical_profiles: list
    global_set: list
    unique: bool
    gap: float
    seeds_used: list = field(default_factory=list)
    failed_seeds: list = field(default_factory=list)

    def global_minimizers(self) -> list:
        return [self.critical_profiles[i].profile for i in self.global_set]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "grid": {"d": self.alpha_prime.grid.d, "M": self.alpha_prime.grid.M},
            "alpha_prime": self.alpha_prime.values.ravel().tolist(),
            "critical_profiles": [
                {"values": c.profile.values.ravel().tolist(), "cost": c.cost, "residual": c.residual,
                 "iterations": c.iterations, "seed": c.seed_name}
                for c in self.critical_profiles
            ],
            "global_set": list(self.global_set),
            "unique": self.unique,
            "gap": None if math.isinf(self.gap) else self.gap,
            "seeds_used": list(self.seeds_used),
            "failed_seeds": list(self.failed_seeds),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def local_cw_minimizers(alpha_prime, t: float, model: KacModel) -> np.ndarray:
    """Node-wise global minimisers of the local Curie-Weiss problems.

    Node ``u`` sees coupling ``beta <J>`` and field ``beta h(u)``; returns an array
    of shape ``(2, *grid)`` holding the lowest and highest global minimiser.
    """
    grid = model.grid
    ap = _values(alpha_prime, grid).ravel()
    hv = model.h.values.ravel()
    lo = np.empty(grid.size)
    hi = np.empty(grid.size)
    j = model.beta * model.J.mean()
    for hval in np.unique(hv):
        sel = hv == hval
        curve = cw.CriticalCurve(t, j, model.beta * hval)
        sl = cw._slice(curve, ap[sel])
        lo[sel] = sl.global_min_1
        hi[sel] = np.where(np.isnan(sl.global_min_2), sl.global_min_1, sl.global_min_2)
    return np.stack([lo.reshape(grid.shape), hi.reshape(grid.shape)])


def default_seeds(alpha_prime, t: float, model: KacModel, n_random: int = 8, rng_seed: int = 0):
    """Named starting profiles for the multi-seed search."""
    grid = model.grid
    ap = _values(alpha_prime, grid)
    seeds = []
    loc = local_cw_minimizers(ap, t, model)
    for v in np.unique(np.round(loc, 6)):
        seeds.append((f"const_cw_{v:.6g}", np.full(grid.shape, v)))
    seeds.append(("cw_low", loc[0]))
    seeds.append(("cw_high", loc[1]))
    seeds.append(("relaxed", ap / math.cosh(2 * t)))
    seeds.append(("const_+0.9", np.full(grid.shape, 0.9)))
    seeds.append(("const_-0.9", np.full(grid.shape, -0.9)))
    rng = np.random.default_rng(rng_seed)
    for k in range(n_random):
        seeds.append((f"random_{k}", rng.uniform(-0.9, 0.9, grid.shape)))
    return seeds


def _profile_hash(values) -> str:
    return hashlib.sha1(np.ascontiguousarray(values).tobytes()).hexdigest()


def kac_global_minimizers(alpha_prime, t: float, model: KacModel, seeds=None, gap_tol: float = GAP_TOL,
                          workers: int = 1, solver_options=None, rng_seed: int = 0) -> MinimizerReport:
    """Multi-seed search for critical profiles and the global-minimiser set.

    ``seeds`` is a list of arrays/profiles or ``(name, array)`` pairs; by default
    see :func:`default_seeds`.
    """
    _require_infinite_temperature(model)
    grid = model.grid
    ap_prof = alpha_prime if isinstance(alpha_prime, Profile) else Profile(grid, alpha_prime)
    ap = ap_prof.values
    if seeds is None:
        seeds = default_seeds(ap, t, model, rng_seed=rng_seed)
    named = []
    for k, s in enumerate(seeds):
        if isinstance(s, tuple):
            named.append((s[0], _values(s[1], grid)))
        else:
            named.append((f"seed_{k}", _values(s, grid)))
    if not named:
        raise ValueError("seed set is empty")
    opts = dict(solver_options or {})

    def run(item):
        name, s = item
        try:
            prof, res, it = solve_critical(ap, t, model, seed=s, **opts)
        except ConvergenceError as exc:
            log.debug("seed %s failed: %s", name, exc)
            return name, None
        return name, CriticalProfile(prof, kac_cost(prof, ap, t, model), res, it, name)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, named))
    else:
        results = [run(x) for x in named]

    found = [c for _, c in results if c is not None]
    failed = [n for n, c in results if c is None]
    if not found:
        raise ConvergenceError(f"no seed converged ({len(named)} tried)")
    found.sort(key=lambda c: (c.cost, _profile_hash(c.profile.values)))
    crit = []
    for c in found:
        if all(c.profile.sup_distance(k.profile) >= SEPARATION for k in crit):
            crit.append(c)
    best = crit[0].cost
    gset = [i for i, c in enumerate(crit) if c.cost - best <= gap_tol]
    gap = crit[1].cost - best if len(crit) > 1 else math.inf
    return MinimizerReport(ap_prof, float(t), crit, gset, len(gset) == 1, gap,
                           [n for n, _ in named], failed)


# ---------------------------------------------------------------------------
# short-time uniqueness

@dataclass
class UniquenessCertificate:
    """Outcome of the sufficient uniqueness tests; truthy when any of them holds.

    ``lipschitz_bound < 1``: the fixed-point map contracts in sup norm.
    ``box_width <= BOX_COLLAPSE_TOL``: the extremal fixed points coincide.
    ``convexity_margin > 0``: the cost is strictly convex on the box
    ``[lower, upper]`` that traps every critical profile.
    """

    lipschitz_bound: float
    convexity_margin: float
    box_width: float
    lower: np.ndarray = field(repr=False, default=None)
    upper: np.ndarray = field(repr=False, default=None)

    @property
    def contraction(self) -> bool:
        return self.lipschitz_bound < 1.0

    @property
    def convex(self) -> bool:
        return self.convexity_margin > 0.0

    @property
    def collapsed(self) -> bool:
        return self.box_width <= BOX_COLLAPSE_TOL

    def __bool__(self) -> bool:
        return self.contraction or self.collapsed or self.convex


def _lipschitz_bound(beta, jnorm, hnorm, t):
    if beta == 0.0:
        return 0.0
    c2 = 1.0 / math.tanh(2 * t)
    k = c2 + 1.0 / math.sinh(2 * t)
    x = 2.0 * beta * (jnorm + hnorm)
    top = math.cosh(x) if x < 700 else math.inf

    def f(ch):
        return (1.0 + k * ch) / (ch + c2) ** 2

    cands = [f(1.0)] if math.isinf(top) else [f(1.0), f(top)]
    star = c2 - 2.0 / k
    if 1.0 < star < top:
        cands.append(f(star))
    return 2.0 * beta * jnorm * max(cands)


def trapping_box(alpha_prime, t: float, model: KacModel, max_iter: int = 20_000, tol: float = 1e-13):
    """Extremal fixed points of the order-preserving map G, from the constants -1 and +1.

    G is increasing in the local field and ``J >= 0``, so every critical profile
    lies between the returned lower and upper iterates.
    """
    grid = model.grid
    ap = _values(alpha_prime, grid)
    lo = -np.ones(grid.shape)
    hi = np.ones(grid.shape)
    for _ in range(max_iter):
        nlo = fixed_point_map(lo, ap, t, model)
        nhi = fixed_point_map(hi, ap, t, model)
        moved = max(np.max(np.abs(nlo - lo)), np.max(np.abs(nhi - hi)))
        lo, hi = np.minimum(nlo, nhi), np.maximum(nlo, nhi)
        if moved < tol:
            break
    return lo, hi


def _curvature(ms, mp, t):
    """``d^2/dm^2 [Phi(m) + A(m, m', t)]`` via the initial momentum of the local path."""
    dA, _ = cw.cw_action_gradient(ms, mp, t)
    q0 = cw.cw_trajectory_velocity(ms, mp, t, 0.0)
    S0 = np.sqrt(4.0 * (1.0 - ms * ms) + q0 * q0)
    return 1.0 / (1.0 - ms * ms) + (1.0 / math.tanh(2 * t) - np.cosh(2.0 * dA)) / S0


def _convexity_margin(beta, jnorm, ap, lo, hi, t, samples=129, safety=1e-2):
    """``min_u min_{m in [lo(u), hi(u)]} curvature - beta <J>``.

    The inner minimum is sampled; ``safety`` is a relative allowance for the
    sampling error.
    """
    s = np.linspace(0.0, 1.0, samples)
    lo_c = np.clip(lo.ravel(), -1 + 1e-12, 1 - 1e-12)
    hi_c = np.clip(hi.ravel(), -1 + 1e-12, 1 - 1e-12)
    ms = lo_c[:, None] + (hi_c - lo_c)[:, None] * s[None, :]
    curv = _curvature(ms, ap.ravel()[:, None], t)
    return float(np.min(curv)) / (1.0 + safety) - beta * jnorm


def short_time_uniqueness(model: KacModel, alpha_prime, t: float) -> UniquenessCertificate:
    """Sufficient conditions for a unique critical (hence minimising) profile.

    Either the fixed-point map is a sup-norm contraction on [-1, 1] valued
    profiles, or its monotone iterates from -1 and +1 meet, or the cost is
    strictly convex on the box trapping all critical profiles (its Hessian ``diag(curvature) - beta J`` is positive there, using
    that the top eigenvalue of ``J >= 0`` is ``<J>``).  ``False`` means
    inconclusive, not non-unique.
    """
    _require_infinite_temperature(model)
    if t <= 0:
        raise ValueError("t must be positive")
    ap = _values(alpha_prime, model.grid)
    jnorm = model.J.mean()
    hnorm = float(np.max(np.abs(model.h.values)))
    lip = _lipschitz_bound(model.beta, jnorm, hnorm, t)
    lo, hi = trapping_box(ap, t, model)
    margin = _convexity_margin(model.beta, jnorm, ap, lo, hi, t)
    return UniquenessCertificate(lip, margin, float(np.max(hi - lo)), lo, hi)


# ---------------------------------------------------------------------------
# selection of global minimisers by one-sided perturbations

@dataclass
class SelectionResult:
    epsilons: tuple
    witness_mask: np.ndarray
    limit_plus: Profile
    limit_minus: Profile
    selected_plus: int     # index into the report's critical profiles
    selected_minus: int
    plus_path: list = field(default_factory=list)
    minus_path: list = field(default_factory=list)


def _extrapolate(eps, profiles):
    eps = np.asarray(eps, dtype=float)
    Y = np.stack([p.ravel() for p in profiles])
    coef = np.polyfit(eps, Y, 1)
    return coef[1]


def selection_probe(report: MinimizerReport, model: KacModel, epsilons=(1e-2, 1e-3, 1e-4),
                    match_tol: float = 1e-3) -> SelectionResult:
    """Perturb ``alpha'`` by ``+-eps`` on the set where two global minimisers differ.

    Each side is re-solved for every ``eps`` and extrapolated linearly to ``eps = 0``.
    """
    if len(report.global_set) < 2:
        raise ValueError("selection probe needs at least two global minimisers")
    grid = model.grid
    i, j = report.global_set[:2]
    ai = report.critical_profiles[i].profile.values
    aj = report.critical_profiles[j].profile.values
    if np.max(ai - aj) < np.max(aj - ai):
        i, j, ai, aj = j, i, aj, ai
    delta = 0.5 * float(np.max(ai - aj))
    mask = (ai - aj) > delta
    ap = report.alpha_prime.values
    seeds = [(f"crit_{k}", c.profile.values) for k, c in enumerate(report.critical_profiles)]

    def side(sign):
        path = []
        for eps in epsilons:
            pert = np.clip(ap + sign * eps * mask, -1.0, 1.0)
            rep = kac_global_minimizers(pert, report.t, model, seeds=seeds)
            path.append(rep.critical_profiles[rep.global_set[0]].profile.values)
        return _extrapolate(epsilons, path), path

    lim_p, path_p = side(+1.0)
    lim_m, path_m = side(-1.0)
    if np.max(np.abs(lim_p - lim_m)) < match_tol:
        raise SelectionAnomaly("one-sided limits coincide although the global minimisers differ")

    def match(lim):
        dists = [np.max(np.abs(lim - report.critical_profiles[k].profile.values)) for k in report.global_set]
        k = int(np.argmin(dists))
        if dists[k] > match_tol:
            raise SelectionAnomaly(f"one-sided limit is {dists[k]:.3g} away from every global minimiser")
        return report.global_set[k]

    clip = lambda v: Profile(grid, np.clip(v, -1.0, 1.0))
    return SelectionResult(tuple(epsilons), mask, clip(lim_p), clip(lim_m), match(lim_p), match(lim_m),
                           path_p, path_m)

