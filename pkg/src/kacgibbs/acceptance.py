"""Acceptance checks, shared by the ``verify`` subcommand and the test-suite.

Each ``criterion_*`` function returns a :class:`CriterionResult` made of named
sub-checks; a criterion passes when every sub-check and its time budget pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import curie_weiss as cw
from . import finite as fs
from . import kernels as kn
from . import variational as kv
from .torus import ExternalField, KacModel, Profile, TorusGrid, constant_kernel, cosine_bump_kernel


_TOL_SCALE = [1.0]


def tol(x: float) -> float:
    """Threshold ``x`` times the active tolerance scale (see :func:`run_all`)."""
    return x * _TOL_SCALE[0]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CriterionResult:
    number: int
    title: str
    budget_s: float
    checks: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def within_budget(self) -> bool:
        return self.runtime_s < self.budget_s

    @property
    def passed(self) -> bool:
        return self.within_budget and all(c.passed for c in self.checks)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        failing = [c.name for c in self.checks if not c.passed]
        extra = f" failing: {', '.join(failing)}" if failing else ""
        if not self.within_budget:
            extra += f" over budget ({self.budget_s:g} s)"
        return f"[{flag}] criterion {self.number}: {self.title} ({self.runtime_s:.2f} s){extra}"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "runtime_s": self.runtime_s, "budget_s": self.budget_s,
                "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks]}


def _timed(number, title, budget):
    def deco(fn):
        def run(**kw) -> CriterionResult:
            res = CriterionResult(number, title, budget)
            t0 = time.perf_counter()
            res.checks = fn(**kw)
            res.runtime_s = time.perf_counter() - t0
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return deco


def _model(M, beta, h=0.0, kernel="cosine-bump", d=1):
    grid = TorusGrid(d, M)
    J = cosine_bump_kernel(grid) if kernel == "cosine-bump" else constant_kernel(grid)
    hf = ExternalField(grid, np.broadcast_to(h, grid.shape)) if np.ndim(h) else ExternalField.constant(grid, h)
    return KacModel(J, hf, beta)


# ---------------------------------------------------------------------------

@_timed(1, "kernel consistency at t = 0", 1.0)
def criterion_1(seed: int = 1):
    rng = np.random.default_rng(seed)
    worst_gamma = worst_spec = 0.0
    for _ in range(100):
        beta = rng.uniform(0, 2)
        model = _model(16, beta, rng.uniform(-1, 1, 16))
        alpha = Profile(model.grid, rng.uniform(-1, 1, 16))
        u = int(rng.integers(16))
        a = beta * model.local_field(alpha.values)[u]
        expected = math.exp(a) / (2 * math.cosh(a))
        worst_gamma = max(worst_gamma, abs(kn.gamma_beta0(1, a, 0.0) - expected))
        spec = kn.specification_kernel(alpha, 0.0, alpha, u, model)
        worst_spec = max(worst_spec, abs(spec.p_plus - kn.static_kernel(alpha, u, model).p_plus))
    return [Check("gamma_beta0(t=0) vs equilibrium kernel", worst_gamma <= tol(1e-12), f"max err {worst_gamma:.2e}"),
            Check("specification kernel(t=0) vs static kernel", worst_spec <= tol(1e-12), f"max err {worst_spec:.2e}")]


@_timed(2, "zero-cost flow", 5.0)
def criterion_2(seed: int = 2):
    ms = np.linspace(-1, 1, 201)
    lag = float(np.max(cw.cw_lagrangian(ms, -2 * ms)))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        m, t = rng.uniform(-1, 1), rng.uniform(0.01, 5)
        worst = max(worst, cw.cw_action(m, m * math.exp(-2 * t), t))
    return [Check("L(m, -2m) <= 1e-12 on 201 points", lag <= tol(1e-12), f"max {lag:.2e}"),
            Check("action along relaxation <= 1e-8", worst <= tol(1e-8), f"max {worst:.2e}")]


def _perturbed_action(m, mp, t, coef):
    k = np.arange(1, coef.size + 1)

    def integrand(s):
        w = k * math.pi / t
        eta = float(np.sum(coef * np.sin(w * s)))
        deta = float(np.sum(coef * w * np.cos(w * s)))
        p = cw.cw_trajectory(m, mp, t, s) + eta
        q = cw.cw_trajectory_velocity(m, mp, t, s) + deta
        return cw.cw_lagrangian(p, q)

    val, _ = quad(integrand, 0.0, t, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


@_timed(3, "trajectory optimality", 30.0)
def criterion_3(seed: int = 3):
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(200):
        m, mp = rng.uniform(-0.85, 0.85, 2)
        t = rng.uniform(0.2, 2.0)
        coef = rng.normal(size=5) / np.arange(1, 6) ** 2
        coef *= rng.uniform(0.01, 0.1) / np.sum(np.abs(coef))   # sup |eta| <= 0.1
        base = _perturbed_action(m, mp, t, np.zeros(5))
        pert = _perturbed_action(m, mp, t, coef)
        worst = min(worst, pert - base)
    err = 0.0
    d = 1e-4
    for _ in range(50):
        m, mp = rng.uniform(-1, 1, 2)
        t = rng.uniform(0.1, 3.0)
        s = rng.uniform(d, t - d)
        f = lambda x: cw.cw_trajectory(m, mp, t, x)
        acc = (f(s + d) - 2 * f(s) + f(s - d)) / d**2
        err = max(err, abs(acc - 4 * f(s)))
    return [Check("perturbed action >= optimal - 1e-10", worst >= -tol(1e-10), f"min excess {worst:.3e}"),
            Check("second-order equation phi'' = 4 phi", err <= tol(1e-6), f"max err {err:.2e}")]


@_timed(4, "Curie-Weiss phase diagram", 600.0)
def criterion_4():
    checks = []
    times = np.round(np.arange(1, 501) * 0.01, 10)
    for j in (0.5, 1.0):
        model = cw.CWModel(j)
        bad = [t for t in times if not cw.cw_bad_set(t, model).empty]
        checks.append(Check(f"j={j}: no bad points on (0, 5]", not bad, f"{len(bad)} bad times"))

    model = cw.CWModel(1.2)
    feats = cw.detect_transition_times(model, 5.0)
    ok = len(feats) == 1 and feats[0].bad_set_before == [] and \
        len(feats[0].bad_set_after) == 1 and abs(feats[0].bad_set_after[0]) <= tol(1e-3)
    checks.append(Check("j=1.2: single transition empty -> {0}", ok,
                        "; ".join(f"{f.label}@{f.t:.4f}" for f in feats)))
    if feats:
        tc = feats[0].t
        wrong = []
        for t in times:
            pts = cw.cw_bad_set(t, model).bad_points
            if (t < tc and pts) or (t > tc and not (len(pts) == 1 and abs(pts[0]) <= tol(1e-3))):
                wrong.append(t)
        checks.append(Check("j=1.2: empty below, {0} above the detected time", not wrong,
                            f"{len(wrong)} inconsistent grid times"))

    model = cw.CWModel(2.0)
    feats = cw.detect_transition_times(model, 5.0)
    labels = [f.label for f in feats]
    checks.append(Check("j=2: features empty -> pair -> {0}", labels == ["Psi_U", "Psi_c"],
                        "; ".join(f"{f.label}@{f.t:.4f}" for f in feats)))
    if len(feats) == 2:
        asym = 0.0
        for t in np.arange(feats[0].t, feats[1].t, 0.001)[1:]:
            pts = cw.cw_bad_set(t, model).bad_points
            if len(pts) == 2:
                asym = max(asym, abs(pts[0] + pts[1]))
        after = cw.cw_bad_set(feats[1].t + 0.01, model).bad_points
        checks.append(Check("j=2: pair phase symmetric to 1e-6", asym <= tol(1e-6), f"max |c1 + c2| {asym:.2e}"))
        checks.append(Check("j=2: {0} after the last feature", len(after) == 1 and abs(after[0]) <= tol(1e-3),
                            str(after)))
    return checks


@_timed(5, "short-time Gibbsianness", 120.0)
def criterion_5(seed: int = 5):
    rng = np.random.default_rng(seed)
    M = 32
    failures = 0
    total = 0
    for beta in (0.5, 1.0, 2.0):
        for t in (0.001, 0.005, 0.01):
            for k in range(20):
                hmax = rng.choice([0.0, 0.5, 1.0])
                h = rng.uniform(-hmax, hmax, M) if k % 2 else float(rng.choice([-1, 1]) * hmax)
                model = _model(M, beta, h)
                ap = rng.uniform(-1, 1, M)
                total += 1
                if not kv.short_time_uniqueness(model, ap, t):
                    failures += 1
    good = 0
    for k in range(20):
        model = _model(M, 2.0, rng.uniform(-1, 1, M))
        ap = rng.uniform(-1, 1, M)
        c = kn.classify_profile(ap, 0.01, model)
        good += c.verdict in (kn.Verdict.GOOD, kn.Verdict.SHORT_TIME_CERTIFIED)
    return [Check("uniqueness certificate for t <= 0.01", failures == 0, f"{total - failures}/{total} certified"),
            Check("classify_profile -> Good for 20 random profiles", good == 20, f"{good}/20 good")]


@_timed(6, "mean-field reduction", 120.0)
def criterion_6():
    cases = [(0.5, 0.0, 0.3, 1.0), (1.5, 0.2, -0.4, 0.7), (2.0, 0.0, 0.0, 1.0), (2.0, 0.1, 0.5, 2.0),
             (1.2, -0.3, 0.1, 0.3)]
    worst_flat = worst_match = 0.0
    count_ok = True
    for beta, c, cp, t in cases:
        model = _model(64, beta, c)
        rep = kv.kac_global_minimizers(np.full(64, cp), t, model)
        ref = cw.cw_global_minima(t, cp, cw.CWModel(beta, beta * c))
        mins = sorted(p.values.mean() for p in rep.global_minimizers())
        count_ok &= len(mins) == ref.multiplicity
        for p in rep.global_minimizers():
            worst_flat = max(worst_flat, float(np.ptp(p.values)))
        for mk, (mr, _) in zip(mins, ref.global_minima):
            worst_match = max(worst_match, abs(mk - mr))
    return [Check("global minimisers constant within 1e-6", worst_flat <= tol(1e-6), f"max spread {worst_flat:.2e}"),
            Check("same multiplicity as the scalar problem", bool(count_ok)),
            Check("match the scalar minimisers within 1e-6", worst_match <= tol(1e-6), f"max err {worst_match:.2e}")]


@_timed(7, "cost-form identity", 60.0)
def criterion_7(seed: int = 7):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        model = _model(32, rng.uniform(0, 2), rng.uniform(-1, 1, 32))
        a = rng.uniform(-0.99, 0.99, 32)
        ap = rng.uniform(-0.99, 0.99, 32)
        t = rng.uniform(0.05, 3)
        c1 = kv.kac_cost(a, ap, t, model)
        c2 = kv.kac_cost_pt(a, ap, t, model)
        worst = max(worst, abs(c1 - c2) / max(abs(c1), abs(c2)))
    return [Check("relative difference <= 1e-6", worst <= tol(1e-6), f"max rel diff {worst:.2e}")]


@_timed(8, "critical-equation limits", 60.0)
def criterion_8(seed: int = 8):
    rng = np.random.default_rng(seed)
    worst_tanh = worst_beta0 = worst_res = 0.0
    for beta in (0.5, 1.0, 1.5, 2.0):
        model = _model(32, beta, rng.uniform(-0.5, 0.5, 32))
        ap = rng.uniform(-1, 1, 32)
        for s in (None, np.full(32, 0.9), np.full(32, -0.9)):
            prof, res, _ = kv.solve_critical(ap, 20.0, model, seed=s)
            a = prof.values
            worst_tanh = max(worst_tanh, float(np.max(np.abs(a - np.tanh(beta * model.local_field(a))))))
            worst_res = max(worst_res, res)
    model0 = _model(32, 0.0, rng.uniform(-1, 1, 32))
    for t in (0.1, 0.5, 1.0, 3.0):
        ap = rng.uniform(-1, 1, 32)
        prof, res, _ = kv.solve_critical(ap, t, model0)
        worst_beta0 = max(worst_beta0, float(np.max(np.abs(prof.values - ap / math.cosh(2 * t)))))
        worst_res = max(worst_res, res)
    return [Check("t=20: alpha = tanh(beta (J*alpha + h)) within 1e-6", worst_tanh <= tol(1e-6), f"max {worst_tanh:.2e}"),
            Check("beta=0: alpha = alpha'/cosh(2t) within 1e-10", worst_beta0 <= tol(1e-10), f"max {worst_beta0:.2e}"),
            Check("residual <= 1e-10", worst_res <= tol(1e-10), f"max {worst_res:.2e}")]


@_timed(9, "finite-n oracle convergence", 600.0)
def criterion_9(m_prime: float = 0.5, t: float = 0.5):
    spec = fs.LatticeSpec(1, 0.8)
    errs = []
    for n in (6, 8, 10, 12):
        S = fs._nearest_sum(n - 1, m_prime)
        exact = fs.exact_conditional_gamma(n, spec.lattice(n), t, (S,), u=0.0)
        pred = fs.predicted_conditional_gamma(spec, t, S / (n - 1))
        errs.append(abs(exact.p_plus - pred))
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    return [Check("error strictly decreasing over n = 6, 8, 10, 12", dec,
                  ", ".join(f"{e:.4g}" for e in errs))]


@_timed(10, "simulator ground truth", 300.0)
def criterion_10(seed: int = 10):
    checks = []
    lm = fs.LatticeSpec(1, 0.8).lattice(8)
    for t in (0.25, 0.5, 1.0):
        est, se = fs.site_autocorrelation(lm, t, replicas=10_000, seed=seed)
        checks.append(Check(f"autocorrelation at t={t} within 3 SE of exp(-2t)", abs(est - math.exp(-2 * t)) <= tol(3 * se),
                            f"{est:.4f} +- {se:.4f} vs {math.exp(-2 * t):.4f}"))
    worst = 0.0
    for spec, n in ((fs.LatticeSpec(1, 1.3, kernel="cosine-bump", field=0.3), 8),
                    (fs.LatticeSpec(2, 0.9, kernel="cosine-bump", field=-0.2), 2),
                    (fs.LatticeSpec(3, 1.1, field=0.1), 2),
                    (fs.LatticeSpec(1, 2.0), 4)):
        worst = max(worst, fs.detailed_balance_defect(spec.lattice(n)))
    checks.append(Check("heat-bath detailed balance <= 1e-12", worst <= tol(1e-12), f"max {worst:.2e}"))
    start = fs.equilibrium_sample(lm, sweeps=50, seed=seed)
    runs = [fs.glauber_simulate(start, lm, 2.0, seed=seed, sample_times=np.linspace(0, 2, 21)) for _ in range(2)]
    same = runs[0].to_csv() == runs[1].to_csv() and np.array_equal(runs[0].event_times, runs[1].event_times) \
        and np.array_equal(runs[0].event_sites, runs[1].event_sites)
    ens = [fs.equilibrium_ensemble(lm, 100, sweeps=20, seed=seed).tobytes() for _ in range(2)]
    checks.append(Check("identical seeds give identical outputs", same and ens[0] == ens[1]))
    return checks


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def run_all(only=None, tol_scale: float = 1.0) -> list:
    """Run the selected criteria (all by default) with thresholds multiplied by ``tol_scale``."""
    if not tol_scale > 0:
        raise ValueError("tol_scale must be positive")
    prev = _TOL_SCALE[0]
    _TOL_SCALE[0] = float(tol_scale)
    try:
        return [fn() for k, fn in enumerate(CRITERIA, start=1) if not only or k in only]
    finally:
        _TOL_SCALE[0] = prev
