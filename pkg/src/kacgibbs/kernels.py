"""Single-spin specification kernels and good/bad classification of final profiles.

A spin at node ``u`` starts from the equilibrium kernel in the field of the
optimal initial profile and then follows a two-state chain driven by the field
along the optimal trajectory.  Conditioning on the final spin is a Bayes step.

Time is normalised to unit flip rate at infinite dynamical temperature, so the
two-state chain relaxes like ``exp(-2t)``; ``rate_scale`` multiplies the
``exp(-+b F) / (2 cosh b F)`` flip rates and defaults to 2 for that reason.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BifurcationError, ConvergenceError, InconclusiveError, SelectionAnomaly
from .torus import KacModel, Profile
from .variational import (
    MinimizerReport,
    TrajectoryGrid,
    _values,
    kac_global_minimizers,
    selection_probe,
    short_time_uniqueness,
)

DEFAULT_RATE_SCALE = 2.0
# kernel limits closer than this are treated as equal; the jump itself decays like exp(-2t)
WITNESS_TOL = 1e-10


@dataclass(frozen=True)
class KernelValue:
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if not (0.0 <= self.p_plus <= 1.0 and 0.0 <= self.p_minus <= 1.0):
            raise ValueError("kernel probabilities must lie in [0, 1]")
        if abs(self.p_plus + self.p_minus - 1.0) > 1e-12:
            raise ValueError("kernel probabilities must sum to 1")

    @classmethod
    def from_plus(cls, p_plus: float) -> "KernelValue":
        p = float(p_plus)
        return cls(p, 1.0 - p)

    def prob(self, k: int) -> float:
        return self.p_plus if k > 0 else self.p_minus


def _check_spin(k):
    if k not in (-1, 1):
        raise ValueError(f"spin values are -1 or +1, got {k!r}")


def _node(model: KacModel, u_index):
    idx = (u_index,) if np.isscalar(u_index) else tuple(u_index)
    if len(idx) != model.grid.d:
        raise ValueError(f"node index needs {model.grid.d} components")
    return tuple(int(i) % model.grid.M for i in idx)


def _plus_prob(a):
    """``e^a / (2 cosh a)`` without overflow."""
    return 0.5 * (1.0 + np.tanh(a))


# ---------------------------------------------------------------------------

def static_kernel(alpha, u_index, model: KacModel) -> KernelValue:
    """Equilibrium single-spin law in the field ``beta (J * alpha + h)(u)``."""
    a = _values(alpha, model.grid)
    F = model.local_field(a)[_node(model, u_index)]
    return KernelValue.from_plus(_plus_prob(model.beta * F))


def two_state_closed(t: float, k: int, k_prime: int) -> float:
    """Transition probability of a unit-rate flipping spin: ``(1 + k k' e^{-2t}) / 2``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    _check_spin(k)
    _check_spin(k_prime)
    return 0.5 * (1.0 + k * k_prime * math.exp(-2.0 * t))


def two_state_matrix(t: float) -> np.ndarray:
    """Rows/columns ordered ``(+1, -1)``."""
    return np.array([[two_state_closed(t, k, kp) for kp in (1, -1)] for k in (1, -1)])


def two_state_path(traj: TrajectoryGrid, u_index, model: KacModel, t: float | None = None,
                   rate_scale: float = DEFAULT_RATE_SCALE, max_step: float | None = None) -> np.ndarray:
    """Transition matrix of the time-inhomogeneous two-state chain at node ``u``.

    The local field ``(J * phi_s + h)(u)`` is interpolated linearly between the
    trajectory samples; the forward equation is integrated with classical RK4.
    Rows/columns are ordered ``(+1, -1)``.
    """
    t = traj.t if t is None else float(t)
    if t < 0 or t > traj.t + 1e-12:
        raise ValueError("trajectory does not cover [0, t]")
    if t == 0:
        return np.eye(2)
    node = _node(model, u_index)
    fields = np.array([model.local_field(v)[node] for v in traj.values])
    bp = model.beta_prime

    def generator(s):
        b = bp * np.interp(s, traj.times, fields)
        down = rate_scale * _plus_prob(-b)   # +1 -> -1
        up = rate_scale * _plus_prob(b)      # -1 -> +1
        return np.array([[-down, down], [up, -up]])

    h_max = 1e-3 * t if max_step is None else min(max_step, 1e-3 * t)
    n = int(math.ceil(t / h_max))
    h = t / n
    P = np.eye(2)
    for i in range(n):
        s = i * h
        k1 = P @ generator(s)
        k2 = (P + 0.5 * h * k1) @ generator(s + 0.5 * h)
        k3 = (P + 0.5 * h * k2) @ generator(s + 0.5 * h)
        k4 = (P + h * k3) @ generator(s + h)
        P = P + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-10 or np.any(P < -1e-12):
        raise ConvergenceError("two-state integration lost stochasticity; reduce the step")
    return np.clip(P, 0.0, 1.0)


def homogeneous_two_state(rate_down: float, rate_up: float, t: float) -> np.ndarray:
    """Closed-form transition matrix for constant flip rates."""
    r = rate_down + rate_up
    e = math.exp(-r * t)
    pp = (rate_up + rate_down * e) / r
    mm = (rate_down + rate_up * e) / r
    return np.array([[pp, 1 - pp], [1 - mm, mm]])


def gamma_beta0(k_prime: int, a: float, t: float) -> float:
    """Final-spin conditional law for infinite-temperature dynamics.

    ``a`` is the initial local field ``beta (J * phi_0 + h)(u)``; the result is
    ``(1 + k' e^{-2t} tanh a) / 2``.
    """
    _check_spin(k_prime)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 0.5 * (1.0 + k_prime * math.exp(-2.0 * t) * math.tanh(a))


def _bayes(a, P) -> KernelValue:
    w = np.array([_plus_prob(a), _plus_prob(-a)])   # initial law of (+1, -1)
    joint = w @ P
    return KernelValue.from_plus(joint[0] / joint.sum())


def specification_kernel(alpha_prime, t: float, minimizer, u_index, model: KacModel,
                         trajectory: TrajectoryGrid | None = None,
                         rate_scale: float = DEFAULT_RATE_SCALE) -> KernelValue:
    """Kernel at time ``t`` given the optimal initial profile ``minimizer``.

    ``minimizer`` may be a profile, an array, or a :class:`MinimizerReport`; a
    report with several global minimisers raises :class:`BifurcationError`
    carrying the kernel value of each branch.  For ``beta' > 0`` the optimal
    ``trajectory`` must be supplied.
    """
    if isinstance(minimizer, MinimizerReport):
        branches = minimizer.global_minimizers()
        if len(branches) > 1:
            vals = [specification_kernel(alpha_prime, t, b, u_index, model, trajectory, rate_scale)
                    for b in branches]
            raise BifurcationError("several global minimisers: kernel has no limit here", vals)
        minimizer = branches[0]
    phi0 = _values(minimizer, model.grid)
    _values(alpha_prime, model.grid)
    a = model.beta * model.local_field(phi0)[_node(model, u_index)]
    if t == 0:
        P = np.eye(2)
    elif model.beta_prime == 0.0 and trajectory is None:
        P = homogeneous_two_state(0.5 * rate_scale, 0.5 * rate_scale, t)
    else:
        if trajectory is None:
            raise ValueError("beta' > 0 needs the optimal trajectory")
        P = two_state_path(trajectory, u_index, model, t, rate_scale)
    return _bayes(a, P)


# ---------------------------------------------------------------------------
# classification

class Verdict(str, enum.Enum):
    GOOD = "Good"
    BAD = "Bad"
    SHORT_TIME_CERTIFIED = "ShortTimeCertified"


@dataclass
class Witness:
    u: tuple
    limit_plus_side: float
    limit_minus_side: float


@dataclass
class ProfileClassification:
    alpha_prime: Profile
    t: float
    verdict: Verdict
    multiplicity: int
    witnesses: list = field(default_factory=list)
    kernel_plus: np.ndarray | None = field(default=None, repr=False)
    certified: bool = False
    seeds: list = field(default_factory=list)
    alpha_prime_ref: str = ""

    def to_dict(self) -> dict:
        return {
            "alpha_prime_ref": self.alpha_prime_ref or _profile_ref(self.alpha_prime),
            "t": self.t,
            "verdict": self.verdict.value,
            "multiplicity": self.multiplicity,
            "certified": self.certified,
            "witnesses": [{"u": list(w.u), "limit_plus_side": w.limit_plus_side,
                           "limit_minus_side": w.limit_minus_side} for w in self.witnesses],
            "kernel_plus": None if self.kernel_plus is None else self.kernel_plus.ravel().tolist(),
            "seeds": list(self.seeds),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _profile_ref(p: Profile) -> str:
    return "sha1:" + hashlib.sha1(np.ascontiguousarray(p.values).tobytes()).hexdigest()


def _kernel_field(values, model, t):
    a = model.beta * model.local_field(values)
    return 0.5 * (1.0 + math.exp(-2.0 * t) * np.tanh(a))


def classify_profile(alpha_prime, t: float, model: KacModel, seeds=None, workers: int = 1,
                     alpha_prime_ref: str = "", solver_options=None,
                     witness_tol: float = WITNESS_TOL) -> ProfileClassification:
    """Good/bad verdict for a final profile from the multiplicity of global minimisers.

    Bad verdicts come with witness nodes where the two one-sided kernel limits
    differ.  Raises :class:`InconclusiveError` when the solver fails and no
    uniqueness certificate is available.
    """
    ap = alpha_prime if isinstance(alpha_prime, Profile) else Profile(model.grid, alpha_prime)
    if t == 0:
        return ProfileClassification(ap, 0.0, Verdict.GOOD, 1,
                                     kernel_plus=_plus_prob(model.beta * model.local_field(ap.values)),
                                     certified=True, alpha_prime_ref=alpha_prime_ref)
    cert = short_time_uniqueness(model, ap, t)
    try:
        report = kac_global_minimizers(ap, t, model, seeds=seeds, workers=workers,
                                       solver_options=solver_options)
    except ConvergenceError as exc:
        if cert and cert.collapsed:
            return ProfileClassification(ap, float(t), Verdict.SHORT_TIME_CERTIFIED, 1,
                                         kernel_plus=_kernel_field(cert.lower, model, t), certified=True,
                                         alpha_prime_ref=alpha_prime_ref)
        if cert:
            return ProfileClassification(ap, float(t), Verdict.SHORT_TIME_CERTIFIED, 1, certified=True,
                                         alpha_prime_ref=alpha_prime_ref)
        raise InconclusiveError(f"no critical profile found and no certificate: {exc}") from exc

    if report.unique:
        best = report.critical_profiles[report.global_set[0]].profile.values
        return ProfileClassification(ap, float(t), Verdict.GOOD, 1, kernel_plus=_kernel_field(best, model, t),
                                     certified=bool(cert), seeds=report.seeds_used,
                                     alpha_prime_ref=alpha_prime_ref)
    if cert:
        raise InconclusiveError("uniqueness certificate holds but several global minimisers were found")

    probe = selection_probe(report, model)
    k_plus = _kernel_field(probe.limit_plus.values, model, t)
    k_minus = _kernel_field(probe.limit_minus.values, model, t)
    witnesses = []
    for idx in zip(*np.nonzero(probe.witness_mask)):
        if abs(k_plus[idx] - k_minus[idx]) > witness_tol:
            witnesses.append(Witness(tuple(int(i) for i in idx), float(k_plus[idx]), float(k_minus[idx])))
    if not witnesses:
        raise SelectionAnomaly("distinct global minimisers but no node with distinct kernel limits")
    return ProfileClassification(ap, float(t), Verdict.BAD, len(report.global_set), witnesses,
                                 seeds=report.seeds_used, alpha_prime_ref=alpha_prime_ref)
