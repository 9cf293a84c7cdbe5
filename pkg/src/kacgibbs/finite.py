"""Finite-volume spin systems on the discrete torus ``{0, ..., n-1}^d``.

Exact enumeration is used for tiny volumes (at most 12 spins), heat-bath
sampling and event-driven Glauber dynamics otherwise.  Site ``x`` sits at the
torus point ``x / n``, so a lattice model with side ``n`` shares its kernel and
field samples with a :class:`~kacgibbs.torus.KacModel` on ``TorusGrid(d, n)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.special import comb, logsumexp

from . import curie_weiss as cw
from .errors import AcceptanceStarvation, EnumerationTooLarge, UnsupportedRegimeError
from .kernels import DEFAULT_RATE_SCALE, KernelValue, gamma_beta0
from .torus import ExternalField, InteractionKernel, KacModel, TorusGrid, kac_energy_values

MAX_ENUM_SPINS = 12


# ---------------------------------------------------------------------------
# models

def _const_one(*u):
    return np.ones_like(u[0])


def _cos_bump(*u):
    return np.prod([1.0 + np.cos(2 * np.pi * x) for x in u], axis=0)


KERNELS: dict[str, Callable] = {"constant": _const_one, "cosine-bump": _cos_bump}


@dataclass(frozen=True)
class LatticeSpec:
    """Continuum model data that can be sampled on any lattice or torus grid."""

    d: int
    beta: float
    beta_prime: float = 0.0
    kernel: str = "constant"
    kernel_scale: float = 1.0
    field: float = 0.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")

    def kac_model(self, M: int) -> KacModel:
        grid = TorusGrid(self.d, M)
        J = InteractionKernel(grid, self.kernel_scale * grid.sample(KERNELS[self.kernel]))
        return KacModel(J, ExternalField.constant(grid, self.field), self.beta, self.beta_prime)

    def lattice(self, n: int) -> "LatticeModel":
        return LatticeModel(self.kac_model(n))


@dataclass(frozen=True)
class LatticeModel:
    """Kac model sampled at the lattice points ``x / n``."""

    kac: KacModel

    @property
    def n(self) -> int:
        return self.kac.grid.M

    @property
    def d(self) -> int:
        return self.kac.grid.d

    @property
    def volume(self) -> int:
        return self.kac.grid.size

    @property
    def beta(self) -> float:
        return self.kac.beta

    @property
    def beta_prime(self) -> float:
        return self.kac.beta_prime

    @property
    def J0(self) -> float:
        return float(self.kac.J.values.reshape(-1)[0])

    def coupling_matrix(self) -> np.ndarray:
        """``J((x - y)/n) / n^d`` over flattened sites."""
        return self.kac.J._dense if self.volume <= 1024 else None

    def local_fields(self, spins: np.ndarray) -> np.ndarray:
        """``(1/N) sum_{y != x} J(x - y) s_y + h_x`` for a batch ``(R, N)`` of configurations."""
        N = self.volume
        W = self.coupling_matrix()
        s = np.asarray(spins, dtype=float)
        return s @ W - (self.J0 / N) * s + self.kac.h.values.reshape(N)


@dataclass
class SpinConfig:
    n: int
    d: int
    spins: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.spins).reshape((self.n,) * self.d)
        if not np.all(np.abs(s) == 1):
            raise ValueError("spins must be +1 or -1")
        self.spins = s.astype(np.int8)

    @property
    def flat(self) -> np.ndarray:
        return self.spins.reshape(-1)


def hamiltonian_n(sigma: SpinConfig, lm: LatticeModel) -> float:
    """``-(1/2N) sum_{x,y} J((x-y)/n) s_x s_y - sum_x h(x/n) s_x``, self-pairs included."""
    s = sigma.spins.astype(float)
    Js = lm.kac.J.apply(s)
    return float(-0.5 * np.sum(s * Js) - np.sum(lm.kac.h.values * s))


def energy_pushforward_gap(sigma: SpinConfig, lm: LatticeModel) -> float:
    """``H^n(sigma) + N * H(pi^n(sigma))``."""
    s = sigma.spins.astype(float)
    return hamiltonian_n(sigma, lm) + lm.volume * kac_energy_values(s, lm.kac)


# ---------------------------------------------------------------------------
# exact enumeration

def all_configs(N: int) -> np.ndarray:
    """Every configuration of ``N`` spins, shape ``(2^N, N)``; bit ``k`` of the index is site ``k``."""
    if N > MAX_ENUM_SPINS:
        raise EnumerationTooLarge(f"exact enumeration supports at most {MAX_ENUM_SPINS} spins, got {N}")
    idx = np.arange(2**N)[:, None]
    bits = (idx >> np.arange(N)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def energies(lm: LatticeModel, configs: np.ndarray) -> np.ndarray:
    """:func:`hamiltonian_n` for every row of ``configs``."""
    s = configs.astype(float)
    return -0.5 * np.einsum("ri,ij,rj->r", s, lm.kac.J._dense, s) - s @ lm.kac.h.values.reshape(-1)


def gibbs_weights(lm: LatticeModel, configs: np.ndarray | None = None) -> np.ndarray:
    """Exact ``mu^n`` over :func:`all_configs`."""
    configs = all_configs(lm.volume) if configs is None else configs
    logw = -lm.beta * energies(lm, configs)
    return np.exp(logw - logsumexp(logw))


def heat_bath_matrix(lm: LatticeModel) -> np.ndarray:
    """Random-scan heat-bath transition matrix over :func:`all_configs`."""
    N = lm.volume
    configs = all_configs(N)
    g = lm.local_fields(configs)
    p_plus = 0.5 * (1.0 + np.tanh(lm.beta * g))
    K = np.zeros((2**N, 2**N))
    rows = np.arange(2**N)
    for x in range(N):
        flipped = rows ^ (1 << x)
        s = configs[:, x]
        p_new = np.where(s > 0, 1.0 - p_plus[:, x], p_plus[:, x])  # prob. the site ends opposite
        K[rows, flipped] += p_new / N
        K[rows, rows] += (1.0 - p_new) / N
    return K


def detailed_balance_defect(lm: LatticeModel) -> float:
    """``max |mu(a) K(a, b) - mu(b) K(b, a)|`` over all configuration pairs."""
    mu = gibbs_weights(lm)
    K = heat_bath_matrix(lm)
    flow = mu[:, None] * K
    return float(np.max(np.abs(flow - flow.T)))


def _evolve_product(p: np.ndarray, N: int, t: float) -> np.ndarray:
    """Apply the unit-rate single-spin kernel to every site of a law on ``all_configs``."""
    e = math.exp(-2.0 * t)
    P = 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])
    q = p.reshape((2,) * N)
    for ax in range(N):
        q = np.moveaxis(np.tensordot(q, P, axes=([ax], [0])), -1, ax)
    return q.reshape(-1)


def final_law(lm: LatticeModel, t: float) -> np.ndarray:
    """Exact law at time ``t`` of the infinite-temperature dynamics started from ``mu^n``."""
    if lm.beta_prime != 0.0:
        raise UnsupportedRegimeError("exact evolution only for beta_prime = 0")
    return _evolve_product(gibbs_weights(lm), lm.volume, t)


# ---------------------------------------------------------------------------
# empirical densities

@dataclass
class EmpiricalMeasure:
    """Signed point masses ``s_x / |Lambda|`` at the occupied sites."""

    n: int
    d: int
    mask: np.ndarray
    weights: np.ndarray   # Fraction-free float weights; exact rationals via ``rational_weights``

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def rational_weights(self) -> list:
        lam = self.size
        return [Fraction(int(round(w * lam)), lam) for w in self.weights[self.mask]]

    def block_sums(self, blocks: int = 1) -> tuple:
        """Integer spin sums over ``blocks`` equal slabs along the first axis."""
        lam = self.size
        spins = np.rint(self.weights * lam).astype(int)
        slabs = np.array_split(spins, blocks, axis=0)
        return tuple(int(sl.sum()) for sl in slabs)

    def block_means(self, blocks: int = 1) -> np.ndarray:
        spins = self.weights * self.size
        mask_sl = np.array_split(self.mask, blocks, axis=0)
        sp_sl = np.array_split(spins, blocks, axis=0)
        return np.array([s.sum() / max(m.sum(), 1) for s, m in zip(sp_sl, mask_sl)])


def perforation_site(n: int, d: int, u) -> tuple:
    return TorusGrid(d, n).node_index(u)


def empirical_density(sigma: SpinConfig, perforation=None) -> EmpiricalMeasure:
    """Empirical density, optionally with the site ``floor(n u)`` removed."""
    mask = np.ones(sigma.spins.shape, dtype=bool)
    if perforation is not None:
        mask[perforation_site(sigma.n, sigma.d, perforation)] = False
    lam = int(mask.sum())
    w = np.where(mask, sigma.spins / lam, 0.0)
    return EmpiricalMeasure(sigma.n, sigma.d, mask, w)


def _block_labels(n: int, d: int, blocks: int) -> np.ndarray:
    lab = np.zeros((n,) * d, dtype=int)
    for b, sl in enumerate(np.array_split(np.arange(n), blocks)):
        lab[sl] = b
    return lab.reshape(-1)


# ---------------------------------------------------------------------------
# exact conditional single-spin law

def exact_conditional_gamma(n: int, lm: LatticeModel, t: float, alpha_class, u=0.0,
                            blocks: int = 1) -> KernelValue:
    """Exact ``P(s_t(x) = . | perforated block sums of s_t)`` at ``x = floor(n u)``.

    ``alpha_class`` is either an :class:`EmpiricalMeasure` perforated at ``u`` or
    the tuple of integer block sums that defines the conditioning class.
    """
    if lm.n != n:
        raise ValueError("lattice model side does not match n")
    N = lm.volume
    if N > MAX_ENUM_SPINS:
        raise EnumerationTooLarge(f"n^d = {N} exceeds {MAX_ENUM_SPINS}")
    x0 = int(np.ravel_multi_index(perforation_site(n, lm.d, u), (n,) * lm.d))
    target = alpha_class.block_sums(blocks) if isinstance(alpha_class, EmpiricalMeasure) else tuple(alpha_class)
    configs = all_configs(N)
    law = final_law(lm, t)
    labels = _block_labels(n, lm.d, blocks)
    keep = np.ones(N, dtype=bool)
    keep[x0] = False
    sums = np.stack([configs[:, keep & (labels == b)].sum(axis=1) for b in range(blocks)], axis=1)
    in_class = np.all(sums == np.asarray(target)[None, :], axis=1)
    tot = law[in_class].sum()
    if tot == 0.0:
        raise ValueError(f"conditioning class {target} is empty")
    plus = law[in_class & (configs[:, x0] > 0)].sum()
    return KernelValue.from_plus(plus / tot)


def predicted_conditional_gamma(spec: LatticeSpec, t: float, m_prime: float) -> float:
    """Infinite-volume prediction for a constant final profile with constant kernel and field."""
    model = cw.CWModel(spec.beta * spec.kernel_scale, spec.beta * spec.field)
    curve = cw.cw_global_minima(t, m_prime, model)
    if not curve.unique:
        raise ValueError("final magnetisation is bad: no unique prediction")
    m0 = curve.global_minima[0][0]
    a = spec.beta * (spec.kernel_scale * m0 + spec.field)
    return gamma_beta0(1, a, t)


# ---------------------------------------------------------------------------
# Monte Carlo: heat bath and Glauber dynamics

def equilibrium_ensemble(lm: LatticeModel, replicas: int, sweeps: int = 1000, seed: int = 0) -> np.ndarray:
    """``replicas`` independent heat-bath chains after ``sweeps`` systematic sweeps, shape ``(R, N)``."""
    rng = np.random.default_rng(seed)
    N = lm.volume
    s = rng.choice(np.array([-1, 1], dtype=np.int8), size=(replicas, N)).astype(float)
    if lm.beta == 0.0:
        return s.astype(np.int8)
    W = lm.coupling_matrix()
    h = lm.kac.h.values.reshape(N)
    J0N = lm.J0 / N
    for _ in range(sweeps):
        u = rng.random((replicas, N))
        for x in range(N):
            g = s @ W[:, x] - J0N * s[:, x] + h[x]
            p = 0.5 * (1.0 + np.tanh(lm.beta * g))
            s[:, x] = np.where(u[:, x] < p, 1.0, -1.0)
    return s.astype(np.int8)


def equilibrium_sample(lm: LatticeModel, sweeps: int = 1000, seed: int = 0) -> SpinConfig:
    return SpinConfig(lm.n, lm.d, equilibrium_ensemble(lm, 1, sweeps, seed)[0])


@dataclass
class SimRun:
    settings: dict
    sample_times: np.ndarray
    block_magnetization: np.ndarray          # (len(sample_times), blocks)
    final: SpinConfig
    event_times: np.ndarray = field(repr=False)
    event_sites: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        cols = ["time"] + [f"block{b}" for b in range(self.block_magnetization.shape[1])]
        lines = [",".join(cols)]
        for s, row in zip(self.sample_times, self.block_magnetization):
            lines.append(",".join(format(float(v), ".17g") for v in (s, *row)))
        return "\n".join(lines) + "\n"

    def sidecar(self) -> str:
        return json.dumps(self.settings, indent=2, sort_keys=True)


def _accept_prob(lm: LatticeModel, dH):
    """``exp(-b dH/2) / (2 cosh(b dH/2))`` = flip rate divided by the dominating rate."""
    return 0.5 * (1.0 - np.tanh(0.5 * lm.beta_prime * dH))


def glauber_simulate(start: SpinConfig, lm: LatticeModel, t: float, seed: int = 0,
                     rate_scale: float = DEFAULT_RATE_SCALE, sample_times=None, blocks: int = 1) -> SimRun:
    """Event-driven Glauber dynamics by uniformisation with dominating rate ``rate_scale`` per site."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    N = lm.volume
    rng = np.random.default_rng(seed)
    s = start.flat.astype(float).copy()
    samples = np.array([0.0, t]) if sample_times is None else np.asarray(sample_times, dtype=float)
    if np.any(samples < 0) or np.any(samples > t) or np.any(np.diff(samples) < 0):
        raise ValueError("sample times must be sorted within [0, t]")
    labels = _block_labels(lm.n, lm.d, blocks)

    def blockmag(v):
        return np.array([v[labels == b].mean() for b in range(blocks)])

    W = lm.coupling_matrix()
    h = lm.kac.h.values.reshape(N)
    J0N = lm.J0 / N
    rec = []
    ev_t, ev_x = [], []
    clock = 0.0
    k = 0
    total = rate_scale * N
    while True:
        clock += rng.exponential(1.0 / total) if total > 0 else math.inf
        while k < samples.size and samples[k] < clock:
            rec.append(blockmag(s))
            k += 1
        if clock > t:
            break
        x = int(rng.integers(N))
        g = s @ W[:, x] - J0N * s[x] + h[x]
        if rng.random() < _accept_prob(lm, 2.0 * s[x] * g):
            s[x] = -s[x]
            ev_t.append(clock)
            ev_x.append(x)
    settings = {"n": lm.n, "d": lm.d, "beta": lm.beta, "beta_prime": lm.beta_prime, "t": t, "seed": seed,
                "rate_scale": rate_scale, "blocks": blocks}
    return SimRun(settings, samples, np.array(rec), SpinConfig(lm.n, lm.d, s.astype(np.int8)),
                  np.array(ev_t), np.array(ev_x, dtype=int))


def glauber_ensemble(start: np.ndarray, lm: LatticeModel, t: float, seed: int = 0,
                     rate_scale: float = DEFAULT_RATE_SCALE) -> np.ndarray:
    """Evolve a batch ``(R, N)`` of configurations; all replicas advance one event per round."""
    rng = np.random.default_rng(seed)
    s = np.asarray(start, dtype=float).copy()
    R, N = s.shape
    W = lm.coupling_matrix()
    h = lm.kac.h.values.reshape(N)
    J0N = lm.J0 / N
    clock = rng.exponential(1.0 / (rate_scale * N), R)
    rows = np.arange(R)
    while True:
        live = clock <= t
        if not live.any():
            break
        r = rows[live]
        x = rng.integers(N, size=r.size)
        sx = s[r, x]
        g = np.einsum("ij,ji->i", s[r], W[:, x]) - J0N * sx + h[x]
        flip = rng.random(r.size) < _accept_prob(lm, 2.0 * sx * g)
        s[r[flip], x[flip]] = -sx[flip]
        clock[r] += rng.exponential(1.0 / (rate_scale * N), r.size)
    return s.astype(np.int8)


def site_autocorrelation(lm: LatticeModel, t: float, replicas: int = 10_000, seed: int = 0,
                         rate_scale: float = DEFAULT_RATE_SCALE, site: int = 0):
    """Monte Carlo ``E[s_0(x) s_t(x)]`` and its standard error."""
    ss = np.random.SeedSequence(seed)
    s_eq, s_dyn = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    start = equilibrium_ensemble(lm, replicas, sweeps=200, seed=s_eq)
    end = glauber_ensemble(start, lm, t, seed=s_dyn, rate_scale=rate_scale)
    prod = start[:, site].astype(float) * end[:, site]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(replicas))


@dataclass
class MCEstimate:
    kernel: KernelValue
    stderr: float
    accepted: int
    acceptance: float


def mc_conditional_gamma(n: int, lm: LatticeModel, t: float, alpha_prime, tolerance_ball: float,
                         replicas: int, seed: int = 0, u=0.0, blocks: int = 1, sweeps: int = 200,
                         min_accepted: int = 1000, rate_scale: float = DEFAULT_RATE_SCALE) -> MCEstimate:
    """Rejection estimate of the conditional single-spin law at ``floor(n u)``.

    Replicas are kept when every perforated block mean of the final configuration
    is within ``tolerance_ball`` of the block mean of ``alpha_prime``.
    """
    if lm.n != n:
        raise ValueError("lattice model side does not match n")
    N = lm.volume
    ap = np.broadcast_to(np.asarray(alpha_prime, dtype=float), (n,) * lm.d).reshape(N)
    x0 = int(np.ravel_multi_index(perforation_site(n, lm.d, u), (n,) * lm.d))
    ss = np.random.SeedSequence(seed)
    s_eq, s_dyn = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    start = equilibrium_ensemble(lm, replicas, sweeps=sweeps, seed=s_eq)
    end = glauber_ensemble(start, lm, t, seed=s_dyn, rate_scale=rate_scale).astype(float)
    labels = _block_labels(n, lm.d, blocks)
    keep = np.ones(N, dtype=bool)
    keep[x0] = False
    ok = np.ones(replicas, dtype=bool)
    for b in range(blocks):
        sel = keep & (labels == b)
        target = ap[sel].mean()
        ok &= np.abs(end[:, sel].mean(axis=1) - target) <= tolerance_ball
    acc = int(ok.sum())
    if acc < min_accepted:
        raise AcceptanceStarvation(f"only {acc} of {replicas} replicas fell in the ball")
    p = float((end[ok, x0] > 0).mean())
    return MCEstimate(KernelValue.from_plus(p), math.sqrt(p * (1 - p) / acc), acc, acc / replicas)


# ---------------------------------------------------------------------------
# large-deviation probe

@dataclass
class LDPRow:
    n: int
    value: float
    exact: bool
    m_prime: float
    stderr: float = 0.0


def _nearest_sum(N: int, m: float) -> int:
    """Spin sum with the parity of ``N`` closest to ``m N``."""
    S = int(round((m * N - N) / 2.0)) * 2 + N
    return max(-N, min(N, S))


def variational_rate(spec: LatticeSpec, t: float, m_prime: float) -> float:
    """``inf_m C(m) - inf_m I_S(m)`` for constant kernel and field (mean-field reduction)."""
    j, h = spec.beta * spec.kernel_scale, spec.beta * spec.field
    if t == 0:
        cost = float(cw._static(m_prime, j, h))
    else:
        cost = float(cw._slice(cw.CriticalCurve(t, j, h), m_prime).cost[0])
    ms = np.linspace(-1.0, 1.0, 200_001)
    smin = float(np.min(cw._static(ms, j, h)))
    return cost - smin


def ldp_probe(spec: LatticeSpec, t: float, m_prime: float, n_list, replicas: int = 100_000, seed: int = 0):
    """``-(1/N) log P(total final magnetisation = S_n)`` per ``n`` and the variational value.

    ``S_n`` is the attainable spin sum nearest ``m' N``; volumes up to 12 spins
    are enumerated exactly, larger ones sampled.
    """
    if spec.beta_prime != 0.0:
        raise UnsupportedRegimeError("the probe needs beta_prime = 0")
    rows = []
    for n in n_list:
        lm = spec.lattice(n)
        N = lm.volume
        S = _nearest_sum(N, m_prime)
        if N <= MAX_ENUM_SPINS:
            if lm.beta == 0.0:
                prob = comb(N, (N + S) // 2, exact=True) / 2.0**N
            else:
                law = final_law(lm, t)
                prob = law[all_configs(N).sum(axis=1) == S].sum()
            rows.append(LDPRow(n, -math.log(prob) / N, True, S / N))
        else:
            ss = np.random.SeedSequence([seed, n])
            s_eq, s_dyn = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
            start = equilibrium_ensemble(lm, replicas, sweeps=200, seed=s_eq)
            end = glauber_ensemble(start, lm, t, seed=s_dyn)
            hits = int((end.sum(axis=1) == S).sum())
            p = hits / replicas
            val = -math.log(p) / N if hits else math.inf
            se = math.sqrt((1 - p) / max(hits, 1)) / N
            rows.append(LDPRow(n, val, False, S / N, se))
    return rows, variational_rate(spec, t, m_prime)


def settings_sidecar(**settings) -> str:
    return json.dumps(settings, indent=2, sort_keys=True, default=lambda o: asdict(o) if hasattr(o, "__dataclass_fields__") else str(o))
