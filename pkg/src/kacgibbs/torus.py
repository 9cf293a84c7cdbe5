"""Torus grids, profiles, Kac kernels and the static rate function.

Everything here is a Riemann-sum discretisation of functions on the unit torus
``[0, 1)^d`` sampled at the nodes ``i / M``.  Profiles, kernels and fields are
immutable wrappers around numpy arrays of shape ``(M,) * d``; the numerical
work is done by module-level functions acting on plain arrays so that solvers
can call them in tight loops without re-validating.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .errors import GridMismatchError

#: above this many nodes convolution switches from a direct sum to FFT
DIRECT_SUM_MAX_NODES = 4096
#: below this many nodes the direct sum uses a cached dense circulant matrix
DENSE_MATRIX_MAX_NODES = 1024
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    d: int
    M: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"need at least 2 points per axis, got M={self.M}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def size(self) -> int:
        return self.M**self.d

    @property
    def spacing(self) -> float:
        return 1.0 / self.M

    def coordinates(self) -> list[np.ndarray]:
        """Node coordinates ``u_i = i / M`` as a list of ``d`` meshgrid arrays."""
        axis = np.arange(self.M) / self.M
        return np.meshgrid(*([axis] * self.d), indexing="ij")

    def sample(self, func: Callable[..., np.ndarray]) -> np.ndarray:
        """Evaluate ``func(u_1, ..., u_d)`` at every node."""
        out = np.asarray(func(*self.coordinates()), dtype=float)
        return np.broadcast_to(out, self.shape).copy()

    def node_index(self, u) -> tuple[int, ...]:
        """Index of the node ``floor(M u)`` for a torus point ``u``."""
        u = np.atleast_1d(np.asarray(u, dtype=float)) % 1.0
        if u.shape != (self.d,):
            raise ValueError(f"point must have {self.d} coordinates")
        return tuple(int(np.floor(self.M * x)) % self.M for x in u)


def _as_grid_array(grid: TorusGrid, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size != grid.size:
        raise GridMismatchError(f"expected {grid.size} samples for {grid}, got {arr.size}")
    arr = arr.reshape(grid.shape).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid samples must be finite")
    arr.setflags(write=False)
    return arr


def _check_same_grid(*objs):
    grids = {o.grid for o in objs}
    if len(grids) != 1:
        raise GridMismatchError(f"objects live on different grids: {sorted(map(str, grids))}")


@dataclass(frozen=True)
class Profile:
    """Magnetisation density with values in ``[-1, 1]`` at each node."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_grid_array(self.grid, self.values)
        if np.any(np.abs(arr) > 1.0):
            raise ValueError("profile values must lie in [-1, 1]")
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "Profile":
        return cls(grid, np.full(grid.shape, float(value)))

    def mean(self) -> float:
        return float(self.values.mean())

    def sup_distance(self, other: "Profile") -> float:
        _check_same_grid(self, other)
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class InteractionKernel:
    """Samples of a nonnegative, reflection-symmetric pair potential ``J``."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(_as_grid_array(self.grid, self.values))
        if np.any(arr < 0):
            raise ValueError("interaction kernel must be nonnegative")
        if not np.any(arr > 0):
            raise ValueError("interaction kernel must not vanish identically")
        refl = reflect(arr)
        if np.max(np.abs(arr - refl)) > SYMMETRY_TOL * max(1.0, np.max(arr)):
            raise ValueError("interaction kernel must be symmetric under u -> -u")
        arr = 0.5 * (arr + refl)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @cached_property
    def _dense(self) -> np.ndarray:
        n = self.grid.size
        idx = np.indices(self.grid.shape).reshape(self.grid.d, n)
        lag = (idx[:, :, None] - idx[:, None, :]) % self.grid.M
        return self.values[tuple(lag)] / n

    @cached_property
    def _spectrum(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``(J * a)(u_i) = M^-d sum_j J(u_i - u_j) a(u_j)`` on a grid-shaped array."""
        a = np.asarray(values, dtype=float).reshape(self.grid.shape)
        n = self.grid.size
        if n <= DENSE_MATRIX_MAX_NODES:
            return (self._dense @ a.reshape(n)).reshape(self.grid.shape)
        if n <= DIRECT_SUM_MAX_NODES:
            out = np.zeros(self.grid.shape)
            axes = tuple(range(self.grid.d))
            for lag in np.ndindex(*self.grid.shape):
                w = self.values[lag]
                if w != 0.0:
                    out += w * np.roll(a, lag, axis=axes)
            return out / n
        return np.real(np.fft.ifftn(self._spectrum * np.fft.fftn(a))) / n

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class ExternalField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid_array(self.grid, self.values))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ExternalField":
        return cls(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True)
class KacModel:
    J: InteractionKernel
    h: ExternalField
    beta: float
    beta_prime: float = 0.0

    def __post_init__(self):
        _check_same_grid(self.J, self.h)
        for name in ("beta", "beta_prime"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be a finite nonnegative number")
            object.__setattr__(self, name, val)

    @property
    def grid(self) -> TorusGrid:
        return self.J.grid

    def local_field(self, alpha: np.ndarray) -> np.ndarray:
        """``(J * alpha + h)`` on raw arrays (no beta factor)."""
        return self.J.apply(alpha) + self.h.values


def reflect(values: np.ndarray) -> np.ndarray:
    """Samples of ``u -> f(-u)`` on the same grid."""
    axes = tuple(range(values.ndim))
    return np.roll(np.flip(values, axis=axes), 1, axis=axes)


# ---------------------------------------------------------------------------
# built-in kernels

def constant_kernel(grid: TorusGrid, value: float = 1.0) -> InteractionKernel:
    return InteractionKernel(grid, np.full(grid.shape, float(value)))


def cosine_bump_kernel(grid: TorusGrid) -> InteractionKernel:
    """``J(u) = prod_k (1 + cos 2 pi u_k)``: nonnegative, symmetric, grid mean exactly 1."""
    vals = grid.sample(lambda *u: np.prod([1.0 + np.cos(2 * np.pi * x) for x in u], axis=0))
    return InteractionKernel(grid, vals)


# ---------------------------------------------------------------------------
# operations on typed objects

def convolve(J: InteractionKernel, alpha: Profile) -> np.ndarray:
    """Riemann-sum convolution ``J * alpha``.

    The result is returned as a plain array: it need not lie in ``[-1, 1]``.
    """
    _check_same_grid(J, alpha)
    return J.apply(alpha.values)


def kernel_mean(J: InteractionKernel) -> float:
    return J.mean()


def entropy_phi(m):
    """Relative entropy ``Phi(m)`` of a +-1 spin with mean ``m`` w.r.t. a fair coin.

    Continuous at the endpoints, ``Phi(+-1) = log 2``.
    """
    m = np.asarray(m, dtype=float)
    if np.any(np.abs(m) > 1.0):
        raise ValueError("entropy_phi needs |m| <= 1")
    out = 0.5 * (xlogy(1.0 + m, 1.0 + m) + xlogy(1.0 - m, 1.0 - m))
    return float(out) if out.ndim == 0 else out


def kac_energy_values(alpha: np.ndarray, model: KacModel) -> float:
    F = 0.5 * model.J.apply(alpha) + model.h.values
    return float(np.mean(F * alpha))


def kac_energy(alpha: Profile, model: KacModel) -> float:
    """``H(alpha) = <(1/2) J * alpha + h, alpha>``."""
    _check_same_grid(alpha, model.J)
    return kac_energy_values(alpha.values, model)


def static_rate_values(alpha: np.ndarray, model: KacModel) -> float:
    return -model.beta * kac_energy_values(alpha, model) + float(np.mean(entropy_phi(alpha)))


def static_rate(alpha: Profile, model: KacModel) -> float:
    """Unnormalised static rate ``I_S(alpha) = -beta H(alpha) + <Phi(alpha)>``."""
    _check_same_grid(alpha, model.J)
    return static_rate_values(alpha.values, model)


def quadratic_form_values(alpha: np.ndarray, J: InteractionKernel, beta: float) -> float:
    n = J.grid.size
    a = np.asarray(alpha, dtype=float).reshape(J.grid.shape)
    if n <= DENSE_MATRIX_MAX_NODES:
        # literal double sum, kept independent of the convolution route
        flat = a.reshape(n)
        W = J._dense * n
        diff2 = (flat[:, None] - flat[None, :]) ** 2
        return float(0.25 * beta * np.sum(W * diff2) / n**2)
    return float(0.5 * beta * (J.mean() * np.mean(a * a) - np.mean(a * J.apply(a))))


def interaction_quadratic_form(alpha: Profile, model: KacModel) -> float:
    """``(beta/4) int int J(u - v) [alpha(u) - alpha(v)]^2 du dv``."""
    _check_same_grid(alpha, model.J)
    return quadratic_form_values(alpha.values, model.J, model.beta)


# ---------------------------------------------------------------------------
# serialisation: CSV (one value per node, row-major) and JSON {d, M, values}

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def grid_values_to_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for v in np.asarray(values).reshape(-1):
        writer.writerow([_fmt(v)])
    return buf.getvalue()


def grid_values_from_csv(text: str, grid: TorusGrid) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and r[0].strip()]
    try:
        vals = [float(r[0]) for r in rows]
    except ValueError as exc:
        raise ValueError(f"malformed CSV profile: {exc}") from None
    return _as_grid_array(grid, vals).copy()


def grid_values_to_json(grid: TorusGrid, values: np.ndarray) -> str:
    # format via repr-of-float strings so 17 significant digits survive json
    body = ", ".join(_fmt(v) for v in np.asarray(values).reshape(-1))
    return f'{{"d": {grid.d}, "M": {grid.M}, "values": [{body}]}}'


def grid_values_from_json(text: str) -> tuple[TorusGrid, np.ndarray]:
    try:
        obj = json.loads(text)
        grid = TorusGrid(int(obj["d"]), int(obj["M"]))
        vals = obj["values"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed JSON grid object: {exc}") from None
    return grid, _as_grid_array(grid, vals).copy()


def profile_to_json(p: Profile) -> str:
    return grid_values_to_json(p.grid, p.values)


def profile_from_json(text: str) -> Profile:
    grid, vals = grid_values_from_json(text)
    return Profile(grid, vals)


def profile_to_csv(p: Profile) -> str:
    return grid_values_to_csv(p.values)


def profile_from_csv(text: str, grid: TorusGrid) -> Profile:
    return Profile(grid, grid_values_from_csv(text, grid))
