"""Run configuration: JSON file <-> validated dataclasses.

A config file is a JSON object with the sections ``model``, ``grid``,
``solver``, ``simulator`` and ``output``.  Every section is optional but
the keys inside a section must be known, and the ``model`` section, when
present, must give ``beta``.  ``RunConfig.to_dict`` writes the effective
configuration; feeding it back through ``RunConfig.from_dict`` gives an
equal object.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .finite import KERNELS, LatticeSpec
from .torus import ExternalField, InteractionKernel, KacModel, TorusGrid


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


@dataclass
class ModelConfig:
    beta: float = 1.0
    beta_prime: float = 0.0
    kernel: object = "cosine-bump"     # name or list of samples (row-major, grid shape)
    kernel_scale: float = 1.0
    field: object = 0.0                # constant or list of samples

    REQUIRED = ("beta",)


@dataclass
class GridConfig:
    d: int = 1
    M: int = 32


@dataclass
class SolverConfig:
    damping: float = 1.0
    max_iter: int = 100_000
    tol: float = 1e-12
    random_seeds: int = 8
    gap_tol: float = 1e-8


@dataclass
class SimulatorConfig:
    n: int = 8
    replicas: int = 10_000
    seed: int = 0
    rate_scale: float = 2.0
    sweeps: int = 200
    blocks: int = 1


@dataclass
class OutputConfig:
    directory: str = "out"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    threads: int = 1

    SECTIONS = {"model": ModelConfig, "grid": GridConfig, "solver": SolverConfig,
                "simulator": SimulatorConfig, "output": OutputConfig}

    # -- (de)serialisation -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(cls.SECTIONS) - {"threads"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, typ in cls.SECTIONS.items():
            if name not in data:
                continue
            sec = data[name]
            if not isinstance(sec, dict):
                raise ConfigError(f"section '{name}' must be an object")
            known = {f.name for f in fields(typ)}
            bad = set(sec) - known
            if bad:
                raise ConfigError(f"unknown keys in '{name}': {sorted(bad)}")
            missing = [k for k in getattr(typ, "REQUIRED", ()) if k not in sec]
            if missing:
                raise ConfigError(f"missing keys in '{name}': {missing}")
            kw[name] = typ(**sec)
        if "threads" in data:
            kw["threads"] = data["threads"]
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in self.SECTIONS}
        out["threads"] = self.threads
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        m, g, s, sim = self.model, self.grid, self.solver, self.simulator

        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for name in ("beta", "beta_prime", "kernel_scale"):
            v = getattr(m, name)
            need(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) and v >= 0,
                 f"model.{name} must be a finite nonnegative number")
        need(isinstance(g.d, int) and g.d >= 1, "grid.d must be a positive integer")
        need(isinstance(g.M, int) and g.M >= 1, "grid.M must be a positive integer")
        if isinstance(m.kernel, str):
            need(m.kernel in KERNELS, f"model.kernel must be one of {sorted(KERNELS)} or a list of samples")
        else:
            need(np.size(m.kernel) == g.M ** g.d, "model.kernel samples do not match the grid")
        if not np.isscalar(m.field):
            need(np.size(m.field) == g.M ** g.d, "model.field samples do not match the grid")
        need(0 < s.damping <= 1, "solver.damping must lie in (0, 1]")
        need(isinstance(s.max_iter, int) and s.max_iter >= 1, "solver.max_iter must be a positive integer")
        need(s.tol > 0, "solver.tol must be positive")
        need(isinstance(s.random_seeds, int) and s.random_seeds >= 0, "solver.random_seeds must be >= 0")
        need(s.gap_tol >= 0, "solver.gap_tol must be nonnegative")
        need(isinstance(sim.n, int) and sim.n >= 1, "simulator.n must be a positive integer")
        need(isinstance(sim.replicas, int) and sim.replicas >= 1, "simulator.replicas must be positive")
        need(isinstance(sim.seed, int) and sim.seed >= 0, "simulator.seed must be a nonnegative integer")
        need(sim.rate_scale > 0, "simulator.rate_scale must be positive")
        need(isinstance(sim.sweeps, int) and sim.sweeps >= 0, "simulator.sweeps must be >= 0")
        need(isinstance(sim.blocks, int) and sim.blocks >= 1, "simulator.blocks must be positive")
        need(isinstance(self.threads, int) and self.threads >= 1, "threads must be a positive integer")

    # -- builders --------------------------------------------------------------

    def torus(self) -> TorusGrid:
        return TorusGrid(self.grid.d, self.grid.M)

    def kac_model(self) -> KacModel:
        grid = self.torus()
        m = self.model
        if isinstance(m.kernel, str):
            J = InteractionKernel(grid, m.kernel_scale * grid.sample(KERNELS[m.kernel]))
        else:
            J = InteractionKernel(grid, m.kernel_scale * np.asarray(m.kernel, dtype=float).reshape(grid.shape))
        if np.isscalar(m.field):
            h = ExternalField.constant(grid, m.field)
        else:
            h = ExternalField(grid, np.asarray(m.field, dtype=float).reshape(grid.shape))
        return KacModel(J, h, m.beta, m.beta_prime)

    def lattice_spec(self) -> LatticeSpec:
        m = self.model
        if not isinstance(m.kernel, str) or not np.isscalar(m.field):
            raise ConfigError("the finite-volume simulator needs a named kernel and a constant field")
        return LatticeSpec(self.grid.d, m.beta, m.beta_prime, m.kernel, m.kernel_scale, float(m.field))
