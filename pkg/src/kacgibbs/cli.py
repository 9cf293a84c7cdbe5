"""``kacgibbs`` command-line entry point.

Exit codes: 0 ok, 1 failure (solver/verification), 2 invalid input.
Every output file ``X`` is accompanied by ``X.meta.json`` holding the
effective configuration, seed and command arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from . import curie_weiss as cw
from . import finite as fs
from . import kernels as kn
from . import variational as kv
from .config import ConfigError, RunConfig
from .errors import (AcceptanceStarvation, BifurcationError, ConvergenceError, EnumerationTooLarge,
                     GridMismatchError, InconclusiveError, SelectionAnomaly, UnsupportedRegimeError)
from .torus import grid_values_from_csv, grid_values_from_json, static_rate_values

log = logging.getLogger("kacgibbs")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class Run:
    """Effective config plus output helpers for one invocation."""

    def __init__(self, cfg: RunConfig, args: argparse.Namespace):
        self.cfg = cfg
        self.args = args
        self.out = Path(cfg.output.directory)
        self.out.mkdir(parents=True, exist_ok=True)

    @property
    def seed(self) -> int:
        return self.cfg.simulator.seed

    def meta(self) -> dict:
        arglist = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        return {"command": self.args.command, "arguments": arglist, "seed": self.seed,
                "config": self.cfg.to_dict()}

    def write(self, name: str, text: str, extra: dict | None = None) -> Path:
        path = self.out / name
        path.write_text(text)
        meta = self.meta()
        if extra:
            meta.update(extra)
        (self.out / (name + ".meta.json")).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
        log.info("wrote %s", path)
        return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _read_profile(path, run: Run) -> np.ndarray:
    grid = run.cfg.torus()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    if str(path).endswith(".json"):
        g, vals = grid_values_from_json(text)
        if g != grid:
            raise GridMismatchError(f"profile grid (d={g.d}, M={g.M}) differs from the config grid")
    else:
        vals = grid_values_from_csv(text, grid)
    if not np.all(np.isfinite(vals)) or np.any(np.abs(vals) > 1):
        raise ConfigError(f"profile {path} must take finite values in [-1, 1]")
    return vals


def _solver_options(cfg: RunConfig) -> dict:
    s = cfg.solver
    return {"damping": s.damping, "max_iter": s.max_iter, "tol": s.tol}


def _seeds(ap, t, model, cfg: RunConfig):
    return kv.default_seeds(ap, t, model, n_random=cfg.solver.random_seeds, rng_seed=cfg.simulator.seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_cw_phase_diagram(run: Run) -> int:
    a = run.args
    if not a.j_cw > 0 or not a.t_max > 0 or not 0 < a.dt <= a.t_max or not 0 < a.dm < 1:
        raise ConfigError("need j_cw > 0, t_max > 0, 0 < dt <= t_max and 0 < dm < 1")
    model = cw.CWModel(a.j_cw, a.h_cw)
    times = np.arange(1, int(round(a.t_max / a.dt)) + 1) * a.dt
    rows = cw.cw_phase_diagram(model, times, step=a.dm, gap_tol=run.cfg.solver.gap_tol)
    run.write("phase_diagram.csv", _csv(["t", "m_prime", "multiplicity", "global_min_1", "global_min_2", "cost"], rows))
    feats = cw.detect_transition_times(model, a.t_max, dt=a.dt)
    run.write("features.json", json.dumps([f.to_dict() for f in feats], indent=2) + "\n")
    if not feats:
        print("no transition in window")
    for f in feats:
        print(f"{f.label} at t = {f.t:.6f}: {f.bad_set_before} -> {f.bad_set_after}")
    return EXIT_OK


def cmd_classify(run: Run) -> int:
    model = run.cfg.kac_model()
    ap = _read_profile(run.args.alpha_prime, run)
    res = kn.classify_profile(ap, run.args.t, model, seeds=_seeds(ap, run.args.t, model, run.cfg),
                              workers=run.cfg.threads, alpha_prime_ref=str(run.args.alpha_prime),
                              solver_options=_solver_options(run.cfg))
    run.write("classification.json", res.to_json() + "\n")
    print(f"verdict: {res.verdict.value} (multiplicity {res.multiplicity})")
    return EXIT_OK


def cmd_trajectory(run: Run) -> int:
    a = run.args
    model = run.cfg.kac_model()
    alpha = _read_profile(a.alpha, run)
    ap = _read_profile(a.alpha_prime, run)
    if a.t < 0:
        raise ConfigError("t must be nonnegative")
    if a.steps < 1:
        raise ConfigError("steps must be positive")
    static = static_rate_values(alpha, model)
    if a.t == 0:
        if not np.array_equal(alpha, ap):
            raise ConfigError("t = 0 needs alpha == alpha_prime")
        text = "time," + ",".join(f"node{i}" for i in range(alpha.size)) + "\n"
        text += ",".join(format(float(x), ".17g") for x in (0.0, *alpha.ravel())) + "\n"
        action = 0.0
    else:
        traj = kv.optimal_trajectory(alpha, ap, a.t, model.grid, steps=a.steps)
        text = traj.to_csv()
        if model.beta_prime == 0:
            action = float(np.mean(cw.cw_action_closed(alpha, ap, a.t)))
        else:
            action = kv.dynamic_rate(traj, model)
    run.write("trajectory.csv", text)
    run.write("trajectory_cost.csv", _csv(["static", "action", "total"], [(static, action, static + action)]))
    print(f"static {static:.12g}  action {action:.12g}  total {static + action:.12g}")
    return EXIT_OK


def cmd_minimize(run: Run) -> int:
    model = run.cfg.kac_model()
    ap = _read_profile(run.args.alpha_prime, run)
    rep = kv.kac_global_minimizers(ap, run.args.t, model, seeds=_seeds(ap, run.args.t, model, run.cfg),
                                   gap_tol=run.cfg.solver.gap_tol, workers=run.cfg.threads,
                                   solver_options=_solver_options(run.cfg))
    run.write("minimizers.json", rep.to_json() + "\n")
    print(f"{len(rep.critical_profiles)} critical profiles, {len(rep.global_set)} global, gap {rep.gap:.3g}")
    return EXIT_OK


def cmd_kernel(run: Run) -> int:
    a = run.args
    model = run.cfg.kac_model()
    ap = _read_profile(a.alpha_prime, run)
    u = tuple(int(x) for x in a.u.split(","))
    if len(u) != model.grid.d or any(not 0 <= x < model.grid.M for x in u):
        raise ConfigError(f"node index {a.u} is not on the grid")
    rep = kv.kac_global_minimizers(ap, a.t, model, seeds=_seeds(ap, a.t, model, run.cfg),
                                   gap_tol=run.cfg.solver.gap_tol, workers=run.cfg.threads,
                                   solver_options=_solver_options(run.cfg))
    rate = run.cfg.simulator.rate_scale
    try:
        val = kn.specification_kernel(ap, a.t, rep, u, model, rate_scale=rate)
        out = {"u": list(u), "t": a.t, "unique": True, "p_plus": val.p_plus, "p_minus": val.p_minus}
    except BifurcationError as exc:
        out = {"u": list(u), "t": a.t, "unique": False,
               "branches": [{"p_plus": b.p_plus, "p_minus": b.p_minus} for b in exc.branches]}
    run.write("kernel.json", json.dumps(out, indent=2) + "\n")
    print(json.dumps(out))
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    a = run.args
    sim = run.cfg.simulator
    lm = run.cfg.lattice_spec().lattice(sim.n)
    if a.t < 0 or a.samples < 2:
        raise ConfigError("need t >= 0 and at least two samples")
    ss = np.random.SeedSequence(sim.seed)
    s_eq, s_dyn = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    start = fs.equilibrium_sample(lm, sweeps=sim.sweeps, seed=s_eq)
    res = fs.glauber_simulate(start, lm, a.t, seed=s_dyn, rate_scale=sim.rate_scale,
                              sample_times=np.linspace(0.0, a.t, a.samples), blocks=sim.blocks)
    run.write("simulation.csv", res.to_csv(), {"run": res.settings})
    print(f"{res.event_times.size} flips, final magnetisation {res.final.flat.mean():.6g}")
    return EXIT_OK


def cmd_oracle(run: Run) -> int:
    a = run.args
    sim = run.cfg.simulator
    spec = run.cfg.lattice_spec()
    lm = spec.lattice(sim.n)
    N = lm.volume
    if N > fs.MAX_ENUM_SPINS:
        raise EnumerationTooLarge(f"n^d = {N} exceeds {fs.MAX_ENUM_SPINS}")
    if not -1 <= a.m_prime <= 1:
        raise ConfigError("m_prime must lie in [-1, 1]")
    S = fs._nearest_sum(N - 1, a.m_prime)
    exact = fs.exact_conditional_gamma(sim.n, lm, a.t, (S,), u=a.u)
    m_real = S / (N - 1)
    row = {"n": sim.n, "t": a.t, "class_sum": S, "class_magnetization": m_real, "exact_p_plus": exact.p_plus}
    if spec.beta == 0:
        row["predicted_p_plus"] = 0.5
    elif spec.kernel == "constant" and spec.beta_prime == 0:
        try:
            row["predicted_p_plus"] = fs.predicted_conditional_gamma(spec, a.t, m_real)
        except ValueError as exc:
            log.warning("no prediction: %s", exc)
    if a.mc:
        est = fs.mc_conditional_gamma(sim.n, lm, a.t, a.m_prime, a.tolerance_ball, sim.replicas, seed=sim.seed,
                                      u=a.u, sweeps=sim.sweeps, rate_scale=sim.rate_scale)
        row.update(mc_p_plus=est.kernel.p_plus, mc_stderr=est.stderr, mc_accepted=est.accepted)
    keys = list(row)
    run.write("oracle.csv", _csv(keys, [[row[k] for k in keys]]))
    print(json.dumps(row))
    return EXIT_OK


def cmd_ldp_probe(run: Run) -> int:
    a = run.args
    sim = run.cfg.simulator
    try:
        n_list = [int(x) for x in a.n_list.split(",")]
    except ValueError:
        raise ConfigError(f"malformed n list {a.n_list!r}") from None
    rows, var = fs.ldp_probe(run.cfg.lattice_spec(), a.t, a.m_prime, n_list, replicas=sim.replicas, seed=sim.seed)
    text = _csv(["n", "m_prime", "value", "exact", "stderr"],
                [(r.n, r.m_prime, r.value, int(r.exact), r.stderr) for r in rows])
    run.write("ldp_probe.csv", text, {"variational_value": var})
    print(text, end="")
    print(f"variational value {var:.12g}")
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    a = run.args
    only = None
    if a.only:
        try:
            only = {int(x) for x in a.only.split(",")}
        except ValueError:
            raise ConfigError(f"malformed criterion list {a.only!r}") from None
        if not only <= set(range(1, len(acceptance.CRITERIA) + 1)):
            raise ConfigError(f"criteria are numbered 1..{len(acceptance.CRITERIA)}")
    results = acceptance.run_all(only, tol_scale=a.tol_scale)
    for r in results:
        print(r.line())
    report = {"passed": all(r.passed for r in results), "tol_scale": a.tol_scale,
              "criteria": [r.to_dict() for r in results]}
    run.write("verify.json", json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides simulator.seed)")
    common.add_argument("--threads", type=int, help="worker threads for multi-seed searches")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kacgibbs", description="Gibbsianness of time-evolved Kac spin models.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cw-phase-diagram", parents=[common], help="bad-set scan of the Curie-Weiss cost")
    s.add_argument("--j-cw", type=float, required=True)
    s.add_argument("--h-cw", type=float, default=0.0)
    s.add_argument("--t-max", type=float, default=5.0)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--dm", type=float, default=1e-3)
    s.set_defaults(func=cmd_cw_phase_diagram)

    for name, func, hlp in (("classify", cmd_classify, "good/bad verdict for a final profile"),
                            ("minimize", cmd_minimize, "critical profiles and global minimisers")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--alpha-prime", required=True, help="final profile (.json or one-column .csv)")
        s.add_argument("--t", type=float, required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("trajectory", parents=[common], help="optimal node-wise path and its cost")
    s.add_argument("--alpha", required=True)
    s.add_argument("--alpha-prime", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--steps", type=int, default=1000)
    s.set_defaults(func=cmd_trajectory)

    s = sub.add_parser("kernel", parents=[common], help="single-site kernel at a node")
    s.add_argument("--alpha-prime", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--u", default="0", help="node index, comma separated for d > 1")
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("simulate", parents=[common], help="Glauber run from an equilibrium sample")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--samples", type=int, default=101)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("oracle", parents=[common], help="exact finite-volume conditional kernel")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--m-prime", type=float, default=0.0)
    s.add_argument("--u", type=float, default=0.0, help="position in [0, 1) of the perforated site")
    s.add_argument("--mc", action="store_true", help="add a Monte Carlo estimate")
    s.add_argument("--tolerance-ball", type=float, default=0.1)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("ldp-probe", parents=[common], help="finite-n large-deviation probe")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--m-prime", type=float, required=True)
    s.add_argument("--n-list", default="6,8,10,12")
    s.set_defaults(func=cmd_ldp_probe)

    s = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    s.add_argument("--only", help="comma separated criterion numbers")
    s.add_argument("--tol-scale", type=float, default=1.0, help="multiply every threshold")
    s.set_defaults(func=cmd_verify)
    return p


def effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    data = cfg.to_dict()
    if args.out is not None:
        data["output"]["directory"] = args.out
    if args.seed is not None:
        data["simulator"]["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(effective_config(args), args)
        run.write("effective_config.json", run.cfg.to_json() + "\n")
        return args.func(run)
    except (ConfigError, GridMismatchError, EnumerationTooLarge, UnsupportedRegimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, InconclusiveError, SelectionAnomaly, AcceptanceStarvation) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
