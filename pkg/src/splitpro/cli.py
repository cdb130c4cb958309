"""Command-line front end.

    splitpro solve --config problem.cfg --out w_f.csv [--record-iterates]
    splitpro bench --topology chain --nu 5,10,15,20 --repeats 5 --out bench.csv
    splitpro mpc --config mpc.cfg --out closed_loop.csv

Configs are flat ``key = value`` files.  ``SPLITPRO_SEED`` in the
environment overrides the ``seed`` key.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .behavior import (
    HankelRep,
    StateSpaceRep,
    parse_matrix,
    hankel_basis,
    read_behavior_spec,
    read_key_value,
    ss_basis,
)
from .errors import ConfigParseError, SplitProError
from .lqt import LqtProblem, oracle_solve
from .mpc import Disturbance, MpcSettings, closed_loop_rows, mpc_run
from .projection import SubspaceProjector
from .network import (
    DEFAULT_RANGES,
    build_network,
    centralized_basis,
    constant_reference,
    network_projectors,
    network_weight,
    random_prefix,
    subsystem_bases,
)
from .splitting import SplitConfig, dy_solve, fb_solve, split_pro_solve
from .trajectory import Trajectory, write_csv, write_trajectory_csv

log = logging.getLogger("splitpro")

SOLVERS = ("oracle", "fb", "dy", "split_pro")
BENCH_HEADER = [
    "units",
    "centralized_lqr_mean",
    "centralized_lqr_var",
    "distributed_worst_mean",
    "distributed_worst_var",
]
MPC_HEADER = ["time", "u_ref", "u_method_1", "u_method_2", "y_ref", "y_method_1", "y_method_2"]


class Config:
    """Typed access to a key-value config file with line-aware errors."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            entries = read_key_value(self.path)
        except OSError as exc:
            raise ConfigParseError(f"cannot read config: {exc.strerror}", self.path) from None
        self._values = {}
        for lineno, key, value in entries:
            if key in self._values:
                raise ConfigParseError("duplicate key", self.path, lineno, key)
            self._values[key] = (lineno, value)
        self._used = set()

    def __contains__(self, key):
        return key in self._values

    def get(self, key, convert=str, default=None, required=False):
        if key not in self._values:
            if required:
                raise ConfigParseError("missing required key", self.path, field=key)
            return default
        self._used.add(key)
        lineno, value = self._values[key]
        try:
            return convert(value)
        except (ValueError, TypeError) as exc:
            raise ConfigParseError(f"bad value {value!r}: {exc}", self.path, lineno, key) from None

    def line(self, key):
        return self._values.get(key, (None, None))[0]

    def check_unused(self):
        for key, (lineno, _) in self._values.items():
            if key not in self._used:
                raise ConfigParseError("unknown key", self.path, lineno, key)


def _bool(value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _floats(value: str) -> np.ndarray:
    return np.array([float(v) for v in value.replace(",", " ").split()])


def _pair(value: str) -> tuple[float, float]:
    v = _floats(value)
    if v.size != 2:
        raise ValueError("expected two numbers")
    return float(v[0]), float(v[1])


def _seed(cfg: Config) -> int:
    seed = cfg.get("seed", int, 0)
    env = os.environ.get("SPLITPRO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigParseError(f"SPLITPRO_SEED={env!r} is not an integer") from None
    return seed


def solver_config(cfg: Config, **defaults) -> SplitConfig:
    fields = dict(alpha=None, max_outer=50_000, inner_J=5, tol=1e-9, inner="auto")
    fields.update(defaults)
    return SplitConfig(
        alpha=cfg.get("alpha", float, fields["alpha"]),
        max_outer=cfg.get("max_outer", int, fields["max_outer"]),
        inner_J=cfg.get("inner_J", int, fields["inner_J"]),
        tol=cfg.get("tol", float, fields["tol"]),
        inner=cfg.get("inner", str, fields["inner"]),
    )


def _network_from_config(cfg: Config, seed: int, T_f_default: int):
    ranges = {}
    for name in DEFAULT_RANGES:
        r = cfg.get(f"{name}_range", _pair)
        if r is not None:
            ranges[name] = r
    return build_network(
        cfg.get("topology", str, "chain"),
        cfg.get("nu", int, required=True),
        seed=seed,
        gray_box=cfg.get("gray_box", _bool, True),
        T_ini=cfg.get("t_ini", int),
        T_f=cfg.get("t_f", int, T_f_default),
        ranges=ranges or None,
        dt=cfg.get("dt", float, 0.1),
    )


def _weight(value: str, q: int) -> np.ndarray:
    M = parse_matrix(value)
    return M[0, 0] * np.eye(q) if M.size == 1 else M


def _tiled(values: np.ndarray, q: int, T: int, name: str) -> Trajectory:
    if values.size == q:
        values = np.tile(values, T)
    if values.size != q * T:
        raise ValueError(f"{name} needs {q} or {q * T} values, got {values.size}")
    return Trajectory(values, q)


def build_solve_problem(cfg: Config):
    """``(problem, sets)`` for a solve config; ``sets`` feeds the distributed solver."""
    seed = _seed(cfg)
    if "behavior" in cfg:
        spec_path = cfg.path.parent / cfg.get("behavior")
        rep = read_behavior_spec(spec_path)
        T_ini = cfg.get("t_ini", int, required=True)
        T_f = cfg.get("t_f", int, required=True)
        L = T_ini + T_f
        if isinstance(rep, StateSpaceRep):
            basis, q, lag = ss_basis(rep, L), rep.q, rep.lag
        else:
            m = cfg.get("m", int, required=True)
            n = cfg.get("n", int, required=True)
            basis, q, lag = hankel_basis(HankelRep(rep.data, L), m, n), rep.q, None
        w_ini = cfg.get("w_ini", lambda v: _tiled(_floats(v), q, T_ini, "w_ini"), required=True)
        w_ref = cfg.get("w_ref", lambda v: _tiled(_floats(v), q, T_f, "w_ref"), required=True)
        Phi = cfg.get("phi", lambda v: _weight(v, q), np.eye(q))
        problem = LqtProblem(w_ini, w_ref, Phi, basis, lag=lag)
        return problem, [SubspaceProjector(basis)]
    spec, reps = _network_from_config(cfg, seed, 5)
    layout = spec.layout
    bases = subsystem_bases(spec, reps)
    w_ini = random_prefix(spec, cfg.get("prefix_seed", int, seed))
    w_ref = constant_reference(layout, cfg.get("u_ref", float, 0.0), cfg.get("y_ref", float, 1.0), spec.T_f)
    Phi = network_weight(layout, cfg.get("phi_u", float, 1.0), cfg.get("phi_y", float, 1.0))
    solver = cfg.get("solver", str, "dy")
    basis = None if solver == "split_pro" else centralized_basis(spec, reps, bases=bases)
    problem = LqtProblem(w_ini, w_ref, Phi, basis)
    return problem, list(network_projectors(spec, reps, bases=bases))


def run_solve(config_path, out, record_iterates: bool = False, trace=None) -> int:
    cfg = Config(config_path)
    solver = cfg.get("solver", str, "dy")
    if solver not in SOLVERS:
        raise ConfigParseError(f"unknown solver {solver!r}, expected one of {SOLVERS}",
                               cfg.path, cfg.line("solver"), "solver")
    problem, sets = build_solve_problem(cfg)
    split_cfg = solver_config(cfg)
    split_cfg.record_iterates = record_iterates
    cfg.check_unused()
    out = Path(out)
    trace = Path(trace) if trace else out.with_suffix(".trace.csv")
    if solver == "oracle":
        w_f = oracle_solve(problem)
        write_trajectory_csv(out, w_f)
        write_csv(trace, ["k", "residual", "cost"], [])
        return 0
    if solver == "fb":
        report = fb_solve(problem, split_cfg)
    elif solver == "dy":
        report = dy_solve(problem, split_cfg)
    else:
        report = split_pro_solve(problem, split_cfg, sets)
    write_trajectory_csv(out, report.solution)
    report.write_trace(trace)
    if record_iterates:
        rows = [(k, *w) for k, w in enumerate(report.iterates)]
        header = ["k"] + [f"w{i}" for i in range(1, problem.dim + 1)]
        write_csv(out.with_suffix(".iterates.csv"), header, rows)
    if not report.converged:
        log.error("no convergence after %d iterations (last residual %.3e)",
                  report.iterations, report.residual_history[-1])
        return 1
    return 0


def bench_point(topology: str, nu: int, seed: int = 0, alpha: float = 0.1, inner_J: int = 5,
                tol: float = 1e-9, max_outer: int = 50_000):
    """Time one centralized and one distributed solve of the same network LQT.

    The centralized time covers the subsystem bases, the coupled basis and
    Davis-Yin with the exact projector.  The distributed time covers the
    subsystem bases and Split-as-a-Pro with ``inner_J`` sweeps.  Returns
    ``(t_central, t_distributed, cost_central, cost_distributed)``.
    """
    spec, reps = build_network(topology, nu, seed=seed)
    w_ini = random_prefix(spec, [seed, 1])
    rng = np.random.default_rng([seed, 2])
    w_ref = Trajectory(rng.uniform(-1.0, 1.0, spec.q * spec.T_f), spec.q)
    Phi = np.eye(spec.q)
    cfg = SplitConfig(alpha=alpha, inner_J=inner_J, tol=tol, max_outer=max_outer,
                      inner_gaps=False, validate_prefix=False)

    t0 = time.perf_counter()
    bases = subsystem_bases(spec, reps)
    basis = centralized_basis(spec, reps, bases=bases)
    central = dy_solve(LqtProblem(w_ini, w_ref, Phi, basis), cfg)
    t1 = time.perf_counter()
    bases = subsystem_bases(spec, reps)
    sets = list(network_projectors(spec, reps, bases=bases))
    dist = split_pro_solve(LqtProblem(w_ini, w_ref, Phi), cfg, sets)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1, central.cost, dist.cost


def _var(x) -> float:
    return float(np.var(x, ddof=1)) if len(x) > 1 else 0.0


def run_bench(topology: str, nus, repeats: int = 5, out=None, seed: int = 0, **solver):
    """Benchmark rows, one per network size; a warm-up run per size is discarded."""
    if not nus:
        raise ValueError("need at least one network size")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    rows = []
    for nu in nus:
        try:
            bench_point(topology, nu, seed, **solver)
            samples = [bench_point(topology, nu, seed, **solver) for _ in range(repeats)]
        except SplitProError as exc:
            raise type(exc)(f"nu={nu}: {exc}") from exc
        tc = [s[0] for s in samples]
        td = [s[1] for s in samples]
        log.info("nu=%d centralized %.3fs distributed %.3fs", nu, np.mean(tc), np.mean(td))
        rows.append((nu, float(np.mean(tc)), _var(tc), float(np.mean(td)), _var(td)))
    if out is not None:
        write_csv(out, BENCH_HEADER, rows)
    return rows


def mpc_settings(cfg: Config) -> MpcSettings:
    s = MpcSettings()
    s.T_sim = cfg.get("t_sim", int, s.T_sim)
    s.u_ref = cfg.get("u_ref", float, s.u_ref)
    s.y_ref = cfg.get("y_ref", float, s.y_ref)
    s.phi_u = cfg.get("phi_u", float, s.phi_u)
    s.phi_y = cfg.get("phi_y", float, s.phi_y)
    if cfg.get("bounded", _bool, True):
        s.bounds = (cfg.get("u_min", float, -0.5), cfg.get("u_max", float, 0.5))
    else:
        s.bounds = None
    if cfg.get("disturbance", _bool, True):
        d = Disturbance()
        s.disturbance = Disturbance(
            time=cfg.get("disturbance_time", int, d.time),
            subsystem=cfg.get("disturbance_subsystem", int, d.subsystem),
            state=cfg.get("disturbance_state", int, d.state),
            magnitude=cfg.get("disturbance_magnitude", float, d.magnitude),
        )
    else:
        s.disturbance = None
    s.behavior_sets = cfg.get("behavior_sets", str, s.behavior_sets)
    s.solver = solver_config(cfg, max_outer=s.solver.max_outer, tol=s.solver.tol)
    s.warm_start = cfg.get("warm_start", _bool, True)
    return s


def run_mpc(config_path, out):
    """Closed loop with the constrained oracle (method 1) and Split-as-a-Pro (method 2)."""
    cfg = Config(config_path)
    spec, reps = _network_from_config(cfg, _seed(cfg), 20)
    settings = mpc_settings(cfg)
    subsystem = cfg.get("export_subsystem", int, 1)
    cfg.check_unused()
    if not 1 <= subsystem <= spec.nu:
        raise ConfigParseError(f"export_subsystem must be in 1..{spec.nu}", cfg.path,
                               cfg.line("export_subsystem"), "export_subsystem")
    oracle = mpc_run(spec, reps, "oracle", settings)
    split = mpc_run(spec, reps, "split_pro", settings)
    log.info("closed-loop cost: oracle %.6f, split_pro %.6f", oracle.total_cost, split.total_cost)
    write_csv(out, MPC_HEADER, closed_loop_rows(spec.layout, oracle, split, subsystem))
    return oracle, split


def _nu_list(text: str):
    try:
        nus = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not nus:
        raise argparse.ArgumentTypeError("empty list")
    return nus


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splitpro", description="Behavioral LQT by operator splitting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a single LQT problem")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="CSV for the optimal suffix")
    s.add_argument("--trace", help="iteration trace CSV (default: <out>.trace.csv)")
    s.add_argument("--record-iterates", action="store_true")

    b = sub.add_parser("bench", help="centralized vs distributed timing")
    b.add_argument("--topology", choices=("chain", "ring", "lattice"), default="chain")
    b.add_argument("--nu", type=_nu_list, required=True, help="e.g. 5,10,15")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--inner-J", type=int, default=5)
    b.add_argument("--out", required=True)

    m = sub.add_parser("mpc", help="closed-loop box-constrained MPC experiment")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "solve":
            return run_solve(args.config, args.out, args.record_iterates, args.trace)
        if args.command == "bench":
            seed = args.seed
            if seed is None:
                seed = int(os.environ.get("SPLITPRO_SEED", 0))
            run_bench(args.topology, args.nu, args.repeats, args.out, seed,
                      alpha=args.alpha, inner_J=args.inner_J)
            return 0
        run_mpc(args.config, args.out)
        return 0
    except ConfigParseError as exc:
        print(f"splitpro: config error: {exc}", file=sys.stderr)
        return 2
    except (SplitProError, ValueError) as exc:
        print(f"splitpro: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
