"""Receding-horizon data-driven control of a coupled network.

At every step the last ``T_ini`` measured samples form ``w_ini``, an LQT
problem over ``T_ini + T_f`` samples is solved, and the first input of the
optimal suffix is applied to the ground-truth plant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .behavior import orthonormal_range
from .errors import SolverFailed, SplitProError
from .lqt import LqtProblem, constrained_oracle_solve, cost_eval, oracle_solve
from .network import (
    NetworkSpec,
    centralized_basis,
    constant_reference,
    interconnected_ss,
    network_projectors,
    network_weight,
    subsystem_bases,
)
from .projection import AffineBehaviorProjector, BoxProjector, SubspaceProjector
from .splitting import SplitConfig, dy_solve, fb_solve, split_pro_solve
from .trajectory import Trajectory

CONTROLLERS = ("oracle", "fb", "dy", "split_pro")


@dataclass
class Disturbance:
    """Additive offset on one plant state coordinate (1-based indices)."""

    time: int = 50
    subsystem: int = 1
    state: int = 1
    magnitude: float = 0.5

    def offset(self, n_states: int, order: int = 2) -> np.ndarray:
        d = np.zeros(n_states)
        d[order * (self.subsystem - 1) + self.state - 1] = self.magnitude
        return d


@dataclass
class MpcSettings:
    T_sim: int = 100
    u_ref: float = 0.25
    y_ref: float = 0.25
    phi_u: float = 0.1
    phi_y: float = 10.0
    bounds: tuple | None = (-0.5, 0.5)
    disturbance: Disturbance | None = field(default_factory=Disturbance)
    # "centralized" projects onto the coupled behavior directly; "distributed"
    # alternates between the subsystem product and the coupling subspace
    behavior_sets: str = "centralized"
    solver: SplitConfig = field(default_factory=lambda: SplitConfig(max_outer=2000, tol=1e-8))
    warm_start: bool = True


@dataclass
class MpcResult:
    w: Trajectory  # closed-loop samples, one per step
    states: np.ndarray  # (T_sim + 1, n) plant states before each step
    stage_costs: np.ndarray
    iterations: list
    max_violation: float  # largest bound excess of the planned input before saturation
    w_ref: np.ndarray  # one reference sample

    @property
    def total_cost(self) -> float:
        return float(self.stage_costs.sum())


def mpc_run(spec: NetworkSpec, reps, controller: str, settings: MpcSettings | None = None) -> MpcResult:
    """Close the loop around the plant of ``spec`` with the chosen controller.

    The plant starts at rest with a zero measured history.  The measured
    prefix is projected onto the restricted behavior before each solve.  Planned inputs
    are saturated to the bounds before they are applied; the largest
    pre-saturation excess is reported as ``max_violation``.
    """
    if controller not in CONTROLLERS:
        raise ValueError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    s = settings or MpcSettings()
    layout, T_ini, T_f = spec.layout, spec.T_ini, spec.T_f
    if s.T_sim < T_ini:
        raise ValueError(f"T_sim={s.T_sim} is shorter than T_ini={T_ini}")
    L, q = T_ini + T_f, layout.q
    dim = q * L
    plant = interconnected_ss(spec)
    inputs = layout.own_input_index

    bases = subsystem_bases(spec, reps, L)
    basis = centralized_basis(spec, reps, bases=bases)
    Phi = network_weight(layout, s.phi_u, s.phi_y)
    w_ref = constant_reference(layout, s.u_ref, s.y_ref, T_f)
    extra = ()
    if s.bounds is not None:
        lo, hi = s.bounds
        extra = (BoxProjector.on_coordinates(dim, layout.horizon_index(inputs, L), lo, hi),)
    if s.behavior_sets == "centralized":
        behavior = [SubspaceProjector(basis)]
    elif s.behavior_sets == "distributed":
        behavior = list(network_projectors(spec, reps, bases=bases))
    else:
        raise ValueError(f"unknown behavior_sets {s.behavior_sets!r}")
    affine = None
    # a state offset makes windows straddling it inconsistent with the model;
    # those are replaced by their least-squares fit in B|[1, T_ini]
    Q, _ = orthonormal_range(basis.basis[: q * T_ini])

    history = np.zeros((T_ini, q))
    x = np.zeros(plant.n)
    states = [x.copy()]
    closed, costs, iters = [], [], []
    violation = 0.0
    w_prev = None
    for t in range(s.T_sim):
        if s.disturbance is not None and t == s.disturbance.time:
            x = x + s.disturbance.offset(plant.n)
            states[-1] = x.copy()
        w_ini = history.ravel()
        w_ini = Q @ (Q.T @ w_ini)
        problem = LqtProblem(Trajectory(w_ini, q), w_ref, Phi, basis, extra_sets=extra)
        w1 = None
        if s.warm_start and w_prev is not None:
            w1 = np.concatenate([w_prev[q:], w_prev[-q:]])
        try:
            if controller == "oracle":
                w_f = constrained_oracle_solve(problem) if extra else oracle_solve(problem)
                iters.append(0)
            else:
                cfg = s.solver
                if controller == "fb":
                    if extra:
                        raise ValueError("the fb controller does not support box constraints")
                    affine = (
                        AffineBehaviorProjector(basis, problem.w_ini)
                        if affine is None
                        else affine.with_prefix(problem.w_ini)
                    )
                    report = fb_solve(problem, cfg, w1, affine)
                elif controller == "dy":
                    if extra:
                        raise ValueError("the dy controller does not support box constraints")
                    report = dy_solve(problem, cfg, w1, behavior[0] if len(behavior) == 1 else None)
                else:
                    report = split_pro_solve(problem, cfg, behavior + list(extra), w1)
                if not np.all(np.isfinite(report.final)):
                    raise SolverFailed("solver diverged", step=t)
                w_prev = report.final
                w_f = report.solution
                iters.append(report.iterations)
        except SolverFailed:
            raise
        except SplitProError as exc:
            raise SolverFailed(str(exc), step=t) from exc

        u = w_f.sample(1)[inputs]
        if s.bounds is not None:
            lo, hi = s.bounds
            violation = max(violation, float(np.max(np.maximum(u - hi, lo - u))), 0.0)
            u = np.clip(u, lo, hi)
        sample = np.empty(q)
        sample[plant.partition.input_index] = u
        sample[plant.partition.output_index] = plant.C @ x + plant.D @ u
        x = plant.A @ x + plant.B @ u
        states.append(x.copy())
        closed.append(sample)
        costs.append(cost_eval(sample, w_ref.sample(1), Phi))
        history = np.vstack([history[1:], sample])

    return MpcResult(
        w=Trajectory.from_samples(np.array(closed)),
        states=np.array(states),
        stage_costs=np.array(costs),
        iterations=iters,
        max_violation=violation,
        w_ref=w_ref.sample(1),
    )


def closed_loop_rows(layout, oracle: MpcResult, split: MpcResult, subsystem: int = 1):
    """Rows ``time, u_ref, u_1, u_2, y_ref, y_1, y_2`` for one subsystem (1-based)."""
    ui = layout.own_input_index[subsystem - 1]
    yi = layout.output_index[subsystem - 1]
    a, b = oracle.w.samples, split.w.samples
    u_ref, y_ref = oracle.w_ref[ui], oracle.w_ref[yi]
    return [
        (t, u_ref, a[t, ui], b[t, ui], y_ref, a[t, yi], b[t, yi]) for t in range(a.shape[0])
    ]


def recovery_time(result: MpcResult, layout, start: int, band: float = 0.1) -> int | None:
    """Steps after ``start`` until every output stays within ``band * |y_ref|`` of ``y_ref``."""
    yi = layout.output_index
    y = result.w.samples[:, yi]
    ref = result.w_ref[yi]
    tol = band * np.abs(ref)
    inside = np.all(np.abs(y - ref) <= tol, axis=1)
    for t in range(start, len(inside)):
        if inside[t:].all():
            return t - start
    return None
