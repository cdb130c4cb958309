"""Fixed-point LQT solvers built from projections.

``fb_solve``
    projected gradient (forward-backward splitting) onto the affine set of
    behaviors with the prescribed prefix.
``dy_solve``
    Davis-Yin three-operator splitting; the prefix constraint and the
    behavior are handled by separate projections.
``split_pro_solve``
    Davis-Yin with the behavior projection replaced by a fixed number of
    alternating-projection sweeps over a list of simpler sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InfeasiblePrefix, IteratesNotRecorded, StepSizeTooLarge
from .lqt import LqtProblem, check_weight, cost_eval
from .projection import AffineBehaviorProjector, SubspaceProjector, dykstra, von_neumann
from .trajectory import Trajectory, write_csv


@dataclass
class SplitConfig:
    alpha: float | None = None  # None means 0.5 / rho(Phi)
    max_outer: int = 50_000
    inner_J: int = 5
    tol: float = 1e-9
    record_iterates: bool = False
    inner: str = "auto"  # "auto", "von_neumann" or "dykstra"
    check_step: bool = True
    inner_gaps: bool = True
    validate_prefix: bool = True

    def __post_init__(self):
        if self.inner_J < 1:
            raise ValueError("inner_J must be at least 1")
        if self.alpha is not None and self.alpha <= 0:
            raise StepSizeTooLarge("alpha must be positive")
        if self.inner not in ("auto", "von_neumann", "dykstra"):
            raise ValueError(f"unknown inner method {self.inner!r}")


@dataclass
class SolveReport:
    final: np.ndarray
    shadow: np.ndarray
    solution: Trajectory
    iterations: int
    converged: bool
    residual_history: list = field(default_factory=list)
    cost_history: list = field(default_factory=list)
    inner_gaps: list = field(default_factory=list)
    iterates: list | None = None
    fejer_violations: int = 0

    @property
    def cost(self) -> float:
        return self.cost_history[-1] if self.cost_history else float("nan")

    def write_trace(self, path) -> None:
        rows = zip(range(1, self.iterations + 1), self.residual_history, self.cost_history)
        write_csv(path, ["k", "residual", "cost"], rows)


def step_size_bound(Phi) -> float:
    """``1 / rho(Phi)``: the gradient of the tracking cost is ``2 rho(Phi)``-Lipschitz."""
    Phi = check_weight(Phi)
    return 1.0 / float(np.max(np.linalg.eigvalsh(Phi)))


def resolve_alpha(cfg: SplitConfig, Phi) -> float:
    bound = step_size_bound(Phi)
    alpha = 0.5 * bound if cfg.alpha is None else cfg.alpha
    if cfg.check_step and not 0 < alpha < bound:
        raise StepSizeTooLarge(f"alpha={alpha:g} outside (0, 1/rho(Phi)) = (0, {bound:g})")
    return alpha


def grad_h(w, Phi, w_ref, prefix_len: int) -> np.ndarray:
    """Gradient ``2 Pi_f^T (I (x) Phi)(Pi_f w - w_ref)``; zero on the prefix."""
    w = np.asarray(w, dtype=float)
    ref = np.asarray(getattr(w_ref, "data", w_ref), dtype=float)
    if w.size - prefix_len != ref.size:
        raise DimensionMismatch(
            f"suffix of length {w.size - prefix_len} vs reference of length {ref.size}"
        )
    q = Phi.shape[0]
    out = np.zeros_like(w)
    out[prefix_len:] = 2.0 * ((w[prefix_len:] - ref).reshape(-1, q) @ Phi).ravel()
    return out


def default_start(problem: LqtProblem) -> np.ndarray:
    """``w_ini ∧ w_ref``."""
    return np.concatenate([problem.w_ini.data, problem.w_ref.data])


def _start(problem: LqtProblem, w1) -> np.ndarray:
    w = default_start(problem) if w1 is None else np.array(w1, dtype=float)
    if w.shape != (problem.dim,):
        raise DimensionMismatch(f"initial guess must have length {problem.dim}")
    return w


def check_prefix(problem: LqtProblem, tol: float = 1e-8) -> None:
    """Raise :class:`InfeasiblePrefix` unless ``w_ini`` lies in ``B|[1, T_ini]``."""
    E = problem.require_basis().basis[: problem.prefix_len]
    w_ini = problem.w_ini.data
    g = np.linalg.lstsq(E, w_ini, rcond=None)[0]
    resid = np.linalg.norm(E @ g - w_ini)
    if resid > tol * max(1.0, np.linalg.norm(w_ini)):
        raise InfeasiblePrefix(f"w_ini is {resid:.2e} away from the restricted behavior")


def fb_step(problem: LqtProblem, P_affine, alpha: float, w):
    """One forward-backward step ``P_A(w - alpha grad_h(w))``."""
    z = grad_h(w, problem.Phi, problem.w_ref, problem.prefix_len)
    return P_affine.project(w - alpha * z)


def dy_step(problem: LqtProblem, project_behavior, alpha: float, w):
    """One Davis-Yin step with the behavior projection supplied as a callable.

    The shadow iterate ``z_half = w_ini ∧ Pi_f w`` is what converges to
    the LQT minimizer.
    """
    k = problem.prefix_len
    z_half = w.copy()
    z_half[:k] = problem.w_ini.data
    z = grad_h(z_half, problem.Phi, problem.w_ref, k)
    v = project_behavior(2.0 * z_half - w - alpha * z)
    return w + v - z_half


def _iterate(problem: LqtProblem, cfg: SplitConfig, w, step) -> SolveReport:
    residuals, costs = [], []
    iterates = [w.copy()] if cfg.record_iterates else None
    k0 = problem.prefix_len
    converged = False
    for _ in range(cfg.max_outer):
        w_next = step(w)
        res = float(np.max(np.abs(w_next - w)))
        residuals.append(res)
        costs.append(cost_eval(w_next[k0:], problem.w_ref.data, problem.Phi))
        w = w_next
        if iterates is not None:
            iterates.append(w.copy())
        if not np.isfinite(res):
            break
        if res <= cfg.tol:
            converged = True
            break
    shadow = w.copy()
    shadow[:k0] = problem.w_ini.data
    return SolveReport(
        final=w,
        shadow=shadow,
        solution=Trajectory(shadow[k0:], problem.q),
        iterations=len(residuals),
        converged=converged,
        residual_history=residuals,
        cost_history=costs,
        iterates=iterates,
    )


def fb_solve(problem: LqtProblem, cfg: SplitConfig | None = None, w1=None, projector=None) -> SolveReport:
    """Projected gradient iteration ``w <- P_A(w - alpha grad_h(w))``.

    ``projector`` may be a prebuilt :class:`AffineBehaviorProjector` for this
    problem's prefix; otherwise it is built from ``problem.basis``.
    """
    cfg = cfg or SplitConfig()
    alpha = resolve_alpha(cfg, problem.Phi)
    P = projector or AffineBehaviorProjector(problem.require_basis(), problem.w_ini)
    report = _iterate(problem, cfg, _start(problem, w1), lambda w: fb_step(problem, P, alpha, w))
    report.shadow = report.final
    report.solution = problem.suffix(report.final)
    return report


def dy_solve(problem: LqtProblem, cfg: SplitConfig | None = None, w1=None, projector=None) -> SolveReport:
    """Davis-Yin splitting with the exact behavior projection."""
    cfg = cfg or SplitConfig()
    alpha = resolve_alpha(cfg, problem.Phi)
    if cfg.validate_prefix:
        check_prefix(problem)
    if projector is None:
        projector = SubspaceProjector(problem.require_basis())
    return _iterate(
        problem, cfg, _start(problem, w1), lambda w: dy_step(problem, projector.project, alpha, w)
    )


def inner_projection(sets, x, J: int, method: str = "auto", with_gap: bool = True):
    """``J`` alternating-projection sweeps over ``sets`` starting at ``x``.

    ``auto`` uses von Neumann for two subspaces and Dykstra otherwise.
    Returns ``(v, gap)``.
    """
    sets = list(sets)
    if method == "auto":
        method = "von_neumann" if len(sets) == 2 and all(P.is_subspace for P in sets) else "dykstra"
    if method == "von_neumann":
        if len(sets) != 2:
            raise ValueError("von Neumann iteration needs exactly two sets")
        v, _, gap = von_neumann(sets[0], sets[1], x, max_iters=J, tol=0.0, with_gap=with_gap)
    else:
        v, _, gap = dykstra(sets, x, max_iters=J, tol=0.0, with_gap=with_gap)
    return v, gap


def split_pro_solve(problem: LqtProblem, cfg: SplitConfig | None, sets, w1=None) -> SolveReport:
    """Davis-Yin splitting with an inexact, distributed behavior projection.

    ``sets`` is an ordered list of projectors whose intersection is the
    restricted behavior, optionally followed by extra constraint sets such
    as boxes.  Each outer step runs ``cfg.inner_J`` sweeps from the
    reflected point.
    """
    cfg = cfg or SplitConfig()
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one set")
    for P in sets:
        if P.dim != problem.dim:
            raise DimensionMismatch(f"set acts on R^{P.dim}, problem lives in R^{problem.dim}")
    alpha = resolve_alpha(cfg, problem.Phi)
    if cfg.validate_prefix and problem.basis is not None:
        check_prefix(problem)
    gaps = []

    def inexact(x):
        v, gap = inner_projection(sets, x, cfg.inner_J, cfg.inner, cfg.inner_gaps)
        if cfg.inner_gaps:
            gaps.append(gap)
        return v

    report = _iterate(problem, cfg, _start(problem, w1), lambda w: dy_step(problem, inexact, alpha, w))
    report.inner_gaps = gaps
    return report


def fejer_check(report: SolveReport, w_star, slack: float = 1e-12) -> int:
    """Count steps where the distance to ``w_star`` grows by more than ``slack``."""
    if not report.iterates:
        raise IteratesNotRecorded("solve with record_iterates=True to check Fejér monotonicity")
    w_star = np.asarray(w_star, dtype=float)
    dist = [np.linalg.norm(w - w_star) for w in report.iterates]
    violations = sum(1 for a, b in zip(dist, dist[1:]) if b > a + slack)
    report.fejer_violations = violations
    return violations


def dy_fixed_point(problem: LqtProblem, w_f_star: Trajectory, alpha: float) -> np.ndarray:
    """A fixed point of the Davis-Yin operator whose shadow is ``w_ini ∧ w_f_star``.

    Fixed points are ``z* + d`` with ``d`` supported on the prefix and
    ``d + alpha grad_h(z*)`` orthogonal to the behavior.
    """
    U = problem.require_basis().basis
    k = problem.prefix_len
    z = np.concatenate([problem.w_ini.data, w_f_star.data])
    g = alpha * grad_h(z, problem.Phi, problem.w_ref, k)
    # U^T (E^T d + g) = 0  with E^T d placing d on the prefix
    d = np.linalg.lstsq(U[:k].T, -U.T @ g, rcond=None)[0]
    z[:k] += d
    return z


def read_trace(path):
    lines = Path(path).read_text().splitlines()
    if lines[0] != "k,residual,cost":
        raise ValueError(f"{path}: unexpected trace header {lines[0]!r}")
    rows = [line.split(",") for line in lines[1:] if line]
    return [(int(k), float(r), float(c)) for k, r, c in rows]
