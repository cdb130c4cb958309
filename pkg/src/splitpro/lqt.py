"""Finite-horizon linear quadratic tracking: problem data, cost, and dense oracles.

The oracles solve the problem directly from a behavior basis with dense
linear algebra and serve as ground truth for the iterative solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .behavior import RANK_RTOL, BasisRep, numerical_rank, response_matrix
from .errors import (
    DimensionMismatch,
    HorizonTooShort,
    Infeasible,
    InfeasiblePrefix,
    NotPositiveDefinite,
    SingularKKT,
)
from .projection import BoxProjector
from .trajectory import Trajectory, concat


def check_weight(Phi) -> np.ndarray:
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    if Phi.shape[0] != Phi.shape[1] or not np.allclose(Phi, Phi.T, rtol=0, atol=1e-12):
        raise NotPositiveDefinite("weight matrix must be square and symmetric")
    try:
        np.linalg.cholesky(Phi)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("weight matrix is not positive definite") from None
    return Phi


@dataclass(eq=False)
class LqtProblem:
    """Track ``w_ref`` over ``T_f`` samples after the fixed prefix ``w_ini``.

    ``basis`` spans ``B|[1, T_ini + T_f]``; it is needed by the exact-projection
    solvers and the oracles but not by the distributed solver, which works
    from a list of sets instead.
    """

    w_ini: Trajectory
    w_ref: Trajectory
    Phi: np.ndarray
    basis: BasisRep | None = None
    lag: int | None = None
    extra_sets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.Phi = check_weight(self.Phi)
        q = self.w_ini.q
        if self.w_ref.q != q or self.Phi.shape != (q, q):
            raise DimensionMismatch(
                f"w_ini has q={q}, w_ref has q={self.w_ref.q}, Phi is {self.Phi.shape}"
            )
        if self.basis is not None:
            if self.basis.q != q or self.basis.horizon != self.T_ini + self.T_f:
                raise DimensionMismatch(
                    f"basis covers q={self.basis.q}, L={self.basis.horizon}; "
                    f"problem needs q={q}, L={self.T_ini + self.T_f}"
                )
        if self.lag is not None and self.T_ini < self.lag:
            raise HorizonTooShort(f"T_ini={self.T_ini} is shorter than the lag {self.lag}")
        self.extra_sets = tuple(self.extra_sets)
        for P in self.extra_sets:
            if P.dim != self.dim:
                raise DimensionMismatch(f"constraint set acts on R^{P.dim}, expected R^{self.dim}")

    @property
    def q(self) -> int:
        return self.w_ini.q

    @property
    def T_ini(self) -> int:
        return self.w_ini.T

    @property
    def T_f(self) -> int:
        return self.w_ref.T

    @property
    def prefix_len(self) -> int:
        return self.q * self.T_ini

    @property
    def dim(self) -> int:
        return self.q * (self.T_ini + self.T_f)

    def cost(self, w_f) -> float:
        return cost_eval(w_f, self.w_ref, self.Phi)

    def suffix(self, w) -> Trajectory:
        """``pi_f(w)`` as a trajectory."""
        return Trajectory(np.asarray(w)[self.prefix_len :], self.q)

    def require_basis(self) -> BasisRep:
        if self.basis is None:
            raise ValueError("this operation needs a behavior basis (problem.basis is None)")
        return self.basis


def cost_eval(w_f, w_ref, Phi) -> float:
    """``sum_t (w_f(t) - w_ref(t))^T Phi (w_f(t) - w_ref(t))``."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    a = np.asarray(getattr(w_f, "data", w_f), dtype=float)
    b = np.asarray(getattr(w_ref, "data", w_ref), dtype=float)
    q = Phi.shape[0]
    if a.shape != b.shape or a.size % q:
        raise DimensionMismatch(
            f"cannot compare trajectories of length {a.size} and {b.size} with q={q}"
        )
    d = (a - b).reshape(-1, q)
    return float(np.einsum("ti,ij,tj->", d, Phi, d))


def _compressed_prefix(E: np.ndarray, w_ini: np.ndarray, tol: float = 1e-8):
    """Replace ``E g = w_ini`` by an equivalent full-row-rank system."""
    P, s, Vt = np.linalg.svd(E, full_matrices=False)
    r = numerical_rank(s, RANK_RTOL)
    P = P[:, :r]
    resid = np.linalg.norm(w_ini - P @ (P.T @ w_ini))
    if resid > tol * max(1.0, np.linalg.norm(w_ini)):
        raise InfeasiblePrefix(f"w_ini is {resid:.2e} away from B|[1,T_ini]")
    return s[:r, None] * Vt[:r], P.T @ w_ini


def _weight_root(problem: LqtProblem) -> np.ndarray:
    """Cholesky factor ``R`` of ``I (x) Phi`` with ``R^T R = I (x) Phi``."""
    R = np.linalg.cholesky(problem.Phi).T
    return np.kron(np.eye(problem.T_f), R)


def oracle_solve(problem: LqtProblem, return_coefficients: bool = False):
    """Exact LQT minimizer from the KKT system of the basis-coefficient problem.

    ``min_g ||Pi_f U g - w_ref||^2`` weighted by ``I (x) Phi`` subject to
    ``Pi_ini U g = w_ini``.
    """
    U = problem.require_basis().basis
    k = problem.prefix_len
    E, rhs_eq = _compressed_prefix(U[:k], problem.w_ini.data)
    F = U[k:]
    W = np.kron(np.eye(problem.T_f), problem.Phi)
    H = 2.0 * F.T @ W @ F
    r, c = H.shape[0], E.shape[0]
    KKT = np.block([[H, E.T], [E, np.zeros((c, c))]])
    rhs = np.concatenate([2.0 * F.T @ W @ problem.w_ref.data, rhs_eq])
    s = np.linalg.svd(KKT, compute_uv=False)
    if numerical_rank(s, 1e-13) < r + c:
        raise SingularKKT("KKT matrix is singular: T_ini below the lag or rank-deficient basis")
    sol = np.linalg.solve(KKT, rhs)
    resid = np.linalg.norm(KKT @ sol - rhs) / max(1.0, np.linalg.norm(rhs))
    if resid > 1e-9:
        raise SingularKKT(f"KKT residual {resid:.2e} exceeds 1e-9")
    g = sol[:r]
    w_f = Trajectory(F @ g, problem.q)
    return (w_f, g) if return_coefficients else w_f


def _merge_boxes(boxes, dim):
    lo = np.full(dim, -np.inf)
    hi = np.full(dim, np.inf)
    for box in boxes:
        if not isinstance(box, BoxProjector):
            raise TypeError(f"constrained oracle supports box sets only, got {type(box).__name__}")
        lo = np.maximum(lo, box.lo)
        hi = np.minimum(hi, box.hi)
    if np.any(lo > hi):
        raise Infeasible("box constraints have an empty intersection")
    return lo, hi


def constrained_oracle_solve(problem: LqtProblem, feas_tol: float = 1e-9) -> Trajectory:
    """LQT minimizer with box constraints, by reduction to bounded least squares.

    The affine set ``{w in B : w[:k] = w_ini}`` is parametrized as
    ``w = v0 + K z``.  When the boxed suffix coordinates ``S`` are linearly
    independent over that set (for instance free input channels), the
    change of variables ``z = G^+ (s - v0[S]) + N t`` with ``G = K[S]`` turns
    the problem into a least-squares problem with simple bounds on ``s`` and
    free ``t``, solved exactly by the bounded-variable active-set method.
    """
    U = problem.require_basis().basis
    k, dim = problem.prefix_len, problem.dim
    lo, hi = _merge_boxes(problem.extra_sets, dim)
    w_ini = problem.w_ini.data
    if np.any(w_ini < lo[:k] - feas_tol) or np.any(w_ini > hi[:k] + feas_tol):
        raise Infeasible("w_ini violates the box constraints")

    E, rhs_eq = _compressed_prefix(U[:k], w_ini)
    _, s_E, Vt = np.linalg.svd(E, full_matrices=True)
    g0 = np.linalg.lstsq(E, rhs_eq, rcond=None)[0]
    N = Vt[E.shape[0] :].T
    v0, K = U @ g0, U @ N

    boxed = np.flatnonzero(np.isfinite(lo[k:]) | np.isfinite(hi[k:])) + k
    G = K[boxed]
    if boxed.size:
        PG, sG, VGt = np.linalg.svd(G, full_matrices=True)
        if numerical_rank(sG, 1e-10) < boxed.size:
            raise ValueError(
                "boxed coordinates are linearly dependent over the feasible set; "
                "only constraints on free coordinates are supported"
            )
        G_pinv = VGt[: boxed.size].T @ (PG.T / sG[:, None])
        NG = VGt[boxed.size :].T
    else:
        G_pinv = np.zeros((K.shape[1], 0))
        NG = np.eye(K.shape[1])

    # w = v0 + K (G_pinv (s - v0[S]) + NG t) = c + M [s; t]
    M = K @ np.hstack([G_pinv, NG])
    c = v0 - K @ (G_pinv @ v0[boxed])
    R = _weight_root(problem)
    A = R @ M[k:]
    b = R @ (problem.w_ref.data - c[k:])
    n_free = NG.shape[1]
    lower = np.concatenate([lo[boxed], np.full(n_free, -np.inf)])
    upper = np.concatenate([hi[boxed], np.full(n_free, np.inf)])
    if A.shape[1] == 0:
        x = np.zeros(0)
    else:
        res = lsq_linear(A, b, bounds=(lower, upper), method="bvls", tol=1e-14, lsmr_tol=None)
        x = np.clip(res.x, lower, upper)
    w = c + M @ x
    w[boxed] = np.clip(w[boxed], lo[boxed], hi[boxed])
    return Trajectory(w[k:], problem.q)


def full_trajectory(problem: LqtProblem, w_f: Trajectory) -> np.ndarray:
    return concat(problem.w_ini, w_f).data


def realized_trajectory(plant, problem: LqtProblem, w_f: Trajectory) -> Trajectory:
    """Suffix the plant actually produces when driven by the inputs of ``w_f``.

    The initial state is the least-squares fit to ``w_ini``.  For a feasible
    ``w_f`` this returns ``w_f`` itself; for an approximate solution it shows
    what applying its inputs would achieve.
    """
    L = problem.T_ini + problem.T_f
    M = response_matrix(plant, L)
    w = np.concatenate([problem.w_ini.data, w_f.data])
    u = w.reshape(L, problem.q)[:, plant.partition.input_index].ravel()
    k, n = problem.prefix_len, plant.n
    x0 = np.linalg.lstsq(M[:k, :n], problem.w_ini.data - M[:k, n:] @ u, rcond=None)[0]
    return Trajectory((M @ np.concatenate([x0, u]))[k:], problem.q)
