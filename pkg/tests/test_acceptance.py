"""Acceptance gate.  Each test prints one ``criterion N: PASS/FAIL`` line."""

import time

import numpy as np
import pytest
from scipy.linalg import null_space, orth, subspace_angles

from splitpro.behavior import (
    HankelRep,
    behavior_dim,
    collect_data,
    hankel,
    hankel_basis,
    persistency_check,
    ss_basis,
)
from splitpro.cli import run_bench
from splitpro.lqt import LqtProblem, oracle_solve, realized_trajectory
from splitpro.mpc import MpcSettings, mpc_run, recovery_time
from splitpro.network import (
    build_network,
    centralized_basis,
    centralized_projector,
    interconnected_ss,
    network_projectors,
    random_prefix,
    subsystem_bases,
)
from splitpro.projection import (
    AffineBehaviorProjector,
    BoxProjector,
    CouplingProjector,
    HalfspaceProjector,
    PrefixProjector,
    ProductProjector,
    SubspaceProjector,
    dykstra,
)
from splitpro.splitting import (
    SplitConfig,
    dy_fixed_point,
    dy_solve,
    fb_solve,
    fejer_check,
    grad_h,
    split_pro_solve,
)
from splitpro.trajectory import Trajectory

from conftest import random_problem, random_system, record_criterion

N_SYSTEMS = 20


@pytest.fixture(scope="module")
def oracle_runs():
    """Criterion-1 instances solved by both exact-projection solvers, iterates recorded."""
    t0 = time.perf_counter()
    runs = []
    for seed in range(N_SYSTEMS):
        sys_, prob = random_problem(1000 + seed, T_f=10)
        w_star = oracle_solve(prob)
        cfg = SplitConfig(alpha=0.5, tol=1e-11, max_outer=50_000, record_iterates=True)
        runs.append((prob, w_star, fb_solve(prob, cfg), dy_solve(prob, cfg)))
    return runs, time.perf_counter() - t0


def test_criterion_1_oracle_equivalence(oracle_runs):
    runs, elapsed = oracle_runs
    errs, iters = [], []
    for prob, w_star, fb, dy in runs:
        for rep in (fb, dy):
            errs.append(np.max(np.abs(rep.solution.data - w_star.data)))
            iters.append(rep.iterations)
    ok = max(errs) <= 1e-6 and max(iters) <= 50_000 and elapsed <= 60
    record_criterion(1, ok, f"{N_SYSTEMS} systems, max error {max(errs):.2e}, "
                     f"max iterations {max(iters)}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_fundamental_lemma():
    worst_angle, agree, checks = 0.0, 0, 0
    for seed in range(10):
        sys_ = random_system(2000 + seed, n_max=4)
        L = sys_.lag + 3
        r = behavior_dim(sys_.m, sys_.n, L)
        w = collect_data(sys_, 3 * r + L, seed=seed)
        H = hankel_basis(HankelRep(w, L), sys_.m, sys_.n)
        worst_angle = max(worst_angle, float(np.max(subspace_angles(H.basis, ss_basis(sys_, L).basis))))
        # lengths just around the column threshold, plus rank-deficient data
        for data in (collect_data(sys_, r + L - 1, seed=seed), w, Trajectory(np.tile(w.data[: sys_.q], w.T), sys_.q)):
            s = np.linalg.svd(hankel(data, L), compute_uv=False)
            rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
            agree += persistency_check(data, L, sys_.m, sys_.n) == (rank == r)
            checks += 1
    ok = worst_angle <= 1e-8 and agree == checks
    record_criterion(2, ok, f"max principal angle {worst_angle:.2e}, "
                     f"persistency verdicts match SVD rank {agree}/{checks}")
    assert ok


@pytest.fixture(scope="module")
def chain4():
    spec, reps = build_network("chain", 4, seed=0)
    bases = subsystem_bases(spec, reps)
    sets = list(network_projectors(spec, reps, bases=bases))
    basis = centralized_basis(spec, reps, bases=bases)
    plant = interconnected_ss(spec)
    w_ini = random_prefix(spec, [0, 1])
    w_ref = Trajectory(np.random.default_rng([0, 2]).uniform(-1, 1, spec.q * spec.T_f), spec.q)
    prob = LqtProblem(w_ini, w_ref, np.eye(spec.q), basis, lag=plant.lag)
    return prob, sets, plant


def test_criterion_3_inexact_projection(chain4):
    prob, sets, plant = chain4
    exact = dy_solve(prob, SplitConfig(alpha=0.1, tol=1e-11)).solution
    oracle_cost = prob.cost(oracle_solve(prob))
    errors, realized = {}, {}
    for J in (1, 5, 25, 125):
        cfg = SplitConfig(alpha=0.1, inner_J=J, tol=1e-10, max_outer=20_000, inner_gaps=False)
        rep = split_pro_solve(prob, cfg, sets)
        errors[J] = float(np.max(np.abs(rep.solution.data - exact.data)))
        realized[J] = (rep, prob.cost(realized_trajectory(plant, prob, rep.solution)))
    seq = [errors[J] for J in (1, 5, 25, 125)]
    monotone = all(b <= a for a, b in zip(seq, seq[1:]))
    rep5, cost5 = realized[5]
    rel = abs(cost5 - oracle_cost) / oracle_cost
    ok = monotone and errors[125] <= 1e-5 and rel <= 0.01
    record_criterion(3, ok, "errors " + ", ".join(f"J={J}: {e:.2e}" for J, e in errors.items())
                     + f"; J=5 realized cost {rel:.2e} from oracle "
                     f"(shadow iterate {abs(rep5.cost - oracle_cost) / oracle_cost:.2e})")
    assert ok


@pytest.mark.slow
def test_criterion_4_scalability():
    t0 = time.perf_counter()
    nus = [5, 10, 15, 20]
    rows = run_bench("chain", nus, repeats=3, seed=0)
    elapsed = time.perf_counter() - t0
    central = np.array([r[1] for r in rows])
    dist = np.array([r[3] for r in rows])
    slope = float(np.polyfit(np.log(nus), np.log(central), 1)[0])
    ok = dist[-1] < central[-1] and slope > 1.0 and elapsed <= 600
    record_criterion(4, ok, "centralized " + ", ".join(f"{t:.2f}" for t in central)
                     + "s, distributed " + ", ".join(f"{t:.2f}" for t in dist)
                     + f"s; log-log slope {slope:.2f}; {elapsed:.0f}s total")
    assert ok


@pytest.mark.slow
def test_criterion_5_constrained_mpc():
    spec, reps = build_network("chain", 2, seed=0, T_f=20)
    settings = MpcSettings()
    oracle = mpc_run(spec, reps, "oracle", settings)
    split = mpc_run(spec, reps, "split_pro", settings)
    inputs = spec.layout.own_input_index
    worst = max(float(np.max(np.abs(r.w.samples[:, inputs]))) for r in (oracle, split))
    rel = abs(split.total_cost - oracle.total_cost) / oracle.total_cost
    rec = [recovery_time(r, spec.layout, settings.disturbance.time) for r in (oracle, split)]
    ok = worst <= 0.5 + 1e-9 and rel <= 0.05 and all(t is not None and t <= 30 for t in rec)
    record_criterion(5, ok, f"max |u| {worst:.12f}, planned-input bound excess {split.max_violation:.1e}, "
                     f"cost oracle {oracle.total_cost:.6f} split {split.total_cost:.6f} (rel {rel:.1e}), "
                     f"recovery steps {rec}")
    assert ok


def _projector_zoo(rng):
    """One instance of every projector kind with its ambient dimension."""
    U = orth(rng.normal(size=(8, 3)))
    zoo = {
        "subspace": SubspaceProjector(U),
        "prefix": PrefixProjector(rng.normal(size=3), 8),
        "box": BoxProjector(-rng.uniform(0, 1, 8), rng.uniform(0, 1, 8)),
        "halfspace": HalfspaceProjector(rng.normal(size=8), 0.3),
        "coupling": CouplingProjector([np.array([0, 3]), np.array([5, 1, 6])], 8),
        "product": ProductProjector([SubspaceProjector(orth(rng.normal(size=(4, 2))))] * 2,
                                    [np.arange(4), np.arange(4, 8)]),
    }
    sys_ = random_system(3000)
    B = ss_basis(sys_, sys_.lag + 3)
    x = B.basis @ rng.normal(size=B.r)
    zoo["affine_behavior"] = AffineBehaviorProjector(B, x[: sys_.q * sys_.lag])
    spec, reps = build_network("chain", 2, seed=0, T_ini=3, T_f=2)
    zoo["centralized"] = centralized_projector(spec, reps)
    return zoo


def _qp_projection(w0, box, halfspaces, subspace):
    import cvxpy as cp

    x = cp.Variable(w0.size)
    cons = [x >= box[0], x <= box[1]]
    cons += [a @ x <= b for a, b in halfspaces]
    if subspace is not None:
        N = null_space(subspace.T)
        cons.append(N.T @ x == 0)
    cp.Problem(cp.Minimize(cp.sum_squares(x - w0)), cons).solve(
        solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12
    )
    return x.value


def test_criterion_6_projector_properties():
    rng = np.random.default_rng(6)
    zoo = _projector_zoo(rng)
    idem = nonexp = adj = 0.0
    for name, P in zoo.items():
        for _ in range(100):
            w, v = rng.normal(scale=3.0, size=(2, P.dim))
            Pw, Pv = P(w), P(v)
            idem = max(idem, float(np.max(np.abs(P(Pw) - Pw))))
            nonexp = max(nonexp, (np.linalg.norm(Pw - Pv) - np.linalg.norm(w - v)) / np.linalg.norm(w - v))
            if P.is_subspace:
                adj = max(adj, abs(Pw @ v - w @ Pv))
    dyk = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 7))
        lo, hi = -rng.uniform(0.1, 1, d), rng.uniform(0.1, 1, d)
        halfspaces = [(rng.normal(size=d), float(rng.uniform(0, 0.5))) for _ in range(int(rng.integers(1, 3)))]
        sets = [BoxProjector(lo, hi)] + [HalfspaceProjector(a, b) for a, b in halfspaces]
        Q = None
        if d > 2 and rng.random() < 0.5:
            Q = orth(rng.normal(size=(d, d - 1)))
            sets.append(SubspaceProjector(Q))
        w0 = rng.normal(scale=2.0, size=d)
        x, _, _ = dykstra(sets, w0, max_iters=200_000, tol=1e-14)
        dyk = max(dyk, float(np.max(np.abs(x - _qp_projection(w0, (lo, hi), halfspaces, Q)))))
    ok = idem <= 1e-10 and nonexp <= 1e-12 and adj <= 1e-10 and dyk <= 1e-6
    record_criterion(6, ok, f"{len(zoo)} projector kinds x 100 samples: idempotency {idem:.1e}, "
                     f"nonexpansive excess {nonexp:.1e}, adjointness {adj:.1e}; "
                     f"Dykstra vs QP on 100 instances {dyk:.1e}")
    assert ok


def test_criterion_7_fejer(oracle_runs):
    runs, _ = oracle_runs
    admissible = 0
    for prob, w_star, fb, dy in runs:
        admissible += fejer_check(fb, np.concatenate([prob.w_ini.data, w_star.data]))
        admissible += fejer_check(dy, dy_fixed_point(prob, w_star, 0.5))
    prob, w_star, _, _ = runs[0]
    alpha = 2.5
    cfg = SplitConfig(alpha=alpha, check_step=False, record_iterates=True, max_outer=200)
    witness = fejer_check(dy_solve(prob, cfg), dy_fixed_point(prob, w_star, alpha))
    ok = admissible == 0 and witness >= 1
    record_criterion(7, ok, f"{admissible} violations over {2 * len(runs)} admissible runs; "
                     f"{witness} with alpha = {alpha} / rho(Phi)")
    assert ok


def test_criterion_8_gradient_check():
    rng = np.random.default_rng(8)
    q, T, k = 3, 5, 6
    M = rng.normal(size=(q, q))
    Phi = M @ M.T + 0.5 * np.eye(q)
    w_ref = rng.normal(size=q * T)

    def h(v):
        d = (v[k:] - w_ref).reshape(T, q)
        return float(np.einsum("ti,ij,tj->", d, Phi, d))

    worst = 0.0
    eye = np.eye(k + q * T)
    for _ in range(50):
        w = rng.normal(size=k + q * T)
        fd = np.array([(h(w + 1e-5 * e) - h(w - 1e-5 * e)) / 2e-5 for e in eye])
        g = grad_h(w, Phi, w_ref, k)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
    ok = worst <= 1e-6
    record_criterion(8, ok, f"max relative error {worst:.1e} over 50 points")
    assert ok
