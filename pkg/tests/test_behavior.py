import numpy as np
import pytest
from scipy.linalg import subspace_angles

from splitpro.behavior import (
    BasisRep,
    HankelRep,
    StateSpaceRep,
    behavior_dim,
    collect_data,
    hankel,
    hankel_basis,
    invariants_of,
    observability_index,
    persistency_check,
    read_behavior_spec,
    simulate,
    ss_basis,
)
from splitpro.errors import (
    ConfigParseError,
    DepthOutOfRange,
    DimensionMismatch,
    HorizonTooShort,
    InsufficientData,
    NotObservable,
    NotPersistentlyExciting,
)
from splitpro.network import SubsystemParams, subsystem_ss
from splitpro.trajectory import Trajectory, write_trajectory_csv

from conftest import random_system


def test_hankel_scalar():
    H = hankel(Trajectory([1, 2, 3, 4], 1), 2)
    assert np.array_equal(H, [[1, 2, 3], [2, 3, 4]])


def test_hankel_vector():
    H = hankel(Trajectory([1, 10, 2, 20, 3, 30], 2), 2)
    assert H.shape == (4, 2)
    assert np.array_equal(H[:, 0], [1, 10, 2, 20])
    assert np.array_equal(H[:, 1], [2, 20, 3, 30])


def test_hankel_full_depth_and_bounds():
    w = Trajectory(np.arange(6.0), 2)
    assert np.array_equal(hankel(w, 3)[:, 0], w.data)
    for L in (0, 4):
        with pytest.raises(DepthOutOfRange):
            hankel(w, L)


def test_hankel_columns_are_windows():
    rng = np.random.default_rng(1)
    w = Trajectory(rng.normal(size=3 * 15), 3)
    H = hankel(w, 4)
    for j in range(H.shape[1]):
        assert np.array_equal(H[:, j], w.data[3 * j : 3 * (j + 4)])


def test_persistency_first_order():
    sys_ = StateSpaceRep([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    w = collect_data(sys_, 20, seed=3)
    assert persistency_check(w, 3, 1, 1)
    assert not persistency_check(Trajectory(np.zeros(40), 2), 3, 1, 1)
    with pytest.raises(InsufficientData):
        persistency_check(w, 15, 1, 1)


@pytest.mark.parametrize("seed", range(10))
def test_persistency_matches_svd_rank(seed):
    sys_ = random_system(seed, n_max=4)
    L = sys_.lag + 2
    r = behavior_dim(sys_.m, sys_.n, L)
    for T in (r + L - 1, 4 * r):
        w = collect_data(sys_, T, seed=seed)
        s = np.linalg.svd(hankel(w, L), compute_uv=False)
        rank = int(np.sum(s > 1e-10 * s[0]))
        assert persistency_check(w, L, sys_.m, sys_.n) == (rank == r)


def test_invariants_integrator(integrator):
    inv = invariants_of(integrator)
    assert (inv.m, inv.p, inv.n, inv.lag) == (1, 1, 1, 1)


def test_invariants_spring():
    sys_ = subsystem_ss(SubsystemParams(1, 1, 1, 1), 0)
    assert invariants_of(sys_).lag == 2
    with pytest.raises(NotObservable):
        StateSpaceRep(sys_.A, sys_.B, np.zeros((1, 2)), sys_.D)


def test_state_space_shapes():
    with pytest.raises(DimensionMismatch):
        StateSpaceRep(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))


def test_behavior_dim():
    assert behavior_dim(1, 1, 3) == 4
    assert behavior_dim(0, 5, 9) == 5
    assert behavior_dim(2, 3, 7) == 17


def test_ss_basis_integrator(integrator):
    B = ss_basis(integrator, 2)
    assert B.r == 3
    W = B.basis
    # columns are (u1, y1, u2, y2) with y2 = y1 + u1
    assert np.max(np.abs(W[3] - W[1] - W[0])) < 1e-10


def test_ss_basis_lag_boundary():
    sys_ = subsystem_ss(SubsystemParams(1, 1, 1, 1), 0)
    assert ss_basis(sys_, 2).r == 4
    with pytest.raises(HorizonTooShort):
        ss_basis(sys_, 1)


@pytest.mark.parametrize("seed", range(10))
def test_ss_basis_rank(seed):
    sys_ = random_system(seed)
    for L in (sys_.lag, sys_.lag + 3):
        B = ss_basis(sys_, L)
        assert B.r == behavior_dim(sys_.m, sys_.n, L)
        assert np.allclose(B.basis.T @ B.basis, np.eye(B.r), atol=1e-10)


def test_hankel_basis_integrator(integrator):
    w = collect_data(integrator, 12, seed=0)
    H = hankel_basis(HankelRep(w, 2), 1, 1)
    assert np.max(subspace_angles(H.basis, ss_basis(integrator, 2).basis)) < 1e-8


def test_hankel_basis_zero_data():
    with pytest.raises(NotPersistentlyExciting):
        hankel_basis(HankelRep(Trajectory(np.zeros(40), 2), 2), 1, 1)


@pytest.mark.parametrize("seed", range(10))
def test_fundamental_lemma(seed):
    sys_ = random_system(seed, n_max=4)
    L = sys_.lag + 3
    r = behavior_dim(sys_.m, sys_.n, L)
    w = collect_data(sys_, 3 * r + L, seed=seed)
    H = hankel_basis(HankelRep(w, L), sys_.m, sys_.n)
    assert H.r == r
    assert np.max(subspace_angles(H.basis, ss_basis(sys_, L).basis)) <= 1e-8


def test_basis_rep_checks_orthonormality():
    with pytest.raises(ValueError):
        BasisRep(np.ones((4, 2)), 2)


def test_collect_data_deterministic_and_consistent():
    sys_ = random_system(4)
    a, b = collect_data(sys_, 50, seed=7), collect_data(sys_, 50, seed=7)
    assert a == b
    assert collect_data(sys_, 50, seed=8) != a
    u = a.samples[:, sys_.partition.input_index]
    assert np.all(np.abs(u) <= 1.0)
    w, _ = simulate(sys_, u)
    assert np.max(np.abs(w.data - a.data)) < 1e-12


def test_observability_index_mimo():
    A = np.array([[0.1, 0, 0], [0, 0.2, 1.0], [0, 0, 0.3]])
    C = np.eye(3)[:2]
    assert observability_index(A, C) == 2


def test_read_behavior_spec(tmp_path, integrator):
    (tmp_path / "int.behavior").write_text(
        "kind = state_space\nA = 1\nB = 1\nC = 1\nD = 0\npartition = 2 1\n"
    )
    rep = read_behavior_spec(tmp_path / "int.behavior")
    assert rep.n == 1 and rep.partition.permutation == (2, 1)
    write_trajectory_csv(tmp_path / "data.csv", collect_data(integrator, 12, seed=0))
    (tmp_path / "h.behavior").write_text("kind = hankel\ndata = data.csv\ndepth = 2\n")
    hrep = read_behavior_spec(tmp_path / "h.behavior")
    assert hrep.depth == 2 and hrep.data.T == 12


def test_read_behavior_spec_errors(tmp_path):
    p = tmp_path / "bad.behavior"
    p.write_text("kind = state_space\nA = 1 2; 3\n")
    with pytest.raises(ConfigParseError, match="line 2|2:.*A"):
        read_behavior_spec(p)
    p.write_text("kind = kernel\n")
    with pytest.raises(ConfigParseError, match="kind"):
        read_behavior_spec(p)
