"""Interconnected mass-spring-damper networks.

Subsystem ``i`` has state ``x_i in R^2``, its own input ``u_i``, one
coupling input per incident edge and a scalar output ``y_i``.  A coupling
input carries the output of the neighbor at the other end of the edge,
``u_ij(t) = y_j(t)``.

Global trajectories are time-major.  Within one sample the subsystems are
laid out in order, each as ``(u_i, u_i,e1, u_i,e2, ..., y_i)`` with coupling
inputs in edge-list order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .behavior import (
    RANK_RTOL,
    BasisRep,
    HankelRep,
    StateSpaceRep,
    collect_data,
    hankel_basis,
    persistency_check,
    simulate,
    ss_basis,
)
from .errors import NotPersistentlyExciting
from .projection import CouplingProjector, ProductProjector, SubspaceProjector
from .trajectory import Partition, Trajectory

DEFAULT_RANGES = {"m": (0.5, 2.0), "d": (0.5, 2.0), "k": (0.5, 2.0), "K": (0.5, 2.0)}
DEFAULT_DT = 0.1
SUBSYSTEM_ORDER = 2
MAX_DATA_RETRIES = 5


@dataclass(frozen=True)
class SubsystemParams:
    m: float
    d: float
    k: float
    K: float
    dt: float = DEFAULT_DT

    def __post_init__(self):
        for name in ("m", "d", "k", "K", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"parameter {name} must be strictly positive")


def subsystem_ss(params: SubsystemParams, n_neighbors: int) -> StateSpaceRep:
    """State-space model with ``1 + n_neighbors`` inputs all entering through ``[0; 1]``."""
    p = params
    A = np.array([[1.0, p.dt], [-p.K / p.m * p.dt, 1.0 - p.d / p.m * p.dt]])
    b = np.array([[0.0], [1.0]])
    B = np.repeat(b, 1 + n_neighbors, axis=1)
    C = np.array([[p.k / p.m * p.dt, 0.0]])
    D = np.zeros((1, 1 + n_neighbors))
    return StateSpaceRep(A, B, C, D)


def sample_params(seed=None, ranges=None, dt: float = DEFAULT_DT) -> SubsystemParams:
    rng = np.random.default_rng(seed)
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    values = {}
    for name in ("m", "d", "k", "K"):
        lo, hi = ranges[name]
        if not 0 < lo <= hi:
            raise ValueError(f"range for {name} must satisfy 0 < lo <= hi, got {ranges[name]}")
        values[name] = float(rng.uniform(lo, hi))
    return SubsystemParams(dt=dt, **values)


def topology_edges(kind: str, nu: int) -> list[tuple[int, int]]:
    """Undirected edges (1-based) of a chain, ring or row-major lattice of ``nu`` nodes."""
    if nu < 2:
        raise ValueError("a network needs at least two subsystems")
    if kind == "chain":
        return [(i, i + 1) for i in range(1, nu)]
    if kind == "ring":
        return [(i, i + 1) for i in range(1, nu)] + [(nu, 1)]
    if kind == "lattice":
        cols = math.isqrt(nu - 1) + 1 if nu > 1 else 1  # ceil(sqrt(nu))
        edges = []
        for node in range(nu):
            r, c = divmod(node, cols)
            if c + 1 < cols and node + 1 < nu:
                edges.append((node + 1, node + 2))
            if node + cols < nu:
                edges.append((node + 1, node + cols + 1))
        return edges
    raise ValueError(f"unknown topology {kind!r}; expected chain, ring or lattice")


class NetworkLayout:
    """Coordinate map of one global sample and its extension over a horizon."""

    def __init__(self, nu: int, edges):
        self.nu = nu
        self.edges = [tuple(e) for e in edges]
        # feeds[i] lists the source subsystem of each coupling input of i (0-based)
        self.feeds = [[] for _ in range(nu)]
        for a, b in self.edges:
            self.feeds[a - 1].append(b - 1)
            self.feeds[b - 1].append(a - 1)
        self.sizes = [2 + len(f) for f in self.feeds]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)
        self.q = int(sum(self.sizes))

    def n_inputs(self, i: int) -> int:
        """Input channels of subsystem ``i`` (0-based): own input plus couplings."""
        return self.sizes[i] - 1

    @property
    def own_input_index(self) -> np.ndarray:
        return self.offsets.copy()

    @property
    def output_index(self) -> np.ndarray:
        return self.offsets + np.array(self.sizes) - 1

    def coupling_pairs(self):
        """``(coupling coordinate, source output coordinate)`` within one sample."""
        pairs = []
        for i, sources in enumerate(self.feeds):
            for e, j in enumerate(sources):
                pairs.append((self.offsets[i] + 1 + e, self.output_index[j]))
        return pairs

    def block(self, i: int, L: int) -> np.ndarray:
        """Global indices of subsystem ``i``'s local time-major trajectory over ``L`` samples."""
        local = self.offsets[i] + np.arange(self.sizes[i])
        return (np.arange(L)[:, None] * self.q + local[None, :]).ravel()

    def horizon_index(self, per_sample, L: int) -> np.ndarray:
        per_sample = np.asarray(per_sample, dtype=int)
        return (np.arange(L)[:, None] * self.q + per_sample[None, :]).ravel()

    def coupling_groups(self, L: int):
        """One group per output and sample: ``y_j(t)`` with every input it feeds."""
        fed = [[] for _ in range(self.nu)]
        for coord, src in self.coupling_pairs():
            fed[int(np.searchsorted(self.output_index, src))].append(coord)
        groups = []
        for t in range(L):
            for j in range(self.nu):
                if fed[j]:
                    groups.append(t * self.q + np.array([self.output_index[j], *fed[j]]))
        return groups


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    topology: str
    nu: int
    edges: list
    layout: NetworkLayout
    modes: tuple  # "state_space" or "hankel" per subsystem
    params: tuple
    systems: tuple  # ground-truth StateSpaceRep per subsystem
    seed: int
    T_ini: int
    T_f: int

    @property
    def horizon(self) -> int:
        return self.T_ini + self.T_f

    @property
    def q(self) -> int:
        return self.layout.q

    @property
    def dim(self) -> int:
        return self.layout.q * self.horizon


def build_network(
    kind: str,
    nu: int,
    seed: int = 0,
    gray_box: bool = True,
    T_ini: int | None = None,
    T_f: int = 5,
    ranges=None,
    dt: float = DEFAULT_DT,
    modes=None,
):
    """Sample a network and a representation for every subsystem.

    With ``gray_box`` the subsystems with even 1-based index keep their
    state-space model and the others are represented by a Hankel matrix of
    ``nu (T_ini + T_f) + 200`` samples collected under uniform inputs on
    ``[-1, 1]``.  ``modes`` overrides the assignment.

    Returns ``(spec, reps)``.
    """
    T_ini = 2 * nu + 1 if T_ini is None else T_ini
    edges = topology_edges(kind, nu)
    layout = NetworkLayout(nu, edges)
    if modes is None:
        modes = tuple(
            "state_space" if (not gray_box or (i + 1) % 2 == 0) else "hankel" for i in range(nu)
        )
    modes = tuple(modes)
    if len(modes) != nu or not set(modes) <= {"state_space", "hankel"}:
        raise ValueError(f"need {nu} modes from {{state_space, hankel}}, got {modes}")
    L = T_ini + T_f
    T_data = nu * L + 200
    params, systems, reps = [], [], []
    for i in range(nu):
        par = sample_params([seed, i, 0], ranges, dt)
        sys_i = subsystem_ss(par, len(layout.feeds[i]))
        params.append(par)
        systems.append(sys_i)
        if modes[i] == "state_space":
            reps.append(sys_i)
            continue
        for attempt in range(MAX_DATA_RETRIES + 1):
            data = collect_data(sys_i, T_data, seed=[seed, i, 1, attempt])
            if persistency_check(data, L, sys_i.m, sys_i.n):
                break
        else:
            raise NotPersistentlyExciting(
                f"subsystem {i + 1}: data not persistently exciting after {MAX_DATA_RETRIES} retries"
            )
        reps.append(HankelRep(data, L))
    spec = NetworkSpec(kind, nu, edges, layout, modes, tuple(params), tuple(systems), seed, T_ini, T_f)
    return spec, reps


def subsystem_bases(spec: NetworkSpec, reps, L: int | None = None) -> list[BasisRep]:
    L = spec.horizon if L is None else L
    bases = []
    for i, rep in enumerate(reps):
        if isinstance(rep, HankelRep):
            if rep.depth != L:
                rep = HankelRep(rep.data, L)
            bases.append(hankel_basis(rep, spec.layout.n_inputs(i), SUBSYSTEM_ORDER))
        else:
            bases.append(ss_basis(rep, L))
    return bases


def network_projectors(spec: NetworkSpec, reps, T_ini: int | None = None, T_f: int | None = None, bases=None):
    """``(C1, C2)``: product of isolated subsystem behaviors and the coupling subspace."""
    L = (T_ini if T_ini is not None else spec.T_ini) + (T_f if T_f is not None else spec.T_f)
    bases = bases or subsystem_bases(spec, reps, L)
    layout = spec.layout
    C1 = ProductProjector(
        [SubspaceProjector(b) for b in bases], [layout.block(i, L) for i in range(spec.nu)]
    )
    C2 = CouplingProjector(layout.coupling_groups(L), layout.q * L)
    return C1, C2


def centralized_basis(spec: NetworkSpec, reps, T_ini: int | None = None, T_f: int | None = None, bases=None) -> BasisRep:
    """Orthonormal basis of ``C1 ∩ C2`` via the null space of the stacked coupling constraints."""
    L = (T_ini if T_ini is not None else spec.T_ini) + (T_f if T_f is not None else spec.T_f)
    bases = bases or subsystem_bases(spec, reps, L)
    layout = spec.layout
    N = layout.q * L
    R = sum(b.r for b in bases)
    U1 = np.zeros((N, R))
    col = 0
    for i, b in enumerate(bases):
        U1[layout.block(i, L), col : col + b.r] = b.basis
        col += b.r
    rows = []
    for g in layout.coupling_groups(L):
        rows.append(U1[g[1:]] - U1[g[0]])
    M = np.vstack(rows)
    Z = null_space(M, rcond=RANK_RTOL)
    # Z has orthonormal columns and U1 orthonormal columns, so U1 @ Z is orthonormal
    return BasisRep(U1 @ Z, L)


def centralized_projector(spec: NetworkSpec, reps, T_ini=None, T_f=None, bases=None) -> SubspaceProjector:
    return SubspaceProjector(centralized_basis(spec, reps, T_ini, T_f, bases))


def interconnected_ss(spec: NetworkSpec) -> StateSpaceRep:
    """Ground-truth model of the coupled network over the global sample layout.

    Inputs are the own inputs ``u_i``; every other coordinate (coupling
    inputs and outputs) is an output.
    """
    layout, nu = spec.layout, spec.nu
    n = SUBSYSTEM_ORDER * nu
    A = np.zeros((n, n))
    B = np.zeros((n, nu))
    Cx = np.zeros((layout.q, n))
    for i, sys_i in enumerate(spec.systems):
        si = slice(2 * i, 2 * i + 2)
        A[si, si] = sys_i.A
        b = sys_i.B[:, :1]
        B[si, i] = b[:, 0]
        for j in layout.feeds[i]:
            A[si, 2 * j : 2 * j + 2] += b @ spec.systems[j].C
        Cx[layout.output_index[i], si] = sys_i.C[0]
    for coord, src in layout.coupling_pairs():
        Cx[coord] = Cx[src]
    inputs = layout.own_input_index
    others = np.setdiff1d(np.arange(layout.q), inputs)
    C = Cx[others]
    D = np.zeros((others.size, nu))
    partition = Partition(tuple(np.concatenate([inputs, others]) + 1), nu)
    return StateSpaceRep(A, B, C, D, partition)


def network_weight(layout: NetworkLayout, phi_u: float = 1.0, phi_y: float = 1.0) -> np.ndarray:
    """Block-diagonal weight with ``phi_u`` on every input channel and ``phi_y`` on outputs."""
    diag = np.full(layout.q, float(phi_u))
    diag[layout.output_index] = phi_y
    return np.diag(diag)


def constant_reference(layout: NetworkLayout, u_ref: float, y_ref: float, T: int) -> Trajectory:
    """Setpoints tiled over ``T`` samples; coupling inputs carry neighbor outputs, so they get ``y_ref``."""
    sample = np.full(layout.q, float(y_ref))
    sample[layout.own_input_index] = u_ref
    return Trajectory(np.tile(sample, T), layout.q)


def random_prefix(spec: NetworkSpec, seed, T_ini: int | None = None) -> Trajectory:
    """Trajectory of the coupled network from a random state under random inputs."""
    T_ini = spec.T_ini if T_ini is None else T_ini
    rng = np.random.default_rng(seed)
    plant = interconnected_ss(spec)
    x0 = rng.uniform(-1.0, 1.0, plant.n)
    u = rng.uniform(-1.0, 1.0, (T_ini, plant.m))
    return simulate(plant, u, x0)[0]
