"""Finite-horizon behavior representations.

Three ways of describing the restricted behavior ``B|[1,L]`` of an LTI
system are supported: a state-space quadruple, a raw data trajectory whose
Hankel matrix spans the behavior, and an explicit orthonormal basis.  The
first two are turned into the third by :func:`ss_basis` and
:func:`hankel_basis`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigParseError,
    DepthOutOfRange,
    DimensionMismatch,
    HorizonTooShort,
    InsufficientData,
    NotObservable,
    NotPersistentlyExciting,
)
from .trajectory import Partition, Trajectory, read_trajectory_csv

RANK_RTOL = 1e-10


def numerical_rank(s: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol * max(s)``."""
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def orthonormal_range(M: np.ndarray, rtol: float = RANK_RTOL, rank: int | None = None):
    """Orthonormal basis of the column space of ``M``.

    Returns ``(U, s)`` with ``U`` holding the leading left singular vectors
    and ``s`` all singular values.
    """
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = numerical_rank(s, rtol) if rank is None else rank
    return U[:, :r], s


@dataclass(frozen=True, eq=False)
class StateSpaceRep:
    """``x(t+1) = A x(t) + B u(t)``, ``y(t) = C x(t) + D u(t)`` with ``(u, y) = Pi w``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    partition: Partition | None = None

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise DimensionMismatch(
                f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}"
            )
        m, p = B.shape[1], C.shape[0]
        if D.shape != (p, m):
            raise DimensionMismatch(f"D must be {p}x{m}, got {D.shape}")
        part = self.partition or Partition.identity(m + p, m)
        if part.m != m or part.q != m + p:
            raise DimensionMismatch(
                f"partition has m={part.m}, q={part.q}; system has m={m}, q={m + p}"
            )
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        object.__setattr__(self, "partition", part)
        # raises NotObservable
        object.__setattr__(self, "_lag", observability_index(A, C))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return self.m + self.p

    @property
    def lag(self) -> int:
        return self._lag


@dataclass(frozen=True, eq=False)
class HankelRep:
    data: Trajectory
    depth: int

    def __post_init__(self):
        if not 1 <= self.depth <= self.data.T:
            raise DepthOutOfRange(f"depth {self.depth} outside [1, {self.data.T}]")

    @property
    def q(self) -> int:
        return self.data.q


@dataclass(frozen=True, eq=False)
class BasisRep:
    """Orthonormal basis (``qL x r``) of a restricted behavior ``B|[1,L]``."""

    basis: np.ndarray
    horizon: int
    q: int = field(init=False)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2 or self.horizon < 1 or basis.shape[0] % self.horizon:
            raise DimensionMismatch(
                f"basis of shape {basis.shape} incompatible with horizon {self.horizon}"
            )
        r = basis.shape[1]
        if r > basis.shape[0]:
            raise DimensionMismatch(f"r={r} exceeds ambient dimension {basis.shape[0]}")
        err = np.max(np.abs(basis.T @ basis - np.eye(r)), initial=0.0)
        if err > 1e-10:
            raise ValueError(f"basis columns are not orthonormal (error {err:.2e})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "q", basis.shape[0] // self.horizon)

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True)
class IntegerInvariants:
    m: int
    p: int
    n: int
    lag: int


def observability_index(A, C) -> int:
    """Smallest ``k`` such that ``[C; CA; ...; CA^(k-1)]`` has rank ``n``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if n == 0:
        return 0
    blocks = []
    CA = C
    for k in range(1, n + 1):
        blocks.append(CA)
        s = np.linalg.svd(np.vstack(blocks), compute_uv=False)
        if numerical_rank(s) == n:
            return k
        CA = CA @ A
    raise NotObservable("pair (A, C) is not observable")


def invariants_of(rep: StateSpaceRep) -> IntegerInvariants:
    return IntegerInvariants(m=rep.m, p=rep.p, n=rep.n, lag=rep.lag)


def behavior_dim(m: int, n: int, L: int) -> int:
    """Dimension ``mL + n`` of ``B|[1,L]`` for ``L`` at least the lag."""
    return m * L + n


def hankel(w: Trajectory, L: int) -> np.ndarray:
    """Block Hankel matrix of depth ``L``; column ``j`` is the window ``w|[j, j+L-1]``."""
    if not 1 <= L <= w.T:
        raise DepthOutOfRange(f"depth {L} outside [1, {w.T}]")
    samples = w.samples
    # windows[j] has shape (L, q), flattening it gives the time-major column
    windows = np.lib.stride_tricks.sliding_window_view(samples, L, axis=0)
    return windows.transpose(0, 2, 1).reshape(w.T - L + 1, L * w.q).T.copy()


def persistency_check(w: Trajectory, L: int, m: int, n: int, tol: float = RANK_RTOL) -> bool:
    """Generalized persistency of excitation: ``rank H_L(w) == mL + n``."""
    H = hankel(w, L)
    needed = behavior_dim(m, n, L)
    if H.shape[1] < needed:
        raise InsufficientData(
            f"Hankel matrix has {H.shape[1]} columns but rank {needed} is required; "
            "collect more data"
        )
    return numerical_rank(np.linalg.svd(H, compute_uv=False), tol) == needed


def response_matrix(rep: StateSpaceRep, L: int) -> np.ndarray:
    """Matrix mapping ``(x0, u(1), ..., u(L))`` to ``w(1..L)``."""
    n, m, q = rep.n, rep.m, rep.q
    M = np.zeros((q * L, n + m * L))
    ui, yi = rep.partition.input_index, rep.partition.output_index
    # Markov parameters C A^k B
    powers = [np.eye(n)]
    for _ in range(L):
        powers.append(powers[-1] @ rep.A)
    for t in range(L):
        rows = t * q
        M[rows + yi, :n] = rep.C @ powers[t]
        for s in range(t):
            M[rows + yi, n + s * m : n + (s + 1) * m] = rep.C @ powers[t - 1 - s] @ rep.B
        M[rows + yi, n + t * m : n + (t + 1) * m] = rep.D
        M[rows + ui, n + t * m : n + (t + 1) * m] = np.eye(m)
    return M


def ss_basis(rep: StateSpaceRep, L: int) -> BasisRep:
    if L < rep.lag or L < 1:
        raise HorizonTooShort(f"horizon {L} is shorter than the lag {rep.lag}")
    U, _ = orthonormal_range(response_matrix(rep, L))
    return BasisRep(U, L)


def hankel_basis(rep: HankelRep, m: int, n: int, tol: float = RANK_RTOL) -> BasisRep:
    L = rep.depth
    H = hankel(rep.data, L)
    r = behavior_dim(m, n, L)
    if H.shape[1] < r:
        raise InsufficientData(
            f"Hankel matrix has {H.shape[1]} columns but rank {r} is required; collect more data"
        )
    U, s = orthonormal_range(H, rank=r)
    if numerical_rank(s, tol) != r:
        raise NotPersistentlyExciting(
            f"rank of H_{L}(w_d) is {numerical_rank(s, tol)}, expected mL+n = {r}"
        )
    return BasisRep(U, L)


def simulate(rep: StateSpaceRep, u, x0=None):
    """Simulate the state recursion.

    ``u`` has shape ``(T, m)``.  Returns ``(w, x)`` where ``w`` is the
    trajectory and ``x`` the ``(T + 1, n)`` state sequence.
    """
    u = np.asarray(u, dtype=float).reshape(-1, rep.m)
    T = u.shape[0]
    x = np.zeros((T + 1, rep.n))
    if x0 is not None:
        x[0] = x0
    y = np.zeros((T, rep.p))
    for t in range(T):
        y[t] = rep.C @ x[t] + rep.D @ u[t]
        x[t + 1] = rep.A @ x[t] + rep.B @ u[t]
    samples = np.empty((T, rep.q))
    samples[:, rep.partition.input_index] = u
    samples[:, rep.partition.output_index] = y
    return Trajectory.from_samples(samples), x


def collect_data(rep: StateSpaceRep, T: int, seed=None, input_range=(-1.0, 1.0)) -> Trajectory:
    """Record ``T`` samples driven by i.i.d. uniform inputs from zero initial state."""
    if T < 1:
        raise ValueError("T must be positive")
    rng = np.random.default_rng(seed)
    u = rng.uniform(input_range[0], input_range[1], size=(T, rep.m))
    return simulate(rep, u)[0]


def random_state_space(rng, n: int, m: int, p: int, radius: float = 0.9, feedthrough=True):
    """Random observable system with spectral radius of ``A`` at most ``radius``."""
    rng = np.random.default_rng(rng)
    while True:
        A = rng.standard_normal((n, n))
        rho = max(np.abs(np.linalg.eigvals(A)))
        A *= radius * rng.uniform(0.5, 1.0) / rho
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
        try:
            return StateSpaceRep(A, B, C, D)
        except NotObservable:
            continue


def parse_matrix(text: str) -> np.ndarray:
    rows = [r.split() for r in text.replace(",", " ").split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("rows have different lengths")
    return np.array([[float(v) for v in r] for r in rows])


def read_key_value(path) -> list[tuple[int, str, str]]:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Returns ``(line, key, value)``."""
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigParseError("empty key", path, lineno)
        entries.append((lineno, key, value))
    return entries


def read_behavior_spec(path):
    """Load a behavior spec file.

    ``kind = state_space`` expects matrices ``A``, ``B``, ``C``, ``D`` (rows
    separated by ``;``) and an optional 1-based ``partition``.
    ``kind = hankel`` expects ``data`` (a trajectory CSV, relative to the spec
    file) and ``depth``.
    """
    path = Path(path)
    entries = read_key_value(path)
    values = {key: (lineno, value) for lineno, key, value in entries}
    if "kind" not in values:
        raise ConfigParseError("missing 'kind'", path, field="kind")
    kind = values["kind"][1]

    def get(name, convert):
        if name not in values:
            raise ConfigParseError(f"missing '{name}' for kind={kind}", path, field=name)
        lineno, value = values[name]
        try:
            return convert(value)
        except (ValueError, OSError) as exc:
            raise ConfigParseError(str(exc), path, lineno, name) from None

    if kind == "state_space":
        A, B, C, D = (get(k, parse_matrix) for k in "ABCD")
        partition = None
        if "partition" in values:
            perm = get("partition", lambda v: tuple(int(i) for i in v.replace(",", " ").split()))
            partition = Partition(perm, B.shape[1])
        try:
            return StateSpaceRep(A, B, C, D, partition)
        except DimensionMismatch as exc:
            raise ConfigParseError(str(exc), path) from None
    if kind == "hankel":
        data = get("data", lambda v: read_trajectory_csv(path.parent / v))
        depth = get("depth", int)
        return HankelRep(data, depth)
    raise ConfigParseError(
        f"unknown kind {kind!r}, expected state_space or hankel", path, values["kind"][0], "kind"
    )
