"""Finite trajectories and input/output partitions.

A trajectory of ``T`` samples in ``R^q`` is stored flat and time-major, so
sample ``t`` (1-based) occupies ``data[(t-1)*q : t*q]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, RangeOutOfBounds


@dataclass(frozen=True, eq=False)
class Trajectory:
    data: np.ndarray
    q: int

    def __post_init__(self):
        data = np.array(self.data, dtype=float).ravel()
        if self.q < 1:
            raise DimensionMismatch(f"signal dimension must be positive, got q={self.q}")
        if data.size == 0 or data.size % self.q:
            raise DimensionMismatch(
                f"data length {data.size} is not a positive multiple of q={self.q}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_samples(cls, samples) -> "Trajectory":
        """Build from a ``(T, q)`` array, one row per sample."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return cls(samples.ravel(), samples.shape[1])

    @property
    def T(self) -> int:
        return self.data.size // self.q

    @property
    def samples(self) -> np.ndarray:
        return self.data.reshape(self.T, self.q)

    def sample(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise RangeOutOfBounds(f"sample index {t} outside [1, {self.T}]")
        return self.data[(t - 1) * self.q : t * self.q]

    def __len__(self):
        return self.data.size

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Trajectory(q={self.q}, T={self.T})"


def concat(w: Trajectory, v: Trajectory) -> Trajectory:
    """Concatenation ``w ∧ v``."""
    if w.q != v.q:
        raise DimensionMismatch(f"cannot concatenate q={w.q} with q={v.q}")
    return Trajectory(np.concatenate([w.data, v.data]), w.q)


def restrict(w: Trajectory, a: int, b: int) -> Trajectory:
    """Restriction of ``w`` to the time window ``[a, b]`` (1-based, inclusive)."""
    if not 1 <= a <= b <= w.T:
        raise RangeOutOfBounds(f"window [{a}, {b}] not inside [1, {w.T}]")
    return Trajectory(w.data[(a - 1) * w.q : b * w.q], w.q)


@dataclass(frozen=True)
class Partition:
    """Permutation ``(u, y) = Pi w`` splitting ``R^q`` into ``m`` inputs and ``q - m`` outputs.

    ``permutation`` lists 1-based coordinates of ``w``: the first ``m`` entries
    are the inputs, the rest the outputs.
    """

    permutation: tuple
    m: int

    def __post_init__(self):
        perm = tuple(int(i) for i in self.permutation)
        q = len(perm)
        if sorted(perm) != list(range(1, q + 1)):
            raise DimensionMismatch(f"{perm} is not a permutation of 1..{q}")
        if not 0 < self.m < q:
            raise DimensionMismatch(f"need 0 < m < q, got m={self.m}, q={q}")
        object.__setattr__(self, "permutation", perm)

    @classmethod
    def identity(cls, q: int, m: int) -> "Partition":
        return cls(tuple(range(1, q + 1)), m)

    @property
    def q(self) -> int:
        return len(self.permutation)

    @property
    def p(self) -> int:
        return self.q - self.m

    @property
    def input_index(self) -> np.ndarray:
        return np.array(self.permutation[: self.m]) - 1

    @property
    def output_index(self) -> np.ndarray:
        return np.array(self.permutation[self.m :]) - 1


def partition_split(w, p: Partition):
    w = np.asarray(w, dtype=float)
    if w.shape != (p.q,):
        raise DimensionMismatch(f"expected a length-{p.q} vector, got shape {w.shape}")
    return w[p.input_index], w[p.output_index]


def partition_merge(u, y, p: Partition) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != (p.m,) or y.shape != (p.p,):
        raise DimensionMismatch(
            f"expected u of length {p.m} and y of length {p.p}, got {u.shape} and {y.shape}"
        )
    w = np.empty(p.q)
    w[p.input_index] = u
    w[p.output_index] = y
    return w


def format_float(x: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format_float(v)


def write_trajectory_csv(path, w: Trajectory) -> None:
    header = ["t"] + [f"w{i}" for i in range(1, w.q + 1)]
    write_csv(path, header, ([t + 1, *row] for t, row in enumerate(w.samples)))


def read_trajectory_csv(path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DimensionMismatch(f"{path}: empty trajectory file")
    header = lines[0].strip().split(",")
    if header[0] != "t" or header[1:] != [f"w{i}" for i in range(1, len(header))]:
        raise DimensionMismatch(f"{path}: bad header {lines[0]!r}, expected t,w1,...,wq")
    q = len(header) - 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != q + 1:
            raise DimensionMismatch(f"{path}:{lineno}: expected {q + 1} fields, got {len(cells)}")
        if int(cells[0]) != len(rows) + 1:
            raise DimensionMismatch(f"{path}:{lineno}: samples must be numbered 1, 2, ...")
        rows.append([float(c) for c in cells[1:]])
    return Trajectory.from_samples(np.array(rows).reshape(len(rows), q))
