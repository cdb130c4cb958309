"""Euclidean projectors and alternating-projection engines."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .behavior import RANK_RTOL, BasisRep, numerical_rank
from .errors import DimensionMismatch, InfeasiblePrefix, LayoutMismatch


class Projector:
    """Exact Euclidean projection onto a closed convex set in ``R^dim``."""

    dim: int
    is_subspace = False

    def project(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, w):
        return self.project(w)

    def distance(self, w) -> float:
        """Infinity-norm residual ``||w - P(w)||``."""
        return float(np.max(np.abs(w - self.project(w)), initial=0.0))


def project(P: Projector, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (P.dim,):
        raise DimensionMismatch(f"projector acts on R^{P.dim}, got shape {w.shape}")
    return P.project(w)


class SubspaceProjector(Projector):
    """Projection onto the span of an orthonormal basis, ``P(w) = U (U^T w)``.

    With ``precompute=True`` the dense ``dim x dim`` projection matrix is formed
    once and each projection is a single matrix-vector product.
    """

    is_subspace = True

    def __init__(self, basis, precompute: bool = False):
        U = basis.basis if isinstance(basis, BasisRep) else np.asarray(basis, dtype=float)
        self.basis = U
        self.dim = U.shape[0]
        self._matrix = U @ U.T if precompute else None

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def project(self, w):
        if self._matrix is not None:
            return self._matrix @ w
        return self.basis @ (self.basis.T @ w)


class PrefixProjector(Projector):
    """Projection onto ``{w : w[:k] = w_ini}``: overwrite the first block."""

    def __init__(self, w_ini, dim: int):
        self.w_ini = np.asarray(getattr(w_ini, "data", w_ini), dtype=float)
        if self.w_ini.size > dim:
            raise DimensionMismatch(f"prefix of length {self.w_ini.size} exceeds dim {dim}")
        self.dim = dim

    def project(self, w):
        return prefix_projection(w, self.w_ini)


def prefix_projection(w, w_ini) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    w_ini = np.asarray(getattr(w_ini, "data", w_ini), dtype=float)
    k = w_ini.size
    if k > w.size:
        raise DimensionMismatch(f"prefix of length {k} longer than vector of length {w.size}")
    out = w.copy()
    out[:k] = w_ini
    return out


class BoxProjector(Projector):
    """Coordinate-wise clamping to ``[lo, hi]``; infinite bounds leave coordinates free."""

    def __init__(self, lo, hi, dim: int | None = None):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if dim is not None:
            lo, hi = np.broadcast_to(lo, (dim,)).copy(), np.broadcast_to(hi, (dim,)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lo and hi must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("empty box: some lo > hi")
        self.lo, self.hi = lo, hi
        self.dim = lo.size

    @classmethod
    def on_coordinates(cls, dim: int, index, lo: float, hi: float) -> "BoxProjector":
        lower = np.full(dim, -np.inf)
        upper = np.full(dim, np.inf)
        lower[index] = lo
        upper[index] = hi
        return cls(lower, upper)

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.lo) | np.isfinite(self.hi))

    def project(self, w):
        return np.clip(w, self.lo, self.hi)


class HalfspaceProjector(Projector):
    """Projection onto ``{w : a^T w <= b}``."""

    def __init__(self, a, b: float):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self._aa = float(self.a @ self.a)
        if self._aa == 0:
            raise ValueError("normal vector must be nonzero")
        self.dim = self.a.size

    def project(self, w):
        excess = self.a @ w - self.b
        if excess <= 0:
            return np.array(w, dtype=float)
        return w - (excess / self._aa) * self.a


class AffineBehaviorProjector(Projector):
    """Projection onto ``{v in span(U) : v[:k] = w_ini}``.

    Solves ``min ||U g - w||`` subject to ``U[:k] g = w_ini`` by the
    null-space method: with ``E = U[:k] = P S Q^T`` the feasible set is
    ``v0 + span(K)`` where ``K = U Q_null`` is orthonormal and ``v0`` is
    the minimum-norm feasible point.  The factorization does not depend on
    ``w_ini``, so :meth:`with_prefix` reuses it.
    """

    def __init__(self, basis, w_ini, feas_tol: float = 1e-8, _factors=None):
        w_ini = np.asarray(getattr(w_ini, "data", w_ini), dtype=float)
        k = w_ini.size
        if _factors is None:
            U = basis.basis if isinstance(basis, BasisRep) else np.asarray(basis, dtype=float)
            if k > U.shape[0]:
                raise DimensionMismatch(f"prefix of length {k} exceeds dim {U.shape[0]}")
            # full right factor is needed for the null space; the left one only when k < r
            P, s, Qt = np.linalg.svd(U[:k], full_matrices=k < U.shape[1])
            rank = numerical_rank(s, RANK_RTOL)
            _factors = (U, P[:, :rank], s[:rank], Qt[:rank], U @ Qt[rank:].T)
        self._factors = _factors
        U, P, s, Qr, K = _factors
        if P.shape[0] != k:
            raise DimensionMismatch(f"prefix length {k} differs from factorized length {P.shape[0]}")
        self.dim = U.shape[0]
        self.prefix_len = k
        self.basis = U
        self.null_basis = K
        coeff = P.T @ w_ini
        residual = np.linalg.norm(P @ coeff - w_ini)
        if residual > feas_tol * max(1.0, np.linalg.norm(w_ini)):
            raise InfeasiblePrefix(
                f"initial trajectory is {residual:.2e} away from the restricted behavior"
            )
        self.w_ini = w_ini
        self.offset = U @ (Qr.T @ (coeff / s))
        self.feas_tol = feas_tol

    def with_prefix(self, w_ini) -> "AffineBehaviorProjector":
        return AffineBehaviorProjector(None, w_ini, self.feas_tol, _factors=self._factors)

    def project(self, w):
        K = self.null_basis
        return self.offset + K @ (K.T @ w)


def affine_behavior_project(rep: BasisRep, w_ini, w) -> np.ndarray:
    return project(AffineBehaviorProjector(rep, w_ini), w)


class ProductProjector(Projector):
    """Block-separable projector; ``blocks[i]`` lists the coordinates handled by ``parts[i]``.

    Subspace parts with identical basis shapes are evaluated together with a
    single batched matrix product.  Every block writes to its own disjoint
    coordinates, so the result does not depend on evaluation order.
    """

    def __init__(self, parts, blocks):
        if len(parts) != len(blocks):
            raise LayoutMismatch(f"{len(parts)} parts but {len(blocks)} blocks")
        blocks = [np.asarray(b, dtype=int) for b in blocks]
        for part, block in zip(parts, blocks):
            if block.ndim != 1 or block.size != part.dim:
                raise LayoutMismatch(f"block of size {block.size} for part of dim {part.dim}")
        every = np.concatenate(blocks) if blocks else np.zeros(0, dtype=int)
        self.dim = every.size
        if np.any(np.sort(every) != np.arange(self.dim)):
            raise LayoutMismatch("blocks must partition the coordinates 0..dim-1 without overlap")
        self.parts = list(parts)
        self.blocks = blocks
        self.is_subspace = all(p.is_subspace for p in parts)

        groups = defaultdict(list)
        self._others = []
        for i, part in enumerate(parts):
            if isinstance(part, SubspaceProjector):
                groups[part.basis.shape].append(i)
            else:
                self._others.append(i)
        self._batches = []
        for members in groups.values():
            stack = np.stack([parts[i].basis for i in members])
            index = np.stack([blocks[i] for i in members])
            stack_t = np.ascontiguousarray(stack.transpose(0, 2, 1))
            n, r = stack.shape[1:]
            # U U^T x costs 2nr per block, the dense projector n^2
            dense = np.matmul(stack, stack_t) if 2 * r > n else None
            self._batches.append((stack, stack_t, dense, index))

    def project(self, w):
        out = np.empty_like(w, dtype=float)
        for stack, stack_t, dense, index in self._batches:
            local = w[index][:, :, None]
            if dense is not None:
                out[index] = np.matmul(dense, local)[:, :, 0]
            else:
                out[index] = np.matmul(stack, np.matmul(stack_t, local))[:, :, 0]
        for i in self._others:
            out[self.blocks[i]] = self.parts[i].project(w[self.blocks[i]])
        return out


def product_project(parts, blocks, w) -> np.ndarray:
    return project(ProductProjector(parts, blocks), w)


class CouplingProjector(Projector):
    """Projection onto ``{w : all coordinates within each group are equal}``.

    Each group is replaced by its mean; ungrouped coordinates are unchanged.
    A pairwise constraint ``u_ij(t) = y_j(t)`` is a group of size two; an
    output feeding several neighbors forms one larger group.
    """

    is_subspace = True

    def __init__(self, groups, dim: int):
        groups = [np.asarray(g, dtype=int) for g in groups]
        members = np.concatenate(groups) if groups else np.zeros(0, dtype=int)
        if members.size and (members.min() < 0 or members.max() >= dim):
            raise LayoutMismatch("coupling coordinate outside the ambient space")
        if np.unique(members).size != members.size:
            raise LayoutMismatch("a coordinate appears in more than one coupling group")
        if any(g.size < 2 for g in groups):
            raise LayoutMismatch("coupling groups need at least two coordinates")
        self.dim = dim
        self.groups = groups
        self._members = members
        self._ids = np.concatenate([np.full(g.size, i) for i, g in enumerate(groups)]) if groups else members
        self._counts = np.array([g.size for g in groups], dtype=float)

    @property
    def n_constraints(self) -> int:
        return int(sum(g.size - 1 for g in self.groups))

    def project(self, w):
        out = np.array(w, dtype=float)
        if self._members.size:
            means = np.bincount(self._ids, weights=w[self._members]) / self._counts
            out[self._members] = means[self._ids]
        return out


def coupling_project(groups, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return project(CouplingProjector(groups, w.size), w)


def _check_common_dim(projectors):
    dims = {P.dim for P in projectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"projectors act on different dimensions {sorted(dims)}")


def von_neumann(P1: Projector, P2: Projector, w0, max_iters: int = 1000, tol: float = 1e-9, with_gap: bool = True):
    """Alternating projections ``w <- P2(P1(w))``.

    Stops when the sweep changes ``w`` by at most ``tol`` in the infinity
    norm.  Returns ``(w, iterations, gap)`` with ``gap = ||P1(w) -
    P2(P1(w))||_inf``; a large gap signals an empty intersection.  With
    ``with_gap=False`` the gap is not evaluated and returned as NaN.
    """
    _check_common_dim([P1, P2])
    w = np.asarray(w0, dtype=float)
    k = 0
    for k in range(1, max_iters + 1):
        w_next = P2.project(P1.project(w))
        change = np.max(np.abs(w_next - w), initial=0.0)
        w = w_next
        if change <= tol:
            break
    if not with_gap:
        return w, k, float("nan")
    a = P1.project(w)
    gap = float(np.max(np.abs(a - P2.project(a)), initial=0.0))
    return w, k, gap


def dykstra(projectors, w0, max_iters: int = 1000, tol: float = 1e-9, corrections: bool | None = None,
            with_gap: bool = True):
    """Dykstra's algorithm for the projection of ``w0`` onto an intersection.

    Each set keeps its own correction vector.  With ``corrections=False``
    the iteration degenerates to plain cyclic projections, which has the
    same limit when every set is a subspace; ``None`` picks that mode
    automatically for subspace-only lists.  Stops once no single projection
    in a sweep moves the point by more than ``tol``.  Returns ``(w,
    iterations, gap)`` where ``gap`` is the largest infinity-norm distance
    from ``w`` to a set.
    """
    projectors = list(projectors)
    if not projectors:
        raise ValueError("need at least one projector")
    _check_common_dim(projectors)
    if corrections is None:
        corrections = not all(P.is_subspace for P in projectors)
    x = np.asarray(w0, dtype=float)
    incr = [np.zeros_like(x) for _ in projectors] if corrections else None
    k = 0
    for k in range(1, max_iters + 1):
        # the sweep endpoint alone can repeat while the corrections still move
        change = 0.0
        for i, P in enumerate(projectors):
            if corrections:
                y = P.project(x + incr[i])
                incr[i] = x + incr[i] - y
            else:
                y = P.project(x)
            change = max(change, float(np.max(np.abs(y - x), initial=0.0)))
            x = y
        if change <= tol:
            break
    gap = max(P.distance(x) for P in projectors) if with_gap else float("nan")
    return x, k, gap
