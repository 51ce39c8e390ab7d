"""Uniform cell-centered grids on axis-aligned boxes (1D and 2D).

Fields are plain numpy arrays of shape ``grid.shape``. Face fields are tuples
with one array per axis; the array for axis ``k`` has ``n_k + 1`` entries
along that axis, the first and last being boundary faces. Gradients vanish
on boundary faces, which is how the no-flux conditions enter every flux.

``div`` is the exact negative adjoint of ``grad`` in the weighted inner
products used here (cell volume for both cells and faces), so the discrete
integral of any divergence telescopes to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = ["Grid", "GridMismatch"]


class GridMismatch(ValueError):
    """A field does not live on the grid it was combined with."""


@dataclass(frozen=True)
class Grid:
    n: tuple[int, ...]
    L: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        L = tuple(float(x) for x in np.atleast_1d(self.L))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", L)
        if len(n) not in (1, 2) or len(L) != len(n):
            raise ValueError(f"grid must be 1D or 2D with matching n/L, got n={n}, L={L}")
        if min(n) < 3:
            raise ValueError(f"need at least 3 cells per axis, got {n}")
        if min(L) <= 0:
            raise ValueError(f"extents must be positive, got {L}")

    @classmethod
    def uniform(cls, n: int, L: float = 1.0, dim: int = 1) -> "Grid":
        return cls((n,) * dim, (L,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.L, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.L))

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates, broadcast to ``shape`` (``indexing="ij"``)."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.n, self.h)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def faces(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis``."""
        axes = []
        for k, (n, h) in enumerate(zip(self.n, self.h)):
            axes.append(np.arange(n + 1) * h if k == axis else (np.arange(n) + 0.5) * h)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.n)
        s[axis] += 1
        return tuple(s)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def face_zeros(self) -> tuple[np.ndarray, ...]:
        return tuple(np.zeros(self.face_shape(k)) for k in range(self.dim))

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != self.shape:
            raise GridMismatch(f"field of shape {f.shape} on grid of shape {self.shape}")
        return f

    def check_faces(self, F) -> tuple[np.ndarray, ...]:
        if len(F) != self.dim:
            raise GridMismatch(f"face field has {len(F)} components on a {self.dim}D grid")
        out = []
        for k, Fk in enumerate(F):
            Fk = np.asarray(Fk, dtype=np.float64)
            if Fk.shape != self.face_shape(k):
                raise GridMismatch(f"axis-{k} faces of shape {Fk.shape}, expected {self.face_shape(k)}")
            out.append(Fk)
        return tuple(out)

    # -- operators ---------------------------------------------------------

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        f = self.check(f)
        out = []
        for k, h in enumerate(self.h):
            g = np.zeros(self.face_shape(k))
            inner = [slice(None)] * self.dim
            inner[k] = slice(1, -1)
            g[tuple(inner)] = np.diff(f, axis=k) / h
            out.append(g)
        return tuple(out)

    def div(self, F) -> np.ndarray:
        F = self.check_faces(F)
        out = np.zeros(self.shape)
        for k, (Fk, h) in enumerate(zip(F, self.h)):
            out += np.diff(Fk, axis=k) / h
        return out

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.div(self.grad(f))

    def face_value(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        """Arithmetic mean of the two adjacent cells; boundary faces copy the cell."""
        f = self.check(f)
        out = []
        for k in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[k] = slice(None, -1)
            hi[k] = slice(1, None)
            first = [slice(None)] * self.dim
            last = [slice(None)] * self.dim
            first[k] = slice(0, 1)
            last[k] = slice(-1, None)
            mid = 0.5 * (f[tuple(lo)] + f[tuple(hi)])
            out.append(np.concatenate([f[tuple(first)], mid, f[tuple(last)]], axis=k))
        return tuple(out)

    # -- quadrature ----------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        f = self.check(f)
        # np.sum on a contiguous array is pairwise and order-fixed; the mean
        # times |domain| form makes constants integrate exactly.
        return float(np.sum(np.ascontiguousarray(f).ravel()) / self.size * self.volume)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(self.check(f) * self.check(g))

    def face_inner(self, F, G) -> float:
        F = self.check_faces(F)
        G = self.check_faces(G)
        total = 0.0
        for Fk, Gk in zip(F, G):
            total += float(np.sum(np.ascontiguousarray(Fk * Gk).ravel()))
        return total * self.cell_volume

    def l2norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def face_l2norm(self, F) -> float:
        return float(np.sqrt(self.face_inner(F, F)))

    def h1seminorm(self, f: np.ndarray) -> float:
        return self.face_l2norm(self.grad(f))

    def linf_bounds(self, f: np.ndarray) -> tuple[float, float]:
        f = self.check(f)
        return float(f.min()), float(f.max())

    # -- sparse operator matrices (cells flattened row-major, faces axis by axis)

    @cached_property
    def n_faces(self) -> int:
        return sum(int(np.prod(self.face_shape(k))) for k in range(self.dim))

    def flatten_faces(self, F) -> np.ndarray:
        return np.concatenate([np.ravel(Fk) for Fk in self.check_faces(F)])

    def unflatten_faces(self, v: np.ndarray) -> tuple[np.ndarray, ...]:
        out = []
        start = 0
        for k in range(self.dim):
            shape = self.face_shape(k)
            size = int(np.prod(shape))
            out.append(v[start:start + size].reshape(shape))
            start += size
        return tuple(out)

    def _axis_operator(self, k: int, kind: str) -> sp.csr_matrix:
        n = self.n[k]
        if kind == "grad":
            # (n+1) x n, boundary rows empty
            rows = np.concatenate([np.arange(1, n), np.arange(1, n)])
            cols = np.concatenate([np.arange(0, n - 1), np.arange(1, n)])
            vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1)]) / self.h[k]
        else:  # face average, boundary faces copy the adjacent cell
            rows = np.concatenate([[0], np.arange(1, n), np.arange(1, n), [n]])
            cols = np.concatenate([[0], np.arange(0, n - 1), np.arange(1, n), [n - 1]])
            vals = np.concatenate([[1.0], np.full(n - 1, 0.5), np.full(n - 1, 0.5), [1.0]])
        one_d = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
        mats = [sp.identity(m, format="csr") for m in self.n]
        mats[k] = one_d
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        return sp.vstack([self._axis_operator(k, "grad") for k in range(self.dim)], format="csr")

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        return (-self.grad_matrix.T).tocsr()

    @cached_property
    def face_avg_matrix(self) -> sp.csr_matrix:
        return sp.vstack([self._axis_operator(k, "avg") for k in range(self.dim)], format="csr")

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        return (self.div_matrix @ self.grad_matrix).tocsr()
