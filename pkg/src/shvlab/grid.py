"""Staggered-grid domain description and velocity/scalar field containers.

The domain is a rectangular box covered by a uniform marker-and-cell layout:
scalar quantities (pressure, divergence) live at cell centers, and the d-th
velocity component lives on the faces perpendicular to axis d.  Component d
therefore has one more sample than the cell count along its own axis and the
cell count along every other axis.

No-slip walls are encoded structurally: face samples that lie on the domain
boundary (the first and last slice of component d along axis d) are pinned to
zero and excluded from the unknown vector.  Tangential wall conditions are
enforced by the odd-extension ghost closure inside the Laplacian (see
operators.apply_laplacian).

`Grid` precomputes index maps between face arrays and the flat vector of
interior unknowns, plus sparse matrix forms of the divergence / gradient /
Laplacian stencils that the eigenvalue solver consumes.  The matrices and the
stencil implementations are checked against each other in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class GridSpec:
    """Validated description of the box and its uniform cell counts.

    Attributes:
        dim: spatial dimension, 2 or 3.
        cells: cells per axis, each >= 8.
        lengths: box edge lengths, each > 0.
    """

    dim: int
    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))


class VelocityField:
    """Tuple of per-component face arrays with small vector-space helpers.

    Component d has shape cells[:d] + (cells[d]+1,) + cells[d+1:].  Samples on
    the two boundary slices of component d along axis d sit exactly on the
    wall; fields produced by this package keep them at zero.
    """

    __slots__ = ("components",)

    def __init__(self, components):
        self.components = tuple(np.asarray(c, dtype=float) for c in components)

    def copy(self) -> "VelocityField":
        return VelocityField(tuple(c.copy() for c in self.components))

    def __add__(self, other):
        return VelocityField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        return VelocityField(tuple(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, s: float):
        return VelocityField(tuple(s * a for a in self.components))

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def _face_shape(cells: tuple[int, ...], comp: int) -> tuple[int, ...]:
    return tuple(n + 1 if d == comp else n for d, n in enumerate(cells))


class Grid:
    """Discretized box with precomputed masks, index maps and operator matrices."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.dim = spec.dim
        self.cells = spec.cells
        self.lengths = spec.lengths
        self.h = spec.h
        self.volume = math.prod(self.h)
        self.cell_count = math.prod(self.cells)
        self.face_shapes = tuple(_face_shape(self.cells, c) for c in range(self.dim))
        self.n_faces = sum(math.prod(s) for s in self.face_shapes)

        # Index map from face arrays to the flat interior-unknown vector.
        # Boundary faces of component d along axis d carry index -1.
        self.dof_index = []
        offset = 0
        for c in range(self.dim):
            idx = -np.ones(self.face_shapes[c], dtype=np.int64)
            sl = [slice(None)] * self.dim
            sl[c] = slice(1, -1)
            interior_shape = tuple(
                n - 1 if d == c else n for d, n in enumerate(self.cells)
            )
            count = math.prod(interior_shape)
            idx[tuple(sl)] = np.arange(offset, offset + count).reshape(interior_shape)
            offset += count
            self.dof_index.append(idx)
        self.n_dof = offset

    # ------------------------------------------------------------------
    # packing between face arrays and the interior-unknown vector
    # ------------------------------------------------------------------

    def pack(self, field: VelocityField) -> np.ndarray:
        """Flatten the interior faces of `field` into a single vector."""
        parts = []
        for c in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[c] = slice(1, -1)
            parts.append(field.components[c][tuple(sl)].ravel())
        return np.concatenate(parts)

    def unpack(self, vec: np.ndarray) -> VelocityField:
        """Inverse of pack: boundary faces are restored as exact zeros."""
        comps = []
        pos = 0
        for c in range(self.dim):
            arr = np.zeros(self.face_shapes[c])
            sl = [slice(None)] * self.dim
            sl[c] = slice(1, -1)
            view_shape = arr[tuple(sl)].shape
            count = math.prod(view_shape)
            arr[tuple(sl)] = vec[pos : pos + count].reshape(view_shape)
            pos += count
            comps.append(arr)
        return VelocityField(comps)

    def zeros(self) -> VelocityField:
        return VelocityField(tuple(np.zeros(s) for s in self.face_shapes))

    # ------------------------------------------------------------------
    # inner products (uniform-volume quadrature)
    # ------------------------------------------------------------------

    def inner(self, u: VelocityField, v: VelocityField) -> float:
        acc = 0.0
        for a, b in zip(u.components, v.components):
            acc += float(np.vdot(a, b))
        return acc * self.volume

    def norm(self, u: VelocityField) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def inner_cells(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(np.vdot(p, q)) * self.volume

    def norm_cells(self, p: np.ndarray) -> float:
        return math.sqrt(max(self.inner_cells(p, p), 0.0))

    # ------------------------------------------------------------------
    # sparse operator matrices on the interior-unknown vector
    # ------------------------------------------------------------------

    @cached_property
    def cell_index(self) -> np.ndarray:
        return np.arange(self.cell_count, dtype=np.int64).reshape(self.cells)

    @cached_property
    def divergence_matrix(self) -> sp.csr_matrix:
        """Cells-by-unknowns matrix of the face-to-center divergence."""
        rows, cols, vals = [], [], []
        for c in range(self.dim):
            idx = self.dof_index[c]
            hi = 1.0 / self.h[c]
            lo_sl = [slice(None)] * self.dim
            hi_sl = [slice(None)] * self.dim
            lo_sl[c] = slice(0, -1)
            hi_sl[c] = slice(1, None)
            for sl, sgn in ((hi_sl, +hi), (lo_sl, -hi)):
                face_ids = idx[tuple(sl)].ravel()
                cell_ids = self.cell_index.ravel()
                keep = face_ids >= 0
                rows.append(cell_ids[keep])
                cols.append(face_ids[keep])
                vals.append(np.full(keep.sum(), sgn))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        m = sp.coo_matrix((vals, (rows, cols)), shape=(self.cell_count, self.n_dof))
        return m.tocsr()

    @cached_property
    def gradient_matrix(self) -> sp.csr_matrix:
        """Unknowns-by-cells matrix of the center-to-face gradient.

        Exactly the negative transpose of divergence_matrix, which is what
        makes the discrete integration-by-parts identity hold to round-off.
        """
        return (-self.divergence_matrix.T).tocsr()

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Componentwise vector Laplacian with the no-slip closures.

        Along its own axis a component sees the pinned zero wall value;
        along tangential axes the odd-extension ghost turns the end-row
        diagonal into -3/h^2.  Symmetric negative definite.
        """
        rows, cols, vals = [], [], []
        for c in range(self.dim):
            idx = self.dof_index[c]
            own = idx.ravel()
            keep = own >= 0
            own_ids = own[keep]
            diag = np.zeros(own_ids.size)
            for d in range(self.dim):
                h2 = 1.0 / self.h[d] ** 2
                n_d = idx.shape[d]
                coord = np.indices(idx.shape)[d].ravel()[keep]
                for step in (-1, +1):
                    nb_sl = [slice(None)] * self.dim
                    src_sl = [slice(None)] * self.dim
                    if step == +1:
                        src_sl[d] = slice(0, -1)
                        nb_sl[d] = slice(1, None)
                    else:
                        src_sl[d] = slice(1, None)
                        nb_sl[d] = slice(0, -1)
                    src_ids = idx[tuple(src_sl)].ravel()
                    nb_ids = idx[tuple(nb_sl)].ravel()
                    ok = (src_ids >= 0) & (nb_ids >= 0)
                    rows.append(src_ids[ok])
                    cols.append(nb_ids[ok])
                    vals.append(np.full(ok.sum(), h2))
                if d == c:
                    # wall value is part of the stencil (and equals zero),
                    # so the diagonal is the full -2/h^2 everywhere
                    diag += -2.0 * h2
                else:
                    # odd-extension ghost at the two tangential end rows
                    at_end = (coord == 0) | (coord == n_d - 1)
                    diag += np.where(at_end, -3.0 * h2, -2.0 * h2)
            rows.append(own_ids)
            cols.append(own_ids)
            vals.append(diag)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        m = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_dof, self.n_dof))
        return m.tocsr()

    @cached_property
    def neumann_matrix(self) -> sp.csr_matrix:
        """Cell-centered zero-flux Laplacian, assembled as D G."""
        return (self.divergence_matrix @ self.gradient_matrix).tocsr()

    @cached_property
    def _neumann_solver(self):
        """LU factorization of the bordered (mean-constrained) Neumann system."""
        n = self.cell_count
        ones = np.ones((n, 1))
        A = sp.bmat(
            [[self.neumann_matrix, sp.csc_matrix(ones)], [sp.csc_matrix(ones.T), None]],
            format="csc",
        )
        return spla.splu(A)

    def solve_neumann_cells(self, rhs: np.ndarray) -> np.ndarray:
        """Solve D G q = rhs with mean(q) = 0; rhs must already be mean-free."""
        b = np.concatenate([rhs.ravel(), [0.0]])
        sol = self._neumann_solver.solve(b)
        return sol[:-1].reshape(self.cells)


def build_grid(spec: GridSpec) -> Grid:
    """Validate a GridSpec and construct the Grid.

    Raises:
        ValueError: on unsupported dimension, too-coarse cell counts,
            or non-positive lengths.
    """
    if spec.dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {spec.dim}")
    if len(spec.cells) != spec.dim or len(spec.lengths) != spec.dim:
        raise ValueError("cells and lengths must each have one entry per axis")
    if any(int(n) != n or n < 8 for n in spec.cells):
        raise ValueError(f"every axis needs at least 8 cells, got {spec.cells}")
    if any(L <= 0 for L in spec.lengths):
        raise ValueError(f"lengths must be positive, got {spec.lengths}")
    return Grid(spec)
