"""Stencil forms of the staggered-grid operators.

These act directly on face/cell arrays and mirror the sparse matrices held by
Grid; the test suite checks the two realizations agree to round-off.  All
operators use the uniform-volume inner product from Grid, under which the
divergence and gradient are exact negative adjoints and the Laplacian is
symmetric.

Boundary closures:
  * a component along its own axis sees the stored wall value (zero for
    admissible fields), i.e. a homogeneous Dirichlet closure;
  * along tangential axes the ghost sample is the odd extension -w[first],
    which places the zero of the linear interpolant exactly on the wall;
  * the output of apply_laplacian is masked to zero on wall faces, so the
    result is again an admissible (wall-pinned) field.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, VelocityField


def _axsl(dim: int, axis: int, sl: slice) -> tuple:
    out = [slice(None)] * dim
    out[axis] = sl
    return tuple(out)


def divergence(field: VelocityField, grid: Grid) -> np.ndarray:
    """Face-to-center divergence; returns a cell array."""
    out = np.zeros(grid.cells)
    for d in range(grid.dim):
        w = field.components[d]
        hi = w[_axsl(grid.dim, d, slice(1, None))]
        lo = w[_axsl(grid.dim, d, slice(0, -1))]
        out += (hi - lo) / grid.h[d]
    return out


def gradient(q: np.ndarray, grid: Grid) -> VelocityField:
    """Center-to-face gradient with zero wall faces (zero-flux convention)."""
    comps = []
    for d in range(grid.dim):
        arr = np.zeros(grid.face_shapes[d])
        hi = q[_axsl(grid.dim, d, slice(1, None))]
        lo = q[_axsl(grid.dim, d, slice(0, -1))]
        arr[_axsl(grid.dim, d, slice(1, -1))] = (hi - lo) / grid.h[d]
        comps.append(arr)
    return VelocityField(comps)


def apply_laplacian(field: VelocityField, grid: Grid) -> VelocityField:
    """Componentwise vector Laplacian with no-slip closures, masked output."""
    comps = []
    for c in range(grid.dim):
        w = field.components[c]
        out = np.zeros_like(w)
        for d in range(grid.dim):
            h2 = grid.h[d] ** 2
            if d == c:
                mid = w[_axsl(grid.dim, d, slice(1, -1))]
                hi = w[_axsl(grid.dim, d, slice(2, None))]
                lo = w[_axsl(grid.dim, d, slice(0, -2))]
                out[_axsl(grid.dim, d, slice(1, -1))] += (hi - 2.0 * mid + lo) / h2
            else:
                mid = w[_axsl(grid.dim, d, slice(1, -1))]
                hi = w[_axsl(grid.dim, d, slice(2, None))]
                lo = w[_axsl(grid.dim, d, slice(0, -2))]
                out[_axsl(grid.dim, d, slice(1, -1))] += (hi - 2.0 * mid + lo) / h2
                first = w[_axsl(grid.dim, d, slice(0, 1))]
                second = w[_axsl(grid.dim, d, slice(1, 2))]
                out[_axsl(grid.dim, d, slice(0, 1))] += (second - 3.0 * first) / h2
                last = w[_axsl(grid.dim, d, slice(-1, None))]
                prev = w[_axsl(grid.dim, d, slice(-2, -1))]
                out[_axsl(grid.dim, d, slice(-1, None))] += (prev - 3.0 * last) / h2
        # mask wall faces so the result is again admissible
        out[_axsl(grid.dim, c, slice(0, 1))] = 0.0
        out[_axsl(grid.dim, c, slice(-1, None))] = 0.0
        comps.append(out)
    return VelocityField(comps)


def neumann_laplacian_cells(q: np.ndarray, grid: Grid) -> np.ndarray:
    """Cell-centered Laplacian with zero-flux walls (stencil form of D G)."""
    out = np.zeros_like(q)
    for d in range(grid.dim):
        h2 = grid.h[d] ** 2
        mid = q[_axsl(grid.dim, d, slice(1, -1))]
        hi = q[_axsl(grid.dim, d, slice(2, None))]
        lo = q[_axsl(grid.dim, d, slice(0, -2))]
        out[_axsl(grid.dim, d, slice(1, -1))] += (hi - 2.0 * mid + lo) / h2
        first = q[_axsl(grid.dim, d, slice(0, 1))]
        second = q[_axsl(grid.dim, d, slice(1, 2))]
        out[_axsl(grid.dim, d, slice(0, 1))] += (second - first) / h2
        last = q[_axsl(grid.dim, d, slice(-1, None))]
        prev = q[_axsl(grid.dim, d, slice(-2, -1))]
        out[_axsl(grid.dim, d, slice(-1, None))] += (prev - last) / h2
    return out


@dataclass(frozen=True)
class PoissonResult:
    """Zero-mean Neumann Poisson solution plus solve bookkeeping.

    compat_correction: magnitude of the constant removed from the right-hand
        side to restore exact discrete solvability.
    residual: relative algebraic residual of the linear solve.
    """

    q: np.ndarray
    compat_correction: float
    residual: float


def solve_neumann_poisson(
    rhs: np.ndarray,
    flux: VelocityField | None,
    grid: Grid,
    tol_compat: float = 1e-6,
    tol_solve: float = 1e-10,
) -> PoissonResult:
    """Solve the cell-centered Poisson problem with prescribed wall flux.

    Finds the zero-mean q with D Ghat q = rhs, where Ghat agrees with the
    interior gradient and takes the wall-face values of `flux` as normal
    derivative data.  Compatibility demands the volume sum of rhs equal the
    boundary flux sum; any excess is subtracted as a constant (reported via
    compat_correction, with a warning past tol_compat).

    Raises:
        RuntimeError: if the factorized solve leaves a residual above tol_solve.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != tuple(grid.cells):
        raise ValueError(f"rhs shape {rhs.shape} does not match cells {grid.cells}")
    rhs_eff = rhs.copy()
    if flux is not None:
        rhs_eff -= divergence(_wall_only(flux, grid), grid)
    mean = float(rhs_eff.mean())
    compat = abs(mean) * grid.volume * grid.cell_count
    scale = grid.norm_cells(rhs) + (grid.norm(flux) if flux is not None else 0.0)
    if scale > 0 and compat > tol_compat * scale:
        warnings.warn(
            f"Neumann data violates compatibility by {compat:.3e}; "
            "a constant was subtracted to restore solvability",
            stacklevel=2,
        )
    rhs0 = rhs_eff - mean
    q = grid.solve_neumann_cells(rhs0)
    applied = grid.neumann_matrix @ q.ravel()
    denom = float(np.linalg.norm(rhs0.ravel()))
    residual = float(np.linalg.norm(applied - rhs0.ravel())) / (denom if denom > 0 else 1.0)
    if residual > tol_solve:
        raise RuntimeError(f"Neumann solve residual {residual:.3e} exceeds {tol_solve:.1e}")
    return PoissonResult(q=q, compat_correction=compat, residual=residual)


def _wall_only(field: VelocityField, grid: Grid) -> VelocityField:
    """Keep only the wall-face samples of each component (zeros elsewhere)."""
    comps = []
    for c in range(grid.dim):
        arr = np.zeros(grid.face_shapes[c])
        src = field.components[c]
        arr[_axsl(grid.dim, c, slice(0, 1))] = src[_axsl(grid.dim, c, slice(0, 1))]
        arr[_axsl(grid.dim, c, slice(-1, None))] = src[_axsl(grid.dim, c, slice(-1, None))]
        comps.append(arr)
    return VelocityField(comps)


def wall_flux_field(grid: Grid, values: dict[tuple[int, int], np.ndarray]) -> VelocityField:
    """Assemble a flux carrier field from per-wall normal-derivative data.

    `values` maps (axis, side) with side in {0, -1} to an array shaped like
    the wall slice of that component.
    """
    f = grid.zeros()
    for (axis, side), data in values.items():
        sl = _axsl(grid.dim, axis, slice(0, 1) if side == 0 else slice(-1, None))
        f.components[axis][sl] = np.asarray(data, dtype=float).reshape(
            f.components[axis][sl].shape
        )
    return f


def advect_skew(adv: VelocityField, w: VelocityField, grid: Grid) -> VelocityField:
    """Skew-symmetric transport of w by the advecting field adv.

    Implements the average of divergence and advective forms through
    face-interpolated mass fluxes; for a fixed advecting field the resulting
    operator is exactly antisymmetric in the discrete inner product, so
    (advect_skew(u, w), w) vanishes to round-off whenever w is wall-pinned.
    Consistent with (u . grad) w + (1/2) (div u) w at second order.
    """
    dim = grid.dim
    out_comps = []
    for c in range(dim):
        wc = w.components[c]
        out = np.zeros_like(wc)
        interior = _axsl(dim, c, slice(1, -1))
        for d in range(dim):
            hd = grid.h[d]
            if d == c:
                # mass flux at cell centers along the component's own axis
                ac = adv.components[c]
                F = 0.5 * (
                    ac[_axsl(dim, c, slice(0, -1))] + ac[_axsl(dim, c, slice(1, None))]
                )
                w_hi = wc[_axsl(dim, c, slice(2, None))]
                w_lo = wc[_axsl(dim, c, slice(0, -2))]
                F_hi = F[_axsl(dim, c, slice(1, None))]
                F_lo = F[_axsl(dim, c, slice(0, -1))]
                out[interior] += (F_hi * w_hi - F_lo * w_lo) / (2.0 * hd)
            else:
                # mass flux at the edge between tangential neighbors:
                # average of the two d-faces straddling this c-face
                ad = adv.components[d]
                lo_c = ad[_axsl(dim, c, slice(0, -1))]
                hi_c = ad[_axsl(dim, c, slice(1, None))]
                F_edge = 0.5 * (lo_c + hi_c)  # indexed like (c-interior, d-faces)
                F_hi = F_edge[_axsl(dim, d, slice(1, None))]
                F_lo = F_edge[_axsl(dim, d, slice(0, -1))]
                w_in = wc[interior]
                w_hi = np.zeros_like(w_in)
                w_lo = np.zeros_like(w_in)
                w_hi[_axsl(dim, d, slice(0, -1))] = w_in[_axsl(dim, d, slice(1, None))]
                w_lo[_axsl(dim, d, slice(1, None))] = w_in[_axsl(dim, d, slice(0, -1))]
                # zero beyond the tangential ends: the wall-side mass flux is
                # the advecting normal velocity on the wall, itself zero for
                # admissible adv, so those terms carry no weight anyway
                out[interior] += (F_hi * w_hi - F_lo * w_lo) / (2.0 * hd)
        out[_axsl(dim, c, slice(0, 1))] = 0.0
        out[_axsl(dim, c, slice(-1, None))] = 0.0
        out_comps.append(out)
    return VelocityField(out_comps)
