"""Divergence-free subspace, Leray projection, and the viscous mode basis.

The discrete solenoidal subspace is built exactly: in 2-D as the image of a
curl applied to interior vertex stream values (each column's divergence
telescopes to zero in exact arithmetic), in 3-D as an orthonormal kernel of
the divergence matrix from a rank-revealing factorization.  Bases are
orthonormalized under the volume-weighted inner product, so mode
coefficients are plain weighted dot products.

The mode basis diagonalizes the projected (negative) Laplacian restricted to
the solenoidal subspace.  Eigenpairs are expensive relative to everything
else here, so they can be persisted to a small binary container and reused;
the container is versioned by magic bytes and guarded by a content hash.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import Grid, VelocityField
from .operators import divergence, gradient, solve_neumann_poisson

_MAGIC = b"BOXEIGV1"


@dataclass(frozen=True)
class DivFreeBasis:
    grid: Grid
    matrix: np.ndarray  # n_dof x n_free, orthonormal columns (volume-weighted)

    @property
    def n_free(self) -> int:
        return self.matrix.shape[1]

    def field(self, j: int) -> VelocityField:
        return self.grid.unpack(self.matrix[:, j])


@dataclass(frozen=True)
class StokesSpectrum:
    grid: Grid
    lambdas: np.ndarray  # (N,), ascending, strictly positive
    modes: np.ndarray  # n_dof x N, volume-weighted orthonormal columns

    @property
    def n_modes(self) -> int:
        return self.lambdas.shape[0]

    def eigenfield(self, j: int) -> VelocityField:
        return self.grid.unpack(self.modes[:, j])

    def to_coeffs(self, v: VelocityField) -> np.ndarray:
        return self.grid.volume * (self.modes.T @ self.grid.pack(v))

    def from_coeffs(self, a: np.ndarray) -> VelocityField:
        return self.grid.unpack(self.modes @ a)

    def head(self, n: int) -> "StokesSpectrum":
        """The leading-n restriction; useful when a run should resolve (and
        be stiff on) only the comparison span."""
        if not 1 <= n <= self.n_modes:
            raise ValueError(f"head size must be in [1, {self.n_modes}]")
        return StokesSpectrum(self.grid, self.lambdas[:n], self.modes[:, :n])


def _curl_basis_2d(grid: Grid) -> sp.csr_matrix:
    """Columns: curl of a unit stream value at each interior vertex.

    The face samples of each column telescope under the divergence stencil,
    so every column is divergence-free in exact arithmetic and wall-normal
    samples vanish because boundary vertices carry no stream value.
    """
    nx, ny = grid.cells
    hx, hy = grid.h
    ii, jj = np.meshgrid(np.arange(1, nx), np.arange(1, ny), indexing="ij")
    col = ((ii - 1) * (ny - 1) + (jj - 1)).ravel()

    rows, cols, vals = [], [], []

    def put(dof, c, v):
        rows.append(dof.ravel())
        cols.append(c)
        vals.append(np.full(c.shape, v))

    dofx, dofy = grid.dof_index
    # x-velocity at face (i, j-1): +1/hy ; at face (i, j): -1/hy
    put(dofx[ii, jj - 1], col, 1.0 / hy)
    put(dofx[ii, jj], col, -1.0 / hy)
    # y-velocity at face (i-1, j): -1/hx ; at face (i, j): +1/hx
    put(dofy[ii - 1, jj], col, -1.0 / hx)
    put(dofy[ii, jj], col, 1.0 / hx)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if np.any(rows < 0):
        raise RuntimeError("stream-curl column touched a wall-normal face")
    n_cols = (nx - 1) * (ny - 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_dof, n_cols))


def build_divfree_basis(grid: Grid) -> DivFreeBasis:
    expected = grid.n_dof - (grid.cell_count - 1)
    if grid.spec.dim == 2:
        raw = _curl_basis_2d(grid)
        if raw.shape[1] != expected:
            raise RuntimeError(
                f"divergence-free dimension {raw.shape[1]} != expected {expected}"
            )
        gram = grid.volume * (raw.T @ raw).toarray()
        chol = sla.cholesky(gram, lower=False)
        z = sla.solve_triangular(chol, raw.toarray().T, trans="T", lower=False).T
    else:
        dense_div = grid.divergence_matrix.toarray()
        kernel = sla.null_space(dense_div)
        if kernel.shape[1] != expected:
            raise RuntimeError(
                f"divergence-free dimension {kernel.shape[1]} != expected {expected}"
            )
        z = kernel / np.sqrt(grid.volume)
    return DivFreeBasis(grid=grid, matrix=np.ascontiguousarray(z))


def leray_project(v: VelocityField, grid: Grid) -> VelocityField:
    """Remove the gradient part: v - grad(q) with div grad q = div v.

    Input fields must carry zero wall-normal samples (anything produced by
    unpack or the operators here does).
    """
    res = solve_neumann_poisson(divergence(v, grid), v, grid)
    return v - gradient(res.q, grid)


def compute_stokes_spectrum(
    grid: Grid, basis: DivFreeBasis, n_modes: int | None = None
) -> StokesSpectrum:
    n_free = basis.n_free
    if n_modes is None:
        n_modes = n_free
    if not 1 <= n_modes <= n_free:
        raise ValueError(f"n_modes must be in [1, {n_free}], got {n_modes}")
    z = basis.matrix
    s = grid.volume * (z.T @ (-(grid.laplacian_matrix @ z)))
    s = 0.5 * (s + s.T)
    lam, w = sla.eigh(s)
    if lam[0] <= 0.0:
        raise RuntimeError(f"nonpositive leading eigenvalue {lam[0]!r}")
    lam = lam[:n_modes]
    modes = z @ w[:, :n_modes]
    # deterministic sign: largest-magnitude entry of each mode positive
    pick = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pick, np.arange(n_modes)])
    signs[signs == 0] = 1.0
    modes = modes * signs
    return StokesSpectrum(
        grid=grid, lambdas=np.ascontiguousarray(lam), modes=np.ascontiguousarray(modes)
    )


def _header_bytes(grid: Grid, n_modes: int) -> bytes:
    spec = grid.spec
    out = [struct.pack("<I", spec.dim)]
    out.append(struct.pack(f"<{spec.dim}I", *spec.cells))
    out.append(struct.pack(f"<{spec.dim}d", *spec.lengths))
    out.append(struct.pack("<Q", n_modes))
    return b"".join(out)


def spectrum_cache_io(
    path,
    mode: str,
    spectrum: StokesSpectrum | None = None,
    grid: Grid | None = None,
) -> StokesSpectrum | None:
    """Persist or restore a spectrum; round trips are bit-exact.

    Layout: magic, header (dim, cells, lengths, count), sha256 of the
    payload, payload = eigenvalues then per-mode fields, all little-endian
    float64.  Loading validates the header against `grid` and the hash
    against the payload.
    """
    if mode == "save":
        if spectrum is None:
            raise ValueError("save requires a spectrum")
        lam = np.asarray(spectrum.lambdas, dtype="<f8")
        fields = np.asarray(spectrum.modes, dtype="<f8", order="F")
        payload = lam.tobytes() + fields.tobytes(order="F")
        blob = (
            _MAGIC
            + _header_bytes(spectrum.grid, spectrum.n_modes)
            + hashlib.sha256(payload).digest()
            + payload
        )
        with open(path, "wb") as fh:
            fh.write(blob)
        return None
    if mode != "load":
        raise ValueError(f"mode must be 'save' or 'load', got {mode!r}")
    if grid is None:
        raise ValueError("load requires a grid")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a spectrum cache file (bad magic)")
    off = len(_MAGIC)
    (dim,) = struct.unpack_from("<I", blob, off)
    off += 4
    cells = struct.unpack_from(f"<{dim}I", blob, off)
    off += 4 * dim
    lengths = struct.unpack_from(f"<{dim}d", blob, off)
    off += 8 * dim
    (n_modes,) = struct.unpack_from("<Q", blob, off)
    off += 8
    spec = grid.spec
    if dim != spec.dim or cells != spec.cells or lengths != spec.lengths:
        raise ValueError(
            f"cache header {dim}/{cells}/{lengths} does not match grid "
            f"{spec.dim}/{spec.cells}/{spec.lengths}"
        )
    digest = blob[off : off + 32]
    off += 32
    payload = blob[off:]
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError("spectrum cache is corrupted (hash mismatch)")
    lam = np.frombuffer(payload, dtype="<f8", count=n_modes)
    modes = np.frombuffer(payload, dtype="<f8", offset=8 * n_modes)
    modes = modes.reshape((grid.n_dof, n_modes), order="F")
    return StokesSpectrum(
        grid=grid, lambdas=lam.copy(), modes=np.ascontiguousarray(modes)
    )
