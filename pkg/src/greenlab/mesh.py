"""Uniform space-time meshes, discrete trajectories, and energy norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .problem import Domain


def parabolic_distance(X, Y, lengths=None) -> float:
    """max(sqrt|t-s|, |x-y|); with ``lengths`` the spatial gap wraps on the torus."""
    t, x = X[0], np.atleast_1d(np.asarray(X[1], dtype=float))
    s, y = Y[0], np.atleast_1d(np.asarray(Y[1], dtype=float))
    dx = x - y
    if lengths is not None:
        L = np.asarray(lengths, dtype=float)
        dx = dx - L * np.round(dx / L)
    return max(math.sqrt(abs(t - s)), float(np.linalg.norm(dx)))


@dataclass(frozen=True)
class Mesh:
    """Cell-centered uniform grid over a box, plus an arithmetic time grid.

    In dirichlet mode the outermost cell layer is pinned to zero (the
    discrete analogue of vanishing boundary values); in periodic mode all
    indices wrap.  ``cells`` needs at least 4 cells per axis.
    """

    domain: Domain
    cells: tuple
    tau: float
    t0: float
    steps: int

    def __post_init__(self):
        if len(self.cells) != self.domain.n:
            raise ConfigError("cells/domain dimension mismatch")
        if any(c < 4 for c in self.cells):
            raise ConfigError("need at least 4 cells per axis")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.steps < 1:
            raise ConfigError("need at least one time step")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def boundary_mode(self) -> str:
        return self.domain.boundary_mode

    @property
    def periodic(self) -> bool:
        return self.domain.periodic

    @cached_property
    def h(self) -> np.ndarray:
        return self.domain.lengths / np.asarray(self.cells, dtype=float)

    @cached_property
    def volume(self) -> float:
        """Cell volume (the weight of the discrete inner product)."""
        return float(np.prod(self.h))

    @cached_property
    def ncells(self) -> int:
        return int(np.prod(self.cells))

    @cached_property
    def times(self) -> np.ndarray:
        return self.t0 + self.tau * np.arange(self.steps + 1)

    def axis_centers(self, ax: int) -> np.ndarray:
        lo = self.domain.lo[ax]
        return lo + (np.arange(self.cells[ax]) + 0.5) * self.h[ax]

    @cached_property
    def centers(self) -> np.ndarray:
        """All cell centers, shape (ncells, n), C-order over the index grid."""
        axes = [self.axis_centers(ax) for ax in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """Flat boolean mask of evolving cells (all cells when periodic)."""
        if self.periodic:
            return np.ones(self.ncells, dtype=bool)
        mask = np.ones(self.cells, dtype=bool)
        for ax in range(self.n):
            sl = [slice(None)] * self.n
            sl[ax] = 0
            mask[tuple(sl)] = False
            sl[ax] = self.cells[ax] - 1
            mask[tuple(sl)] = False
        return mask.ravel()

    def cell_index(self, x, tol: float = 1e-9) -> int:
        """Flat index of the cell whose center is x (must be on the grid)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = []
        for ax in range(self.n):
            pos = (x[ax] - self.domain.lo[ax]) / self.h[ax] - 0.5
            k = int(round(pos))
            if self.periodic:
                k %= self.cells[ax]
            if not 0 <= k < self.cells[ax] or abs(pos - round(pos)) > tol:
                raise ConfigError(f"point {x} is not a grid cell center")
            idx.append(k)
        return int(np.ravel_multi_index(idx, self.cells))

    def time_index(self, t: float, tol: float = 1e-9) -> int:
        pos = (t - self.t0) / self.tau
        k = int(round(pos))
        if not 0 <= k <= self.steps or abs(pos - k) > tol * max(1.0, abs(pos)):
            raise ConfigError(f"time {t} is not on the mesh time grid")
        return k

    def spatial_gap(self, x, y) -> float:
        dx = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(y, dtype=float))
        if self.periodic:
            L = self.domain.lengths
            dx = dx - L * np.round(dx / L)
        return float(np.linalg.norm(dx))

    def pdist(self, X, Y) -> float:
        lengths = self.domain.lengths if self.periodic else None
        return parabolic_distance(X, Y, lengths=lengths)

    def ball_cells(self, y, radius: float) -> np.ndarray:
        """Flat indices of cells whose centers lie strictly inside the ball.

        Dirichlet mode intersects with the evolving interior (clipping the
        ball at the boundary is allowed).
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        gaps = self.centers - y[None, :]
        if self.periodic:
            L = self.domain.lengths
            gaps = gaps - L[None, :] * np.round(gaps / L[None, :])
        dist = np.linalg.norm(gaps, axis=1)
        mask = dist < radius
        if not self.periodic:
            mask &= self.interior_mask
        return np.nonzero(mask)[0]

    def face_positions(self, ax: int):
        """(points, left_flat, right_flat) for the faces normal to axis ax.

        Periodic meshes include the wrap face; dirichlet meshes only list
        interior faces (both neighbor cells in-grid).
        """
        M = self.cells[ax]
        lo_face = 0 if self.periodic else 1
        face_ids = np.arange(lo_face, M)
        axis_grids = []
        for a2 in range(self.n):
            if a2 == ax:
                axis_grids.append(self.domain.lo[ax] + face_ids * self.h[ax])
            else:
                axis_grids.append(self.axis_centers(a2))
        grids = np.meshgrid(*axis_grids, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)

        idx_axes = [np.arange(m) for m in self.cells]
        idx_axes[ax] = face_ids
        igrids = np.meshgrid(*idx_axes, indexing="ij")
        right = list(g.ravel() for g in igrids)
        left = [r.copy() for r in right]
        left[ax] = (left[ax] - 1) % M if self.periodic else left[ax] - 1
        left_flat = np.ravel_multi_index(left, self.cells)
        right_flat = np.ravel_multi_index(right, self.cells)
        return pts, left_flat, right_flat

    def shift_flat(self, flat: np.ndarray, ax: int, by: int):
        """Shift flat cell indices along an axis; returns (shifted, valid)."""
        idx = np.array(np.unravel_index(flat, self.cells))
        idx[ax] += by
        if self.periodic:
            idx[ax] %= self.cells[ax]
            valid = np.ones(flat.shape, dtype=bool)
        else:
            valid = (idx[ax] >= 0) & (idx[ax] < self.cells[ax])
            idx[ax] = np.clip(idx[ax], 0, self.cells[ax] - 1)
        return np.ravel_multi_index(idx, self.cells), valid


@dataclass
class Trajectory:
    """Per-slice vector fields u(t_m) over a window of the mesh time grid.

    ``values`` has shape (nslices, N, ncells); slice m lives at time
    ``mesh.times[i0 + m]``.  Dirichlet trajectories vanish on the pinned
    boundary layer.
    """

    mesh: Mesh
    i0: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[2] != self.mesh.ncells:
            raise ConfigError("trajectory values must have shape (slices, N, ncells)")
        if self.i0 < 0 or self.i0 + self.values.shape[0] - 1 > self.mesh.steps:
            raise ConfigError("trajectory window exceeds the mesh time grid")

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def nslices(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.mesh.times[self.i0:self.i0 + self.nslices]

    @property
    def window(self):
        t = self.times
        return float(t[0]), float(t[-1])

    def slice_at(self, t: float) -> np.ndarray:
        k = self.mesh.time_index(t) - self.i0
        if not 0 <= k < self.nslices:
            raise ConfigError(f"time {t} outside the trajectory window")
        return self.values[k]

    def slice_l2(self, m: int) -> float:
        """Cell-volume weighted L2 norm of slice m."""
        return math.sqrt(self.mesh.volume * float(np.sum(self.values[m] ** 2)))


def dirichlet_energy(mesh: Mesh, slc: np.ndarray) -> float:
    """Sum over faces of |face difference / h|^2 times cell volume.

    The face set matches the assembled operator: wrap faces in periodic
    mode, interior faces only in dirichlet mode (pinned cells carry zeros).
    """
    slc = np.asarray(slc, dtype=float)
    total = 0.0
    for ax in range(mesh.n):
        _, left, right = mesh.face_positions(ax)
        diff = (slc[:, right] - slc[:, left]) / mesh.h[ax]
        total += float(np.sum(diff ** 2)) * mesh.volume
    return total


@dataclass(frozen=True)
class EnergyNorm:
    triple: float
    grad_l2: float
    sup_l2: float


def energy_norm(traj: Trajectory) -> EnergyNorm:
    """Discrete V2 norm: trapezoid-in-time Dirichlet energy and sup slice L2."""
    if traj.nslices < 1:
        raise ConfigError("empty trajectory")
    mesh = traj.mesh
    energies = np.array([dirichlet_energy(mesh, traj.values[m]) for m in range(traj.nslices)])
    if traj.nslices == 1:
        grad_sq = 0.0
    else:
        grad_sq = float(np.trapezoid(energies, dx=mesh.tau))
    sup = max(traj.slice_l2(m) for m in range(traj.nslices))
    grad = math.sqrt(grad_sq)
    return EnergyNorm(math.sqrt(grad_sq + sup * sup), grad, sup)
