"""Averaged Green's matrices, propagators, and representation formulas.

A Green column with pole Y = (s, y) and component k is the forward solve
whose source is the normalized cell indicator of the backward parabolic
cylinder of radius rho at Y (cell-counted measure), started from zero at
s - rho^2 and extended by zero below.  The transpose column mirrors this
with the adjoint solver on the forward cylinder.  Discrete cylinder
conventions (fixed by the exact duality pairing at theta = 1):

* a backward ("minus") cylinder covers the time slabs [t_m, t_{m+1}]
  inside (s - rho^2, s]; sources and averages attach to the slab's early
  end t_m;
* a forward ("plus") cylinder covers slabs inside [t, t + sigma^2);
  sources and averages attach to the slab's late end t_{m+1}.

With these conventions the averaged duality identity holds to solver
roundoff, not just to discretization accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mesh import Mesh, Trajectory
from .problem import OperatorSpec
from .solver import ThetaScheme, project_slice, solve_backward, solve_forward

GREEN_THETA = 1.0  # Green objects are built with the implicit Euler scheme


def heat_kernel(n: int, t: float, r) -> np.ndarray:
    """Free-space Gaussian kernel (4 pi t)^{-n/2} exp(-r^2 / 4t)."""
    r = np.asarray(r, dtype=float)
    if t <= 0:
        return np.zeros_like(r)
    return (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-(r ** 2) / (4.0 * t))


def wrapped_heat_kernel(n: int, t: float, dx, lengths, images: int = 6) -> np.ndarray:
    """Torus heat kernel: image sum of the free kernel over lattice shifts."""
    dx = np.atleast_2d(np.asarray(dx, dtype=float))
    L = np.asarray(lengths, dtype=float)
    shifts = np.arange(-images, images + 1)
    if n == 1:
        d = dx[:, 0][:, None] + shifts[None, :] * L[0]
        return heat_kernel(1, t, np.abs(d)).sum(axis=1)
    out = np.zeros(dx.shape[0])
    for sx in shifts:
        for sy in shifts:
            d = dx + np.array([sx * L[0], sy * L[1]])
            out += heat_kernel(2, t, np.linalg.norm(d, axis=1))
    return out


# ----------------------------------------------------------------------
# mollifier geometry
# ----------------------------------------------------------------------


def _slab_count(mesh: Mesh, radius: float) -> int:
    return int(math.floor(radius * radius / mesh.tau * (1 + 1e-12) + 1e-12))


def _check_resolvable(mesh: Mesh, radius: float):
    hmax = float(np.max(mesh.h))
    if radius < 2.0 * hmax or radius * radius < 4.0 * mesh.tau:
        raise ConfigError(
            f"mollifier radius {radius} below resolution: need rho >= 2*max(h, sqrt(tau))")


def _pole_indices(mesh: Mesh, pole):
    s, y = pole
    it = mesh.time_index(float(s))
    ic = mesh.cell_index(y)
    if not mesh.periodic and not mesh.interior_mask[ic]:
        raise ConfigError("pole sits on the pinned dirichlet boundary layer")
    return it, ic


def _mollifier(mesh: Mesh, N: int, y, radius: float, k: int) -> np.ndarray:
    """Flat source slice: normalized indicator of the rho-ball, component k."""
    ball = mesh.ball_cells(y, radius)
    if len(ball) == 0:
        raise ConfigError("mollifier ball contains no cells")
    nslab = _slab_count(mesh, radius)
    c = 1.0 / (nslab * mesh.tau * len(ball) * mesh.volume)
    g = np.zeros((N, mesh.ncells))
    g[k - 1, ball] = c
    return g.ravel()


@dataclass
class GreenColumn:
    """One sampled column of an averaged Green's matrix.

    ``field`` spans [s - rho^2, T] for forward columns (zero-extended below)
    and [S, t + sigma^2] for transpose columns (zero-extended above).
    ``k`` is the 1-based source component; rho = 0 marks an extrapolated
    column, whose field starts exactly at the pole time.
    """

    spec: OperatorSpec
    mesh: Mesh
    pole: tuple
    k: int
    rho: float
    field: Trajectory
    direction: str = "forward"

    @property
    def N(self) -> int:
        return self.field.N

    def value_at(self, t: float, x) -> np.ndarray:
        """Column vector at (t, x); applies the zero extension exactly."""
        lo, hi = self.field.window
        eps = 1e-12 * max(1.0, abs(lo), abs(hi))
        if self.direction == "forward" and t < lo - eps:
            return np.zeros(self.N)
        if self.direction == "backward" and t > hi + eps:
            return np.zeros(self.N)
        return self.field.slice_at(t)[:, self.mesh.cell_index(x)].copy()

    def padded_values(self) -> np.ndarray:
        """Values over the whole mesh window with the zero extension applied."""
        full = np.zeros((self.mesh.steps + 1, self.N, self.mesh.ncells))
        full[self.field.i0:self.field.i0 + self.field.nslices] = self.field.values
        return full


def averaged_green_column(spec: OperatorSpec, mesh: Mesh, Y, k: int, rho: float,
                          T: float) -> GreenColumn:
    """Forward solve with the normalized minus-cylinder indicator source.

    Y = (s, y) must sit on the grid; the mesh window must reach down to
    s - rho^2 (time clipping is an error, spatial clipping at a dirichlet
    boundary is allowed).
    """
    _check_resolvable(mesh, rho)
    if not 1 <= k <= spec.coeffs.N:
        raise ConfigError(f"component k={k} outside 1..{spec.coeffs.N}")
    s, y = float(Y[0]), Y[1]
    i_pole, _ = _pole_indices(mesh, Y)
    nslab = _slab_count(mesh, rho)
    i_start = i_pole - nslab
    if i_start < 0:
        raise ConfigError("mesh window clips the mollifier below s - rho^2")
    g = _mollifier(mesh, spec.coeffs.N, y, rho, k)
    active = range(i_start, i_pole)

    def src(m):
        return g if m in active else None

    traj = solve_forward(spec, mesh, None, None, float(mesh.times[i_start]), T,
                         theta=GREEN_THETA, slab_source=src)
    return GreenColumn(spec, mesh, (s, np.atleast_1d(np.asarray(y, dtype=float))),
                       k, rho, traj, "forward")


def transpose_green_column(spec: OperatorSpec, mesh: Mesh, X, k: int, sigma: float,
                           S: float) -> GreenColumn:
    """Adjoint solve with the plus-cylinder indicator source (mirror image)."""
    _check_resolvable(mesh, sigma)
    if not 1 <= k <= spec.coeffs.N:
        raise ConfigError(f"component k={k} outside 1..{spec.coeffs.N}")
    t, x = float(X[0]), X[1]
    i_pole, _ = _pole_indices(mesh, X)
    nslab = _slab_count(mesh, sigma)
    i_end = i_pole + nslab
    if i_end > mesh.steps:
        raise ConfigError("mesh window clips the mollifier above t + sigma^2")
    q = _mollifier(mesh, spec.coeffs.N, x, sigma, k)
    active = range(i_pole, i_end)

    def src(m):
        return q if m in active else None

    traj = solve_backward(spec, mesh, None, None, float(mesh.times[i_end]), S,
                          theta=GREEN_THETA, slab_source=src)
    return GreenColumn(spec, mesh, (t, np.atleast_1d(np.asarray(x, dtype=float))),
                       k, sigma, traj, "backward")


def cylinder_average(traj: Trajectory, pole, radius: float, kind: str) -> np.ndarray:
    """Cell-and-slab average of a trajectory over a discrete cylinder.

    kind "minus" averages the slabs inside (s - r^2, s] at their early
    ends; kind "plus" averages the slabs inside [s, s + r^2) at their late
    ends, matching the source conventions of the Green columns.
    """
    mesh = traj.mesh
    s = float(pole[0])
    ip = mesh.time_index(s)
    nslab = _slab_count(mesh, radius)
    ball = mesh.ball_cells(pole[1], radius)
    if kind == "minus":
        idx = range(ip - nslab, ip)
    elif kind == "plus":
        idx = range(ip + 1, ip + nslab + 1)
    else:
        raise ConfigError("kind must be 'minus' or 'plus'")
    local = [m - traj.i0 for m in idx]
    if not local or local[0] < 0 or local[-1] >= traj.nslices:
        raise ConfigError("cylinder lies outside the trajectory window")
    vals = traj.values[local][:, :, ball]
    return vals.mean(axis=(0, 2))


# ----------------------------------------------------------------------
# propagators
# ----------------------------------------------------------------------

PROPAGATOR_CAP = 4000


@dataclass
class Propagator:
    """Dense one-window solution operator P(t, s) of the homogeneous scheme."""

    mesh: Mesh
    s: float
    t: float
    P: np.ndarray
    N: int

    def green_block(self, x_cell: int, y_cell: int) -> np.ndarray:
        """N x N Green sample: P entries divided by the cell volume."""
        C = self.mesh.ncells
        idx_r = [i * C + x_cell for i in range(self.N)]
        idx_c = [j * C + y_cell for j in range(self.N)]
        return self.P[np.ix_(idx_r, idx_c)] / self.mesh.volume

    def row_sums(self) -> np.ndarray:
        """For each (i, x): sum_y of the Green block row times volume -> (i, x, j)."""
        C = self.mesh.ncells
        R = self.P.reshape(self.N, C, self.N, C).sum(axis=3)
        return R

    def apply(self, g: np.ndarray) -> np.ndarray:
        return (self.P @ np.asarray(g, dtype=float).ravel()).reshape(self.N, -1)


def propagator(spec: OperatorSpec, mesh: Mesh, s: float, t: float,
               theta: float = GREEN_THETA, cap: int = PROPAGATOR_CAP,
               scheme: ThetaScheme | None = None) -> Propagator:
    """Assemble P(t, s) by composing the per-step dense solution operators."""
    scheme = scheme or ThetaScheme(mesh, spec, theta)
    if scheme.nn > cap:
        raise ConfigError(f"propagator size {scheme.nn} exceeds cap {cap}")
    i0, i1 = mesh.time_index(s), mesh.time_index(t)
    if i1 <= i0:
        raise ConfigError("need t > s on the grid")
    X = np.eye(scheme.nn)
    for m in range(i0, i1):
        X = scheme.explicit(m) @ X
        X = scheme.implicit_lu(m + 1)[0].solve(X)
    return Propagator(mesh, float(mesh.times[i0]), float(mesh.times[i1]), X, scheme.N)


def apply_initial(spec: OperatorSpec, mesh: Mesh, g, s: float, t: float,
                  theta: float = GREEN_THETA, cap: int = PROPAGATOR_CAP) -> np.ndarray:
    """Solution slice at t from data g at s, via the propagator matrix."""
    if mesh.time_index(t) <= mesh.time_index(s):
        raise ConfigError("need t > s")
    P = propagator(spec, mesh, s, t, theta=theta, cap=cap)
    return P.apply(project_slice(mesh, g))


def apply_representation(spec: OperatorSpec, mesh: Mesh, f, s: float, T: float,
                         theta: float = GREEN_THETA, cap: int = PROPAGATOR_CAP,
                         slab_source=None) -> Trajectory:
    """Quadrature of Green samples against a source, via dense step factors.

    Must agree with solve_forward from zero data; f has to vanish outside
    the [s, T] window.
    """
    scheme = ThetaScheme(mesh, spec, theta)
    if scheme.nn > cap:
        raise ConfigError(f"representation size {scheme.nn} exceeds cap {cap}")
    i0, i1 = mesh.time_index(s), mesh.time_index(T)
    if i1 <= i0:
        raise ConfigError("need T > s on the time grid")
    if f is not None and callable(f):
        for m in range(0, mesh.steps + 1):
            if not (i0 <= m <= i1):
                slc = np.asarray(f(float(mesh.times[m])), dtype=float)
                if np.any(slc != 0.0):
                    raise ConfigError("source support leaves the [s, T] window")
    if slab_source is None:
        from .solver import _slab_source_fn
        src = _slab_source_fn(scheme, f)
    else:
        src = slab_source
    u = np.zeros(scheme.nn)
    out = np.empty((i1 - i0 + 1, scheme.N, mesh.ncells))
    out[0] = 0.0
    for m in range(i0, i1):
        lu = scheme.implicit_lu(m + 1)[0]
        step = lu.solve(scheme.explicit(m).toarray())
        u = step @ u
        gm = src(m)
        if gm is not None:
            u = u + mesh.tau * lu.solve(gm)
        out[m - i0 + 1] = u.reshape(scheme.N, -1)
    return Trajectory(mesh, i0, out)


# ----------------------------------------------------------------------
# rho refinement and extrapolation
# ----------------------------------------------------------------------


@dataclass
class RhoTable:
    rhos: np.ndarray
    values: np.ndarray          # (len(rhos), N) column samples at the probe
    extrapolated: np.ndarray    # (N,)
    observed_order: float
    monotone: bool


def _rho_weights(rhos: np.ndarray) -> np.ndarray:
    """Least-squares extraction weights for the rho -> 0 limit, model a + c rho^2."""
    M = np.stack([np.ones_like(rhos), rhos ** 2], axis=1)
    pinv = np.linalg.pinv(M)
    return pinv[0]


def rho_refinement(spec: OperatorSpec, mesh: Mesh, Y, k: int, rho_list,
                   X_probe, T: float | None = None) -> RhoTable:
    """Sample one Green column at a probe across a ladder of radii.

    Extrapolates with the quadratic-in-rho model (averaging a twice
    differentiable kernel over a shrinking cylinder) and reports the
    observed convergence order; non-monotone ladders are flagged, not
    fatal.
    """
    rhos = np.asarray([float(r) for r in rho_list])
    if len(rhos) < 2 or np.any(np.diff(rhos) >= 0):
        raise ConfigError("rho_list must be strictly decreasing with >= 2 entries")
    tp, xp = float(X_probe[0]), X_probe[1]
    if mesh.pdist((tp, xp), (float(Y[0]), Y[1])) <= 3.0 * rhos[0]:
        raise ConfigError("probe must satisfy |X - Y|_p > 3 * max(rho)")
    horizon = tp if T is None else float(T)
    vals = []
    for r in rhos:
        col = averaged_green_column(spec, mesh, Y, k, float(r), horizon)
        vals.append(col.value_at(tp, xp))
    vals = np.asarray(vals)
    w = _rho_weights(rhos)
    extrap = w @ vals
    errs = np.linalg.norm(vals - extrap[None, :], axis=1)
    good = errs > 0
    if good.sum() >= 2:
        slope = np.polyfit(np.log(rhos[good]), np.log(errs[good]), 1)[0]
    else:
        slope = float("nan")
    monotone = bool(np.all(np.diff(errs) <= 1e-14 + 1e-9 * errs[:-1]))
    return RhoTable(rhos, vals, extrap, float(slope), monotone)


def extrapolated_green_column(spec: OperatorSpec, mesh: Mesh, Y, k: int, rho_list,
                              T: float) -> GreenColumn:
    """Richardson-combined column with rho = 0; exactly zero before the pole time."""
    rhos = np.asarray([float(r) for r in rho_list])
    if len(rhos) < 2 or np.any(np.diff(rhos) >= 0):
        raise ConfigError("rho_list must be strictly decreasing with >= 2 entries")
    cols = [averaged_green_column(spec, mesh, Y, k, float(r), T) for r in rhos]
    w = _rho_weights(rhos)
    i_pole = mesh.time_index(float(Y[0]))
    i1 = mesh.time_index(T)
    combined = np.zeros((i1 - i_pole + 1, cols[0].N, mesh.ncells))
    for wj, col in zip(w, cols):
        off = i_pole - col.field.i0
        combined += wj * col.field.values[off:off + combined.shape[0]]
    traj = Trajectory(mesh, i_pole, combined)
    return GreenColumn(spec, mesh, (float(Y[0]), np.atleast_1d(np.asarray(Y[1], dtype=float))),
                       k, 0.0, traj, "forward")


def green_block_columns(spec: OperatorSpec, mesh: Mesh, Y, rho: float, T: float):
    """All N source components of the averaged column at one pole."""
    return [averaged_green_column(spec, mesh, Y, k, rho, T)
            for k in range(1, spec.coeffs.N + 1)]


def block_at(columns, t: float, x) -> np.ndarray:
    """Assemble the N x N sample G[j, k] from the per-component columns."""
    vecs = [col.value_at(t, x) for col in columns]
    return np.stack(vecs, axis=1)
