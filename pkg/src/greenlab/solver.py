"""Divergence-form finite differences and theta-scheme time stepping.

The spatial operator is the negative discrete divergence of face fluxes,
with coefficients evaluated at face midpoints and centered differences
across each face (transverse gradients on a face use the 4-point average
of the neighboring differences).  One step of the theta scheme solves

    (I + tau*theta*L(t+tau)) u' = (I - tau*(1-theta)*L(t)) u + tau*g,

and the backward solver applies the exact matrix transpose of the forward
one-step maps, which is what makes the discrete duality identities exact.
State layout: slices are (N, ncells) arrays, flattened component-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverError
from .mesh import Mesh, Trajectory
from .problem import OperatorSpec

RESIDUAL_TOL = 1e-11


@dataclass
class DiscreteOperator:
    """Sparse matrix of -div(A D u) on the mesh at a fixed time."""

    matrix: sp.csr_matrix
    t: float
    mesh: Mesh
    N: int


def assemble(mesh: Mesh, spec: OperatorSpec, t: float) -> DiscreteOperator:
    """Assemble the flux-form spatial operator at time t.

    Each face contributes A(face midpoint) times the centered difference;
    in dirichlet mode the pinned boundary layer is projected out (rows and
    columns zeroed), in periodic mode indices wrap and row sums vanish.
    """
    coeffs = spec.effective_coeffs()
    n, N = coeffs.n, coeffs.N
    C = mesh.ncells
    rows, cols, vals = [], [], []
    for a in range(n):
        pts, left, right = mesh.face_positions(a)
        A = coeffs.tensor(t, pts)
        if not np.isfinite(A).all():
            raise ConfigError(f"non-finite coefficient at a face (t={t})")
        P = len(left)
        ones = np.ones(P, dtype=bool)
        inv_ha = 1.0 / mesh.h[a]
        for b in range(n):
            Aab = A[:, a, b]
            if b == a:
                col_specs = [(right, ones, +1.0 / mesh.h[b]),
                             (left, ones, -1.0 / mesh.h[b])]
            else:
                lp, vlp = mesh.shift_flat(left, b, +1)
                rp, vrp = mesh.shift_flat(right, b, +1)
                lm, vlm = mesh.shift_flat(left, b, -1)
                rm, vrm = mesh.shift_flat(right, b, -1)
                q = 1.0 / (4.0 * mesh.h[b])
                col_specs = [(lp, vlp, +q), (rp, vrp, +q), (lm, vlm, -q), (rm, vrm, -q)]
            for row_cells, sgn in ((left, -inv_ha), (right, +inv_ha)):
                for col_cells, valid, w in col_specs:
                    for i in range(N):
                        for j in range(N):
                            v = sgn * w * Aab[valid, i, j]
                            rows.append(i * C + row_cells[valid])
                            cols.append(j * C + col_cells[valid])
                            vals.append(v)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if not mesh.periodic:
        mask = np.tile(mesh.interior_mask, N)
        keep = mask[rows] & mask[cols]
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(N * C, N * C)).tocsr()
    return DiscreteOperator(mat, t, mesh, N)


def project_slice(mesh: Mesh, slc: np.ndarray) -> np.ndarray:
    """Zero the pinned boundary cells (no-op on periodic meshes)."""
    slc = np.array(slc, dtype=float)
    if not mesh.periodic:
        slc[:, ~mesh.interior_mask] = 0.0
    return slc


class ThetaScheme:
    """Cached step matrices and factorizations for one operator spec."""

    def __init__(self, mesh: Mesh, spec: OperatorSpec, theta: float = 1.0):
        if not 0.5 <= theta <= 1.0:
            raise ConfigError(f"theta must lie in [1/2, 1], got {theta}")
        self.mesh = mesh
        self.spec = spec
        self.theta = float(theta)
        coeffs = spec.effective_coeffs()
        self.N = coeffs.N
        self.nn = coeffs.N * mesh.ncells
        self._static = not coeffs.time_dependent
        self._ops: dict = {}
        self._lu: dict = {}
        self._expl: dict = {}

    def _key(self, m: int):
        return "const" if self._static else m

    def operator(self, m: int) -> sp.csr_matrix:
        key = self._key(m)
        if key not in self._ops:
            self._ops[key] = assemble(self.mesh, self.spec, float(self.mesh.times[m])).matrix
        return self._ops[key]

    def implicit_lu(self, m: int):
        """splu factorization of I + tau*theta*L(t_m)."""
        key = self._key(m)
        if key not in self._lu:
            D = (sp.identity(self.nn, format="csr")
                 + self.mesh.tau * self.theta * self.operator(m)).tocsc()
            self._lu[key] = (spla.splu(D), D)
        return self._lu[key]

    def explicit(self, m: int) -> sp.csr_matrix:
        key = self._key(m)
        if key not in self._expl:
            self._expl[key] = (sp.identity(self.nn, format="csr")
                               - self.mesh.tau * (1.0 - self.theta) * self.operator(m))
        return self._expl[key]

    def solve_implicit(self, m: int, rhs: np.ndarray, trans: str = "N") -> np.ndarray:
        lu, D = self.implicit_lu(m)
        x = lu.solve(rhs, trans=trans)
        mat = D if trans == "N" else D.T
        num = np.linalg.norm(mat @ x - rhs)
        den = np.linalg.norm(rhs)
        if den > 0 and num > RESIDUAL_TOL * den:
            raise SolverError(f"linear solve residual {num / den:.3e} exceeds {RESIDUAL_TOL}")
        return x

    def forward_step(self, m: int, u: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
        """One step t_m -> t_{m+1}; g is the per-step source (flat)."""
        rhs = self.explicit(m) @ u
        if g is not None:
            rhs = rhs + self.mesh.tau * g
        return self.solve_implicit(m + 1, rhs)

    def backward_step(self, m: int, w: np.ndarray, q: np.ndarray | None = None) -> np.ndarray:
        """Adjoint step t_{m+1} -> t_m: the transpose of forward_step(m, .)."""
        rhs = w if q is None else w + self.mesh.tau * q
        z = self.solve_implicit(m + 1, rhs, trans="T")
        return self.explicit(m).T @ z


def _as_slice(mesh: Mesh, N: int, data) -> np.ndarray:
    arr = np.zeros((N, mesh.ncells)) if data is None else np.array(data, dtype=float)
    if arr.shape != (N, mesh.ncells):
        raise ConfigError(f"slice must have shape ({N}, {mesh.ncells}), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ConfigError("slice contains non-finite values")
    return arr


def _slab_source_fn(scheme: ThetaScheme, f):
    """Normalize the user source into a per-step flat source callable."""
    if f is None:
        return lambda m: None
    mesh, N = scheme.mesh, scheme.N
    if callable(f):
        th = scheme.theta

        def g(m):
            early = _as_slice(mesh, N, f(float(mesh.times[m])))
            late = _as_slice(mesh, N, f(float(mesh.times[m + 1])))
            return project_slice(mesh, th * late + (1.0 - th) * early).ravel()

        return g
    raise ConfigError("source must be None or a callable t -> slice")


def solve_forward(spec: OperatorSpec, mesh: Mesh, g, f, s: float, T: float,
                  theta: float = 1.0, scheme: ThetaScheme | None = None,
                  slab_source=None) -> Trajectory:
    """March the Cauchy problem from data g at time s up to time T.

    ``f`` is a per-slice source sampled as f(t) -> (N, ncells); the step
    from t_m to t_{m+1} uses the theta-weighted combination.  Callers that
    need exact per-slab control (mollified sources) pass ``slab_source``,
    a callable m -> flat array, instead of f.
    """
    scheme = scheme or ThetaScheme(mesh, spec, theta)
    i0, i1 = mesh.time_index(s), mesh.time_index(T)
    if i1 <= i0:
        raise ConfigError("need T > s on the time grid")
    src = _slab_source_fn(scheme, f) if slab_source is None else slab_source
    u = project_slice(mesh, _as_slice(mesh, scheme.N, g)).ravel()
    out = np.empty((i1 - i0 + 1, scheme.N, mesh.ncells))
    out[0] = u.reshape(scheme.N, -1)
    for m in range(i0, i1):
        u = scheme.forward_step(m, u, src(m))
        out[m - i0 + 1] = u.reshape(scheme.N, -1)
    return Trajectory(mesh, i0, out)


def solve_backward(spec: OperatorSpec, mesh: Mesh, g, f, b: float, S: float,
                   theta: float = 1.0, scheme: ThetaScheme | None = None,
                   slab_source=None) -> Trajectory:
    """March the adjoint problem from final data g at time b down to S.

    Each backward step is the exact matrix transpose of the corresponding
    forward step, so <forward(a), b> = <a, backward(b)> holds to roundoff
    for matching windows.  Sources pair with the slab convention of
    ``solve_forward`` (stated for theta = 1).
    """
    scheme = scheme or ThetaScheme(mesh, spec, theta)
    i0, i1 = mesh.time_index(S), mesh.time_index(b)
    if i1 <= i0:
        raise ConfigError("need b > S on the time grid")
    src = _slab_source_fn(scheme, f) if slab_source is None else slab_source
    w = project_slice(mesh, _as_slice(mesh, scheme.N, g)).ravel()
    out = np.empty((i1 - i0 + 1, scheme.N, mesh.ncells))
    out[-1] = w.reshape(scheme.N, -1)
    for m in range(i1 - 1, i0 - 1, -1):
        w = scheme.backward_step(m, w, src(m))
        out[m - i0] = w.reshape(scheme.N, -1)
    return Trajectory(mesh, i0, out)


def step_forward(u, t: float, mesh: Mesh, spec: OperatorSpec, theta: float = 1.0):
    """Single theta-scheme step of the homogeneous problem from time t."""
    scheme = ThetaScheme(mesh, spec, theta)
    m = mesh.time_index(t)
    if m >= mesh.steps:
        raise ConfigError("step would leave the mesh time window")
    u = project_slice(mesh, _as_slice(mesh, scheme.N, u))
    return scheme.forward_step(m, u.ravel()).reshape(scheme.N, -1)


ORACLE_CAP = 20_000


def dense_spacetime_oracle(spec: OperatorSpec, mesh: Mesh, g, f, s: float, T: float,
                           theta: float = 1.0, slab_source=None) -> Trajectory:
    """Brute-force reference: one dense solve of the stacked theta scheme.

    Assembles the block-bidiagonal space-time system over all unknown
    slices and solves it directly; only meant as a test oracle, capped at
    ORACLE_CAP space-time unknowns.
    """
    scheme = ThetaScheme(mesh, spec, theta)
    i0, i1 = mesh.time_index(s), mesh.time_index(T)
    if i1 <= i0:
        raise ConfigError("need T > s on the time grid")
    K = i1 - i0
    nn = scheme.nn
    if K * nn > ORACLE_CAP:
        raise ConfigError(f"oracle size {K * nn} exceeds cap {ORACLE_CAP}")
    src = _slab_source_fn(scheme, f) if slab_source is None else slab_source
    u0 = project_slice(mesh, _as_slice(mesh, scheme.N, g)).ravel()

    A = np.zeros((K * nn, K * nn))
    rhs = np.zeros(K * nn)
    tau = mesh.tau
    for k in range(K):
        m = i0 + k
        D = (sp.identity(nn, format="csr") + tau * scheme.theta * scheme.operator(m + 1))
        A[k * nn:(k + 1) * nn, k * nn:(k + 1) * nn] = D.toarray()
        E = scheme.explicit(m)
        if k == 0:
            rhs[:nn] += E @ u0
        else:
            A[k * nn:(k + 1) * nn, (k - 1) * nn:k * nn] = -E.toarray()
        gm = src(m)
        if gm is not None:
            rhs[k * nn:(k + 1) * nn] += tau * gm
    sol = np.linalg.solve(A, rhs)
    out = np.empty((K + 1, scheme.N, mesh.ncells))
    out[0] = u0.reshape(scheme.N, -1)
    for k in range(K):
        out[k + 1] = sol[k * nn:(k + 1) * nn].reshape(scheme.N, -1)
    return Trajectory(mesh, i0, out)
