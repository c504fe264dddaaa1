"""Parabolic system definitions and coefficient diagnostics.

A system is described by a tensor A[alpha, beta, i, j](t, x) acting on
vector fields with N components over n spatial dimensions (n in {1, 2}),
together with its coercivity constant ``lam`` (the quadratic form lower
bound), the Frobenius bound ``Lam``, and an interior-regularity scale
``R_c``.  Fields are immutable and safe to share between workers.

Tensor index convention: ``eval`` takes 1-based indices (alpha, beta in
1..n, i, j in 1..N); the vectorized ``tensor`` method returns 0-based
numpy blocks of shape (P, n, n, N, N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError

BOUNDARY_MODES = ("dirichlet", "periodic")


@dataclass(frozen=True)
class CoefficientField:
    """Coefficient tensor A[alpha, beta, i, j](t, x) with ellipticity metadata.

    ``tensor_fn(t, pts)`` must accept a scalar time and an array of points
    of shape (P, n) and return an array of shape (P, n, n, N, N).
    ``lam`` and ``Lam`` are the declared constants of record; sampling
    audits them but never overrides them.
    """

    n: int
    N: int
    lam: float
    Lam: float
    R_c: float
    name: str
    tensor_fn: Callable[[float, np.ndarray], np.ndarray]
    time_dependent: bool = False
    x_dependent: bool = False
    from_table: bool = False

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError(f"spatial dimension must be 1 or 2, got {self.n}")
        if self.N < 1:
            raise ConfigError(f"system size must be >= 1, got {self.N}")
        if not (self.lam > 0 and self.Lam > 0):
            raise ConfigError("lam and Lam must be positive")
        if not (self.R_c > 0):
            raise ConfigError("R_c must be positive (math.inf allowed)")

    def tensor(self, t: float, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.n:
            raise ConfigError(f"points have dimension {pts.shape[1]}, field has n={self.n}")
        out = np.asarray(self.tensor_fn(t, pts), dtype=float)
        expect = (pts.shape[0], self.n, self.n, self.N, self.N)
        if out.shape != expect:
            raise ConfigError(f"tensor_fn returned shape {out.shape}, expected {expect}")
        return out

    def eval(self, t: float, x, alpha: int, beta: int, i: int, j: int) -> float:
        """Scalar entry A^{alpha beta}_{ij}(t, x) with 1-based indices."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        blk = self.tensor(t, x[None, :])
        return float(blk[0, alpha - 1, beta - 1, i - 1, j - 1])

    def transposed(self) -> "CoefficientField":
        """Swap alpha<->beta and i<->j; same lam, Lam by construction."""
        base = self.tensor_fn

        def t_fn(t, pts):
            return np.asarray(base(t, pts)).transpose(0, 2, 1, 4, 3)

        return replace(self, tensor_fn=t_fn, name=self.name + "^T")


def transpose_coefficients(coeffs: CoefficientField) -> CoefficientField:
    """Transposed tensor tA[alpha,beta,i,j] = A[beta,alpha,j,i]; an involution."""
    return coeffs.transposed()


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box with either a Dirichlet or a periodic boundary."""

    lo: tuple
    hi: tuple
    boundary_mode: str

    def __post_init__(self):
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if len(self.lo) != len(self.hi):
            raise ConfigError("lo/hi dimension mismatch")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ConfigError("box must have positive extent on every axis")

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)

    @property
    def periodic(self) -> bool:
        return self.boundary_mode == "periodic"

    def dist_to_boundary(self, x) -> float:
        """d_X: distance from x to the box boundary; +inf in periodic mode."""
        if self.periodic:
            return math.inf
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return float(np.min(np.minimum(x - lo, hi - x)))


@dataclass(frozen=True)
class OperatorSpec:
    """A divergence-form operator: coefficients on a domain, optionally transposed."""

    coeffs: CoefficientField
    domain: Domain
    transposed: bool = False

    def __post_init__(self):
        if self.coeffs.n != self.domain.n:
            raise ConfigError("coefficient and domain dimensions differ")

    def effective_coeffs(self) -> CoefficientField:
        return self.coeffs.transposed() if self.transposed else self.coeffs


# ----------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------


def _const_tensor(mat: np.ndarray, n: int, N: int):
    mat = np.asarray(mat, dtype=float).reshape(n, n, N, N)

    def fn(t, pts):
        return np.broadcast_to(mat, (pts.shape[0],) + mat.shape).copy()

    return fn


def _scalar_diag_tensor(n: int, a_of_tx: Callable[[float, np.ndarray], np.ndarray]):
    """Isotropic scalar field a(t,x) * delta_{alpha beta}, N = 1."""

    def fn(t, pts):
        a = np.asarray(a_of_tx(t, pts), dtype=float)
        out = np.zeros((pts.shape[0], n, n, 1, 1))
        for ax in range(n):
            out[:, ax, ax, 0, 0] = a
        return out

    return fn


def make_preset(name: str, **kw) -> CoefficientField:
    """Construct one of the bundled closed-form coefficient presets.

    Available names: heat, decoupled-heat-pair, diag, t-oscillating,
    x-oscillatory, checkerboard, almost-diagonal, rotating.
    Each preset declares exact (lam, Lam); R_c defaults to +inf and may be
    overridden with ``R_c=...``.
    """
    R_c = float(kw.pop("R_c", math.inf))
    if name == "heat":
        n = int(kw.pop("n", 1))
        _reject_extras(name, kw)
        mat = np.zeros((n, n, 1, 1))
        for ax in range(n):
            mat[ax, ax, 0, 0] = 1.0
        return CoefficientField(n, 1, 1.0, math.sqrt(n), R_c, f"heat-{n}d",
                                _const_tensor(mat, n, 1))
    if name == "decoupled-heat-pair":
        n = int(kw.pop("n", 1))
        _reject_extras(name, kw)
        mat = np.zeros((n, n, 2, 2))
        for ax in range(n):
            mat[ax, ax] = np.eye(2)
        return CoefficientField(n, 2, 1.0, math.sqrt(2 * n), R_c,
                                f"decoupled-pair-{n}d", _const_tensor(mat, n, 2))
    if name == "diag":
        vals = tuple(float(v) for v in kw.pop("values", (2.0, 0.5)))
        _reject_extras(name, kw)
        n = len(vals)
        mat = np.zeros((n, n, 1, 1))
        for ax, v in enumerate(vals):
            mat[ax, ax, 0, 0] = v
        return CoefficientField(n, 1, min(vals), math.sqrt(sum(v * v for v in vals)),
                                R_c, "diag" + str(vals), _const_tensor(mat, n, 1))
    if name == "t-oscillating":
        n = int(kw.pop("n", 1))
        base = float(kw.pop("base", 1.0))
        amp = float(kw.pop("amp", 0.5))
        period = float(kw.pop("period", 1.0))
        _reject_extras(name, kw)
        if not 0 <= amp < base:
            raise ConfigError("t-oscillating needs 0 <= amp < base")

        def a(t, pts):
            return np.full(pts.shape[0], base + amp * math.sin(2 * math.pi * t / period))

        return CoefficientField(n, 1, base - amp, (base + amp) * math.sqrt(n), R_c,
                                "t-oscillating", _scalar_diag_tensor(n, a),
                                time_dependent=True)
    if name == "x-oscillatory":
        n = int(kw.pop("n", 1))
        off = float(kw.pop("offset", 2.0))
        amp = float(kw.pop("amp", 1.0))
        wavelength = float(kw.pop("wavelength", 1.0))
        _reject_extras(name, kw)
        if not 0 <= amp < off:
            raise ConfigError("x-oscillatory needs 0 <= amp < offset")

        def a(t, pts):
            return off + amp * np.sin(2 * np.pi * pts[:, 0] / wavelength)

        return CoefficientField(n, 1, off - amp, (off + amp) * math.sqrt(n), R_c,
                                "x-oscillatory", _scalar_diag_tensor(n, a),
                                x_dependent=True)
    if name == "checkerboard":
        n = int(kw.pop("n", 1))
        lo = float(kw.pop("low", 1.0))
        hi = float(kw.pop("high", 4.0))
        period = float(kw.pop("period", 0.25))
        _reject_extras(name, kw)
        if not 0 < lo <= hi:
            raise ConfigError("checkerboard needs 0 < low <= high")

        # Value flips with the parity of floor(x_1/period); at a point that
        # sits exactly on a tile edge, floor picks the right-hand tile.
        def a(t, pts):
            parity = np.floor(pts[:, 0] / period).astype(np.int64) % 2
            return np.where(parity == 0, lo, hi)

        return CoefficientField(n, 1, lo, hi * math.sqrt(n), R_c, "checkerboard",
                                _scalar_diag_tensor(n, a), x_dependent=True)
    if name == "almost-diagonal":
        eps = float(kw.pop("eps", 0.1))
        _reject_extras(name, kw)
        if not 0 <= eps < 1:
            raise ConfigError("almost-diagonal needs 0 <= eps < 1")
        mat = np.zeros((1, 1, 2, 2))
        mat[0, 0] = np.array([[1.0, eps], [eps, 1.0]])
        return CoefficientField(1, 2, 1.0 - eps, math.sqrt(2 + 2 * eps * eps), R_c,
                                "almost-diagonal", _const_tensor(mat, 1, 2))
    if name == "rotating":
        w0 = float(kw.pop("w0", 0.5))
        omega = float(kw.pop("omega", 1.0))
        _reject_extras(name, kw)

        # Antisymmetric inter-component coupling: the quadratic form ignores
        # the skew part, so lam = 1 exactly while the tensor is nonsymmetric.
        def fn(t, pts):
            w = w0 * math.cos(2 * math.pi * omega * t)
            mat = np.zeros((1, 1, 2, 2))
            mat[0, 0] = np.array([[1.0, w], [-w, 1.0]])
            return np.broadcast_to(mat, (pts.shape[0],) + mat.shape).copy()

        return CoefficientField(1, 2, 1.0, math.sqrt(2 + 2 * w0 * w0), R_c,
                                "rotating", fn, time_dependent=omega != 0.0)
    raise ConfigError(f"unknown preset {name!r}")


def _reject_extras(name, kw):
    if kw:
        raise ConfigError(f"unknown parameters for preset {name!r}: {sorted(kw)}")


def load_table(path, lam: float, Lam: float, R_c: float = math.inf) -> CoefficientField:
    """Load a gridded coefficient table from CSV.

    Header line ``# n N nt nx [ny]`` followed by rows
    ``t,x[,y],alpha,beta,i,j,value`` (1-based tensor indices).  Lookup is
    nearest-left in t and multilinear in x on the stored grid; declared
    (lam, Lam) come from the caller.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ConfigError("table must start with a '# n N nt nx [ny]' header")
        fields = header[1:].split()
        if len(fields) not in (4, 5):
            raise ConfigError("table header must be '# n N nt nx [ny]'")
        n, N, nt = int(fields[0]), int(fields[1]), int(fields[2])
        dims = tuple(int(v) for v in fields[3:])
        if len(dims) != n:
            raise ConfigError("table header grid sizes do not match n")
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    ncol = 1 + n + 4 + 1
    if raw.shape[1] != ncol:
        raise ConfigError(f"table rows must have {ncol} columns for n={n}")
    expected = nt * int(np.prod(dims)) * n * n * N * N
    if raw.shape[0] != expected:
        raise ConfigError(f"table has {raw.shape[0]} rows, expected {expected}")

    t_vals = np.unique(raw[:, 0])
    x_vals = [np.unique(raw[:, 1 + ax]) for ax in range(n)]
    if len(t_vals) != nt or any(len(xv) != d for xv, d in zip(x_vals, dims)):
        raise ConfigError("table grid is not a full tensor product")
    table = np.full((nt,) + dims + (n, n, N, N), np.nan)
    it = np.searchsorted(t_vals, raw[:, 0])
    ix = [np.searchsorted(x_vals[ax], raw[:, 1 + ax]) for ax in range(n)]
    a_idx = raw[:, 1 + n].astype(int) - 1
    b_idx = raw[:, 2 + n].astype(int) - 1
    i_idx = raw[:, 3 + n].astype(int) - 1
    j_idx = raw[:, 4 + n].astype(int) - 1
    table[(it, *ix, a_idx, b_idx, i_idx, j_idx)] = raw[:, -1]
    if np.isnan(table).any():
        raise ConfigError("table is missing entries")

    def fn(t, pts):
        k = np.searchsorted(t_vals, t + 1e-12, side="right") - 1
        k = min(max(k, 0), nt - 1)
        sl = table[k]
        # multilinear in x with clamped edges
        w_lo, i_lo = [], []
        for ax in range(n):
            xv = x_vals[ax]
            pos = np.clip(pts[:, ax], xv[0], xv[-1])
            j = np.clip(np.searchsorted(xv, pos, side="right") - 1, 0, len(xv) - 2) \
                if len(xv) > 1 else np.zeros(len(pos), dtype=int)
            if len(xv) > 1:
                frac = (pos - xv[j]) / (xv[j + 1] - xv[j])
            else:
                frac = np.zeros(len(pos))
            i_lo.append(j)
            w_lo.append(1.0 - frac)
        if n == 1:
            j0, w0 = i_lo[0], w_lo[0]
            out = (sl[j0] * w0[:, None, None, None, None]
                   + sl[np.minimum(j0 + 1, dims[0] - 1)] * (1 - w0)[:, None, None, None, None])
        else:
            j0, j1 = i_lo
            w0, w1 = w_lo
            jp0 = np.minimum(j0 + 1, dims[0] - 1)
            jp1 = np.minimum(j1 + 1, dims[1] - 1)
            wq = [(w0 * w1, (j0, j1)), ((1 - w0) * w1, (jp0, j1)),
                  (w0 * (1 - w1), (j0, jp1)), ((1 - w0) * (1 - w1), (jp0, jp1))]
            out = sum(w[:, None, None, None, None] * sl[ij] for w, ij in wq)
        return out

    return CoefficientField(n, N, lam, Lam, R_c, "table", fn,
                            time_dependent=nt > 1, x_dependent=True,
                            from_table=True)


# ----------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ParabolicityReport:
    lambda_est: float
    Lambda_est: float
    ok: bool


def _sample_points(coeffs, sample_count, rng, box=None, t_span=(0.0, 1.0)):
    n = coeffs.n
    if box is None:
        box = (np.zeros(n), np.ones(n))
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    ts = np.linspace(t_span[0], t_span[1], max(2, int(math.isqrt(sample_count)) + 1))
    pts = lo + (hi - lo) * rng.random((sample_count, n))
    return ts, pts


def validate_parabolicity(coeffs: CoefficientField, sample_count: int,
                          tol: float | None = None, seed: int = 0,
                          box=None) -> ParabolicityReport:
    """Audit the declared (lam, Lam) by sampling the quadratic form.

    lambda_est is the minimum of the form over sampled (t, x) and a set of
    directions xi (coordinate axes, random unit vectors, and the extremal
    eigendirection of the symmetrized tensor at each sample).  Lambda_est
    is the largest sampled Frobenius norm.  ``ok`` holds when both sit on
    the declared side of the constants within ``tol``.
    """
    if sample_count < 1:
        raise ConfigError("sample_count must be >= 1")
    if tol is None:
        tol = 1e-8 if coeffs.from_table else 1e-12
    rng = np.random.default_rng(seed)
    n, N = coeffs.n, coeffs.N
    d = n * N
    ts, pts = _sample_points(coeffs, sample_count, rng, box=box)

    dirs = [np.eye(d)]
    nrand = max(8, 4 * d)
    v = rng.standard_normal((nrand, d))
    dirs.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    xi_fixed = np.vstack(dirs)

    lam_est = math.inf
    Lam_est = 0.0
    for t in ts:
        blk = coeffs.tensor(float(t), pts)
        if not np.isfinite(blk).all():
            raise ConfigError("non-finite coefficient value encountered")
        Lam_est = max(Lam_est, float(np.sqrt(np.max(np.sum(blk ** 2, axis=(1, 2, 3, 4))))))
        # M[(i,alpha),(j,beta)] so that xi^T M xi is the parabolicity form
        M = blk.transpose(0, 3, 1, 4, 2).reshape(-1, d, d)
        sym = 0.5 * (M + M.transpose(0, 2, 1))
        evals, evecs = np.linalg.eigh(sym)
        lam_est = min(lam_est, float(np.min(evals)))
        q = np.einsum("sd,pde,se->ps", xi_fixed, sym, xi_fixed)
        lam_est = min(lam_est, float(np.min(q)))
    ok = (lam_est >= coeffs.lam - tol) and (Lam_est <= coeffs.Lam + tol)
    return ParabolicityReport(lam_est, Lam_est, ok)


def diagonal_distance(coeffs: CoefficientField, scalar: CoefficientField,
                      sample_count: int = 64, seed: int = 0, box=None) -> float:
    """Sup over samples of the Frobenius distance to a scalar-diagonal tensor.

    ``scalar`` supplies a^{alpha beta}(t,x) as an N=1 field; the distance at
    X is |A[a,b,i,j](X) - a[a,b](X) delta_{ij}| summed in quadrature.
    """
    if scalar.n != coeffs.n:
        raise ConfigError("scalar field dimension mismatch")
    if scalar.N != 1:
        raise ConfigError("scalar comparison field must have N = 1")
    rng = np.random.default_rng(seed)
    ts, pts = _sample_points(coeffs, sample_count, rng, box=box)
    N = coeffs.N
    worst = 0.0
    eye = np.eye(N)
    for t in ts:
        A = coeffs.tensor(float(t), pts)
        a = scalar.tensor(float(t), pts)[:, :, :, 0, 0]
        diff = A - a[:, :, :, None, None] * eye[None, None, None, :, :]
        worst = max(worst, float(np.sqrt(np.max(np.sum(diff ** 2, axis=(1, 2, 3, 4))))))
    return worst


@dataclass(frozen=True)
class VmoProbe:
    """Sampling plan for the mean-oscillation modulus.

    ``radii_ladder`` is a fixed decreasing ladder of candidate radii; a call
    with threshold delta uses the ladder entries <= delta, which makes the
    modulus monotone nondecreasing in delta by construction.
    """

    centers_per_axis: int = 17
    time_centers: int = 5
    quad_per_axis: int = 64
    quad_time: int = 16
    radii_ladder: tuple = (0.25, 0.177, 0.125, 0.088, 0.0625)
    box: tuple = ((0.0,), (1.0,))
    t_span: tuple = (0.0, 1.0)


def vmo_modulus(coeffs: CoefficientField, delta: float,
                probe: VmoProbe | None = None) -> float:
    """Discrete estimate of the x-oscillation modulus at scale delta.

    For each probe center X = (t, x) and ladder radius r <= delta, computes
    by midpoint quadrature the cylinder average of |A(s, y) - Abar_{x,r}(s)|
    where Abar is the spatial mean over the r-ball at each time s, and takes
    the sup.  Vanishes identically for x-independent coefficients.
    """
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if probe is None:
        probe = VmoProbe()
    n = coeffs.n
    lo = np.asarray(probe.box[0], dtype=float)
    hi = np.asarray(probe.box[1], dtype=float)
    if lo.shape[0] != n:
        raise ConfigError("probe box dimension mismatch")
    radii = [r for r in probe.radii_ladder if r <= delta]
    if not radii:
        return 0.0
    centers_x = [np.linspace(lo[ax], hi[ax], probe.centers_per_axis) for ax in range(n)]
    grids = np.meshgrid(*centers_x, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    t_centers = np.linspace(probe.t_span[0], probe.t_span[1], probe.time_centers) \
        if coeffs.time_dependent else np.array([0.5 * (probe.t_span[0] + probe.t_span[1])])

    worst = 0.0
    for r in radii:
        s_off = (np.arange(probe.quad_time) + 0.5) / probe.quad_time * (2 * r * r) - r * r
        if n == 1:
            y_off = ((np.arange(probe.quad_per_axis) + 0.5) / probe.quad_per_axis * 2 - 1) * r
            offsets = y_off[:, None]
        else:
            g = ((np.arange(probe.quad_per_axis) + 0.5) / probe.quad_per_axis * 2 - 1) * r
            gx, gy = np.meshgrid(g, g, indexing="ij")
            mask = gx ** 2 + gy ** 2 < r * r
            offsets = np.stack([gx[mask], gy[mask]], axis=1)
        for tc in t_centers:
            for x0 in centers:
                pts = x0[None, :] + offsets
                vals = []
                for s in tc + s_off:
                    A = coeffs.tensor(float(s), pts)
                    Abar = A.mean(axis=0)
                    dev = np.sqrt(np.sum((A - Abar[None]) ** 2, axis=(1, 2, 3, 4)))
                    vals.append(dev.mean())
                worst = max(worst, float(np.mean(vals)))
    return worst
