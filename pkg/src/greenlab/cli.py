"""Scenario-driven command line front end.

``greenlab run scenario.json`` builds the configured system, executes the
requested checks, and writes a structured report, per-check CSV data, and
a human-readable summary.  ``greenlab sweep`` repeats a scenario's metric
check along one refinement axis and fits the observed order.  Scenario
files are strict JSON: unknown keys anywhere are rejected.

Exit codes: 0 all gating checks pass, 1 check failure, 2 invalid scenario
or parameters, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import verify as V
from .errors import ConfigError, SolverError
from .green import averaged_green_column
from .io import report_to_json, write_samples_csv
from .mesh import Mesh
from .problem import Domain, OperatorSpec, load_table, make_preset
from .solver import dense_spacetime_oracle, solve_backward, solve_forward


@dataclass
class Context:
    name: str
    spec: OperatorSpec
    mesh: Mesh
    theta: float
    seed: int


def _require_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _cell_at_frac(mesh: Mesh, fracs):
    fracs = np.atleast_1d(np.asarray(fracs, dtype=float))
    if len(fracs) != mesh.n:
        raise ConfigError("position fraction dimension mismatch")
    idx = []
    for ax in range(mesh.n):
        k = int(round(fracs[ax] * mesh.cells[ax] - 0.5)) % mesh.cells[ax]
        idx.append(k)
    flat = int(np.ravel_multi_index(idx, mesh.cells))
    return mesh.centers[flat]


def _rho_from_cells(mesh: Mesh, k) -> float:
    return float(k) * float(np.max(mesh.h))


def load_scenario(path) -> dict:
    try:
        with open(path) as fh:
            sc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    _require_keys(sc, {"name", "preset", "mesh", "theta", "seed", "checks", "sweep"},
                  "scenario")
    for key in ("name", "preset", "mesh", "checks"):
        if key not in sc:
            raise ConfigError(f"scenario is missing required key {key!r}")
    theta = float(sc.get("theta", 1.0))
    if not 0.5 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [1/2, 1], got {theta}")
    mesh_cfg = sc["mesh"]
    _require_keys(mesh_cfg, {"cells", "box", "tau", "steps", "t0", "boundary"},
                  "mesh")
    for key in ("cells", "box", "tau", "steps"):
        if key not in mesh_cfg:
            raise ConfigError(f"mesh config is missing {key!r}")
    for chk in sc["checks"]:
        if "name" not in chk:
            raise ConfigError("every check needs a name")
        if chk["name"] not in CHECKS:
            raise ConfigError(f"unknown check name {chk['name']!r}")
        allowed, _ = CHECKS[chk["name"]]
        _require_keys(chk, allowed | {"name"}, f"check {chk['name']!r}")
    return sc


def build_context(sc: dict) -> Context:
    preset_cfg = dict(sc["preset"])
    if "table" in preset_cfg:
        _require_keys(preset_cfg, {"table", "lambda", "Lambda", "R_c"}, "preset")
        coeffs = load_table(preset_cfg["table"], float(preset_cfg["lambda"]),
                            float(preset_cfg["Lambda"]),
                            float(preset_cfg.get("R_c", math.inf)))
    else:
        name = preset_cfg.pop("name", None)
        if name is None:
            raise ConfigError("preset needs a name or a table path")
        coeffs = make_preset(name, **preset_cfg)
    mesh_cfg = sc["mesh"]
    box = mesh_cfg["box"]
    lo = tuple(float(b[0]) for b in box)
    hi = tuple(float(b[1]) for b in box)
    domain = Domain(lo, hi, mesh_cfg.get("boundary", "periodic"))
    mesh = Mesh(domain, tuple(int(c) for c in mesh_cfg["cells"]),
                float(mesh_cfg["tau"]), float(mesh_cfg.get("t0", 0.0)),
                int(mesh_cfg["steps"]))
    spec = OperatorSpec(coeffs, domain)
    return Context(str(sc["name"]), spec, mesh, float(sc.get("theta", 1.0)),
                   int(sc.get("seed", 0)))


# ----------------------------------------------------------------------
# check builders: scenario params -> CheckRecord
# ----------------------------------------------------------------------


def _run_duality(ctx: Context, p: dict):
    mesh = ctx.mesh
    y_fracs = p.get("y_fracs", [[0.25]])
    x_fracs = p.get("x_fracs", [[0.75]])
    rho_cells = p.get("rho_cells", [4])
    sigma_cells = p.get("sigma_cells", [4])
    s_step = int(p.get("s_step", mesh.steps // 4))
    t_step = int(p.get("t_step", (3 * mesh.steps) // 4))
    pairs = []
    max_rho = max(_rho_from_cells(mesh, k) for k in rho_cells)
    max_sigma = max(_rho_from_cells(mesh, k) for k in sigma_cells)
    for yf in y_fracs:
        for xf in x_fracs:
            for rk in rho_cells:
                for sk in sigma_cells:
                    pairs.append(((float(mesh.times[s_step]), _cell_at_frac(mesh, yf)),
                                  (float(mesh.times[t_step]), _cell_at_frac(mesh, xf)),
                                  _rho_from_cells(mesh, rk), _rho_from_cells(mesh, sk)))
    S_idx = s_step - int(math.ceil(max_rho ** 2 / mesh.tau)) - 1
    T_idx = t_step + int(math.ceil(max_sigma ** 2 / mesh.tau)) + 1
    if S_idx < 0 or T_idx > mesh.steps:
        raise ConfigError("duality windows leave the mesh time grid")
    return V.check_duality(ctx.spec, mesh, pairs, float(mesh.times[T_idx]),
                           float(mesh.times[S_idx]),
                           tolerance=float(p.get("tolerance", 1e-10)))


def _run_semigroup(ctx: Context, p: dict):
    mesh = ctx.mesh
    s = int(p.get("s_step", 0))
    r = int(p.get("r_step", mesh.steps // 2))
    t = int(p.get("t_step", mesh.steps))
    return V.check_semigroup(ctx.spec, mesh, float(mesh.times[s]), float(mesh.times[r]),
                             float(mesh.times[t]),
                             tolerance=float(p.get("tolerance", 1e-12)))


def _run_normalization(ctx: Context, p: dict):
    mesh = ctx.mesh
    s = int(p.get("s_step", 0))
    t = int(p.get("t_step", mesh.steps))
    return V.check_normalization(ctx.spec, mesh, float(mesh.times[s]),
                                 float(mesh.times[t]),
                                 tolerance=float(p.get("tolerance", 1e-12)))


def _run_causality(ctx: Context, p: dict):
    mesh = ctx.mesh
    rho_cells = p.get("rho_cells", [6, 4])
    rhos = [_rho_from_cells(mesh, k) for k in rho_cells]
    nmax = int(math.ceil(max(rhos) ** 2 / mesh.tau))
    s_step = int(p.get("s_step", nmax + 1))
    t_step = int(p.get("t_step", mesh.steps))
    Y = (float(mesh.times[s_step]), _cell_at_frac(mesh, p.get("y_frac", [0.5])))
    return V.check_causality(ctx.spec, mesh, Y, rhos, float(mesh.times[t_step]))


def _run_heat_kernel(ctx: Context, p: dict):
    mesh = ctx.mesh
    rho_cells = p.get("rho_cells", [8, 6, 4])
    rhos = [_rho_from_cells(mesh, k) for k in rho_cells]
    nmax = int(math.ceil(max(rhos) ** 2 / mesh.tau * (1 - 1e-12)))
    s_step = int(p.get("s_step", nmax))
    dt = float(p.get("dt", 0.05))
    t_step = s_step + max(1, int(round(dt / mesh.tau)))
    if t_step > mesh.steps:
        raise ConfigError("heat kernel probe time leaves the mesh window")
    Y = (float(mesh.times[s_step]), _cell_at_frac(mesh, p.get("y_frac", [0.5])))
    return V.heat_kernel_check(ctx.spec, mesh, Y, float(mesh.times[t_step]), rhos,
                               tolerance=float(p.get("tolerance", 0.02)),
                               radius_factor=float(p.get("radius_factor", 3.0)))


def _segment_mask(mesh: Mesh, center_frac: float, halfwidth: float):
    gaps = mesh.centers[:, 0] - (mesh.domain.lo[0] + center_frac * mesh.domain.lengths[0])
    if mesh.periodic:
        L = mesh.domain.lengths[0]
        gaps = gaps - L * np.round(gaps / L)
    return np.abs(gaps) < halfwidth


def _run_gaffney(ctx: Context, p: dict):
    mesh = ctx.mesh
    F = _segment_mask(mesh, float(p.get("F_frac", 0.2)), float(p.get("halfwidth", 0.05)))
    E = _segment_mask(mesh, float(p.get("E_frac", 0.8)), float(p.get("halfwidth", 0.05)))
    g = np.zeros((ctx.spec.coeffs.N, mesh.ncells))
    g[:, F] = 1.0
    s = float(mesh.times[int(p.get("s_step", 0))])
    t = float(mesh.times[int(p.get("t_step", mesh.steps))])
    return V.check_gaffney(ctx.spec, mesh, E, F, g, s, t,
                           slack=float(p.get("slack", 1.05)), theta=ctx.theta)


def tent_profile(mesh: Mesh, gamma: float) -> np.ndarray:
    """Periodic-compatible tent with face slopes at most gamma."""
    x = mesh.centers[:, 0]
    lo = mesh.domain.lo[0]
    L = mesh.domain.lengths[0]
    return gamma * (L / 2.0 - np.abs(x - lo - L / 2.0))


def _run_davies(ctx: Context, p: dict):
    mesh = ctx.mesh
    gamma = float(p.get("gamma", 1.0))
    psi = tent_profile(mesh, gamma)
    f = np.ones((ctx.spec.coeffs.N, mesh.ncells))
    s = float(mesh.times[int(p.get("s_step", 0))])
    t = float(mesh.times[int(p.get("t_step", mesh.steps))])
    return V.davies_growth(ctx.spec, mesh, psi, gamma, f, s, t,
                           slack=float(p.get("slack", 1.05)), theta=ctx.theta)


def _run_gaussian(ctx: Context, p: dict):
    mesh = ctx.mesh
    rho = _rho_from_cells(mesh, p.get("rho_cells", 4))
    nmax = int(math.ceil(rho ** 2 / mesh.tau * (1 - 1e-12)))
    s_step = int(p.get("s_step", nmax))
    s = float(mesh.times[s_step])
    frac_list = p.get("dt_steps", [(mesh.steps - s_step) // 3,
                                   2 * (mesh.steps - s_step) // 3,
                                   mesh.steps - s_step])
    times = [float(mesh.times[s_step + int(k)]) for k in frac_list]
    Y = (s, _cell_at_frac(mesh, p.get("y_frac", [0.5])))
    samples = V.gaussian_samples(ctx.spec, mesh, Y, times, rho)
    return V.fit_gaussian(samples, ctx.spec.coeffs.lam, ctx.spec.coeffs.Lam, mesh.n,
                          c_max=float(p.get("c_max", 10.0)))


def _run_pointwise_decay(ctx: Context, p: dict):
    mesh = ctx.mesh
    rho = _rho_from_cells(mesh, p.get("rho_cells", 2))
    nmax = int(math.ceil(rho ** 2 / mesh.tau * (1 - 1e-12)))
    s_step = int(p.get("s_step", nmax))
    d_min = float(p.get("d_min_cells", 6)) * float(np.max(mesh.h))
    npts = int(p.get("n_points", 8))
    decade = float(p.get("decade", 1.0))
    ds = [d_min * 10 ** (decade * k / (npts - 1)) for k in range(npts)]
    Y = (float(mesh.times[s_step]), _cell_at_frac(mesh, p.get("y_frac", [0.1])))
    d_act, g = V.pointwise_ray_samples(ctx.spec, mesh, Y, ds, rho,
                                       axis=int(p.get("axis", 0)))
    return V.fit_pointwise_decay(d_act, g, mesh.n, margin=float(p.get("margin", 0.15)))


def _run_weak_levels(ctx: Context, p: dict):
    mesh = ctx.mesh
    rho = _rho_from_cells(mesh, p.get("rho_cells", 2))
    nmax = int(math.ceil(rho ** 2 / mesh.tau * (1 - 1e-12)))
    s_step = int(p.get("s_step", nmax))
    t_step = int(p.get("t_step", mesh.steps))
    Y = (float(mesh.times[s_step]), _cell_at_frac(mesh, p.get("y_frac", [0.5])))
    col = averaged_green_column(ctx.spec, mesh, Y, 1, rho, float(mesh.times[t_step]))
    return V.weak_lp_levels(col, use_gradient=bool(p.get("gradient", False)),
                            margin=float(p.get("margin", 0.2)))


def _run_interior_decay(ctx: Context, p: dict):
    mesh = ctx.mesh
    hmax = float(np.max(mesh.h))
    ladder = [float(k) * hmax for k in p.get("ladder_cells", [6, 8, 12, 16, 24, 32])]
    t_step = int(p.get("t_step", mesh.steps))
    X0 = (float(mesh.times[t_step]), _cell_at_frac(mesh, p.get("x_frac", [0.5])))
    return V.ph_decay_fit(ctx.spec, mesh, X0, ladder,
                          n_solutions=int(p.get("solutions", 10)),
                          seed=int(p.get("seed", ctx.seed)),
                          mu_min=float(p.get("mu_min", 0.9)))


def _bump_datum(ctx: Context, width: float, x0_frac) -> np.ndarray:
    mesh = ctx.mesh
    x0 = _cell_at_frac(mesh, x0_frac)
    gaps = mesh.centers - x0[None, :]
    if mesh.periodic:
        L = mesh.domain.lengths
        gaps = gaps - L[None, :] * np.round(gaps / L[None, :])
    prof = np.exp(-0.5 * (np.linalg.norm(gaps, axis=1) / width) ** 2)
    return np.tile(prof, (ctx.spec.coeffs.N, 1))


def _run_initial_trace(ctx: Context, p: dict):
    mesh = ctx.mesh
    width = float(p.get("width", 0.1 * float(np.min(mesh.domain.lengths))))
    x0_frac = p.get("x0_frac", [0.5])
    g = _bump_datum(ctx, width, x0_frac)
    s_step = int(p.get("s_step", 0))
    t_steps = p.get("t_steps", [4, 8, 16, 32])
    t_list = [float(mesh.times[s_step + int(k)]) for k in t_steps]
    return V.initial_trace_test(ctx.spec, mesh, g, _cell_at_frac(mesh, x0_frac),
                                float(mesh.times[s_step]), t_list,
                                tolerance=float(p.get("tolerance", 0.02)),
                                theta=ctx.theta)


def _run_bounded_initial(ctx: Context, p: dict):
    mesh = ctx.mesh
    g = np.zeros((ctx.spec.coeffs.N, mesh.ncells))
    mask = _segment_mask(mesh, float(p.get("center_frac", 0.3)),
                         float(p.get("halfwidth", 0.1)))
    g[:, mask] = 1.0
    s = float(mesh.times[int(p.get("s_step", 0))])
    t = float(mesh.times[int(p.get("t_step", mesh.steps))])
    return V.check_bounded_initial(ctx.spec, mesh, g, s, t, theta=ctx.theta)


def _run_local_boundedness(ctx: Context, p: dict):
    mesh = ctx.mesh
    fine = Mesh(mesh.domain, tuple(2 * c for c in mesh.cells), mesh.tau / 2.0,
                mesh.t0, 2 * mesh.steps)
    t_step = int(p.get("t_step", mesh.steps))
    X0 = (float(mesh.times[t_step]), _cell_at_frac(mesh, p.get("x_frac", [0.5])))
    R = float(p.get("R", 8 * float(np.max(mesh.h))))
    return V.check_local_boundedness(ctx.spec, mesh, fine, X0, R,
                                     seed=int(p.get("seed", ctx.seed)),
                                     stability=float(p.get("stability", 0.2)))


def _run_oracle(ctx: Context, p: dict):
    mesh = ctx.mesh
    rng = np.random.default_rng(int(p.get("seed", ctx.seed)))
    g = rng.standard_normal((ctx.spec.coeffs.N, mesh.ncells))
    t_step = int(p.get("t_step", min(mesh.steps, 24)))
    s, t = float(mesh.times[0]), float(mesh.times[t_step])
    marched = solve_forward(ctx.spec, mesh, g, None, s, t, theta=ctx.theta)
    dense = dense_spacetime_oracle(ctx.spec, mesh, g, None, s, t, theta=ctx.theta)
    num = float(np.max(np.abs(marched.values - dense.values)))
    den = float(np.max(np.abs(dense.values)))
    resid = num / den if den > 0 else 0.0
    tol = float(p.get("tolerance", 1e-9))
    return V.CheckRecord("oracle", "spacetime-oracle-equivalence",
                         "pass" if resid <= tol else "fail", tol,
                         fitted={"max_rel_diff": resid},
                         samples={"t_step": t_step})


def _run_adjoint(ctx: Context, p: dict):
    mesh = ctx.mesh
    rng = np.random.default_rng(int(p.get("seed", ctx.seed)))
    a = rng.standard_normal((ctx.spec.coeffs.N, mesh.ncells))
    b = rng.standard_normal((ctx.spec.coeffs.N, mesh.ncells))
    t_step = int(p.get("t_step", mesh.steps))
    s, t = float(mesh.times[0]), float(mesh.times[t_step])
    fa = solve_forward(ctx.spec, mesh, a, None, s, t, theta=ctx.theta).values[-1]
    bb = solve_backward(ctx.spec, mesh, b, None, t, s, theta=ctx.theta).values[0]
    lhs, rhs = float(np.sum(fa * b)), float(np.sum(a * bb))
    resid = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    tol = float(p.get("tolerance", 1e-12))
    return V.CheckRecord("adjoint", "forward-backward-adjointness",
                         "pass" if resid <= tol else "fail", tol,
                         fitted={"pairing_residual": resid},
                         samples={"t_step": t_step})


CHECKS = {
    "duality": ({"y_fracs", "x_fracs", "rho_cells", "sigma_cells", "s_step", "t_step",
                 "tolerance"}, _run_duality),
    "semigroup": ({"s_step", "r_step", "t_step", "tolerance"}, _run_semigroup),
    "normalization": ({"s_step", "t_step", "tolerance"}, _run_normalization),
    "causality": ({"rho_cells", "s_step", "t_step", "y_frac"}, _run_causality),
    "heat-kernel": ({"rho_cells", "s_step", "dt", "y_frac", "tolerance",
                     "radius_factor"}, _run_heat_kernel),
    "gaffney": ({"F_frac", "E_frac", "halfwidth", "s_step", "t_step", "slack"},
                _run_gaffney),
    "davies": ({"gamma", "s_step", "t_step", "slack"}, _run_davies),
    "gaussian": ({"rho_cells", "s_step", "dt_steps", "y_frac", "c_max"}, _run_gaussian),
    "pointwise-decay": ({"rho_cells", "s_step", "d_min_cells", "n_points", "decade",
                         "margin", "y_frac", "axis"}, _run_pointwise_decay),
    "weak-levels": ({"rho_cells", "s_step", "t_step", "y_frac", "gradient", "margin"},
                    _run_weak_levels),
    "interior-decay": ({"ladder_cells", "t_step", "x_frac", "solutions", "seed",
                        "mu_min"}, _run_interior_decay),
    "initial-trace": ({"width", "x0_frac", "s_step", "t_steps", "tolerance"},
                      _run_initial_trace),
    "bounded-initial": ({"center_frac", "halfwidth", "s_step", "t_step"},
                        _run_bounded_initial),
    "local-boundedness": ({"t_step", "x_frac", "R", "seed", "stability"},
                          _run_local_boundedness),
    "oracle": ({"t_step", "seed", "tolerance"}, _run_oracle),
    "adjoint": ({"t_step", "seed", "tolerance"}, _run_adjoint),
}


# ----------------------------------------------------------------------
# run / sweep drivers
# ----------------------------------------------------------------------


def _write_outputs(out_dir: Path, name: str, scenario: dict, report: V.VerificationReport):
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"scenario": name, "config": scenario, "report": report.to_dict()}
    report_to_json(doc, out_dir / "report.json")
    lines = [f"scenario {name}: {len(report.records)} checks, "
             f"all gating checks pass: {report.all_pass}"]
    for rec in report.records:
        fitted = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in sorted(rec.fitted.items()))
        lines.append(f"{rec.status.upper():14s} {rec.name:20s} anchor={rec.anchor} "
                     f"tol={rec.tolerance:g} {fitted}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    for idx, rec in enumerate(report.records):
        series = {k: v for k, v in rec.samples.items()
                  if isinstance(v, list) and v and isinstance(v[0], (int, float))}
        if not series:
            continue
        length = {len(v) for v in series.values()}
        if len(length) != 1:
            continue
        keys = sorted(series)
        rows = list(zip(*[series[k] for k in keys]))
        write_samples_csv(out_dir / f"{idx:02d}-{rec.name}.csv", keys, rows)


def run(scenario_path, out_dir=None, jobs: int = 1) -> int:
    """Execute a scenario; returns the process exit code."""
    try:
        sc = load_scenario(scenario_path)
        ctx = build_context(sc)
        report = V.VerificationReport()
        builders = [(chk["name"], {k: v for k, v in chk.items() if k != "name"})
                    for chk in sc["checks"]]
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futs = [pool.submit(CHECKS[name][1], ctx, params)
                        for name, params in builders]
                for fut in futs:
                    report.add(fut.result())
        else:
            for name, params in builders:
                report.add(CHECKS[name][1](ctx, params))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    out = Path(out_dir) if out_dir else Path(f"out-{ctx.name}")
    _write_outputs(out, ctx.name, sc, report)
    for rec in report.records:
        print(f"{rec.status.upper():14s} {rec.name:20s} [{rec.anchor}]")
    print(f"report written to {out}")
    return 0 if report.all_pass else 1


def _parse_values(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if "/" in tok:
            a, b = tok.split("/")
            vals.append(float(a) / float(b))
        else:
            vals.append(float(tok))
    return vals


def sweep(scenario_path, axis: str, values, out_dir=None) -> int:
    """Repeat the scenario's metric check along one refinement axis."""
    try:
        sc = load_scenario(scenario_path)
        sweep_cfg = sc.get("sweep")
        if not sweep_cfg:
            raise ConfigError("scenario has no 'sweep' section (metric check/field)")
        _require_keys(sweep_cfg, {"check", "field"}, "sweep")
        metric_check = sweep_cfg["check"]
        metric_field = sweep_cfg["field"]
        chk_cfg = next((c for c in sc["checks"] if c["name"] == metric_check), None)
        if chk_cfg is None:
            raise ConfigError(f"metric check {metric_check!r} not in scenario checks")
        if axis not in ("h", "tau", "rho"):
            raise ConfigError("sweep axis must be h, tau, or rho")
        vals = sorted(values, reverse=True)
        if list(values) != vals and list(values) != vals[::-1]:
            raise ConfigError("sweep values must be monotone")
        rows = []
        for v in values:
            sc_v = json.loads(json.dumps(sc))
            mesh_cfg = sc_v["mesh"]
            if axis == "h":
                L = [b[1] - b[0] for b in mesh_cfg["box"]]
                h0 = L[0] / mesh_cfg["cells"][0]
                mesh_cfg["cells"] = [int(round(Li / v)) for Li in L]
                scale = (v / h0) ** 2
                mesh_cfg["tau"] = mesh_cfg["tau"] * scale
                mesh_cfg["steps"] = int(round(mesh_cfg["steps"] / scale))
            elif axis == "tau":
                scale = v / mesh_cfg["tau"]
                mesh_cfg["tau"] = v
                mesh_cfg["steps"] = int(round(mesh_cfg["steps"] / scale))
            else:
                for c in sc_v["checks"]:
                    if c["name"] == metric_check:
                        c["rho_cells"] = [int(v)]
            ctx = build_context(sc_v)
            params = {k: val for k, val in
                      next(c for c in sc_v["checks"] if c["name"] == metric_check).items()
                      if k != "name"}
            rec = CHECKS[metric_check][1](ctx, params)
            metric = rec.fitted.get(metric_field)
            if metric is None:
                raise ConfigError(f"metric field {metric_field!r} not in record")
            rows.append((float(v), float(metric)))
            print(f"{axis}={v:g}: {metric_field}={metric:.6g}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    out = Path(out_dir) if out_dir else Path(f"sweep-{sc['name']}-{axis}")
    out.mkdir(parents=True, exist_ok=True)
    write_samples_csv(out / "sweep.csv", [axis, metric_field], rows)
    if len(rows) >= 2:
        fit = V.loglog_fit([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])
        print(f"observed order: {fit.exponent:.3f} (r2={fit.r2:.4f})")
        (out / "order.txt").write_text(
            f"observed order {fit.exponent!r} r2 {fit.r2!r}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="greenlab",
                                     description="Green's matrix verification lab")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_sweep = sub.add_parser("sweep", help="refinement study along one axis")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--axis", required=True, choices=["h", "tau", "rho"])
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.scenario, args.out, args.jobs)
    return sweep(args.scenario, args.axis, _parse_values(args.values), args.out)


if __name__ == "__main__":
    sys.exit(main())
