"""Experiment drivers: single runs, resume, parameter cascades, MMS studies."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, galerkin, model
from .config import ConfigError, RunConfig, parse_config
from .diagnostics import DiagRecord
from .grid import Grid
from .io import read_checkpoint, write_checkpoint, write_snapshot
from .model import RegParams
from .stepper import SolverError, State, StepReport, newton_solve, residual, step

log = logging.getLogger(__name__)

__all__ = [
    "RunResult",
    "run",
    "resume",
    "run_galerkin",
    "galerkin_initial",
    "cascade",
    "mms",
    "write_mms",
    "manufactured",
    "max_workers",
    "SERIES",
    "CHECKPOINT",
]

SERIES = "series.csv"
CHECKPOINT = "checkpoint.lch"
CONFIG_COPY = "config.json"


@dataclass
class RunResult:
    config: RunConfig
    records: list[DiagRecord]
    state: State
    out_dir: Path | None
    reports: list[StepReport] = field(default_factory=list)
    snapshots: list[State] = field(default_factory=list)
    trajectory: galerkin.Trajectory | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _fmt(v) -> str:
    return repr(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


class _Series:
    """Append-only ``series.csv`` writer (header only for a new file)."""

    def __init__(self, path: Path | None, append: bool = False):
        self.path = path
        if path is None:
            return
        if not append or not path.exists():
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(DiagRecord.COLUMNS)

    def write(self, rec: DiagRecord) -> None:
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(v) for v in rec.row()])


def _snapshot(out_dir: Path | None, cfg: RunConfig, s: State) -> None:
    if out_dir is None or not cfg.output.snapshots:
        return
    tag = f"{s.t:012.6f}"
    write_snapshot(s.phi, out_dir / f"phi_t{tag}.pgm")
    write_snapshot(s.c, out_dir / f"c_t{tag}.pgm")


def _cum_integrands(s: State) -> tuple[float, float]:
    g = s.grid
    lap = g.laplacian(s.phi)
    c32 = np.maximum(s.c, 0.0) ** 1.5
    return g.inner(lap, lap), g.h1seminorm(c32) ** 2


def _advance(cfg: RunConfig, s: State, T: float, out_dir: Path | None, series: _Series,
             lap_cum: float, c32_cum: float, keep_reports: bool, keep_states: bool, result: RunResult):
    """Step from ``s.t`` to ``T`` writing one record per output time."""
    p, sc, limit = cfg.params, cfg.solver, cfg.limit
    iters = 0
    for t_out in cfg.output_times(s.t, T):
        while s.t < t_out:
            try:
                s, rep = step(s, p, sc, limit, t_stop=t_out)
            except SolverError:
                if out_dir is not None:
                    write_checkpoint(s, out_dir / CHECKPOINT, lap_cum, c32_cum)
                result.state = s
                raise
            a, b = _cum_integrands(s)
            lap_cum += rep.dt_used * a
            c32_cum += rep.dt_used * b
            iters += rep.newton_iters
            if keep_reports:
                result.reports.append(rep)
        rec = diagnostics.record(s, p, limit, norm_lap_phi_sq_cum=lap_cum, norm_grad_c32_sq_cum=c32_cum,
                                 newton_iters=iters, dt=s.dt)
        iters = 0
        result.records.append(rec)
        if keep_states:
            result.snapshots.append(s.copy())
        series.write(rec)
        _snapshot(out_dir, cfg, s)
    result.state = s
    if out_dir is not None:
        write_checkpoint(s, out_dir / CHECKPOINT, lap_cum, c32_cum)
    return s


def _prepare_dir(cfg: RunConfig, out_dir) -> Path | None:
    if out_dir is False:
        return None
    out = Path(cfg.output.dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run(cfg: RunConfig, out_dir=None, keep_reports: bool = True, keep_states: bool = False) -> RunResult:
    """Run ``cfg`` from its initial data to ``T_final``.

    Writes ``series.csv``, per-output snapshots, the final checkpoint and a
    normalized copy of the config into ``out_dir`` (default
    ``cfg.output.dir``; pass ``False`` to write nothing).

    Raises:
        SolverError: the step controller gave up (state so far is checkpointed).
        galerkin.StepUnderflow: in galerkin mode.
    """
    if cfg.mode == "galerkin":
        return run_galerkin(cfg, out_dir, keep_states=keep_states)
    out = _prepare_dir(cfg, out_dir)
    if out is not None:
        (out / CONFIG_COPY).write_text(json.dumps(cfg.to_dict(), indent=2))
    phi0, c0 = cfg.initial_fields()
    s = State.initial(cfg.grid, phi0, c0)
    series = _Series(out / SERIES if out else None)
    result = RunResult(cfg, [], s, out)
    rec0 = diagnostics.record(s, cfg.params, cfg.limit, dt=cfg.solver.dt_init)
    result.records.append(rec0)
    if keep_states:
        result.snapshots.append(s.copy())
    series.write(rec0)
    _snapshot(out, cfg, s)
    _advance(cfg, s, cfg.T_final, out, series, 0.0, 0.0, keep_reports, keep_states, result)
    return result


def resume(checkpoint, until: float, keep_reports: bool = False) -> RunResult:
    """Continue a run from ``checkpoint`` to time ``until``.

    The config is read from ``config.json`` next to the checkpoint; records
    are appended to the ``series.csv`` there and the checkpoint is replaced.
    """
    checkpoint = Path(checkpoint)
    out = checkpoint.parent
    cfg_path = out / CONFIG_COPY
    if not cfg_path.exists():
        raise FileNotFoundError(f"{cfg_path}: no config next to the checkpoint")
    cfg = parse_config(json.loads(cfg_path.read_text()))
    if cfg.mode == "galerkin":
        raise ConfigError(["mode: galerkin runs cannot be resumed"])
    s, ledger = read_checkpoint(checkpoint)
    if s.grid != cfg.grid:
        raise ConfigError([f"grid: checkpoint grid {s.grid} differs from config"])
    if not until > s.t:
        raise ConfigError([f"until: must exceed the checkpoint time {s.t}"])
    series = _Series(out / SERIES, append=True)
    result = RunResult(cfg, [], s, out)
    _advance(cfg, s, float(until), out, series, ledger["lap_cum"], ledger["c32_cum"], keep_reports, False, result)
    return result


# -- galerkin mode --------------------------------------------------------------


def _galerkin_record(basis, g: galerkin.GalerkinState, p: RegParams, D, lap_cum, c32_cum) -> DiagRecord:
    phi = galerkin.reconstruct(basis, g.A)
    c = galerkin.reconstruct(basis, g.B)
    w = basis.weight
    return DiagRecord(
        t=g.t,
        E=galerkin.energy(basis, g, p),
        D_mix=D[0],
        D_sol=D[1],
        D_art=D[2],
        S=float(np.sum(model.entropy_density_reg(phi, p))) * w,
        mass_phi=float(np.sum(phi)) * w,
        mass_c=float(np.sum(c)) * w,
        min_phi=float(phi.min()),
        max_phi=float(phi.max()),
        min_c=float(c.min()),
        max_c=float(c.max()),
        norm_grad_phi=float(np.sqrt(np.sum(basis.eigenvalues * g.A**2))),
        norm_lap_phi_sq_cum=lap_cum,
        norm_grad_c32_sq_cum=c32_cum,
    )


def galerkin_initial(cfg: RunConfig) -> tuple[galerkin.SpectralBasis, galerkin.GalerkinState]:
    """Basis and projected initial data; nodes coincide with a ``2N``-cell grid."""
    basis = galerkin.SpectralBasis(cfg.galerkin.N, cfg.grid.L[0])
    node_grid = Grid((basis.Q,), (basis.L,))
    phi0, c0 = cfg.initial_fields(node_grid)
    return basis, galerkin.GalerkinState(galerkin.project(basis, phi0), galerkin.project(basis, c0))


def run_galerkin(cfg: RunConfig, out_dir=None, keep_states: bool = False) -> RunResult:
    """Spectral run; records use the node quadrature of the basis.

    The cumulative norm columns are trapezoidal sums over output times and
    ``newton_iters`` holds the number of integrator steps of the whole run.
    """
    out = _prepare_dir(cfg, out_dir)
    if out is not None:
        (out / CONFIG_COPY).write_text(json.dumps(cfg.to_dict(), indent=2))
    basis, g0 = galerkin_initial(cfg)
    gs = cfg.galerkin
    times = np.concatenate([[0.0], cfg.output_times()])
    traj = galerkin.integrate(basis, g0, cfg.T_final, cfg.params, gs.ode_tol, times, gs.min_step, gs.max_steps)
    node_grid = Grid((basis.Q,), (basis.L,))
    series = _Series(out / SERIES if out else None)
    result = RunResult(cfg, [], None, out)
    result.trajectory = traj
    lap_cum = c32_cum = 0.0
    prev = None
    for i, t in enumerate(traj.t):
        gi = traj.state(i)
        phi = galerkin.reconstruct(basis, gi.A)
        c = galerkin.reconstruct(basis, gi.B)
        s = State(node_grid, phi, c, t=float(t))
        a = float(np.sum(basis.eigenvalues**2 * gi.A**2))
        b = _cum_integrands(s)[1]
        if prev is not None:
            dt = t - prev[0]
            lap_cum += 0.5 * dt * (a + prev[1])
            c32_cum += 0.5 * dt * (b + prev[2])
        prev = (t, a, b)
        rec = _galerkin_record(basis, gi, cfg.params, traj.dissipation[i], lap_cum, c32_cum)
        rec.newton_iters = traj.steps if i == len(traj.t) - 1 else 0
        rec.extra["ledger"] = float(traj.ledger[i])
        result.records.append(rec)
        if keep_states:
            result.snapshots.append(s)
        series.write(rec)
        _snapshot(out, cfg, s)
        result.state = s
    if out is not None:
        write_checkpoint(result.state, out / CHECKPOINT, lap_cum, c32_cum)
    return result


# -- cascades --------------------------------------------------------------------

CASCADE_PARAMS = ("delta", "epsilon", "N")
ALPHAS = (0.01, 0.05)


def max_workers(n_tasks: int) -> int:
    """Parallelism cap from ``LCH_THREADS`` (default: CPU count)."""
    env = os.environ.get("LCH_THREADS")
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def _variant(cfg: RunConfig, param: str, value) -> RunConfig:
    if param == "delta":
        return replace(cfg, params=replace(cfg.params, delta=float(value)), mode="regularized"
                       if cfg.mode == "galerkin" else cfg.mode)
    if param == "epsilon":
        return replace(cfg, params=replace(cfg.params, epsilon=float(value)), mode="regularized"
                       if cfg.mode == "galerkin" else cfg.mode)
    return replace(cfg, galerkin=replace(cfg.galerkin, N=int(value)), mode="galerkin")


def _eval_points(cfg: RunConfig, param: str, values) -> np.ndarray | None:
    if param != "N":
        return None
    q = 4 * max(int(v) for v in values)
    return (np.arange(q) + 0.5) * (cfg.grid.L[0] / q)


def _cascade_row(cfg: RunConfig, param: str, value, out_dir: Path, x_eval):
    """Run one cascade row; returns the summary row and sampled trajectories."""
    row = {"param": param, "value": value, "status": "ok"}
    try:
        sub = _variant(cfg, param, value)
        res = run(sub, out_dir, keep_reports=False, keep_states=True)
    except (SolverError, galerkin.StepUnderflow, ValueError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
        return row, None, None
    delta = sub.params.delta
    S = res.column("S")
    row.update(
        min_phi=float(res.records[-1].min_phi),
        max_phi=float(res.records[-1].max_phi),
        min_phi_run=float(res.column("min_phi").min()),
        max_phi_run=float(res.column("max_phi").max()),
        min_c_run=float(res.column("min_c").min()),
        S_T=float(S[-1]),
        S_max=float(S.max()),
    )
    chebyshev = True
    for a in ALPHAS:
        up = lo = 0.0
        for st, s_val in zip(res.snapshots, S):
            rep = diagnostics.segregation_report(st, (a,))["levels"][a]
            up, lo = max(up, rep["upper"]), max(lo, rep["lower"])
            chebyshev &= diagnostics.level_set_bound(rep["upper"] + rep["lower"], s_val, a, delta)
        row[f"meas_upper_{a:g}"] = up
        row[f"meas_lower_{a:g}"] = lo
    row["chebyshev_ok"] = bool(chebyshev)
    if x_eval is not None:
        traj = res.trajectory
        basis = traj.basis
        samples = [(galerkin.reconstruct(basis, a, x_eval), galerkin.reconstruct(basis, b, x_eval))
                   for a, b in zip(traj.A, traj.B)]
    else:
        samples = [(st.phi, st.c) for st in res.snapshots]
    times = res.column("t")
    return row, times, samples


def _distance(cfg: RunConfig, x_eval, u, v) -> float:
    if x_eval is not None:
        w = cfg.grid.L[0] / len(x_eval)
        return float(np.sqrt(np.sum((u - v) ** 2) * w))
    return cfg.grid.l2norm(u - v)


def cascade(cfg: RunConfig, param: str, values, out_dir=None) -> dict:
    """Run matched experiments over one regularization parameter.

    ``values`` must decrease for ``delta``/``epsilon`` and increase for
    ``N``. Rows that fail are reported with their error and the remaining
    rows still run. Writes ``cascade.csv`` and ``cascade.json``.
    """
    if param not in CASCADE_PARAMS:
        raise ConfigError([f"param: must be one of {', '.join(CASCADE_PARAMS)}, got {param!r}"])
    values = list(values)
    if not values:
        raise ConfigError(["values: empty"])
    if param == "N":
        if any(int(v) != v or v < 1 for v in values):
            raise ConfigError(["values: N must be positive integers"])
        values = [int(v) for v in values]
        ordered = all(a < b for a, b in zip(values, values[1:]))
        if cfg.grid.dim != 1:
            raise ConfigError(["grid: N cascades are 1D only"])
    else:
        ordered = all(a > b for a, b in zip(values, values[1:]))
        try:
            for v in values:
                _variant(cfg, param, v)
        except ValueError as exc:
            raise ConfigError([f"values: {exc}"]) from exc
    if not ordered:
        raise ConfigError([f"values: must be strictly {'increasing' if param == 'N' else 'decreasing'}"])

    out = Path(cfg.output.dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x_eval = _eval_points(cfg, param, values)
    dirs = [out / f"{param}_{i}_{v:g}" for i, v in enumerate(values)]
    workers = max_workers(len(values))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(_cascade_row, cfg, param, v, d, x_eval) for v, d in zip(values, dirs)]
            results = [f.result() for f in futs]
    else:
        results = [_cascade_row(cfg, param, v, d, x_eval) for v, d in zip(values, dirs)]

    rows = [r[0] for r in results]
    for i, (row, times, samples) in enumerate(results):
        row["dist_prev_final"] = row["dist_prev_max"] = float("nan")
        if i == 0 or samples is None or results[i - 1][2] is None:
            continue
        prev_t, prev_s = results[i - 1][1], results[i - 1][2]
        if len(prev_t) != len(times) or not np.array_equal(prev_t, times):
            continue
        d = [max(_distance(cfg, x_eval, a[0], b[0]), _distance(cfg, x_eval, a[1], b[1]))
             for a, b in zip(samples, prev_s)]
        row["dist_prev_final"] = d[-1]
        row["dist_prev_max"] = max(d)

    summary = {"param": param, "values": values, "rows": rows}
    if param == "delta":
        summary.update(_delta_fit(rows))
    _write_cascade(out, rows, summary)
    return summary


def _delta_fit(rows) -> dict:
    """Excess of ``phi`` beyond ``[0, 1]`` against ``delta``."""
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        return {"excess": [], "K": float("nan"), "trend_ok": False}
    d = np.array([r["value"] for r in ok], dtype=float)
    ex = np.array([max(0.0, r["max_phi_run"] - 1.0, -r["min_phi_run"]) for r in ok])
    K = float(np.max(ex / d))
    K_lsq = float(np.dot(ex, d) / np.dot(d, d))
    pos = ex > 0
    slope = float(np.polyfit(np.log(d[pos]), np.log(ex[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    trend_ok = bool(np.all(np.diff(ex) <= 1e-15) and np.all(ex <= K * d * (1 + 1e-12)))
    return {"excess": ex.tolist(), "K": K, "K_lsq": K_lsq, "loglog_slope": slope, "trend_ok": trend_ok}


def _write_cascade(out: Path, rows, summary) -> None:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(out / "cascade.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    (out / "cascade.json").write_text(json.dumps(summary, indent=2, default=float))


# -- manufactured solutions ------------------------------------------------------


@dataclass
class Manufactured:
    """Exact fields and forcing terms as numpy callables of ``(x, t)``."""

    phi: object
    c: object
    source_phi: object
    source_c: object


def manufactured(p: RegParams, L: float) -> Manufactured:
    """Forcing for ``phi = 0.5 + 0.1 cos(pi x/L) e^-t``, ``c = 0.2 + 0.1 cos(pi x/L) e^-t``.

    The fields stay inside ``[delta, 1-delta]`` and below ``1/epsilon``, so
    the regularizations are inactive and the exact functions apply.
    """
    import sympy as sy

    x, t = sy.symbols("x t", real=True)
    mode = sy.cos(sy.pi * x / L) * sy.exp(-t)
    phi = sy.Rational(1, 2) + sy.Rational(1, 10) * mode
    c = sy.Rational(1, 5) + sy.Rational(1, 10) * mode
    if not (p.delta <= 0.4 and 0.3 < 1.0 / p.epsilon):
        raise ConfigError(["params: regularization would be active on the manufactured solution"])
    mob = phi**2 * (1 - phi) ** 2
    mu = -sy.diff(phi, x, 2) + sy.log(phi / (1 - phi)) + 1 - 2 * phi - c
    w = c + 1 - phi
    drive = sy.diff(mu, x) - c * sy.diff(w, x)
    flux_phi = mob * drive
    art = p.delta if p.use_artificial_diffusion else 0
    flux_c = -c * flux_phi + c * sy.exp(-phi) * sy.diff(w, x) + art * sy.diff(c, x)
    s_phi = sy.diff(phi, t) - sy.diff(flux_phi, x)
    s_c = sy.diff(c, t) - sy.diff(flux_c, x)
    f = lambda e: sy.lambdify((x, t), e, "numpy")  # noqa: E731
    return Manufactured(f(phi), f(c), f(s_phi), f(s_c))


def mms(cfg: RunConfig, levels: int = 4, n0: int | None = None) -> dict:
    """Convergence study with dt proportional to h^2 on ``levels`` grids.

    The coarsest grid has ``n0`` cells (default: the config grid), each level
    doubles it and quadruples the number of fixed time steps. Newton is
    called directly (no energy monitor) because the forcing does work on the
    system. Reports L-infinity errors at ``T_final``, observed orders, the
    residual of the exact solution and a zero-source control.
    """
    if cfg.grid.dim != 1 or cfg.mode != "regularized":
        raise ConfigError(["mms: requires a 1D regularized configuration"])
    if levels < 2:
        raise ConfigError(["levels: need at least 2"])
    L = cfg.grid.L[0]
    n0 = cfg.grid.n[0] if n0 is None else n0
    p, sc, T = cfg.params, cfg.solver, cfg.T_final
    ms = manufactured(p, L)
    h0 = L / n0
    steps0 = int(np.ceil(T / (cfg.mms_dt_factor * h0 * h0)))
    rows = []
    for lev in range(levels):
        n = n0 * 2**lev
        g = Grid((n,), (L,))
        (x,) = g.centers()
        nsteps = steps0 * 4**lev
        dt = T / nsteps
        s = State(g, ms.phi(x, 0.0), ms.c(x, 0.0))
        exact_res = 0.0
        control_res = 0.0
        for k in range(nsteps):
            t1 = (k + 1) * dt
            src = (ms.source_phi(x, t1), ms.source_c(x, t1))
            if k == 0:
                s_ex = State(g, ms.phi(x, t1), ms.c(x, t1))
                s_ex0 = State(g, ms.phi(x, 0.0), ms.c(x, 0.0))
                exact_res = max(float(np.abs(r).max()) for r in residual(s_ex, s_ex0, dt, p, source=src))
                control_res = max(float(np.abs(r).max()) for r in residual(s_ex, s_ex0, dt, p))
            s, _ = newton_solve(s, dt, p, sc, source=src)
            s.t = t1
        rows.append({
            "n": n,
            "h": L / n,
            "dt": dt,
            "steps": nsteps,
            "err_phi": float(np.abs(s.phi - ms.phi(x, T)).max()),
            "err_c": float(np.abs(s.c - ms.c(x, T)).max()),
            "exact_residual": exact_res,
            "zero_source_residual": control_res,
        })
    for a, b in zip(rows, rows[1:]):
        b["order_phi"] = float(np.log2(a["err_phi"] / b["err_phi"]))
        b["order_c"] = float(np.log2(a["err_c"] / b["err_c"]))
        b["order_residual"] = float(np.log2(a["exact_residual"] / b["exact_residual"]))
    return {
        "rows": rows,
        "min_order_phi": min(r["order_phi"] for r in rows[1:]),
        "min_order_c": min(r["order_c"] for r in rows[1:]),
    }


def write_mms(out_dir, table: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = []
    for r in table["rows"]:
        keys += [k for k in r if k not in keys]
    path = out / "mms.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, restval="")
        w.writeheader()
        for r in table["rows"]:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path
