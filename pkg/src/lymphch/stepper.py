"""Backward-Euler time stepping for the regularized system.

Each step solves for ``(phi, c)`` at the new time with the chemical potential
eliminated (it is a local function of ``phi`` and ``c`` plus a Laplacian), so
the ``phi`` residual carries a biharmonic stencil. Both equations are in
divergence form with zero boundary flux, so the total of ``phi`` and of ``c``
is conserved up to the Newton residual.

The step controller rejects a step and halves ``dt`` when Newton fails, when
the discrete energy inequality is violated beyond ``energy_slack_tol``, or
when ``c`` dips below ``-10 * newton_tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics
from .grid import Grid
from .model import RegParams
from .spatial import FluxEval, evaluate

log = logging.getLogger(__name__)

__all__ = [
    "State",
    "SolverConfig",
    "StepReport",
    "SolverError",
    "NewtonDiverged",
    "DtUnderflow",
    "chemical_potential",
    "fluxes",
    "residual",
    "residual_norm",
    "residual_scale",
    "jacobian",
    "newton_solve",
    "step",
]


class SolverError(RuntimeError):
    pass


class NewtonDiverged(SolverError):
    """Newton did not reach the tolerance; retry with a smaller step."""


class DtUnderflow(SolverError):
    """The step size fell below ``dt_min`` without an accepted step."""


@dataclass
class State:
    """Discrete unknowns plus the controller memory needed to resume exactly.

    ``dt`` is the controller's nominal step (``None`` before the first step)
    and ``accept_streak`` counts consecutive accepted steps since the last
    increase of ``dt``.
    """

    grid: Grid
    phi: np.ndarray
    c: np.ndarray
    t: float = 0.0
    step_index: int = 0
    dt: float | None = None
    accept_streak: int = 0

    def __post_init__(self):
        self.phi = np.array(self.grid.check(self.phi), dtype=np.float64)
        self.c = np.array(self.grid.check(self.c), dtype=np.float64)
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.c))):
            raise ValueError("state fields must be finite")

    @classmethod
    def initial(cls, grid: Grid, phi0, c0) -> "State":
        """Initial data with ``0 < phi0 < 1`` and ``c0 >= 0``."""
        phi0 = np.broadcast_to(np.asarray(phi0, dtype=np.float64), grid.shape)
        c0 = np.broadcast_to(np.asarray(c0, dtype=np.float64), grid.shape)
        if not np.all((phi0 > 0.0) & (phi0 < 1.0)):
            raise ValueError("initial phi must lie strictly inside (0, 1)")
        if np.any(c0 < 0.0):
            raise ValueError("initial c must be nonnegative")
        return cls(grid, phi0, c0)

    def copy(self) -> "State":
        return replace(self, phi=self.phi.copy(), c=self.c.copy())


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-6
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    energy_slack_tol: float = 1e-9
    linear_tol: float = 1e-12
    max_halvings: int = 8
    grow_after: int = 5
    grow_factor: float = 1.5

    def __post_init__(self):
        errors = []
        if not (0.0 < self.dt_min <= self.dt_init <= self.dt_max):
            errors.append("need 0 < dt_min <= dt_init <= dt_max")
        for name in ("newton_tol", "energy_slack_tol", "linear_tol"):
            if not getattr(self, name) > 0.0:
                errors.append(f"{name} must be positive")
        if self.newton_max_iters < 1:
            errors.append("newton_max_iters must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class StepReport:
    accepted: bool
    dt_used: float
    newton_iters: int = 0
    residual_norm: float = float("nan")
    energy_before: float = float("nan")
    energy_after: float = float("nan")
    D_mix: float = 0.0
    D_sol: float = 0.0
    D_art: float = 0.0
    slack: float = 0.0
    energy_defect: float = float("nan")  # E_new - E_old + dt (D_mix + D_sol - slack)
    min_c: float = float("nan")
    rejections: int = 0
    residual_history: list = field(default_factory=list)


# -- spatial pieces --------------------------------------------------------------


def chemical_potential(grid: Grid, phi, c, p: RegParams, limit: bool = False) -> np.ndarray:
    """``mu = -lap(phi) + d_phi f(phi, c)`` as a cell field."""
    return evaluate(grid, phi, c, p, limit).mu.reshape(grid.shape)


def fluxes(s: State, p: RegParams, limit: bool = False):
    """Face fields ``(F_phi, F_c)`` with ``d_t phi = div F_phi``, ``d_t c = div F_c``."""
    ev = evaluate(s.grid, s.phi, s.c, p, limit)
    return s.grid.unflatten_faces(ev.flux_phi), s.grid.unflatten_faces(ev.flux_c)


def _residual_flat(grid, phi, c, phi_old, c_old, dt, p, limit, source):
    ev = evaluate(grid, phi, c, p, limit)
    D = grid.div_matrix
    r_phi = (phi.ravel() - phi_old.ravel()) / dt - D @ ev.flux_phi
    r_c = (c.ravel() - c_old.ravel()) / dt - D @ ev.flux_c
    if source is not None:
        r_phi = r_phi - np.ravel(source[0])
        r_c = r_c - np.ravel(source[1])
    return np.concatenate([r_phi, r_c]), ev


def residual(s_new: State, s_old: State, dt: float, p: RegParams, limit: bool = False, source=None):
    """Backward-Euler residual pair ``(R_phi, R_c)`` at ``s_new``.

    ``source`` is an optional pair of cell fields added to the right-hand
    sides (used by manufactured-solution studies).
    """
    g = s_new.grid
    r, _ = _residual_flat(g, s_new.phi, s_new.c, s_old.phi, s_old.c, dt, p, limit, source)
    return r[: g.size].reshape(g.shape), r[g.size:].reshape(g.shape)


def residual_norm(grid: Grid, r: np.ndarray, scale: np.ndarray) -> float:
    """Discrete L2 norm of the residual divided by ``scale`` entrywise.

    ``newton_solve`` passes ``scale = max(|diag J|, 1/dt)`` taken at the
    initial guess, which measures the residual in units of the unknowns. An
    unscaled norm has a floor of roughly ``eps * M / h^4`` from rounding in
    the biharmonic stencil, far above any useful tolerance on fine grids.
    """
    q = r / scale
    return float(np.sqrt(np.sum(q * q) * grid.cell_volume))


def residual_scale(J: sp.csr_matrix, dt: float) -> np.ndarray:
    return np.maximum(np.abs(J.diagonal()), 1.0 / dt)


def jacobian(grid: Grid, ev: FluxEval, dt: float, p: RegParams) -> sp.csr_matrix:
    """Analytic Jacobian of the flat residual ``[R_phi; R_c]``."""
    G = grid.grad_matrix
    A = grid.face_avg_matrix
    Dv = grid.div_matrix
    L = grid.laplacian_matrix
    n = grid.size
    diag = sp.diags
    co = ev.coef

    dX_dphi = G @ (-L + diag(co.dpot_phi)) + diag(ev.cpos_f) @ G
    dX_dc = -G - diag(ev.grad_w) @ A @ diag(co.dcpos) - diag(ev.cpos_f) @ G
    dFp_dphi = diag(ev.drive) @ A @ diag(co.dmob) + diag(ev.mob_f) @ dX_dphi
    dFp_dc = diag(ev.mob_f) @ dX_dc
    dFc_dphi = -diag(ev.cpos_f) @ dFp_dphi + diag(ev.grad_w) @ A @ diag(co.dsol_phi) - diag(ev.sol_f) @ G
    dFc_dc = (
        -diag(ev.flux_phi) @ A @ diag(co.dcpos)
        - diag(ev.cpos_f) @ dFp_dc
        + diag(ev.grad_w) @ A @ diag(co.dsol_c)
        + diag(ev.sol_f) @ G
    )
    if ev.art:
        dFc_dc = dFc_dc + ev.art * G
    eye = sp.identity(n, format="csr") / dt
    return sp.bmat(
        [[eye - Dv @ dFp_dphi, -Dv @ dFp_dc], [-Dv @ dFc_dphi, eye - Dv @ dFc_dc]],
        format="csr",
    )


def _solve_banded_1d(J: sp.csr_matrix, rhs: np.ndarray, n: int) -> np.ndarray:
    # Interleave (phi_i, c_i) so the coupled biharmonic system is banded.
    perm = np.empty(2 * n, dtype=np.int64)
    perm[:n] = 2 * np.arange(n)
    perm[n:] = 2 * np.arange(n) + 1
    coo = J.tocoo()
    rows = perm[coo.row]
    cols = perm[coo.col]
    lower = int(max(0, np.max(rows - cols)))
    upper = int(max(0, np.max(cols - rows)))
    ab = np.zeros((lower + upper + 1, 2 * n))
    np.add.at(ab, (upper + rows - cols, cols), coo.data)
    b = np.empty(2 * n)
    b[perm] = rhs
    x = scipy.linalg.solve_banded((lower, upper), ab, b, check_finite=False)
    return x[perm]


def _solve_krylov(J: sp.csr_matrix, rhs: np.ndarray, tol: float) -> np.ndarray:
    d = J.diagonal()
    d = np.where(d != 0.0, d, 1.0)
    precond = spla.LinearOperator(J.shape, matvec=lambda v: v / d)
    x, info = spla.gmres(J, rhs, rtol=tol, atol=0.0, restart=200, maxiter=20, M=precond)
    if info != 0:
        # Jacobi-preconditioned GMRES stalls on fine grids; fall back to LU.
        log.debug("gmres info=%d, falling back to sparse LU", info)
        x = spla.splu(J.tocsc()).solve(rhs)
    return x


def _linear_solve(grid: Grid, J, rhs, cfg: SolverConfig) -> np.ndarray:
    if grid.dim == 1:
        return _solve_banded_1d(J, rhs, grid.size)
    return _solve_krylov(J, rhs, cfg.linear_tol)


def newton_solve(
    s_old: State,
    dt: float,
    p: RegParams,
    cfg: SolverConfig,
    limit: bool = False,
    source=None,
) -> tuple[State, StepReport]:
    """Solve one backward-Euler step by damped Newton.

    At least one Newton update is always taken. A trial update whose residual
    is larger (or non-finite) is halved up to ``cfg.max_halvings`` times.

    Raises:
        NewtonDiverged: iterations exhausted, line search failed, or the
            residual became non-finite.
    """
    g = s_old.grid
    n = g.size
    phi_old, c_old = s_old.phi, s_old.c
    u = np.concatenate([phi_old.ravel(), c_old.ravel()])

    def resid(u):
        with np.errstate(all="ignore"):
            return _residual_flat(g, u[:n].reshape(g.shape), u[n:].reshape(g.shape),
                                  phi_old, c_old, dt, p, limit, source)

    r, ev = resid(u)
    J = jacobian(g, ev, dt, p)
    scale = residual_scale(J, dt)
    rn = residual_norm(g, r, scale)
    if not np.isfinite(rn):
        raise NewtonDiverged("non-finite residual at the initial guess")
    history = [rn]
    for it in range(1, cfg.newton_max_iters + 1):
        if it > 1:
            J = jacobian(g, ev, dt, p)
        try:
            with np.errstate(all="ignore"):
                du = _linear_solve(g, J, -r, cfg)
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            raise NewtonDiverged(f"linear solve failed: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise NewtonDiverged("non-finite Newton update")
        lam = 1.0
        for _ in range(cfg.max_halvings + 1):
            u_try = u + lam * du
            r_try, ev_try = resid(u_try)
            rn_try = residual_norm(g, r_try, scale)
            if np.isfinite(rn_try) and rn_try <= rn:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(f"line search failed at iteration {it} (residual {rn:.3e})")
        u, r, ev, rn = u_try, r_try, ev_try, rn_try
        history.append(rn)
        if rn <= cfg.newton_tol:
            s_new = replace(
                s_old,
                phi=u[:n].reshape(g.shape).copy(),
                c=u[n:].reshape(g.shape).copy(),
                t=s_old.t + dt,
                step_index=s_old.step_index + 1,
            )
            rep = StepReport(accepted=True, dt_used=dt, newton_iters=it, residual_norm=rn,
                             residual_history=history)
            return s_new, rep
    raise NewtonDiverged(f"no convergence in {cfg.newton_max_iters} iterations (residual {rn:.3e})")


def step(
    s: State,
    p: RegParams,
    cfg: SolverConfig,
    limit: bool = False,
    t_stop: float | None = None,
) -> tuple[State, StepReport]:
    """Advance by one accepted step, adapting ``dt``.

    If ``t_stop`` is given the step is shortened to land on it exactly; the
    nominal step stored in the returned state is not shortened.

    Raises:
        DtUnderflow: no acceptable step with ``dt >= cfg.dt_min``.
    """
    dt_nom = s.dt if s.dt is not None else cfg.dt_init
    e_old = diagnostics.energy(s, p, limit)
    rejections = 0
    while True:
        dt = dt_nom
        clipped = False
        if t_stop is not None and s.t + dt >= t_stop:
            dt = t_stop - s.t
            clipped = True
        ok = False
        try:
            s_new, rep = newton_solve(s, dt, p, cfg, limit)
        except NewtonDiverged as exc:
            log.debug("t=%.6g dt=%.3e rejected: %s", s.t, dt, exc)
        else:
            ev = evaluate(s.grid, s_new.phi, s_new.c, p, limit)
            rep.energy_before = e_old
            rep.energy_after = diagnostics.energy(s_new, p, limit)
            rep.D_mix, rep.D_sol, rep.D_art = diagnostics.dissipation(s_new, p, limit, ev)
            rep.slack = diagnostics.energy_slack(s_new, p, limit, ev)
            rep.energy_defect = rep.energy_after - e_old + dt * (rep.D_mix + rep.D_sol - rep.slack)
            rep.min_c = float(s_new.c.min())
            ok = rep.energy_defect <= cfg.energy_slack_tol and rep.min_c >= -10.0 * cfg.newton_tol
            if not ok:
                log.debug("t=%.6g dt=%.3e rejected: energy defect %.3e, min c %.3e",
                          s.t, dt, rep.energy_defect, rep.min_c)
        if ok:
            break
        rejections += 1
        dt_nom = 0.5 * dt
        if dt_nom < cfg.dt_min:
            raise DtUnderflow(f"dt fell below dt_min={cfg.dt_min:g} at t={s.t:.6g}")

    streak = s.accept_streak + 1 if rejections == 0 else 1
    if streak >= cfg.grow_after:
        dt_nom = min(cfg.grow_factor * dt_nom, cfg.dt_max)
        streak = 0
    s_new.dt = dt_nom
    s_new.accept_streak = streak
    if clipped:
        s_new.t = t_stop
    rep.rejections = rejections
    return s_new, rep
