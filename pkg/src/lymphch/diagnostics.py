"""Discrete functionals evaluated on states: energy, dissipation, entropy, norms.

Dissipation terms use exactly the face averages of :mod:`lymphch.spatial`, so
the energy monitor in the stepper and the values reported here agree to
rounding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .grid import Grid
from .model import RegParams
from .spatial import FluxEval, evaluate

__all__ = [
    "DiagRecord",
    "energy",
    "dissipation",
    "energy_slack",
    "entropy_integral",
    "flux_I",
    "flux_identity",
    "segregation_report",
    "level_set_bound",
    "norms",
    "record",
]


def energy(s, p: RegParams, limit: bool = False) -> float:
    """``1/2 |grad phi|^2 + f`` integrated over the domain."""
    g = s.grid
    dens = model.energy_density_exact(s.phi, s.c) if limit else model.energy_density(s.phi, s.c, p)
    return 0.5 * g.h1seminorm(s.phi) ** 2 + g.integrate(dens)


def _face_sum(g: Grid, v: np.ndarray) -> float:
    return float(np.sum(v)) * g.cell_volume


def dissipation(s, p: RegParams, limit: bool = False, ev: FluxEval | None = None):
    """Return ``(D_mix, D_sol, D_art)``.

    ``D_mix`` is the mobility-weighted square of ``grad mu - [c]_+ grad d_c f``,
    ``D_sol`` the solute term ``[c]_+ exp(-[phi]) |grad d_c f|^2`` and
    ``D_art = delta |grad c|^2`` (zero when artificial diffusion is off).
    """
    g = s.grid
    if ev is None:
        ev = evaluate(g, s.phi, s.c, p, limit)
    d_mix = _face_sum(g, ev.mob_f * ev.drive * ev.drive)
    d_sol = _face_sum(g, ev.sol_f * ev.grad_w * ev.grad_w)
    d_art = ev.art * _face_sum(g, ev.grad_c * ev.grad_c)
    return d_mix, d_sol, d_art


def energy_slack(s, p: RegParams, limit: bool = False, ev: FluxEval | None = None) -> float:
    """Right side ``delta/2 (|grad phi|^2 - |grad c|^2)`` of the energy inequality."""
    g = s.grid
    if ev is None:
        ev = evaluate(g, s.phi, s.c, p, limit)
    if not ev.art:
        return 0.0
    return 0.5 * ev.art * _face_sum(g, ev.grad_phi * ev.grad_phi - ev.grad_c * ev.grad_c)


def entropy_integral(s, p: RegParams, limit: bool = False) -> tuple[float, float]:
    """Return ``(S, |lap phi|^2)`` with ``S`` the integral of the entropy density.

    In limit mode the unregularized density is used and ``S`` is ``inf`` once
    ``phi`` leaves ``(0, 1)``.
    """
    g = s.grid
    if limit:
        try:
            S = g.integrate(model.entropy_density(s.phi))
        except ValueError:
            S = float("inf")
    else:
        S = g.integrate(model.entropy_density_reg(s.phi, p))
    lap = g.laplacian(s.phi)
    return S, g.inner(lap, lap)


def flux_I(s, p: RegParams, limit: bool = False):
    """Face field ``sqrt(M) (grad mu - c grad d_c f)`` and its L2 norm.

    The squared norm equals ``D_mix`` by construction.
    """
    g = s.grid
    ev = evaluate(g, s.phi, s.c, p, limit)
    I = np.sqrt(ev.mob_f) * ev.drive
    return g.unflatten_faces(I), float(np.sqrt(_face_sum(g, I * I)))


def flux_identity(s, p: RegParams, psi, limit: bool = False) -> tuple[float, float]:
    """Pair a test field ``psi`` (zero normal component) with ``I`` two ways.

    Returns ``(direct, by_parts)``. ``direct`` is the face inner product of
    ``I`` and ``psi``. ``by_parts`` moves the third-order and the ``grad c``
    terms onto ``psi`` and uses ``sqrt(M) f1'' = 1``:

        <lap phi, div(sqrt(M) psi)> + <(1 - 2 sqrt(M)) grad phi, psi>
        + <c, div(sqrt(M) psi)> - <sqrt(M) [c]_+ grad d_c f, psi>
    """
    g = s.grid
    ev = evaluate(g, s.phi, s.c, p, limit)
    psi = g.flatten_faces(psi)
    sM = np.sqrt(ev.mob_f)
    direct = _face_sum(g, sM * ev.drive * psi)
    div_sm_psi = g.div_matrix @ (sM * psi)
    vol = g.cell_volume
    t1 = float(np.sum(ev.lap_phi * div_sm_psi)) * vol
    t2 = _face_sum(g, (ev.grad_phi - 2.0 * sM * ev.grad_phi) * psi)
    t3 = float(np.sum(s.c.ravel() * div_sm_psi)) * vol
    t4 = -_face_sum(g, sM * ev.cpos_f * ev.grad_w * psi)
    return direct, t1 + t2 + t3 + t4


def segregation_report(s, alphas=(0.01, 0.05)) -> dict:
    """Measure of the super- and sub-level sets ``{phi >= 1+a}``, ``{phi <= -a}``."""
    g = s.grid
    vol = g.cell_volume
    out = {"min_phi": float(s.phi.min()), "max_phi": float(s.phi.max()), "levels": {}}
    for a in alphas:
        out["levels"][float(a)] = {
            "upper": vol * int(np.count_nonzero(s.phi >= 1.0 + a)),
            "lower": vol * int(np.count_nonzero(s.phi <= -a)),
        }
    return out


def level_set_bound(measure: float, S: float, alpha: float, delta: float) -> bool:
    """Chebyshev check ``meas / (2 delta^2 (1-delta)^2) <= S / alpha^2``.

    On ``{phi >= 1 + alpha}`` the regularized entropy density is at least
    ``(alpha + delta)^2 / (2 M(1-delta))``, hence the bound (same below).
    """
    return measure / (2.0 * delta**2 * (1.0 - delta) ** 2) <= S / alpha**2


def norms(s) -> dict:
    g = s.grid
    lap = g.laplacian(s.phi)
    c32 = np.maximum(s.c, 0.0) ** 1.5
    gphi = g.flatten_faces(g.grad(s.phi))
    return {
        "norm_grad_phi": g.h1seminorm(s.phi),
        "grad_phi_l4": float((np.sum(gphi**4) * g.cell_volume) ** 0.25),
        "norm_c_l2": g.l2norm(s.c),
        "lap_phi_sq": g.inner(lap, lap),
        "grad_c32_sq": g.h1seminorm(c32) ** 2,
    }


@dataclass
class DiagRecord:
    t: float
    E: float
    D_mix: float
    D_sol: float
    D_art: float
    S: float
    mass_phi: float
    mass_c: float
    min_phi: float
    max_phi: float
    min_c: float
    max_c: float
    norm_grad_phi: float
    norm_lap_phi_sq_cum: float = 0.0
    norm_grad_c32_sq_cum: float = 0.0
    newton_iters: int = 0
    dt: float = 0.0
    extra: dict = field(default_factory=dict, repr=False)

    COLUMNS = (
        "t", "E", "D_mix", "D_sol", "D_art", "S", "mass_phi", "mass_c",
        "min_phi", "max_phi", "min_c", "max_c", "norm_grad_phi",
        "norm_lap_phi_sq_cum", "norm_grad_c32_sq_cum", "newton_iters", "dt",
    )

    def row(self) -> list:
        d = asdict(self)
        return [d[k] for k in self.COLUMNS]


def record(s, p: RegParams, limit: bool = False, **kw) -> DiagRecord:
    g = s.grid
    ev = evaluate(g, s.phi, s.c, p, limit)
    d_mix, d_sol, d_art = dissipation(s, p, limit, ev)
    S, _ = entropy_integral(s, p, limit)
    nm = norms(s)
    rec = DiagRecord(
        t=s.t,
        E=energy(s, p, limit),
        D_mix=d_mix,
        D_sol=d_sol,
        D_art=d_art,
        S=S,
        mass_phi=g.integrate(s.phi),
        mass_c=g.integrate(s.c),
        min_phi=float(s.phi.min()),
        max_phi=float(s.phi.max()),
        min_c=float(s.c.min()),
        max_c=float(s.c.max()),
        norm_grad_phi=nm["norm_grad_phi"],
        **kw,
    )
    rec.extra.update(nm)
    rec.extra["clamp_active"] = ev.coef.clamp_active
    return rec
