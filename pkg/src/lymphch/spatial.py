"""Finite-volume evaluation of the two transport fluxes.

All arrays in :class:`FluxEval` are flat: cell quantities have length
``grid.size`` (row-major), face quantities have length ``grid.n_faces``
(axis 0 faces first). Coefficients are averaged to faces *after* being
evaluated in cells, e.g. ``mean(M(phi_i), M(phi_j))``.

Two coefficient sets are supported:

* regularized (default): ``M_delta``, ``f_{1,delta}``, ``[c]_+^eps``,
  ``exp(-[phi]_+^1)`` and optional ``delta * Laplacian(c)``;
* limit: exact degenerate mobility and logarithmic potential, ``max(c, 0)``
  without a cap, no artificial diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .grid import Grid
from .model import RegParams


@dataclass(frozen=True)
class Coefficients:
    """Cell values of every nonlinear coefficient and its derivative."""

    mob: np.ndarray
    dmob: np.ndarray
    pot: np.ndarray  # d f / d phi
    dpot_phi: np.ndarray  # d^2 f / d phi^2 (the d/dc part is the constant -1)
    cpos: np.ndarray
    dcpos: np.ndarray
    sol: np.ndarray  # [c]_+ exp(-[phi]_+^1)
    dsol_phi: np.ndarray
    dsol_c: np.ndarray
    clamp_active: int  # cells where the phi clamp in exp(-[phi]) bites


def coefficients(phi: np.ndarray, c: np.ndarray, p: RegParams, limit: bool = False) -> Coefficients:
    if limit:
        mob = model.mobility(phi)
        dmob = model.mobility_prime(phi)
        pot = model.f1_prime(phi) + 1.0 - 2.0 * phi - c
        dpot = model.f1_second(phi) - 2.0
        cpos = model.truncate_c(c, None)
        dcpos = model.truncate_c_prime(c, None)
    else:
        mob = model.mobility_reg(phi, p)
        dmob = model.mobility_reg_prime(phi, p)
        pot = model.potential_phi(phi, c, p)
        dpot = model.f1_reg_second(phi, p) - 2.0
        cpos = model.truncate_c(c, p)
        dcpos = model.truncate_c_prime(c, p)
    expo = np.exp(-model.truncate_phi(phi))
    sol = cpos * expo
    return Coefficients(
        mob=mob,
        dmob=dmob,
        pot=pot,
        dpot_phi=dpot,
        cpos=cpos,
        dcpos=dcpos,
        sol=sol,
        dsol_phi=-sol * model.truncate_phi_prime(phi),
        dsol_c=dcpos * expo,
        clamp_active=int(np.count_nonzero((phi < 0.0) | (phi > 1.0))),
    )


@dataclass(frozen=True)
class FluxEval:
    coef: Coefficients
    lap_phi: np.ndarray
    mu: np.ndarray
    w: np.ndarray  # d f / d c = c + 1 - phi
    mob_f: np.ndarray
    cpos_f: np.ndarray
    sol_f: np.ndarray
    grad_mu: np.ndarray
    grad_w: np.ndarray
    grad_c: np.ndarray
    grad_phi: np.ndarray
    drive: np.ndarray  # grad mu - [c]_+ grad w
    flux_phi: np.ndarray
    flux_c: np.ndarray
    art: float  # coefficient of the artificial diffusion (0 when disabled)


def evaluate(grid: Grid, phi: np.ndarray, c: np.ndarray, p: RegParams, limit: bool = False) -> FluxEval:
    """Fluxes ``F_phi``, ``F_c`` with ``d_t phi = div F_phi`` and ``d_t c = div F_c``."""
    phi = grid.check(phi).ravel()
    c = grid.check(c).ravel()
    G = grid.grad_matrix
    A = grid.face_avg_matrix
    coef = coefficients(phi, c, p, limit)
    # div(grad) rather than the assembled matrix: exact zero on constants
    lap_phi = grid.div_matrix @ (grid.grad_matrix @ phi)
    mu = -lap_phi + coef.pot
    w = c + 1.0 - phi
    mob_f = A @ coef.mob
    cpos_f = A @ coef.cpos
    sol_f = A @ coef.sol
    grad_mu = G @ mu
    grad_w = G @ w
    grad_c = G @ c
    drive = grad_mu - cpos_f * grad_w
    flux_phi = mob_f * drive
    art = 0.0 if (limit or not p.use_artificial_diffusion) else p.delta
    flux_c = -cpos_f * flux_phi + sol_f * grad_w
    if art:
        flux_c = flux_c + art * grad_c
    return FluxEval(
        coef=coef,
        lap_phi=lap_phi,
        mu=mu,
        w=w,
        mob_f=mob_f,
        cpos_f=cpos_f,
        sol_f=sol_f,
        grad_mu=grad_mu,
        grad_w=grad_w,
        grad_c=grad_c,
        grad_phi=G @ phi,
        drive=drive,
        flux_phi=flux_phi,
        flux_c=flux_c,
        art=art,
    )
