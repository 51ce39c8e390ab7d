"""Faedo-Galerkin approximation in 1D on the Neumann cosine basis.

``phi_N`` and ``c_N`` are expansions in the first ``N`` normalized cosines on
``[0, L]``; the chemical potential is eliminated algebraically. Nonlinear
integrands are sampled on ``2N`` midpoint nodes. On these nodes the cosines
(and the sines that appear as their derivatives) are discretely orthogonal,
so projection and all linear terms are exact, and the quadrature-level
energy identity holds exactly for the ODE system.

The ODE is integrated by an embedded Dormand-Prince 5(4) pair with the
accumulated dissipation appended to the state, so the energy ledger is
integrated to the same accuracy as the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import RK45

from . import model
from .model import RegParams

__all__ = [
    "SpectralBasis",
    "GalerkinState",
    "Trajectory",
    "StepUnderflow",
    "project",
    "reconstruct",
    "mu_coeffs",
    "rhs",
    "energy",
    "dissipation",
    "integrate",
]


class StepUnderflow(RuntimeError):
    """The explicit integrator needed steps below ``min_step`` (too stiff)."""


@dataclass(frozen=True)
class SpectralBasis:
    N: int
    L: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one mode")
        if self.L <= 0:
            raise ValueError("domain length must be positive")

    @property
    def Q(self) -> int:
        return 2 * self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.Q) + 0.5) * (self.L / self.Q)

    @property
    def weight(self) -> float:
        return self.L / self.Q

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.N) * np.pi / self.L

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return self.wavenumbers**2

    @cached_property
    def norms(self) -> np.ndarray:
        out = np.full(self.N, np.sqrt(2.0 / self.L))
        out[0] = np.sqrt(1.0 / self.L)
        return out

    def values(self, x) -> np.ndarray:
        """``e_k(x)`` as an ``(N, len(x))`` array."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.norms[:, None] * np.cos(np.outer(self.wavenumbers, x))

    def derivatives(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return -(self.norms * self.wavenumbers)[:, None] * np.sin(np.outer(self.wavenumbers, x))

    @cached_property
    def E(self) -> np.ndarray:
        return self.values(self.nodes)

    @cached_property
    def dE(self) -> np.ndarray:
        return self.derivatives(self.nodes)


@dataclass
class GalerkinState:
    A: np.ndarray
    B: np.ndarray
    t: float = 0.0


def project(basis: SpectralBasis, samples) -> np.ndarray:
    """Coefficients ``(f, e_k)`` from samples on the quadrature nodes."""
    samples = np.broadcast_to(np.asarray(samples, dtype=np.float64), (basis.Q,))
    # split off a constant so that constants project exactly onto e_0
    base = samples[0]
    out = basis.E @ (samples - base) * basis.weight
    out[0] += base * np.sqrt(basis.L)
    return out


def reconstruct(basis: SpectralBasis, coeffs, x=None) -> np.ndarray:
    """Evaluate the expansion on the nodes (default) or at points ``x``."""
    E = basis.E if x is None else basis.values(x)
    return np.asarray(coeffs) @ E


def _fields(basis: SpectralBasis, A, B, p: RegParams):
    phi = A @ basis.E
    c = B @ basis.E
    C = basis.eigenvalues * A + project(basis, model.potential_phi(phi, c, p))
    dE = basis.dE
    grad_mu = C @ dE
    grad_w = (B - A) @ dE
    grad_c = B @ dE
    mob = model.mobility_reg(phi, p)
    cpos = model.truncate_c(c, p)
    sol = cpos * np.exp(-model.truncate_phi(phi))
    drive = grad_mu - cpos * grad_w
    return phi, c, C, grad_w, grad_c, mob, cpos, sol, drive


def mu_coeffs(basis: SpectralBasis, g: GalerkinState, p: RegParams) -> np.ndarray:
    """Coefficients of ``mu_N``: ``lambda_k A_k + (d_phi f(phi_N, c_N), e_k)``."""
    return _fields(basis, g.A, g.B, p)[2]


def _rates(basis, A, B, p):
    phi, c, C, grad_w, grad_c, mob, cpos, sol, drive = _fields(basis, A, B, p)
    art = p.delta if p.use_artificial_diffusion else 0.0
    w = basis.weight
    flux_phi = mob * drive
    flux_c = -cpos * flux_phi + sol * grad_w + art * grad_c
    dA = -(basis.dE @ flux_phi) * w
    dB = -(basis.dE @ flux_c) * w
    d_mix = float(np.sum(mob * drive * drive)) * w
    d_sol = float(np.sum(sol * grad_w * grad_w)) * w
    lam = basis.eigenvalues
    d_art = art * float(np.sum(lam * B * B))
    slack = 0.5 * art * float(np.sum(lam * (A * A - B * B)))
    return dA, dB, (d_mix, d_sol, d_art, slack)


def rhs(basis: SpectralBasis, g: GalerkinState, p: RegParams) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives ``(dA/dt, dB/dt)`` of the Galerkin ODE system."""
    dA, dB, _ = _rates(basis, g.A, g.B, p)
    return dA, dB


def energy(basis: SpectralBasis, g: GalerkinState, p: RegParams) -> float:
    phi = g.A @ basis.E
    c = g.B @ basis.E
    grad_part = 0.5 * float(np.sum(basis.eigenvalues * g.A * g.A))
    return grad_part + float(np.sum(model.energy_density(phi, c, p))) * basis.weight


def dissipation(basis: SpectralBasis, g: GalerkinState, p: RegParams):
    """``(D_mix, D_sol, D_art, slack)`` evaluated with the node quadrature."""
    return _rates(basis, g.A, g.B, p)[2]


@dataclass
class Trajectory:
    basis: SpectralBasis
    t: np.ndarray
    A: np.ndarray  # (len(t), N)
    B: np.ndarray
    E: np.ndarray
    ledger: np.ndarray  # E(t) + int_0^t (D_mix + D_sol - slack) dt
    dissipation: np.ndarray  # (len(t), 4): D_mix, D_sol, D_art, slack
    steps: int = 0
    info: dict = field(default_factory=dict)

    def state(self, i: int = -1) -> GalerkinState:
        return GalerkinState(self.A[i].copy(), self.B[i].copy(), float(self.t[i]))


def integrate(
    basis: SpectralBasis,
    g0: GalerkinState,
    T: float,
    p: RegParams,
    ode_tol: float = 1e-9,
    output_times=None,
    min_step: float = 0.0,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Integrate the coefficient ODE from ``g0.t`` to ``T``.

    Local error is controlled with ``rtol = atol = ode_tol``. The extra ODE
    component accumulates ``D_mix + D_sol - slack`` so that ``E + ledger``
    can be checked against ``E(0)``.

    Raises:
        StepUnderflow: the step size dropped below ``min_step``, the
            integrator failed, or ``max_steps`` was exceeded.
    """
    N = basis.N
    t0 = float(g0.t)
    if not T > t0:
        raise ValueError("T must exceed the initial time")
    if output_times is None:
        output_times = np.linspace(t0, T, 11)
    output_times = np.asarray(sorted(set(float(x) for x in output_times) | {t0, float(T)}))

    def fun(_t, y):
        dA, dB, (d_mix, d_sol, _d_art, slack) = _rates(basis, y[:N], y[N:2 * N], p)
        return np.concatenate([dA, dB, [d_mix + d_sol - slack]])

    y0 = np.concatenate([g0.A, g0.B, [0.0]])
    solver = RK45(fun, t0, y0, T, rtol=ode_tol, atol=ode_tol)
    ys = [y0.copy()]
    k = 1
    steps = 0
    while solver.status == "running":
        solver.step()
        steps += 1
        if solver.status == "failed":
            raise StepUnderflow(f"integrator failed at t={solver.t:.6g}: {solver.__dict__.get('message', '')}")
        if solver.step_size is not None and solver.t < T and solver.step_size < min_step:
            raise StepUnderflow(f"step {solver.step_size:.3e} below min_step at t={solver.t:.6g}")
        if steps > max_steps:
            raise StepUnderflow(f"more than {max_steps} steps before t={solver.t:.6g}")
        if k < len(output_times) and output_times[k] <= solver.t:
            dense = solver.dense_output()
            while k < len(output_times) and output_times[k] <= solver.t:
                tk = output_times[k]
                ys.append(solver.y.copy() if tk == solver.t else dense(tk))
                k += 1
    Y = np.array(ys)
    A, B, q = Y[:, :N], Y[:, N:2 * N], Y[:, 2 * N]
    E = np.array([energy(basis, GalerkinState(a, b), p) for a, b in zip(A, B)])
    D = np.array([dissipation(basis, GalerkinState(a, b), p) for a, b in zip(A, B)])
    return Trajectory(basis, output_times, A, B, E, E + q, D, steps)
