"""Pointwise physics kernels for the fiber/solute Cahn-Hilliard system.

Every function here is vectorized: it accepts Python floats or numpy arrays
and returns the same shape. Nothing allocates state, so all kernels are safe
to call from any thread.

Regularized kernels take a :class:`RegParams`. The cutoff ``delta`` replaces
the degenerate mobility and the logarithmic part of the energy by their
values (or second-order Taylor extensions) outside ``[delta, 1 - delta]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RegParams",
    "PointState",
    "mobility",
    "mobility_prime",
    "mobility_reg",
    "mobility_reg_prime",
    "f1",
    "f1_prime",
    "f1_second",
    "f1_reg",
    "f1_reg_prime",
    "f1_reg_second",
    "f2",
    "potential_phi",
    "potential_c",
    "energy_density",
    "energy_density_exact",
    "entropy_density",
    "entropy_density_prime",
    "entropy_density_second",
    "entropy_density_reg",
    "truncate_c",
    "truncate_c_prime",
    "truncate_phi",
    "truncate_phi_prime",
]


@dataclass(frozen=True)
class RegParams:
    """Regularization parameters.

    Attributes:
        delta: mobility/potential cutoff, ``0 < delta <= 1/12``. Also the
            coefficient of the artificial diffusion on ``c``.
        epsilon: cap for the solute truncation, ``0 < epsilon < 1``.
        use_artificial_diffusion: add ``delta * Laplacian(c)`` to the solute
            equation.
    """

    delta: float = 1e-3
    epsilon: float = 1e-3
    use_artificial_diffusion: bool = True

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0 / 12.0):
            raise ValueError(f"delta must lie in (0, 1/12], got {self.delta!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")


@dataclass(frozen=True)
class PointState:
    phi: float
    c: float


def _asfloat(x):
    return np.asarray(x, dtype=np.float64)


def _ret(x):
    # Scalars in, scalars out.
    return x.item() if np.ndim(x) == 0 else x


# -- mobility ---------------------------------------------------------------


def mobility(phi):
    """Degenerate mobility ``phi^2 (1 - phi)^2``."""
    phi = _asfloat(phi)
    return _ret(phi * phi * (1.0 - phi) * (1.0 - phi))


def mobility_prime(phi):
    phi = _asfloat(phi)
    return _ret(2.0 * phi * (1.0 - phi) * (1.0 - 2.0 * phi))


def mobility_reg(phi, p: RegParams):
    """Mobility frozen at its cutoff values outside ``[delta, 1 - delta]``.

    Bounded below by ``delta^2 (1 - delta)^2``.
    """
    d = p.delta
    clipped = np.clip(_asfloat(phi), d, 1.0 - d)
    return _ret(clipped * clipped * (1.0 - clipped) * (1.0 - clipped))


def mobility_reg_prime(phi, p: RegParams):
    phi = _asfloat(phi)
    d = p.delta
    inside = (phi > d) & (phi < 1.0 - d)
    return _ret(np.where(inside, 2.0 * phi * (1.0 - phi) * (1.0 - 2.0 * phi), 0.0))


# -- logarithmic part of the energy ------------------------------------------


def f1(phi):
    """Flory-Huggins mixing entropy ``phi log phi + (1-phi) log(1-phi)``.

    Defined on the open interval; returns nan outside ``[0, 1]``.
    """
    phi = _asfloat(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(phi > 0, phi * np.log(np.where(phi > 0, phi, 1.0)), 0.0)
        q = 1.0 - phi
        out = out + np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
        out = np.where((phi < 0) | (phi > 1), np.nan, out)
    return _ret(out)


def f1_prime(phi):
    phi = _asfloat(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _ret(np.log(phi) - np.log1p(-phi))


def f1_second(phi):
    phi = _asfloat(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / (phi * (1.0 - phi))
        out = np.where((phi <= 0) | (phi >= 1), np.nan, out)
    return _ret(out)


def f1_reg(phi, p: RegParams):
    """``f1`` with quadratic Taylor extensions below ``delta`` / above ``1-delta``.

    C^2 and convex on the whole real line.
    """
    phi = _asfloat(phi)
    d = p.delta
    lo, hi = d, 1.0 - d
    inner = f1(np.clip(phi, lo, hi))
    s_lo = phi - lo
    s_hi = phi - hi
    below = f1(lo) + f1_prime(lo) * s_lo + 0.5 * f1_second(lo) * s_lo * s_lo
    above = f1(hi) + f1_prime(hi) * s_hi + 0.5 * f1_second(hi) * s_hi * s_hi
    return _ret(np.where(phi <= lo, below, np.where(phi >= hi, above, inner)))


def f1_reg_prime(phi, p: RegParams):
    phi = _asfloat(phi)
    d = p.delta
    lo, hi = d, 1.0 - d
    inner = f1_prime(np.clip(phi, lo, hi))
    below = f1_prime(lo) + f1_second(lo) * (phi - lo)
    above = f1_prime(hi) + f1_second(hi) * (phi - hi)
    return _ret(np.where(phi <= lo, below, np.where(phi >= hi, above, inner)))


def f1_reg_second(phi, p: RegParams):
    # f1'' is symmetric about 1/2, so clamping the argument is the whole story.
    return f1_second(np.clip(_asfloat(phi), p.delta, 1.0 - p.delta))


# -- full energy density and its partial derivatives -------------------------


def f2(phi, c):
    """Interaction plus nutrient energy ``phi(1-phi) + c^2/2 + c(1-phi)``."""
    phi = _asfloat(phi)
    c = _asfloat(c)
    return _ret(phi * (1.0 - phi) + 0.5 * c * c + c * (1.0 - phi))


def potential_phi(phi, c, p: RegParams):
    """Partial derivative of the regularized energy density in ``phi``."""
    phi = _asfloat(phi)
    return _ret(f1_reg_prime(phi, p) + 1.0 - 2.0 * phi - _asfloat(c))


def potential_c(phi, c):
    """Partial derivative of the energy density in ``c``: ``c + 1 - phi``.

    The nutrient part is never regularized, so no parameters are needed.
    """
    return _ret(_asfloat(c) + 1.0 - _asfloat(phi))


def energy_density(phi, c, p: RegParams):
    return _ret(_asfloat(f1_reg(phi, p)) + _asfloat(f2(phi, c)))


def energy_density_exact(phi, c):
    """Unregularized energy density; nan for ``phi`` outside ``[0, 1]``."""
    return _ret(_asfloat(f1(phi)) + _asfloat(f2(phi, c)))


# -- entropy ------------------------------------------------------------------


def entropy_density(phi):
    """Closed form of the double integral of ``1/M`` from 1/2.

    Raises:
        ValueError: if any ``phi`` lies outside the open interval ``(0, 1)``.
    """
    phi = _asfloat(phi)
    if np.any(~((phi > 0) & (phi < 1))):
        raise ValueError("entropy_density is defined on (0, 1) only")
    q = 1.0 - phi
    lp = np.log(phi)
    lq = np.log(q)
    return _ret(-lp - lq + 2.0 * (phi * lp + q * lq))


def entropy_density_prime(phi):
    phi = _asfloat(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _ret(-1.0 / phi + 1.0 / (1.0 - phi) + 2.0 * (np.log(phi) - np.log1p(-phi)))


def entropy_density_second(phi):
    """Second derivative ``1/phi^2 + 1/(1-phi)^2 + 2/phi + 2/(1-phi)``."""
    phi = _asfloat(phi)
    q = 1.0 - phi
    with np.errstate(divide="ignore", invalid="ignore"):
        return _ret(1.0 / (phi * phi) + 1.0 / (q * q) + 2.0 / phi + 2.0 / q)


def entropy_density_reg(phi, p: RegParams):
    """Double integral of ``1/M_delta`` from 1/2, evaluated in closed form.

    Equal to :func:`entropy_density` on ``[delta, 1-delta]`` and continued by
    the exact quadratic (since ``M_delta`` is constant) outside.
    """
    phi = _asfloat(phi)
    d = p.delta
    lo, hi = d, 1.0 - d
    m_edge = mobility(lo)  # == mobility(hi)
    inner = entropy_density(np.clip(phi, lo, hi))
    s_lo = phi - lo
    s_hi = phi - hi
    below = entropy_density(lo) + entropy_density_prime(lo) * s_lo + s_lo * s_lo / (2.0 * m_edge)
    above = entropy_density(hi) + entropy_density_prime(hi) * s_hi + s_hi * s_hi / (2.0 * m_edge)
    return _ret(np.where(phi < lo, below, np.where(phi > hi, above, inner)))


# -- truncations ----------------------------------------------------------------


def truncate_c(c, p: RegParams | None):
    """``min(1/epsilon, max(0, c))``; with ``p=None`` only the lower cut applies."""
    c = _asfloat(c)
    if p is None:
        return _ret(np.maximum(c, 0.0))
    return _ret(np.minimum(1.0 / p.epsilon, np.maximum(c, 0.0)))


def truncate_c_prime(c, p: RegParams | None):
    c = _asfloat(c)
    cap = np.inf if p is None else 1.0 / p.epsilon
    return _ret(np.where((c > 0.0) & (c < cap), 1.0, 0.0))


def truncate_phi(phi):
    return _ret(np.clip(_asfloat(phi), 0.0, 1.0))


def truncate_phi_prime(phi):
    phi = _asfloat(phi)
    return _ret(np.where((phi > 0.0) & (phi < 1.0), 1.0, 0.0))
