import numpy as np
import pytest
import scipy.sparse as sp

from lymphch import diagnostics, model, rng
from lymphch.grid import Grid
from lymphch.model import RegParams
from lymphch.stepper import (
    DtUnderflow,
    NewtonDiverged,
    SolverConfig,
    State,
    chemical_potential,
    fluxes,
    jacobian,
    newton_solve,
    residual,
    step,
)
from lymphch.spatial import evaluate

P = RegParams(1e-3, 1e-3)


def smooth_state(n=64, L=1.0):
    g = Grid.uniform(n, L)
    (x,) = g.centers()
    return State.initial(g, 0.5 + 0.2 * np.cos(np.pi * x / L), 0.3 + 0.1 * np.cos(2 * np.pi * x / L))


def smooth_state_2d(n=12):
    g = Grid.uniform(n, 1.0, dim=2)
    X, Y = g.centers()
    return State.initial(g, 0.5 + 0.2 * np.cos(np.pi * X) * np.cos(np.pi * Y), 0.3 + 0.1 * np.cos(np.pi * Y))


# -- construction ----------------------------------------------------------------


def test_initial_state_validation():
    g = Grid.uniform(8)
    with pytest.raises(ValueError):
        State.initial(g, np.full(8, 1.0), 0.0)
    with pytest.raises(ValueError):
        State.initial(g, 0.5, -0.1)
    with pytest.raises(ValueError):
        State(g, np.full(8, np.nan), np.zeros(8))
    s = State.initial(g, 0.5, 0.2)
    assert s.phi.shape == (8,) and s.t == 0.0 and s.step_index == 0


@pytest.mark.parametrize("kw", [{"dt_init": 0.0}, {"dt_min": 1e-3, "dt_init": 1e-4}, {"dt_max": 1e-7},
                                {"newton_tol": 0.0}, {"energy_slack_tol": -1.0}, {"newton_max_iters": 0}])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


# -- spatial operators -----------------------------------------------------------


def test_chemical_potential_uniform_examples():
    g = Grid.uniform(10)
    assert np.all(chemical_potential(g, np.full(10, 0.5), np.zeros(10), P) == 0.0)
    mu = chemical_potential(g, np.full(10, 0.75), np.full(10, 0.5), P)
    np.testing.assert_allclose(mu, np.log(3) - 1, atol=1e-15)


def test_chemical_potential_against_pointwise_stencil():
    g = Grid.uniform(50, 2.0)
    (x,) = g.centers()
    phi = 0.5 + 0.05 * np.cos(np.pi * x / 2.0)
    c = np.zeros_like(x)
    h = g.h[0]
    padded = np.concatenate([[phi[0]], phi, [phi[-1]]])  # mirror ghosts: zero boundary gradient
    lap = (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / h**2
    expect = -lap + model.potential_phi(phi, c, P)
    np.testing.assert_allclose(chemical_potential(g, phi, c, P), expect, atol=1e-11)


def test_fluxes_uniform_and_zero_solute():
    g = Grid.uniform(16, dim=2)
    Fp, Fc = fluxes(State.initial(g, 0.4, 0.7), P)
    assert all(np.all(F == 0) for F in Fp + Fc)
    s = smooth_state()
    s = State(s.grid, s.phi, np.zeros_like(s.c))
    _, Fc = fluxes(s, P)
    assert np.all(Fc[0] == 0.0)


def _reassembled_rates(s, p):
    """Loop-based finite-volume right-hand side in 1D (independent of the sparse path)."""
    phi, c = s.phi, s.c
    n, h = len(phi), s.grid.h[0]
    pad = np.concatenate([[phi[0]], phi, [phi[-1]]])
    mu = [-(pad[i + 2] - 2 * pad[i + 1] + pad[i]) / h**2 + model.potential_phi(phi[i], c[i], p) for i in range(n)]
    w = [c[i] + 1 - phi[i] for i in range(n)]
    Fp = np.zeros(n + 1)
    Fc = np.zeros(n + 1)
    for j in range(1, n):
        a, b = j - 1, j
        mob = 0.5 * (model.mobility_reg(phi[a], p) + model.mobility_reg(phi[b], p))
        cp = 0.5 * (model.truncate_c(c[a], p) + model.truncate_c(c[b], p))
        sol = 0.5 * (model.truncate_c(c[a], p) * np.exp(-model.truncate_phi(phi[a]))
                     + model.truncate_c(c[b], p) * np.exp(-model.truncate_phi(phi[b])))
        gmu, gw, gc = (mu[b] - mu[a]) / h, (w[b] - w[a]) / h, (c[b] - c[a]) / h
        Fp[j] = mob * (gmu - cp * gw)
        Fc[j] = -cp * Fp[j] + sol * gw + p.delta * gc
    return np.diff(Fp) / h, np.diff(Fc) / h


def test_flux_divergence_matches_reassembly():
    g = Grid.uniform(40)
    s = State.initial(g, 0.5 + 0.3 * rng.symmetric(7, g.shape), 0.4 + 0.3 * rng.symmetric(8, g.shape))
    dphi, dc = _reassembled_rates(s, P)
    Fp, Fc = fluxes(s, P)
    np.testing.assert_allclose(g.div(Fp), dphi, rtol=1e-10, atol=1e-8)
    np.testing.assert_allclose(g.div(Fc), dc, rtol=1e-10, atol=1e-8)


def test_fluxes_vanish_on_boundary_faces():
    s = smooth_state_2d()
    for F in fluxes(s, P):
        assert np.all(F[0][0, :] == 0) and np.all(F[0][-1, :] == 0)
        assert np.all(F[1][:, 0] == 0) and np.all(F[1][:, -1] == 0)


# -- residual and Jacobian -------------------------------------------------------


def test_residual_zero_at_equilibrium():
    g = Grid.uniform(10)
    s = State.initial(g, 0.3, 0.2)
    for r in residual(s, s, 0.1, P):
        assert np.all(r == 0.0)


def test_residual_large_dt_limit():
    s = smooth_state()
    s_old = State(s.grid, s.phi * 0.9 + 0.05, s.c)
    rp, rc = residual(s, s_old, 1e300, P)
    Fp, Fc = fluxes(s, P)
    np.testing.assert_allclose(rp, -s.grid.div(Fp), atol=1e-12)
    np.testing.assert_allclose(rc, -s.grid.div(Fc), atol=1e-12)


@pytest.mark.parametrize("make", [smooth_state, smooth_state_2d], ids=["1d", "2d"])
def test_jacobian_matches_finite_differences(make):
    s = make() if make is smooth_state_2d else make(12)
    g = s.grid
    s_old = State(g, s.phi - 0.01, s.c + 0.01)
    dt = 1e-3
    u = np.concatenate([s.phi.ravel(), s.c.ravel()])
    J = jacobian(g, evaluate(g, s.phi, s.c, P), dt, P).toarray()

    def res(v):
        n = g.size
        st = State(g, v[:n].reshape(g.shape), v[n:].reshape(g.shape))
        return np.concatenate([r.ravel() for r in residual(st, s_old, dt, P)])

    eps = 1e-7
    fd = np.empty_like(J)
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = eps
        fd[:, k] = (res(u + e) - res(u - e)) / (2 * eps)
    scale = np.abs(J).max()
    assert np.max(np.abs(fd - J)) <= 1e-6 * scale


def test_jacobian_is_sparse():
    s = smooth_state_2d(10)
    J = jacobian(s.grid, evaluate(s.grid, s.phi, s.c, P), 1e-3, P)
    assert sp.issparse(J)
    assert J.nnz < 0.2 * J.shape[0] ** 2


# -- Newton ----------------------------------------------------------------------


def test_newton_uniform_converges_in_one_iteration():
    g = Grid.uniform(32)
    s = State.initial(g, 0.5, 0.3)
    s_new, rep = newton_solve(s, 1e-2, P, SolverConfig())
    assert rep.newton_iters == 1
    assert rep.accepted and rep.residual_norm <= 1e-10
    np.testing.assert_array_equal(s_new.phi, s.phi)
    np.testing.assert_array_equal(s_new.c, s.c)


@pytest.mark.parametrize("make,dt", [(smooth_state, 1e-2), (smooth_state, 1e-3), (smooth_state_2d, 1e-3)])
def test_newton_quadratic_convergence(make, dt):
    s = make()
    _, rep = newton_solve(s, dt, P, SolverConfig(newton_tol=1e-13))
    hist = rep.residual_history
    assert len(hist) >= 3
    # pairs above the rounding floor contract quadratically
    pairs = [(a, b) for a, b in zip(hist, hist[1:]) if b > 1e-12]
    assert pairs
    for a, b in pairs:
        assert b <= 100.0 * a * a


def test_newton_diverges_on_stiff_huge_step():
    g = Grid.uniform(64)
    s = State.initial(g, 0.5 + 0.45 * rng.symmetric(1, g.shape), 0.3 + 0.29 * rng.symmetric(2, g.shape))
    with pytest.raises(NewtonDiverged):
        newton_solve(s, 1e6, P, SolverConfig())


def test_newton_conserves_mass():
    s = smooth_state()
    s_new, _ = newton_solve(s, 1e-3, P, SolverConfig())
    g = s.grid
    assert abs(g.integrate(s_new.phi) - g.integrate(s.phi)) <= 1e-12 * g.volume
    assert abs(g.integrate(s_new.c) - g.integrate(s.c)) <= 1e-12 * g.volume


# -- controller ------------------------------------------------------------------


def test_step_uniform_state_grows_dt():
    g = Grid.uniform(16)
    s = State.initial(g, 0.5, 0.3)
    cfg = SolverConfig(dt_init=1e-4, dt_max=1e-2)
    for _ in range(60):
        s_next, rep = step(s, P, cfg)
        np.testing.assert_array_equal(s_next.phi, s.phi)
        np.testing.assert_array_equal(s_next.c, s.c)
        s = s_next
    assert s.dt == cfg.dt_max


def test_step_growth_schedule():
    g = Grid.uniform(16)
    s = State.initial(g, 0.5, 0.3)
    cfg = SolverConfig(dt_init=1e-4, dt_max=1.0)
    used = []
    for _ in range(11):
        s, rep = step(s, P, cfg)
        used.append(rep.dt_used)
    assert used[:5] == [1e-4] * 5
    assert used[5:10] == [1.5 * 1e-4] * 5
    assert used[10] == 1.5 * (1.5 * 1e-4)


def test_step_lands_on_stop_time_and_keeps_nominal_dt():
    s = smooth_state(32)
    cfg = SolverConfig(dt_init=1e-3)
    s1, rep = step(s, P, cfg, t_stop=4e-4)
    assert s1.t == 4e-4
    assert rep.dt_used == pytest.approx(4e-4)
    assert s1.dt == 1e-3


def test_spinodal_energy_decreases_and_mass_conserved():
    g = Grid.uniform(128)
    s = State.initial(g, 0.5 + 0.01 * rng.symmetric(42, g.shape), 0.3)
    cfg = SolverConfig()
    e0 = diagnostics.energy(s, P)
    m0 = (g.integrate(s.phi), g.integrate(s.c))
    for _ in range(100):
        s_new, rep = step(s, P, cfg)
        assert abs(g.integrate(s_new.phi) - g.integrate(s.phi)) <= 1e-12 * g.volume
        assert abs(g.integrate(s_new.c) - g.integrate(s.c)) <= 1e-12 * g.volume
        assert rep.energy_defect <= cfg.energy_slack_tol
        assert rep.min_c >= -10 * cfg.newton_tol
        assert rep.residual_norm <= cfg.newton_tol
        s = s_new
    assert diagnostics.energy(s, P) < e0
    assert abs(g.integrate(s.phi) - m0[0]) <= 1e-12 * g.volume
    assert abs(g.integrate(s.c) - m0[1]) <= 1e-12 * g.volume


def test_step_rejects_then_halves():
    g = Grid.uniform(64)
    s = State.initial(g, 0.5 + 0.45 * rng.symmetric(1, g.shape), 0.3 + 0.29 * rng.symmetric(2, g.shape))
    s_new, rep = step(s, P, SolverConfig(dt_init=1.0, dt_max=1.0))
    assert rep.rejections > 0
    assert rep.dt_used == pytest.approx(2.0 ** -rep.rejections)
    assert s_new.accept_streak == 1


def test_dt_underflow():
    g = Grid.uniform(64)
    s = State.initial(g, 0.5 + 0.45 * rng.symmetric(1, g.shape), 0.3 + 0.29 * rng.symmetric(2, g.shape))
    cfg = SolverConfig(dt_init=1e3, dt_min=1e2, dt_max=1e3)
    with pytest.raises(DtUnderflow):
        step(s, P, cfg)


def test_two_dimensional_step_conserves_mass():
    s = smooth_state_2d(16)
    g = s.grid
    cfg = SolverConfig(dt_init=1e-4)
    s_new, rep = step(s, P, cfg)
    assert rep.accepted
    assert abs(g.integrate(s_new.phi) - g.integrate(s.phi)) <= 1e-12 * g.volume
    assert abs(g.integrate(s_new.c) - g.integrate(s.c)) <= 1e-12 * g.volume


def test_limit_mode_step():
    s = smooth_state(32)
    s_new, rep = step(s, P, SolverConfig(dt_init=1e-4), limit=True)
    assert rep.accepted and rep.slack == 0.0 and rep.D_art == 0.0
    assert 0 < s_new.phi.min() and s_new.phi.max() < 1
