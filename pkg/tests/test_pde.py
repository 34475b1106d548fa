import math

import numpy as np
import pytest

from conftest import TRIG2, get_operator
from fsbp.operator import exactness_residual
from fsbp.pde.advection import AdvectionProblem, BlockMesh1D, advection_rhs, gaussian, sine_wave
from fsbp.pde.errors import eoc, error_norms
from fsbp.pde.euler import (
    Euler2DProblem,
    Mesh2D,
    check_admissible,
    euler2d_rhs,
    euler_flux,
    hllc_flux,
    manufactured_source,
    manufactured_state,
    pressure,
)
from fsbp.pde.timestep import (
    Adaptive,
    FixedCFL,
    SimulationCrash,
    StateError,
    dopri5_step,
    integrate,
    ssprk53_step,
)

GAMMA = 1.4


# {{{ time stepping


def test_ssprk_zero_rhs():
    u = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(ssprk53_step(lambda u, t: np.zeros_like(u), u, 0.0, 0.1), u)


def test_ssprk_linear_decay():
    dt = 0.1
    u = ssprk53_step(lambda u, t: -u, np.array([1.0]), 0.0, dt)
    assert abs(u[0] - math.exp(-dt)) <= dt**4


def _ssp_order(rhs, exact, t_end, steps):
    errs = []
    for n in steps:
        u, t, dt = np.array([0.0]), 0.0, t_end / n
        for _ in range(n):
            u = ssprk53_step(rhs, u, t, dt)
            t += dt
        errs.append(abs(u[0] - exact(t_end)))
    return eoc(errs, steps)


def test_ssprk_third_order():
    rates = _ssp_order(lambda u, t: np.array([math.cos(t)]), math.sin, 2.0, [10, 20, 40, 80])
    assert all(abs(r - 3.0) <= 0.1 for r in rates)


def test_dopri5_fifth_order():
    errs = []
    steps = [20, 40, 80]
    for n in steps:
        u, t, dt = np.array([1.0]), 0.0, 1.0 / n
        for _ in range(n):
            u, _, _ = dopri5_step(lambda u, t: np.array([-2 * t * u[0]]), u, t, dt)
            t += dt
        errs.append(abs(u[0] - math.exp(-1.0)))
    assert all(abs(r - 5.0) <= 0.3 for r in eoc(errs, steps))


def test_fixed_step_on_constant_state():
    u0 = np.linspace(0, 1, 7)
    res = integrate(lambda u, t: np.zeros_like(u), u0, (0.0, 1.3), FixedCFL(0.5, 0.1, 1.0))
    np.testing.assert_array_equal(res.u, u0)
    assert res.t == 1.3


@pytest.mark.parametrize("lam", [-1.0, -5.0, 0.5, 2.0])
def test_adaptive_exponential(lam):
    tol = 1e-8
    res = integrate(lambda u, t: lam * u, np.array([1.0]), (0.0, 2.0), Adaptive(tol, tol))
    exact = math.exp(2 * lam)
    assert abs(res.u[0] - exact) <= 10 * tol * max(1.0, exact)
    assert res.n_steps > 0 and res.n_rhs > 0


def test_saveat_lands_exactly():
    res = integrate(lambda u, t: -u, np.array([1.0]), (0.0, 1.0), Adaptive(1e-8, 1e-8), saveat=[0.0, 0.25, 0.5])
    assert res.times == [0.0, 0.25, 0.5, 1.0]
    for t, u in zip(res.times, res.states):
        assert abs(u[0] - math.exp(-t)) <= 1e-7


def test_crash_reports_partial_states():
    def rhs(u, t):
        if t > 0.5:
            raise StateError("negative density", (0, 3))
        return -u

    with pytest.raises(SimulationCrash) as info:
        integrate(rhs, np.ones(2), (0.0, 1.0), FixedCFL(0.5, 0.01, 1.0), saveat=[0.2, 0.4])
    crash = info.value
    assert 0.5 <= crash.t <= 0.51 and crash.location == (0, 3)
    assert crash.partial.times == [0.2, 0.4]


def test_nonfinite_state_crashes():
    with pytest.raises(SimulationCrash, match="non-finite"):
        integrate(lambda u, t: u * np.inf, np.ones(1), (0.0, 1.0), FixedCFL(0.5, 0.1, 1.0))


def test_invalid_span():
    with pytest.raises(ValueError):
        integrate(lambda u, t: u, np.ones(1), (1.0, 1.0), Adaptive())


# }}}


# {{{ advection


@pytest.mark.parametrize("key, blocks", [("P3 b3 15", 4), ("T dense 50", 1), ("P1 dense 50", 2)])
def test_constant_state_is_steady(key, blocks):
    op, _ = get_operator(key)
    mesh = BlockMesh1D(-1.0, 1.0, blocks, op)
    assert np.abs(advection_rhs(mesh, 1.7, np.ones(mesh.shape))).max() <= 1e-12
    assert np.abs(advection_rhs(mesh, -0.6, np.full(mesh.shape, 3.0))).max() <= 1e-12


def test_trig_operator_differentiates_sine_exactly():
    op, _ = get_operator("T dense 50")
    mesh = BlockMesh1D(-1.0, 1.0, 1, op)
    a = 2.0
    du = advection_rhs(mesh, a, np.sin(np.pi * mesh.x))
    assert np.abs(du + a * np.pi * np.cos(np.pi * mesh.x)).max() <= 1e-10


@pytest.mark.parametrize("a", [1.0, -2.0])
def test_semidiscrete_mass_conservation(a, rng):
    op, _ = get_operator("P3 b3 15")
    mesh = BlockMesh1D(-1.0, 1.0, 5, op)
    u = rng.normal(size=mesh.shape)
    du = advection_rhs(mesh, a, u)
    assert abs(np.sum(mesh.weights * du)) <= 1e-12 * (1 + np.abs(du).max())


@pytest.mark.parametrize("a", [1.0, -1.0])
def test_semidiscrete_energy_dissipation(a, rng):
    op, _ = get_operator("P2 b3 50")
    mesh = BlockMesh1D(-1.0, 1.0, 3, op)
    u = rng.normal(size=mesh.shape)
    du = advection_rhs(mesh, a, u)
    assert np.sum(mesh.weights * u * du) <= 1e-12 * np.sum(mesh.weights * u * u)


@pytest.mark.parametrize("key", ["P3 b3 50", "P1 dense 50", "T b3 50"])
def test_fixed_step_conservation(key):
    op, _ = get_operator(key)
    mesh = BlockMesh1D(-1.0, 1.0, 1, op)
    u0 = sine_wave(1)(mesh.x) + 0.3
    res = integrate(lambda u, t: advection_rhs(mesh, 2.0, u, t), u0, (0.0, 1.75), FixedCFL(0.5, mesh.h_min, 2.0))
    drift = abs(np.sum(mesh.weights * res.u) - np.sum(mesh.weights * u0))
    assert drift <= 1e-10


def test_fully_discrete_energy_non_increasing():
    op, _ = get_operator("P3 b3 15")
    mesh = BlockMesh1D(-1.0, 1.0, 4, op)
    u0 = gaussian(0.1)(mesh.x)
    energy = lambda u, t: float(np.sum(mesh.weights * u * u))  # noqa: E731
    res = integrate(lambda u, t: advection_rhs(mesh, 1.0, u, t), u0, (0.0, 2.0),
                    FixedCFL(0.5, mesh.h_min, 1.0), monitor=energy)
    e = np.array([energy(u0, 0.0)] + res.monitor)
    assert np.all(np.diff(e) <= 1e-12 * e[:-1])


def test_affine_mapping_equivalence():
    op, _ = get_operator("T dense 50")
    w, a = 0.5, 1.0
    physical = BlockMesh1D(0.0, w, 1, op)
    reference = BlockMesh1D(-1.0, 1.0, 1, op)
    a_ref = a * 2.0 / w
    f = lambda x: np.sin(2 * np.pi * x / w)  # noqa: E731
    u_phys = f(physical.x)
    u_ref = np.sin(np.pi * (reference.x + 1.0))
    np.testing.assert_allclose(u_phys, u_ref, atol=1e-14)
    np.testing.assert_allclose(advection_rhs(physical, a, u_phys), advection_rhs(reference, a_ref, u_ref), atol=1e-10)
    r1 = integrate(lambda u, t: advection_rhs(physical, a, u, t), u_phys, (0.0, 0.3), FixedCFL(0.5, physical.h_min, a))
    r2 = integrate(lambda u, t: advection_rhs(reference, a_ref, u, t), u_ref, (0.0, 0.3),
                   FixedCFL(0.5, reference.h_min, a_ref))
    assert r1.n_steps == r2.n_steps
    assert np.abs(r1.u - r2.u).max() <= 1e-12


def test_block_mesh_geometry():
    op, _ = get_operator("P3 b3 15")
    mesh = BlockMesh1D(-1.0, 1.0, 4, op)
    assert mesh.x.shape == (4, 15)
    np.testing.assert_array_equal(mesh.x[:-1, -1], mesh.x[1:, 0])
    assert np.sum(mesh.weights) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        BlockMesh1D(-1.0, 1.0, 0, op)


def test_exact_advection_is_periodic():
    prob = AdvectionProblem(2.0, sine_wave(1), 1.0)
    x = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(prob.exact(x, 1.0), np.sin(np.pi * x), atol=1e-14)


# }}}


# {{{ error norms


def test_error_norms_zero():
    w = np.full((2, 3), 0.5)
    u = np.arange(6.0).reshape(2, 3)
    rep = error_norms(w, u, u)
    assert rep.l2[0] == 0 and rep.linf[0] == 0


def test_error_norms_values():
    w = np.array([0.25, 0.5, 0.25])
    rep = error_norms(w, np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0, 3.0]))
    assert rep.l2[0] == pytest.approx(math.sqrt(0.5 * 4))
    assert rep.linf[0] == 2.0


def test_eoc_examples():
    assert eoc([1e-2, 1.25e-3], [2, 4]) == [pytest.approx(3.0)]
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [4, 2])


# }}}


# {{{ Euler fluxes


def random_states(rng, n):
    rho = rng.uniform(0.1, 5.0, n)
    v = rng.normal(scale=2.0, size=(2, n))
    p = rng.uniform(0.1, 5.0, n)
    return np.stack([rho, rho * v[0], rho * v[1], p / (GAMMA - 1) + 0.5 * rho * (v**2).sum(0)])


def test_static_flux():
    u = np.array([1.0, 0.0, 0.0, 1.0 / (GAMMA - 1)])
    np.testing.assert_allclose(euler_flux(u, "x", GAMMA), [0, 1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(euler_flux(u, "y", GAMMA), [0, 0, 1, 0], atol=1e-15)


def test_manufactured_state_values():
    u = manufactured_state(0.3, 0.2, 0.5)
    np.testing.assert_allclose(u, [2, 2, 2, 4], atol=1e-15)
    assert pressure(u, GAMMA) == pytest.approx(0.8)
    np.testing.assert_allclose(euler_flux(u, "x", GAMMA), [2, 2.8, 2, 4.8])
    u = manufactured_state(0.5, 0.0, 0.0)
    assert u[0] == pytest.approx(2.1) and u[3] == pytest.approx(4.41)
    np.testing.assert_allclose(manufactured_state(0.1, 0.7, 0.3 + 2.0), manufactured_state(0.1, 0.7, 0.3), atol=1e-14)


def test_flux_direction_symmetry(rng):
    u = random_states(rng, 50)
    swapped = u[[0, 2, 1, 3]]
    np.testing.assert_allclose(euler_flux(swapped, "y", GAMMA), euler_flux(u, "x", GAMMA)[[0, 2, 1, 3]], rtol=1e-14)


def test_flux_rejects_bad_state():
    with pytest.raises(StateError):
        euler_flux(np.array([1.0, 0.0, 0.0, -1.0]), "x", GAMMA)
    with pytest.raises(ValueError):
        euler_flux(np.array([1.0, 0.0, 0.0, 1.0]), "z", GAMMA)


@pytest.mark.parametrize("direction", ["x", "y"])
def test_hllc_consistency(direction, rng):
    u = random_states(rng, 100)
    f = euler_flux(u, direction, GAMMA)
    np.testing.assert_allclose(hllc_flux(u, u, direction, GAMMA), f, rtol=1e-12, atol=1e-12 * np.abs(f).max())


def _flip(u, n):
    out = u.copy()
    out[n] = -out[n]
    return out


@pytest.mark.parametrize("direction, n", [("x", 1), ("y", 2)])
def test_hllc_mirror_symmetry(direction, n, rng):
    uL, uR = random_states(rng, 100), random_states(rng, 100)
    f = hllc_flux(uL, uR, direction, GAMMA)
    g = hllc_flux(_flip(uR, n), _flip(uL, n), direction, GAMMA)
    np.testing.assert_allclose(f, -_flip(g, n), rtol=1e-12, atol=1e-12 * np.abs(f).max())


def hllc_reference(uL, uR, gamma):
    """Scalar x-direction HLLC in the pressure-based star-flux form."""

    def prim(u):
        rho = u[0]
        vx, vy = u[1] / rho, u[2] / rho
        p = (gamma - 1) * (u[3] - 0.5 * rho * (vx * vx + vy * vy))
        return rho, vx, vy, p

    def flux(u):
        rho, vx, vy, p = prim(u)
        return [rho * vx, rho * vx * vx + p, rho * vx * vy, (u[3] + p) * vx]

    rl, ul, _, pl = prim(uL)
    rr, ur, _, pr = prim(uR)
    cl, cr = math.sqrt(gamma * pl / rl), math.sqrt(gamma * pr / rr)
    sl = min(ul - cl, ur - cr)
    sr = max(ul + cl, ur + cr)
    ss = (pr - pl + rl * ul * (sl - ul) - rr * ur * (sr - ur)) / (rl * (sl - ul) - rr * (sr - ur))
    fl, fr = flux(uL), flux(uR)
    if sl >= 0:
        return fl
    if sr <= 0:
        return fr
    if ss >= 0:
        sk, uk, fk, rk, vk, pk = sl, uL, fl, rl, ul, pl
    else:
        sk, uk, fk, rk, vk, pk = sr, uR, fr, rr, ur, pr
    p_lr = pk + rk * (sk - vk) * (ss - vk)
    d = [0.0, 1.0, 0.0, ss]
    return [(ss * (sk * uk[i] - fk[i]) + sk * p_lr * d[i]) / (sk - ss) for i in range(4)]


def _state(rho, v, p, gamma=GAMMA):
    return np.array([rho, rho * v[0], rho * v[1], p / (gamma - 1) + 0.5 * rho * (v[0] ** 2 + v[1] ** 2)])


def test_hllc_sod_matches_reference():
    uL, uR = _state(1.0, (0, 0), 1.0), _state(0.125, (0, 0), 0.1)
    np.testing.assert_allclose(hllc_flux(uL, uR, "x", GAMMA), hllc_reference(uL, uR, GAMMA), rtol=1e-10, atol=1e-12)


def test_hllc_random_pairs_match_reference(rng):
    uL, uR = random_states(rng, 100), random_states(rng, 100)
    f = hllc_flux(uL, uR, "x", GAMMA)
    for k in range(100):
        np.testing.assert_allclose(f[:, k], hllc_reference(uL[:, k], uR[:, k], GAMMA), rtol=1e-10, atol=1e-10)


def test_hllc_supersonic_upwinding():
    uL, uR = _state(1.0, (5.0, 0.3), 1.0), _state(0.5, (4.0, -0.2), 0.8)
    np.testing.assert_allclose(hllc_flux(uL, uR, "x", GAMMA), euler_flux(uL, "x", GAMMA))
    np.testing.assert_allclose(hllc_flux(_flip(uR, 1), _flip(uL, 1), "x", GAMMA), euler_flux(_flip(uL, 1), "x", GAMMA))


# }}}


# {{{ manufactured solution


def test_manufactured_source_values():
    s = manufactured_source(0.25, 0.75, 1.0)
    np.testing.assert_allclose(s, np.pi * np.array([0.1, 0.22, 0.22, 0.64]), rtol=1e-14)
    np.testing.assert_array_equal(manufactured_source(0.1, 0.2, 0.3, Euler2DProblem(A=0.0)), 0.0)


def test_manufactured_source_fd_residual(rng):
    prob = Euler2DProblem()
    h = 1e-3

    def d4(f, shift):
        return (8 * (f(shift(h)) - f(shift(-h))) - (f(shift(2 * h)) - f(shift(-2 * h)))) / (12 * h)

    for x, y, t in rng.uniform(-1, 1, (50, 3)):
        dt = d4(lambda a: manufactured_state(*a, prob), lambda e: (x, y, t + e))
        dx = d4(lambda a: euler_flux(manufactured_state(*a, prob), "x", GAMMA), lambda e: (x + e, y, t))
        dy = d4(lambda a: euler_flux(manufactured_state(*a, prob), "y", GAMMA), lambda e: (x, y + e, t))
        assert np.abs(dt + dx + dy - manufactured_source(x, y, t, prob)).max() <= 1e-6


def test_problem_validation():
    with pytest.raises(ValueError):
        Euler2DProblem(gamma=1.0)
    with pytest.raises(ValueError):
        Euler2DProblem(c=0.1, A=0.2)


def _time_derivative(mesh, t, prob):
    phi = prob.omega * (mesh.X + mesh.Y - t)
    drho = -prob.A * prob.omega * np.cos(phi)
    rho = prob.c + prob.A * np.sin(phi)
    return np.stack([drho, drho, drho, 2 * rho * drho])


def test_exact_state_mass_rhs_with_trig_operator():
    # the mass flux is linear in rho, whose x- and y-profiles lie in T; a
    # single block keeps the reference coordinates, on which T is defined
    op, _ = get_operator("T dense 50")
    prob = Euler2DProblem()
    for blocks in (1,):
        mesh = Mesh2D(blocks, op)
        u = manufactured_state(mesh.X, mesh.Y, 0.3, prob)
        du = euler2d_rhs(mesh, u, 0.3, prob)
        assert np.abs(du[0] - _time_derivative(mesh, 0.3, prob)[0]).max() <= 1e-8


def test_exact_state_rhs_with_extended_trig_operator():
    # momentum and energy fluxes are quadratic in rho and need the second harmonic
    op, res = get_operator("T2 dense 20")
    assert res.exact
    assert exactness_residual(op, TRIG2).max() <= 1e-9
    prob = Euler2DProblem()
    mesh = Mesh2D(1, op)
    u = manufactured_state(mesh.X, mesh.Y, 0.7, prob)
    du = euler2d_rhs(mesh, u, 0.7, prob)
    assert np.abs(du - _time_derivative(mesh, 0.7, prob)).max() <= 1e-8


def test_free_stream_preservation():
    op, _ = get_operator("P3 b3 15")
    prob = Euler2DProblem(A=0.0)
    mesh = Mesh2D(3, op)
    u = manufactured_state(mesh.X, mesh.Y, 0.0, prob)
    assert np.abs(euler2d_rhs(mesh, u, 0.0, prob)).max() <= 1e-12
    # a uniform state with arbitrary velocity
    u = np.broadcast_to(_state(1.3, (0.4, -0.7), 2.0)[:, None, None, None, None], (4,) + mesh.shape).copy()
    assert np.abs(euler2d_rhs(mesh, u, 0.0, prob)).max() <= 1e-12


def test_total_mass_conservation(rng):
    op, _ = get_operator("P3 b3 15")
    prob = Euler2DProblem(A=0.0)
    mesh = Mesh2D(2, op)
    u = manufactured_state(mesh.X, mesh.Y, 0.0, prob) * (1 + 0.05 * rng.uniform(-1, 1, (4,) + mesh.shape))
    du = euler2d_rhs(mesh, u, 0.0, prob)
    for v in range(4):
        assert abs(np.sum(mesh.weights * du[v])) <= 1e-11


def test_mesh_geometry():
    op, _ = get_operator("P3 b3 15")
    mesh = Mesh2D(2, op)
    assert mesh.X.shape == (2, 2, 15, 15)
    assert np.sum(mesh.weights) == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_array_equal(mesh.X[0, 1], mesh.X[0, 0])
    np.testing.assert_array_equal(mesh.Y[1, 0], mesh.Y[0, 0])


def test_inadmissible_state_location():
    op, _ = get_operator("P3 b3 15")
    mesh = Mesh2D(2, op)
    u = manufactured_state(mesh.X, mesh.Y, 0.0)
    u[0, 1, 0, 3, 4] = -0.5
    with pytest.raises(StateError) as info:
        check_admissible(mesh, u, GAMMA)
    loc = info.value.location
    assert loc["block"] == (1, 0) and loc["node"] == (3, 4)
    assert loc["x"] == mesh.X[1, 0, 3, 4] and loc["y"] == mesh.Y[1, 0, 3, 4]
    with pytest.raises(SimulationCrash):
        integrate(lambda w, t: euler2d_rhs(mesh, w, t), u, (0.0, 0.1), Adaptive())


# }}}
