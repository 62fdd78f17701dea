import numpy as np
import pytest
from scipy.integrate import solve_ivp

from circuitopt import data_file
from circuitopt.dynamics import (CircuitState, EnergySpec, Equilibrium, assemble, energy, find_equilibrium, integrate,
                                 kkt_residual, power_residual, static_equilibrium, tellegen_residual)
from circuitopt.errors import InconsistentInitialState
from circuitopt.netlist import Nets, make_netlist, parse_netlist, parse_nets
from circuitopt.oracles import EuclideanDistance, Quadratic, SeparableSum
from circuitopt.zoo import Graph, build

LADDER = [("C", 10, 2, 1), ("R", 1, 2, 4), ("R", 1, 2, 3), ("R", 1, 3, 4), ("C", 10, 3, 4)]


def test_gradient_flow_exponential():
    net = make_netlist(2, 1, [("C", 1, 1, 2)])
    dyn = assemble(net, Quadratic([[1.0]]))
    traj = integrate(dyn, dyn.initial_state([1.0]), 1e-3, 1.0)
    assert len(traj) == 1001
    assert abs(traj[-1].v_C[0, 0] - np.exp(-1)) <= 1e-6


def test_gradient_flow_vector_field():
    net = make_netlist(2, 1, [("C", 2.0, 1, 2)])
    f = Quadratic(np.diag([1.0, 3.0]), [0.5, -1.0])
    dyn = assemble(net, f, n=2)
    s = dyn.initial_state(np.array([[1.0], [2.0]]))
    x = dyn.observe(s).x.ravel()
    np.testing.assert_allclose(dyn.F(s.s).ravel(), -f.grad(x) / 2.0, atol=1e-12)


def test_equilibrium_start_stays_put():
    net = make_netlist(4, 1, LADDER)
    f = Quadratic(np.diag([1.0, 2.0]), [1.0, -1.0])
    dyn = assemble(net, f, n=2)
    eq = static_equilibrium(dyn, f.minimizer()[:, None], np.zeros((2, 1)))
    traj = integrate(dyn, CircuitState(eq.v_C, eq.i_L), 1e-2, 1.0)
    assert max(np.max(np.abs(s.s - traj[0].s)) for s in traj) <= 1e-12


def test_ladder_dissipation_power_and_tellegen(rng):
    net = make_netlist(4, 1, LADDER)
    f = Quadratic(np.diag([1.0, 2.0]), [1.0, -1.0])
    dyn = assemble(net, f, n=2)
    eq = find_equilibrium(net, Nets.single(1), f, n=2)
    np.testing.assert_allclose(eq.x.ravel(), f.minimizer(), atol=1e-8)
    assert kkt_residual(eq, Nets.single(1), f) <= 1e-8
    traj = integrate(dyn, dyn.initial_state(rng.standard_normal((2, 2))), 1e-3, 5.0)
    E = [energy(s, eq, EnergySpec.physical(net)) for s in traj]
    assert max(np.diff(E)) <= 5e-6
    assert max(abs(power_residual(dyn, s, eq)) for s in traj[::50]) <= 1e-8
    assert max(tellegen_residual(dyn.observe(s)) for s in traj[::50]) <= 1e-9


def test_energy_single_capacitor():
    spec = EnergySpec(np.array([2.0]), np.array([]))
    eq = Equilibrium(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 0)))
    assert energy(CircuitState(np.array([[3.0]]), np.zeros((1, 0))), eq, spec) == pytest.approx(9.0)
    assert energy(CircuitState(np.zeros((1, 1)), np.zeros((1, 0))), eq, spec) == 0.0


def test_lc_tank_conserves_energy():
    # terminal behind a resistor; an isolated L-C tank hangs off ground
    net = make_netlist(3, 1, [("R", 1.0, 1, 3), ("L", 0.5, 2, 3), ("C", 2.0, 2, 3)])
    dyn = assemble(net, Quadratic([[1.0]]))
    traj = integrate(dyn, dyn.initial_state([1.0], [0.3]), 1e-3, 10.0)
    w = [2.0 * s.v_C[0, 0] ** 2 + 0.5 * s.i_L[0, 0] ** 2 for s in traj]
    assert max(w) - min(w) <= 1e-8


def test_nesterov_circuit_matches_ode():
    mu = 0.5
    L, C = 1 / (8 * mu * np.sqrt(mu)), 2 * np.sqrt(mu)
    R = np.sqrt(L / C)
    net = make_netlist(4, 1, [("C", C, 3, 4), ("R", R, 3, 2), ("L", L, 3, 2), ("R", -R, 2, 1)])
    Q = np.array([[1.0, 0.3], [0.3, 0.8]])
    f = Quadratic(Q, [0.5, -0.2])
    dyn = assemble(net, f, n=2)
    s0 = dyn.initial_state(np.array([[1.0], [-1.0]]), np.zeros((2, 1)))
    traj = integrate(dyn, s0, 1e-3, 5.0)
    xs = np.array([dyn.observe(s).x.ravel() for s in traj])
    d = dyn.F(s0.s)
    v0 = d[:, 0] + R * d[:, 1]

    def ode(t, z):
        return np.concatenate([z[2:], -2 * np.sqrt(mu) * z[2:] - (Q @ z[:2] + f.p)])

    sol = solve_ivp(ode, [0, 5], np.concatenate([dyn.observe(s0).x.ravel(), v0]),
                    t_eval=np.arange(len(traj)) * 1e-3, rtol=1e-11, atol=1e-12)
    assert np.max(np.abs(sol.y[:2].T - xs)) <= 1e-5


def test_inconsistent_initial_state_rejected():
    # parallel capacitors must share a voltage
    net = make_netlist(2, 1, [("C", 1.0, 1, 2), ("C", 2.0, 1, 2)])
    dyn = assemble(net, Quadratic([[1.0]]))
    with pytest.raises(InconsistentInitialState):
        integrate(dyn, dyn.initial_state([1.0, 0.0]), 1e-3, 0.01)
    fixed = dyn.project_consistent(dyn.initial_state([1.0, 0.0]))
    np.testing.assert_allclose(fixed.v_C, [[0.5, 0.5]])
    traj = integrate(dyn, fixed, 1e-3, 0.5)
    assert abs(traj[-1].v_C[0, 0] - traj[-1].v_C[0, 1]) <= 1e-12
    # effective capacitance 3: v(t) = 0.5 exp(-t/3)
    assert traj[-1].v_C[0, 0] == pytest.approx(0.5 * np.exp(-0.5 / 3), abs=1e-9)


def test_consensus_of_two_quadratics():
    net, _ = parse_netlist("nodes 4 terminals 2\nR 1 1 3\nR 1 2 3\nC 1 3 4\n")
    f = SeparableSum([Quadratic([[1.0]], [-1.0]), Quadratic([[1.0]], [1.0])], dim=1)
    eq = find_equilibrium(net, Nets.single(2), f, 1)
    np.testing.assert_allclose(eq.x, 0.0, atol=1e-8)


def test_five_terminal_kkt_against_linear_solve(rng):
    net, _ = parse_netlist(data_file("five_terminal.net"))
    nets = parse_nets(data_file("five_terminal.nets"))
    parts = []
    for _ in range(5):
        a = rng.uniform(0.5, 2.0)
        parts.append(Quadratic([[a]], [rng.standard_normal()]))
    f = SeparableSum(parts, dim=1)
    eq = find_equilibrium(net, nets, f, 1)
    assert kkt_residual(eq, nets, f) <= 1e-8
    # direct solve: per net, sum of a_l x + p_l = 0
    for g in nets.nets:
        x = -sum(parts[l - 1].p[0] for l in g) / sum(parts[l - 1].Q[0, 0] for l in g)
        for l in g:
            assert eq.x[0, l - 1] == pytest.approx(x, abs=1e-8)


def test_dadmm_power_residual_random_state(rng):
    z = build("DADMM", Graph.path(3), {"R": 0.7})
    parts = [Quadratic([[rng.uniform(0.5, 2)]], [rng.standard_normal()]) for _ in range(3)]
    f = SeparableSum(parts, dim=1)
    dyn = assemble(z.netlist, f, 1)
    eq = find_equilibrium(z.netlist, z.nets, f, 1)
    s = dyn.project_consistent(CircuitState(*dyn.net.split_state(rng.standard_normal((1, dyn.net.ns)))))
    assert abs(power_residual(dyn, s, eq)) <= 1e-8


def test_strongly_convex_geomedian_on_path():
    b = np.array([[0.0, 0.0], [4.0, 1.0], [1.0, 5.0]])
    parts = [EuclideanDistance(bj, squared=True) for bj in b]
    z = build("DADMM", Graph.path(3), {"R": 1.0})
    f = SeparableSum(parts, dim=2)
    eq = find_equilibrium(z.netlist, z.nets, f, 2)
    # subgradient-method oracle
    x = b.mean(axis=0)
    for k in range(1, 200_001):
        g = sum(p.subgrad(x) for p in parts)
        x = x - g / (6.0 + k ** 0.75)
    np.testing.assert_allclose(eq.x[:, 0], x, atol=1e-6)
