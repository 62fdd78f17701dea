import csv
import io

import numpy as np
import pytest

from circuitopt import data_file
from circuitopt.discretize import (CircuitAlgorithm, DiscretizationParams, check_descent, generate, rk2_states,
                                   rk2_step, run)
from circuitopt.dynamics import CircuitState, assemble, find_equilibrium
from circuitopt.errors import NumericalBlowup
from circuitopt.netlist import Nets, make_netlist, parse_netlist
from circuitopt.oracles import Quadratic

GF = make_netlist(2, 1, [("C", 1.0, 1, 2)])


def test_params_validation_and_parse():
    with pytest.raises(ValueError):
        DiscretizationParams(h=0.0)
    with pytest.raises(ValueError):
        DiscretizationParams(eta=-1.0)
    with pytest.raises(ValueError):
        DiscretizationParams(rho=-0.1)
    p = DiscretizationParams.parse("0,1,6.66,6.66,0,0")
    assert p.as_tuple() == (0.0, 1.0, 6.66, 6.66, 0.0, 0.0)
    with pytest.raises(ValueError):
        DiscretizationParams.parse("1,2,3")
    assert DiscretizationParams.unchecked(h=0.0).h == 0.0


def test_beta_one_is_forward_euler(rng):
    net, _ = parse_netlist(data_file("rc_ladder.net"))
    dyn = assemble(net, Quadratic([[1.5]], [0.2]))
    s = rng.standard_normal((1, 2))
    for alpha in (0.0, 0.3, 1.0):
        nxt, _ = rk2_states(dyn.F, s, DiscretizationParams(alpha, 1.0, 0.4))
        np.testing.assert_allclose(nxt, s + 0.4 * dyn.F(s))


def test_scalar_two_stage_recursion():
    # F(x) = -x with alpha = 1, beta = 0: x+ = x - h(x - h x)
    dyn = assemble(GF, Quadratic([[1.0]]))
    for h in (0.1, 0.5, 1.7):
        s = dyn.initial_state([2.0])
        out = rk2_step(dyn, s, DiscretizationParams(1.0, 0.0, h))
        assert out.v_C[0, 0] == pytest.approx(2.0 * (1 - h + h * h))
        assert out.t == pytest.approx(h)


def test_ladder_update_coefficients(rng):
    # with h = 6.66: w+ = w - h/(2RC) (y + 3w),  z+ = z - h/(4RC) (5y + 3w), z = x + y/2
    net, _ = parse_netlist(data_file("rc_ladder.net"))
    alg = CircuitAlgorithm(net, DiscretizationParams(0.0, 1.0, 6.66, 6.66))
    a, b = 6.66 / 20, 6.66 / 40
    assert round(a, 3) == 0.333 and round(b, 4) == 0.1665
    for curv in (0.5, 2.0):
        f = Quadratic([[curv]], [0.3])
        s = CircuitState(rng.standard_normal((1, 2)), np.zeros((1, 0)))
        i0, s1 = alg.info(s, f), alg.step(s, f)
        i1 = alg.info(s1, f)
        w, y = s.v_C[0, 1], i0.y[0, 0]
        z0, z1 = (i0.x + i0.y / 2)[0, 0], (i1.x + i1.y / 2)[0, 0]
        assert s1.v_C[0, 1] - w == pytest.approx(-a * (y + 3 * w), abs=1e-12)
        assert z1 - z0 == pytest.approx(-b * (5 * y + 3 * w), abs=1e-12)


def test_descent_is_zero_at_equilibrium():
    net, _ = parse_netlist(data_file("rc_ladder.net"))
    f = Quadratic([[1.0]], [1.0])
    eq = find_equilibrium(net, Nets.single(1), f, 1)
    alg = generate(net, Nets.single(1), DiscretizationParams(0.0, 1.0, 6.66, 6.66))
    res = run(alg, f, CircuitState(eq.v_C, eq.i_L), 5, eq=eq)
    np.testing.assert_allclose(res.energies, 0.0, atol=1e-20)
    np.testing.assert_allclose(res.descent, 0.0, atol=1e-12)


def test_ladder_descent_nonpositive_from_random_start(rng):
    net, _ = parse_netlist(data_file("rc_ladder.net"))
    f = Quadratic([[0.7]], [1.0])
    eq = find_equilibrium(net, Nets.single(1), f, 1)
    alg = CircuitAlgorithm(net, DiscretizationParams(0.0, 1.0, 6.66, 6.66))
    res = run(alg, f, CircuitState(rng.standard_normal((1, 2)), np.zeros((1, 0))), 40, eq=eq)
    assert np.all(res.descent <= 1e-10)


def test_gradient_flow_descent_sign():
    # Euler on gradient flow: D = (h^2/2 - h + eta) x^2 for f = x^2/2, C = 1
    f = Quadratic([[1.0]])
    eq = find_equilibrium(GF, Nets.single(1), f, 1)
    s0 = CircuitState(np.array([[1.0]]), np.zeros((1, 0)))
    for h, eta in ((1.0, 0.5), (0.5, 0.2), (3.0, 0.5)):
        alg = CircuitAlgorithm(GF, DiscretizationParams(0.0, 1.0, h, eta))
        D = check_descent(alg, [s0, alg.step(s0, f)], eq, f)
        assert D[0] == pytest.approx(h * h / 2 - h + eta)
    # parameter override
    alg = CircuitAlgorithm(GF, DiscretizationParams(0.0, 1.0, 3.0, 0.5))
    D = check_descent(alg, [s0, alg.step(s0, f)], eq, f, DiscretizationParams(0.0, 1.0, 3.0, 1.0))
    assert D[0] == pytest.approx(2.5)


def test_blowup_detected():
    alg = CircuitAlgorithm(GF, DiscretizationParams(0.0, 1.0, 10.0, 1.0))
    with pytest.raises(NumericalBlowup):
        run(alg, Quadratic([[1.0]]), CircuitState(np.array([[1.0]]), np.zeros((1, 0))), 100)


def test_run_csv_and_early_stop():
    f = Quadratic([[1.0]], [-2.0])
    eq = find_equilibrium(GF, Nets.single(1), f, 1)
    alg = CircuitAlgorithm(GF, DiscretizationParams(0.0, 1.0, 0.5, 0.5))
    obj = lambda x: f.value(np.ravel(x)) + 3.0
    fstar = obj(f.minimizer())
    res = run(alg, f, CircuitState(np.zeros((1, 1)), np.zeros((1, 0))), 200, eq=eq, objective=obj, fstar=fstar,
              target=1e-10)
    assert len(res.states) < 201
    assert res.rel_error[-1] <= 1e-10
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["k", "energy", "D_k", "relative_error"]
    assert len(rows) == len(res.states) + 1
    assert float(rows[1][1]) == pytest.approx(res.energies[0])
    assert rows[-1][2] == ""  # no descent value after the last state
    with pytest.raises(ValueError):
        run(alg, f, res.states[0], 0)
