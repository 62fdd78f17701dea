import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circuitopt import data_file
from circuitopt.errors import DimensionMismatch, InvalidNetlist, ParseError
from circuitopt.netlist import (MultiWireTemplate, Nets, build_incidence, check_admissible, equilibrium_terminal_space,
                                expand_multiwire, format_netlist, make_netlist, parse_netlist, parse_nets,
                                replicate_nets)

FIG_A = np.array([
    [1, 0, 0, -1, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, -1, 0, 0],
    [0, 0, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, -1, 1],
    [-1, 0, 0, 1, 1, 0, 0],
    [0, -1, -1, 0, 0, 1, 0],
])


@pytest.fixture
def five():
    netlist, _ = parse_netlist(data_file("five_terminal.net"))
    return netlist, parse_nets(data_file("five_terminal.nets"))


def test_incidence_matches_printed_matrix(five):
    np.testing.assert_array_equal(build_incidence(five[0]), FIG_A)


def test_incidence_single_resistor():
    np.testing.assert_array_equal(build_incidence(make_netlist(2, 1, [("R", 1.0, 1, 2)])), [[1.0]])


def test_incidence_columns_have_one_plus_one_minus(five):
    A = build_incidence(five[0])
    assert np.all((A == 1).sum(axis=0) <= 1) and np.all((A == -1).sum(axis=0) <= 1)
    assert set(A.sum(axis=0)) <= {-1.0, 0.0, 1.0}


def test_nets_partition_and_selection():
    nets = Nets(5, ((1, 3), (2, 4), (5,)))
    E = nets.selection_matrix()
    assert E.shape == (3, 5)
    np.testing.assert_array_equal(E.sum(axis=0), np.ones(5))
    with pytest.raises(InvalidNetlist):
        Nets(3, ((1, 2),))
    with pytest.raises(InvalidNetlist):
        Nets(3, ((1, 2), (2, 3)))


def test_netlist_invariants():
    with pytest.raises(InvalidNetlist):
        make_netlist(2, 2, [("R", 1, 1, 2)])  # tau < m + 1
    with pytest.raises(InvalidNetlist):
        make_netlist(3, 1, [("R", 0, 1, 2), ("R", 0, 2, 1)])  # wire loop
    with pytest.raises(InvalidNetlist):
        make_netlist(3, 1, [("C", -1.0, 1, 3)])
    with pytest.raises(InvalidNetlist):
        make_netlist(4, 1, [("R", 1, 1, 4), ("C", 1, 2, 3)])  # nodes 2, 3 float


def test_five_terminal_admissible_and_l1_witness(five):
    netlist, nets = five
    assert check_admissible(netlist, nets)
    idx = [j for j, c in enumerate(netlist.components) if c.name == "L1"][0]
    res = check_admissible(netlist.without(idx), nets)
    assert not res and res.witness is not None
    # the witness lies in one subspace but not the other
    B1 = equilibrium_terminal_space(netlist.without(idx))
    from circuitopt.netlist import consensus_space
    B2 = consensus_space(nets)
    d1 = np.linalg.norm(res.witness - B1 @ (B1.T @ res.witness))
    d2 = np.linalg.norm(res.witness - B2 @ (B2.T @ res.witness))
    assert max(d1, d2) > 0.1 and min(d1, d2) < 1e-9


def test_wire_between_terminals():
    net = make_netlist(3, 2, [("R", 0.0, 1, 2)], allow_floating=True)
    B = equilibrium_terminal_space(net)
    P = B @ B.T
    # x1 = x2, y1 + y2 = 0, coordinates (x1, x2, y1, y2)
    expected = np.array([[1, 1, 0, 0], [0, 0, 1, -1]]) / np.sqrt(2)
    np.testing.assert_allclose(P, expected.T @ expected, atol=1e-12)
    assert check_admissible(net, Nets(2, ((1, 2),)))


def test_series_capacitor_forces_zero_current():
    net = make_netlist(3, 2, [("C", 1.0, 1, 2)], allow_floating=True)
    B = equilibrium_terminal_space(net)
    # y1 = y2 = 0 on the whole equilibrium set
    assert np.allclose(B[2:], 0.0)


def test_dimension_mismatch(five):
    with pytest.raises(DimensionMismatch):
        check_admissible(five[0], Nets.single(3))


def test_admissibility_invariant_under_order_and_scaling(five, rng):
    netlist, nets = five
    comps = list(netlist.components)
    for _ in range(5):
        perm = rng.permutation(len(comps))
        shuffled = [comps[k] for k in perm]
        scaled = [c if c.kind != "R" or c.value == 0 else type(c)(c.kind, c.value * rng.uniform(0.1, 10), c.plus,
                                                                   c.minus, c.name) for c in shuffled]
        assert check_admissible(type(netlist)(netlist.tau, scaled, netlist.m), nets)


def test_multiwire_expansion(five):
    netlist, nets = five
    one = expand_multiwire(MultiWireTemplate(netlist, 1))
    assert one.components == netlist.components
    two = expand_multiwire(MultiWireTemplate(netlist, 2))
    assert two.sigma == 14 and two.m == 10
    assert check_admissible(two, replicate_nets(nets, 2))
    cap = expand_multiwire(MultiWireTemplate(make_netlist(2, 1, [("C", 1.0, 1, 2)]), 3))
    assert cap.count("C") == 3 and sum(c.minus == cap.ground for c in cap.components) == 3


def test_parse_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.net"
    p.write_text("nodes 3 terminals 1\n# comment\nR 1 1 3\nQ 1 2 3\n")
    with pytest.raises(ParseError) as err:
        parse_netlist(str(p))
    assert err.value.line == 4
    with pytest.raises(ParseError):
        parse_netlist("R 1 1 2\n")  # missing header


def test_inline_nets_records():
    net, nets = parse_netlist("nodes 3 terminals 2\nR 0 1 2\nC 1 2 3\nnet 1 2\n")
    assert nets == Nets(2, ((1, 2),))
    assert check_admissible(net, nets)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("RLC"), st.floats(0.1, 10), st.integers(1, 5), st.integers(1, 5)),
                min_size=1, max_size=8))
def test_format_parse_roundtrip(records):
    records = [r for r in records if r[2] != r[3]]
    try:
        net = make_netlist(5, 2, records, allow_floating=True)
    except InvalidNetlist:
        return
    back, _ = parse_netlist(format_netlist(net), allow_floating=True)
    assert back == net


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tellegen_on_random_kirchhoff_solutions(seed):
    rng = np.random.default_rng(seed)
    netlist, _ = parse_netlist(data_file("five_terminal.net"))
    A = build_incidence(netlist)
    m = netlist.m
    # currents in the null space of the internal rows; y from the terminal rows
    from scipy.linalg import null_space
    Ni = null_space(A[m:])
    i = Ni @ rng.standard_normal(Ni.shape[1])
    y = -A[:m] @ i
    pot = rng.standard_normal(A.shape[0])
    v = A.T @ pot
    assert abs(v @ i + pot[:m] @ y) <= 1e-9
