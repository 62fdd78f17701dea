import json
import os

import numpy as np
import pytest

from circuitopt import data_file
from circuitopt.cli.bench import Method, bench
from circuitopt.cli.main import main
from circuitopt.cli.problems import (gen_decqp, gen_geomedian, gen_huberdual, huber_primal_value, parse_problem,
                                     terminal_oracles)
from circuitopt.errors import ParseError
from circuitopt.zoo import AlgorithmId

LADDER = data_file("rc_ladder.net")


@pytest.fixture
def quad_problem(tmp_path):
    p = tmp_path / "quad.prob"
    p.write_text("# one terminal\nquadratic 2,0;0,2 1,-1\nfstar -0.5\n")
    return str(p)


def _json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_check_admissible_exit_codes(tmp_path, capsys):
    assert main(["check-admissible", data_file("five_terminal.net"), data_file("five_terminal.nets")]) == 0
    text = open(data_file("five_terminal.net")).read()
    cut = tmp_path / "cut.net"
    cut.write_text("\n".join(l for l in text.splitlines() if not l.strip().endswith("L1")) + "\n")
    assert main(["--json", "check-admissible", str(cut), data_file("five_terminal.nets")]) == 1
    out = _json(capsys)
    assert out["result"] == "NotAdmissible" and out["witness"]


def test_certify(capsys):
    assert main(["--json", "certify", LADDER, data_file("single.nets"), "--params", "0,1,6.66,6.66,0,0"]) == 0
    out = _json(capsys)
    assert out["result"] == "PASS" and out["value"] <= 1e-6
    assert "lambda" in out["certificate"]
    assert main(["certify", LADDER, data_file("single.nets"), "--params", "0,1,40,40,0,0"]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert main(["certify", LADDER, data_file("single.nets")]) == 2


def test_malformed_input_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.net"
    bad.write_text("nodes 3 terminals 1\nR x 1 3\n")
    assert main(["check-admissible", str(bad), data_file("single.nets")]) == 2
    err = capsys.readouterr().err
    assert f"{bad}:2" in err
    assert main(["check-admissible", str(tmp_path / "missing.net")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["certify", LADDER, "--params", "1,2"])
    assert exc.value.code == 2


def test_run_netlist_on_problem_file(quad_problem, tmp_path, capsys):
    csv_path = tmp_path / "curve.csv"
    rc = main(["--json", "run", LADDER, quad_problem, "--params", "0,1,6.66,6.66,0,0", "-K", "2000",
               "--target", "1e-8", "--csv", str(csv_path)])
    assert rc == 0
    out = _json(capsys)
    assert out["iterations"] is not None and out["final_rel_error"] <= 1e-8
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "k,rel_error,energy" and len(lines) == out["iterations"] + 2


def test_run_zoo_method(capsys):
    assert main(["--json", "run", "DADMM:R=0.6", "geomedian:0", "-K", "500"]) == 0
    out = _json(capsys)
    assert 0 < out["iterations"] <= 500
    assert main(["run", "DADMM:R=0.6", "geomedian:0", "-K", "3"]) == 1


def test_simulate_csv(quad_problem, tmp_path):
    path = tmp_path / "sim.csv"
    assert main(["simulate", LADDER, quad_problem, "--nets", data_file("single.nets"), "--T", "0.5",
                 "--every", "50", "--csv", str(path)]) == 0
    rows = path.read_text().splitlines()
    assert rows[0] == "t,energy,power_residual" and len(rows) == 12
    E = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(b <= a + 1e-12 for a, b in zip(E, E[1:]))
    assert max(abs(float(r.split(",")[2])) for r in rows[1:]) <= 1e-8


def test_bench_deterministic_with_csv(tmp_path, capsys):
    args = ["--json", "bench", "geomedian:1", "--methods", "DADMM:R=0.6", "PGExtra:R=1", "-K", "2000",
            "--target", "1e-6", "--csv", str(tmp_path / "curves")]
    assert main(args) == 0
    first = _json(capsys)
    assert main(args) == 0
    second = _json(capsys)
    assert first["counts"] == second["counts"] and all(v is not None for v in first["counts"].values())
    assert len(os.listdir(tmp_path / "curves")) == 2


def test_bench_grid(capsys):
    assert main(["--json", "bench", "geomedian:0", "--grid", "DADMM:R=0.6,1.0", "-K", "2000", "--target", "1e-6"]) == 0
    grid = _json(capsys)["grid"]
    assert len(grid) == 2


def test_geomedian_generator():
    a, b = gen_geomedian(7), gen_geomedian(7)
    np.testing.assert_array_equal(a.data["b"], b.data["b"])
    assert a.data["b"].shape == (6, 100)
    assert np.all(np.abs(a.data["b"]) <= 100)
    assert not np.array_equal(a.data["b"], gen_geomedian(8).data["b"])
    # stationarity of the computed optimum
    g = sum(f.subgrad(a.x_star) for f in a.oracles["f"])
    assert np.linalg.norm(g) <= 1e-8 * max(1.0, abs(a.fstar))
    assert a.rel_error(np.tile(a.x_star, (6, 1))) <= 1e-14


def test_decqp_generator():
    inst = gen_decqp(0, m=10, N=6)
    Q, a, bb = inst.data["Q"], inst.data["a"], inst.data["b"]
    assert all(np.linalg.eigvalsh(Qj)[0] >= -1e-12 for Qj in Q)
    assert np.all(a @ inst.x_star <= bb + 1e-9)
    lam = inst.data["multipliers"]
    assert np.any(lam > 1e-8)
    # KKT stationarity with the reported duals
    grad = sum(inst.duals["h"]) + sum(inst.duals["f"])
    assert np.linalg.norm(grad) <= 1e-8
    again = gen_decqp(0, m=10, N=6)
    np.testing.assert_array_equal(again.data["Q"], Q)
    assert again.graph == inst.graph


def test_huberdual_generator():
    inst = gen_huberdual(0, m=8, n=20)
    A = inst.data["A"]
    assert np.linalg.eigvalsh(A @ A.T)[0] == pytest.approx(1.0)
    assert inst.fstar == pytest.approx(-huber_primal_value(A, inst.data["b"], inst.data["c"]), rel=1e-6)


def test_parse_problem_errors(tmp_path):
    p = tmp_path / "bad.prob"
    p.write_text("quadratic 1,0;0,1\nsquare 3\n")
    with pytest.raises(ParseError) as err:
        parse_problem(str(p))
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_problem("geomedian:abc")
    with pytest.raises(ParseError):
        parse_problem(str(tmp_path / "none.prob"))
    empty = tmp_path / "empty.prob"
    empty.write_text("# nothing\n")
    with pytest.raises(ParseError):
        parse_problem(str(empty))


def test_problem_file_roles_and_order(tmp_path):
    p = tmp_path / "two.prob"
    p.write_text("f dist 1,2\nh quadratic 1,0;0,1\nf halfspace 1,1 3\ninit 0,0;1,1\n")
    inst = parse_problem(str(p))
    kinds = [type(o).__name__ for o in terminal_oracles(inst)]
    assert kinds == ["EuclideanDistance", "Quadratic", "HalfspaceIndicator"]
    assert inst.n == 2 and inst.fstar is None and inst.x0.shape == (2, 2)


def test_method_parse():
    m = Method.parse("DADMM:R=0.6,h=2")
    assert m.id == AlgorithmId.DADMM and m.values == {"R": 0.6, "h": 2.0}
    assert Method.parse("DADMMPlusC:strong=4+5").values["strong"] == (4, 5)
    assert Method.parse("DADMM:R=0.6").label == "DADMM(R=0.6)"
    with pytest.raises(ValueError):
        Method.parse("DADMM:R")


def test_bench_reports_not_reached():
    inst = gen_geomedian(0)
    res = bench(inst, [Method.parse("DADMM:R=0.6")], target=1e-10, K_max=5, n_threads=1)
    assert res.counts == {"DADMM(R=0.6)": None} and res.not_reached == ["DADMM(R=0.6)"]
