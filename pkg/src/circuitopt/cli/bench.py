"""Benchmark harness: run zoo methods on an instance until a relative-error target."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..discretize import BLOWUP, DiscreteAlgorithm, DiscretizationParams, StepInfo
from ..errors import LayoutMismatch, TargetNotReached
from ..oracles import Zero
from ..zoo.circuits import DECENTRALIZED, MULTI_AGENT, PENALTY, AlgorithmId, ZooCircuit, build
from .problems import ProblemInstance

log = logging.getLogger(__name__)

K_MAX = 100_000
PARAM_KEYS = ("alpha", "beta", "h", "eta", "rho", "gamma")


def threads(n=None):
    if n is not None:
        return max(1, int(n))
    return max(1, int(os.environ.get("CIRCUITOPT_THREADS", os.cpu_count() or 1)))


@dataclass(frozen=True)
class Method:
    """A zoo id with component values and (optionally) discretization overrides."""

    id: AlgorithmId
    values: dict = field(default_factory=dict)
    name: str = ""

    @property
    def label(self):
        if self.name:
            return self.name
        vals = ",".join(f"{k}={v:g}" for k, v in sorted(self.values.items()) if np.isscalar(v))
        return f"{self.id.value}({vals})" if vals else self.id.value

    @classmethod
    def parse(cls, text):
        """``Id[:k=v,k=v]``; discretization keys (alpha, beta, h, eta, rho, gamma) are accepted too."""
        head, _, rest = str(text).partition(":")
        vals = {}
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            if not v:
                raise ValueError(f"expected key=value in {text!r}")
            if k == "strong":
                vals[k] = tuple(int(t) for t in v.split("+"))
            else:
                vals[k.strip()] = float(v)
        return cls(AlgorithmId.parse(head), vals)


# methods compared in each experiment
DEFAULT_METHODS = {
    "GeoMedian": (
        Method(AlgorithmId.DADMMPlusC, {"R": 0.8, "L": 2.0, "C": 15.0}, "DADMM+C"),
        Method(AlgorithmId.DADMM, {"R": 0.6}, "DADMM"),
        Method(AlgorithmId.PGExtra, {"R": 1.0}, "P-EXTRA"),
    ),
    "DecentralizedQP": (
        Method(AlgorithmId.PGExtraParallelC, {"R": 0.07, "C": 0.3, "s": 0.8}, "PG-EXTRA+C"),
        Method(AlgorithmId.PGExtra, {"R": 0.05}, "PG-EXTRA"),
    ),
    "HuberDual": (),
}


@dataclass
class BenchResult:
    counts: dict
    curves: dict
    wall: dict
    params: dict
    target: float
    not_reached: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    seed: int | None = None
    kind: str = ""

    def count(self, label, target=None):
        """First iteration with relative error at most ``target`` (default: the run's target)."""
        t = self.target if target is None else target
        rel = self.curves[label][:, 1]
        hit = np.nonzero(rel <= t)[0]
        return int(hit[0]) if hit.size else None

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "target": self.target, "counts": self.counts,
                "wall_clock_s": self.wall, "params": self.params, "not_reached": self.not_reached,
                "certificates": self.certificates,
                "final_rel_error": {k: float(v[-1, 1]) for k, v in self.curves.items()}}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), default=_jsonable, **kw)

    def curve_csv(self, label):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["k", "rel_error", "energy"])
        for k, r, e in self.curves[label]:
            w.writerow([int(k), f"{r:.17g}", "" if np.isnan(e) else f"{e:.17g}"])
        return buf.getvalue()

    def write_csv(self, directory):
        os.makedirs(directory, exist_ok=True)
        paths = []
        for label in self.curves:
            safe = "".join(ch if ch.isalnum() or ch in "-_+." else "_" for ch in label)
            path = os.path.join(directory, f"{safe}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(self.curve_csv(label))
            paths.append(path)
        return paths


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, AlgorithmId):
        return o.value
    return str(o)


# ----------------------------------------------------------------------------
# instance <-> template glue


def oracles_for(circuit: ZooCircuit, inst: ProblemInstance):
    """Role-keyed oracles for a template; missing smooth roles are filled with zeros."""
    needed = dict.fromkeys(circuit.roles)
    out = {}
    for role in needed:
        count = sum(1 for r in circuit.roles if r == role)
        have = inst.oracles.get(role)
        if have is None:
            if role == "h":
                have = [Zero()] * count
            else:
                raise LayoutMismatch(f"{circuit.id.value} needs oracles for role {role!r}")
        if len(have) != count:
            raise LayoutMismatch(f"{circuit.id.value} needs {count} {role!r} oracles, instance has {len(have)}")
        out[role] = list(have)
    return out


def circuit_for(method: Method, inst: ProblemInstance) -> ZooCircuit:
    vals = {k: v for k, v in method.values.items() if k not in PARAM_KEYS or k == "h"}
    if method.id in MULTI_AGENT:
        vals.setdefault("N", inst.N)
    graph = inst.graph if method.id in DECENTRALIZED else None
    if method.id == AlgorithmId.DADMMPlusC and "strong" not in vals and "strong" in inst.data:
        vals["strong"] = inst.data["strong"]
    return build(method.id, graph, vals)


def method_params(method: Method, circuit: ZooCircuit) -> DiscretizationParams:
    over = {k: float(v) for k, v in method.values.items() if k in PARAM_KEYS}
    if method.id == AlgorithmId.PGExtraParallelC and "s" in method.values:
        over["h"] = float(method.values["s"])
    return circuit.params.replace(**over) if over else circuit.params


def initial_state(circuit: ZooCircuit, inst: ProblemInstance, alg):
    """Primal-like keys start at the instance's initial point; currents start at zero."""
    x0 = inst.x0 if inst.x0 is not None else np.zeros((inst.N, inst.n))
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xbar = x0.mean(axis=0)
    rows = alg.model.rows()
    g = circuit.graph
    st = {}
    for key, r in rows.items():
        if key in ("x", "x1", "x2", "v", "e"):
            if r is None:
                st[key] = xbar.copy()
            elif g is not None and key == "e" and r == len(g.edges):
                st[key] = np.array([(x0[j - 1] + x0[l - 1]) / 2 for j, l in g.edges])
            elif r == x0.shape[0]:
                st[key] = x0.copy()
            else:
                st[key] = np.repeat(xbar[None], r, 0)
        else:
            st[key] = np.zeros(inst.n) if r is None else np.zeros((r, inst.n))
    return st


def zoo_equilibrium(circuit: ZooCircuit, inst: ProblemInstance, alg):
    """Equilibrium state from the instance's solution; ``None`` where it is not a consensus point."""
    if inst.x_star is None or circuit.id in PENALTY:
        return None
    xs, ys = [], []
    count = {}
    for role in circuit.roles:
        k = count.get(role, 0)
        count[role] = k + 1
        xs.append(inst.x_star)
        d = inst.duals.get(role)
        ys.append(np.zeros(inst.n) if d is None else d[k])
    return alg.equilibrium(np.array(xs), np.array(ys), oracles_for(circuit, inst))


def _agent_estimate(alg, state, orc):
    x = alg.iterate_point(state, orc)
    x = np.asarray(x)
    if x.ndim == 2 and x.shape[0] != 1 and alg.circuit.id not in DECENTRALIZED | MULTI_AGENT:
        return x[0]
    return x


def run_method(method: Method, inst: ProblemInstance, target=1e-10, K_max=K_MAX, energy=True):
    """Iterate until the relative error reaches ``target``; returns ``(curve, k_hit, params)``."""
    circuit = circuit_for(method, inst)
    p = method_params(method, circuit)
    alg = circuit.algorithm(p)
    orc = oracles_for(circuit, inst)
    state = initial_state(circuit, inst, alg)
    eq = zoo_equilibrium(circuit, inst, alg) if energy else None
    rows = []

    def record(k, st, xk):
        rel = inst.rel_error(xk)
        en = alg.energy(st, eq, orc) if eq is not None else np.nan
        rows.append((k, rel, en))
        return rel

    hit = None
    x0 = inst.x0 if inst.x0 is not None else np.zeros((inst.N, inst.n))
    if record(0, state, x0) <= target:
        hit = 0
    k = 0
    while hit is None and k < K_max:
        state = alg.step(state, orc)
        k += 1
        if not np.all(np.isfinite(state[alg.model.keys[0]])):
            break
        rel = record(k, state, _agent_estimate(alg, state, orc))
        if rel <= target:
            hit = k
        elif not rel < BLOWUP:
            log.info("%s diverged at iteration %d", method.label, k)
            break
    return np.array(rows), hit, p


def bench(inst: ProblemInstance, methods=None, target=1e-10, K_max=K_MAX, n_threads=None,
          certificates=None) -> BenchResult:
    methods = list(DEFAULT_METHODS.get(inst.kind, ()) if methods is None else methods)
    methods = [m if isinstance(m, Method) else Method(*m) if isinstance(m, tuple) else Method.parse(m)
               for m in methods]

    def cell(m):
        t0 = time.perf_counter()
        curve, hit, p = run_method(m, inst, target, K_max)
        return m.label, curve, hit, p, time.perf_counter() - t0

    with ThreadPoolExecutor(threads(n_threads)) as ex:
        done = list(ex.map(cell, methods))
    res = BenchResult({}, {}, {}, {}, target, seed=inst.seed, kind=inst.kind,
                      certificates=dict(certificates or {}))
    for label, curve, hit, p, wall in done:
        res.counts[label] = hit
        res.curves[label] = curve
        res.wall[label] = wall
        res.params[label] = dict(zip(PARAM_KEYS, p.as_tuple()))
        if hit is None:
            res.not_reached.append(label)
            log.warning("%s", TargetNotReached(f"{label} did not reach {target:g} within {K_max} iterations"))
    return res


def grid_search(inst: ProblemInstance, id, key, values, base=None, target=1e-10, K_max=10_000, n_threads=None):
    """Iteration counts over a one-parameter grid (a helper for picking baseline values)."""
    base = dict(base or {})
    methods = [Method(AlgorithmId.parse(id), {**base, key: float(v)}) for v in values]
    res = bench(inst, methods, target, K_max, n_threads)
    return {float(v): res.counts[m.label] for v, m in zip(values, methods)}


# ----------------------------------------------------------------------------
# the three-state method certified on the single-terminal RC ladder

LADDER_COEFFS = (0.33, 0.16)


class LadderAlgorithm(DiscreteAlgorithm):
    """``x = prox_{f/2}(z)``, ``y = 2(z - x)``, ``w+ = w - a(y + 3w)``, ``z+ = z - b(5y + 3w)``.

    These are the forward-Euler V-I relations of the RC ladder with R = 1,
    C = 10 at step h, rounded to ``a = h/(2RC)``, ``b = h/(4RC)``.
    """

    layout = ("z", "w")

    def __init__(self, coeffs=LADDER_COEFFS):
        self.a, self.b = coeffs
        self.params = DiscretizationParams(0.0, 1.0, 1.0, 1.0)

    def info(self, state, f):
        x = f.prox(0.5, state["z"])
        return StepInfo(x[:, None], 2 * (state["z"] - x)[:, None])

    def step(self, state, f):
        z, w = state["z"], state["w"]
        x = f.prox(0.5, z)
        y = 2 * (z - x)
        return {"z": z - self.b * (5 * y + 3 * w), "w": w - self.a * (y + 3 * w), "x": x}

    def iterate_point(self, state, f):
        return f.prox(0.5, state["z"])


def ladder_run(inst: ProblemInstance, target=1e-6, K_max=10_000, coeffs=LADDER_COEFFS):
    f = inst.oracles["f"][0]
    alg = LadderAlgorithm(coeffs)
    st = {"z": np.zeros(inst.n), "w": np.zeros(inst.n)}
    rel = [inst.rel_error(alg.iterate_point(st, f))]
    while rel[-1] > target and len(rel) <= K_max:
        st = alg.step(st, f)
        rel.append(inst.rel_error(alg.iterate_point(st, f)))
    hit = len(rel) - 1 if rel[-1] <= target else None
    return np.array(rel), hit
