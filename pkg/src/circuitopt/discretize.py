"""Two-stage Runge-Kutta discretization and per-step dissipativity checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import CircuitState, Dynamics, EnergySpec, Equilibrium, assemble
from .errors import NumericalBlowup
from .netlist import MultiWireTemplate, Netlist, Nets
from .network import Network
from .oracles import FunctionOracle

BLOWUP = 1e12


@dataclass(frozen=True)
class DiscretizationParams:
    alpha: float = 0.0
    beta: float = 1.0
    h: float = 1.0
    eta: float = 1.0
    rho: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be > 0")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.rho < 0 or self.gamma < 0:
            raise ValueError("rho and gamma must be >= 0")

    def replace(self, **kw):
        return replace(self, **kw)

    @classmethod
    def unchecked(cls, alpha=0.0, beta=1.0, h=0.0, eta=0.0, rho=0.0, gamma=0.0):
        """Skip validation; for degenerate probes such as h = 0 or eta = 0."""
        obj = object.__new__(cls)
        for k, v in zip(("alpha", "beta", "h", "eta", "rho", "gamma"), (alpha, beta, h, eta, rho, gamma)):
            object.__setattr__(obj, k, float(v))
        return obj

    def as_tuple(self):
        return (self.alpha, self.beta, self.h, self.eta, self.rho, self.gamma)

    @classmethod
    def parse(cls, text):
        vals = [float(t) for t in str(text).split(",")]
        if len(vals) != 6:
            raise ValueError("expected a,b,h,eta,rho,gamma")
        return cls(*vals)


def rk2_states(F, s, p):
    """The two-stage recursion on a state array; returns ``(s_next, s_half)``."""
    h = p.h
    F1 = F(s)
    s_half = s + p.alpha * h * F1
    if p.beta == 1.0:
        return s + h * F1, s_half
    F2 = F(s_half)
    return s + p.beta * h * F1 + (1 - p.beta) * h * F2, s_half


def rk2_step(dyn: Dynamics, s: CircuitState, p: DiscretizationParams) -> CircuitState:
    nxt, _ = rk2_states(dyn.F, s.s, p)
    return CircuitState.from_s(dyn.net, nxt, s.t + p.h)


@dataclass
class StepInfo:
    """Terminal pair and resistor currents evaluated at the state a step starts from."""

    x: np.ndarray
    y: np.ndarray
    i_R: np.ndarray | None = None
    D_R: np.ndarray | None = None


class DiscreteAlgorithm:
    """Interface shared by the generic RK wrapper and closed-form zoo updates."""

    params: DiscretizationParams
    spec: EnergySpec | None = None
    layout: tuple = ()

    def step(self, state, oracles):
        raise NotImplementedError

    def info(self, state, oracles) -> StepInfo:
        raise NotImplementedError

    def energy(self, state, eq, oracles) -> float:
        raise NotImplementedError

    def iterate_point(self, state, oracles):
        """Primal point used for objective evaluation (rows = coordinates, cols = terminals)."""
        return self.info(state, oracles).x


class CircuitAlgorithm(DiscreteAlgorithm):
    """Generic wrapper: ``rk2_step`` on the assembled dynamics of a netlist."""

    layout = ("v_C", "i_L")

    def __init__(self, netlist, params: DiscretizationParams, spec: EnergySpec | None = None):
        if isinstance(netlist, MultiWireTemplate):
            netlist = netlist.netlist
        self.netlist = netlist
        self.params = params
        self.spec = spec if spec is not None else EnergySpec.physical(netlist)
        self.network = Network(netlist)
        self._cache = {}

    def dynamics(self, oracle, n) -> Dynamics:
        key = (id(oracle), n)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not oracle:
            if len(self._cache) > 64:
                self._cache.clear()
            hit = self._cache[key] = (oracle, Dynamics(self.netlist, oracle, n, network=self.network))
        return hit[1]

    def step(self, state: CircuitState, oracle):
        return rk2_step(self.dynamics(oracle, state.v_C.shape[0]), state, self.params)

    def info(self, state, oracle):
        dyn = self.dynamics(oracle, state.v_C.shape[0])
        u, _ = dyn.solve(state.s)
        net = dyn.net
        return StepInfo(u @ net.Xu.T, u[:, net.slices["y"]], u[:, net.slices["iR"]], net.D_R)

    def energy(self, state, eq, oracle):
        spec = self.spec.with_gamma(self.params.gamma) if self.spec.gamma_nodes else self.spec
        pots = None
        if spec.gamma and spec.gamma_nodes:
            pots = self.dynamics(oracle, state.v_C.shape[0]).observe(state).potentials
        return spec.evaluate(state.v_C, state.i_L, eq, pots)


def generate(circuit, nets: Nets | None, p: DiscretizationParams) -> DiscreteAlgorithm:
    """Closed-form updates for zoo circuits, the generic RK wrapper otherwise."""
    from .zoo.circuits import ZooCircuit

    if isinstance(circuit, ZooCircuit):
        return circuit.algorithm(p)
    return CircuitAlgorithm(circuit, p)


@dataclass
class RunResult:
    states: list
    energies: np.ndarray
    descent: np.ndarray
    rel_error: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["k", "energy", "D_k", "relative_error"])
        K = len(self.states)
        for k in range(K):
            e = self.energies[k] if self.energies is not None and k < len(self.energies) else ""
            d = self.descent[k] if self.descent is not None and k < len(self.descent) else ""
            r = self.rel_error[k] if self.rel_error is not None and k < len(self.rel_error) else ""
            w.writerow([k, _fmt(e), _fmt(d), _fmt(r)])
        return buf.getvalue()


def _fmt(v):
    return "" if v == "" else f"{float(v):.17g}"


def _max_abs(state):
    if isinstance(state, CircuitState):
        return max(np.max(np.abs(state.v_C), initial=0.0), np.max(np.abs(state.i_L), initial=0.0))
    if isinstance(state, dict):
        return max((np.max(np.abs(v), initial=0.0) for v in state.values()), default=0.0)
    return float(np.max(np.abs(state)))


def descent_values(energies, infos, eq: Equilibrium, p: DiscretizationParams):
    """``D_k = E_{k+1} + eta <x^k - x*, y^k - y*> + rho ||i_R^k - i_R*||^2_{D_R} - E_k``."""
    D = np.empty(len(energies) - 1)
    for k in range(len(D)):
        inf = infos[k]
        val = energies[k + 1] - energies[k] + p.eta * float(np.sum((inf.x - eq.x) * (inf.y - eq.y)))
        if p.rho and inf.i_R is not None and inf.i_R.size:
            iR0 = eq.i_R if eq.i_R is not None else 0.0
            d = inf.i_R - iR0
            val += p.rho * float(np.sum(inf.D_R * d * d))
        D[k] = val
    return D


def run(alg: DiscreteAlgorithm, oracles, init, K: int, eq: Equilibrium | None = None,
        objective=None, fstar=None, target=None, record_states=True) -> RunResult:
    """``K`` steps from ``init``.  Energies and D_k need ``eq``; relative errors need ``objective``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    states = [init]
    s = init
    for k in range(K):
        s = alg.step(s, oracles)
        if not np.isfinite(_max_abs(s)) or _max_abs(s) > BLOWUP:
            raise NumericalBlowup(f"state exceeded {BLOWUP:g} at iteration {k + 1}")
        states.append(s)
        if target is not None and objective is not None:
            err = abs(objective(alg.iterate_point(s, oracles)) - fstar) / abs(fstar)
            if err <= target:
                break
    energies = descent = None
    if eq is not None:
        energies = np.array([alg.energy(st, eq, oracles) for st in states])
        infos = [alg.info(st, oracles) for st in states[:-1]]
        descent = descent_values(energies, infos, eq, alg.params)
    rel = None
    if objective is not None and fstar is not None:
        rel = np.array([abs(objective(alg.iterate_point(st, oracles)) - fstar) / abs(fstar) for st in states])
    return RunResult(states if record_states else [states[0], states[-1]], energies, descent, rel)


def check_descent(alg: DiscreteAlgorithm, iterates, eq: Equilibrium, oracles,
                  p: DiscretizationParams | None = None) -> np.ndarray:
    """D_k along ``iterates``; ``p`` overrides the algorithm's own (eta, rho)."""
    energies = np.array([alg.energy(st, eq, oracles) for st in iterates])
    infos = [alg.info(st, oracles) for st in iterates[:-1]]
    return descent_values(energies, infos, eq, p if p is not None else alg.params)
