"""Sampled-instance check: run the discretized circuit on random in-class quadratics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..discretize import CircuitAlgorithm, DiscretizationParams, run
from ..dynamics import CircuitState, EnergySpec, static_equilibrium
from ..errors import NumericalBlowup
from ..netlist import Nets
from ..oracles import FunctionClass, Quadratic, SeparableSum
from .gram import _classes, _unpack


@dataclass
class SampledDescent:
    max_D: float
    worst: int
    instances: int
    steps: int
    tol: float

    @property
    def passed(self):
        return self.max_D <= self.tol


def _curvatures(rng, fc: FunctionClass, n):
    lo = fc.mu
    if np.isfinite(fc.M):
        ev = rng.uniform(lo, fc.M, n)
        # the extreme curvatures are where worst cases live
        pick = rng.random(n)
        ev[pick < 0.25] = lo
        ev[pick > 0.75] = fc.M
    else:
        ev = lo + 10.0 ** rng.uniform(-2, 2, n)
        ev[rng.random(n) < 0.2] = lo
    return ev


def random_quadratic(rng, fc: FunctionClass, n):
    """Quadratic in ``fc`` whose linear term lies in the range of its Hessian."""
    ev = _curvatures(rng, fc, n)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = (U * ev) @ U.T
    return Quadratic(Q, Q @ rng.standard_normal(n))


def consensus_minimizer(parts, nets: Nets, n):
    """Terminal pairs ``(x*, y*)`` for separable quadratics under the net constraints."""
    m = len(parts)
    x = np.zeros((n, m))
    y = np.zeros((n, m))
    for g in nets.nets:
        idx = [t - 1 for t in g]
        H = sum(parts[l].Q for l in idx)
        b = sum(parts[l].p for l in idx)
        xi = -np.linalg.lstsq(H, b, rcond=None)[0]
        for l in idx:
            x[:, l] = xi
            y[:, l] = parts[l].Q @ xi + parts[l].p
    return x, y


def sampled_descent(template, p: DiscretizationParams, classes, nets=None, spec: EnergySpec | None = None,
                    instances=1000, K=100, seed=0, tol=1e-9, n_max=3) -> SampledDescent:
    """Largest ``D_k`` over random quadratic instances and random consistent starts."""
    netlist, nets, spec = _unpack(template, nets, spec)
    cls = _classes(classes, netlist.m)
    alg = CircuitAlgorithm(netlist, p, spec)
    net = alg.network
    rng = np.random.Generator(np.random.Philox(seed))
    worst, where = -np.inf, -1
    for k in range(instances):
        n = int(rng.integers(1, n_max + 1))
        parts = [random_quadratic(rng, fc, n) for fc in cls]
        oracle = parts[0] if len(parts) == 1 else SeparableSum(parts, dim=n)
        dyn = alg.dynamics(oracle, n)
        x, y = consensus_minimizer(parts, nets, n)
        eq = static_equilibrium(dyn, x, y)
        s0 = dyn.project_consistent(CircuitState(*net.split_state(rng.standard_normal((n, net.ns)))))
        try:
            res = run(alg, oracle, s0, K, eq=eq, record_states=False)
            d = float(np.max(res.descent))
        except NumericalBlowup:
            d = np.inf
        if d > worst:
            worst, where = d, k
    return SampledDescent(worst, where, instances, K, tol)
