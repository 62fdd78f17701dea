"""Textbook recursions of the zoo methods, coded literally (loops over agents and arcs).

These are deliberately independent of the circuit models in ``circuits``:
they read mixing matrices and stepsizes as plain inputs and never touch a
netlist.  ``lemma_h1_descent`` evaluates the per-step dissipation identity of
the capacitor-augmented decentralized ADMM.
"""
from __future__ import annotations

import numpy as np

from ..errors import LayoutMismatch, ParameterWindowViolated
from ..oracles import FunctionOracle
from .circuits import AlgorithmId
from .graph import Graph

_LAYOUT = {
    AlgorithmId.GradientFlow: ("x",),
    AlgorithmId.Nesterov: ("v", "i"),
    AlgorithmId.ProximalPoint: ("x",),
    AlgorithmId.ProximalGradient: ("x",),
    AlgorithmId.PrimalDecomposition: ("e",),
    AlgorithmId.DualDecomposition: ("i",),
    AlgorithmId.ProximalDecomposition: ("x", "e", "i"),
    AlgorithmId.DouglasRachford: ("x2", "i"),
    AlgorithmId.DavisYin: ("e", "x1"),
    AlgorithmId.DGD: ("x",),
    AlgorithmId.Diffusion: ("x",),
    AlgorithmId.DADMM: ("e", "i"),
    AlgorithmId.DADMMPlusC: ("e", "i"),
    AlgorithmId.PGExtra: ("x", "w"),
    AlgorithmId.PGExtraParallelC: ("x", "w", "u"),
}


def _one(orc, role):
    v = orc[role]
    if isinstance(v, FunctionOracle):
        return v
    if len(v) != 1:
        raise LayoutMismatch(f"role {role!r} needs a single oracle")
    return v[0]


def _many(orc, role, N):
    v = orc[role]
    v = [v] if isinstance(v, FunctionOracle) else list(v)
    if len(v) != N:
        raise LayoutMismatch(f"role {role!r} needs {N} oracles, got {len(v)}")
    return v


def reference_update(id, state: dict, oracles: dict, **step) -> dict:
    """One iteration of the named method from ``state``.

    ``step`` holds the method's stepsize inputs (see ``ZooCircuit.reference_inputs``).
    """
    aid = id if isinstance(id, AlgorithmId) else AlgorithmId.parse(id)
    keys = _LAYOUT[aid]
    if not isinstance(state, dict) or any(k not in state for k in keys):
        raise LayoutMismatch(f"{aid.value} expects state keys {keys}")
    s = {k: np.array(state[k], dtype=float) for k in keys}
    A = AlgorithmId

    if aid == A.GradientFlow:
        f = _one(oracles, "f")
        return {"x": s["x"] - step["h"] / step["C"] * f.grad(s["x"])}

    if aid == A.Nesterov:
        f = _one(oracles, "f")
        h, R, L, C = step["h"], step["R"], step["L"], step["C"]
        v, i = s["v"], s["i"]
        x = v + R * i
        g = f.grad(x)
        x_plus = x - R * g
        return {"v": v - h / C * g, "i": i + h / L * (v - x_plus)}

    if aid == A.ProximalPoint:
        return {"x": _one(oracles, "f").prox(step["R"], s["x"])}

    if aid == A.ProximalGradient:
        R = step["R"]
        f, g = _one(oracles, "f"), _one(oracles, "g")
        return {"x": g.prox(R, s["x"] - R * f.grad(s["x"]))}

    if aid == A.PrimalDecomposition:
        e = s["e"]
        total = np.zeros_like(e)
        for f in oracles["f"]:
            total += f.subgrad(e)
        return {"e": e - step["h"] / step["C"] * total}

    if aid == A.DualDecomposition:
        i = s["i"]
        N = i.shape[0]
        fs = _many(oracles, "f", N)
        x = np.array([fs[j].grad_conjugate(i[j]) for j in range(N)])
        e = sum(x[j] for j in range(N)) / N
        out = np.empty_like(i)
        for j in range(N):
            out[j] = i[j] + step["h"] / step["L"] * (e - x[j])
        return {"i": out}

    if aid == A.ProximalDecomposition:
        h, R, L = step["h"], step["R"], step["L"]
        x, e, i = s["x"], s["e"], s["i"]
        N = x.shape[0]
        fs = _many(oracles, "f", N)
        x_new = np.array([fs[j].prox(R, e + R * i[j]) for j in range(N)])
        e_new = sum(x[j] for j in range(N)) / N
        i_new = np.array([i[j] + h / L * (e_new - x_new[j]) for j in range(N)])
        return {"x": x_new, "e": e_new, "i": i_new}

    if aid == A.DouglasRachford:
        h, R, L = step["h"], step["R"], step["L"]
        f, g = _one(oracles, "f"), _one(oracles, "g")
        x2, i = s["x2"], s["i"]
        x1_new = g.prox(R, x2 + R * i)
        x2_new = f.prox(R, x1_new - R * i)
        return {"x2": x2_new, "i": i + h / L * (x2_new - x1_new)}

    if aid == A.DavisYin:
        a = step["alpha"]
        f, g, hh = _one(oracles, "f"), _one(oracles, "g"), _one(oracles, "h")
        e, x1 = s["e"], s["x1"]
        x3 = g.prox(a, 2 * x1 - e - a * hh.grad(x1))
        x1_new = f.prox(a, e + x3 - x1)
        return {"e": e + x3 - x1, "x1": x1_new}

    if aid == A.DGD:
        W = np.asarray(step["W"])
        x = s["x"]
        N = x.shape[0]
        fs = _many(oracles, "f", N)
        out = np.empty_like(x)
        for j in range(N):
            out[j] = sum(W[j, l] * x[l] for l in range(N)) - step["h"] / step["C"] * fs[j].grad(x[j])
        return {"x": out}

    if aid == A.Diffusion:
        W, R = np.asarray(step["W"]), step["R"]
        x = s["x"]
        N = x.shape[0]
        fs = _many(oracles, "f", N)
        half = [x[l] - R * fs[l].grad(x[l]) for l in range(N)]
        return {"x": np.array([sum(W[j, l] * half[l] for l in range(N)) for j in range(N)])}

    if aid in (A.DADMM, A.DADMMPlusC):
        return _dadmm(aid, s, oracles, step)

    if aid in (A.PGExtra, A.PGExtraParallelC):
        W, R = np.asarray(step["W"]), step["R"]
        x, w = s["x"], s["w"]
        N = x.shape[0]
        fs, hs = _many(oracles, "f", N), _many(oracles, "h", N)
        u = s.get("u", np.zeros_like(x))
        x_new = np.empty_like(x)
        for j in range(N):
            mix = sum(W[j, l] * x[l] for l in range(N))
            x_new[j] = fs[j].prox(R, mix - R * hs[j].grad(x[j]) - w[j] - u[j])
        lap = np.eye(N) - W
        if aid == A.PGExtra:
            return {"x": x_new, "w": w + 0.5 * lap @ x}
        sz, C = step["s"], step["C"]
        return {"x": x_new, "w": w + sz * lap @ x, "u": C / sz * lap @ (x_new - x)}

    raise AssertionError(aid)


def _arc_rows(graph: Graph):
    return {arc: k for k, arc in enumerate(graph.arcs)}


def _dadmm(aid, s, oracles, step):
    graph: Graph = step["graph"]
    R = step["R"]
    e, i = s["e"], s["i"]
    E = graph.edges
    if e.shape[0] != len(E) or i.shape[0] != 2 * len(E):
        raise LayoutMismatch("edge / arc rows do not match the graph")
    rows = _arc_rows(graph)
    nb = graph.neighbors
    fs = _many(oracles, "f", graph.N)
    x = {}
    for j in range(1, graph.N + 1):
        d = len(nb[j])
        z = sum(R * i[rows[(j, l)]] + e[graph.edge_index(j, l)] for l in nb[j]) / d
        x[j] = fs[j - 1].prox(R / d, z)
    strong = set(step.get("strong", ())) if aid == AlgorithmId.DADMMPlusC else set()
    e_new = np.empty_like(e)
    for k, (j, l) in enumerate(E):
        if j in strong and l in strong:
            h, C = step["h"], step["C"]
            flow = i[rows[(j, l)]] + i[rows[(l, j)]]
            e_new[k] = e[k] - h / (C * R) * (R * flow + 2 * e[k] - x[j] - x[l])
        else:
            e_new[k] = (x[j] + x[l]) / 2
    i_new = np.empty_like(i)
    # plain DADMM runs at stepsize L / R
    ratio = step["h"] / step["L"] if aid == AlgorithmId.DADMMPlusC else 1.0 / R
    for (j, l), r in rows.items():
        i_new[r] = i[r] + ratio * (e_new[graph.edge_index(j, l)] - x[j])
    return {"e": e_new, "i": i_new}


def lemma_h1_descent(iterates, R, L, C, h, tau, eq, graph: Graph, strong, oracles=None, tol=1e-12):
    """Residuals of the per-step dissipation identity for the capacitor-augmented DADMM.

    ``iterates`` are states with keys ``e`` (edge rows) and ``i`` (arc rows);
    ``eq`` is a dict with ``x`` (the consensus point), ``y`` (per-agent
    subgradients, rows) and ``i`` (antisymmetric arc currents summing to ``y``).
    Returns one residual per step; each is zero up to rounding.
    """
    lo = max(1.0, 2 * h / (C * R))
    hi = 2 - h * R / L
    if not (lo - tol <= tau * tau <= hi + tol):
        raise ParameterWindowViolated(
            f"need max(1, 2h/(CR)) = {lo:.6g} <= tau^2 = {tau * tau:.6g} <= 2 - hR/L = {hi:.6g}")
    strong = set(strong)
    rows = _arc_rows(graph)
    E = graph.edges
    cap = [j in strong and l in strong for j, l in E]
    xs = np.asarray(eq["x"], dtype=float)
    ys = np.asarray(eq["y"], dtype=float)
    i_star = np.asarray(eq["i"], dtype=float)
    nb = graph.neighbors

    def energy(st):
        val = 0.0
        for r in range(len(rows)):
            d = st["i"][r] - i_star[r]
            val += L / 2 * d @ d
        for k in range(len(E)):
            d = st["e"][k] - xs
            val += (C / 2 if cap[k] else h / R) * d @ d
        return val

    step = {"graph": graph, "strong": tuple(strong), "R": R, "L": L, "C": C, "h": h}
    out = []
    for k in range(len(iterates) - 1):
        cur, nxt = iterates[k], iterates[k + 1]
        # x^{k+1} from the same prox the update uses
        x = {}
        for j in range(1, graph.N + 1):
            d = len(nb[j])
            z = sum(R * cur["i"][rows[(j, l)]] + cur["e"][graph.edge_index(j, l)] for l in nb[j]) / d
            x[j] = oracles["f"][j - 1].prox(R / d, z)
        gap = 0.0
        for (j, l), r in rows.items():
            d = nxt["e"][graph.edge_index(j, l)] - x[j]
            gap += d @ d
        inner = 0.0
        for j in range(1, graph.N + 1):
            y = sum(cur["i"][rows[(j, l)]] + (cur["e"][graph.edge_index(j, l)] - x[j]) / R for l in nb[j])
            inner += (x[j] - xs) @ (y - ys[j - 1])
        res = energy(nxt) + h / (2 * R) * (2 - h * R / L - tau * tau) * gap + h * inner - energy(cur)
        out.append(res)
    return np.array(out)
