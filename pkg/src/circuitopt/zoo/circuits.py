"""Ready-made circuits for classical and decentralized methods, with closed-form updates.

Each template is a per-coordinate netlist (function devices are the
terminals) together with a model of its discretized V-I relations.  The
model's one-step map is a sequential sweep over the relations in the order
the method evaluates them; ``algorithm(p)`` applies the two-stage scheme to
that sweep's increment, so ``beta = 1`` reproduces the sweep exactly.

Oracles are passed as a dict keyed by role: ``"f"``, ``"g"``, ``"h"``.  For
decentralized templates each role maps to a list with one oracle per agent.
States are dicts of arrays: one row per agent, edge or arc, one column per
coordinate (centralized states are flat vectors).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..discretize import DiscreteAlgorithm, DiscretizationParams, StepInfo
from ..dynamics import EnergySpec, Equilibrium
from ..errors import GraphRequired, LayoutMismatch, NotAdmissible
from ..netlist import Netlist, Nets, check_admissible, make_netlist
from ..oracles import FunctionOracle, SeparableSum
from .graph import DEFAULT_GRAPH, Graph


class AlgorithmId(str, enum.Enum):
    GradientFlow = "GradientFlow"
    Nesterov = "Nesterov"
    ProximalPoint = "ProximalPoint"
    ProximalGradient = "ProximalGradient"
    PrimalDecomposition = "PrimalDecomposition"
    DualDecomposition = "DualDecomposition"
    ProximalDecomposition = "ProximalDecomposition"
    DouglasRachford = "DouglasRachford"
    DavisYin = "DavisYin"
    DGD = "DGD"
    Diffusion = "Diffusion"
    DADMM = "DADMM"
    PGExtra = "PGExtra"
    DADMMPlusC = "DADMMPlusC"
    PGExtraParallelC = "PGExtraParallelC"

    @classmethod
    def parse(cls, text):
        key = str(text).replace("-", "").replace("_", "").replace("+", "plus").lower()
        for a in cls:
            if a.value.lower() == key:
                return a
        aliases = {"gf": cls.GradientFlow, "pp": cls.ProximalPoint, "pg": cls.ProximalGradient,
                   "drs": cls.DouglasRachford, "dys": cls.DavisYin, "admm": cls.DADMM,
                   "dadmmc": cls.DADMMPlusC, "pgextrac": cls.PGExtraParallelC,
                   "pgextraparallelc": cls.PGExtraParallelC, "pgextraplusc": cls.PGExtraParallelC,
                   "pextra": cls.PGExtra}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown algorithm id {text!r}")


DECENTRALIZED = {AlgorithmId.DGD, AlgorithmId.Diffusion, AlgorithmId.DADMM, AlgorithmId.PGExtra,
                 AlgorithmId.DADMMPlusC, AlgorithmId.PGExtraParallelC}
# several agents, but no communication graph
MULTI_AGENT = {AlgorithmId.PrimalDecomposition, AlgorithmId.DualDecomposition,
               AlgorithmId.ProximalDecomposition}
# penalty formulations: their equilibria are not consensus points
PENALTY = {AlgorithmId.DGD, AlgorithmId.Diffusion}


# ----------------------------------------------------------------------------
# small helpers

def _list(orc, role, count=None):
    v = orc[role]
    if isinstance(v, FunctionOracle):
        v = [v]
    v = list(v)
    if count is not None and len(v) != count:
        raise LayoutMismatch(f"expected {count} oracles for role {role!r}, got {len(v)}")
    return v


def _rows(fs, X, method="grad"):
    return np.array([getattr(f, method)(x) for f, x in zip(fs, X)])


def _prox_rows(fs, rho, Z):
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (len(fs),))
    return np.array([f.prox(r, z) for f, r, z in zip(fs, rho, Z)])


def _edge_weights_matrix(graph: Graph, weights):
    """Weighted Laplacian ``B' diag(w) B``."""
    B = graph.incidence()
    return B.T @ (np.asarray(weights, dtype=float)[:, None] * B)


# ----------------------------------------------------------------------------
# models: one per template


class _Model:
    keys: tuple = ()
    aux: tuple = ("x", "y")

    def __init__(self, zc: "ZooCircuit"):
        self.zc = zc
        self.v = zc.values
        self.graph = zc.graph

    # shapes: dict key -> row count (None for flat centralized vectors)
    def rows(self):
        raise NotImplementedError

    def sweep(self, s, orc, h):
        raise NotImplementedError

    def star(self, xs, ys, orc):
        raise NotImplementedError

    def energy(self, s, star, orc, gamma):
        raise NotImplementedError


class _GradientFlow(_Model):
    keys = ("x",)

    def rows(self):
        return {"x": None}

    def sweep(self, s, orc, h):
        f = orc["f"]
        g = f.grad(s["x"])
        return {"x": s["x"] - (h / self.v["C"]) * g}, (s["x"][None], g[None])

    def star(self, xs, ys, orc):
        return {"x": xs[0]}

    def energy(self, s, star, orc, gamma):
        d = s["x"] - star["x"]
        return 0.5 * self.v["C"] * float(d @ d)


class _Nesterov(_Model):
    keys = ("v", "i")

    def rows(self):
        return {"v": None, "i": None}

    def sweep(self, s, orc, h):
        R, L, C = self.v["R"], self.v["L"], self.v["C"]
        v, i = s["v"], s["i"]
        x = v + R * i
        g = orc["f"].grad(x)
        xp = x - R * g
        return {"v": v - (h / C) * g, "i": i + (h / L) * (v - xp)}, (x[None], g[None])

    def star(self, xs, ys, orc):
        return {"v": xs[0], "i": np.zeros_like(xs[0])}

    def energy(self, s, star, orc, gamma):
        dv, di = s["v"] - star["v"], s["i"] - star["i"]
        return 0.5 * (self.v["C"] * dv @ dv + self.v["L"] * di @ di)


class _ProximalPoint(_Model):
    keys = ("x",)

    def rows(self):
        return {"x": None}

    def sweep(self, s, orc, h):
        R, C = self.v["R"], self.v["C"]
        x = s["x"]
        px = orc["f"].prox(R, x)
        # capacitor current through the series resistor
        cur = (x - px) / R
        return {"x": x - (h / C) * cur}, (px[None], cur[None])

    def star(self, xs, ys, orc):
        return {"x": xs[0]}

    def energy(self, s, star, orc, gamma):
        d = s["x"] - star["x"]
        return 0.5 * self.v["C"] * float(d @ d)


class _ProximalGradient(_Model):
    """Limit method (``C`` small against ``R``) written on the f-terminal potential."""

    keys = ("x",)

    def rows(self):
        return {"x": None}

    def sweep(self, s, orc, h):
        R, C = self.v["R"], self.v["C"]
        x = s["x"]
        gf = orc["f"].grad(x)
        e = x - R * gf
        z = orc["g"].prox(R, e)
        xn = x + (h / (C * R)) * (z - x)
        return {"x": xn}, (np.array([x, z]), np.array([gf, (e - z) / R]))

    def star(self, xs, ys, orc):
        return {"x": xs[0]}

    def energy(self, s, star, orc, gamma):
        R = self.v["R"]
        f = orc["f"]
        d = (s["x"] - R * f.grad(s["x"])) - (star["x"] - R * f.grad(star["x"]))
        return 0.5 * self.v["C"] * float(d @ d)


class _PrimalDecomposition(_Model):
    keys = ("e",)

    def rows(self):
        return {"e": None}

    def sweep(self, s, orc, h):
        fs = _list(orc, "f", self.v["N"])
        e = s["e"]
        Y = np.array([f.subgrad(e) for f in fs])
        return {"e": e - (h / self.v["C"]) * Y.sum(axis=0)}, (np.repeat(e[None], len(fs), 0), Y)

    def star(self, xs, ys, orc):
        return {"e": xs[0]}

    def energy(self, s, star, orc, gamma):
        d = s["e"] - star["e"]
        return 0.5 * self.v["C"] * float(d @ d)


class _DualDecomposition(_Model):
    keys = ("i",)

    def rows(self):
        return {"i": self.v["N"]}

    def sweep(self, s, orc, h):
        fs = _list(orc, "f", self.v["N"])
        i = s["i"]
        X = _rows(fs, i, "grad_conjugate")
        e = X.mean(axis=0)
        return {"i": i + (h / self.v["L"]) * (e[None] - X)}, (X, i.copy())

    def star(self, xs, ys, orc):
        return {"i": ys.copy()}

    def energy(self, s, star, orc, gamma):
        d = s["i"] - star["i"]
        return 0.5 * self.v["L"] * float(np.sum(d * d))


class _ProximalDecomposition(_Model):
    keys = ("x", "e", "i")

    def rows(self):
        N = self.v["N"]
        return {"x": N, "e": None, "i": N}

    def sweep(self, s, orc, h):
        N, R, L = self.v["N"], self.v["R"], self.v["L"]
        fs = _list(orc, "f", N)
        x, e, i = s["x"], s["e"], s["i"]
        z = e[None] + R * i
        xn = _prox_rows(fs, R, z)
        en = x.mean(axis=0)  # lagged average, as the method evaluates it
        iN = i + (h / L) * (en[None] - xn)
        return {"x": xn, "e": en, "i": iN}, (xn, (z - xn) / R)

    def star(self, xs, ys, orc):
        return {"x": xs.copy(), "e": xs[0].copy(), "i": ys.copy()}

    def energy(self, s, star, orc, gamma):
        di = s["i"] - star["i"]
        de = s["e"] - star["e"]
        return 0.5 * self.v["L"] * float(np.sum(di * di)) + gamma * float(de @ de)


class _DouglasRachford(_Model):
    """Terminal 1 carries g (node x1), terminal 2 carries f (node x2)."""

    keys = ("x2", "i")

    def rows(self):
        return {"x2": None, "i": None}

    def sweep(self, s, orc, h):
        R, L = self.v["R"], self.v["L"]
        x2, i = s["x2"], s["i"]
        z1 = x2 + R * i
        x1 = orc["g"].prox(R, z1)
        z2 = x1 - R * i
        x2n = orc["f"].prox(R, z2)
        iN = i + (h / L) * (x2n - x1)
        return {"x2": x2n, "i": iN}, (np.array([x1, x2n]), np.array([(z1 - x1) / R, (z2 - x2n) / R]))

    def star(self, xs, ys, orc):
        return {"x2": xs[1].copy(), "i": ys[0].copy()}

    def energy(self, s, star, orc, gamma):
        di = s["i"] - star["i"]
        dx = s["x2"] - star["x2"]
        return 0.5 * self.v["L"] * float(di @ di) + gamma * float(dx @ dx)


class _DavisYin(_Model):
    """Terminals: 1 = f at x1, 2 = h at x2 (= x1), 3 = g at x3.

    The ``S h d/dt grad h`` drift is dropped, which is what turns the sweep
    into the textbook three-operator iteration.
    """

    keys = ("e", "x1")

    def rows(self):
        return {"e": None, "x1": None}

    def sweep(self, s, orc, h):
        R, S, L = self.v["R"], self.v["S"], self.v["L"]
        e, x1 = s["e"], s["x1"]
        gh = orc["h"].grad(x1)
        z3 = (1 + R / S) * x1 - (R / S) * e - R * gh
        x3 = orc["g"].prox(R, z3)
        z1 = x3 + (R / S) * (e - x1)
        x1n = orc["f"].prox(R, z1)
        en = e + (S * h / L) * (x3 - x1n) + x1n - x1
        X = np.array([x1n, x1, x3])
        Y = np.array([(z1 - x1n) / R, gh, (z3 - x3) / R])
        return {"e": en, "x1": x1n}, (X, Y)

    def _iL(self, s, orc):
        S = self.v["S"]
        return (s["e"] - s["x1"]) / (-S) - orc["h"].grad(s["x1"])

    def star(self, xs, ys, orc):
        return {"e": xs[0] + self.v["S"] * ys[0], "x1": xs[0].copy()}

    def energy(self, s, star, orc, gamma):
        di = self._iL(s, orc) - self._iL(star, orc)
        de = s["e"] - star["e"]
        return 0.5 * self.v["L"] * float(di @ di) + gamma * float(de @ de)


class _DGD(_Model):
    keys = ("x",)

    def rows(self):
        return {"x": self.graph.N}

    def sweep(self, s, orc, h):
        fs = _list(orc, "f", self.graph.N)
        x = s["x"]
        G = _rows(fs, x)
        lap = _edge_weights_matrix(self.graph, 1.0 / self.v["R_edges"])
        return {"x": x - (h / self.v["C"]) * (G + lap @ x)}, (x.copy(), G)

    def star(self, xs, ys, orc):
        return {"x": xs.copy()}

    def energy(self, s, star, orc, gamma):
        d = s["x"] - star["x"]
        return 0.5 * self.v["C"] * float(np.sum(d * d))


class _Diffusion(_Model):
    """Limit method on the agents' f-terminal potentials."""

    keys = ("x",)

    def rows(self):
        return {"x": self.graph.N}

    def sweep(self, s, orc, h):
        R, C = self.v["R"], self.v["C"]
        fs = _list(orc, "f", self.graph.N)
        x = s["x"]
        G = _rows(fs, x)
        W = np.eye(self.graph.N) - R * _edge_weights_matrix(self.graph, 1.0 / self.v["R_edges"])
        xn = x + (h / (C * R)) * (W @ (x - R * G) - x)
        return {"x": xn}, (x.copy(), G)

    def star(self, xs, ys, orc):
        return {"x": xs.copy()}

    def energy(self, s, star, orc, gamma):
        R = self.v["R"]
        fs = _list(orc, "f", self.graph.N)
        e = s["x"] - R * _rows(fs, s["x"])
        e0 = star["x"] - R * _rows(fs, star["x"])
        return 0.5 * self.v["C"] * float(np.sum((e - e0) ** 2))


class _DADMM(_Model):
    """Edge potentials ``e`` (one row per edge) and arc currents ``i`` (rows follow ``graph.arcs``)."""

    keys = ("e", "i")

    def __init__(self, zc):
        super().__init__(zc)
        g = self.graph
        arcs = g.arcs
        self.tail = np.array([j - 1 for j, _ in arcs])
        self.edge = np.array([g.edge_index(j, l) for j, l in arcs])
        self.deg = g.degrees.astype(float)
        nE = len(g.edges)
        self.cap = np.zeros(nE, dtype=bool)
        for k in zc.values.get("C_edges", ()):
            self.cap[k] = True
        # arc -> its agent, arc -> its edge
        self.Tm = np.zeros((len(arcs), g.N))
        self.Tm[np.arange(len(arcs)), self.tail] = 1.0
        self.Km = np.zeros((len(arcs), nE))
        self.Km[np.arange(len(arcs)), self.edge] = 1.0

    def rows(self):
        return {"e": len(self.graph.edges), "i": 2 * len(self.graph.edges)}

    def sweep(self, s, orc, h):
        R, L = self.v["R"], self.v["L"]
        fs = _list(orc, "f", self.graph.N)
        e, i = s["e"], s["i"]
        arc_in = R * i + self.Km @ e
        z = (self.Tm.T @ arc_in) / self.deg[:, None]
        x = _prox_rows(fs, R / self.deg, z)
        y = self.Tm.T @ (i + (self.Km @ e - self.Tm @ x) / R)
        ends = self.Km.T @ (self.Tm @ x)  # x_j + x_l per edge
        en = 0.5 * ends
        if self.cap.any():
            C = self.v["C"]
            isum = self.Km.T @ i
            c = self.cap
            en[c] = e[c] - (h / (C * R)) * (R * isum[c] + 2 * e[c] - ends[c])
        iN = i + (h / L) * (self.Km @ en - self.Tm @ x)
        return {"e": en, "i": iN}, (x, y)

    def flows(self, ys):
        """Antisymmetric arc currents whose per-agent sums equal ``ys`` (least norm)."""
        B = self.graph.incidence()
        phi = np.linalg.lstsq(B.T, ys, rcond=None)[0]
        out = np.empty((2 * len(phi), ys.shape[1]))
        out[0::2], out[1::2] = phi, -phi
        return out

    def star(self, xs, ys, orc):
        nE = len(self.graph.edges)
        return {"e": np.repeat(xs[:1], nE, 0), "i": self.flows(ys)}

    def energy(self, s, star, orc, gamma):
        di = s["i"] - star["i"]
        de = s["e"] - star["e"]
        E = 0.5 * self.v["L"] * float(np.sum(di * di))
        E += 0.5 * self.v.get("C", 0.0) * float(np.sum(de[self.cap] ** 2))
        return E + gamma * float(np.sum(de[~self.cap] ** 2))


class _PGExtra(_Model):
    """Agent potentials ``x`` and one inductor current per edge (oriented from smaller to larger agent).

    Terminals ``1..N`` carry the f_j, terminals ``N+1..2N`` the h_j; both sit on x_j.
    """

    keys = ("x", "i")

    def __init__(self, zc):
        super().__init__(zc)
        g = self.graph
        self.B = g.incidence()
        self.Rk = np.asarray(zc.values["R_edges"], dtype=float)
        self.Lk = np.asarray(zc.values["L_edges"], dtype=float)
        R = zc.values["R"]
        self.W = np.eye(g.N) - R * _edge_weights_matrix(g, 1.0 / self.Rk)

    def rows(self):
        return {"x": self.graph.N, "i": len(self.graph.edges)}

    def _inputs(self, s, orc):
        R = self.v["R"]
        N = self.graph.N
        fs, hs = _list(orc, "f", N), _list(orc, "h", N)
        x = s["x"]
        gh = _rows(hs, x)
        w = R * (self.B.T @ s["i"])
        return fs, x, gh, self.W @ x - R * gh - w

    def _finish(self, s, fs, x, gh, z, h):
        R = self.v["R"]
        xn = _prox_rows(fs, R, z)
        iN = s["i"] + (h / self.Lk)[:, None] * (self.B @ x)
        X = np.vstack([xn, x])
        Y = np.vstack([(z - xn) / R, gh])
        return xn, iN, (X, Y)

    def sweep(self, s, orc, h):
        fs, x, gh, z = self._inputs(s, orc)
        xn, iN, xy = self._finish(s, fs, x, gh, z, h)
        return {"x": xn, "i": iN}, xy

    def star(self, xs, ys, orc):
        N = self.graph.N
        flow = -(ys[:N] + ys[N:])  # KCL at each agent
        phi = np.linalg.lstsq(self.B.T, flow, rcond=None)[0]
        return {"x": xs[:N].copy(), "i": phi}

    def energy(self, s, star, orc, gamma):
        di = s["i"] - star["i"]
        dx = s["x"] - star["x"]
        return 0.5 * float(np.sum(self.Lk[:, None] * di * di)) + gamma * float(np.sum(dx * dx))


class _PGExtraParallelC(_PGExtra):
    """Adds capacitors ``C / R_jl`` in parallel with the inductors; ``iC`` are their currents."""

    keys = ("x", "i", "iC")

    def rows(self):
        return {**super().rows(), "iC": len(self.graph.edges)}

    def sweep(self, s, orc, h):
        R = self.v["R"]
        fs, x, gh, z = self._inputs(s, orc)
        z = z - R * (self.B.T @ s["iC"])
        xn, iN, xy = self._finish(s, fs, x, gh, z, h)
        Ck = self.v["C"] / self.Rk
        iC = (Ck / h)[:, None] * (self.B @ (xn - x))
        return {"x": xn, "i": iN, "iC": iC}, xy

    def star(self, xs, ys, orc):
        st = super().star(xs, ys, orc)
        st["iC"] = np.zeros_like(st["i"])
        return st

    def energy(self, s, star, orc, gamma):
        E = super().energy(s, star, orc, gamma)
        vC = self.B @ s["x"]
        Ck = self.v["C"] / self.Rk
        return E + 0.5 * float(np.sum(Ck[:, None] * vC * vC))


MODELS = {
    AlgorithmId.GradientFlow: _GradientFlow,
    AlgorithmId.Nesterov: _Nesterov,
    AlgorithmId.ProximalPoint: _ProximalPoint,
    AlgorithmId.ProximalGradient: _ProximalGradient,
    AlgorithmId.PrimalDecomposition: _PrimalDecomposition,
    AlgorithmId.DualDecomposition: _DualDecomposition,
    AlgorithmId.ProximalDecomposition: _ProximalDecomposition,
    AlgorithmId.DouglasRachford: _DouglasRachford,
    AlgorithmId.DavisYin: _DavisYin,
    AlgorithmId.DGD: _DGD,
    AlgorithmId.Diffusion: _Diffusion,
    AlgorithmId.DADMM: _DADMM,
    AlgorithmId.DADMMPlusC: _DADMM,
    AlgorithmId.PGExtra: _PGExtra,
    AlgorithmId.PGExtraParallelC: _PGExtraParallelC,
}


# ----------------------------------------------------------------------------
# the discrete algorithm built on a model


@dataclass
class ZooEquilibrium:
    """Terminal pair in ``(n, m)`` layout (as in :class:`Equilibrium`) plus the model's fixed state."""

    x: np.ndarray
    y: np.ndarray
    state: dict
    i_R: np.ndarray | None = None


class ZooAlgorithm(DiscreteAlgorithm):
    def __init__(self, circuit: "ZooCircuit", params: DiscretizationParams):
        self.circuit = circuit
        self.params = params
        self.spec = circuit.spec
        self.model = MODELS[circuit.id](circuit)
        self.layout = self.model.keys

    def _check(self, state):
        rows = self.model.rows()
        if not isinstance(state, dict) or set(rows) - set(state):
            raise LayoutMismatch(f"{self.circuit.id.value} state needs keys {sorted(rows)}")
        n = None
        for k, r in rows.items():
            a = np.asarray(state[k])
            ok = a.ndim == 1 if r is None else (a.ndim == 2 and a.shape[0] == r)
            dim = a.shape[-1] if a.ndim else None
            if not ok or (n is not None and dim != n):
                raise LayoutMismatch(f"state[{k!r}] has shape {a.shape}")
            n = dim

    def sweep(self, state, oracles, h=None):
        self._check(state)
        h = self.params.h if h is None else h
        if self.circuit.id not in DECENTRALIZED | MULTI_AGENT:
            oracles = {r: (v[0] if isinstance(v, (list, tuple)) and len(v) == 1 else v) for r, v in oracles.items()}
        nxt, (X, Y) = self.model.sweep({k: np.asarray(state[k], dtype=float) for k in self.model.keys}, oracles, h)
        nxt["x"] = nxt.get("x", None) if "x" in self.model.keys else X
        if "x" in self.model.keys:
            nxt["x_terms"] = X
        nxt["y"] = Y
        return nxt

    def step(self, state, oracles):
        p = self.params
        s1 = self.sweep(state, oracles)
        if p.beta == 1.0 or p.alpha == 0.0:
            # the second stage then repeats the first
            return s1
        keys = self.model.keys
        G1 = {k: (s1[k] - state[k]) / p.h for k in keys}
        half = {k: state[k] + p.alpha * p.h * G1[k] for k in keys}
        s2 = self.sweep(half, oracles)
        out = {k: state[k] + p.beta * p.h * G1[k] + (1 - p.beta) * (s2[k] - half[k]) for k in keys}
        for k in s2:
            out.setdefault(k, s2[k])
        return out

    def info(self, state, oracles) -> StepInfo:
        s = self.sweep(state, oracles)
        X = s["x_terms"] if "x_terms" in s else s["x"]
        return StepInfo(np.asarray(X).T, np.asarray(s["y"]).T)

    def iterate_point(self, state, oracles=None):
        """Agent estimates (rows); the last computed primal point when the state carries one."""
        x = state.get("x")
        if x is None:
            x = self.sweep(state, oracles)["x"]
        return np.asarray(x)

    def equilibrium(self, x_terms, y_terms, oracles) -> ZooEquilibrium:
        """Fixed state for terminal data given per terminal (rows)."""
        x_terms = np.atleast_2d(np.asarray(x_terms, dtype=float))
        y_terms = np.atleast_2d(np.asarray(y_terms, dtype=float))
        st = self.model.star(x_terms, y_terms, oracles)
        return ZooEquilibrium(x_terms.T, y_terms.T, st)

    def energy(self, state, eq: ZooEquilibrium, oracles):
        return float(self.model.energy(state, eq.state, oracles, self.params.gamma))


# ----------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class ZooCircuit:
    """A template: netlist, nets, energy spec, default parameters.

    Unpacks as ``netlist, nets, spec, params = build(...)``.
    """

    id: AlgorithmId
    netlist: Netlist
    nets: Nets
    spec: EnergySpec
    params: DiscretizationParams
    values: dict
    graph: Graph | None = None
    roles: tuple = ()
    admissible: bool = True
    meta: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.netlist, self.nets, self.spec, self.params))

    def algorithm(self, p: DiscretizationParams | None = None) -> ZooAlgorithm:
        return ZooAlgorithm(self, self.params if p is None else p)

    def oracle(self, oracles, n=None) -> FunctionOracle:
        """Per-terminal oracles assembled in terminal order (for the circuit dynamics)."""
        parts = []
        count = {}
        for role in self.roles:
            k = count.get(role, 0)
            parts.append(_list(oracles, role)[k])
            count[role] = k + 1
        if len(parts) == 1:
            return parts[0]
        if n is None:
            raise ValueError("coordinate count needed to stack several terminals")
        return SeparableSum(parts, dim=n)

    def terminal_oracles(self, oracles):
        count, parts = {}, []
        for role in self.roles:
            k = count.get(role, 0)
            parts.append(_list(oracles, role)[k])
            count[role] = k + 1
        return parts

    # -- bridges to the printed recursions ---------------------------------
    def to_reference(self, state):
        """Map a template state to the variables the printed recursion uses."""
        if self.id in (AlgorithmId.PGExtra, AlgorithmId.PGExtraParallelC):
            R = self.values["R"]
            B = self.graph.incidence()
            out = {"x": state["x"], "w": R * (B.T @ state["i"])}
            if "iC" in state:
                out["u"] = R * (B.T @ state["iC"])
            return out
        return {k: state[k] for k in MODELS[self.id].keys}

    def reference_inputs(self, p: DiscretizationParams | None = None) -> dict:
        """Keyword inputs of :func:`reference_update` matching this template and ``p``."""
        from .graph import MixingMatrix

        p = self.params if p is None else p
        v, h = self.values, p.h
        i = self.id
        A = AlgorithmId
        if i == A.GradientFlow:
            return {"h": h, "C": v["C"]}
        if i == A.Nesterov:
            return {"h": h, "R": v["R"], "L": v["L"], "C": v["C"]}
        if i in (A.ProximalPoint, A.ProximalGradient):
            return {"R": v["R"]}
        if i == A.PrimalDecomposition:
            return {"h": h, "C": v["C"]}
        if i == A.DualDecomposition:
            return {"h": h, "L": v["L"]}
        if i in (A.ProximalDecomposition, A.DouglasRachford):
            return {"h": h, "R": v["R"], "L": v["L"]}
        if i == A.DavisYin:
            return {"alpha": v["R"]}
        if i == A.DGD:
            W = _dgd_mixing(self.graph, v["R_edges"], h, v["C"])
            return {"W": MixingMatrix(W), "h": h, "C": v["C"]}
        if i == A.Diffusion:
            return {"W": MixingMatrix(resistor_mixing(self.graph, v["R"], v["R_edges"])), "R": v["R"]}
        if i == A.DADMM:
            return {"graph": self.graph, "R": v["R"]}
        if i == A.DADMMPlusC:
            return {"graph": self.graph, "strong": v["strong"], "R": v["R"], "L": v["L"], "C": v["C"], "h": h}
        if i == A.PGExtra:
            return {"W": MixingMatrix(resistor_mixing(self.graph, v["R"], v["R_edges"])), "R": v["R"]}
        if i == A.PGExtraParallelC:
            return {"W": MixingMatrix(resistor_mixing(self.graph, v["R"], v["R_edges"])), "R": v["R"],
                    "C": v["C"], "s": h}
        raise AssertionError(i)


def resistor_mixing(graph: Graph, R, R_edges):
    """``W_jl = R / R_jl`` off the diagonal, rows completed to one."""
    W = np.zeros((graph.N, graph.N))
    for k, (j, l) in enumerate(graph.edges):
        W[j - 1, l - 1] = W[l - 1, j - 1] = R / R_edges[k]
    W[np.diag_indices(graph.N)] = 1.0 - W.sum(axis=1)
    return W


def _dgd_mixing(graph, R_edges, h, C):
    W = np.zeros((graph.N, graph.N))
    for k, (j, l) in enumerate(graph.edges):
        W[j - 1, l - 1] = W[l - 1, j - 1] = h / (C * R_edges[k])
    W[np.diag_indices(graph.N)] = 1.0 - W.sum(axis=1)
    return W


def metropolis_resistances(graph: Graph, R):
    """Edge resistances whose mixing matrix ``R / R_jl`` is the Metropolis one."""
    deg = graph.degrees
    return np.array([R * (max(deg[j - 1], deg[l - 1]) + 1) for j, l in graph.edges], dtype=float)


DEFAULTS = {
    AlgorithmId.GradientFlow: {"C": 1.0},
    AlgorithmId.Nesterov: {"R": 1.0, "L": 1.0, "C": 1.0},
    AlgorithmId.ProximalPoint: {"R": 1.0, "C": 1.0},
    AlgorithmId.ProximalGradient: {"R": 1.0, "C": 1.0},
    AlgorithmId.PrimalDecomposition: {"N": 3, "C": 1.0},
    AlgorithmId.DualDecomposition: {"N": 3, "L": 1.0},
    AlgorithmId.ProximalDecomposition: {"N": 3, "R": 1.0, "L": 1.0},
    AlgorithmId.DouglasRachford: {"R": 1.0, "L": 1.0},
    AlgorithmId.DavisYin: {"alpha": 1.0},
    AlgorithmId.DGD: {"R": 1.0, "C": 1.0},
    AlgorithmId.Diffusion: {"R": 1.0, "C": 1.0},
    AlgorithmId.DADMM: {"R": 1.0, "L": 1.0},
    AlgorithmId.PGExtra: {"R": 1.0},
    AlgorithmId.DADMMPlusC: {"R": 0.8, "L": 2.0, "C": 15.0, "strong": (4, 5)},
    AlgorithmId.PGExtraParallelC: {"R": 0.07, "C": 0.3, "s": 0.8},
}


def _positive(values, names):
    for k in names:
        if k in values and not np.all(np.asarray(values[k], dtype=float) > 0):
            raise ValueError(f"component value {k} must be positive")


def build(id, graph: Graph | None = None, values: dict | None = None, check=True) -> ZooCircuit:
    """Template for ``id``; decentralized ids need a graph (the 6-agent default is used if ``graph == "default"``)."""
    aid = id if isinstance(id, AlgorithmId) else AlgorithmId.parse(id)
    if isinstance(graph, str) and graph == "default":
        graph = DEFAULT_GRAPH
    if aid in DECENTRALIZED and graph is None:
        raise GraphRequired(f"{aid.value} needs a communication graph")
    v = dict(DEFAULTS[aid])
    v.update(values or {})
    _positive(v, ("R", "L", "C", "S", "alpha", "s", "R_edges", "L_edges"))
    zc = _BUILDERS[aid](aid, graph, v)
    if check and zc.admissible:
        res = check_admissible(zc.netlist, zc.nets)
        if not res:
            raise NotAdmissible(f"{aid.value} template failed the admissibility check", res.witness)
    return zc


def _spec(netlist, gamma_nodes=(), gamma=0.0):
    return EnergySpec.physical(netlist, gamma_nodes, gamma)


def _p(h, eta=1.0, gamma=0.0):
    return DiscretizationParams(0.0, 1.0, float(h), float(eta), 0.0, float(gamma))


def _b_gradient_flow(aid, graph, v):
    nl = make_netlist(2, 1, [("C", v["C"], 1, 2)])
    return ZooCircuit(aid, nl, Nets.single(1), _spec(nl), _p(v["C"]), v, roles=("f",))


def _b_nesterov(aid, graph, v):
    R, L, C = v["R"], v["L"], v["C"]
    # 1: x (terminal), 2: x+, 3: e, 4: ground
    nl = make_netlist(4, 1, [("R", -R, 2, 1), ("R", R, 3, 2), ("L", L, 3, 2), ("C", C, 3, 4)])
    v.setdefault("h", 0.5 * min(C * R, L / R))
    return ZooCircuit(aid, nl, Nets.single(1), _spec(nl), _p(v["h"]), v, roles=("f",),
                      meta={"critical_damping": bool(np.isclose(R, np.sqrt(L / C)))})


def _b_proximal_point(aid, graph, v):
    R, C = v["R"], v["C"]
    nl = make_netlist(3, 1, [("R", R, 1, 2), ("C", C, 2, 3)])
    return ZooCircuit(aid, nl, Nets.single(1), _spec(nl), _p(C * R), v, roles=("f",))


def _b_proximal_gradient(aid, graph, v):
    R, C = v["R"], v["C"]
    # 1: f terminal, 2: g terminal, 3: e, 4: ground
    nl = make_netlist(4, 2, [("R", -R, 1, 3), ("R", R, 3, 2), ("C", C, 3, 4)])
    return ZooCircuit(aid, nl, Nets.single(2), _spec(nl), _p(C * R), v, roles=("f", "g"))


def _b_primal_decomposition(aid, graph, v):
    N = int(v["N"])
    e, gnd = N + 1, N + 2
    recs = [("R", 0.0, j, e) for j in range(1, N + 1)] + [("C", v["C"], e, gnd)]
    nl = make_netlist(gnd, N, recs)
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl), _p(v["C"] / N), v, roles=("f",) * N)


def _b_dual_decomposition(aid, graph, v):
    N = int(v["N"])
    e, gnd = N + 1, N + 2
    nl = make_netlist(gnd, N, [("L", v["L"], e, j) for j in range(1, N + 1)])
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl), _p(v["L"]), v, roles=("f",) * N)


def _b_proximal_decomposition(aid, graph, v):
    N = int(v["N"])
    e, gnd = N + 1, N + 2
    recs = []
    for j in range(1, N + 1):
        recs += [("R", v["R"], j, e), ("L", v["L"], e, j)]
    nl = make_netlist(gnd, N, recs)
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl, (e,)), _p(v["L"] / v["R"]), v, roles=("f",) * N)


def _b_douglas_rachford(aid, graph, v):
    R, L = v["R"], v["L"]
    nl = make_netlist(3, 2, [("R", R, 1, 2), ("L", L, 2, 1)])
    v.setdefault("h", 1.0)
    return ZooCircuit(aid, nl, Nets.single(2), _spec(nl, (2,)), _p(v["h"]), v, roles=("g", "f"))


def _b_davis_yin(aid, graph, v):
    a = v.pop("alpha")
    v.setdefault("R", a)
    v.setdefault("S", a)
    v.setdefault("L", a * a)
    v.setdefault("h", a)
    R, S, L = v["R"], v["S"], v["L"]
    # 1: x1 (f), 2: x2 (h), 3: x3 (g), 4: e, 5: ground
    nl = make_netlist(5, 3, [("R", R, 3, 1), ("L", L, 2, 3), ("R", -S, 2, 4), ("R", S, 4, 1)])
    return ZooCircuit(aid, nl, Nets.single(3), _spec(nl, (4,)), _p(v["h"]), v, roles=("f", "h", "g"))


def _edge_resistances(graph, v, base):
    if "R_edges" in v:
        Re = np.broadcast_to(np.asarray(v["R_edges"], dtype=float), (len(graph.edges),)).copy()
    else:
        Re = metropolis_resistances(graph, base)
    v["R_edges"] = Re
    return Re


def _b_dgd(aid, graph, v):
    N = graph.N
    gnd = N + 1
    Re = _edge_resistances(graph, v, v["R"])
    recs = [("C", v["C"], j, gnd) for j in range(1, N + 1)]
    recs += [("R", Re[k], j, l) for k, (j, l) in enumerate(graph.edges)]
    nl = make_netlist(gnd, N, recs)
    h = v.get("h", v["C"] * v["R"])
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl), _p(h), v, graph, ("f",) * N, admissible=False)


def _b_diffusion(aid, graph, v):
    N = graph.N
    gnd = 2 * N + 1
    R, C = v["R"], v["C"]
    Re = _edge_resistances(graph, v, R)
    recs = []
    for j in range(1, N + 1):
        recs += [("R", -R, j, N + j), ("C", C, N + j, gnd)]
    recs += [("R", Re[k], N + j, N + l) for k, (j, l) in enumerate(graph.edges)]
    nl = make_netlist(gnd, N, recs)
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl), _p(C * R), v, graph, ("f",) * N, admissible=False)


def _b_dadmm(aid, graph, v):
    N, E = graph.N, graph.edges
    gnd = N + len(E) + 1
    R, L = v["R"], v["L"]
    strong = set(v.get("strong", ())) if aid == AlgorithmId.DADMMPlusC else set()
    cap_edges = [k for k, (j, l) in enumerate(E) if j in strong and l in strong]
    v["C_edges"] = tuple(cap_edges)
    recs = []
    for j, l in graph.arcs:
        e = N + 1 + graph.edge_index(j, l)
        recs += [("R", R, j, e), ("L", L, e, j, f"i_{j}_{l}")]
    for k in cap_edges:
        recs.append(("C", v["C"], N + 1 + k, gnd))
    nl = make_netlist(gnd, N, recs)
    gam_nodes = tuple(N + 1 + k for k in range(len(E)) if k not in cap_edges)
    if aid == AlgorithmId.DADMMPlusC:
        p = DiscretizationParams(0.0, 1.0, v.get("h", 3.52), v.get("eta", 3.70), 0.0, v.get("gamma", 4.48))
    else:
        p = _p(v.get("h", L / R))
    return ZooCircuit(aid, nl, Nets.single(N), _spec(nl, gam_nodes), p, v, graph, ("f",) * N)


def _b_pg_extra(aid, graph, v):
    N = graph.N
    gnd = 2 * N + 1
    R = v["R"]
    Re = _edge_resistances(graph, v, R)
    v["L_edges"] = np.asarray(v.get("L_edges", Re), dtype=float)
    recs = [("R", 0.0, j, N + j) for j in range(1, N + 1)]
    for k, (j, l) in enumerate(graph.edges):
        recs += [("R", Re[k], j, l), ("L", v["L_edges"][k], j, l)]
        if aid == AlgorithmId.PGExtraParallelC:
            recs.append(("C", v["C"] / Re[k], j, l))
    nl = make_netlist(gnd, 2 * N, recs)
    h = v.get("s", 0.5) if aid == AlgorithmId.PGExtraParallelC else v.get("h", 0.5)
    return ZooCircuit(aid, nl, Nets.single(2 * N), _spec(nl, tuple(range(1, N + 1))), _p(h), v, graph,
                      ("f",) * N + ("h",) * N)


_BUILDERS = {
    AlgorithmId.GradientFlow: _b_gradient_flow,
    AlgorithmId.Nesterov: _b_nesterov,
    AlgorithmId.ProximalPoint: _b_proximal_point,
    AlgorithmId.ProximalGradient: _b_proximal_gradient,
    AlgorithmId.PrimalDecomposition: _b_primal_decomposition,
    AlgorithmId.DualDecomposition: _b_dual_decomposition,
    AlgorithmId.ProximalDecomposition: _b_proximal_decomposition,
    AlgorithmId.DouglasRachford: _b_douglas_rachford,
    AlgorithmId.DavisYin: _b_davis_yin,
    AlgorithmId.DGD: _b_dgd,
    AlgorithmId.Diffusion: _b_diffusion,
    AlgorithmId.DADMM: _b_dadmm,
    AlgorithmId.DADMMPlusC: _b_dadmm,
    AlgorithmId.PGExtra: _b_pg_extra,
    AlgorithmId.PGExtraParallelC: _b_pg_extra,
}
