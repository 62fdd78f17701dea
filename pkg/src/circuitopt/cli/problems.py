"""Problem instances: seeded generators, reference optima and a small text format."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParseError
from ..oracles import (EuclideanDistance, FunctionOracle, HalfspaceIndicator, Huber, HuberDual, Quadratic,
                       Zero)
from ..zoo.graph import DEFAULT_GRAPH, Graph, parse_graph


def philox(seed):
    """The package-wide generator: counter-based, so instances are reproducible bit for bit."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class ProblemInstance:
    """``minimize sum_j f_j(x)`` (plus ``h_j`` where present) over agents on ``graph``.

    ``oracles`` maps a role to one oracle per agent.  ``x_star``/``duals``
    describe the solution when known; ``duals[role]`` has one row per agent.
    """

    kind: str
    dims: dict
    data: dict
    seed: int | None
    oracles: dict
    graph: Graph | None = None
    fstar: float | None = None
    x_star: np.ndarray | None = None
    duals: dict = field(default_factory=dict)
    x0: np.ndarray | None = None

    @property
    def N(self):
        return len(self.oracles["f"])

    @property
    def n(self):
        return int(self.dims["n"])

    def objective(self, x):
        """Objective at the agents' average (rows of ``x``), or at ``x`` itself when flat."""
        x = np.asarray(x, dtype=float)
        xbar = x if x.ndim == 1 else x.mean(axis=0)
        if self.kind == "DecentralizedQP":
            # constraints hold only in the limit; score the smooth part
            return float(sum(h.value(xbar) for h in self.oracles["h"])) / self.N
        return float(sum(f.value(xbar) for fs in self.oracles.values() for f in fs))

    def rel_error(self, x):
        return abs(self.objective(x) - self.fstar) / abs(self.fstar)


# ----------------------------------------------------------------------------
# geometric median with two strongly convex agents

GEO_STRONG = (4, 5)


def gen_geomedian(seed=0, m=100, graph: Graph = DEFAULT_GRAPH, strong=GEO_STRONG) -> ProblemInstance:
    rng = philox(seed)
    N = graph.N
    b = rng.uniform(-100.0, 100.0, size=(N, m))
    fs = [EuclideanDistance(b[j], squared=(j + 1) in strong) for j in range(N)]
    inst = ProblemInstance("GeoMedian", {"n": m, "N": N}, {"b": b, "strong": tuple(strong)}, seed,
                           {"f": fs}, graph, x0=b.copy())
    x = geomedian_solve(b, strong)
    inst.x_star = x
    inst.fstar = inst.objective(x)
    inst.duals = {"f": np.array([f.subgrad(x) for f in fs])}
    return inst


def geomedian_solve(b, strong, tol=1e-14, maxit=200):
    """Damped Newton on ``sum ||x - b_i|| + sum_S ||x - b_i||^2`` (smooth away from the b_i)."""
    b = np.asarray(b, dtype=float)
    S = [j - 1 for j in strong]
    w = np.zeros(len(b))
    w[S] = 1.0

    def F(x):
        r = np.linalg.norm(x - b, axis=1)
        return np.sum(r) + np.sum(w * r * r)

    x = b[S].mean(axis=0) if S else np.median(b, axis=0)
    for _ in range(maxit):
        d = x - b
        r = np.linalg.norm(d, axis=1)
        u = d / r[:, None]
        g = u.sum(axis=0) + 2 * (w[:, None] * d).sum(axis=0)
        if np.linalg.norm(g) <= tol * max(1.0, np.abs(b).max()):
            break
        H = 2 * w.sum() * np.eye(len(x))
        for k in range(len(b)):
            H += (np.eye(len(x)) - np.outer(u[k], u[k])) / r[k]
        step = np.linalg.solve(H, g)
        t, f0 = 1.0, F(x)
        while F(x - t * step) > f0 - 1e-4 * t * (g @ step) and t > 1e-10:
            t *= 0.5
        x_new = x - t * step
        if np.array_equal(x_new, x):
            break
        x = x_new
    return x


# ----------------------------------------------------------------------------
# decentralized QP with halfspace constraints

DECQP_N = 20
DECQP_EDGE_P = 0.3


def gen_decqp(seed=0, m=50, N=DECQP_N, graph: Graph | None = None, max_draws=100) -> ProblemInstance:
    """``min (1/N) sum_j (x'Q_j x + p_j'x)`` s.t. ``a_j'x <= b_j``, with at least one constraint cut.

    ``Q_j = Qt Qt'`` with ``Qt`` entries drawn from N(0, 1/m), so the agents'
    curvature stays O(1) as m grows.
    """
    offset = 0
    while True:
        rng = philox(seed + 1000003 * offset)
        g = graph or Graph.random_connected(N, DECQP_EDGE_P, rng)
        for _ in range(max_draws):
            Qt = rng.standard_normal((N, m, m)) / np.sqrt(m)
            Q = np.einsum("jab,jcb->jac", Qt, Qt)
            p = rng.standard_normal((N, m))
            a = rng.standard_normal((N, m))
            bb = rng.standard_normal(N)
            x_unc = np.linalg.solve(2 * Q.sum(axis=0), -p.sum(axis=0))
            if np.any(a @ x_unc > bb):
                return _decqp_instance(seed, m, g, Q, p, a, bb, x_unc)
        offset += 1


def _decqp_instance(seed, m, graph, Q, p, a, b, x_unc):
    N = len(Q)
    hs = [Quadratic(2 * Q[j], p[j]) for j in range(N)]
    fs = [HalfspaceIndicator(a[j], b[j]) for j in range(N)]
    inst = ProblemInstance("DecentralizedQP", {"n": m, "N": N}, {"Q": Q, "p": p, "a": a, "b": b, "x_unc": x_unc},
                           seed, {"f": fs, "h": hs}, graph, x0=np.zeros((N, m)))
    x, lam = decqp_solve(Q, p, a, b)
    inst.x_star = x
    inst.fstar = inst.objective(x)
    inst.duals = {"f": lam[:, None] * a, "h": np.array([h.grad(x) for h in hs])}
    inst.data["multipliers"] = lam
    return inst


def _polish_qp(H, q, G, g, act):
    """Solve ``min 0.5 x'Hx + q'x`` with constraints ``act`` of ``Gx <= g`` held as equalities."""
    n = len(q)
    Ga = G[act]
    K = np.block([[H, Ga.T], [Ga, np.zeros((len(Ga), len(Ga)))]])
    sol = np.linalg.lstsq(K, np.concatenate([-q, g[act]]), rcond=None)[0]
    lam = np.zeros(len(g))
    lam[act] = sol[n:]
    return sol[:n], lam


def _solve_qp(H, q, G, g):
    """Interior-point solve, then an exact active-set polish of the KKT system."""
    import cvxpy as cp

    n = len(q)
    x = cp.Variable(n)
    L = np.linalg.cholesky(H + 1e-12 * np.eye(n))
    cons = [G @ x <= g]
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(L.T @ x) + q @ x), cons)
    prob.solve(solver="CLARABEL")
    x0 = np.asarray(x.value)
    lam0 = np.maximum(np.asarray(cons[0].dual_value), 0.0)
    act = lam0 > 1e-7 * max(1.0, lam0.max(initial=0.0))
    xp, lam = _polish_qp(H, q, G, g, act)
    scale = max(1.0, np.abs(g).max())
    if np.all(G @ xp <= g + 1e-9 * scale) and np.all(lam >= -1e-9):
        return xp, np.maximum(lam, 0.0)
    return x0, lam0


def decqp_solve(Q, p, a, b):
    """Solution and per-agent multipliers of ``min sum_j (x'Q_j x + p_j'x)`` s.t. ``a_j'x <= b_j``."""
    return _solve_qp(2 * Q.sum(axis=0), p.sum(axis=0), a, b)


# ----------------------------------------------------------------------------
# dual of a Huber-penalized equality-constrained problem


def gen_huberdual(seed=0, m=30, n=100) -> ProblemInstance:
    """``phi(y) = f*(-A'y) + b'y``; ``A`` is scaled so that ``lambda_min(AA') = 1``."""
    rng = philox(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    c = rng.standard_normal(n)
    A = A / np.sqrt(np.linalg.eigvalsh(A @ A.T)[0])
    phi = HuberDual(A, b, c)
    inst = ProblemInstance("HuberDual", {"n": m, "N": 1, "primal_n": n}, {"A": A, "b": b, "c": c}, seed,
                           {"f": [phi]}, None, x0=np.zeros((1, m)))
    y = huberdual_solve(A, b, c)
    inst.x_star = y
    inst.fstar = phi.value(y)
    inst.duals = {"f": np.zeros((1, m))}
    return inst


def huberdual_solve(A, b, c):
    """Minimize ``|A'y|^2/4 - c'A'y + b'y`` over ``|A'y|_inf <= 2`` (a QP in y)."""
    m, n = A.shape
    H = 0.5 * A @ A.T
    q = b - A @ c
    G = np.vstack([A.T, -A.T])
    g = 2.0 * np.ones(2 * n)
    return _solve_qp(H, q, G, g)[0]


def huber_primal_value(A, b, c):
    """``min sum phi(x_i - c_i)`` s.t. ``Ax = b`` (equals ``-min phi`` by strong duality)."""
    import cvxpy as cp

    x = cp.Variable(A.shape[1])
    prob = cp.Problem(cp.Minimize(cp.sum(cp.huber(x - c, 1.0))), [A @ x == b])
    prob.solve(solver="CLARABEL")
    return float(prob.value)


GENERATORS = {"geomedian": gen_geomedian, "decqp": gen_decqp, "huberdual": gen_huberdual}


# ----------------------------------------------------------------------------
# text format


def _vector(tok, base):
    path = tok if os.path.isabs(tok) else os.path.join(base, tok)
    if os.path.isfile(path):
        return np.atleast_1d(np.loadtxt(path, dtype=float))
    return np.array([float(t) for t in tok.split(",")])


def _matrix(tok, base):
    path = tok if os.path.isabs(tok) else os.path.join(base, tok)
    if os.path.isfile(path):
        return np.atleast_2d(np.loadtxt(path, dtype=float))
    rows = [r for r in tok.split(";") if r]
    return np.array([[float(t) for t in r.split(",")] for r in rows])


ROLES = ("f", "g", "h")


def parse_problem(source) -> ProblemInstance:
    """Generated (``geomedian[:seed]``, ``decqp[:seed]``, ``huberdual[:seed]``) or a problem file.

    File lines: ``[f|g|h] quadratic <Q> [<p>]``, ``[role] dist <b> [+sq]``,
    ``[role] huber <c>``, ``[role] halfspace <a> <b>``, plus optional
    ``fstar <value>``, ``graph <file>`` and ``init <vector>``.  Vectors and
    matrices are file names (plain-text columns) or inline ``1,2,3`` /
    ``1,0;0,1``.  ``#`` starts a comment.  Terminal order is line order.
    """
    src = str(source)
    head, _, tail = src.partition(":")
    if head.lower() in GENERATORS and not os.path.isfile(src):
        try:
            seed = int(tail) if tail else 0
        except ValueError:
            raise ParseError(f"bad seed in {src!r}") from None
        return GENERATORS[head.lower()](seed)
    if not os.path.isfile(src):
        raise ParseError(f"no such problem file or generator: {src!r}", path=src)
    base = os.path.dirname(os.path.abspath(src))
    oracles = {}
    order = []
    fstar = graph = x0 = None
    with open(src, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for no, raw in enumerate(lines, 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tok = text.split()
        try:
            if tok[0] == "fstar":
                fstar = float(tok[1])
                continue
            if tok[0] == "graph":
                graph = parse_graph(tok[1] if os.path.isabs(tok[1]) else os.path.join(base, tok[1]))
                continue
            if tok[0] == "init":
                x0 = _matrix(tok[1], base)
                continue
            role = "f"
            if tok[0] in ROLES:
                role, tok = tok[0], tok[1:]
            kind, args = tok[0], tok[1:]
            if kind == "quadratic":
                Q = _matrix(args[0], base)
                p = _vector(args[1], base) if len(args) > 1 else None
                orc = Quadratic(Q, p)
            elif kind == "dist":
                orc = EuclideanDistance(_vector(args[0], base), squared=len(args) > 1 and args[1] == "+sq")
            elif kind == "huber":
                orc = Huber(_vector(args[0], base))
            elif kind == "halfspace":
                orc = HalfspaceIndicator(_vector(args[0], base), float(args[1]))
            elif kind == "zero":
                orc = Zero()
            else:
                raise ValueError(f"unknown function kind {kind!r}")
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(f"{exc}", no, src) from None
        oracles.setdefault(role, []).append(orc)
        order.append(role)
    if not order:
        raise ParseError("no function lines", path=src)
    n = _dim(oracles)
    inst = ProblemInstance("Custom", {"n": n, "N": len(oracles.get("f", []))}, {"order": tuple(order)}, None,
                           oracles, graph, fstar=fstar, x0=x0)
    return inst


def _dim(oracles):
    for fs in oracles.values():
        for f in fs:
            for attr in ("Q", "b", "c", "a"):
                v = getattr(f, attr, None)
                if isinstance(v, np.ndarray) and v.ndim >= 1:
                    return int(v.shape[0])
    return 1


def terminal_oracles(inst: ProblemInstance) -> list[FunctionOracle]:
    """Oracles in terminal order (file order for custom problems, agents' f then h otherwise)."""
    if "order" in inst.data:
        count, out = {}, []
        for role in inst.data["order"]:
            k = count.get(role, 0)
            out.append(inst.oracles[role][k])
            count[role] = k + 1
        return out
    return [f for role in ROLES if role in inst.oracles for f in inst.oracles[role]]
