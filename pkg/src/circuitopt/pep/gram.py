"""Gram-matrix formulation of the worst-case one-step energy change.

Every quantity of one discretized step (states, terminal pairs, resistor
currents, potentials) is a fixed linear combination of a handful of basis
vectors; the Gram matrix ``G`` of those vectors and the function values ``F``
are the decision variables.

Raw column layout (one block after the other)::

    s1     free coordinates of a consistent initial state
    xs     x* per net
    ys     free part of y* (a basis of N(E))
    zs     equilibrium directions left free by the terminal data
    w1     free coordinates of the algebraic solve at the initial state
    w15    same at the intermediate stage (absent if alpha = 0 or beta = 1)
    w2     same at the next state (absent unless potentials enter the energy)

Function values ``F`` are ordered terminal-major, point-minor.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _linalg
from ..discretize import DiscretizationParams
from ..dynamics import EnergySpec
from ..errors import DimensionMismatch, NonRepresentable
from ..netlist import MultiWireTemplate, Netlist, Nets
from ..network import Network
from ..oracles import FunctionClass

POINT_NAMES = ("1", "1.5", "2", "*")


@dataclass
class Point:
    """One sample of a function: coefficient vectors of x and g, index of f."""

    x: np.ndarray
    g: np.ndarray
    f: int
    name: str = ""


@dataclass
class Constraint:
    """``<A, G> + a.F <= 0``; ``label = (terminal, i, j)``."""

    A: np.ndarray
    a: np.ndarray
    label: tuple


def _sym_outer(u, v):
    o = np.outer(u, v)
    return 0.5 * (o + o.T)


def interpolation_constraints(mu: float, M: float, points, nF: int | None = None, terminal=0):
    """Pairwise interpolation inequalities for the class (mu, M) over ``points``.

    For each ordered pair (i, j)::

        f_j - f_i + <g_j, x_i - x_j> + |g_i - g_j|^2 / 2M
              + mu / (2 (1 - mu/M)) |x_i - x_j - (g_i - g_j)/M|^2  <=  0

    ``M = inf`` and ``mu = 0`` drop their terms.  ``mu = M`` (a fixed
    quadratic up to a linear term) is encoded with the extra row
    ``|g_i - g_j - mu (x_i - x_j)|^2 <= 0``.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if mu < 0 or mu > M:
        raise ValueError("need 0 <= mu <= M")
    if nF is None:
        nF = 1 + max(p.f for p in pts)
    out = []
    exact = np.isfinite(M) and mu == M
    for i, pi in enumerate(pts):
        for j, pj in enumerate(pts):
            if i == j:
                continue
            dx, dg = pi.x - pj.x, pi.g - pj.g
            A = _sym_outer(pj.g, dx)
            if exact:
                A = A + 0.5 * mu * np.outer(dx, dx)
            else:
                if np.isfinite(M):
                    A = A + np.outer(dg, dg) / (2 * M)
                if mu > 0:
                    r = dx - dg / M if np.isfinite(M) else dx
                    c = mu / (2 * (1 - mu / M)) if np.isfinite(M) else mu / 2
                    A = A + c * np.outer(r, r)
            a = np.zeros(nF)
            a[pj.f] += 1.0
            a[pi.f] -= 1.0
            out.append(Constraint(A, a, (terminal, pi.name or i, pj.name or j)))
            if exact and i < j:
                r = dg - mu * dx
                out.append(Constraint(np.outer(r, r), np.zeros(nF), (terminal, pi.name or i, pj.name or j, "eq")))
    return out


@dataclass
class GramProblem:
    """Worst-case one-step problem; all matrices live in the compressed basis.

    The objective at parameters (eta, rho, gamma) is
    ``C0 + eta*C_eta + rho*C_rho + gamma*C_gamma`` (the h, alpha, beta
    dependence is already substituted).
    """

    params: DiscretizationParams
    classes: list
    dim: int
    nominal_dim: int
    raw_dim: int
    basis: np.ndarray  # raw -> compressed, shape (raw_dim, dim)
    C0: np.ndarray
    C_eta: np.ndarray
    C_rho: np.ndarray
    C_gamma: np.ndarray
    cF: np.ndarray
    constraints: list
    nF: int
    coefficients: dict = field(default_factory=dict)
    column_labels: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def objective(self, eta=None, rho=None, gamma=None):
        p = self.params
        eta = p.eta if eta is None else eta
        rho = p.rho if rho is None else rho
        gamma = p.gamma if gamma is None else gamma
        return self.C0 + eta * self.C_eta + rho * self.C_rho + gamma * self.C_gamma

    @property
    def A(self):
        return np.array([c.A for c in self.constraints]).reshape(len(self.constraints), self.dim, self.dim)

    @property
    def a(self):
        return np.array([c.a for c in self.constraints]).reshape(len(self.constraints), self.nF)

    def evaluate(self, G, F, **theta):
        """Objective and worst constraint value at a primal point."""
        obj = float(np.sum(self.objective(**theta) * G) + self.cF @ F)
        cons = [float(np.sum(c.A * G) + c.a @ F) for c in self.constraints]
        return obj, max(cons, default=-np.inf)

    def padded(self, name):
        """Raw coefficient vector(s) of ``name`` zero-padded to the nominal column count."""
        v = self.coefficients[name]
        width = max(self.nominal_dim, self.raw_dim)
        out = np.zeros(v.shape[:-1] + (width,))
        out[..., : v.shape[-1]] = v
        return out


def _unpack(template, nets, spec):
    if hasattr(template, "nets") and hasattr(template, "spec"):  # zoo circuit
        nets = template.nets if nets is None else nets
        spec = template.spec if spec is None else spec
        template = template.netlist
    if isinstance(template, MultiWireTemplate):
        template = template.netlist
    if not isinstance(template, Netlist):
        raise TypeError("expected a Netlist, MultiWireTemplate or zoo circuit")
    if nets is None:
        nets = Nets.single(template.m)
    if nets.m != template.m:
        raise DimensionMismatch(f"nets cover {nets.m} terminals, netlist has {template.m}")
    if spec is None:
        spec = EnergySpec.physical(template)
    return template, nets, spec


def _classes(classes, m):
    cl = [classes] if isinstance(classes, FunctionClass) else list(classes)
    if len(cl) == 1:
        cl = cl * m
    if len(cl) != m:
        raise DimensionMismatch(f"{len(cl)} function classes for {m} terminals")
    return cl


class _Layout:
    def __init__(self):
        self.blocks = {}
        self.labels = []
        self.size = 0

    def add(self, name, k):
        self.blocks[name] = slice(self.size, self.size + k)
        self.labels += [f"{name}[{i}]" for i in range(k)]
        self.size += k

    def embed(self, name, mat):
        """Coefficient rows for a quantity ``mat @ block`` (mat: rows x blocksize)."""
        out = np.zeros((mat.shape[0], self.size))
        out[:, self.blocks[name]] = mat
        return out


def build_pep(template, p: DiscretizationParams, classes, nets: Nets | None = None,
              spec: EnergySpec | None = None, k: int = 1, compress: bool = True) -> GramProblem:
    """Worst-case ``E_2 - E_1 + eta<x1-x*, y1-y*> + rho|i_R1 - i_R*|^2_{D_R}`` as an SDP.

    ``k`` only labels the step; the problem does not depend on it.
    ``compress=False`` keeps the raw layout with every block present, so that
    problems built at different ``h`` share coordinates.
    """
    netlist, nets, spec = _unpack(template, nets, spec)
    net = Network(netlist)
    m = netlist.m
    cls = _classes(classes, m)
    if len(spec.D_C) != net.nC or len(spec.D_L) != net.nL:
        raise DimensionMismatch("energy weights do not match the capacitors/inductors")

    ns = net.ns
    Ns = _linalg.null_space(net.constraints) if net.constraints.shape[0] else np.eye(ns)
    E = nets.selection_matrix()
    NE = _linalg.null_space(E)
    Qe = net.Qe
    alpha, beta, h = p.alpha, p.beta, p.h
    need15 = beta != 1.0 or not compress
    fresh15 = need15 and (alpha != 0.0 or not compress)
    use_gamma = bool(spec.gamma_nodes)
    need2 = use_gamma or not compress

    L = _Layout()
    L.add("s1", Ns.shape[1])
    L.add("xs", nets.n)
    L.add("ys", NE.shape[1])
    L.add("zs", Qe.shape[1])
    L.add("w1", m)
    if fresh15:
        L.add("w15", m)
    if need2:
        L.add("w2", m)
    d = L.size

    # equilibrium
    xs = L.embed("xs", E.T)                # (m, d)
    ys = L.embed("ys", NE)                 # (m, d)
    q = net.Pe @ np.vstack([xs, ys]) + L.embed("zs", Qe)
    res = net.Me @ q - net.Be @ np.vstack([xs, ys])
    if np.max(np.abs(res), initial=0.0) > 1e-8:
        raise NonRepresentable("consensus terminal pairs are not all equilibria (circuit not admissible?)")
    sq = net.qslices
    s_star = np.vstack([q[sq["vC"]], q[sq["iL"]]])
    iR_star = q[sq["iR"]]
    p_star = q[sq["p"]]

    def solve(s_coef, wname):
        u = net.P @ s_coef + net.Q @ L.embed(wname, np.eye(m))
        return u

    s1 = L.embed("s1", Ns)
    u1 = solve(s1, "w1")
    F1 = net.T @ u1
    points = [("1", s1, u1)]
    if need15:
        s15 = s1 + alpha * h * F1
        u15 = solve(s15, "w15") if fresh15 else u1
        F2 = net.T @ u15
        if fresh15:
            points.append(("1.5", s15, u15))
        s2 = s1 + beta * h * F1 + (1 - beta) * h * F2
    else:
        s2 = s1 + h * F1
    u2 = None
    if need2:
        if compress and np.allclose(s2, s1, atol=1e-14, rtol=0):
            u2 = u1
        else:
            u2 = solve(s2, "w2")
            points.append(("2", s2, u2))

    sl = net.slices
    x1, y1 = net.Xu @ u1, net.Yu @ u1
    iR1 = u1[sl["iR"]]

    def quad(rows_a, rows_b, w):
        Cm = np.zeros((d, d))
        for ra, rb, c in zip(rows_a, rows_b, w):
            Cm += c * _sym_outer(ra, rb)
        return Cm

    dC, dL = np.asarray(spec.D_C, float), np.asarray(spec.D_L, float)
    wts = np.concatenate([dC, dL])
    e1, e2 = s1 - s_star, s2 - s_star
    C0 = 0.5 * (quad(e2, e2, wts) - quad(e1, e1, wts))
    C_eta = quad(x1 - xs, y1 - ys, np.ones(m))
    C_rho = quad(iR1 - iR_star, iR1 - iR_star, net.D_R) if net.nR else np.zeros((d, d))
    C_gamma = np.zeros((d, d))
    if use_gamma:
        def node_rows(pu):
            full = np.vstack([pu, np.zeros((1, d))])
            return full[net.node_class[[k_ for k_ in spec.gamma_nodes]]]
        pst = node_rows(p_star)
        g1 = node_rows(u1[sl["p"]]) - pst
        g2 = node_rows(u2[sl["p"]]) - pst
        ones = np.ones(len(spec.gamma_nodes))
        C_gamma = quad(g2, g2, ones) - quad(g1, g1, ones)

    # interpolation
    npts = len(points) + 1
    nF = m * npts
    constraints = []
    for l in range(m):
        pts = []
        for r, (name, _, u) in enumerate(points):
            pts.append(Point((net.Xu @ u)[l], (net.Yu @ u)[l], l * npts + r, name))
        pts.append(Point(xs[l], ys[l], l * npts + npts - 1, "*"))
        constraints += interpolation_constraints(cls[l].mu, cls[l].M, pts, nF, terminal=l + 1)

    coeffs = {
        "v1": s1[: net.nC], "i1": s1[net.nC:], "v2": s2[: net.nC], "i2": s2[net.nC:],
        "x1": x1, "y1": y1, "x*": xs, "y*": ys, "v*": s_star[: net.nC], "i*": s_star[net.nC:],
        "iR1": iR1, "iR*": iR_star,
    }
    for name, _, u in points[1:]:
        coeffs["x" + name] = net.Xu @ u
        coeffs["y" + name] = net.Yu @ u

    # compress onto the span actually used
    rows = [s1, s2, x1, y1, xs, ys, s_star, iR1, iR_star]
    rows += [net.Xu @ u for _, _, u in points] + [net.Yu @ u for _, _, u in points]
    if use_gamma:
        rows += [u1[sl["p"]], u2[sl["p"]], p_star]
    Phi = np.vstack([r for r in rows if r.size])
    if compress:
        V = _linalg.range_basis(Phi.T)
        if V.shape[1] == 0:
            V = np.zeros((d, 1))
            V[0, 0] = 1.0 if d else 0.0
    else:
        V = np.eye(d)

    def red(Cm):
        return V.T @ Cm @ V

    cons = [Constraint(red(c.A), c.a, c.label) for c in constraints]
    nominal = 2 * len(netlist.components) + 4 * m
    return GramProblem(
        params=p, classes=cls, dim=V.shape[1], nominal_dim=nominal, raw_dim=d, basis=V,
        C0=red(C0), C_eta=red(C_eta), C_rho=red(C_rho), C_gamma=red(C_gamma), cF=np.zeros(nF),
        constraints=cons, nF=nF, coefficients=coeffs, column_labels=L.labels,
        meta={"k": k, "points": [n_ for n_, _, _ in points] + ["*"], "m": m, "nets": nets.nets,
              "strict_convexity_assumed": any(c.mu == 0 for c in cls)},
    )
