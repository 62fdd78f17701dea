"""Static and dynamic interconnects: nets, RLC netlists, incidence, admissibility.

Node indices are 1-based throughout the public API.  Nodes ``1..m`` are the
terminals where the function device attaches, node ``tau`` is ground.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _linalg
from .errors import (
    DegenerateCircuit,
    DimensionMismatch,
    InvalidNetlist,
    ParseError,
)

KINDS = ("R", "L", "C")
SUBSPACE_TOL = 1e-9


@dataclass(frozen=True)
class Nets:
    """Partition of terminals ``1..m`` into consensus groups."""

    m: int
    nets: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.nets)
        object.__setattr__(self, "nets", groups)
        seen = []
        for g in groups:
            if len(g) == 0:
                raise InvalidNetlist("empty net")
            seen.extend(g)
        if sorted(seen) != list(range(1, self.m + 1)):
            raise InvalidNetlist(
                f"nets must partition terminals 1..{self.m}, got {groups}"
            )

    @property
    def n(self):
        return len(self.nets)

    def selection_matrix(self):
        E = np.zeros((self.n, self.m))
        for r, g in enumerate(self.nets):
            for t in g:
                E[r, t - 1] = 1.0
        return E

    def net_of(self):
        """0-based net index of every terminal."""
        out = np.empty(self.m, dtype=int)
        for r, g in enumerate(self.nets):
            for t in g:
                out[t - 1] = r
        return out

    @classmethod
    def single(cls, m):
        return cls(m, (tuple(range(1, m + 1)),))

    @classmethod
    def separate(cls, m):
        return cls(m, tuple((i,) for i in range(1, m + 1)))


@dataclass(frozen=True)
class Component:
    kind: str
    value: float
    plus: int
    minus: int
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidNetlist(f"unknown component kind {self.kind!r}")
        if self.plus == self.minus:
            raise InvalidNetlist(f"component {self.label} has plus == minus node")
        v = float(self.value)
        if not np.isfinite(v):
            raise InvalidNetlist(f"component {self.label} has non-finite value")
        if self.kind in ("L", "C") and v <= 0:
            raise InvalidNetlist(f"{self.label}: inductance/capacitance must be > 0")
        object.__setattr__(self, "value", v)

    @property
    def label(self):
        return self.name or f"{self.kind}({self.plus},{self.minus})"


@dataclass(frozen=True)
class Netlist:
    """RLC network with ``m`` terminals and ``tau`` nodes (the last is ground).

    Negative resistances are accepted here; whether a circuit using them can
    be simulated is decided when the dynamics are assembled.
    """

    tau: int
    components: tuple
    m: int
    allow_floating: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.m < 1:
            raise InvalidNetlist("need at least one terminal")
        if self.tau < self.m + 1:
            raise InvalidNetlist(f"tau={self.tau} must be >= m+1={self.m + 1}")
        for c in self.components:
            for node in (c.plus, c.minus):
                if not 1 <= node <= self.tau:
                    raise InvalidNetlist(f"{c.label}: node {node} out of range 1..{self.tau}")
        self._check_wire_loops()
        if not self.allow_floating:
            self._check_connected()

    # -- structure ---------------------------------------------------------
    @property
    def sigma(self):
        return len(self.components)

    @property
    def ground(self):
        return self.tau

    def indices(self, kind):
        return [j for j, c in enumerate(self.components) if c.kind == kind]

    def values(self, kind):
        return np.array([c.value for c in self.components if c.kind == kind], dtype=float)

    def count(self, kind):
        return sum(1 for c in self.components if c.kind == kind)

    def without(self, index):
        comps = [c for j, c in enumerate(self.components) if j != index]
        return Netlist(self.tau, comps, self.m, allow_floating=True)

    def _check_wire_loops(self):
        parent = list(range(self.tau + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for c in self.components:
            if c.kind == "R" and c.value == 0.0:
                a, b = find(c.plus), find(c.minus)
                if a == b:
                    raise InvalidNetlist(f"ideal-wire loop through {c.label}")
                parent[a] = b

    def _check_connected(self):
        # each terminal reaches ground through its own function device
        adj = {k: set() for k in range(1, self.tau + 1)}
        for c in self.components:
            adj[c.plus].add(c.minus)
            adj[c.minus].add(c.plus)
        for t in range(1, self.m + 1):
            adj[t].add(self.tau)
            adj[self.tau].add(t)
        seen = {self.tau}
        stack = [self.tau]
        while stack:
            k = stack.pop()
            for j in adj[k]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        missing = sorted(set(adj) - seen)
        if missing:
            raise InvalidNetlist(f"nodes {missing} are not connected to ground")


@dataclass(frozen=True)
class MultiWireTemplate:
    """A per-coordinate netlist replicated ``n`` times."""

    netlist: Netlist
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidNetlist("replication count must be >= 1")


def build_incidence(netlist: Netlist) -> np.ndarray:
    """Reduced node incidence matrix, shape ``(tau-1, sigma)``."""
    A = np.zeros((netlist.tau - 1, netlist.sigma))
    g = netlist.ground
    for j, c in enumerate(netlist.components):
        if c.plus != g:
            A[c.plus - 1, j] = 1.0
        if c.minus != g:
            A[c.minus - 1, j] = -1.0
    return A


def _equilibrium_system(netlist):
    """Homogeneous linear system in (x, y, e, i) describing static equilibria."""
    m, tau, sigma = netlist.m, netlist.tau, netlist.sigma
    A = build_incidence(netlist)
    ne = tau - 1 - m
    nu = 2 * m + ne + sigma
    ox, oy, oe, oi = 0, m, 2 * m, 2 * m + ne
    rows = []
    # KCL: A i + (y, 0) = 0
    kcl = np.zeros((tau - 1, nu))
    kcl[:, oi:] = A
    kcl[:m, oy:oy + m] = np.eye(m)
    rows.append(kcl)
    for j, c in enumerate(netlist.components):
        r = np.zeros(nu)
        if c.kind == "C":
            r[oi + j] = 1.0  # i_C = 0
        else:
            r[ox:ox + m] = A[:m, j]
            r[oe:oe + ne] = A[m:, j]
            if c.kind == "R":
                r[oi + j] = -c.value  # v_R - D_R i_R = 0
        rows.append(r[None, :])
    return np.vstack(rows)


def equilibrium_terminal_space(netlist: Netlist) -> np.ndarray:
    """Orthonormal basis (columns, ``2m`` rows) of terminal pairs (x, y) at equilibrium."""
    M = _equilibrium_system(netlist)
    N = _linalg.null_space(M)
    B = _linalg.range_basis(N[: 2 * netlist.m])
    if B.shape[1] == 0:
        raise DegenerateCircuit("the only equilibrium is (x, y) = 0")
    return B


def consensus_space(nets: Nets) -> np.ndarray:
    """Orthonormal basis of R(E^T) x N(E)."""
    E = nets.selection_matrix()
    m = nets.m
    rx = _linalg.range_basis(E.T)
    ny = _linalg.null_space(E)
    out = np.zeros((2 * m, rx.shape[1] + ny.shape[1]))
    out[:m, : rx.shape[1]] = rx
    out[m:, rx.shape[1]:] = ny
    return out


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    distance: float
    witness: np.ndarray | None = None

    def __bool__(self):
        return self.admissible

    def __str__(self):
        return "Admissible" if self.admissible else "NotAdmissible"


def check_admissible(netlist: Netlist, nets: Nets, tol=SUBSPACE_TOL) -> Admissibility:
    if netlist.m != nets.m:
        raise DimensionMismatch(f"netlist has {netlist.m} terminals, nets have {nets.m}")
    try:
        eq = equilibrium_terminal_space(netlist)
    except DegenerateCircuit:
        eq = np.zeros((2 * netlist.m, 0))
    target = consensus_space(nets)
    P1, P2 = _linalg.projector(eq), _linalg.projector(target)
    dist = float(np.linalg.norm(P1 - P2))
    if dist <= tol:
        return Admissibility(True, dist)
    return Admissibility(False, dist, _witness(eq, P2, target, P1))


def _witness(B1, P2, B2, P1):
    """Unit vector lying in one subspace but as far as possible from the other."""
    best = None
    for B, P in ((B1, P2), (B2, P1)):
        if B.shape[1] == 0:
            continue
        R = B - P @ B
        _, s, vt = np.linalg.svd(R, full_matrices=False)
        if best is None or s[0] > best[0]:
            v = B @ vt[0]
            best = (s[0], v / np.linalg.norm(v))
    return None if best is None else best[1]


def expand_multiwire(template: MultiWireTemplate) -> Netlist:
    """``n`` disjoint copies sharing ground.

    Terminal ``l`` of copy ``c`` becomes terminal ``c*m + l``; internal nodes
    follow all terminals, copy by copy.
    """
    base, n = template.netlist, template.n
    if n == 1:
        return base
    m, tau = base.m, base.tau
    nint = tau - 1 - m
    ground = n * (tau - 1) + 1

    def remap(node, c):
        if node == tau:
            return ground
        if node <= m:
            return c * m + node
        return n * m + c * nint + (node - m)

    comps = []
    for c in range(n):
        for comp in base.components:
            name = f"{comp.name}#{c + 1}" if comp.name else ""
            comps.append(Component(comp.kind, comp.value, remap(comp.plus, c), remap(comp.minus, c), name))
    return Netlist(ground, comps, n * m, allow_floating=base.allow_floating)


def replicate_nets(nets: Nets, n: int) -> Nets:
    groups = []
    for c in range(n):
        for g in nets.nets:
            groups.append(tuple(c * nets.m + t for t in g))
    return Nets(n * nets.m, tuple(groups))


# -- text format ----------------------------------------------------------

def _lines(source):
    """Accept a path or netlist text; returns (lines, path or None)."""
    if isinstance(source, os.PathLike) or (
        isinstance(source, str) and "\n" not in source and os.path.isfile(source)
    ):
        try:
            with open(source, encoding="utf-8") as fh:
                return fh.read().splitlines(), str(source)
        except OSError as exc:
            raise ParseError(str(exc), path=str(source)) from None
    return str(source).splitlines(), None


def parse_netlist(source, allow_floating=False):
    """Parse netlist text (or a path). Returns ``(Netlist, Nets or None)``."""
    lines, path = _lines(source)
    tau = m = None
    comps, groups = [], []
    for ln, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tok = text.split()
        head = tok[0]
        try:
            if head == "nodes":
                if len(tok) != 4 or tok[2] != "terminals":
                    raise ValueError("expected 'nodes <tau> terminals <m>'")
                tau, m = int(tok[1]), int(tok[3])
            elif head in KINDS:
                if len(tok) not in (4, 5):
                    raise ValueError(f"expected '{head} <value> <plus> <minus> [name]'")
                name = tok[4] if len(tok) == 5 else ""
                comps.append(Component(head, float(tok[1]), int(tok[2]), int(tok[3]), name))
            elif head == "net":
                if len(tok) < 2:
                    raise ValueError("empty net")
                groups.append(tuple(int(t) for t in tok[1:]))
            else:
                raise ValueError(f"unknown record {head!r}")
        except (ValueError, InvalidNetlist) as exc:
            raise ParseError(str(exc), line=ln, path=path) from None
    if tau is None:
        raise ParseError("missing 'nodes <tau> terminals <m>' header", path=path)
    try:
        net = Netlist(tau, comps, m, allow_floating=allow_floating)
        nets = Nets(m, tuple(groups)) if groups else None
    except InvalidNetlist as exc:
        raise ParseError(str(exc), path=path) from None
    return net, nets


def parse_nets(source, m=None):
    """Parse a nets file: ``net`` lines, optional ``terminals <m>`` header."""
    lines, path = _lines(source)
    groups = []
    for ln, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tok = text.split()
        try:
            if tok[0] == "net":
                groups.append(tuple(int(t) for t in tok[1:]))
                if not groups[-1]:
                    raise ValueError("empty net")
            elif tok[0] == "terminals":
                m = int(tok[1])
            elif tok[0] == "nodes" and len(tok) == 4:
                m = int(tok[3])
            elif tok[0] in KINDS:
                continue  # a full netlist may double as its own nets file
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), line=ln, path=path) from None
    if not groups:
        raise ParseError("no 'net' records", path=path)
    if m is None:
        m = max(max(g) for g in groups)
    try:
        return Nets(m, tuple(groups))
    except InvalidNetlist as exc:
        raise ParseError(str(exc), path=path) from None


def format_netlist(netlist: Netlist, nets: Nets | None = None) -> str:
    out = [f"nodes {netlist.tau} terminals {netlist.m}"]
    for c in netlist.components:
        rec = f"{c.kind} {c.value:.17g} {c.plus} {c.minus}"
        out.append(rec + (f" {c.name}" if c.name else ""))
    if nets is not None:
        out.extend("net " + " ".join(map(str, g)) for g in nets.nets)
    return "\n".join(out) + "\n"


def make_netlist(tau, m, records: Iterable[Sequence], allow_floating=False) -> Netlist:
    """Build from ``(kind, value, plus, minus[, name])`` tuples."""
    return Netlist(tau, [Component(*r) for r in records], m, allow_floating=allow_floating)
