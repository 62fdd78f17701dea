"""Communication graphs and mixing matrices for the decentralized templates."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import Disconnected, InvalidNetlist, ParseError


@dataclass(frozen=True)
class Graph:
    """Undirected graph on agents ``1..N``; each edge is stored once as ``(j, l)`` with ``j < l``."""

    N: int
    edges: tuple

    def __post_init__(self):
        if self.N < 1:
            raise InvalidNetlist("graph needs at least one agent")
        seen = []
        for e in self.edges:
            j, l = (int(v) for v in e)
            if j == l:
                raise InvalidNetlist(f"self-loop at agent {j}")
            if not (1 <= j <= self.N and 1 <= l <= self.N):
                raise InvalidNetlist(f"edge ({j}, {l}) outside agents 1..{self.N}")
            pair = (min(j, l), max(j, l))
            if pair in seen:
                raise InvalidNetlist(f"edge {pair} listed twice")
            seen.append(pair)
        object.__setattr__(self, "edges", tuple(seen))
        if not self._connected():
            raise Disconnected(f"graph on {self.N} agents with edges {self.edges} is not connected")

    def _connected(self):
        reach = {1}
        stack = [1]
        nb = self.neighbors
        while stack:
            for l in nb[stack.pop()]:
                if l not in reach:
                    reach.add(l)
                    stack.append(l)
        return len(reach) == self.N

    @property
    def neighbors(self):
        """``{j: sorted neighbours of j}``."""
        nb = {j: [] for j in range(1, self.N + 1)}
        for j, l in self.edges:
            nb[j].append(l)
            nb[l].append(j)
        return {j: sorted(v) for j, v in nb.items()}

    @property
    def degrees(self):
        return np.array([len(v) for v in self.neighbors.values()])

    @property
    def arcs(self):
        """Both orientations of every edge: ``(j, l), (l, j)`` per stored edge."""
        out = []
        for j, l in self.edges:
            out += [(j, l), (l, j)]
        return out

    def edge_index(self, j, l):
        return self.edges.index((min(j, l), max(j, l)))

    def incidence(self):
        """Edge-by-agent signed incidence, ``+1`` at the smaller endpoint."""
        B = np.zeros((len(self.edges), self.N))
        for k, (j, l) in enumerate(self.edges):
            B[k, j - 1], B[k, l - 1] = 1.0, -1.0
        return B

    @classmethod
    def complete(cls, N):
        return cls(N, tuple((j, l) for j in range(1, N + 1) for l in range(j + 1, N + 1)))

    @classmethod
    def path(cls, N):
        return cls(N, tuple((j, j + 1) for j in range(1, N)))

    @classmethod
    def random_connected(cls, N, p, rng):
        """Erdos-Renyi draws with edge probability ``p`` until connected (spanning path forced after 100 tries)."""
        for _ in range(100):
            edges = [(j, l) for j in range(1, N + 1) for l in range(j + 1, N + 1) if rng.random() < p]
            try:
                return cls(N, tuple(edges))
            except Disconnected:
                continue
        edges = set((j, l) for j in range(1, N + 1) for l in range(j + 1, N + 1) if rng.random() < p)
        edges |= {(j, j + 1) for j in range(1, N)}
        return cls(N, tuple(sorted(edges)))


DEFAULT_GRAPH = Graph(6, ((1, 6), (2, 6), (3, 4), (3, 6), (4, 5), (4, 6), (5, 6)))


@dataclass(frozen=True)
class MixingMatrix:
    W: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.W if dtype is None else self.W.astype(dtype)

    def __matmul__(self, other):
        return self.W @ other


def metropolis(graph: Graph) -> MixingMatrix:
    """``W_jl = 1 / (max(|G_j|, |G_l|) + 1)`` on edges, diagonal fills the row to one."""
    deg = graph.degrees
    W = np.zeros((graph.N, graph.N))
    for j, l in graph.edges:
        W[j - 1, l - 1] = W[l - 1, j - 1] = 1.0 / (max(deg[j - 1], deg[l - 1]) + 1)
    W[np.diag_indices(graph.N)] = 1.0 - W.sum(axis=1)
    return MixingMatrix(W)


def parse_graph(source) -> Graph:
    """Text format: ``N <count>`` followed by ``edge <j> <l>`` lines; ``#`` starts a comment."""
    path = None
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        path = str(source)
        with open(source) as fh:
            text = fh.read()
    else:
        text = str(source)
    N, edges = None, []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "N" and len(tok) == 2:
                N = int(tok[1])
            elif tok[0] == "edge" and len(tok) == 3:
                edges.append((int(tok[1]), int(tok[2])))
            else:
                raise ValueError
        except ValueError:
            raise ParseError(f"cannot parse {raw.strip()!r}", no, path) from None
    if N is None:
        raise ParseError("missing 'N <count>' line", None, path)
    try:
        return Graph(N, tuple(edges))
    except InvalidNetlist as exc:
        raise ParseError(str(exc), None, path) from None


def format_graph(graph: Graph) -> str:
    return "\n".join([f"N {graph.N}"] + [f"edge {j} {l}" for j, l in graph.edges]) + "\n"
