"""Continuous-time circuit dynamics: assembly, RK4 integration, energy and power."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    AlgebraicLoopUnsolved,
    BareNonsmoothDevice,
    DegenerateCircuit,
    InconsistentInitialState,
    NoConvergence,
    NonCancelableNegativeResistor,
)
from .netlist import MultiWireTemplate, Netlist, Nets
from .network import Network
from .oracles import FunctionOracle, SeparableSum

DR_TOL = 1e-12
DR_MAXITER = 10_000


@dataclass
class CircuitState:
    """Capacitor voltages and inductor currents, one row per coordinate."""

    v_C: np.ndarray
    i_L: np.ndarray
    t: float = 0.0

    @property
    def s(self):
        return np.hstack([self.v_C, self.i_L])

    @classmethod
    def from_s(cls, net: Network, s, t=0.0):
        v, i = net.split_state(s)
        return cls(v.copy(), i.copy(), t)


@dataclass
class Snapshot:
    """All quantities derived from a state: terminal pairs, potentials, branches."""

    x: np.ndarray
    y: np.ndarray
    potentials: np.ndarray
    v: np.ndarray
    i: np.ndarray
    i_R: np.ndarray
    ds: np.ndarray


@dataclass(frozen=True)
class EnergySpec:
    """Weights of the quadratic storage function.

    ``gamma_nodes`` are 1-based node indices whose potential deviation enters
    with weight ``gamma``.
    """

    D_C: np.ndarray
    D_L: np.ndarray
    gamma_nodes: tuple = ()
    gamma: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.D_C) <= 0) or np.any(np.asarray(self.D_L) <= 0):
            raise ValueError("energy weights must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @classmethod
    def physical(cls, netlist: Netlist, gamma_nodes=(), gamma=0.0):
        return cls(netlist.values("C"), netlist.values("L"), tuple(gamma_nodes), gamma)

    def with_gamma(self, gamma):
        return EnergySpec(self.D_C, self.D_L, self.gamma_nodes, gamma)

    def evaluate(self, v_C, i_L, eq, potentials=None):
        dv = np.atleast_2d(v_C) - eq.v_C
        di = np.atleast_2d(i_L) - eq.i_L
        E = 0.5 * np.sum(self.D_C * dv * dv) + 0.5 * np.sum(self.D_L * di * di)
        if self.gamma and self.gamma_nodes:
            idx = [k - 1 for k in self.gamma_nodes]
            dp = potentials[:, idx] - eq.potentials[:, idx]
            E += self.gamma * np.sum(dp * dp)
        return float(E)


@dataclass
class Equilibrium:
    x: np.ndarray
    y: np.ndarray
    v_C: np.ndarray
    i_L: np.ndarray
    i_R: np.ndarray = None
    potentials: np.ndarray = None
    meta: dict = field(default_factory=dict)


def _terminal_parts(oracle, m):
    if m == 1:
        return [oracle]
    if isinstance(oracle, SeparableSum) and len(oracle.parts) == m:
        return oracle.parts
    return None


class Dynamics:
    """``F(v_C, i_L)`` for a netlist (per coordinate, ``n`` coordinates) driven by ``oracle``.

    The oracle acts on the flat terminal vector ordered terminal-major: the
    ``n`` coordinates of terminal 1 come first.
    """

    def __init__(self, netlist: Netlist, oracle: FunctionOracle, n: int = 1, network: Network | None = None):
        self.netlist = netlist
        self.oracle = oracle
        self.n = n
        self.net = net = network if network is not None else Network(netlist)
        m = netlist.m
        self.parts = _terminal_parts(oracle, m)
        self.best_effort = False
        self._check_negative_resistors()
        aff = oracle.affine()
        self.mode = None
        if aff is not None:
            self._setup_affine(*aff)
        elif net.R_th is not None and np.allclose(net.R_th, np.diag(np.diag(net.R_th))) and (
            self.parts is not None or np.allclose(np.diag(net.R_th), net.R_th[0, 0])
        ):
            self.mode = "port"
            self.r = np.diag(net.R_th).copy()
            for l, r in enumerate(self.r):
                part = self.parts[l] if self.parts is not None else oracle
                if r == 0 and not part.smooth:
                    raise BareNonsmoothDevice(
                        f"terminal {l + 1} has no series resistance and a nonsmooth function"
                    )
                if r > 0 and not part.smooth:
                    self.best_effort = True
        else:
            self.mode = "splitting"
            self.best_effort = not oracle.smooth
        self._warm = None

    # -- setup ------------------------------------------------------------
    def _check_negative_resistors(self):
        net = self.net
        if not np.any(net.D_R < 0):
            return
        if net.passivity_defect() <= 1e-12:
            return
        R = net.R_th
        if R is not None and np.allclose(R, np.diag(np.diag(R))):
            ok = True
            for l, r in enumerate(np.diag(R)):
                if r < 0:
                    part = self.parts[l] if self.parts is not None else self.oracle
                    ok &= bool(part.smooth and part.fclass.M * (-r) < 1)
            if ok:
                return
        raise NonCancelableNegativeResistor(
            "a negative resistor is not cancelled by a series resistor or a smooth enough device"
        )

    def _setup_affine(self, H, p):
        net, n, m = self.net, self.n, self.netlist.m
        N = n * m
        H = np.asarray(H, dtype=float)
        H = H * np.eye(N) if H.ndim == 0 else np.broadcast_to(H, (N, N))
        p = np.broadcast_to(np.asarray(p, dtype=float), (N,))
        I = np.eye(n)
        Kx, Ky = np.kron(net.Qx, I), np.kron(net.Qy, I)
        Msys = Ky - H @ Kx
        if np.linalg.cond(Msys) > 1e13:
            raise DegenerateCircuit("the circuit with this quadratic has no unique algebraic solution")
        self._lu = sla.lu_factor(Msys)
        self._H, self._p = H, p
        self.mode = "affine"
        # F is affine in the flattened state; cache J and c for fast RK4
        ns = net.ns
        size = n * ns
        c = self._field_flat(np.zeros(size))
        J = np.empty((size, size))
        for k in range(size):
            e = np.zeros(size)
            e[k] = 1.0
            J[:, k] = self._field_flat(e) - c
        self.J, self.c = J, c

    def _field_flat(self, sflat):
        s = sflat.reshape(self.n, self.net.ns)
        u, _ = self._solve_affine(s)
        return (u @ self.net.T.T).ravel()

    # -- algebraic solves -----------------------------------------------------
    def _flat(self, a):
        """(n, m) -> terminal-major flat vector."""
        return a.T.ravel()

    def _unflat(self, v):
        return v.reshape(self.netlist.m, self.n).T

    def _solve_affine(self, s):
        net = self.net
        x0 = self._flat(s @ net.Px.T)
        y0 = self._flat(s @ net.Py.T)
        w = sla.lu_solve(self._lu, self._H @ x0 + self._p - y0)
        w = self._unflat(w)
        return net.unknowns(s, w), w

    def _solve_port(self, s):
        net = self.net
        z = s @ net.Z_th.T  # (n, m)
        x = np.empty_like(z)
        if self.parts is None:
            r = self.r[0]
            xf = self._prox_or_grad(self.oracle, r, self._flat(z))
            x = self._unflat(xf)
        else:
            for l, part in enumerate(self.parts):
                x[:, l] = self._prox_or_grad(part, self.r[l], z[:, l])
        y = np.empty_like(z)
        for l in range(self.netlist.m):
            r = self.r[l]
            if r != 0:
                y[:, l] = (z[:, l] - x[:, l]) / r
        if np.any(self.r == 0):
            g = self._flat_grad(x)
            y[:, self.r == 0] = g[:, self.r == 0]
        w = self._w_from_y(s, y)
        return net.unknowns(s, w), w

    def _flat_grad(self, x):
        if self.parts is None:
            return self._unflat(self.oracle.grad(self._flat(x)))
        return np.column_stack([p.grad(x[:, l]) for l, p in enumerate(self.parts)])

    def _prox_or_grad(self, f, r, z):
        if r > 0:
            return f.prox(r, z)
        if r == 0:
            return np.array(z, dtype=float)
        # x - |r| grad f(x) = z: contraction since M|r| < 1
        a = -r
        x = np.array(z, dtype=float)
        for _ in range(DR_MAXITER):
            xn = z + a * f.grad(x)
            if np.linalg.norm(xn - x) <= DR_TOL * max(1.0, np.linalg.norm(xn)):
                return xn
            x = xn
        raise AlgebraicLoopUnsolved("pre-Moreau inversion did not converge")

    def _w_from_y(self, s, y):
        net = self.net
        rhs = y - s @ net.Py.T
        return np.linalg.solve(net.Qy, rhs.T).T

    def _solve_splitting(self, s):
        """Douglas-Rachford between y in df(x) and the network's affine port relation."""
        net, n, m = self.net, self.n, self.netlist.m
        Px, Py, Qx, Qy = net.Px, net.Py, net.Qx, net.Qy
        gam = 1.0
        A = Qx - gam * Qy
        base = s @ (Px - gam * Py).T
        zeta = self._warm if self._warm is not None and self._warm.shape == (n, m) else s @ Px.T
        scale = max(1.0, float(np.max(np.abs(zeta))))
        for it in range(DR_MAXITER):
            xf = self._unflat(self.oracle.prox(gam, self._flat(zeta)))
            v = 2 * xf - zeta
            w = np.linalg.solve(A, (v - base).T).T
            xb = s @ Px.T + w @ Qx.T
            step = xb - xf
            zeta = zeta + step
            if np.max(np.abs(step)) <= DR_TOL * scale:
                self._warm = zeta
                return net.unknowns(s, w), w
        raise AlgebraicLoopUnsolved(f"algebraic loop unresolved after {DR_MAXITER} iterations")

    def solve(self, s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if self.mode == "affine":
            return self._solve_affine(s)
        if self.mode == "port":
            return self._solve_port(s)
        return self._solve_splitting(s)

    # -- public surface ---------------------------------------------------
    def F(self, s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if self.mode == "affine":
            return (self.J @ s.ravel() + self.c).reshape(s.shape)
        u, _ = self.solve(s)
        return u @ self.net.T.T

    def observe(self, state) -> Snapshot:
        s = state.s if isinstance(state, CircuitState) else np.atleast_2d(state)
        u, _ = self.solve(s)
        net = self.net
        v, i = net.branches(u, s)
        return Snapshot(
            x=u @ net.Xu.T,
            y=u[:, net.slices["y"]],
            potentials=net.potentials(u),
            v=v,
            i=i,
            i_R=u[:, net.slices["iR"]],
            ds=u @ net.T.T,
        )

    def initial_state(self, v_C=None, i_L=None):
        net = self.net
        v = np.zeros((self.n, net.nC)) if v_C is None else np.atleast_2d(np.asarray(v_C, dtype=float)).reshape(self.n, net.nC)
        i = np.zeros((self.n, net.nL)) if i_L is None else np.atleast_2d(np.asarray(i_L, dtype=float)).reshape(self.n, net.nL)
        return CircuitState(v, i)

    def project_consistent(self, state):
        """Closest state satisfying the circuit's hidden constraints."""
        C = self.net.constraints
        s = state.s
        if C.shape[0]:
            s = s - (s @ C.T) @ C
        return CircuitState.from_s(self.net, s, state.t)

    def rk4_map(self, dt):
        """``(Phi, phi)`` with one RK4 step ``s+ = Phi s + phi`` (affine mode only)."""
        J, c = self.J, self.c
        A = dt * J
        I = np.eye(J.shape[0])
        A2 = A @ A
        A3 = A2 @ A
        Phi = I + A + A2 / 2 + A3 / 6 + A3 @ A / 24
        phi = dt * (I + A / 2 + A2 / 6 + A3 / 24) @ c
        return Phi, phi


def assemble(netlist, oracle: FunctionOracle, n: int | None = None) -> Dynamics:
    if isinstance(netlist, MultiWireTemplate):
        return Dynamics(netlist.netlist, oracle, netlist.n)
    return Dynamics(netlist, oracle, 1 if n is None else n)


def _rk4(F, s, dt):
    k1 = F(s)
    k2 = F(s + 0.5 * dt * k1)
    k3 = F(s + 0.5 * dt * k2)
    k4 = F(s + dt * k3)
    return s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(dyn: Dynamics, s0: CircuitState, dt: float = 1e-3, T: float = 1.0, check=True):
    """Classical RK4; returns ``ceil(T/dt) + 1`` states."""
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    if check:
        res = dyn.net.consistency_residual(s0.s)
        if res > 1e-8:
            raise InconsistentInitialState(f"initial state violates circuit constraints by {res:.3g}")
    steps = int(math.ceil(T / dt - 1e-12))
    s = s0.s.astype(float)
    out = [CircuitState.from_s(dyn.net, s, s0.t)]
    if dyn.mode == "affine":
        Phi, phi = dyn.rk4_map(dt)
        flat = s.ravel()
        for k in range(steps):
            flat = Phi @ flat + phi
            out.append(CircuitState.from_s(dyn.net, flat.reshape(s.shape), s0.t + (k + 1) * dt))
        return out
    for k in range(steps):
        s = _rk4(dyn.F, s, dt)
        out.append(CircuitState.from_s(dyn.net, s, s0.t + (k + 1) * dt))
    return out


def energy(state: CircuitState, eq: Equilibrium, spec: EnergySpec, dyn: Dynamics | None = None):
    pots = None
    if spec.gamma and spec.gamma_nodes:
        if dyn is None:
            raise ValueError("potential terms need the dynamics to recover potentials")
        pots = dyn.observe(state).potentials
    return spec.evaluate(state.v_C, state.i_L, eq, pots)


def power_residual(dyn: Dynamics, state: CircuitState, eq: Equilibrium) -> float:
    """``dE/dt + ||i_R - i_R*||^2_{D_R} + <x - x*, y - y*>`` for the physical energy.

    With nonnegative resistors the equilibrium resistor currents vanish and
    this is the textbook power balance.
    """
    snap = dyn.observe(state)
    net = dyn.net
    dv, di = net.split_state(snap.ds)
    dE = np.sum(net.D_C * (state.v_C - eq.v_C) * dv) + np.sum(net.D_L * (state.i_L - eq.i_L) * di)
    iR0 = eq.i_R if eq.i_R is not None else 0.0
    diR = snap.i_R - iR0
    return float(dE + np.sum(net.D_R * diR * diR) + np.sum((snap.x - eq.x) * (snap.y - eq.y)))


def tellegen_residual(snap: Snapshot) -> float:
    return float(abs(np.sum(snap.v * snap.i) + np.sum(snap.x * snap.y)))


def equilibrium_from_state(dyn: Dynamics, state: CircuitState, nets: Nets | None = None) -> Equilibrium:
    snap = dyn.observe(state)
    x, y = snap.x.copy(), snap.y.copy()
    if nets is not None:
        E = nets.selection_matrix()
        Pr = E.T @ np.linalg.solve(E @ E.T, E)  # projector onto R(E^T)
        y = y - y @ Pr
        x = x @ Pr
    return Equilibrium(x, y, state.v_C.copy(), state.i_L.copy(), snap.i_R.copy(), snap.potentials.copy())


def static_equilibrium(dyn: Dynamics, x, y) -> Equilibrium:
    """Equilibrium state from terminal data via the static circuit equations."""
    v_C, i_L, p, i_R, res = dyn.net.equilibrium_state(x, y)
    if res > 1e-8 * max(1.0, float(np.max(np.abs(np.hstack([x, y]))))):
        raise DegenerateCircuit(f"terminal data is not an equilibrium of this circuit (residual {res:.3g})")
    u_p = np.hstack([p, np.zeros((p.shape[0], 1))])
    pots = u_p[:, dyn.net.node_class[1:-1]]
    return Equilibrium(np.atleast_2d(x), np.atleast_2d(y), v_C, i_L, i_R, pots)


def kkt_residual(eq: Equilibrium, nets: Nets, oracle: FunctionOracle, n=None) -> float:
    E = nets.selection_matrix()
    Pr = E.T @ np.linalg.solve(E @ E.T, E)
    x, y = eq.x, eq.y
    r1 = np.max(np.abs(x - x @ Pr))
    r2 = np.max(np.abs(y @ E.T))
    xf, yf = x.T.ravel(), y.T.ravel()
    r3 = np.max(np.abs(xf - oracle.prox(1.0, xf + yf)))
    return float(max(r1, r2, r3))


def find_equilibrium(netlist, nets: Nets, oracle: FunctionOracle, n=None, s0=None,
                     dt=1e-2, tol=1e-10, T_max=1e4) -> Equilibrium:
    """Integrate until the state stops moving, then read off the equilibrium.

    With ``nets`` given, the terminal pair is projected onto the net
    constraints; pass ``None`` for circuits whose equilibria are not consensus
    points (penalty formulations).
    """
    dyn = assemble(netlist, oracle, n)
    state = dyn.initial_state() if s0 is None else s0
    s = state.s.astype(float)
    t = 0.0
    if dyn.mode == "affine":
        Phi, phi = dyn.rk4_map(dt)
        flat = s.ravel()
        # advance in doubling chunks; each chunk is itself an affine map
        chunk_P, chunk_p, chunk = Phi, phi, 1
        while t < T_max:
            nxt = Phi @ flat + phi
            if np.max(np.abs(nxt - flat)) / dt < tol:
                flat = nxt
                break
            flat = chunk_P @ flat + chunk_p
            t += chunk * dt
            if chunk < 2 ** 14:
                chunk_P, chunk_p, chunk = chunk_P @ chunk_P, chunk_P @ chunk_p + chunk_p, 2 * chunk
        else:
            raise NoConvergence(f"no equilibrium within T_max={T_max}")
        s = flat.reshape(s.shape)
    else:
        while True:
            sn = _rk4(dyn.F, s, dt)
            t += dt
            if np.max(np.abs(sn - s)) / dt < tol:
                s = sn
                break
            s = sn
            if t >= T_max:
                raise NoConvergence(f"no equilibrium within T_max={T_max}")
    eq = equilibrium_from_state(dyn, CircuitState.from_s(dyn.net, s, t), nets if nets is not None and nets.m == netlist_m(netlist) else None)
    eq.meta["t"] = t
    eq.meta["best_effort"] = dyn.best_effort
    return eq


def netlist_m(netlist):
    return netlist.netlist.m if isinstance(netlist, MultiWireTemplate) else netlist.m
