"""Linear algebra of an RLC interconnect seen from its terminals.

Per coordinate, the non-state unknowns ``u = (p, y, i_R, i_C)`` (node
potentials, terminal currents, resistor and capacitor currents) are tied to
the state ``s = (v_C, i_L)`` by KCL, capacitor KVL and Ohm's law.  Their
solution set is affine, ``u = P s + Q w``, where ``w`` has one entry per
terminal and is pinned down by the device relation ``y in df(x)``.  The state
derivative is ``T u``.

0-ohm resistors are removed by merging their end nodes.  Hidden constraints
(inductor cutsets, capacitor loops) are differentiated once and appended, so
``Q`` always has exactly ``m`` columns for a well-posed circuit.
"""
from __future__ import annotations

import numpy as np

from . import _linalg
from .errors import DegenerateCircuit
from .netlist import Netlist, build_incidence


class Network:
    def __init__(self, netlist: Netlist):
        self.netlist = netlist
        m = self.m = netlist.m
        tau = netlist.tau
        # merge ideal wires
        parent = list(range(tau + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        wires = [j for j, c in enumerate(netlist.components) if c.kind == "R" and c.value == 0.0]
        for j in wires:
            c = netlist.components[j]
            a, b = find(c.plus), find(c.minus)
            if b == find(tau):
                a, b = b, a
            parent[b] = a
        groot = find(tau)
        reps = sorted({find(k) for k in range(1, tau + 1)} - {groot})
        cls = {r: i for i, r in enumerate(reps)}
        self.node_class = np.array([-1] + [cls.get(find(k), -1) for k in range(1, tau + 1)])
        nn = self.nn = len(reps)
        self.wires = wires

        self.R_idx = [j for j, c in enumerate(netlist.components) if c.kind == "R" and c.value != 0.0]
        self.L_idx = netlist.indices("L")
        self.C_idx = netlist.indices("C")
        comps = netlist.components

        def incid(idx):
            A = np.zeros((nn, len(idx)))
            for col, j in enumerate(idx):
                a, b = self.node_class[comps[j].plus], self.node_class[comps[j].minus]
                if a >= 0:
                    A[a, col] += 1.0
                if b >= 0:
                    A[b, col] -= 1.0
            return A

        self.A_R, self.A_L, self.A_C = incid(self.R_idx), incid(self.L_idx), incid(self.C_idx)
        self.D_R = np.array([comps[j].value for j in self.R_idx])
        self.D_L = np.array([comps[j].value for j in self.L_idx])
        self.D_C = np.array([comps[j].value for j in self.C_idx])
        nR, nL, nC = len(self.R_idx), len(self.L_idx), len(self.C_idx)
        self.nR, self.nL, self.nC = nR, nL, nC
        self.ns = nC + nL

        # terminal selector: x = S^T p, KCL injection S y
        S = np.zeros((nn, m))
        for l in range(m):
            k = self.node_class[l + 1]
            if k >= 0:
                S[k, l] = 1.0
        self.S = S

        nu = nn + m + nR + nC
        self.nu = nu
        self.op, self.oy, self.oR, self.oC = 0, nn, nn + m, nn + m + nR
        sl = self.slices = {
            "p": slice(0, nn),
            "y": slice(nn, nn + m),
            "iR": slice(nn + m, nn + m + nR),
            "iC": slice(nn + m + nR, nu),
        }
        ns = self.ns
        rows, rhs = [], []
        # KCL
        K = np.zeros((nn, nu))
        K[:, sl["y"]] = S
        K[:, sl["iR"]] = self.A_R
        K[:, sl["iC"]] = self.A_C
        Kb = np.zeros((nn, ns))
        Kb[:, nC:] = -self.A_L
        rows.append(K)
        rhs.append(Kb)
        # capacitor voltages
        Cr = np.zeros((nC, nu))
        Cr[:, sl["p"]] = self.A_C.T
        Cb = np.zeros((nC, ns))
        Cb[:, :nC] = np.eye(nC)
        rows.append(Cr)
        rhs.append(Cb)
        # Ohm
        O = np.zeros((nR, nu))
        O[:, sl["p"]] = self.A_R.T
        O[:, sl["iR"]] = -np.diag(self.D_R)
        rows.append(O)
        rhs.append(np.zeros((nR, ns)))

        T = np.zeros((ns, nu))
        T[:nC, sl["iC"]] = np.diag(1.0 / self.D_C) if nC else T[:nC, sl["iC"]]
        T[nC:, sl["p"]] = (self.A_L / self.D_L).T if nL else T[nC:, sl["p"]]
        self.T = T

        Mx, Bx = np.vstack(rows), np.vstack(rhs)
        cons = np.zeros((0, ns))
        for _ in range(4):
            Kl = _linalg.left_null_space(Mx)
            G = Kl.T @ Bx
            G = _linalg.range_basis(G.T).T if G.size else G
            if G.shape[0] == 0:
                break
            # constraints already differentiated contribute nothing new
            new = G - (G @ _linalg.projector(_linalg.range_basis(cons.T))) if cons.size else G
            if np.linalg.norm(new) < 1e-9:
                break
            cons = np.vstack([cons, G])
            Mx = np.vstack([Mx, G @ T])
            Bx = np.vstack([Bx, np.zeros((G.shape[0], ns))])
        self.constraints = _linalg.range_basis(cons.T).T if cons.size else np.zeros((0, ns))

        self.P = _linalg.pinv(Mx) @ Bx
        Q = _linalg.null_space(Mx)
        Xu = np.zeros((m, nu))
        Xu[:, sl["p"]] = S.T
        Yu = np.zeros((m, nu))
        Yu[:, sl["y"]] = np.eye(m)
        self.Xu, self.Yu = Xu, Yu
        W = np.vstack([Xu @ Q, Yu @ Q])
        if Q.shape[1] > 0:
            Zq = _linalg.null_space(W)
            if Zq.shape[1]:
                if np.linalg.norm(T @ Q @ Zq) > 1e-9 * max(1.0, np.linalg.norm(T)):
                    raise DegenerateCircuit("state derivative is not determined by the terminals")
                Q = Q @ _linalg.range_basis(W.T)
        if Q.shape[1] != m:
            raise DegenerateCircuit(
                f"terminal relation has dimension {Q.shape[1]}, expected {m}"
            )
        self.Q = Q
        self.Px, self.Qx = Xu @ self.P, Xu @ Q
        self.Py, self.Qy = Yu @ self.P, Yu @ Q
        self._thevenin()
        self._equilibrium_maps()

    # ------------------------------------------------------------------
    def _thevenin(self):
        """Port form ``x = Z s - R_th y`` when the currents are free."""
        self.R_th = self.Z_th = None
        s = np.linalg.svd(self.Qy, compute_uv=False) if self.m else np.zeros(0)
        if s.size and s[-1] > 1e-9 * max(1.0, s[0]):
            Qyi = np.linalg.inv(self.Qy)
            R = -self.Qx @ Qyi
            R[np.abs(R) < 1e-12 * max(1.0, np.abs(R).max())] = 0.0
            self.R_th = R
            self.Z_th = self.Px - self.Qx @ Qyi @ self.Py

    def passivity_defect(self):
        """Largest eigenvalue of sym(Qx^T Qy); positive means the network can supply power."""
        Pi = self.Qx.T @ self.Qy
        Pi = 0.5 * (Pi + Pi.T)
        ev = np.linalg.eigvalsh(Pi) if Pi.size else np.zeros(1)
        scale = max(1.0, np.linalg.norm(self.Qx) * np.linalg.norm(self.Qy))
        return float(ev[-1]) / scale

    def _equilibrium_maps(self):
        """Static solution ``q = (p, i_R, i_L, v_C) = Pe (x, y) + Qe z`` with v_L = 0, i_C = 0."""
        nn, m, nR, nL, nC = self.nn, self.m, self.nR, self.nL, self.nC
        nq = nn + nR + nL + nC
        qp, qR, qL, qC = slice(0, nn), slice(nn, nn + nR), slice(nn + nR, nn + nR + nL), slice(nn + nR + nL, nq)
        self.qslices = {"p": qp, "iR": qR, "iL": qL, "vC": qC}
        rows, rhs = [], []
        K = np.zeros((nn, nq))
        K[:, qR] = self.A_R
        K[:, qL] = self.A_L
        Kb = np.zeros((nn, 2 * m))
        Kb[:, m:] = -self.S
        rows.append(K)
        rhs.append(Kb)
        O = np.zeros((nR, nq))
        O[:, qp] = self.A_R.T
        O[:, qR] = -np.diag(self.D_R)
        rows.append(O)
        rhs.append(np.zeros((nR, 2 * m)))
        Lr = np.zeros((nL, nq))
        Lr[:, qp] = self.A_L.T
        rows.append(Lr)
        rhs.append(np.zeros((nL, 2 * m)))
        Cr = np.zeros((nC, nq))
        Cr[:, qC] = np.eye(nC)
        Cr[:, qp] = -self.A_C.T
        rows.append(Cr)
        rhs.append(np.zeros((nC, 2 * m)))
        Tr = np.zeros((m, nq))
        Tr[:, qp] = self.S.T
        Tb = np.zeros((m, 2 * m))
        Tb[:, :m] = np.eye(m)
        rows.append(Tr)
        rhs.append(Tb)
        Me, Be = np.vstack(rows), np.vstack(rhs)
        self.Me, self.Be = Me, Be
        self.Pe = _linalg.pinv(Me) @ Be
        self.Qe = _linalg.null_space(Me)

    def equilibrium_state(self, x, y):
        """Minimum-norm static solution for terminal data ``x, y`` of shape (n, m).

        Returns ``(v_C, i_L, p, i_R, residual)``.
        """
        xy = np.hstack([np.atleast_2d(x), np.atleast_2d(y)])
        q = xy @ self.Pe.T
        res = float(np.max(np.abs(q @ self.Me.T - xy @ self.Be.T), initial=0.0))
        sl = self.qslices
        return q[:, sl["vC"]], q[:, sl["iL"]], q[:, sl["p"]], q[:, sl["iR"]], res

    # ------------------------------------------------------------------
    def split_state(self, s):
        s = np.atleast_2d(s)
        return s[:, : self.nC], s[:, self.nC:]

    def join_state(self, v_C, i_L):
        return np.hstack([np.atleast_2d(v_C), np.atleast_2d(i_L)])

    def consistency_residual(self, s):
        if self.constraints.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(np.atleast_2d(s) @ self.constraints.T)))

    def unknowns(self, s, w):
        """``u`` for states ``s`` (n, ns) and free coordinates ``w`` (n, m)."""
        return np.atleast_2d(s) @ self.P.T + np.atleast_2d(w) @ self.Q.T

    def branches(self, u, s):
        """Voltages and currents of every original component, each of shape (n, sigma)."""
        n = u.shape[0]
        comps = self.netlist.components
        sigma = len(comps)
        v = np.zeros((n, sigma))
        i = np.zeros((n, sigma))
        p = u[:, self.slices["p"]]
        pfull = np.hstack([p, np.zeros((n, 1))])  # class -1 -> ground column
        for j, c in enumerate(comps):
            a, b = self.node_class[c.plus], self.node_class[c.minus]
            v[:, j] = pfull[:, a] - pfull[:, b]
        i[:, self.R_idx] = u[:, self.slices["iR"]]
        i[:, self.C_idx] = u[:, self.slices["iC"]]
        v_C, i_L = self.split_state(s)
        i[:, self.L_idx] = i_L
        if self.wires:
            A = build_incidence(self.netlist)
            m = self.m
            inj = np.zeros((n, A.shape[0]))
            inj[:, :m] = u[:, self.slices["y"]]
            other = [j for j in range(sigma) if j not in set(self.wires)]
            r = -(i[:, other] @ A[:, other].T) - inj
            Aw = A[:, self.wires]
            sol, *_ = np.linalg.lstsq(Aw, r.T, rcond=None)
            i[:, self.wires] = sol.T
        return v, i

    def potentials(self, u):
        """Potentials of the original nodes 1..tau-1, shape (n, tau-1)."""
        p = u[:, self.slices["p"]]
        pfull = np.hstack([p, np.zeros((p.shape[0], 1))])
        return pfull[:, self.node_class[1:-1]]
