"""Convex function classes and first-order / proximal oracles.

Every oracle acts on flat float vectors.  ``prox(rho, z)`` returns
``argmin_u f(u) + ||u - z||^2 / (2 rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SubproblemDiverged, ZeroNormal

INF = float("inf")
PROX_TOL = 1e-12
PROX_MAXITER = 10_000


@dataclass(frozen=True)
class FunctionClass:
    """mu-strongly convex, M-smooth functions; ``FunctionClass(0, inf)`` is general CCP."""

    mu: float = 0.0
    M: float = INF

    def __post_init__(self):
        if self.mu < 0 or not self.M > 0 or self.mu > self.M:
            raise ValueError(f"invalid class mu={self.mu}, M={self.M}")

    @property
    def smooth(self):
        return np.isfinite(self.M)

    def __str__(self):
        return f"({self.mu:g}, {self.M:g})"


class FunctionOracle:
    fclass = FunctionClass()
    smooth = False

    def value(self, x):
        raise NotImplementedError

    def subgrad(self, x):
        """One element of the subdifferential."""
        raise NotImplementedError

    def grad(self, x):
        if not self.smooth:
            raise TypeError(f"{type(self).__name__} is not differentiable")
        return self.subgrad(x)

    def prox(self, rho, z):
        if not self.smooth:
            raise NotImplementedError(f"{type(self).__name__} has no prox")
        return agd_prox(self.grad, self.fclass.M, self.fclass.mu, rho, z)

    def affine(self):
        """``(H, p)`` with ``grad f(x) = H x + p`` when f is quadratic, else None."""
        return None

    def grad_conjugate(self, y):
        """The unique x with y in df(x) (needs strict convexity)."""
        raise NotImplementedError(f"{type(self).__name__} has no conjugate gradient")

    def __call__(self, x):
        return self.value(x)


def agd_prox(grad, M, mu, rho, z, x0=None, tol=PROX_TOL, maxiter=PROX_MAXITER):
    """Accelerated gradient on the strongly convex prox subproblem."""
    z = np.asarray(z, dtype=float)
    L = M + 1.0 / rho
    m = mu + 1.0 / rho
    q = np.sqrt(m / L)
    mom = (1 - q) / (1 + q)
    u = z.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    v = u.copy()
    scale = max(1.0, float(np.linalg.norm(z)))
    for _ in range(maxiter):
        g = grad(v) + (v - z) / rho
        un = v - g / L
        if np.linalg.norm(g) <= tol * scale * L / m:
            return un
        v = un + mom * (un - u)
        u = un
    raise SubproblemDiverged(f"prox subproblem not solved in {maxiter} iterations")


class Zero(FunctionOracle):
    fclass = FunctionClass(0.0, INF)
    smooth = True

    def value(self, x):
        return 0.0

    def subgrad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def prox(self, rho, z):
        return np.array(z, dtype=float)

    def affine(self):
        return 0.0, 0.0


class Quadratic(FunctionOracle):
    """``0.5 x'Qx + p'x + c`` with Q symmetric PSD."""

    smooth = True

    def __init__(self, Q, p=None, c=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Q = 0.5 * (Q + Q.T)
        self.Q = Q
        self.p = np.zeros(Q.shape[0]) if p is None else np.asarray(p, dtype=float)
        self.c = float(c)
        ev = np.linalg.eigvalsh(Q)
        if ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
            raise ValueError("Q must be positive semidefinite")
        self.fclass = FunctionClass(max(ev[0], 0.0), max(ev[-1], 1e-300))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.Q @ x + self.p @ x + self.c

    def subgrad(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.p

    def prox(self, rho, z):
        n = self.Q.shape[0]
        return np.linalg.solve(np.eye(n) + rho * self.Q, np.asarray(z, dtype=float) - rho * self.p)

    def affine(self):
        return self.Q, self.p

    def grad_conjugate(self, y):
        return np.linalg.solve(self.Q, np.asarray(y, dtype=float) - self.p)

    def minimizer(self):
        return np.linalg.solve(self.Q, -self.p)


class EuclideanDistance(FunctionOracle):
    """``||x - b||``, optionally plus ``||x - b||^2``."""

    def __init__(self, b, squared=False):
        self.b = np.asarray(b, dtype=float)
        self.squared = bool(squared)
        self.fclass = FunctionClass(2.0 if squared else 0.0, INF)

    def value(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float) - self.b)
        return r + r * r if self.squared else r

    def subgrad(self, x):
        d = np.asarray(x, dtype=float) - self.b
        r = np.linalg.norm(d)
        g = d / r if r > 0 else np.zeros_like(d)
        return g + 2 * d if self.squared else g

    def prox(self, rho, z):
        z = np.asarray(z, dtype=float)
        if self.squared:
            z = (z + 2 * rho * self.b) / (1 + 2 * rho)
            rho = rho / (1 + 2 * rho)
        d = self.b - z
        r = np.linalg.norm(d)
        if r <= rho:
            return self.b.copy()
        return self.b - d * (r - rho) / r


def _huber(t):
    a = np.abs(t)
    return np.where(a <= 1, t * t, 2 * a - 1)


def _huber_grad(t):
    return 2 * np.clip(t, -1.0, 1.0)


class Huber(FunctionOracle):
    """``sum_i phi(x_i - c_i)``, phi(t) = t^2 on [-1, 1] and 2|t| - 1 outside."""

    smooth = True
    fclass = FunctionClass(0.0, 2.0)

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, x):
        return float(np.sum(_huber(np.asarray(x, dtype=float) - self.c)))

    def subgrad(self, x):
        return _huber_grad(np.asarray(x, dtype=float) - self.c)

    def prox(self, rho, z):
        s = np.asarray(z, dtype=float) - self.c
        inner = s / (1 + 2 * rho)
        outer = s - 2 * rho * np.sign(s)
        return self.c + np.where(np.abs(s) <= 1 + 2 * rho, inner, outer)


def halfspace_prox(a, b, rho, z):
    """Projection onto ``{u : a'u <= b}`` (rho is irrelevant for an indicator)."""
    a = np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    na2 = float(a @ a)
    if na2 == 0.0:
        raise ZeroNormal("halfspace normal is zero")
    viol = a @ z - b
    if viol <= 0:
        return z.copy()
    return z - (viol / na2) * a


class HalfspaceIndicator(FunctionOracle):
    fclass = FunctionClass(0.0, INF)

    def __init__(self, a, b, tol=1e-9):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.tol = tol
        if not np.any(self.a):
            raise ZeroNormal("halfspace normal is zero")

    def value(self, x):
        viol = self.a @ np.asarray(x, dtype=float) - self.b
        return 0.0 if viol <= self.tol * max(1.0, abs(self.b)) else INF

    def subgrad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def prox(self, rho, z):
        return halfspace_prox(self.a, self.b, rho, z)


class SeparableSum(FunctionOracle):
    """``sum_j f_j(x_j)`` over contiguous blocks of equal or given sizes."""

    def __init__(self, parts: Sequence[FunctionOracle], sizes=None, dim=None):
        self.parts = list(parts)
        if sizes is None:
            if dim is None:
                raise ValueError("give block sizes or the per-block dimension")
            sizes = [dim] * len(self.parts)
        self.sizes = [int(s) for s in sizes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.smooth = all(p.smooth for p in self.parts)
        self.fclass = FunctionClass(
            min(p.fclass.mu for p in self.parts), max(p.fclass.M for p in self.parts)
        )

    def blocks(self, x):
        x = np.asarray(x, dtype=float)
        return [x[self.offsets[j]:self.offsets[j + 1]] for j in range(len(self.parts))]

    def value(self, x):
        return float(sum(p.value(b) for p, b in zip(self.parts, self.blocks(x))))

    def subgrad(self, x):
        return np.concatenate([p.subgrad(b) for p, b in zip(self.parts, self.blocks(x))])

    def grad(self, x):
        return np.concatenate([p.grad(b) for p, b in zip(self.parts, self.blocks(x))])

    def prox(self, rho, z):
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (len(self.parts),))
        return np.concatenate([p.prox(r, b) for p, r, b in zip(self.parts, rho, self.blocks(z))])

    def affine(self):
        pieces = [p.affine() for p in self.parts]
        if any(a is None for a in pieces):
            return None
        n = int(self.offsets[-1])
        H = np.zeros((n, n))
        q = np.zeros(n)
        for j, (Hj, pj) in enumerate(pieces):
            sl = slice(self.offsets[j], self.offsets[j + 1])
            H[sl, sl] = np.broadcast_to(Hj, (self.sizes[j], self.sizes[j])) if np.ndim(Hj) else Hj * np.eye(self.sizes[j])
            q[sl] = pj
        return H, q

    def grad_conjugate(self, y):
        return np.concatenate([p.grad_conjugate(b) for p, b in zip(self.parts, self.blocks(y))])


class HuberDual(FunctionOracle):
    """``phi(y) = f*(-A'y) + b'y`` with f the shifted Huber sum ``sum_i phi(x_i - c_i)``.

    Minimizing phi is the dual of ``min f(x) s.t. Ax = b``.  The conjugate of
    the Huber sum is ``sum u_i^2/4 + c'u`` restricted to ``|u_i| <= 2``.
    """

    def __init__(self, A, b, c):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        lmin = np.linalg.eigvalsh(self.A @ self.A.T)[0]
        self.fclass = FunctionClass(max(lmin, 0.0) / 2, INF)

    def value(self, y):
        u = -self.A.T @ np.asarray(y, dtype=float)
        if np.max(np.abs(u)) > 2 + 1e-9:
            return INF
        return float(u @ u / 4 + self.c @ u + self.b @ y)

    def subgrad(self, y):
        u = -self.A.T @ np.asarray(y, dtype=float)
        return -self.A @ (u / 2 + self.c) + self.b

    def primal_value(self, x):
        return float(np.sum(_huber(np.asarray(x) - self.c)))

    def argmin_lagrangian(self, ytil, rho, x0=None, tol=PROX_TOL, maxiter=200):
        """Minimize ``f(x) + ytil'(Ax-b) + rho/2 ||Ax-b||^2`` by damped semismooth Newton."""
        A, b, c = self.A, self.b, self.c
        x = c.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
        AtA = A.T @ A
        scale = max(1.0, float(np.linalg.norm(A.T @ ytil)), float(np.linalg.norm(b)))

        def phi(x):
            r = A @ x - b
            return np.sum(_huber(x - c)) + ytil @ r + 0.5 * rho * r @ r

        for _ in range(maxiter):
            r = A @ x - b
            g = _huber_grad(x - c) + A.T @ (ytil + rho * r)
            if np.linalg.norm(g) <= tol * scale:
                return x
            act = (np.abs(x - c) < 1).astype(float)
            H = rho * AtA
            H[np.diag_indices_from(H)] += 2 * act + 1e-10 * (1 + rho)
            d = -np.linalg.solve(H, g)
            f0, slope, t = phi(x), g @ d, 1.0
            while phi(x + t * d) > f0 + 1e-4 * t * slope and t > 1e-12:
                t *= 0.5
            if t <= 1e-12:
                break
            x = x + t * d
        r = A @ x - b
        g = _huber_grad(x - c) + A.T @ (ytil + rho * r)
        if np.linalg.norm(g) <= 1e3 * tol * scale:
            return x
        raise SubproblemDiverged("Huber augmented-Lagrangian subproblem did not converge")

    def prox(self, rho, z):
        z = np.asarray(z, dtype=float)
        x = self.argmin_lagrangian(z, rho)
        return z + rho * (self.A @ x - self.b)


def prox(oracle: FunctionOracle, rho, z):
    if not np.all(np.asarray(rho) > 0):
        raise ValueError("prox parameter must be positive")
    return oracle.prox(rho, z)


def moreau_grad(oracle: FunctionOracle, R, z):
    """Gradient of the Moreau envelope, ``(z - prox_{Rf}(z)) / R``."""
    z = np.asarray(z, dtype=float)
    return (z - prox(oracle, R, z)) / R
