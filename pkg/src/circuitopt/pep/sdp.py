"""Dense primal-dual interior-point solver for small SDPs with one matrix block.

Dual form (the one we build)::

    minimize    b'y
    subject to  Z = sum_i y_i B_i - B0  is PSD
                z = G y - g            >= 0
                E y = d

Primal form::

    maximize    <B0, X> + g'x + d'v
    subject to  <B_i, X> + (G'x)_i + (E'v)_i = b_i,   X PSD, x >= 0

Infeasible-start Mehrotra predictor-corrector with the HKM search direction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .. import _linalg

MAXITER = 500
UNBOUNDED = 1e8


@dataclass
class ConeResult:
    status: str
    y: np.ndarray
    Z: np.ndarray
    z: np.ndarray
    X: np.ndarray
    x: np.ndarray
    v: np.ndarray
    pobj: float
    dobj: float
    iterations: int
    residuals: dict


def _sym(A):
    return 0.5 * (A + A.T)


def _max_step(S, dS):
    """Largest a with S + a dS PSD (inf if never violated)."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(len(S)), lower=True)
    M = _sym(Li @ dS @ Li.T)
    lam = np.linalg.eigvalsh(M)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(s, ds):
    neg = ds < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-s[neg] / ds[neg]))


def independent_rows(E, d, tol=1e-10):
    """Indices of a maximal independent subset of the equality rows."""
    if E.shape[0] == 0:
        return np.arange(0)
    q, r, piv = sla.qr(E.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return np.arange(0)
    k = int(np.sum(diag > tol * diag[0]))
    return np.sort(piv[:k])


def solve_dual_form(B, B0, b, G=None, g=None, E=None, d=None, tol=1e-9,
                    maxiter=MAXITER, unbounded=UNBOUNDED):
    """Solve the problem above; ``B`` has shape (p, n, n)."""
    B = np.asarray(B, dtype=float)
    p, n, _ = B.shape
    B0 = np.asarray(B0, dtype=float)
    b = np.asarray(b, dtype=float)
    G = np.zeros((0, p)) if G is None else np.asarray(G, dtype=float)
    g = np.zeros(G.shape[0]) if g is None else np.asarray(g, dtype=float)
    E = np.zeros((0, p)) if E is None else np.asarray(E, dtype=float)
    d = np.zeros(E.shape[0]) if d is None else np.asarray(d, dtype=float)
    ne_full = E.shape[0]
    keep = independent_rows(E, d)
    E, d = E[keep], d[keep]
    nl, ne = G.shape[0], E.shape[0]
    Bf = B.reshape(p, n * n)

    def Aop(y):
        return np.tensordot(y, B, axes=1)

    def Aadj(X):
        return Bf @ X.ravel()

    normB = 1.0 + max(np.linalg.norm(B0), np.max(np.linalg.norm(Bf, axis=1), initial=0.0))
    normb = 1.0 + np.linalg.norm(b)
    X = np.eye(n)
    Z = normB * np.eye(n) / np.sqrt(n)
    x = np.ones(nl)
    z = np.ones(nl) * max(1.0, normB / np.sqrt(n))
    y = np.zeros(p)
    v = np.zeros(ne)
    nu = n + nl
    status = "MaxIter"
    it = 0
    best = None
    stall = 0
    for it in range(1, maxiter + 1):
        r_p = b - Aadj(X) - G.T @ x - E.T @ v
        R_d = Aop(y) - B0 - Z
        r_l = G @ y - g - z
        r_e = E @ y - d
        pobj = float(np.sum(B0 * X) + g @ x + d @ v)
        dobj = float(b @ y)
        gap = float(np.sum(X * Z) + x @ z)
        pinf = np.linalg.norm(r_p) / normb
        dinf = max(np.linalg.norm(R_d), np.linalg.norm(r_l) if nl else 0.0,
                   np.linalg.norm(r_e) if ne else 0.0) / normB
        score = max(pinf, dinf, abs(gap) / (1 + abs(pobj) + abs(dobj)))
        if best is None or score < best[0]:
            best = (score, y.copy(), Z.copy(), z.copy(), X.copy(), x.copy(), v.copy(), pobj, dobj, pinf, dinf, gap)
        if pinf < tol and dinf < tol and gap < tol * (1 + abs(pobj) + abs(dobj)):
            status = "Optimal"
            break
        if pobj > unbounded:
            status = "Unbounded"
            break
        if np.linalg.norm(y) > 1e14 or np.linalg.norm(X) > 1e14:
            status = "Infeasible"
            break
        mu = gap / nu
        try:
            Lz = np.linalg.cholesky(Z)
        except np.linalg.LinAlgError:
            status = "NumericalError"
            break
        Zi = sla.cho_solve((Lz, True), np.eye(n))
        Zi = _sym(Zi)
        # Schur complement M_ij = tr(B_i X B_j Z^-1)
        XB = np.einsum("ab,pbc->pac", X, B)
        XBZ = XB @ Zi
        H = Bf @ XBZ.transpose(0, 2, 1).reshape(p, n * n).T
        H = _sym(H)
        if nl:
            H += G.T @ ((x / z)[:, None] * G)
        H[np.diag_indices_from(H)] += 1e-14 * max(1.0, np.max(np.abs(np.diag(H))))
        try:
            cH = sla.cho_factor(H)
            Hsolve = lambda r: sla.cho_solve(cH, r)  # noqa: E731
        except np.linalg.LinAlgError:
            Hi = _linalg.pinv(H, 1e-14)
            Hsolve = lambda r: Hi @ r  # noqa: E731
        if ne:
            HiEt = Hsolve(E.T)
            S = _sym(E @ HiEt)
            cS = sla.cho_factor(S + 1e-14 * np.eye(ne) * max(1.0, np.max(np.abs(np.diag(S)))))
        XRZ = X @ R_d @ Zi

        def direction(sig_mu, corr, corr_l):
            Rc = sig_mu * Zi - X - (corr @ Zi if corr is not None else 0.0)
            rhs = Aadj(Rc - XRZ) - r_p
            if nl:
                cl = corr_l if corr_l is not None else 0.0
                rhs = rhs + G.T @ ((sig_mu - x * z - cl) / z - (x / z) * r_l)
            if ne:
                w0 = Hsolve(rhs)
                dv = sla.cho_solve(cS, -r_e - E @ w0)
                dy = w0 + HiEt @ dv
            else:
                dv = np.zeros(0)
                dy = Hsolve(rhs)
            dZ = R_d + Aop(dy)
            dX = _sym(Rc - X @ dZ @ Zi)
            if nl:
                dz = r_l + G @ dy
                cl = corr_l if corr_l is not None else 0.0
                dx = (sig_mu - x * z - cl) / z - (x / z) * dz
            else:
                dz = dx = np.zeros(0)
            return dX, dx, dv, dy, dZ, dz

        # predictor
        dX, dx, dv, dy, dZ, dz = direction(0.0, None, None)
        ap = min(1.0, _max_step(X, dX), _max_step_lp(x, dx))
        ad = min(1.0, _max_step(Z, dZ), _max_step_lp(z, dz))
        mu_aff = (np.sum((X + ap * dX) * (Z + ad * dZ)) + (x + ap * dx) @ (z + ad * dz)) / nu
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0
        # corrector
        dX, dx, dv, dy, dZ, dz = direction(sigma * mu, dX @ dZ, dx * dz if nl else None)
        ap = min(1.0, 0.98 * _max_step(X, dX), 0.98 * _max_step_lp(x, dx))
        ad = min(1.0, 0.98 * _max_step(Z, dZ), 0.98 * _max_step_lp(z, dz))
        X = _sym(X + ap * dX)
        x = x + ap * dx
        v = v + ap * dv
        y = y + ad * dy
        Z = _sym(Z + ad * dZ)
        z = z + ad * dz
        # progress limited by linear-algebra precision near the optimum
        stall = stall + 1 if min(ap, ad) < 1e-2 and score < 1e-7 else 0
        if stall >= 3 or max(ap, ad) < 1e-12:
            status = "Stalled"
            break
    if status != "Optimal":
        score, y, Z, z, X, x, v, pobj, dobj, pinf, dinf, gap = best
        if status in ("MaxIter", "Stalled", "NumericalError") and score < 1e-7:
            status = "Optimal"
    v_full = np.zeros(ne_full)
    v_full[keep] = v
    return ConeResult(status, y, Z, z, X, x, v_full, pobj, dobj, it,
                      {"primal": float(pinf), "dual": float(dinf), "gap": float(gap)})
