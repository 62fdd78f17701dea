"""Solving the Gram SDP and turning its dual into a checkable certificate."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import CertificateInvalid, MaxIter
from .gram import GramProblem
from .sdp import solve_dual_form

FEAS_TOL = 1e-9  # matches EIG_TOL: the value is -lambda_min(Z) under the trace normalization
EIG_TOL = FEAS_TOL
RES_TOL = 1e-8
THETA = ("eta", "rho", "gamma")


@dataclass
class SdpSolution:
    status: str
    value: float
    G: np.ndarray
    F: np.ndarray
    lam: np.ndarray
    t: float
    theta: dict
    primal_value: float
    residuals: dict
    iterations: int

    @property
    def feasible(self):
        return self.status == "Optimal" and self.value <= FEAS_TOL


@dataclass
class Certificate:
    """Multipliers ``lam`` (one per constraint, labelled) and ``Z = sum lam A - C``."""

    lam: np.ndarray
    Z: np.ndarray
    labels: list
    theta: dict
    params: tuple
    report: dict = field(default_factory=dict)

    def to_json(self, **kw):
        data = {
            "params": dict(zip(("alpha", "beta", "h", "eta", "rho", "gamma"), self.params)),
            "theta": self.theta,
            "lambda": [{"label": [str(s) for s in lab], "value": float(v)} for lab, v in zip(self.labels, self.lam)],
            "Z_eigenvalues": np.linalg.eigvalsh(self.Z).tolist(),
            "residuals": self.report,
        }
        return json.dumps(data, **kw)


def _objective_parts(gp: GramProblem, theta):
    C = gp.C0.copy()
    mats = {"eta": gp.C_eta, "rho": gp.C_rho, "gamma": gp.C_gamma}
    for name in THETA:
        C += theta[name] * mats[name]
    return C, mats


def solve_sdp(gp: GramProblem, joint: dict | None = None, raise_maxiter=False, **fixed) -> SdpSolution:
    """Worst case of the one-step energy change under ``tr G <= 1``.

    ``joint`` maps any of eta/rho/gamma to ``(lo, hi)``; those multipliers are
    then chosen jointly with the dual to minimise the worst case.  Other
    multipliers come from ``fixed`` or the problem's parameters.
    """
    joint = dict(joint or {})
    p = gp.params
    theta = {k: float(fixed.get(k, getattr(p, k))) for k in THETA}
    for k in joint:
        theta[k] = 0.0
    B0, mats = _objective_parts(gp, theta)
    K, n = len(gp.constraints), gp.dim
    A = gp.A
    a = gp.a
    scale = np.maximum(np.sqrt(np.sum(A * A, axis=(1, 2)) + np.sum(a * a, axis=1)), 1e-300)
    names = list(joint)
    Bs = [A / scale[:, None, None], np.eye(n)[None]]
    Bs += [-mats[k][None] for k in names]
    B = np.concatenate(Bs, axis=0)
    pdim = B.shape[0]
    b = np.zeros(pdim)
    b[K] = 1.0
    rows, g = [], []
    for i in range(K):
        r = np.zeros(pdim)
        r[i] = 1.0
        rows.append(r)
        g.append(0.0)
    for j, k in enumerate(names):
        lo, hi = joint[k]
        r = np.zeros(pdim)
        r[K + 1 + j] = 1.0
        rows.append(r)
        g.append(lo)
        if np.isfinite(hi):
            rows.append(-r)
            g.append(-hi)
    G_lp = np.array(rows).reshape(len(rows), pdim)
    E = np.hstack([(a / scale[:, None]).T, np.zeros((gp.nF, pdim - K))])
    res = solve_dual_form(B, B0, b, G=G_lp, g=np.array(g), E=E, d=gp.cF)
    if res.status == "MaxIter" and raise_maxiter:
        raise MaxIter("interior-point iteration cap reached")
    lam = res.y[:K] / scale
    t = float(res.y[K])
    for j, k in enumerate(names):
        theta[k] = float(res.y[K + 1 + j])
    Gm = res.X
    ev = np.linalg.eigvalsh(Gm)
    Fv = res.v
    return SdpSolution(
        status=res.status, value=res.dobj, G=Gm, F=Fv, lam=lam, t=t, theta=theta,
        primal_value=res.pobj, residuals={**res.residuals, "G_min_eig": float(ev[0])},
        iterations=res.iterations,
    )


def extract_certificate(gp: GramProblem, sol: SdpSolution) -> Certificate:
    if sol.status != "Optimal":
        raise CertificateInvalid(f"solver status {sol.status}")
    C, _ = _objective_parts(gp, sol.theta)
    lam = np.maximum(sol.lam, 0.0)
    Z = np.tensordot(lam, gp.A, axes=1) - C
    Z = 0.5 * (Z + Z.T)
    cert = Certificate(lam, Z, [c.label for c in gp.constraints], dict(sol.theta), gp.params.as_tuple())
    cert.report = check_certificate(gp, cert)
    return cert


def check_certificate(gp: GramProblem, cert: Certificate) -> dict:
    C, _ = _objective_parts(gp, cert.theta)
    rF = np.tensordot(cert.lam, gp.a, axes=1) - gp.cF
    rG = C - np.tensordot(cert.lam, gp.A, axes=1) + cert.Z
    return {
        "identity_F": float(np.max(np.abs(rF), initial=0.0)),
        "identity_G": float(np.max(np.abs(rG), initial=0.0)),
        "lambda_min": float(np.min(cert.lam, initial=0.0)),
        "Z_min_eig": float(np.linalg.eigvalsh(cert.Z)[0]) if cert.Z.size else 0.0,
    }


def verify_certificate(gp: GramProblem, cert: Certificate, raise_on_failure=False) -> bool:
    """Check the dual identities, the sign of lambda and the PSD-ness of Z."""
    r = check_certificate(gp, cert)
    cert.report = r
    problems = []
    if r["identity_F"] > RES_TOL:
        problems.append(f"function-value identity residual {r['identity_F']:.3g}")
    if r["identity_G"] > RES_TOL:
        problems.append(f"Gram identity residual {r['identity_G']:.3g}")
    if r["lambda_min"] < 0:
        problems.append(f"negative multiplier {r['lambda_min']:.3g}")
    if r["Z_min_eig"] < -EIG_TOL:
        problems.append(f"Z has eigenvalue {r['Z_min_eig']:.3g}")
    if problems and raise_on_failure:
        raise CertificateInvalid("; ".join(problems))
    return not problems
