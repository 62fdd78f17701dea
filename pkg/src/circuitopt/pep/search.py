"""Searching discretization parameters that the Gram SDP certifies."""
from __future__ import annotations

import itertools
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..discretize import DiscretizationParams
from ..errors import NoFeasibleParams
from .certificate import FEAS_TOL, THETA, Certificate, extract_certificate, solve_sdp, verify_certificate
from .gram import GramProblem, build_pep
from .sampling import SampledDescent, sampled_descent

log = logging.getLogger(__name__)

GRID = (0.0, 0.5, 1.0)
BACKOFF = (0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5)


@dataclass(frozen=True)
class SearchBounds:
    h: tuple = (1e-3, 20.0)
    eta: tuple = (1e-6, 100.0)
    rho: tuple = (0.0, 0.0)
    gamma: tuple = (0.0, 0.0)
    alpha: tuple = (0.0, 1.0)
    beta: tuple = (0.0, 1.0)

    def __post_init__(self):
        for name in ("h", "eta", "rho", "gamma", "alpha", "beta"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"bounds on {name} must be finite with lo <= hi")
        if self.h[0] <= 0 or self.eta[0] <= 0:
            raise ValueError("h and eta must stay positive")


@dataclass
class SearchResult:
    params: DiscretizationParams
    certificate: Certificate
    gram: GramProblem
    value: float
    h_upper: float | None = None
    sampled: SampledDescent | None = None
    warnings: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _threads(threads):
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("CIRCUITOPT_THREADS", os.cpu_count() or 1)))


class _Oracle:
    """Feasibility probes for one template; every probe is recorded."""

    def __init__(self, template, classes, bounds: SearchBounds, nets, spec):
        self.template, self.classes, self.bounds = template, classes, bounds
        self.nets, self.spec = nets, spec
        self.history = []

    def _params(self, a, b, h, eta=None):
        bd = self.bounds
        return DiscretizationParams(a, b, h, bd.eta[0] if eta is None else eta, bd.rho[0], bd.gamma[0])

    def probe(self, a, b, h, eta=None):
        """Worst-case value with the free multipliers chosen jointly (eta too unless given)."""
        bd = self.bounds
        gp = build_pep(self.template, self._params(a, b, h, eta), self.classes, self.nets, self.spec)
        joint = {k: getattr(bd, k) for k in THETA if getattr(bd, k)[1] > getattr(bd, k)[0]}
        if eta is not None:
            joint.pop("eta", None)
        sol = solve_sdp(gp, joint=joint)
        ok = sol.status == "Optimal" and sol.value <= FEAS_TOL
        self.history.append({"alpha": a, "beta": b, "h": h, "eta": eta, "value": sol.value,
                             "status": sol.status, "feasible": ok})
        return ok, gp, sol

    def largest_h(self, a, b, lo=None, rel=1e-4, maxit=40):
        bd = self.bounds
        lo = bd.h[0] if lo is None else lo
        hi = bd.h[1]
        warn = []
        if self.probe(a, b, hi)[0]:
            return hi, warn
        if not self.probe(a, b, lo)[0]:
            return None, warn
        for _ in range(maxit):
            if hi - lo <= rel * hi:
                break
            mid = 0.5 * (lo + hi)
            if self.probe(a, b, mid)[0]:
                lo = mid
            else:
                hi = mid
        return lo, warn

    def largest_eta(self, a, b, h, rel=1e-4, maxit=40):
        lo, hi = self.bounds.eta
        if self.probe(a, b, h, hi)[0]:
            return hi
        if not self.probe(a, b, h, lo)[0]:
            return None
        for _ in range(maxit):
            if hi - lo <= rel * hi:
                break
            mid = 0.5 * (lo + hi)
            if self.probe(a, b, h, mid)[0]:
                lo = mid
            else:
                hi = mid
        return lo


def _grid(lo, hi):
    vals = sorted({float(np.clip(v, lo, hi)) for v in GRID})
    return vals


def search_params(template, classes, bounds: SearchBounds | None = None, nets=None, spec=None,
                  threads=None, samples=1000, sample_steps=10, relaxation=True, seed=0) -> SearchResult:
    """Largest certified ``h`` over an (alpha, beta) grid, then the largest ``eta`` there.

    Returned parameters pass ``verify_certificate`` and the sampled-instance
    descent check; otherwise the step is backed off before giving up.
    """
    bounds = bounds or SearchBounds()
    orc = _Oracle(template, classes, bounds, nets, spec)
    pairs = []
    for a, b in itertools.product(_grid(*bounds.alpha), _grid(*bounds.beta)):
        if b == 1.0:
            a = bounds.alpha[0]  # the second stage drops out
        if (a, b) not in pairs:
            pairs.append((a, b))
    with ThreadPoolExecutor(_threads(threads)) as ex:
        found = list(ex.map(lambda ab: (ab, *orc.largest_h(*ab)), pairs))
    warnings = [w for _, _, ws in found for w in ws]
    found = [(ab, h) for ab, h, _ in found if h is not None]
    if not found:
        raise NoFeasibleParams(f"no (alpha, beta) pair is certified even at h = {bounds.h[0]:g}")
    (a, b), h = max(found, key=lambda t: (t[1], -t[0][1], -t[0][0]))

    # one coordinate-polish pass around the best grid point
    for which, delta in itertools.product(("alpha", "beta"), (-0.25, 0.25)):
        a2, b2 = (a + delta, b) if which == "alpha" else (a, b + delta)
        lo_a, hi_a = bounds.alpha
        lo_b, hi_b = bounds.beta
        if not (lo_a <= a2 <= hi_a and lo_b <= b2 <= hi_b) or (a2, b2) in pairs:
            continue
        step = h * (1 + 1e-3)
        if step <= bounds.h[1] and orc.probe(a2, b2, step)[0]:
            h2, _ = orc.largest_h(a2, b2, lo=step)
            if h2 is not None and h2 > h:
                (a, b), h = (a2, b2), h2

    for shrink in BACKOFF:
        hh = max(bounds.h[0], h * (1 - shrink))
        eta = orc.largest_eta(a, b, hh)
        if eta is None:
            continue
        for eshrink in (0.0, 1e-3, 1e-2, 0.1):
            ee = max(bounds.eta[0], eta * (1 - eshrink))
            ok, gp, sol = orc.probe(a, b, hh, ee)
            if not ok:
                continue
            p = DiscretizationParams(a, b, hh, ee, sol.theta["rho"], sol.theta["gamma"])
            gp = build_pep(template, p, classes, nets, spec)
            sol = solve_sdp(gp)
            if sol.status != "Optimal":
                continue
            cert = extract_certificate(gp, sol)
            if not verify_certificate(gp, cert):
                continue
            sampled = None
            if samples:
                sampled = sampled_descent(template, p, classes, nets, spec, instances=samples,
                                          K=sample_steps, seed=seed)
                if not sampled.passed:
                    continue
            if shrink or eshrink:
                warnings.append(f"backed off to h={hh:.6g}, eta={ee:.6g} to pass verification")
            upper = None
            if relaxation:
                try:
                    upper = relaxation_bound(template, classes, a, b, bounds, nets, spec)
                except Exception as exc:  # relaxation is informative only
                    warnings.append(f"relaxation bound unavailable: {exc}")
            return SearchResult(p, cert, gp, sol.value, upper, sampled, warnings, orc.history)
        if shrink == BACKOFF[-1]:
            break
    raise NoFeasibleParams("no candidate passed the final verification")


# ----------------------------------------------------------------------------
# convex relaxation of the joint problem in (lambda, eta, h)

DEGREE = 4


def _poly_fit(template, classes, a, b, nets, spec, h_hi, eta=1.0):
    """Coefficient matrices of the raw problem as polynomials in ``t = h / h_hi``."""
    ts = np.linspace(0.0, 1.0, DEGREE + 1)
    probs = [build_pep(template, DiscretizationParams.unchecked(a, b, t * h_hi, eta), classes, nets, spec,
                       compress=False) for t in ts]
    Vi = np.linalg.inv(np.vander(ts, DEGREE + 1, increasing=True))

    def fit(stack):
        return np.tensordot(Vi, np.asarray(stack), axes=1)

    return fit([g.C0 for g in probs]), fit([g.C_eta for g in probs]), fit([g.A for g in probs]), probs[0].a


def relaxation_bound(template, classes, a, b, bounds: SearchBounds, nets=None, spec=None) -> float:
    """Upper bound on the certifiable ``h`` for fixed (alpha, beta).

    Every product of an unknown with a power of ``h`` is replaced by its own
    variable; moment and localizing matrices keep the lifting consistent with
    ``h in [h_lo, h_hi]``, ``lambda >= 0`` and ``eta`` within its bounds.
    """
    import cvxpy as cp

    h_lo, h_hi = bounds.h
    lo, hi = h_lo / h_hi, 1.0
    C0, Ce, A, a_ = _poly_fit(template, classes, a, b, nets, spec, h_hi)
    K = A.shape[1]
    y = cp.Variable(DEGREE + 1)  # moments 1, t, ..., t^4
    mu = cp.Variable((K, DEGREE + 1))
    nu = cp.Variable(DEGREE + 1)
    cons = [y[0] == 1]

    def hankel(v):
        return cp.bmat([[v[0], v[1], v[2]], [v[1], v[2], v[3]], [v[2], v[3], v[4]]])

    def loc(v):  # (t - lo)(hi - t) [1 t; t t^2]
        w = [-(lo * hi) * v[i] + (lo + hi) * v[i + 1] - v[i + 2] for i in range(3)]
        return cp.bmat([[w[0], w[1]], [w[1], w[2]]])

    cons += [hankel(y) >> 0, loc(y) >> 0]
    for k in range(K):
        cons += [hankel(mu[k]) >> 0, loc(mu[k]) >> 0]
    cons += [hankel(nu - bounds.eta[0] * y) >> 0, hankel(bounds.eta[1] * y - nu) >> 0]
    S = 0
    for k in range(K):
        for d in range(DEGREE + 1):
            if np.any(np.abs(A[d, k]) > 1e-12):
                S = S + mu[k, d] * A[d, k]
    for d in range(DEGREE + 1):
        S = S - y[d] * C0[d] - nu[d] * Ce[d]
    cons += [0.5 * (S + S.T) >> 0]
    for d in range(DEGREE + 1):
        cons += [a_.T @ mu[:, d] == 0]
    prob = cp.Problem(cp.Maximize(y[1]), cons)
    for solver in ("CLARABEL", "SCS"):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in ("optimal", "optimal_inaccurate"):
            return float(min(h_hi, y.value[1] * h_hi))
        if prob.status in ("infeasible", "infeasible_inaccurate"):
            return float(h_lo)
    return float(h_hi)
