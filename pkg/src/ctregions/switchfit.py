"""Switching times by bisection and cubic polynomial surrogates per region."""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DomainError, InsufficientSamplesError
from .linalg import least_squares
from .model import ARC_BY_REGION
from .tpbvp import bound_state_at, free_gain, free_gains

BISECT_ITERS = 60


def junction_residual(sys, x0, bound_sign, t):
    """``sigma`` at ``t`` of a free arc started from the bound-arc state, minus the band edge."""
    x_t = bound_state_at(sys, x0, bound_sign, t)
    K = free_gain(sys, sys.t_f - t).K_f
    return float(sys.B @ K @ x_t) - bound_sign * sys.u_max


def switching_time(sys, x0, bound_sign, iters=BISECT_ITERS):
    """Junction time of a "bound arc then free arc" trajectory from ``x0``."""
    if bound_sign not in (1, -1):
        raise DomainError("bound_sign must be +1 or -1")
    x0 = np.asarray(x0, dtype=float)
    lo, hi = 0.0, sys.t_f
    r_lo = junction_residual(sys, x0, bound_sign, lo)
    if abs(r_lo) <= 1e-10:
        return 0.0
    r_hi = junction_residual(sys, x0, bound_sign, hi)
    if np.sign(r_lo) == np.sign(r_hi):
        raise BracketError(f"no sign change of the junction residual on [0, {sys.t_f}]")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        r_mid = junction_residual(sys, x0, bound_sign, mid)
        if np.sign(r_mid) == np.sign(r_lo):
            lo, r_lo = mid, r_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def switching_times(sys, X0, bound_sign, iters=BISECT_ITERS):
    """Vectorised :func:`switching_time` over the rows of ``X0``."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    m = len(X0)
    B, um = sys.B, sys.u_max

    def resid(t):
        x_t = bound_state_at(sys, X0, bound_sign, t)
        K = free_gains(sys, sys.t_f - t)
        return np.einsum("i,mij,mj->m", B, K, x_t) - bound_sign * um

    lo = np.zeros(m)
    hi = np.full(m, sys.t_f)
    r_lo = resid(lo)
    r_hi = resid(hi)
    done = np.abs(r_lo) <= 1e-10
    bad = ~done & (np.sign(r_lo) == np.sign(r_hi))
    if bad.any():
        raise BracketError(f"{bad.sum()} point(s) without a sign change of the junction residual",)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        same = np.sign(resid(mid)) == np.sign(r_lo)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return np.where(done, 0.0, 0.5 * (lo + hi))


def monomials(n, degree):
    """Exponent tuples of total degree at most ``degree``, constant first."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=n) if sum(e) <= degree]
    return sorted(exps, key=lambda e: (sum(e), tuple(-v for v in e)))


def design_matrix(X, exps):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    E = np.array(exps)
    return np.prod(X[:, None, :] ** E[None, :, :], axis=2)


@dataclass
class SwitchTimeFit:
    region_id: str
    exponents: list
    coefficients: np.ndarray
    r_squared: float
    t_s_min: float
    t_s_max: float
    samples: int
    X: np.ndarray = None
    t_s: np.ndarray = None

    def predict(self, X):
        return design_matrix(X, self.exponents) @ self.coefficients

    def to_json(self, extra=None):
        doc = {"region": self.region_id, "r_squared": self.r_squared,
               "t_s_min": self.t_s_min, "t_s_max": self.t_s_max, "samples": self.samples,
               "terms": [{"exponents": list(e), "coefficient": float(c)}
                         for e, c in zip(self.exponents, self.coefficients)]}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def samples_csv(self):
        n = self.X.shape[1]
        lines = [",".join([f"x0{i + 1}" for i in range(n)] + ["t_s"])]
        lines += [",".join(f"{v:.12e}" for v in (*x, t)) for x, t in zip(self.X, self.t_s)]
        return "\n".join(lines) + "\n"


def fit_samples(X, t, degree=3, region_id=""):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(t, dtype=float)
    exps = monomials(X.shape[1], degree)
    coef, r2 = least_squares(design_matrix(X, exps), t)
    return SwitchTimeFit(region_id, exps, coef, float(r2), float(t.min()), float(t.max()),
                         len(t), X, t)


def fit_region(sys, p, region_id, samples=2000, seed=0, degree=3, max_draws=400000):
    """Fit ``t_s(x0)`` over a transitional region from low-discrepancy samples."""
    from .partition import sample_region

    arc = ARC_BY_REGION[region_id]
    if not arc.transitional:
        raise DomainError(f"{region_id} has no switching time")
    required = 2 * len(monomials(sys.n, degree))
    X = sample_region(sys, p, region_id, samples, seed=seed, max_draws=max_draws)
    if len(X) < required:
        raise InsufficientSamplesError(
            f"{region_id}: {len(X)} accepted samples, need at least {required}",
            accepted=len(X), required=required, drawn=max_draws)
    t = switching_times(sys, X, arc.bound_sign)
    return fit_samples(X, t, degree, region_id)
