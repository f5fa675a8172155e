"""Sampled-data counterpart: exact ZOH problem, condensed QP and its explicit solution."""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .errors import BudgetError, DomainError, ModelError
from .geometry import Polytope3, box_halfspaces, volume
from .linalg import mat_exp

log = logging.getLogger(__name__)

MAX_NODES = 12
VOLUME_MIN = 1e-9


@dataclass(frozen=True)
class DtProblem:
    N: int
    T_s: float
    Ad: np.ndarray
    Bd: np.ndarray
    Qbar: np.ndarray
    Rbar: float
    Sbar: np.ndarray
    u_max: float
    terminal: np.ndarray


def zoh_cost_blocks(A, B, T):
    """Exact ZOH discretisation with the integrated stage cost.

    Returns ``Ad, Bd, Qbar, Sbar, Rbar`` such that the integral over one step
    of ``x'x + u^2`` under a held input equals
    ``x_k' Qbar x_k + 2 x_k' Sbar u_k + Rbar u_k^2``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).ravel()
    n = A.shape[0]
    Ac = np.zeros((n + 1, n + 1))
    Ac[:n, :n] = A
    Ac[:n, n] = B
    C = np.eye(n + 1)
    M = np.zeros((2 * n + 2, 2 * n + 2))
    M[:n + 1, :n + 1] = -Ac.T
    M[:n + 1, n + 1:] = C
    M[n + 1:, n + 1:] = Ac
    E = mat_exp(M, T)
    F22 = E[n + 1:, n + 1:]
    W = F22.T @ E[:n + 1, n + 1:]
    W = 0.5 * (W + W.T)
    return F22[:n, :n], F22[:n, n], W[:n, :n], W[:n, n], float(W[n, n])


def discretize(sys, N):
    N = int(N)
    if N < 1:
        raise DomainError("N must be at least 1")
    T = sys.t_f / N
    Ad, Bd, Q, S, R = zoh_cost_blocks(sys.A, sys.B, T)
    return DtProblem(N, T, Ad, Bd, Q, R, S, sys.u_max, np.eye(sys.n))


def prediction_matrices(dt):
    """``x_k = Phi[k] x0 + G[k] u`` for ``k = 0..N``."""
    n, N = dt.Ad.shape[0], dt.N
    Phi = np.empty((N + 1, n, n))
    G = np.zeros((N + 1, n, N))
    Phi[0] = np.eye(n)
    for k in range(1, N + 1):
        Phi[k] = dt.Ad @ Phi[k - 1]
        G[k] = dt.Ad @ G[k - 1]
        G[k][:, k - 1] += dt.Bd
    return Phi, G


def condense(dt):
    """Return ``(H, F)`` with cost ``1/2 u'Hu + x0'F u + const(x0)``."""
    Phi, G = prediction_matrices(dt)
    N = dt.N
    n = dt.Ad.shape[0]
    H = np.zeros((N, N))
    F = np.zeros((n, N))
    eye_N = np.eye(N)
    for k in range(N):
        e = eye_N[k]
        GS = G[k].T @ dt.Sbar
        H += G[k].T @ dt.Qbar @ G[k] + np.outer(GS, e) + np.outer(e, GS) + dt.Rbar * np.outer(e, e)
        F += Phi[k].T @ dt.Qbar @ G[k] + np.outer(Phi[k].T @ dt.Sbar, e)
    H += G[N].T @ dt.terminal @ G[N]
    F += Phi[N].T @ dt.terminal @ G[N]
    H = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise ModelError("condensed Hessian is not positive definite") from None
    return H, F


def solve_box_qp(H, g, u_max, max_iter=None):
    """Minimise ``1/2 u'Hu + g'u`` subject to ``|u_i| <= u_max``.

    Primal active-set iteration started from the unconstrained optimum; a
    bounded least-squares solve takes over if it cycles.
    """
    N = len(g)
    max_iter = max_iter or 10 * N + 10
    state = np.zeros(N, dtype=int)           # -1 lower, 0 free, +1 upper
    for _ in range(max_iter):
        free = state == 0
        u = state * u_max * 1.0
        if free.any():
            rhs = -g[free] - H[np.ix_(free, ~free)] @ u[~free]
            u[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        over = free & (np.abs(u) > u_max * (1 + 1e-12))
        if over.any():
            viol = np.where(over, np.abs(u) - u_max, -np.inf)
            k = int(np.argmax(viol))
            state[k] = int(np.sign(u[k]))
            continue
        grad = H @ u + g
        # KKT: at an upper bound the gradient must be <= 0, at a lower bound >= 0
        mult = np.where(state != 0, -state * grad, np.inf)
        k = int(np.argmin(mult))
        if mult[k] < -1e-12:
            state[k] = 0
            continue
        return u, state
    L = np.linalg.cholesky(H)
    res = lsq_linear(L.T, -np.linalg.solve(L, g), bounds=(-u_max, u_max),
                     method="bvls", tol=1e-14)
    u = res.x
    state = np.where(u >= u_max * (1 - 1e-9), 1, np.where(u <= -u_max * (1 - 1e-9), -1, 0))
    return u, state


@dataclass
class DtRegion:
    """One critical region of the explicit solution, ``u = gains @ x0 + offsets``."""

    pattern: tuple
    gains: np.ndarray
    offsets: np.ndarray
    polytope: Polytope3
    volume: float = 0.0
    chebyshev_radius: float = 0.0

    @property
    def halfspaces(self):
        return self.polytope.halfspaces

    def contains(self, x, tol=1e-9):
        return self.polytope.contains(x, tol)

    def law(self, x0):
        return self.gains @ np.asarray(x0, dtype=float) + self.offsets

    @property
    def pattern_text(self):
        return "".join({0: "0", 1: "U", -1: "L"}[p] for p in self.pattern)


@dataclass
class DtExplicitSolution:
    N: int
    problem: DtProblem
    regions: list
    patterns_tested: int
    lp_survivors: int
    skipped: list = field(default_factory=list)
    candidates: list = field(default_factory=list)   # (pattern, volume, radius) of LP survivors

    def locate(self, x0, tol=1e-9):
        hits = [r for r in self.regions if r.contains(x0, tol)]
        return hits


def _pattern_law(H, F, pattern, u_max):
    pat = np.asarray(pattern)
    act = pat != 0
    free = ~act
    N, n = H.shape[0], F.shape[0]
    K = np.zeros((N, n))
    c = np.zeros(N)
    c[act] = pat[act] * u_max
    if free.any():
        Hff = H[np.ix_(free, free)]
        rhs_x = -F[:, free].T
        rhs_c = -H[np.ix_(free, act)] @ c[act]
        sol = np.linalg.solve(Hff, np.column_stack([rhs_x, rhs_c]))
        K[free] = sol[:, :n]
        c[free] = sol[:, n]
    return K, c


def pattern_halfspaces(H, F, pattern, u_max, lo, hi):
    """Affine law and candidate region of a fixed active pattern.

    Rows: multiplier signs on active nodes, bounds on free nodes, then the box.
    """
    pat = np.asarray(pattern)
    K, c = _pattern_law(H, F, pattern, u_max)
    rows, offs = [], []
    # gradient of the cost: H u + F' x0 = (H K + F') x0 + H c
    GK = H @ K + F.T
    Gc = H @ c
    for k in range(len(pat)):
        if pat[k] != 0:
            # multiplier nu_k = -pat_k * grad_k >= 0
            rows.append(pat[k] * GK[k])
            offs.append(-pat[k] * Gc[k])
        else:
            rows.append(K[k])
            offs.append(u_max - c[k])
            rows.append(-K[k])
            offs.append(u_max + c[k])
    Gb, bb = box_halfspaces(lo, hi)
    G = np.vstack([np.array(rows).reshape(-1, F.shape[0]), Gb])
    b = np.concatenate([np.array(offs), bb])
    return K, c, G, b


def chebyshev_radius(G, b):
    """Radius of the largest ball inside ``G x <= b`` (negative when empty)."""
    norms = np.linalg.norm(G, axis=1)
    keep = norms > 1e-14
    bad = (~keep) & (b < -1e-12)
    if bad.any():
        return -1.0, None
    G, b, norms = G[keep], b[keep], norms[keep]
    d = G.shape[1]
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    A = np.column_stack([G, norms])
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * d + [(None, 10.0)],
                  method="highs")
    if res.status != 0:
        return -1.0, None
    return float(res.x[-1]), res.x[:d]


def _interval_reject(G, b, lo, hi):
    """True when some halfspace excludes the whole box (cheap pre-test)."""
    mn = np.where(G > 0, G * lo, G * hi).sum(axis=1)
    return bool(np.any(mn > b + 1e-12))


def enumerate_regions(dt, H, F, theta, volume_min=VOLUME_MIN, radius_min=1e-7):
    """Explicit solution by exhaustive enumeration of active patterns."""
    N = dt.N
    if N > MAX_NODES:
        raise BudgetError(f"N = {N} exceeds the enumeration budget of {MAX_NODES} nodes")
    lo = np.asarray(theta[0], dtype=float)
    hi = np.asarray(theta[1], dtype=float)
    regions, skipped, candidates = [], [], []
    tested = survivors = 0
    for pattern in itertools.product((0, 1, -1), repeat=N):
        tested += 1
        try:
            K, c, G, b = pattern_halfspaces(H, F, pattern, dt.u_max, lo, hi)
        except np.linalg.LinAlgError:
            log.warning("reduced Hessian singular for pattern %s; skipped", pattern)
            skipped.append(pattern)
            continue
        if _interval_reject(G, b, lo, hi):
            continue
        r, _ = chebyshev_radius(G, b)
        if r <= radius_min:
            continue
        survivors += 1
        poly = Polytope3(G, b)
        vol = volume(poly)
        candidates.append((tuple(int(p) for p in pattern), vol, r))
        if vol <= volume_min:
            continue
        regions.append(DtRegion(tuple(int(p) for p in pattern), K, c, poly, vol, r))
    regions.sort(key=lambda r: _pattern_key(r.pattern))
    return DtExplicitSolution(N, dt, regions, tested, survivors, skipped, candidates)


def _pattern_key(pattern):
    # inactive < upper < lower, lexicographic over nodes
    order = {0: 0, 1: 1, -1: 2}
    return tuple(order[p] for p in pattern)


def solve_explicit(sys, N, **kw):
    dt = discretize(sys, N)
    H, F = condense(dt)
    return enumerate_regions(dt, H, F, (sys.theta_lo, sys.theta_hi), **kw)


def largest_region_law(regions, tie_tol=1e-9):
    """Maximum-volume region; near-ties go to the lexicographically first pattern."""
    regions = list(getattr(regions, "regions", regions))
    if not regions:
        raise ValueError("no regions")
    vmax = max(r.volume for r in regions)
    tied = [r for r in regions if r.volume >= vmax - tie_tol]
    best = min(tied, key=lambda r: _pattern_key(r.pattern))
    return best, best.gains


def dimension_sensitivity(sol, thresholds=(1e-12, 1e-9, 1e-6, 1e-4, 1e-3)):
    """Region counts as a function of the full-dimensionality threshold."""
    vols = np.array([c[1] for c in sol.candidates])
    return [(t, int(np.count_nonzero(vols > t))) for t in thresholds]
