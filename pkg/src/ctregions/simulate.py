"""Numerical oracle for the optimality system.

Trajectories are built with fixed-step RK4 and never touch the matrix
exponential.  Integrating the joint state/costate system forward is
hopeless over long horizons (the Hamiltonian flow has an unstable mode),
so the oracle uses a sweep instead:

* the free-arc costate is ``lambda = P(t) x`` with ``P`` from the Riccati
  equation integrated backwards from ``P(t_f) = I``;
* the state is integrated forwards (constant bound control, or the
  closed loop ``u = -B^T P x`` on the free arc);
* on a bound-active arc the costate is integrated backwards from the
  junction value ``P(t_s) x(t_s)``.

A candidate is optimal iff ``u = -clip(sigma)`` holds pointwise, which
reduces to ``|sigma| <= u_max`` on the free arc and ``s * sigma >= u_max``
on the bound arc (``s`` = sign of sigma there).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistencyError, OracleFailure
from .model import ArcSequence

DEFAULT_STEPS = 2000
CHUNK = 1024


class RiccatiTable:
    """Free-arc Riccati solution tabulated on a half-step grid of time-to-go."""

    def __init__(self, sys, steps=DEFAULT_STEPS):
        self.sys = sys
        self.steps = int(steps)
        self.h = sys.t_f / self.steps
        dtau = self.h / 2.0
        A, B, n = sys.A, sys.B, sys.n
        BB = np.outer(B, B)
        eye = np.eye(n)

        def rhs(P):
            return A.T @ P + P @ A - P @ BB @ P + eye

        P = np.empty((2 * self.steps + 1, n, n))
        P[0] = eye
        for k in range(2 * self.steps):
            p = P[k]
            k1 = rhs(p)
            k2 = rhs(p + dtau / 2 * k1)
            k3 = rhs(p + dtau / 2 * k2)
            k4 = rhs(p + dtau * k3)
            P[k + 1] = p + dtau / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        self.P = P
        self.dP = np.einsum("ji,kjl->kil", A, P) + P @ A - P @ BB @ P + eye
        self.BP = np.einsum("i,kij->kj", B, P)
        self.BdP = np.einsum("i,kij->kj", B, self.dP)

    def gain(self, horizon):
        """``lambda(0) = P x0`` for a free arc of length ``horizon`` (grid value)."""
        k = int(round(horizon / (self.h / 2.0)))
        return self.P[k].copy()

    def _hermite(self, Y, dY, t):
        """Cubic Hermite interpolation of a table in time-to-go at times ``t``."""
        tau = np.clip(self.sys.t_f - np.asarray(t, dtype=float), 0.0, self.sys.t_f)
        d = self.h / 2.0
        pos = tau / d
        i = np.minimum(np.floor(pos).astype(int), 2 * self.steps - 1)
        s = pos - i
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        shape = (-1,) + (1,) * (Y.ndim - 1)
        return (h00.reshape(shape) * Y[i] + (h10 * d).reshape(shape) * dY[i]
                + h01.reshape(shape) * Y[i + 1] + (h11 * d).reshape(shape) * dY[i + 1])

    def bp_at(self, t):
        """Row vector ``B^T P`` at absolute times ``t`` (shape ``(m, n)``)."""
        return self._hermite(self.BP, self.BdP, t)

    def dbp_dt_at(self, t):
        # d/dt = -d/dtau; linear interpolation of the derivative table is enough
        tau = np.clip(self.sys.t_f - np.asarray(t, dtype=float), 0.0, self.sys.t_f)
        d = self.h / 2.0
        pos = tau / d
        i = np.minimum(np.floor(pos).astype(int), 2 * self.steps - 1)
        s = (pos - i)[:, None]
        return -((1 - s) * self.BdP[i] + s * self.BdP[i + 1])

    def p_at_node(self, j):
        """Full ``P`` at master-grid node ``j`` (time ``j * h``)."""
        return self.P[2 * (self.steps - j)]


_TABLES = {}


def riccati_table(sys, steps=DEFAULT_STEPS):
    key = (sys.A.tobytes(), sys.B.tobytes(), sys.t_f, int(steps))
    tab = _TABLES.get(key)
    if tab is None:
        if len(_TABLES) > 16:
            _TABLES.clear()
        tab = _TABLES[key] = RiccatiTable(sys, steps)
    return tab


def _rk4(f, y, t, h):
    """One RK4 step with a per-point step size ``h`` (shape ``(m,)``)."""
    hc = h[:, None]
    k1 = f(y, t)
    k2 = f(y + hc / 2 * k1, t + h / 2)
    k3 = f(y + hc / 2 * k2, t + h / 2)
    k4 = f(y + hc * k3, t + h)
    return y + hc / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class SweepResult:
    """Per-point output of the batched sweep on the master grid."""

    times: np.ndarray          # (M+1,)
    states: np.ndarray         # (M+1, m, n)
    costates: np.ndarray       # (M+1, m, n)
    sigma: np.ndarray          # (M+1, m)
    x_junction: np.ndarray     # (m, n)
    lam_junction: np.ndarray   # (m, n)
    bound_sign: np.ndarray
    t_s: np.ndarray
    free_violation: np.ndarray = field(default=None)
    bound_violation: np.ndarray = field(default=None)


def sweep(sys, X0, bound_sign, t_s, steps=DEFAULT_STEPS):
    """Integrate the candidate "bound arc on [0, t_s], free arc on [t_s, t_f]".

    ``bound_sign`` is 0 for a free-only trajectory (``t_s`` ignored and set to 0);
    ``t_s = t_f`` gives a full-horizon bound-active candidate.
    """
    tab = riccati_table(sys, steps)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    m, n = X0.shape
    s = np.broadcast_to(np.asarray(bound_sign, dtype=float), (m,)).copy()
    ts = np.broadcast_to(np.asarray(t_s, dtype=float), (m,)).copy()
    ts[s == 0] = 0.0
    ts = np.clip(ts, 0.0, sys.t_f)
    A, B, um = sys.A, sys.B, sys.u_max
    M, h = tab.steps, tab.h
    u_arc = -s * um

    def f_bound(x, t):
        return x @ A.T + u_arc[:, None] * B

    def f_free(x, t):
        sig = np.einsum("mi,mi->m", tab.bp_at(t), x)
        return x @ A.T - sig[:, None] * B

    times = np.arange(M + 1) * h
    times[-1] = sys.t_f
    xs = np.empty((M + 1, m, n))
    xs[0] = X0
    x = X0.copy()
    x_junc = np.where((ts <= 0.0)[:, None], X0, 0.0)
    for j in range(M):
        t0 = times[j]
        hb = np.clip(ts - t0, 0.0, h)
        x = _rk4(f_bound, x, np.full(m, t0), hb)
        hit = (ts > t0) & (ts <= t0 + h)
        if hit.any():
            x_junc[hit] = x[hit]
        hf = h - hb
        x = _rk4(f_free, x, t0 + hb, hf)
        xs[j + 1] = x

    lam = np.empty_like(xs)
    free_nodes = times[:, None] >= ts[None, :]
    for j in range(M + 1):
        P = tab.p_at_node(j)
        lam[j] = xs[j] @ P.T
    bp_junc = tab.bp_at(ts)
    Pj = _p_full_at(tab, ts)
    lam_junc = np.einsum("mij,mj->mi", Pj, x_junc)

    # backward costate on the bound arc
    lam_b = lam_junc.copy()
    t_hi = ts.copy()
    x_hi = x_junc.copy()
    for j in range(M - 1, -1, -1):
        t0 = times[j]
        hb = np.clip(ts - t0, 0.0, h)
        active = hb > 0
        if not active.any():
            continue
        x_lo = xs[j]
        f_lo = f_bound(x_lo, None)
        f_hi = f_bound(x_hi, None)
        x_mid = 0.5 * (x_lo + x_hi) + (hb / 8.0)[:, None] * (f_hi - f_lo)
        neg = -hb[:, None]

        def g(l, xx):
            return -xx - l @ A

        k1 = g(lam_b, x_hi)
        k2 = g(lam_b + neg / 2 * k1, x_mid)
        k3 = g(lam_b + neg / 2 * k2, x_mid)
        k4 = g(lam_b + neg * k3, x_lo)
        new = lam_b + neg / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        lam_b = np.where(active[:, None], new, lam_b)
        lam[j] = np.where(active[:, None], lam_b, lam[j])
        x_hi = np.where(active[:, None], x_lo, x_hi)
    sigma = lam @ B

    res = SweepResult(times, xs, lam, sigma, x_junc, lam_junc, s, ts)
    sig_junc = np.einsum("mi,mi->m", bp_junc, x_junc)
    g_abs = np.abs(sigma) - um
    fv = np.where(free_nodes, g_abs, -np.inf).max(axis=0)
    free_v = np.maximum(fv, np.where(s != 0, np.abs(sig_junc) - um, -np.inf))
    bnodes = ~free_nodes & (s[None, :] != 0)
    bv = np.where(bnodes, um - s[None, :] * sigma, -np.inf).max(axis=0)
    bv = np.where(s != 0, np.maximum(bv, um - s * sig_junc), -np.inf)
    res.free_violation = free_v
    res.bound_violation = bv
    return res


def _p_full_at(tab, t):
    tau = np.clip(tab.sys.t_f - np.asarray(t, dtype=float), 0.0, tab.sys.t_f)
    d = tab.h / 2.0
    pos = tau / d
    i = np.minimum(np.floor(pos).astype(int), 2 * tab.steps - 1)
    s = pos - i
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    c = lambda w: w[:, None, None]
    return (c(h00) * tab.P[i] + c(h10 * d) * tab.dP[i]
            + c(h01) * tab.P[i + 1] + c(h11 * d) * tab.dP[i + 1])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    sigma: np.ndarray
    control: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    arc: ArcSequence
    t_s: float
    u_max: float
    terminal_residual: float
    pmp_residual: float

    def to_csv(self):
        n = self.states.shape[1]
        cols = (["time"] + [f"x{i + 1}" for i in range(n)]
                + [f"lam{i + 1}" for i in range(n)] + ["sigma", "u", "mu"])
        data = np.column_stack([self.times, self.states, self.costates,
                                self.sigma, self.control, self.mu])
        lines = [",".join(cols)]
        lines += [",".join(f"{v:.12e}" for v in row) for row in data]
        return "\n".join(lines) + "\n"


def simulate_optimal(sys, x0, arc, t_s=None, steps=DEFAULT_STEPS, check=True, tol=1e-6):
    """Candidate optimal trajectory for a given single-switch arc sequence.

    The junction ``t_s`` is inserted into the time grid.  With ``check`` the
    optimality conditions are enforced and an :class:`InconsistencyError`
    reports a wrong arc hypothesis or switching time.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    arc = ArcSequence(arc)
    s = arc.bound_sign
    if arc is ArcSequence.FREE_FULL:
        ts = 0.0
    elif arc.full_bound:
        ts = sys.t_f
    else:
        if t_s is None:
            raise ValueError("transitional arcs need a switching time")
        ts = float(t_s)
    r = sweep(sys, x0[None, :], s, ts, steps)
    times = r.times
    X, L, S = r.states[:, 0], r.costates[:, 0], r.sigma[:, 0]
    if 0.0 < ts < sys.t_f:
        k = int(np.searchsorted(times, ts))
        if not np.isclose(times[k], ts, rtol=0, atol=1e-12):
            # junction value from the free side; both sides agree by construction
            sig_j = float(sys.B @ r.lam_junction[0])
            times = np.insert(times, k, ts)
            X = np.insert(X, k, r.x_junction[0], axis=0)
            L = np.insert(L, k, r.lam_junction[0], axis=0)
            S = np.insert(S, k, sig_j)
    on_bound = (times < ts) if s != 0 else np.zeros(len(times), bool)
    if arc.full_bound:
        on_bound[:] = True
    u = np.where(on_bound, -s * sys.u_max, -S)
    g = np.abs(S) - sys.u_max
    mu = np.where(on_bound, g, 0.0)
    if 0.0 < ts < sys.t_f:
        mu[np.isclose(times, ts, rtol=0, atol=1e-12)] = g[np.isclose(times, ts, rtol=0, atol=1e-12)]
    pmp = float(np.max(np.abs(u + np.clip(S, -sys.u_max, sys.u_max))))
    term = float(np.linalg.norm(L[-1] - X[-1]))
    traj = Trajectory(times, X, L, S, u, mu, g, arc, ts, sys.u_max, term, pmp)
    scale = 1.0 + float(np.max(np.abs(X)))
    if check:
        if term > tol * (1.0 + np.linalg.norm(X[-1])):
            raise InconsistencyError(f"terminal condition violated ({term:.3e})", residual=term)
        if pmp > tol * scale:
            raise InconsistencyError(
                f"u = -clip(sigma) violated by {pmp:.3e} for arc {arc.value}", residual=pmp)
    return traj


def count_sigma_crossings(traj_or_sigma, u_max, tol=1e-9):
    """Number of sign changes of ``|sigma| - u_max`` along the samples.

    Samples within ``tol`` of the band edge carry no sign and are skipped, so a
    junction sample exactly on the band does not count twice.
    """
    sig = traj_or_sigma.sigma if isinstance(traj_or_sigma, Trajectory) else traj_or_sigma
    g = np.abs(np.asarray(sig, dtype=float)) - u_max
    sg = np.sign(np.where(np.abs(g) <= tol, 0.0, g))
    sg = sg[sg != 0]
    return int(np.count_nonzero(sg[1:] != sg[:-1]))


def _crossings_batch(sigma, u_max, tol=1e-9):
    g = np.abs(sigma) - u_max
    sg = np.sign(np.where(np.abs(g) <= tol, 0.0, g))
    # forward-fill zeros so that skipped samples do not create changes
    out = np.zeros(sg.shape[1], dtype=int)
    prev = np.zeros(sg.shape[1])
    for row in sg:
        nz = row != 0
        change = nz & (prev != 0) & (row != prev)
        out += change
        prev = np.where(nz, row, prev)
    return out


def shooting_gain_oracle(sys, horizon, steps=DEFAULT_STEPS, max_iter=50, tol=1e-10):
    """Free-arc gain ``K_f`` by Newton shooting on RK4-propagated residuals.

    For each basis vector ``x0 = e_i`` the initial costate is iterated until
    ``lambda(horizon) = x(horizon)``; the Jacobian of the residual with respect
    to ``lambda(0)`` is obtained by propagating unit perturbations.
    """
    n = sys.n
    horizon = float(horizon)
    if not (0.0 < horizon <= sys.t_f * (1 + 1e-12)):
        raise ValueError("horizon must lie in (0, t_f]")
    A, BB = sys.A, np.outer(sys.B, sys.B)
    h = horizon / steps

    def f(z):
        x, lam = z[:, :n], z[:, n:]
        return np.hstack([x @ A.T - lam @ BB.T, -x - lam @ A])

    def propagate(Z):
        Z = Z.copy()
        for _ in range(steps):
            k1 = f(Z)
            k2 = f(Z + h / 2 * k1)
            k3 = f(Z + h / 2 * k2)
            k4 = f(Z + h * k3)
            Z = Z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return Z

    def residual(X0, L0):
        Z = propagate(np.hstack([X0, L0]))
        return Z[:, n:] - Z[:, :n]

    X0 = np.eye(n)
    L0 = np.zeros((n, n))
    base = residual(np.zeros((n, n)), np.eye(n))   # row i: d residual / d lambda0_i
    J = base.T
    for it in range(max_iter):
        r = residual(X0, L0)
        step = np.linalg.solve(J, r.T).T
        L0 = L0 - step
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(L0))):
            return L0.T
    raise OracleFailure(f"shooting did not converge in {max_iter} iterations")


def _junction_roots(sys, X0, s, tab):
    """All roots in ``(0, t_f)`` of the junction residual along a bound arc.

    The residual is ``B^T P(t) x(t) - s u_max`` with ``x`` following the
    constant bound control from ``x0``: a root is a time at which the free-arc
    switching function meets the band edge of the bound side.  Returns
    ``(point_index, root_time)`` arrays; roots are refined by bisection on a
    cubic Hermite model of the state inside the bracketing step.
    """
    m, n = X0.shape
    A, B, um = sys.A, sys.B, sys.u_max
    M, h = tab.steps, tab.h
    u_arc = -s * um

    xs = np.empty((M + 1, m, n))
    xs[0] = X0
    x = X0.copy()
    hh = np.full(m, h)
    zero = np.zeros(m)
    for j in range(M):
        x = _rk4(lambda y, t: y @ A.T + u_arc[:, None] * B, x, zero, hh)
        xs[j + 1] = x
    bp = tab.BP[2 * (M - np.arange(M + 1))]                 # (M+1, n), B^T P at node times
    r = np.einsum("jn,jmn->jm", bp, xs) - (s * um)[None, :]
    sg = np.sign(r)
    brk = (sg[:-1] * sg[1:] < 0) | ((sg[1:] == 0) & (sg[:-1] != 0))
    brk[-1] &= sg[-1] != 0           # a root exactly at t_f is the full bound arc
    jj, ii = np.nonzero(brk)
    if ii.size == 0:
        return ii, np.zeros(0)
    a = jj * h
    ss = s[ii]
    xl, xh = xs[jj, ii], xs[jj + 1, ii]
    fl = xl @ A.T + (-ss * um)[:, None] * B
    fh = xh @ A.T + (-ss * um)[:, None] * B
    r_lo = r[jj, ii]

    def resid(t):
        w = (t - a) / h
        h00 = (1 + 2 * w) * (1 - w) ** 2
        h10 = w * (1 - w) ** 2
        h01 = w * w * (3 - 2 * w)
        h11 = w * w * (w - 1)
        xt = (h00[:, None] * xl + (h10 * h)[:, None] * fl
              + h01[:, None] * xh + (h11 * h)[:, None] * fh)
        return np.einsum("mi,mi->m", tab.bp_at(t), xt) - ss * um

    lo, hi = a.astype(float), a + h
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        same = np.sign(resid(mid)) == np.sign(r_lo)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return ii, np.minimum(0.5 * (lo + hi), sys.t_f)


@dataclass
class Detection:
    """Oracle classification of a batch of initial states."""

    X0: np.ndarray
    arcs: list                 # ArcSequence, or None where no single-switch candidate is optimal
    bound_sign: np.ndarray
    t_s: np.ndarray
    violation: np.ndarray      # optimality violation of the best single-switch candidate
    crossings: np.ndarray      # sigma band crossings of that candidate
    sigma0: np.ndarray         # free-arc switching function at t = 0


def _evaluate(sys, X, s, ts, steps):
    r = sweep(sys, X, s, ts, steps)
    v = np.maximum(r.free_violation, r.bound_violation)
    return v, _crossings_batch(r.sigma, sys.u_max)


def detect_arc_sequences(sys, X0, steps=DEFAULT_STEPS, tol=1e-7, chunk=CHUNK):
    """Decide, for each initial state, which single-switch arc sequence is optimal.

    Candidates are built from oracle quantities alone.  The first guess takes
    the bound side from the sign of the free-arc switching function at t=0 and
    the switching time from the first root of the junction residual.  Where it
    fails, every other candidate is tried: the free arc, and for both bound
    sides each root of the junction residual and the full bound arc.  A
    candidate is accepted when every pointwise optimality condition holds to
    ``tol``; the optimum is unique, so at most one can pass.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    tab = riccati_table(sys, steps)
    um = sys.u_max
    parts = []
    for start in range(0, len(X0), chunk):
        X = X0[start:start + chunk]
        m = len(X)
        sig0 = X @ tab.BP[2 * tab.steps]
        roots = {}
        for sign in (-1.0, 1.0):
            idx, t = _junction_roots(sys, X, np.full(m, sign), tab)
            roots[sign] = (idx, t)
        s = np.where(np.abs(sig0) > um, np.sign(sig0), 0.0)
        ts = np.zeros(m)
        for sign in (-1.0, 1.0):
            sel = s == sign
            first = np.full(m, sys.t_f)
            idx, t = roots[sign]
            np.minimum.at(first, idx, t)
            ts[sel] = first[sel]
        v, c = _evaluate(sys, X, s, ts, steps)

        retry = np.flatnonzero(v > tol)
        if retry.size:
            cand_i, cand_s, cand_t = [retry], [np.zeros(retry.size)], [np.zeros(retry.size)]
            for sign in (-1.0, 1.0):
                idx, t = roots[sign]
                keep = np.isin(idx, retry)
                cand_i += [idx[keep], retry]
                cand_s += [np.full(keep.sum(), sign), np.full(retry.size, sign)]
                cand_t += [t[keep], np.full(retry.size, sys.t_f)]
            ci = np.concatenate(cand_i)
            cs = np.concatenate(cand_s)
            ct = np.concatenate(cand_t)
            cv, cc = [], []
            for k in range(0, len(ci), chunk):
                vv, c2 = _evaluate(sys, X[ci[k:k + chunk]], cs[k:k + chunk], ct[k:k + chunk], steps)
                cv.append(vv)
                cc.append(c2)
            cv = np.concatenate(cv)
            cc = np.concatenate(cc)
            order = np.lexsort((cv, ci))
            ci, cs, ct, cv, cc = ci[order], cs[order], ct[order], cv[order], cc[order]
            firsts = np.flatnonzero(np.r_[True, ci[1:] != ci[:-1]])
            for f in firsts:
                i = ci[f]
                if cv[f] < v[i]:
                    s[i], ts[i], v[i], c[i] = cs[f], ct[f], cv[f], cc[f]
        parts.append((s, ts, v, c, sig0))

    s, ts, v, c, sig0 = (np.concatenate(z) for z in zip(*parts))
    arcs = []
    for si, ti, vi in zip(s, ts, v):
        if vi > tol:
            arcs.append(None)
        else:
            arcs.append(ArcSequence.from_structure(int(si), bool(ti < sys.t_f)))
    return Detection(X0, arcs, s, ts, v, c, sig0)
