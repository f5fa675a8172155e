"""Continuous-time critical regions: boundary planes, region catalog, checks."""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .dtmpqp import chebyshev_radius, condense, discretize
from .errors import DomainError, ModelViolationError
from .model import ARC_BY_REGION, REGION_IDS, ArcSequence
from .simulate import DEFAULT_STEPS, detect_arc_sequences, riccati_table, sweep
from .tpbvp import bound_terminal_sigma, free_gain

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Hyperplane:
    """Plane ``normal . x = offset`` in canonical sign."""

    normal: np.ndarray
    offset: float
    label: str

    @classmethod
    def canonical(cls, normal, offset, label):
        normal = np.asarray(normal, dtype=float)
        if not np.any(normal != 0):
            raise DomainError(f"hyperplane {label} has a zero normal")
        if normal[np.argmax(np.abs(normal))] < 0:
            normal, offset = -normal, -offset
        normal = normal.copy()
        normal.setflags(write=False)
        return cls(normal, float(offset), label)

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def side(self, x, tol=BOUNDARY_TOL):
        v = self.value(x)
        return np.where(v > tol, 1, np.where(v < -tol, -1, 0))

    def describe(self, digits=4):
        terms = " ".join(f"{'+' if c >= 0 else '-'} {abs(c):.{digits}f}*x0{i + 1}"
                         for i, c in enumerate(self.normal))
        return f"{self.label}: {terms.lstrip('+ ')} = {self.offset:.{digits}f}"


@dataclass
class Region:
    region_id: str
    arc: ArcSequence
    cells: list              # sign vectors over the hyperplanes

    @property
    def pattern(self):
        """Compressed sign pattern with ``*`` where the plane does not matter."""
        cells = np.array(self.cells)
        out = []
        for k in range(cells.shape[1]):
            col = set(cells[:, k].tolist())
            out.append("*" if len(col) > 1 else ("+" if col.pop() > 0 else "-"))
        return "".join(out)


@dataclass
class Probe:
    cell: tuple
    center: np.ndarray
    radius: float
    expected: ArcSequence
    observed: object         # ArcSequence or None
    violation: float
    t_s: float


@dataclass
class CtPartition:
    sys: object
    hyperplanes: list
    regions: list
    probes: list = field(default_factory=list)
    a_f: np.ndarray = None
    a_s: np.ndarray = None
    c_s: dict = None

    def region(self, region_id):
        for r in self.regions:
            if r.region_id == region_id:
                return r
        raise KeyError(region_id)

    @property
    def violations(self):
        return [pr for pr in self.probes if pr.observed is None]

    def classify(self, x0):
        return classify(self, x0)

    def to_json(self, extra=None):
        doc = {
            "hyperplanes": [
                {"label": h.label, "normal": [float(v) for v in h.normal], "offset": h.offset}
                for h in self.hyperplanes],
            "regions": [
                {"id": r.region_id, "arc_sequence": r.arc.value, "pattern": r.pattern,
                 "cells": ["".join("+" if s > 0 else "-" for s in c) for c in r.cells]}
                for r in self.regions],
            "convention": "Upper = control at +u_max (sigma <= -u_max); Lower = control at -u_max",
            "probes": [
                {"cell": "".join("+" if s > 0 else "-" for s in pr.cell),
                 "center": [float(v) for v in pr.center], "expected": pr.expected.value,
                 "observed": pr.observed.value if pr.observed else None,
                 "violation": float(pr.violation)}
                for pr in self.probes],
        }
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def boundary_data(sys):
    """Normals and offsets of the four boundary planes."""
    a_f = free_gain(sys, sys.t_f).K_f.T @ sys.B
    lower = bound_terminal_sigma(sys, 1)
    upper = bound_terminal_sigma(sys, -1)
    um = sys.u_max
    planes = [
        Hyperplane.canonical(a_f, -um, "l1"),
        Hyperplane.canonical(a_f, um, "l2"),
        Hyperplane.canonical(upper.a_s, -um - upper.c_s, "l3"),
        Hyperplane.canonical(lower.a_s, um - lower.c_s, "l4"),
    ]
    return planes, a_f, lower.a_s, {1: lower.c_s, -1: upper.c_s}


def catalog_arc(sys, a_f, a_s, c_s, x):
    """Arc sequence predicted by the boundary functions at ``x``."""
    sig0 = float(a_f @ x)
    if abs(sig0) <= sys.u_max:
        return ArcSequence.FREE_FULL
    s = 1 if sig0 > 0 else -1
    stays = s * (float(a_s @ x) + c_s[s]) >= sys.u_max
    return ArcSequence.from_structure(s, not stays)


def compute_partition(sys, strict=True, steps=DEFAULT_STEPS):
    """Boundary planes plus region catalog probed with the simulation oracle.

    Every sign cell of the four planes that is full-dimensional inside the
    parameter box is probed at its Chebyshev centre.  With ``strict`` a probe
    without a single-switch optimal trajectory raises; otherwise the cell is
    labelled by the boundary functions and the probe is kept for reporting.
    """
    planes, a_f, a_s, c_s = boundary_data(sys)
    n = sys.n
    lo, hi = sys.theta_lo, sys.theta_hi
    eye = np.eye(n)
    Gb = np.vstack([eye, -eye])
    bb = np.concatenate([hi, -lo])
    cells, centers, radii = [], [], []
    for signs in itertools.product((-1, 1), repeat=len(planes)):
        # sign +1 means normal . x >= offset, i.e. -normal . x <= -offset
        G = np.vstack([[-s * h.normal for s, h in zip(signs, planes)], Gb])
        b = np.concatenate([[-s * h.offset for s, h in zip(signs, planes)], bb])
        r, c = chebyshev_radius(G, b)
        if r > 1e-9:
            cells.append(signs)
            centers.append(c)
            radii.append(r)
    det = detect_arc_sequences(sys, np.array(centers), steps=steps)
    probes = []
    by_arc = {}
    for cell, c, r, arc, v, ts in zip(cells, centers, radii, det.arcs, det.violation, det.t_s):
        expected = catalog_arc(sys, a_f, a_s, c_s, c)
        probes.append(Probe(cell, c, r, expected, arc, float(v), float(ts)))
        label = arc if arc is not None else expected
        by_arc.setdefault(label, []).append(cell)
    p = CtPartition(sys, planes, [], probes, a_f, a_s, c_s)
    p.regions = [Region(REGION_IDS[a], a, by_arc[a])
                 for a in sorted(by_arc, key=lambda a: REGION_IDS[a])]
    if strict and p.violations:
        bad = ", ".join(np.array2string(pr.center, precision=3) for pr in p.violations)
        raise ModelViolationError(
            f"{len(p.violations)} probed cell centre(s) have no single-switch optimum: {bad}",
            probes=p.violations)
    return p


@dataclass(frozen=True)
class Classification:
    region_id: str
    arc: ArcSequence
    on_boundary: bool


def classify(p, x0, tol=BOUNDARY_TOL):
    """Region of ``x0``; points within ``tol`` of a plane go to its negative side."""
    x0 = np.asarray(x0, dtype=float)
    if not p.sys.in_theta(x0, 1e-12):
        raise DomainError(f"{x0} lies outside the parameter box")
    signs = [int(h.side(x0, tol)) for h in p.hyperplanes]
    boundary = 0 in signs
    cell = tuple(-1 if s == 0 else s for s in signs)
    lookup = _cell_lookup(p)
    if cell not in lookup:
        # resolve band points on a plane pair whose negative side is empty
        for k in range(len(signs)):
            if signs[k] == 0:
                alt = list(cell)
                alt[k] = 1
                if tuple(alt) in lookup:
                    cell = tuple(alt)
                    break
    if cell not in lookup:
        arc = catalog_arc(p.sys, p.a_f, p.a_s, p.c_s, x0)
        return Classification(REGION_IDS[arc], arc, boundary)
    r = lookup[cell]
    return Classification(r.region_id, r.arc, boundary)


def _cell_lookup(p):
    cache = getattr(p, "_lookup", None)
    if cache is None:
        cache = {tuple(c): r for r in p.regions for c in r.cells}
        p._lookup = cache
    return cache


def classify_many(p, X, tol=BOUNDARY_TOL):
    """Vectorised :func:`classify`; returns region ids and boundary flags."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals = np.column_stack([h.value(X) for h in p.hyperplanes])
    on_b = np.abs(vals) <= tol
    lookup = _cell_lookup(p)
    ids = []
    for x, v, b in zip(X, vals, on_b):
        if not b.any():
            cell = tuple(np.where(v > 0, 1, -1).tolist())
            if cell in lookup:
                ids.append(lookup[cell].region_id)
                continue
        ids.append(classify(p, x, tol).region_id)
    return np.array(ids), on_b.any(axis=1)


def theta_grid(sys, k):
    axes = [np.linspace(lo, hi, k) for lo, hi in zip(sys.theta_lo, sys.theta_hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def halton_points(sys, count, seed=0, skip=0):
    eng = qmc.Halton(d=sys.n, scramble=True, seed=seed)
    if skip:
        eng.fast_forward(skip)
    return qmc.scale(eng.random(count), sys.theta_lo, sys.theta_hi)


def qp_crossings(sys, X, nodes=200, iters=400, tol=1e-6):
    """Bound-activity changes of the sampled-data optimum on a fine grid.

    Used only to diagnose points where no single-switch trajectory satisfies
    the optimality conditions.  Solves all box QPs together with an
    accelerated projected gradient method; the condensed Hessian is close
    to a multiple of the identity, so a few hundred iterations suffice.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        return np.zeros(0, dtype=int), np.zeros((0, nodes))
    dt = discretize(sys, nodes)
    H, F = condense(dt)
    L = np.linalg.eigvalsh(H).max()
    um = sys.u_max
    G = X @ F
    u = np.clip(-np.linalg.solve(H, G.T).T, -um, um)
    y, t = u.copy(), 1.0
    for _ in range(iters):
        u_new = np.clip(y - (y @ H + G) / L, -um, um)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = u_new + ((t - 1) / t_new) * (u_new - u)
        u, t = u_new, t_new
    active = np.abs(u) >= um - tol
    changes = np.count_nonzero(active[:, 1:] != active[:, :-1], axis=1)
    return changes, u


@dataclass
class SingleSwitchReport:
    points: np.ndarray
    arcs: list
    crossings: np.ndarray
    violations: np.ndarray        # indices with more than one crossing
    inconsistent: np.ndarray      # indices where no single-switch candidate is optimal
    oracle_violation: np.ndarray

    @property
    def ok(self):
        return len(self.violations) == 0

    def summary(self):
        return {"points": int(len(self.points)),
                "single_switch_consistent": int(len(self.points) - len(self.inconsistent)),
                "violations": int(len(self.violations))}


def verify_single_switch(sys, grid=21, steps=DEFAULT_STEPS, detection=None, qp_nodes=200,
                         tol=1e-7):
    """Count band crossings of the optimal switching function over a grid of the box.

    Where a single-switch trajectory satisfies the optimality conditions its
    crossings are counted directly.  Elsewhere the optimum has a different
    structure and its crossings are read off a fine sampled-data solution.
    """
    X = theta_grid(sys, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    det = detection if detection is not None else detect_arc_sequences(sys, X, steps=steps, tol=tol)
    crossings = det.crossings.copy()
    bad = np.array([i for i, a in enumerate(det.arcs) if a is None], dtype=int)
    if len(bad):
        qc, _ = qp_crossings(sys, X[bad], nodes=qp_nodes)
        crossings[bad] = qc
    viol = np.flatnonzero(crossings > 1)
    return SingleSwitchReport(X, det.arcs, crossings, viol, bad, det.violation)


@dataclass
class EndpointRecord:
    region_id: str
    arc: ArcSequence
    x0: np.ndarray
    argmin_time: float
    expected_time: float
    mu_bar: float
    g_bar: float
    t_s: float
    ok: bool


@dataclass
class EndpointReport:
    records: list
    step: float

    def by_region(self):
        out = {}
        for r in self.records:
            out.setdefault(r.region_id, []).append(r)
        return out

    def summary(self):
        rows = {}
        for rid, recs in sorted(self.by_region().items()):
            rows[rid] = {"samples": len(recs), "passed": sum(r.ok for r in recs),
                         "expected_argmin": recs[0].expected_time,
                         "median_argmin": float(np.median([r.argmin_time for r in recs]))}
        return rows

    @property
    def ok(self):
        return all(r.ok for r in self.records)


def sample_region(sys, p, region_id, count, seed=0, max_draws=200000):
    """Low-discrepancy points of the box that classify into ``region_id``."""
    got, skip, batch = [], 0, max(4 * count, 512)
    while sum(len(g) for g in got) < count and skip < max_draws:
        X = halton_points(sys, batch, seed=seed, skip=skip)
        skip += batch
        ids, on_b = classify_many(p, X)
        got.append(X[(ids == region_id) & ~on_b])
    X = np.vstack(got) if got else np.empty((0, sys.n))
    return X[:count]


def verify_endpoint_condition(sys, p, samples_per_region=200, seed=0, steps=DEFAULT_STEPS):
    """Locate the extremum of the boundary functions along simulated trajectories.

    Bound-active regions: argmin of ``mu = |sigma| - u_max`` over the active
    arc must sit at ``t = 0`` (transitional) or ``t = t_f`` (full arc), and the
    minimum must be positive.  Free region: ``max |sigma| - u_max < 0``.
    Each region's samples are swept together with the arc sequence of the
    region; transitional samples use the oracle's switching time.
    """
    h = sys.t_f / steps
    um = sys.u_max
    records = []
    for region in p.regions:
        X = sample_region(sys, p, region.region_id, samples_per_region, seed=seed)
        if len(X) == 0:
            continue
        arc = region.arc
        s = arc.bound_sign
        if arc.transitional:
            ts = _transitional_times(sys, X, s, steps)
        elif arc.full_bound:
            ts = np.full(len(X), sys.t_f)
        else:
            ts = np.zeros(len(X))
        r = sweep(sys, X, s, ts, steps)
        g = np.abs(r.sigma) - um                       # (M+1, m)
        times = r.times[:, None]
        if arc is ArcSequence.FREE_FULL:
            k = np.argmax(g, axis=0)
            for i, x in enumerate(X):
                g_bar = float(g[k[i], i])
                records.append(EndpointRecord(region.region_id, arc, x, float(r.times[k[i]]),
                                              None, 0.0, g_bar, 0.0, g_bar < 0))
            continue
        g_junc = np.abs(r.lam_junction @ sys.B) - um
        on_arc = times <= ts[None, :] + 1e-12
        masked = np.where(on_arc, g, np.inf)
        k = np.argmin(masked, axis=0)
        target = 0.0 if arc.transitional else sys.t_f
        for i, x in enumerate(X):
            t_arg, mu_bar = float(r.times[k[i]]), float(masked[k[i], i])
            if arc.transitional and g_junc[i] < mu_bar:
                t_arg, mu_bar = float(ts[i]), float(g_junc[i])
            ok = abs(t_arg - target) <= h * (1 + 1e-9) and mu_bar > 0
            records.append(EndpointRecord(region.region_id, arc, x, t_arg, target, mu_bar,
                                          None, float(ts[i]), ok))
    return EndpointReport(records, h)


def _transitional_times(sys, X, s, steps):
    """Oracle switching times for samples assumed to be bound-then-free."""
    from .simulate import _junction_roots

    tab = riccati_table(sys, steps)
    idx, t = _junction_roots(sys, X, np.full(len(X), float(s)), tab)
    first = np.full(len(X), sys.t_f)
    np.minimum.at(first, idx, t)
    return first


def arc_for_region(region_id):
    return ARC_BY_REGION[region_id]
