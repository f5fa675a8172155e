"""Small-polytope utilities: vertices, volume and box-face cross sections.

Polytopes are stored in halfspace form ``normals @ x <= offsets``.  Sizes
are tiny (a few dozen halfspaces in up to three dimensions), so vertices
are enumerated by brute-force intersection of every d-tuple of planes.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

FEAS_TOL = 1e-8
DEDUP_TOL = 1e-8


def box_halfspaces(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    eye = np.eye(d)
    return np.vstack([eye, -eye]), np.concatenate([hi, -lo])


def _as_halfspaces(halfspaces):
    if isinstance(halfspaces, tuple) and len(halfspaces) == 2:
        G, b = halfspaces
    else:
        rows = list(halfspaces)
        G = np.array([r[0] for r in rows], dtype=float)
        b = np.array([r[1] for r in rows], dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    return G, b


def vertices_of(halfspaces):
    """Vertices of ``{x : G x <= b}``; empty array when infeasible or degenerate.

    ``halfspaces`` is a ``(G, b)`` pair or an iterable of ``(normal, offset)``.
    """
    G, b = _as_halfspaces(halfspaces)
    m, d = G.shape
    if m < d:
        return np.empty((0, d))
    combos = np.array(list(itertools.combinations(range(m), d)), dtype=int)
    Gs = G[combos]
    bs = b[combos]
    dets = np.linalg.det(Gs)
    ok = np.abs(dets) > 1e-12
    if not ok.any():
        return np.empty((0, d))
    pts = np.linalg.solve(Gs[ok], bs[ok][..., None])[..., 0]
    scale = np.maximum(1.0, np.abs(b))
    feas = np.all(pts @ G.T - b <= FEAS_TOL * scale, axis=1)
    pts = pts[feas]
    return _dedup(pts)


def _dedup(pts):
    if len(pts) == 0:
        return pts
    pts = pts[np.lexsort(pts.T[::-1])]
    keep = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= DEDUP_TOL for q in keep):
            keep.append(p)
    return np.array(keep)


def volume_of_vertices(V):
    """Volume (length/area in 1-D/2-D) of the convex hull of ``V``.

    In 3-D the hull facets are fanned from the vertex centroid and the
    tetrahedra summed as ``|det| / 6``.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or len(V) == 0:
        return 0.0
    d = V.shape[1]
    if d == 1:
        return float(V.max() - V.min()) if len(V) >= 2 else 0.0
    if len(V) < d + 1:
        return 0.0
    try:
        hull = ConvexHull(V)
    except QhullError:
        return 0.0
    if d != 3:
        return float(hull.volume)
    c = V.mean(axis=0)
    tri = V[hull.simplices] - c
    return float(np.abs(np.linalg.det(tri)).sum() / 6.0)


@dataclass
class Polytope3:
    """Convex polytope in halfspace form with lazily derived vertices."""

    normals: np.ndarray
    offsets: np.ndarray
    _vertices: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        self.offsets = np.asarray(self.offsets, dtype=float).ravel()

    @property
    def halfspaces(self):
        return list(zip(self.normals, self.offsets))

    @property
    def vertices(self):
        if self._vertices is None:
            self._vertices = vertices_of((self.normals, self.offsets))
        return self._vertices

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.normals.T - self.offsets <= tol, axis=-1)


def volume(p):
    return volume_of_vertices(p.vertices)


@dataclass(frozen=True)
class FaceSection:
    """Intersection of a plane with one face of a box.

    ``segments`` holds zero or one ``(start, end)`` pair of 3-D points.
    ``coplanar`` flags a plane that contains the whole face.
    """

    face: int
    segments: tuple
    coplanar: bool = False


def face_geometry(lo, hi, face):
    """Fixed axis, its value and the two free axes of box face ``face``.

    Faces are numbered (x1 lo, x1 hi, x2 lo, x2 hi, x3 lo, x3 hi).
    """
    if face not in range(6):
        raise ValueError(f"face index must be 0..5, got {face}")
    axis = face // 2
    value = (lo if face % 2 == 0 else hi)[axis]
    free = [k for k in range(3) if k != axis]
    return axis, float(value), free


def face_section(h, box, face, tol=1e-12):
    """Cross section of plane ``normal . x = offset`` with a face of ``box = (lo, hi)``."""
    if hasattr(h, "normal"):
        normal, offset = h.normal, h.offset
    else:
        normal, offset = h
    normal = np.asarray(normal, dtype=float)
    offset = float(offset)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    axis, value, (i, j) = face_geometry(lo, hi, face)
    rest = offset - normal[axis] * value
    a, b = normal[i], normal[j]
    if abs(a) <= tol and abs(b) <= tol:
        return FaceSection(face, (), coplanar=abs(rest) <= tol * max(1.0, abs(offset)))
    pts = []
    # walk the four edges of the face rectangle
    for fixed in (lo[i], hi[i]):
        if abs(b) > tol:
            y = (rest - a * fixed) / b
            if lo[j] - 1e-12 <= y <= hi[j] + 1e-12:
                pts.append((fixed, min(max(y, lo[j]), hi[j])))
    for fixed in (lo[j], hi[j]):
        if abs(a) > tol:
            x = (rest - b * fixed) / a
            if lo[i] - 1e-12 <= x <= hi[i] + 1e-12:
                pts.append((min(max(x, lo[i]), hi[i]), fixed))
    uniq = []
    for p in pts:
        if not any(abs(p[0] - q[0]) <= 1e-12 and abs(p[1] - q[1]) <= 1e-12 for q in uniq):
            uniq.append(p)
    if len(uniq) < 2:
        return FaceSection(face, ())
    # a line meets a convex rectangle in at most one segment; take the extreme pair
    P = np.array(uniq)
    direction = np.array([-b, a])
    proj = P @ direction
    p0, p1 = P[np.argmin(proj)], P[np.argmax(proj)]
    if np.linalg.norm(p1 - p0) <= 1e-12:
        return FaceSection(face, ())

    def lift(q):
        v = np.empty(3)
        v[axis] = value
        v[i], v[j] = q
        return v

    return FaceSection(face, ((lift(p0), lift(p1)),))
