"""Cube-face SVG figures of continuous- and discrete-time partitions."""

import html
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import face_geometry, face_section  # noqa: E402

RESOLUTION = 200
AXIS_NAMES = ("x01", "x02", "x03")
FACE_NAMES = ("x01 = lo", "x01 = hi", "x02 = lo", "x02 = hi", "x03 = lo", "x03 = hi")
HATCHES = ("//", "\\\\", "xx", "..", "++", "oo")


def palette():
    """32 qualitative colours: tab20 followed by the first 12 of tab20b."""
    a = plt.get_cmap("tab20").colors
    b = plt.get_cmap("tab20b").colors[:12]
    return [matplotlib.colors.to_hex(c) for c in list(a) + list(b)]


def style_for(index):
    cols = palette()
    hatch = None if index < len(cols) else HATCHES[(index // len(cols) - 1) % len(HATCHES)]
    return cols[index % len(cols)], hatch


@dataclass
class FaceFigure:
    face: int
    labels: np.ndarray                 # (res, res) region index per grid cell
    extent: tuple                      # (u_lo, u_hi, v_lo, v_hi)
    axes: tuple                        # indices of the horizontal and vertical coordinates
    segments: list = field(default_factory=list)
    legend: list = field(default_factory=list)     # (index, region id, description)
    polygons: list = field(default_factory=list)   # (region index, (k, 2) vertex array)

    @property
    def region_indices(self):
        return sorted(set(int(v) for v in np.unique(self.labels) if v >= 0))


def face_points(lo, hi, face, res=RESOLUTION):
    """Cell-centre sample points of a box face and the face extent."""
    axis, value, (i, j) = face_geometry(lo, hi, face)
    u = lo[i] + (np.arange(res) + 0.5) * (hi[i] - lo[i]) / res
    v = lo[j] + (np.arange(res) + 0.5) * (hi[j] - lo[j]) / res
    U, V = np.meshgrid(u, v)
    P = np.empty((res * res, 3))
    P[:, axis] = value
    P[:, i] = U.ravel()
    P[:, j] = V.ravel()
    return P, (lo[i], hi[i], lo[j], hi[j]), (i, j)


def _face_figures(lo, hi, label_fn, planes, legend, res):
    figs = []
    for face in range(6):
        P, extent, axes = face_points(lo, hi, face, res)
        labels = label_fn(P).reshape(res, res)
        segs = []
        for h in planes:
            sec = face_section(h, (lo, hi), face)
            for a, b in sec.segments:
                segs.append((getattr(h, "label", ""), a[list(axes)], b[list(axes)]))
        figs.append(FaceFigure(face, labels, extent, axes, segs, legend))
    return figs


def _draw(fig_data, path, title, annotation, config_hash, res):
    plt.rcParams["svg.hashsalt"] = config_hash or "ctregions"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    u0, u1, v0, v1 = fig_data.extent
    u = np.linspace(u0, u1, res)
    v = np.linspace(v0, v1, res)
    present = fig_data.region_indices
    names = {idx: rid for idx, rid, _ in fig_data.legend}
    handles = []
    for idx in present:
        mask = (fig_data.labels == idx).astype(float)
        color, hatch = style_for(idx)
        cs = ax.contourf(u, v, mask, levels=[0.5, 1.5], colors=[color],
                         hatches=[hatch], antialiased=False)
        for seg in cs.allsegs[0]:
            fig_data.polygons.append((idx, np.asarray(seg)))
        handles.append(matplotlib.patches.Patch(facecolor=color, hatch=hatch,
                                                label=names.get(idx, str(idx))))
    for label, a, b in fig_data.segments:
        ax.plot([a[0], b[0]], [a[1], b[1]], color="black", linewidth=1.2)
    i, j = fig_data.axes
    ax.set_xlim(u0, u1)
    ax.set_ylim(v0, v1)
    ax.set_xlabel(AXIS_NAMES[i] if i < 3 else f"x{i + 1}")
    ax.set_ylabel(AXIS_NAMES[j] if j < 3 else f"x{j + 1}")
    ax.set_title(f"{title}, face {FACE_NAMES[fig_data.face]}", fontsize=9)
    if annotation:
        ax.text(0.99, 0.01, annotation, transform=ax.transAxes, ha="right", va="bottom",
                fontsize=8, bbox=dict(facecolor="white", alpha=0.8, linewidth=0))
    if len(handles) <= 12:
        ax.legend(handles=handles, fontsize=6, loc="upper left", bbox_to_anchor=(1.01, 1.0))
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": config_hash or None})
    plt.close(fig)


def _write_index(out_dir, tag, paths, title, config_hash):
    items = "\n".join(
        f'<figure><img src="{os.path.basename(p)}" alt="face {k}"/>'
        f"<figcaption>face {k}: {html.escape(FACE_NAMES[k])}</figcaption></figure>"
        for k, p in enumerate(paths))
    doc = (f"<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"/>"
           f"<title>{html.escape(title)}</title></head>\n<body>\n"
           f"<h1>{html.escape(title)}</h1>\n<p>config hash: {config_hash}</p>\n{items}\n"
           f"</body></html>\n")
    path = os.path.join(out_dir, f"{tag}_index.html")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    return path


@dataclass
class RenderResult:
    paths: list
    index: str
    faces: list

    @property
    def region_ids(self):
        ids = set()
        for f in self.faces:
            names = {idx: rid for idx, rid, _ in f.legend}
            ids |= {names[i] for i in f.region_indices}
        return ids


def render_ct(p, box, out_dir, tag="ct", res=RESOLUTION, config_hash=""):
    """Six face figures of a continuous-time partition coloured by ``classify``."""
    from .partition import classify_many

    lo, hi = (np.asarray(b, dtype=float) for b in box)
    ids = [r.region_id for r in p.regions]
    index = {rid: k for k, rid in enumerate(ids)}
    legend = [(index[r.region_id], r.region_id, r.arc.value) for r in p.regions]

    def label_fn(P):
        got, _ = classify_many(p, P)
        return np.array([index.get(g, -1) for g in got])

    figs = _face_figures(lo, hi, label_fn, p.hyperplanes, legend, res)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for f in figs:
        path = os.path.join(out_dir, f"{tag}_face{f.face}.svg")
        _draw(f, path, "continuous-time regions", f"{len(ids)} regions", config_hash, res)
        paths.append(path)
    idx = _write_index(out_dir, tag, paths, "continuous-time critical regions", config_hash)
    return RenderResult(paths, idx, figs)


def render_dt(regions, box, out_dir, tag="dt", res=RESOLUTION, config_hash=""):
    """Six face figures of a discrete-time explicit solution (point-in-region tests)."""
    regions = list(getattr(regions, "regions", regions))
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    legend = [(k, f"R{k + 1:03d}", r.pattern_text) for k, r in enumerate(regions)]

    def label_fn(P):
        lab = np.full(len(P), -1)
        for k, r in enumerate(regions):
            hit = (lab < 0) & r.contains(P, 1e-9)
            lab[hit] = k
        return lab

    figs = _face_figures(lo, hi, label_fn, [], legend, res)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for f in figs:
        path = os.path.join(out_dir, f"{tag}_face{f.face}.svg")
        _draw(f, path, "discrete-time regions", f"{len(regions)} regions", config_hash, res)
        paths.append(path)
    idx = _write_index(out_dir, tag, paths, f"discrete-time critical regions ({len(regions)})",
                       config_hash)
    return RenderResult(paths, idx, figs)
