import numpy as np

from ctregions.model import LtiSystem
from ctregions.partition import compute_partition
from ctregions.render import palette, render_ct, render_dt, style_for


def box_of(sys):
    return (sys.theta_lo, sys.theta_hi)


def test_palette_and_styles():
    cols = palette()
    assert len(cols) == len(set(cols)) == 32
    assert style_for(3) == (cols[3], None)
    colour, hatch = style_for(40)
    assert colour == cols[8] and hatch is not None
    assert style_for(40) != style_for(8)


def test_ct_render_files_and_determinism(demo, partition, tmp_path):
    a = render_ct(partition, box_of(demo), tmp_path / "a", res=60, config_hash="h")
    b = render_ct(partition, box_of(demo), tmp_path / "b", res=60, config_hash="h")
    assert len(a.paths) == 6
    for pa, pb in zip(a.paths, b.paths):
        assert open(pa, "rb").read() == open(pb, "rb").read()
    assert a.region_ids == {"CR01", "CR02", "CR03", "CR04", "CR05"}
    assert "5 regions" in open(a.paths[0]).read()
    assert (tmp_path / "a" / "ct_index.html").exists()


def test_ct_boundaries_are_straight_segments(demo, partition, tmp_path):
    res = render_ct(partition, box_of(demo), tmp_path, res=40)
    planes = {h.label: h for h in partition.hyperplanes}
    total = 0
    for face in res.faces:
        for label, a, b in face.segments:
            assert len(a) == len(b) == 2
            total += 1
            # lift the 2-D ends back to the face and check they sit on the plane
            for q in (a, b):
                lo, hi = box_of(demo)
                axis = face.face // 2
                x = np.empty(3)
                x[axis] = (lo if face.face % 2 == 0 else hi)[axis]
                x[list(face.axes)] = q
                assert abs(planes[label].value(x)) <= 1e-9
    assert total > 0


def test_planes_missing_the_box(tmp_path):
    A = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-2.0, -2.0, -5.0]]
    sys = LtiSystem(A, [0.0, 0.0, 1.0], 5.0, 100.0, [-1.0] * 3, [1.0] * 3)
    p = compute_partition(sys, strict=False)
    res = render_ct(p, box_of(sys), tmp_path, res=30)
    for face in res.faces:
        assert face.segments == []
        assert len(face.region_indices) == 1
    assert res.region_ids == {"CR01"}


def test_dt_render(demo, sol5, sol10, tmp_path):
    r5 = render_dt(sol5, box_of(demo), tmp_path, tag="dt5", res=60)
    assert len(r5.region_ids) <= 23
    assert all(len(f.region_indices) <= 23 for f in r5.faces)
    r10 = render_dt(sol10, box_of(demo), tmp_path, tag="dt10", res=30)
    assert all("77 regions" in open(p).read() for p in r10.paths)
