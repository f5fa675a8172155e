import json

import numpy as np
import pytest

from ctregions.errors import DomainError, ModelViolationError
from ctregions.model import LtiSystem, ArcSequence
from ctregions.partition import (Hyperplane, classify, classify_many, compute_partition,
                                 sample_region, theta_grid, verify_endpoint_condition,
                                 verify_single_switch)
from ctregions.simulate import simulate_optimal

REFERENCE = [
    ([0.2084, 0.8613, 0.2650], -0.4),
    ([0.2084, 0.8613, 0.2650], 0.4),
    ([0.1944, 0.1593, 0.0252], -0.361),
    ([0.1944, 0.1593, 0.0252], 0.361),
]


def test_hyperplanes_reproduce_reference(partition):
    assert [h.label for h in partition.hyperplanes] == ["l1", "l2", "l3", "l4"]
    for h, (n, o) in zip(partition.hyperplanes, REFERENCE):
        assert np.allclose(h.normal, n, atol=5e-4)
        assert h.offset == pytest.approx(o, abs=5e-4)


def test_canonical_sign():
    h = Hyperplane.canonical([-1.0, 0.5, 0.0], 2.0, "h")
    assert np.array_equal(h.normal, [1.0, -0.5, 0.0]) and h.offset == -2.0
    with pytest.raises(DomainError):
        Hyperplane.canonical([0.0, 0.0], 1.0, "zero")


def test_catalog(partition):
    ids = {r.region_id: r.arc for r in partition.regions}
    assert ids == {"CR01": ArcSequence.FREE_FULL, "CR02": ArcSequence.UPPER_BA_THEN_FREE,
                   "CR03": ArcSequence.UPPER_BA_FULL, "CR04": ArcSequence.LOWER_BA_THEN_FREE,
                   "CR05": ArcSequence.LOWER_BA_FULL}


def test_region_cells_are_exclusive(partition):
    cells = [tuple(c) for r in partition.regions for c in r.cells]
    assert len(cells) == len(set(cells))


def test_classification_examples(partition):
    assert classify(partition, np.zeros(3)).region_id == "CR01"
    corner = classify(partition, [-2.6, -0.9, -0.7])
    assert corner.arc.full_bound
    assert classify(partition, [2.6, 0.9, 0.7]).region_id == "CR05"
    with pytest.raises(DomainError):
        classify(partition, [3.0, 0.0, 0.0])


def test_classify_many_matches_scalar(demo, partition):
    rng = np.random.default_rng(2)
    X = rng.uniform(demo.theta_lo, demo.theta_hi, size=(200, 3))
    ids, _ = classify_many(partition, X)
    assert list(ids) == [classify(partition, x).region_id for x in X]


def test_every_region_is_populated(demo, partition):
    ids, _ = classify_many(partition, theta_grid(demo, 21))
    assert set(ids) == {"CR01", "CR02", "CR03", "CR04", "CR05"}


def test_strict_mode_reports_cells_without_single_switch_optimum(demo):
    with pytest.raises(ModelViolationError) as info:
        compute_partition(demo, strict=True)
    assert len(info.value.probes) == 4


def test_partition_export_is_json(partition):
    doc = json.loads(partition.to_json({"config_hash": "x"}))
    assert len(doc["hyperplanes"]) == 4 and len(doc["regions"]) == 5


def test_huge_bound_leaves_only_free_region():
    sys = LtiSystem([[-1.0]], [1.0], 5.0, 1e6, [-1.0], [1.0])
    p = compute_partition(sys)
    X = np.linspace(-1, 1, 41)[:, None]
    ids, _ = classify_many(p, X)
    assert set(ids) == {"CR01"}
    for h in p.hyperplanes:
        assert np.all(np.abs(h.value(X)) > 1e5)


def test_boundary_point_has_zero_margin(demo, partition):
    l1 = partition.hyperplanes[0]
    x0 = l1.offset * l1.normal / (l1.normal @ l1.normal)
    assert demo.in_theta(x0)
    tr = simulate_optimal(demo, x0, "FreeFull")
    assert abs(abs(tr.sigma[0]) - demo.u_max) <= 1e-6


def test_single_switch_report_on_multi_switch_system():
    sys = LtiSystem([[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0], 10.0, 0.2, [-3.0, -3.0], [3.0, 3.0])
    rep = verify_single_switch(sys, grid=5, steps=1000)
    assert not rep.ok
    assert len(rep.violations) > 0
    assert rep.summary()["points"] == 25


def test_single_switch_on_small_demo_grid(demo):
    X = np.array([np.zeros(3), [-0.78456674, -0.20295523, -0.55891328]])
    rep = verify_single_switch(demo, X)
    assert rep.ok and list(rep.crossings) == [0, 1]


def test_sample_region_is_deterministic(demo, partition):
    a = sample_region(demo, partition, "CR02", 30, seed=3)
    b = sample_region(demo, partition, "CR02", 30, seed=3)
    assert np.array_equal(a, b) and len(a) == 30
    ids, _ = classify_many(partition, a)
    assert set(ids) == {"CR02"}


def test_endpoint_report_layout(demo, partition):
    rep = verify_endpoint_condition(demo, partition, samples_per_region=4, steps=500)
    summ = rep.summary()
    assert sorted(summ) == ["CR01", "CR02", "CR03", "CR04", "CR05"]
    expected = {rid: s["expected_argmin"] for rid, s in summ.items()}
    assert expected == {"CR01": None, "CR02": 0.0, "CR03": demo.t_f, "CR04": 0.0,
                        "CR05": demo.t_f}
    assert rep.step == pytest.approx(demo.t_f / 500)


def test_endpoint_argmin_stable_under_refinement(demo, partition):
    coarse = verify_endpoint_condition(demo, partition, samples_per_region=4, steps=400)
    fine = verify_endpoint_condition(demo, partition, samples_per_region=4, steps=4000)
    for a, b in zip(coarse.records, fine.records):
        assert np.array_equal(a.x0, b.x0)
        if a.arc.full_bound:
            # full-arc candidates here are not optimal; |sigma| dips to zero more than once
            continue
        assert abs(a.argmin_time - b.argmin_time) <= coarse.step + 1e-9
