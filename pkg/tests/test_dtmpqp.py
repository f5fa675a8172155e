import numpy as np
import pytest
from scipy.integrate import simpson

from ctregions.dtmpqp import (MAX_NODES, DtProblem, condense, dimension_sensitivity, discretize,
                              enumerate_regions, largest_region_law, solve_box_qp, solve_explicit,
                              zoh_cost_blocks)
from ctregions.errors import BudgetError
from ctregions.linalg import mat_exp
from ctregions.model import LtiSystem

TABLE_K0 = [-0.0092, -0.6397, -0.1533]
TABLE_K4 = [-0.0055, 0.0428, 0.0092]


def integrator(t_f=2.0, lo=-1.0, hi=1.0, u_max=0.4):
    return LtiSystem([[0.0]], [1.0], t_f, u_max, [lo], [hi])


def projected_gradient(H, g, u_max, iters=20000):
    L = np.linalg.eigvalsh(H).max()
    u = np.zeros(len(g))
    for _ in range(iters):
        u = np.clip(u - (H @ u + g) / L, -u_max, u_max)
    return u


def test_zoh_of_pure_integrator_chain():
    A = np.zeros((2, 2))
    B = np.array([1.0, 0.0])
    Ad, Bd, Q, S, R = zoh_cost_blocks(A, B, 1.0)
    assert np.allclose(Ad, np.eye(2)) and np.allclose(Bd, [1.0, 0.0])
    assert np.allclose(Q, np.eye(2)) and np.allclose(S, [0.5, 0.0])
    assert R == pytest.approx(1 + 1 / 3)


def test_zoh_cost_matches_quadrature(demo):
    T = 0.7
    Ad, Bd, Q, S, R = zoh_cost_blocks(demo.A, demo.B, T)
    ts = np.linspace(0.0, T, 2001)
    Ac = np.zeros((4, 4))
    Ac[:3, :3] = demo.A
    Ac[:3, 3] = demo.B
    E = mat_exp(Ac, ts)        # maps (x0, u) to (x(t), u); E'E carries x'x + u^2
    W = simpson(np.einsum("kij,kil->kjl", E, E), x=ts, axis=0)
    assert np.allclose(Q, W[:3, :3], atol=1e-8)
    assert np.allclose(S, W[:3, 3], atol=1e-8)
    assert R == pytest.approx(W[3, 3], abs=1e-8)
    assert np.allclose(Ad, E[-1][:3, :3], atol=1e-14)


def test_discretize_invariants(demo):
    dt = discretize(demo, 5)
    assert dt.T_s * dt.N == pytest.approx(demo.t_f)
    assert np.allclose(dt.Qbar, dt.Qbar.T)
    assert np.linalg.eigvalsh(dt.Qbar).min() >= -1e-14
    assert dt.Rbar > 0
    got = np.sort_complex(np.linalg.eigvals(dt.Ad))
    assert np.allclose(got, np.sort_complex(np.exp(dt.T_s * np.linalg.eigvals(demo.A))), atol=1e-12)


def test_condensed_scalar_one_step():
    sys = integrator(t_f=2.0)
    H, F = condense(discretize(sys, 1))
    T = 2.0
    # stage: Q = T, S = T^2 / 2, R = T + T^3 / 3; terminal x1 = x0 + T u
    assert H[0, 0] == pytest.approx(T + T ** 3 / 3 + T ** 2)
    assert F[0, 0] == pytest.approx(T ** 2 / 2 + T)


def test_condensed_symmetry_and_unconstrained_minimiser(demo):
    dt = discretize(demo, 5)
    H, F = condense(dt)
    assert np.abs(H - H.T).max() <= 1e-12
    rng = np.random.default_rng(4)
    for x0 in rng.uniform(-0.2, 0.2, size=(10, 3)):
        u_free = -np.linalg.solve(H, F.T @ x0)
        assert np.all(np.abs(u_free) < demo.u_max)
        assert np.allclose(u_free, projected_gradient(H, F.T @ x0, 1e3), atol=1e-8)


def test_box_qp_solver_against_projected_gradient(demo):
    H, F = condense(discretize(demo, 10))
    rng = np.random.default_rng(6)
    for x0 in rng.uniform(demo.theta_lo, demo.theta_hi, size=(20, 3)):
        u, _ = solve_box_qp(H, F.T @ x0, demo.u_max)
        assert np.allclose(u, projected_gradient(H, F.T @ x0, demo.u_max), atol=1e-7)


def test_region_counts(sol5, sol10):
    assert len(sol5.regions) == 23
    assert len(sol10.regions) == 77


def test_volumes_partition_the_box(demo, sol5, sol10):
    for sol in (sol5, sol10):
        total = sum(r.volume for r in sol.regions)
        assert total == pytest.approx(demo.theta_volume, rel=1e-6)
        assert min(r.volume for r in sol.regions) > 1e-9


def test_scalar_integrator_three_regions():
    sol = solve_explicit(integrator(lo=-5.0, hi=5.0), 1)
    assert sorted(r.pattern_text for r in sol.regions) == ["0", "L", "U"]


def test_largest_region_law(sol5):
    best, K = largest_region_law(sol5)
    assert best.pattern_text == "00000"
    assert np.all(best.offsets == 0)
    assert np.allclose(K[0], TABLE_K0, atol=1e-3)
    assert np.allclose(K[4], TABLE_K4, atol=1e-3)


def test_region_laws_match_qp_on_grid(demo, sol5):
    # fingerprint the active set of numerically solved QPs on a grid
    H, F = condense(sol5.problem)
    axes = [np.linspace(lo, hi, 9) for lo, hi in zip(demo.theta_lo, demo.theta_hi)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    seen = set()
    for x in X:
        u, _ = solve_box_qp(H, F.T @ x, demo.u_max)
        hits = sol5.locate(x, 1e-9)
        assert hits
        assert np.allclose(hits[0].law(x), u, atol=1e-8)
        act = tuple(np.where(u >= demo.u_max - 1e-9, 1, np.where(u <= -demo.u_max + 1e-9, -1, 0)))
        if len(hits) == 1:
            assert act == hits[0].pattern
            seen.add(act)
    assert seen <= {r.pattern for r in sol5.regions}


def test_dimension_sensitivity_is_monotone(sol5):
    counts = [c for _, c in dimension_sensitivity(sol5)]
    assert counts == sorted(counts, reverse=True)
    assert dict(dimension_sensitivity(sol5))[1e-9] == 23


def test_budget_guard(demo):
    dt = DtProblem(MAX_NODES + 1, 1.0, np.eye(3), np.ones(3), np.eye(3), 1.0, np.zeros(3), 0.4,
                   np.eye(3))
    with pytest.raises(BudgetError):
        enumerate_regions(dt, np.eye(13), np.zeros((3, 13)), (demo.theta_lo, demo.theta_hi))
