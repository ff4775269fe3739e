"""Charts, metric fields, connection coefficients, geodesics and curve
comparison.  Connection coefficients are checked against a finite-difference
route through the metric entries, and the integrator against closed-form
geodesics (straight lines, great circles)."""

import json

import numpy as np
import pytest

from geodequiv.dsl import parse
from geodequiv.geometry import (
    Chart,
    ChartDomainError,
    GeodesicOptions,
    MetricField,
    PhasePoint,
    Trajectory,
    arc_length,
    arclength_reparam,
    christoffel,
    curve_distance,
    geodesic_rhs,
    integrate_geodesic,
    integrate_geodesics_batch,
    symmetric_curve_distance,
    trajectory_to_csv,
    trajectory_to_json,
)
from geodequiv.matops import NotPositiveDefiniteError


def euclidean_chart(n=2):
    return Chart(tuple(f"x{i+1}" for i in range(n)), sample_box=tuple((-1.0, 1.0) for _ in range(n)))


def metric_from(chart, grid):
    return MetricField.from_strings(chart, grid)


def euclid_metric(n=2):
    chart = euclidean_chart(n)
    return MetricField.from_diagonal(chart, [parse("1", chart.names) for _ in range(n)])


def sphere_metric():
    chart = Chart(
        ("th", "ph"),
        sample_box=((0.4, np.pi - 0.4), (-2.0, 2.0)),
        domain_factors=(parse("th - 0.05", ("th", "ph")), parse("3.091 - th", ("th", "ph"))),
    )
    return MetricField.from_strings(chart, [["1", "0"], ["0", "sin(th)^2"]])


# ---------------------------------------------------------------------------
# charts


def test_chart_dim_and_contains():
    chart = Chart(("u", "v"), domain=parse("1 - u^2 - v^2", ("u", "v")),
                  sample_box=((-0.7, 0.7), (-0.7, 0.7)))
    assert chart.dim == 2
    assert chart.contains([0.0, 0.0])
    assert not chart.contains([1.1, 0.0])


def test_chart_corner_exit_uses_every_wall_factor():
    """A product-form domain turns positive again outside a corner; the
    per-factor margin must stay negative there."""
    names = ("u", "v")
    chart = Chart(
        names,
        sample_box=((0.1, 1.0), (0.1, 1.0)),
        domain_factors=(parse("u", names), parse("v", names)),
    )
    inside = [0.5, 0.5]
    corner_outside = [-0.5, -0.5]  # u*v > 0 but both walls are crossed
    assert chart.domain_margin(inside) == pytest.approx(0.5)
    assert chart.contains(inside)
    assert chart.domain_margin(corner_outside) < 0
    assert not chart.contains(corner_outside)
    # the derived product domain alone would wrongly accept the corner point
    env = dict(zip(names, corner_outside))
    assert float(chart.domain.evaluate(env)) > 0


def test_chart_rejects_factor_with_foreign_variable():
    with pytest.raises(ValueError):
        Chart(("u",), sample_box=((0.0, 1.0),),
              domain_factors=(parse("v", ("v",)),))


def test_box_points_respect_domain():
    chart = Chart(("u", "v"), domain=parse("1 - u^2 - v^2", ("u", "v")),
                  sample_box=((-0.99, 0.99), (-0.99, 0.99)))
    pts = chart.box_points(50, np.random.default_rng(0))
    assert pts.shape == (50, 2)
    assert all(chart.contains(p) for p in pts)


# ---------------------------------------------------------------------------
# metric fields


def test_constant_identity_metric():
    g = euclid_metric(2)
    at = g.metric_at([0.3, -0.4])
    assert np.array_equal(at.values, np.eye(2))
    assert np.array_equal(at.gradient(), np.zeros((2, 2, 2)))


def test_exponential_entry_gradient_at_origin():
    chart = euclidean_chart(2)
    g = metric_from(chart, [["exp(2*x1)", "0"], ["0", "exp(2*x1)"]])
    at = g.metric_at([0.0, 0.0])
    assert np.allclose(at.values, np.eye(2))
    assert np.allclose(at.gradient()[0, 0], [2.0, 0.0])


def test_negative_entry_fails_definiteness_check():
    chart = euclidean_chart(2)
    g = metric_from(chart, [["1", "0"], ["0", "-1"]])
    with pytest.raises(NotPositiveDefiniteError):
        g.check_positive_definite()


def test_norm_is_sqrt_of_quadratic_form():
    chart = euclidean_chart(2)
    g = metric_from(chart, [["2", "0"], ["0", "1"]])
    assert g.norm([0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.sqrt(3.0))


# ---------------------------------------------------------------------------
# connection coefficients


def test_christoffel_vanishes_for_constant_metric():
    gamma = christoffel(euclid_metric(3), [0.1, 0.2, 0.3])
    assert np.array_equal(gamma, np.zeros((3, 3, 3)))


def test_christoffel_polar_like_metric():
    chart = euclidean_chart(2)
    g = metric_from(chart, [["1", "0"], ["0", "x1^2"]])
    gamma = christoffel(g, [2.0, 0.7])
    assert gamma[0, 1, 1] == pytest.approx(-2.0, rel=1e-12)
    assert gamma[1, 0, 1] == pytest.approx(0.5, rel=1e-12)
    assert gamma[1, 1, 0] == pytest.approx(0.5, rel=1e-12)


def test_christoffel_round_sphere_at_quarter_turn():
    g = sphere_metric()
    gamma = christoffel(g, [np.pi / 4, 0.3])
    assert gamma[0, 1, 1] == pytest.approx(-0.5, rel=1e-12)  # -sin(th)cos(th)
    assert gamma[1, 0, 1] == pytest.approx(1.0, rel=1e-12)  # cot(th)


def test_christoffel_matches_finite_difference_route():
    """Independent route: difference the metric values themselves and apply
    the formula Gamma^k_{ij} = 1/2 g^{kl}(d_i g_jl + d_j g_il - d_l g_ij)."""
    chart = euclidean_chart(2)
    g = metric_from(chart, [["1 + 0.3*sin(x1)*x2^2", "0.2*x1*x2"], ["0.2*x1*x2", "2 + x1^2"]])
    x = np.array([0.4, -0.3])
    h = 1e-6
    n = 2
    dg = np.zeros((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dg[:, :, k] = (g.values_at(x + e) - g.values_at(x - e)) / (2 * h)
    ginv = np.linalg.inv(g.values_at(x))
    want = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                want[k, i, j] = 0.5 * sum(
                    ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l]) for l in range(n)
                )
    assert np.allclose(christoffel(g, x), want, rtol=1e-6, atol=1e-7)


def test_geodesic_rhs_shapes():
    vel, acc = geodesic_rhs(sphere_metric(), [1.0, 0.5], [0.2, 0.3])
    assert vel.shape == acc.shape == (2,)
    assert np.allclose(vel, [0.2, 0.3])


# ---------------------------------------------------------------------------
# geodesic integration


def test_straight_line_in_flat_metric():
    traj = integrate_geodesic(euclid_metric(2), PhasePoint([0.0, 0.0], [1.0, 0.0]), 1.0)
    assert np.allclose(traj.xs[-1], [1.0, 0.0], atol=1e-12)
    assert np.allclose(traj.xis[-1], [1.0, 0.0], atol=1e-12)
    assert not traj.left_domain


def test_equator_closes_after_full_turn():
    g = sphere_metric()
    p0 = PhasePoint([np.pi / 2, 0.0], [0.0, 1.0])
    traj = integrate_geodesic(g, p0, 2 * np.pi, GeodesicOptions(samples=501))
    end = traj.xs[-1]
    assert abs(end[0] - np.pi / 2) < 1e-6
    assert abs(end[1] - 2 * np.pi) < 1e-6


def test_energy_drift_reported_within_default_tolerance():
    g = sphere_metric()
    p0 = PhasePoint([1.1, 0.0], [0.3, 0.9])
    traj = integrate_geodesic(g, p0, 4.0)
    assert traj.energy_drift <= 1e-8
    E = traj.energies()
    assert np.max(np.abs(E - E[0])) / abs(E[0]) == pytest.approx(traj.energy_drift)


def test_domain_exit_truncates_and_flags():
    names = ("u", "v")
    chart = Chart(names, domain=parse("1 - u", names), sample_box=((-0.5, 0.5), (-0.5, 0.5)))
    g = MetricField.from_diagonal(chart, [parse("1", names), parse("1", names)])
    traj = integrate_geodesic(g, PhasePoint([0.0, 0.0], [1.0, 0.0]), 5.0)
    assert traj.left_domain
    assert traj.ts[-1] == pytest.approx(1.0, abs=1e-9)
    assert traj.xs[-1][0] == pytest.approx(1.0, abs=1e-9)
    # resampling still fills the requested sample count over the covered span
    assert len(traj) == GeodesicOptions().samples


def test_start_outside_domain_raises():
    names = ("u",)
    chart = Chart(names, domain=parse("u", names), sample_box=((0.1, 1.0),))
    g = MetricField.from_diagonal(chart, [parse("1", names)])
    with pytest.raises(ChartDomainError):
        integrate_geodesic(g, PhasePoint([-0.5], [1.0]), 1.0)


def test_batch_integration_matches_single():
    g = euclid_metric(2)
    pts = [PhasePoint([0.0, 0.0], [1.0, 0.2]), PhasePoint([0.1, -0.2], [0.5, -1.0])]
    batch = integrate_geodesics_batch(g, pts, 2.0)
    for p, tb in zip(pts, batch):
        ts = integrate_geodesic(g, p, 2.0)
        assert np.allclose(tb.xs[-1], ts.xs[-1], atol=1e-9)


def test_trajectory_requires_increasing_times():
    g = euclid_metric(1)
    with pytest.raises(ValueError):
        Trajectory(g, [0.0, 0.0], [[0.0], [0.1]], [[1.0], [1.0]])


# ---------------------------------------------------------------------------
# arc length and reparametrisation


def test_reparam_straight_line_is_uniform():
    traj = integrate_geodesic(euclid_metric(2), PhasePoint([0.0, 0.0], [2.0, 0.0]), 1.0)
    pts = arclength_reparam(traj, traj.metric, count=11)
    assert np.allclose(pts[:, 1], 0.0, atol=1e-12)
    assert np.allclose(np.diff(pts[:, 0]), 0.2, atol=1e-9)


def test_reparam_is_speed_invariant():
    g = sphere_metric()
    p = PhasePoint([1.2, 0.1], [0.4, 0.7])
    fast = PhasePoint(p.x, 2.0 * p.xi)
    t1 = integrate_geodesic(g, p, 2.0, GeodesicOptions(samples=801))
    t2 = integrate_geodesic(g, fast, 1.0, GeodesicOptions(samples=801))
    c1 = arclength_reparam(t1, g, count=64)
    c2 = arclength_reparam(t2, g, count=64)
    assert np.max(np.abs(c1 - c2)) < 1e-9


def test_reparam_equator_gives_equal_central_angles():
    g = sphere_metric()
    traj = integrate_geodesic(g, PhasePoint([np.pi / 2, 0.0], [0.0, 1.0]), 3.0)
    pts = arclength_reparam(traj, g, count=31)
    # on the equator the g-arc length equals the longitude angle
    assert np.allclose(np.diff(pts[:, 1]), 0.1, atol=1e-8)


def test_arc_length_of_unit_speed_geodesic():
    g = sphere_metric()
    traj = integrate_geodesic(g, PhasePoint([np.pi / 2, 0.0], [0.0, 1.0]), 3.0)
    assert arc_length(traj, g) == pytest.approx(3.0, rel=1e-9)


def test_reparam_length_clip():
    traj = integrate_geodesic(euclid_metric(2), PhasePoint([0.0, 0.0], [1.0, 0.0]), 4.0)
    pts = arclength_reparam(traj, traj.metric, count=5, length=2.0)
    assert pts[-1][0] == pytest.approx(2.0, abs=1e-9)


# ---------------------------------------------------------------------------
# curve distance


def test_identical_curves_have_zero_distance():
    c = np.column_stack([np.linspace(0, 1, 100), np.sin(np.linspace(0, 1, 100))])
    assert curve_distance(c, c) == 0.0
    assert symmetric_curve_distance(c, c) == 0.0


def test_parallel_offset_segments():
    t = np.linspace(0, 1, 50)[:, None]
    c1 = np.hstack([t, np.zeros_like(t)])
    c2 = np.hstack([t, 0.1 + np.zeros_like(t)])
    assert curve_distance(c1, c2) == pytest.approx(0.1, rel=1e-12)
    assert symmetric_curve_distance(c1, c2) == pytest.approx(0.1, rel=1e-12)


def test_distance_against_exhaustive_search():
    def brute(c1, c2):
        a, d = c2[:-1], np.diff(c2, axis=0)
        dd = np.einsum("mj,mj->m", d, d)
        worst = 0.0
        for p in c1:
            w = p - a
            t = np.clip(np.einsum("mj,mj->m", w, d) / dd, 0, 1)
            diff = w - t[:, None] * d
            worst = max(worst, np.sqrt(np.min(np.einsum("mj,mj->m", diff, diff))))
        return worst

    rng = np.random.default_rng(2)
    for _ in range(6):
        c1 = np.cumsum(rng.normal(size=(rng.integers(20, 200), 3)) * 0.2, axis=0)
        c2 = np.cumsum(rng.normal(size=(rng.integers(20, 200), 3)) * 0.2, axis=0)
        assert curve_distance(c1, c2) == pytest.approx(brute(c1, c2), rel=1e-12)
        near = c1 + 1e-7 * rng.normal(size=c1.shape)
        assert curve_distance(c1, near) == pytest.approx(brute(c1, near), rel=1e-9)


def test_distance_handles_single_point_reference():
    c1 = np.array([[0.0, 0.0], [1.0, 0.0]])
    c2 = np.array([[0.0, 1.0]])
    assert curve_distance(c1, c2) == pytest.approx(np.sqrt(2.0))


# ---------------------------------------------------------------------------
# export forms


def test_csv_export_shape():
    traj = integrate_geodesic(euclid_metric(2), PhasePoint([0.0, 0.0], [1.0, 0.5]), 1.0,
                              GeodesicOptions(samples=5))
    text = trajectory_to_csv(traj)
    lines = text.strip().split("\n")
    assert lines[0].split(",")[0] == "t"
    assert len(lines) == 6
    row = [float(v) for v in lines[-1].split(",")]
    assert row[0] == pytest.approx(1.0)
    assert row[1] == pytest.approx(1.0)


def test_json_export_fields():
    traj = integrate_geodesic(euclid_metric(2), PhasePoint([0.0, 0.0], [1.0, 0.5]), 1.0,
                              GeodesicOptions(samples=5))
    doc = json.loads(trajectory_to_json(traj))
    assert set(doc) == {"columns", "rows", "left_domain"}
    assert doc["columns"] == ["t", "x1", "x2", "xi1", "xi2"]
    assert len(doc["rows"]) == 5
    assert doc["rows"][-1][0] == pytest.approx(1.0)
    assert doc["left_domain"] is False
