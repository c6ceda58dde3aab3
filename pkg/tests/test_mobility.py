"""Road grid, speed process, distance forecasts and link probabilities."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from conftest import V_MAX, V_MIN, vehicle
from prosim.mobility import (GaussianSpec, MobilityConfig, RoadGraph, World,
                             distance_change_distribution, distance_distribution,
                             expected_neighbor_count, link_probabilities, link_probability,
                             neighbors_at, step_vehicles)


def _world(n, rng, sigma=1.0, speed=None):
    cfg = MobilityConfig(default_sigma=sigma)
    w = World.random(n, cfg, rng)
    if speed is not None:
        w.speed = np.full(n, speed)
    return w


# --- road graph --------------------------------------------------------------------


def test_manhattan_grid_shape():
    """[TRIVIAL] 2000 m square with 500 m blocks: 5x5 intersections, 40 road segments."""
    g = RoadGraph.manhattan()
    assert len(g.intersections) == 25
    assert len(g.segments) == 40
    assert g.total_length == pytest.approx(40 * 500.0)
    assert g.is_connected()


def test_one_unblocked_road_per_intersection(rng):
    """[TRIVIAL] every intersection leaves exactly one incident road open."""
    g = RoadGraph.manhattan()
    for _ in range(5):
        g.redraw_lights(rng)
        for node, inc in enumerate(g.incident):
            assert g.blocked_map[node] in inc


# --- step_vehicles -----------------------------------------------------------------


def test_zero_sigma_moves_exactly(rng):
    """[TRIVIAL] sigma = 0, dt = 1: speeds unchanged, each vehicle advances speed * 1 m."""
    w = _world(50, rng, sigma=0.0)
    w.offset = np.full(50, 100.0)  # far from both ends of every 500 m segment
    speed0 = w.speed.copy()
    pos0 = w.positions()
    step_vehicles(w, 1.0, rng)
    np.testing.assert_array_equal(w.speed, speed0)
    moved = np.hypot(*(w.positions() - pos0).T)
    np.testing.assert_allclose(moved, speed0, rtol=1e-12)


def test_speed_clamped_at_v_max(rng):
    """[TRIVIAL] a vehicle at v_max receiving a huge positive draw stays at v_max."""
    w = _world(200, rng, sigma=1e4, speed=V_MAX)
    step_vehicles(w, 1.0, rng)
    assert np.all(w.speed <= V_MAX)
    assert np.all(w.speed >= V_MIN)
    assert np.sum(w.speed == V_MAX) > 50


def test_speeds_follow_truncated_gaussian(rng):
    """[DERIVED] 1000 one-second steps from a fixed speed, sigma = 1.

    Inside (v_min, v_max) the new speeds are a Gaussian restricted to that
    interval; the oracle builds it by rejection sampling and a two-sample KS
    test compares them. The clamped mass at each bound matches the Gaussian tail.
    """
    v0 = V_MIN + 1.0
    w = _world(1000, rng, sigma=1.0, speed=v0)
    step_vehicles(w, 1.0, rng)
    interior = w.speed[(w.speed > V_MIN) & (w.speed < V_MAX)]
    oracle_rng = np.random.default_rng(7)
    draws = v0 + oracle_rng.standard_normal(20000)
    oracle = draws[(draws > V_MIN) & (draws < V_MAX)]
    assert stats.ks_2samp(interior, oracle).pvalue > 0.01
    p_low = ndtr(-1.0)
    n_low = np.sum(w.speed == V_MIN)
    assert abs(n_low - 1000 * p_low) < 3 * math.sqrt(1000 * p_low * (1 - p_low))


def test_vehicles_stay_on_roads(rng):
    """[TRIVIAL] after many steps every vehicle lies on its segment with a clamped speed."""
    w = _world(100, rng, sigma=2.0)
    for _ in range(300):
        step_vehicles(w, 0.5, rng)
    lengths = w.roads._length[w.segment]
    assert np.all((w.offset >= 0) & (w.offset <= lengths))
    assert np.all((w.speed >= V_MIN) & (w.speed <= V_MAX))
    pos = w.positions()
    assert np.all((pos >= -1e-9) & (pos <= 2000 + 1e-9))
    # every vehicle is on a grid line
    on_line = np.isclose(np.mod(pos[:, 0], 500), 0) | np.isclose(np.mod(pos[:, 1], 500), 0) \
        | np.isclose(np.mod(pos[:, 0], 500), 500) | np.isclose(np.mod(pos[:, 1], 500), 500)
    assert np.all(on_line)


def test_step_is_seed_deterministic():
    """[TRIVIAL] same seed, same trajectory."""
    a = _world(30, np.random.default_rng(3))
    b = _world(30, np.random.default_rng(3))
    ra, rb = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(50):
        step_vehicles(a, 0.2, ra)
        step_vehicles(b, 0.2, rb)
    np.testing.assert_array_equal(a.positions(), b.positions())


# --- distance forecasts ------------------------------------------------------------


def test_change_distribution_equal_velocity():
    """[TRIVIAL] equal velocities, unit sigmas, dt = 5: mean 0, variance 2 * 125."""
    vi = vehicle(0, 0, 0, 10, 0)
    vj = vehicle(1, 100, 0, 10, 0)
    assert distance_change_distribution(vi, vj, 5.0) == GaussianSpec(0.0, 250.0)


def test_change_distribution_deterministic():
    """[TRIVIAL] zero sigmas and equal velocities: GaussianSpec(0, 0)."""
    vi = vehicle(0, 0, 0, 10, 0, sigma=0.0)
    vj = vehicle(1, 0, 50, 10, 0, sigma=0.0)
    assert distance_change_distribution(vi, vj, 5.0) == GaussianSpec(0.0, 0.0)


def test_change_distribution_receding():
    """[DERIVED] vi receding at 20 m/s radially, dt = 5: GaussianSpec(100, 250)."""
    vi = vehicle(0, 100, 0, 20, 0)
    vj = vehicle(1, 0, 0)
    spec = distance_change_distribution(vi, vj, 5.0)
    assert spec.mean == pytest.approx(100.0)
    assert spec.variance == pytest.approx(250.0)
    assert not spec.degenerate


def test_coincident_positions_flag_degenerate():
    """[TRIVIAL] coincident vehicles use the raw relative speed and set the flag."""
    spec = distance_change_distribution(vehicle(0, 5, 5, 3, 0), vehicle(1, 5, 5, 0, 4), 2.0)
    assert spec.degenerate
    assert spec.mean == pytest.approx(5.0 * 2.0)


def test_distance_distribution_is_shifted_change():
    """[TRIVIAL] the distance law is the current distance plus the change law."""
    vi, vj = vehicle(0, 0, 0, 5, 1), vehicle(1, 30, 40, -2, 3)
    ch = distance_change_distribution(vi, vj, 2.0)
    d = distance_distribution(vi, vj, 2.0)
    assert d.mean == pytest.approx(50.0 + ch.mean)
    assert d.variance == ch.variance


# --- link probability --------------------------------------------------------------


def test_link_probability_at_range_edge():
    """[TRIVIAL] d = R, no relative motion, positive variance: 0.5."""
    assert link_probability(vehicle(0, 0, 0), vehicle(1, 250, 0), 1.0, 250.0) == pytest.approx(0.5)


def _pair_with(mean_change, dt=5.0):
    # unit sigmas give variance 2 * dt^3 = 250 at dt = 5
    return vehicle(0, 200, 0, mean_change / dt, 0), vehicle(1, 0, 0)


def test_link_probability_static_pair():
    """[DERIVED] d = 200, R = 250, mean change 0, variance 250: Phi(50 / sqrt(250))."""
    vi, vj = _pair_with(0.0)
    assert link_probability(vi, vj, 5.0, 250.0) == pytest.approx(ndtr(50 / math.sqrt(250)))
    assert link_probability(vi, vj, 5.0, 250.0) == pytest.approx(0.9992, abs=1e-4)


def test_link_probability_receding_pair():
    """[DERIVED] d = 200, R = 250, mean change 100, variance 250: Phi(-50 / sqrt(250))."""
    vi, vj = _pair_with(100.0)
    assert link_probability(vi, vj, 5.0, 250.0) == pytest.approx(ndtr(-50 / math.sqrt(250)))
    assert link_probability(vi, vj, 5.0, 250.0) == pytest.approx(0.0008, abs=1e-4)


def test_link_probability_zero_variance_indicator():
    """[TRIVIAL] zero variance gives the exact indicator."""
    a, b = vehicle(0, 0, 0, sigma=0.0), vehicle(1, 100, 0, sigma=0.0)
    assert link_probability(a, b, 1.0, 250.0) == 1.0
    c = vehicle(2, 300, 0, sigma=0.0)
    assert link_probability(a, c, 1.0, 250.0) == 0.0


def test_vectorised_link_probabilities_match_scalar(rng):
    """[DERIVED] the array kernel agrees with the scalar formula."""
    v = vehicle(0, 1000, 1000, 10, 0)
    others = [vehicle(k, *rng.uniform(700, 1300, 2), *rng.normal(0, 10, 2), sigma=rng.uniform(0, 2))
              for k in range(1, 40)]
    vec = link_probabilities(v, others, 1.7, 250.0)
    ref = [link_probability(o, v, 1.7, 250.0) for o in others]
    np.testing.assert_allclose(vec, ref, rtol=1e-12, atol=1e-15)


# --- neighbour counts --------------------------------------------------------------


def test_expected_neighbor_count_sum_of_halves():
    """[TRIVIAL] four vehicles each at link probability 0.5 give 2.0."""
    v = vehicle(0, 0, 0)
    world = [v] + [vehicle(k, 250 * math.cos(k), 250 * math.sin(k)) for k in range(1, 5)]
    assert expected_neighbor_count(v, world, 1.0, 250.0) == pytest.approx(2.0)


def test_expected_neighbor_count_empty_world():
    """[TRIVIAL] nobody else: 0.0."""
    v = vehicle(0, 0, 0)
    assert expected_neighbor_count(v, [v], 1.0, 250.0) == 0.0


def test_expected_neighbor_count_matches_displacement_mc(rng):
    """[DERIVED] ten vehicles at known distances; Monte Carlo of the Gaussian distance change.

    Each sample draws every distance change from its law and counts vehicles
    still within range; 10^5 samples, agreement within 3 standard errors.
    """
    v = vehicle(0, 0, 0, 5, 0, sigma=1.5)
    dists = np.linspace(150, 330, 10)
    world = [v] + [vehicle(k + 1, d, 0, rng.normal(0, 8), 0, sigma=1.0) for k, d in enumerate(dists)]
    dt = 3.0
    expected = expected_neighbor_count(v, world, dt, 250.0)
    S = 100_000
    counts = np.zeros(S)
    for o in world[1:]:
        law = distance_change_distribution(o, v, dt)
        d0 = math.dist(o.position, v.position)
        counts += (d0 + law.mean + law.std * rng.standard_normal(S)) < 250.0
    se = counts.std(ddof=1) / math.sqrt(S)
    assert abs(expected - counts.mean()) <= 3 * se


def test_neighbors_single_vehicle():
    """[TRIVIAL] a lone vehicle has no neighbours."""
    v = vehicle(0, 0, 0)
    assert neighbors_at(v, [v], 250.0) == set()


def test_neighbors_boundary_inclusive():
    """[TRIVIAL] two vehicles exactly R apart are mutual neighbours."""
    a, b = vehicle(0, 0, 0), vehicle(1, 250, 0)
    assert neighbors_at(a, [a, b], 250.0) == {1}
    assert neighbors_at(b, [a, b], 250.0) == {0}


def test_neighbors_match_pairwise_scan(rng):
    """[DERIVED] a grid of vehicles against an O(n^2) distance scan."""
    world = [vehicle(k, x, y) for k, (x, y) in
             enumerate((x, y) for x in range(0, 2001, 125) for y in range(0, 2001, 250))]
    for v in world[::7]:
        brute = {o.id for o in world if o.id != v.id and math.dist(o.position, v.position) <= 250.0}
        assert neighbors_at(v, world, 250.0) == brute


def test_config_rejects_bad_bounds():
    """[TRIVIAL] invalid speed bounds and range are refused."""
    with pytest.raises(ValueError):
        MobilityConfig(v_min=10, v_max=5)
    with pytest.raises(ValueError):
        MobilityConfig(transmission_range=0)
