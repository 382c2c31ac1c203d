"""Tests for the grid, trusted endpoints, mobility models and fBTS adversaries."""

import math

import numpy as np
import pytest

from smi_sim.core.exceptions import AdversaryConfigError, WorldConfigError
from smi_sim.domain.models import MobilityModel
from smi_sim.domain.schemas import AdversaryConfig
from smi_sim.modules.crypto.primitives import verify_certificate
from smi_sim.modules.world.adversary import (
    AdversaryField,
    FbtsSite,
    TailingAdversary,
    all_sites_disrupted_rate,
    build_field,
    checkerboard_sites,
    interference_sample,
)
from smi_sim.modules.world.grid import Grid, trusted_counts_for
from smi_sim.modules.world.mobility import (
    EAST,
    WEST,
    MobilityParams,
    NodeState,
    composite_schedule,
    downtown_rect,
    in_rect,
    round_robin_models,
    step_node,
)


def on_street(value, block=200.0):
    return abs(value / block - round(value / block)) < 1e-6


def grid_with_endpoints(zone=0, count=4, seed=5):
    counts = np.zeros(100, dtype=np.int64)
    counts[zone] = count
    return Grid(seed=seed, trusted_counts=counts)


class TestGrid:
    def test_zones(self):
        grid = Grid()
        assert grid.zone_count == 100
        assert grid.zone_of((0.0, 0.0)) == 0
        assert grid.zone_of((15000.0, 25000.0)) == 21
        assert grid.zone_of((1.0e5, 1.0e5)) == 99
        assert grid.zone_center(21) == (15000.0, 25000.0)

    def test_side_must_divide(self):
        with pytest.raises(WorldConfigError):
            Grid(side_m=1.0e5, zone_side_m=3.0e4)

    def test_counts_length_checked(self):
        with pytest.raises(WorldConfigError):
            Grid(trusted_counts=np.zeros(3, dtype=np.int64))

    def test_disc_overlap(self):
        grid = Grid()
        assert grid.zones_intersecting_disc((5000.0, 5000.0), 100.0) == [0]
        assert sorted(grid.zones_intersecting_disc((10000.0, 10000.0), 100.0)) == [0, 1, 10, 11]

    def test_trusted_counts(self, rng):
        assert trusted_counts_for(0.0, 100, 1e4, 30.0, "uniform", rng).sum() == 0
        counts = trusted_counts_for(1 / 12, 100, 1e4, 30.0, "uniform", rng)
        expected = round((1 / 12) * 1e8 / (math.pi * 900.0))
        assert set(counts.tolist()) == {expected}
        poisson = trusted_counts_for(1 / 12, 100, 1e4, 30.0, "poisson", rng)
        assert abs(poisson.mean() - expected) < 50


class TestTrustedEndpoints:
    def test_nearest_endpoint_found(self):
        grid = grid_with_endpoints(zone=0, count=4)
        for index in range(4):
            position = grid.endpoint_position(0, index)
            assert grid.endpoint(0, index).position == position
            near = grid.nearest_trusted((position[0] + 10.0, position[1]))
            assert near is not None and near.identity.device_id == f"tle-0-{index}"

    def test_out_of_range_or_empty_zone(self):
        grid = grid_with_endpoints(zone=0, count=1)
        x, y = grid.endpoint_position(0, 0)
        assert grid.nearest_trusted((x + 100.0, y)) is None
        assert grid.nearest_trusted((55000.0, 55000.0)) is None

    def test_certified_by_root(self):
        grid = grid_with_endpoints()
        endpoint = grid.endpoint(0, 1)
        assert verify_certificate(
            grid.root_keys.public_key, endpoint.identity.device_id, endpoint.keypair.public_key, endpoint.certificate
        )

    def test_deterministic_per_seed(self):
        first, second = grid_with_endpoints(seed=9), grid_with_endpoints(seed=9)
        assert first.endpoint(0, 2).keypair.public_key == second.endpoint(0, 2).keypair.public_key
        assert first.endpoint_position(0, 2) == second.endpoint_position(0, 2)
        assert grid_with_endpoints(seed=10).endpoint(0, 2).keypair.public_key != first.endpoint(0, 2).keypair.public_key

    def test_missing_endpoint(self):
        with pytest.raises(WorldConfigError):
            grid_with_endpoints(count=2).endpoint(0, 2)


class TestMobility:
    def test_simple_traffic_straight_line(self, rng):
        node = NodeState("n1", (0.0, 500.0), MobilityModel.simple_traffic, heading=EAST)
        moved = step_node(node, 3600, rng)
        assert moved.position[0] == pytest.approx(6.2586 * 3600)
        assert moved.position[1] == pytest.approx(500.0)

    def test_reflects_at_boundary(self, rng):
        node = NodeState("n1", (99000.0, 500.0), MobilityModel.simple_traffic, heading=EAST)
        moved = step_node(node, 3600, rng)
        assert moved.position[0] == pytest.approx(2.0e5 - 99000.0 - 6.2586 * 3600)
        assert moved.heading == WEST

    def test_stationary(self, rng):
        node = NodeState("n1", (10.0, 10.0), MobilityModel.stationary)
        assert step_node(node, 3600, rng).position == (10.0, 10.0)

    def test_zero_step_is_noop(self, rng):
        node = NodeState("n1", (10.0, 10.0), MobilityModel.random_walk)
        assert step_node(node, 0, rng) is node

    @pytest.mark.parametrize("model", [MobilityModel.random_walk, MobilityModel.prob_random_walk])
    def test_walks_stay_in_grid(self, model, rng):
        node = NodeState("n1", (100.0, 99900.0), model)
        for _ in range(200):
            node = step_node(node, 600, rng)
            assert 0.0 <= node.position[0] <= 1.0e5
            assert 0.0 <= node.position[1] <= 1.0e5

    def test_manhattan_keeps_to_streets(self, rng):
        node = NodeState("n1", (1030.0, 2010.0), MobilityModel.manhattan)
        for _ in range(50):
            node = step_node(node, 300, rng)
            x, y = node.position
            assert on_street(x) or on_street(y)

    def test_downtown_stays_inside_when_below_target(self, rng):
        params = MobilityParams()
        node = NodeState("n1", (50000.0, 50000.0), MobilityModel.downtown_manhattan)
        moved = step_node(node, 600, rng, params)
        assert in_rect(moved.position, params.downtown)
        assert moved.downtown_time_s == 600
        travelled = abs(moved.position[0] - 50000.0) + abs(moved.position[1] - 50000.0)
        assert travelled <= 6.2586 * 600 * params.downtown_speed_factor + 1e-6

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_downtown_long_run_occupancy(self, seed):
        params = MobilityParams()
        rng = np.random.default_rng(seed)
        node = NodeState("n1", (50000.0, 50000.0), MobilityModel.downtown_manhattan)
        for _ in range(60 * 288):
            node = step_node(node, 300, rng, params)
        share = node.downtown_time_s / node.downtown_model_time_s
        assert share == pytest.approx(params.downtown_dwell_target, abs=0.03)

    @pytest.mark.slow
    def test_random_walk_is_diffusive(self):
        rng = np.random.default_rng(8)
        walkers, steps = 1000, 50
        step_m = 6.2586
        tracks = np.zeros((walkers, steps + 1, 2))
        for w in range(walkers):
            node = NodeState(f"w{w}", (50000.0, 50000.0), MobilityModel.random_walk)
            tracks[w, 0] = node.position
            for n in range(1, steps + 1):
                node = step_node(node, 1, rng)
                tracks[w, n] = node.position
        displacement = tracks - tracks[:, :1, :]
        for n in (10, 25, 50):
            msd = float(np.mean(np.sum(displacement[:, n] ** 2, axis=1)))
            assert msd / (n * step_m**2) == pytest.approx(1.0, rel=0.15)
            spread = math.sqrt(msd / 2 / walkers)
            assert np.all(np.abs(displacement[:, n].mean(axis=0)) < 5 * spread)

    def test_composite_home_overnight(self, rng):
        assert composite_schedule(3600, seed=1, day=0) is MobilityModel.stationary
        node = NodeState("n1", (10.0, 10.0), MobilityModel.composite, seed=4)
        moved = step_node(node, 600, rng, now=3600)
        assert moved.position == (10.0, 10.0)
        assert moved.active_model is MobilityModel.stationary

    def test_composite_draw_fixed_per_day(self):
        day = [composite_schedule(t, seed=3, day=2) for t in (7 * 3600, 13 * 3600, 20 * 3600)]
        again = [composite_schedule(t, seed=3, day=2) for t in (7 * 3600, 13 * 3600, 20 * 3600)]
        assert day == again
        assert composite_schedule(7 * 3600, 3, 2, allow_home_daytime=False) is not MobilityModel.stationary

    def test_composite_daytime_models(self):
        hours = [h * 3600 for h in (6, 12, 18)]
        foreign = {MobilityModel.manhattan, MobilityModel.downtown_manhattan}
        with_home = {composite_schedule(t, seed, 0) for seed in range(40) for t in hours}
        assert with_home == foreign | {MobilityModel.simple_traffic}
        without_home = {composite_schedule(t, seed, 0, allow_home_daytime=False) for seed in range(40) for t in hours}
        assert without_home == foreign

    def test_round_robin_mix(self):
        mix = [MobilityModel.manhattan, MobilityModel.random_walk]
        assert round_robin_models(3, mix, MobilityModel.composite) == [
            MobilityModel.manhattan,
            MobilityModel.random_walk,
            MobilityModel.manhattan,
        ]
        assert round_robin_models(2, [], MobilityModel.composite) == [MobilityModel.composite] * 2

    def test_default_downtown_is_central(self):
        assert downtown_rect([], 10, 1.0e4) == (4.0e4, 4.0e4, 6.0e4, 6.0e4)
        assert downtown_rect([0, 11], 10, 1.0e4) == (0.0, 0.0, 2.0e4, 2.0e4)


class TestAdversary:
    def test_site_validation(self):
        with pytest.raises(AdversaryConfigError):
            FbtsSite((0.0, 0.0), 100.0, 1.5)
        with pytest.raises(AdversaryConfigError):
            FbtsSite((0.0, 0.0), 0.0, 0.5)

    def test_part_time_site(self):
        site = FbtsSite((0.0, 0.0), 100.0, 0.5, always_on=False, active_hours=(9, 17))
        assert site.active_at(10 * 3600)
        assert not site.active_at(20 * 3600)
        assert site.active_at(86400 + 9 * 3600)

    def test_overlapping_sites_compound(self):
        grid = Grid()
        sites = [FbtsSite((5000.0, 5000.0), 1000.0, 0.5), FbtsSite((5200.0, 5000.0), 1000.0, 0.5)]
        adversary = AdversaryField(grid, sites)
        assert adversary.interception_probability((5100.0, 5000.0)) == pytest.approx(0.75)
        assert adversary.interception_probability((50000.0, 50000.0)) == 0.0

    def test_half_the_zones_at_most(self):
        grid = Grid()
        assert len(AdversaryField(grid, checkerboard_sites(grid, 0.3)).controlled_zones) == 50
        with pytest.raises(AdversaryConfigError):
            AdversaryField(grid, [FbtsSite((5.0e4, 5.0e4), 1.0e5, 0.3)])
        with pytest.raises(AdversaryConfigError):
            AdversaryField(grid, tailing=[TailingAdversary("dev-a", 0.3, follow_limit=51)])

    def test_tailing_follow_limit(self):
        tail = TailingAdversary("dev-a", 0.5, follow_limit=2)
        assert tail.follows_into(3)
        assert tail.follows_into(4)
        assert tail.follows_into(3)
        assert not tail.follows_into(5)

    def test_build_field_tails_subjects(self):
        grid = Grid()
        adversary = build_field(grid, AdversaryConfig(p_intercept=0.3), subjects=["dev-a", "dev-b"])
        assert set(adversary.tailing) == {"dev-a", "dev-b"}
        assert adversary.tailing["dev-a"].follow_limit == 50
        assert build_field(grid, AdversaryConfig()).is_empty

    def test_samples(self, rng):
        grid = Grid()
        certain = AdversaryField(grid, [FbtsSite((5000.0, 5000.0), 1000.0, 1.0)])
        assert interference_sample(certain, (5000.0, 5000.0), rng)
        assert not interference_sample(AdversaryField(grid), (5000.0, 5000.0), rng)

    @pytest.mark.slow
    def test_disjoint_sites_intercept_independently(self, rng):
        grid = Grid()
        here, there = (5000.0, 5000.0), (50000.0, 50000.0)
        adversary = AdversaryField(grid, [FbtsSite(here, 500.0, 0.5), FbtsSite(there, 500.0, 0.3)])
        trials = 20_000
        table = np.zeros((2, 2))
        for _ in range(trials):
            table[int(interference_sample(adversary, here, rng)), int(interference_sample(adversary, there, rng))] += 1
        assert table[1].sum() / trials == pytest.approx(0.5, abs=0.02)
        assert table[:, 1].sum() / trials == pytest.approx(0.3, abs=0.02)
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / trials
        chi_square = float(np.sum((table - expected) ** 2 / expected))
        # One degree of freedom at the 1% level
        assert chi_square < 6.635

    def test_all_positions_disrupted(self, rng):
        grid = Grid()
        adversary = AdversaryField(grid, [FbtsSite((5000.0, 5000.0), 1000.0, 0.5)])
        positions = [(5000.0, 5000.0)] * 3
        rate = all_sites_disrupted_rate(adversary, positions, 200_000, rng)
        assert rate == pytest.approx(0.125, abs=0.005)
        assert all_sites_disrupted_rate(adversary, [(5000.0, 5000.0), (50000.0, 50000.0)], 1000, rng) == 0.0
