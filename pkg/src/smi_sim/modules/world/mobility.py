# src/smi_sim/modules/world/mobility.py
"""
Node mobility models.

All models move at the node's speed and reflect at the grid boundary.
Manhattan variants move along a street lattice and may turn at
intersections; the downtown variant steers towards its downtown rectangle
whenever the node's share of downtown time drops below target. The composite
model keeps the node at home overnight and picks a model per six-hour segment
from a per-day seeded draw.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from smi_sim.config import (
    DOWNTOWN_DWELL_TARGET,
    DOWNTOWN_SPEED_FACTOR,
    GRID_SIDE_M,
    MANHATTAN_BLOCK_M,
    MANHATTAN_TURN_PROBABILITY,
    MEAN_SPEED_MPS,
    PROB_WALK_TURN_PROBABILITY,
)
from smi_sim.domain.models import MobilityModel

Position = Tuple[float, float]
Rect = Tuple[float, float, float, float]

DAY_S = 24 * 3600
HOME_UNTIL_S = 6 * 3600
SEGMENT_S = 6 * 3600
EAST, NORTH, WEST, SOUTH = 0.0, math.pi / 2, math.pi, 3 * math.pi / 2
AXIS_HEADINGS = (EAST, NORTH, WEST, SOUTH)
_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class MobilityParams:
    grid_side_m: float = GRID_SIDE_M
    block_m: float = MANHATTAN_BLOCK_M
    turn_probability: float = PROB_WALK_TURN_PROBABILITY
    manhattan_turn_probability: float = MANHATTAN_TURN_PROBABILITY
    downtown: Rect = (4.0e4, 4.0e4, 6.0e4, 6.0e4)
    downtown_dwell_target: float = DOWNTOWN_DWELL_TARGET
    downtown_speed_factor: float = DOWNTOWN_SPEED_FACTOR
    composite_allow_home_daytime: bool = True


@dataclass(frozen=True, slots=True)
class NodeState:
    node_id: str
    position: Position
    model: MobilityModel
    speed_mps: float = MEAN_SPEED_MPS
    heading: float = EAST
    seed: int = 0
    active_model: Optional[MobilityModel] = None
    downtown_time_s: float = 0.0
    downtown_model_time_s: float = 0.0

    @property
    def current_model(self) -> MobilityModel:
        return self.active_model or self.model


def in_rect(position: Position, rect: Rect) -> bool:
    return rect[0] <= position[0] <= rect[2] and rect[1] <= position[1] <= rect[3]


def composite_schedule(
    day_clock_s: float,
    seed: int,
    day: int,
    allow_home_daytime: bool = True,
) -> MobilityModel:
    """Model active at a time of day; the daytime draw is fixed per (seed, day).

    Nights until 06:00 are spent resting at home. Each later six-hour segment
    draws one of the foreign models, or the home model (simple traffic) when
    allow_home_daytime is set.
    """
    if day_clock_s < HOME_UNTIL_S:
        return MobilityModel.stationary
    options = [MobilityModel.manhattan, MobilityModel.downtown_manhattan]
    if allow_home_daytime:
        options.append(MobilityModel.simple_traffic)
    rng = np.random.default_rng([seed & 0xFFFFFFFF, day])
    draws = rng.integers(0, len(options), size=3)
    segment = min(2, int((day_clock_s - HOME_UNTIL_S) // SEGMENT_S))
    return options[int(draws[segment])]


def init_node(
    node_id: str,
    model: MobilityModel,
    rng: np.random.Generator,
    params: MobilityParams,
    speed_mps: float = MEAN_SPEED_MPS,
    seed: int = 0,
    position: Optional[Position] = None,
) -> NodeState:
    if position is None:
        position = (
            float(rng.uniform(0.0, params.grid_side_m)),
            float(rng.uniform(0.0, params.grid_side_m)),
        )
    heading = AXIS_HEADINGS[int(rng.integers(0, 4))]
    return NodeState(
        node_id=node_id,
        position=position,
        model=model,
        speed_mps=speed_mps,
        heading=heading,
        seed=seed,
    )


def _reflect(value: float, upper: float) -> Tuple[float, bool]:
    flipped = False
    for _ in range(4):
        if value < 0.0:
            value, flipped = -value, not flipped
        elif value > upper:
            value, flipped = 2.0 * upper - value, not flipped
        else:
            break
    return min(max(value, 0.0), upper), flipped


def _free_move(position: Position, heading: float, distance: float, side: float) -> Tuple[Position, float]:
    x = position[0] + distance * math.cos(heading)
    y = position[1] + distance * math.sin(heading)
    x, flip_x = _reflect(x, side)
    y, flip_y = _reflect(y, side)
    if flip_x:
        heading = math.pi - heading
    if flip_y:
        heading = -heading
    return (x, y), heading % (2 * math.pi)


def _snap_axis(heading: float) -> float:
    return AXIS_HEADINGS[int(round(heading / (math.pi / 2))) % 4]


def _snap_to_street(position: Position, heading: float, block: float, side: float) -> Position:
    x, y = position
    if heading in (EAST, WEST):
        y = min(side, max(0.0, round(y / block) * block))
    else:
        x = min(side, max(0.0, round(x / block) * block))
    return x, y


def _toward(position: Position, rect: Rect) -> float:
    cx, cy = (rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0
    dx, dy = cx - position[0], cy - position[1]
    if abs(dx) >= abs(dy):
        return EAST if dx > 0 else WEST
    return NORTH if dy > 0 else SOUTH


def _turn(heading: float, rng: np.random.Generator) -> float:
    delta = math.pi / 2 if rng.random() < 0.5 else -math.pi / 2
    return _snap_axis((heading + delta) % (2 * math.pi))


def _manhattan_move(
    position: Position,
    heading: float,
    distance: float,
    rng: np.random.Generator,
    params: MobilityParams,
    bounds: Rect,
    steer: Optional[Rect] = None,
) -> Tuple[Position, float]:
    """Walk the street lattice, deciding at each intersection whether to turn."""
    block = params.block_m
    heading = _snap_axis(heading)
    x, y = _snap_to_street(position, heading, block, params.grid_side_m)
    remaining = distance
    while remaining > _EPS:
        horizontal = heading in (EAST, WEST)
        coord = x if horizontal else y
        forward = 1.0 if heading in (EAST, NORTH) else -1.0
        lo, hi = (bounds[0], bounds[2]) if horizontal else (bounds[1], bounds[3])
        if forward > 0:
            next_cross = (math.floor(coord / block + _EPS) + 1) * block
            limit = min(next_cross, hi)
        else:
            next_cross = (math.ceil(coord / block - _EPS) - 1) * block
            limit = max(next_cross, lo)
        gap = abs(limit - coord)
        if gap <= _EPS:
            # At the boundary: turn around
            heading = (heading + math.pi) % (2 * math.pi)
            heading = _snap_axis(heading)
            continue
        step = min(remaining, gap)
        coord += forward * step
        remaining -= step
        if horizontal:
            x = coord
        else:
            y = coord
        if step >= gap - _EPS and abs(coord - next_cross) <= _EPS:
            # Intersection
            if steer is not None and not in_rect((x, y), steer):
                heading = _toward((x, y), steer)
            elif rng.random() < params.manhattan_turn_probability:
                heading = _turn(heading, rng)
    return (x, y), heading


def step_node(
    state: NodeState,
    dt: float,
    rng: np.random.Generator,
    params: MobilityParams = MobilityParams(),
    now: Optional[float] = None,
) -> NodeState:
    if dt <= 0:
        return state

    active = state.model
    if state.model is MobilityModel.composite:
        clock = 0.0 if now is None else float(now)
        active = composite_schedule(
            clock % DAY_S, state.seed, int(clock // DAY_S), params.composite_allow_home_daytime
        )

    side = params.grid_side_m
    distance = state.speed_mps * dt
    position, heading = state.position, state.heading
    downtown_time, downtown_model_time = state.downtown_time_s, state.downtown_model_time_s
    whole = (0.0, 0.0, side, side)

    if active is MobilityModel.stationary:
        pass
    elif active is MobilityModel.simple_traffic:
        heading = _snap_axis(heading)
        position, heading = _free_move(position, heading, distance, side)
        heading = _snap_axis(heading)
    elif active is MobilityModel.random_walk:
        heading = float(rng.uniform(0.0, 2 * math.pi))
        position, heading = _free_move(position, heading, distance, side)
    elif active is MobilityModel.prob_random_walk:
        if rng.random() < params.turn_probability:
            heading = float(rng.uniform(0.0, 2 * math.pi))
        position, heading = _free_move(position, heading, distance, side)
    elif active is MobilityModel.manhattan:
        position, heading = _manhattan_move(position, heading, distance, rng, params, whole)
    elif active is MobilityModel.downtown_manhattan:
        rect = params.downtown
        inside = in_rect(position, rect)
        share = downtown_time / downtown_model_time if downtown_model_time > 0 else 0.0
        below_target = share < params.downtown_dwell_target
        if inside:
            bounds = rect if below_target else whole
            position, heading = _manhattan_move(
                position, heading, distance * params.downtown_speed_factor, rng, params, bounds
            )
        else:
            steer = rect if below_target else None
            position, heading = _manhattan_move(position, heading, distance, rng, params, whole, steer)
        downtown_model_time += dt
        if in_rect(position, rect):
            downtown_time += dt
    else:
        raise ValueError(f"unsupported mobility model {active}")

    return replace(
        state,
        position=position,
        heading=heading,
        active_model=active,
        downtown_time_s=downtown_time,
        downtown_model_time_s=downtown_model_time,
    )


def round_robin_models(count: int, mix: Sequence[MobilityModel], default: MobilityModel) -> list:
    if not mix:
        return [default] * count
    return [mix[i % len(mix)] for i in range(count)]


def downtown_rect(zones: Sequence[int], zones_per_side: int, zone_side_m: float) -> Rect:
    """Bounding rectangle of the downtown zones; the central 2x2 zones by default."""
    if not zones:
        mid = zones_per_side // 2
        lo = max(0, mid - 1)
        hi = min(zones_per_side, mid + 1)
        return (lo * zone_side_m, lo * zone_side_m, hi * zone_side_m, hi * zone_side_m)
    xs = [z % zones_per_side for z in zones]
    ys = [z // zones_per_side for z in zones]
    return (
        min(xs) * zone_side_m,
        min(ys) * zone_side_m,
        (max(xs) + 1) * zone_side_m,
        (max(ys) + 1) * zone_side_m,
    )


def params_from_config(world) -> MobilityParams:
    """MobilityParams for a WorldConfig section."""
    return MobilityParams(
        grid_side_m=world.grid_side_m,
        block_m=world.block_m,
        turn_probability=world.turn_probability,
        manhattan_turn_probability=world.manhattan_turn_probability,
        downtown=downtown_rect(world.downtown_zones, world.zones_per_side, world.zone_side_m),
        downtown_dwell_target=world.downtown_dwell_target,
        downtown_speed_factor=world.downtown_speed_factor,
        composite_allow_home_daytime=world.composite_allow_home_daytime,
    )
