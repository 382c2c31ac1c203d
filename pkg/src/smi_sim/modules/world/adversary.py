# src/smi_sim/modules/world/adversary.py
"""
fBTS adversaries: static sites and per-user tailing stations.

Sites act independently. A message at a position covered by several active
sites survives only if every one of them lets it through. Adversaries may
control at most half of the tower cells (zones), both in aggregate site
coverage and in how many zones a tailing station follows its target to.
Stations sit on the cellular channels they are configured for, SMS unless
told otherwise.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from smi_sim.core.exceptions import AdversaryConfigError
from smi_sim.domain.models import ChannelKind
from smi_sim.domain.schemas import AdversaryConfig
from smi_sim.modules.world.grid import Grid
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)

Position = Tuple[float, float]
MONTE_CARLO_CHUNK = 250_000


@dataclass(frozen=True, slots=True)
class FbtsSite:
    position: Position
    radius_m: float
    p_intercept: float
    always_on: bool = True
    active_hours: Tuple[int, int] = (9, 17)

    def __post_init__(self):
        if not 0.0 <= self.p_intercept <= 1.0:
            raise AdversaryConfigError(f"p_intercept must be in [0, 1], got {self.p_intercept}")
        if self.radius_m <= 0:
            raise AdversaryConfigError("site radius must be positive")

    def covers(self, position: Position) -> bool:
        return math.dist(self.position, position) <= self.radius_m

    def active_at(self, now: float) -> bool:
        if self.always_on:
            return True
        hour = (now % 86400) / 3600.0
        start, end = self.active_hours
        return start <= hour < end


@dataclass(slots=True)
class TailingAdversary:
    """fBTS that follows one user, but to no more than follow_limit distinct zones."""

    target: str
    p_intercept: float
    follow_limit: int
    visited_zones: Set[int] = field(default_factory=set)

    def follows_into(self, zone: int) -> bool:
        if zone in self.visited_zones:
            return True
        if len(self.visited_zones) < self.follow_limit:
            self.visited_zones.add(zone)
            return True
        return False


class AdversaryField:
    def __init__(
        self,
        grid: Grid,
        sites: Sequence[FbtsSite] = (),
        tailing: Iterable[TailingAdversary] = (),
        ambient_loss: float = 0.0,
        channels: Iterable[ChannelKind] = (ChannelKind.sms,),
    ):
        if not 0.0 <= ambient_loss < 1.0:
            raise AdversaryConfigError(f"ambient_loss must be in [0, 1), got {ambient_loss}")
        self.grid = grid
        self.sites = tuple(sites)
        self.ambient_loss = ambient_loss
        self.channels: FrozenSet[ChannelKind] = frozenset(channels)
        self.zone_cap = grid.zone_count // 2

        self._sites_by_zone: Dict[int, List[int]] = {}
        for index, site in enumerate(self.sites):
            for zone in grid.zones_intersecting_disc(site.position, site.radius_m):
                self._sites_by_zone.setdefault(zone, []).append(index)
        if len(self._sites_by_zone) > self.zone_cap:
            raise AdversaryConfigError(
                f"fBTS sites cover {len(self._sites_by_zone)} of {grid.zone_count} zones; "
                f"at most {self.zone_cap} may be controlled"
            )

        self.tailing: Dict[str, TailingAdversary] = {}
        for adversary in tailing:
            if adversary.follow_limit > self.zone_cap:
                raise AdversaryConfigError(
                    f"tailing adversary on {adversary.target} follows {adversary.follow_limit} zones; "
                    f"at most {self.zone_cap} allowed"
                )
            self.tailing[adversary.target] = adversary

    @property
    def controlled_zones(self) -> Set[int]:
        return set(self._sites_by_zone)

    def active_sites_at(self, position: Position, now: float = 0.0) -> List[FbtsSite]:
        candidates = self._sites_by_zone.get(self.grid.zone_of(position), ())
        return [
            self.sites[i]
            for i in candidates
            if self.sites[i].active_at(now) and self.sites[i].covers(position)
        ]

    def interception_probability(
        self, position: Position, now: float = 0.0, device: Optional[str] = None
    ) -> float:
        """Chance that at least one independent station drops a message here."""
        survive = 1.0 - self.ambient_loss
        for site in self.active_sites_at(position, now):
            survive *= 1.0 - site.p_intercept
        tail = self.tailing.get(device) if device is not None else None
        if tail is not None and self.grid.zone_of(position) in tail.visited_zones:
            survive *= 1.0 - tail.p_intercept
        return 1.0 - survive

    @property
    def is_empty(self) -> bool:
        return not self.sites and not self.tailing and self.ambient_loss == 0.0


def interference_sample(
    adversary: AdversaryField,
    position: Position,
    rng: np.random.Generator,
    now: float = 0.0,
    device: Optional[str] = None,
) -> bool:
    """One Bernoulli draw per station covering position; True when any intercepts."""
    intercepted = False
    if adversary.ambient_loss > 0.0 and rng.random() < adversary.ambient_loss:
        intercepted = True
    for site in adversary.active_sites_at(position, now):
        if rng.random() < site.p_intercept:
            intercepted = True
    if device is not None:
        tail = adversary.tailing.get(device)
        if tail is not None and tail.follows_into(adversary.grid.zone_of(position)):
            if rng.random() < tail.p_intercept:
                intercepted = True
    return intercepted


def trusted_endpoint_near(grid: Grid, position: Position):
    return grid.nearest_trusted(position)


def checkerboard_sites(grid: Grid, p_intercept: float) -> List[FbtsSite]:
    """One site per alternate zone, inscribed in its zone."""
    sites = []
    for zone in range(grid.zone_count):
        iy, ix = divmod(zone, grid.zones_per_side)
        if (ix + iy) % 2 == 0:
            sites.append(FbtsSite(grid.zone_center(zone), grid.zone_side_m / 2.0, p_intercept))
    return sites


def build_field(
    grid: Grid,
    config: AdversaryConfig,
    subjects: Sequence[str] = (),
) -> AdversaryField:
    sites = [
        FbtsSite(
            position=(s.x, s.y),
            radius_m=s.radius_m,
            p_intercept=s.p_intercept,
            always_on=s.always_on,
            active_hours=tuple(s.active_hours),
        )
        for s in config.sites
    ]
    if config.checkerboard_p is not None:
        sites.extend(checkerboard_sites(grid, config.checkerboard_p))

    tailing = []
    if config.p_intercept > 0.0:
        limit = config.follow_limit or grid.zone_count // 2
        tailing = [TailingAdversary(device, config.p_intercept, limit) for device in subjects]

    field_ = AdversaryField(grid, sites, tailing, config.ambient_loss, config.channels)
    if not field_.is_empty:
        logger.info(
            f"🛰️ Adversary field: {len(sites)} sites over {len(field_.controlled_zones)} zones, "
            f"{len(tailing)} tailing stations (p={config.p_intercept}), ambient loss {config.ambient_loss}"
        )
    return field_


def interception_rate(
    adversary: AdversaryField,
    position: Position,
    trials: int,
    rng: np.random.Generator,
    now: float = 0.0,
) -> float:
    """Monte-Carlo interception rate at one position."""
    p = adversary.interception_probability(position, now)
    hits = 0
    remaining = trials
    while remaining > 0:
        chunk = min(remaining, MONTE_CARLO_CHUNK)
        hits += int((rng.random(chunk) < p).sum())
        remaining -= chunk
    return hits / trials


def all_sites_disrupted_rate(
    adversary: AdversaryField,
    positions: Sequence[Position],
    trials: int,
    rng: np.random.Generator,
    now: float = 0.0,
) -> float:
    """Rate at which an interaction at every one of positions is intercepted."""
    probabilities = np.array([adversary.interception_probability(p, now) for p in positions])
    hits = 0
    remaining = trials
    while remaining > 0:
        chunk = min(remaining, MONTE_CARLO_CHUNK)
        draws = rng.random((chunk, len(probabilities))) < probabilities
        hits += int(draws.all(axis=1).sum())
        remaining -= chunk
    return hits / trials
