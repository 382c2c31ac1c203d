# src/smi_sim/modules/world/grid.py
"""
Square world split into square zones, with trusted-location endpoints.

Endpoints of a zone sit on a jittered lattice, one per lattice cell, so the
per-zone count is exact and the endpoint near a position is found by looking
at a single cell. Endpoint keys and root certificates are derived lazily and
deterministically from the world seed.
"""

import hashlib
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from smi_sim.config import GRID_SIDE_M, PROXIMITY_RADIUS_M, ZONE_SIDE_M
from smi_sim.core.exceptions import WorldConfigError
from smi_sim.domain.models import PrincipalIdentity, PrincipalKind
from smi_sim.modules.crypto.primitives import KeyPair, generate_keypair, issue_certificate
from smi_sim.modules.protocol.trusted_location import TrustedEndpointCredentials

Position = Tuple[float, float]


def trusted_counts_for(
    fraction: float,
    zone_count: int,
    zone_side_m: float,
    radius_m: float,
    distribution: str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-zone endpoint counts so that about `fraction` of the area is in range of one."""
    if fraction <= 0:
        return np.zeros(zone_count, dtype=np.int64)
    mean = fraction * zone_side_m ** 2 / (math.pi * radius_m ** 2)
    if distribution == "poisson":
        return rng.poisson(mean, size=zone_count).astype(np.int64)
    return np.full(zone_count, int(round(mean)), dtype=np.int64)


def _unit_pair(*parts: object) -> Tuple[float, float]:
    digest = hashlib.blake2b("/".join(str(p) for p in parts).encode(), digest_size=16).digest()
    a = int.from_bytes(digest[:8], "big") / 2 ** 64
    b = int.from_bytes(digest[8:], "big") / 2 ** 64
    return 2.0 * a - 1.0, 2.0 * b - 1.0


class Grid:
    def __init__(
        self,
        side_m: float = GRID_SIDE_M,
        zone_side_m: float = ZONE_SIDE_M,
        seed: int = 0,
        trusted_counts: Optional[np.ndarray] = None,
        proximity_radius_m: float = PROXIMITY_RADIUS_M,
    ):
        ratio = side_m / zone_side_m
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise WorldConfigError("grid side must be a whole multiple of the zone side")
        self.side_m = float(side_m)
        self.zone_side_m = float(zone_side_m)
        self.zones_per_side = int(round(ratio))
        self.zone_count = self.zones_per_side ** 2
        self.seed = seed
        self.proximity_radius_m = proximity_radius_m
        if trusted_counts is None:
            trusted_counts = np.zeros(self.zone_count, dtype=np.int64)
        if len(trusted_counts) != self.zone_count:
            raise WorldConfigError(
                f"expected {self.zone_count} trusted counts, got {len(trusted_counts)}"
            )
        self.trusted_counts = np.asarray(trusted_counts, dtype=np.int64)
        self.root_keys: KeyPair = generate_keypair(self._derive_seed("root"))
        self._endpoints: Dict[Tuple[int, int], TrustedEndpointCredentials] = {}

    # --- zones ---

    def zone_of(self, position: Position) -> int:
        last = self.zones_per_side - 1
        ix = min(last, max(0, int(position[0] // self.zone_side_m)))
        iy = min(last, max(0, int(position[1] // self.zone_side_m)))
        return iy * self.zones_per_side + ix

    def zone_origin(self, zone: int) -> Position:
        iy, ix = divmod(zone, self.zones_per_side)
        return ix * self.zone_side_m, iy * self.zone_side_m

    def zone_center(self, zone: int) -> Position:
        x0, y0 = self.zone_origin(zone)
        half = self.zone_side_m / 2.0
        return x0 + half, y0 + half

    def zones_intersecting_disc(self, center: Position, radius_m: float) -> List[int]:
        """Zones whose interior overlaps the open disc."""
        out = []
        for zone in range(self.zone_count):
            x0, y0 = self.zone_origin(zone)
            dx = max(x0 - center[0], 0.0, center[0] - (x0 + self.zone_side_m))
            dy = max(y0 - center[1], 0.0, center[1] - (y0 + self.zone_side_m))
            if math.hypot(dx, dy) < radius_m:
                out.append(zone)
        return out

    def contains(self, position: Position) -> bool:
        return 0.0 <= position[0] <= self.side_m and 0.0 <= position[1] <= self.side_m

    # --- trusted endpoints ---

    def _derive_seed(self, *parts: object) -> int:
        digest = hashlib.blake2b(
            "/".join(str(p) for p in (self.seed,) + parts).encode(), digest_size=8
        ).digest()
        return int.from_bytes(digest, "big")

    def _lattice(self, zone: int) -> Tuple[int, float, float]:
        count = int(self.trusted_counts[zone])
        per_side = max(1, math.ceil(math.sqrt(count)))
        spacing = self.zone_side_m / per_side
        jitter = max(0.0, spacing / 2.0 - self.proximity_radius_m)
        return per_side, spacing, jitter

    def endpoint_position(self, zone: int, index: int) -> Position:
        per_side, spacing, jitter = self._lattice(zone)
        row, col = divmod(index, per_side)
        x0, y0 = self.zone_origin(zone)
        jx, jy = _unit_pair(self.seed, zone, index)
        return (
            x0 + (col + 0.5) * spacing + jx * jitter,
            y0 + (row + 0.5) * spacing + jy * jitter,
        )

    def endpoint(self, zone: int, index: int) -> TrustedEndpointCredentials:
        if not 0 <= index < int(self.trusted_counts[zone]):
            raise WorldConfigError(f"zone {zone} has no endpoint {index}")
        key = (zone, index)
        cached = self._endpoints.get(key)
        if cached is not None:
            return cached
        identity = PrincipalIdentity(
            user_id=f"tle-{zone}", device_id=f"tle-{zone}-{index}", kind=PrincipalKind.trusted_location_endpoint
        )
        keys = generate_keypair(self._derive_seed("endpoint", zone, index))
        credentials = TrustedEndpointCredentials(
            identity=identity,
            keypair=keys,
            certificate=issue_certificate(self.root_keys, identity.device_id, keys.public_key),
            position=self.endpoint_position(zone, index),
        )
        self._endpoints[key] = credentials
        return credentials

    def nearest_trusted(self, position: Position) -> Optional[TrustedEndpointCredentials]:
        """Endpoint within proximity range of position, if any."""
        zone = self.zone_of(position)
        count = int(self.trusted_counts[zone])
        if count == 0:
            return None
        per_side, spacing, jitter = self._lattice(zone)
        x0, y0 = self.zone_origin(zone)
        col = min(per_side - 1, int((position[0] - x0) // spacing))
        row = min(per_side - 1, int((position[1] - y0) // spacing))
        # Endpoints keep a full radius inside their own cell unless cells are tiny
        reach = 0 if jitter > 0 else 1
        best = None
        best_distance = self.proximity_radius_m
        for r in range(max(0, row - reach), min(per_side, row + reach + 1)):
            for c in range(max(0, col - reach), min(per_side, col + reach + 1)):
                index = r * per_side + c
                if index >= count:
                    continue
                distance = math.dist(self.endpoint_position(zone, index), position)
                if distance <= best_distance:
                    best, best_distance = index, distance
        return None if best is None else self.endpoint(zone, best)
