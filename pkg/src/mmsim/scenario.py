"""Deployment geometry, UE mobility and serving-cell association."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .antenna import GNB_ELEMENT, ISOTROPIC, UE_ELEMENT, ArrayConfig, sector_for_direction
from .config import SimConfig

OUTAGE = -1


@dataclass(frozen=True)
class GnbNode:
    id: int
    position: tuple[float, float, float]
    n_sectors: int
    array: ArrayConfig
    tx_power: float = 30.0
    orientation: float = 0.0

    def __post_init__(self):
        if self.n_sectors < 1:
            raise ValueError("a gNB needs at least one sector")

    @property
    def sectors(self) -> list[ArrayConfig]:
        step = 360.0 / self.n_sectors
        return [self.array.pointed(self.orientation + i * step) for i in range(self.n_sectors)]


@dataclass(frozen=True)
class UeNode:
    id: int
    position: tuple[float, float, float]
    velocity: tuple[float, float]
    n_panels: int
    array: ArrayConfig
    serving: int = OUTAGE
    source_rate: float = 1e8

    def __post_init__(self):
        if self.n_panels < 1:
            raise ValueError("a UE needs at least one panel")

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def orientation(self) -> float:
        """Heading in degrees; panel 0 faces the direction of travel."""
        return math.degrees(math.atan2(self.velocity[1], self.velocity[0])) % 360.0

    @property
    def panels(self) -> list[ArrayConfig]:
        step = 360.0 / self.n_panels
        return [self.array.pointed(self.orientation + i * step) for i in range(self.n_panels)]


@dataclass(frozen=True)
class Deployment:
    side_d: float
    gnbs: list[GnbNode]
    ues: list[UeNode]
    time: float = 0.0
    bounds: tuple[float, float, float, float] = field(default=None)

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", (0.0, 0.0, self.side_d, self.side_d))


def arrays_for(cfg: SimConfig) -> tuple[ArrayConfig, ArrayConfig]:
    """gNB and UE array templates; isotropic elements in the optimal-beamforming mode."""
    iso = cfg.beamforming == "optimal_isotropic"
    gnb = ArrayConfig(cfg.gnb_rows, cfg.gnb_cols, element=ISOTROPIC if iso else GNB_ELEMENT)
    ue = ArrayConfig(cfg.ue_rows, cfg.ue_cols, element=ISOTROPIC if iso else UE_ELEMENT)
    return gnb, ue


def _random_velocity(rng: np.random.Generator, speed: float) -> tuple[float, float]:
    heading = rng.uniform(0.0, 2 * math.pi)
    return (speed * math.cos(heading), speed * math.sin(heading))


def build_deployment(cfg: SimConfig, rng: np.random.Generator) -> Deployment:
    """Five gNBs (square corners plus centre) and uniformly dropped UEs."""
    d = cfg.d
    if not 50 <= d <= 500:
        raise ValueError(f"side d={d} outside [50, 500] m")
    if cfg.n_ue < 1:
        raise ValueError("need at least one UE")
    gnb_array, ue_array = arrays_for(cfg)
    # the isotropic baseline uses a single array per node
    n_sectors = 1 if cfg.beamforming == "optimal_isotropic" else cfg.n_sectors
    n_panels = 1 if cfg.beamforming == "optimal_isotropic" else cfg.n_panels
    corners = [(0.0, 0.0), (d, 0.0), (0.0, d), (d, d), (d / 2, d / 2)]
    gnbs = [
        GnbNode(i, (x, y, cfg.gnb_height), n_sectors, gnb_array, cfg.tx_power_dbm)
        for i, (x, y) in enumerate(corners)
    ]
    ues = []
    for i in range(cfg.n_ue):
        x, y = rng.uniform(0.0, d, size=2)
        speed = rng.uniform(cfg.speed_min, cfg.speed_max)
        ues.append(UeNode(i, (float(x), float(y), cfg.ue_height), _random_velocity(rng, speed),
                          n_panels, ue_array, OUTAGE, cfg.source_rate))
    return Deployment(d, gnbs, ues)


def _reflect(x: float, v: float, lo: float, hi: float) -> tuple[float, float]:
    """Fold a coordinate back into [lo, hi]; odd numbers of bounces flip the velocity."""
    span = hi - lo
    u = (x - lo) % (2 * span)
    if u > span:
        return hi - (u - span), -v
    return lo + u, v


def step_mobility(dep: Deployment, dt: float, rng: np.random.Generator,
                  walk_epoch: float = 1.0) -> Deployment:
    """Advance every UE by ``dt`` under a reflecting 2D random walk.

    Headings are redrawn (speed kept) whenever a walk-epoch boundary is
    crossed.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t_new = dep.time + dt
    turn = math.floor(t_new / walk_epoch + 1e-9) > math.floor(dep.time / walk_epoch + 1e-9)
    x0, y0, x1, y1 = dep.bounds
    ues = []
    for ue in dep.ues:
        vx, vy = ue.velocity
        x, vx = _reflect(ue.position[0] + vx * dt, vx, x0, x1)
        y, vy = _reflect(ue.position[1] + vy * dt, vy, y0, y1)
        velocity = _random_velocity(rng, ue.speed) if turn else (vx, vy)
        ues.append(replace(ue, position=(x, y, ue.position[2]), velocity=velocity))
    return replace(dep, ues=ues, time=t_new)


def azimuth(src, dst) -> float:
    return math.degrees(math.atan2(dst[1] - src[1], dst[0] - src[0])) % 360.0


def select_panel_and_sector(ue: UeNode, gnb: GnbNode) -> tuple[int, int]:
    if ue.position[:2] == gnb.position[:2]:
        raise ValueError("UE and gNB share a horizontal position")
    sector = sector_for_direction(gnb.n_sectors, azimuth(gnb.position, ue.position) - gnb.orientation)
    panel = sector_for_direction(ue.n_panels, azimuth(ue.position, gnb.position) - ue.orientation)
    return panel, sector


def associate(dep: Deployment, sinr_db, outage_db: float = -5.0,
              hysteresis_db: float = 3.0) -> tuple[Deployment, np.ndarray]:
    """Pick the serving gNB of every UE from a ``(n_ue, n_gnb)`` SINR table.

    A UE in outage attaches to the best gNB once it clears the threshold;
    a served UE hands over only when the best candidate beats the serving
    gNB by more than the hysteresis margin, or the serving link drops below
    the threshold. Returns the updated deployment and a per-UE handover flag.
    """
    table = np.asarray(sinr_db, dtype=float)
    if table.size == 0 or table.shape != (len(dep.ues), len(dep.gnbs)):
        raise ValueError(f"SINR table must be {len(dep.ues)}x{len(dep.gnbs)}")
    ues, handovers = [], np.zeros(len(dep.ues), dtype=bool)
    for i, ue in enumerate(dep.ues):
        row = table[i]
        best = int(np.argmax(row))
        if row[best] < outage_db:
            serving = OUTAGE
        elif ue.serving == OUTAGE or row[ue.serving] < outage_db:
            serving = best
        elif row[best] > row[ue.serving] + hysteresis_db:
            serving = best
        else:
            serving = ue.serving
        handovers[i] = ue.serving != OUTAGE and serving != OUTAGE and serving != ue.serving
        ues.append(ue if serving == ue.serving else replace(ue, serving=serving))
    return replace(dep, ues=ues), handovers
