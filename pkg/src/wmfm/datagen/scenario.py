"""Scenario configuration, record types and the street geometry they live in."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid scenario, noise or dataset configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Street-canyon layout and radio parameters.

    The street runs along x in ``[0, street_length]``; lanes are centred at
    ``lane_y_centers`` and base stations sit on either side of the road.
    Each base station's camera covers ``view_length`` metres of street
    centred on its own x coordinate.
    """

    num_bs: int = 4
    bs_positions: tuple = ((25.0, -12.0, 6.0), (75.0, 12.0, 8.0), (125.0, -12.0, 10.0), (175.0, 12.0, 7.0))
    bs_array_yaw_deg: tuple = (0.0, 25.0, -25.0, 50.0)
    num_lanes: int = 4
    lane_y_centers: tuple = (-6.0, -2.0, 2.0, 6.0)
    lane_jitter: float = 0.5
    road_half_width: float = 8.0
    wall_y: float = 16.0
    street_length: float = 200.0
    view_length: float = 64.0
    view_half_height: float = 16.0
    antennas: int = 16
    subcarriers: int = 8
    carrier_freq: float = 28e9
    subcarrier_spacing: float = 2.5e6
    num_paths: int = 12
    ref_distance: float = 10.0
    blocker_density: float = 0.065
    max_distractors: int = 3
    z_range: tuple = (1.0, 4.6)
    z_classes: int = 9
    image_dims: tuple = (32, 64, 3)
    image_noise: float = 0.0
    rng_seed: int = 2024

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_lanes != 4 or len(self.lane_y_centers) != 4:
            raise ConfigError("num_lanes must be 4 with 4 lane centres")
        if self.z_classes != 9:
            raise ConfigError("z_classes must be 9")
        if self.num_bs < 1 or len(self.bs_positions) != self.num_bs:
            raise ConfigError(f"expected {self.num_bs} bs_positions, got {len(self.bs_positions)}")
        if len(self.bs_array_yaw_deg) != self.num_bs:
            raise ConfigError("bs_array_yaw_deg needs one entry per base station")
        pos = [tuple(map(float, p)) for p in self.bs_positions]
        if any(len(p) != 3 for p in pos):
            raise ConfigError("bs_positions must be 3-D coordinates")
        if len(set(pos)) != len(pos):
            raise ConfigError("bs_positions must be pairwise distinct")
        if self.street_length <= 0:
            raise ConfigError("street_length must be positive")
        if self.antennas < 1 or self.subcarriers < 1:
            raise ConfigError("antennas and subcarriers must be >= 1")
        if self.num_paths < 1:
            raise ConfigError("num_paths must be >= 1")
        if not 0.0 <= self.blocker_density <= 1.0:
            raise ConfigError("blocker_density must lie in [0, 1]")
        if self.z_range[1] <= self.z_range[0]:
            raise ConfigError("z_range must be increasing")
        if len(self.image_dims) != 3 or self.image_dims[2] != 3:
            raise ConfigError("image_dims must be (height, width, 3)")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def lane_pitch(self):
        return self.lane_y_centers[1] - self.lane_y_centers[0]

    @property
    def z_bin_width(self):
        return (self.z_range[1] - self.z_range[0]) / self.z_classes

    def z_centroids(self):
        return self.z_range[0] + (np.arange(self.z_classes) + 0.5) * self.z_bin_width

    def z_class_of(self, z):
        k = int(math.floor((z - self.z_range[0]) / self.z_bin_width))
        return min(max(k, 0), self.z_classes - 1)

    def bs_view(self, bs_id):
        """x-interval of street visible from base station ``bs_id``."""
        cx = self.bs_positions[bs_id][0]
        return cx - self.view_length / 2, cx + self.view_length / 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("bs_positions",):
            if key in d:
                d[key] = tuple(tuple(float(v) for v in p) for p in d[key])
        for key in ("bs_array_yaw_deg", "lane_y_centers", "z_range", "image_dims"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sample SNR law; ``mean_snr_db=None`` means no noise."""

    mean_snr_db: float | None = None
    std_snr_db: float = 10.0

    def __post_init__(self):
        if self.std_snr_db < 0:
            raise ConfigError("std_snr_db must be >= 0")

    @property
    def enabled(self):
        return self.mean_snr_db is not None

    @classmethod
    def parse(cls, value):
        if value is None or value == "none":
            return cls()
        if isinstance(value, NoiseSpec):
            return value
        if isinstance(value, dict):
            mean = value.get("mean_snr_db")
            return cls(None if mean in (None, "none") else float(mean), float(value.get("std_snr_db", 10.0)))
        return cls(float(value))

    def to_dict(self):
        return {"mean_snr_db": self.mean_snr_db if self.enabled else "none", "std_snr_db": self.std_snr_db}


@dataclass(frozen=True)
class Blocker:
    """Axis-aligned box standing on the ground."""

    cx: float
    cy: float
    half_x: float
    half_y: float
    height: float

    def contains_xy(self, x, y):
        return abs(x - self.cx) <= self.half_x and abs(y - self.cy) <= self.half_y


@dataclass
class MultimodalRecord:
    H: np.ndarray
    image: np.ndarray
    los_label: int
    pos_x: float
    lane_y: int
    z_class: int
    bs_id: int
    sample_seed: int
    ue_pos: tuple = field(default=(0.0, 0.0, 0.0))
    blockers: tuple = field(default=())


def segment_hits_box(p0, p1, box: Blocker) -> bool:
    """Slab test: does the closed segment p0-p1 intersect the blocker volume?"""
    lo = (box.cx - box.half_x, box.cy - box.half_y, 0.0)
    hi = (box.cx + box.half_x, box.cy + box.half_y, box.height)
    t0, t1 = 0.0, 1.0
    for a in range(3):
        d = p1[a] - p0[a]
        if abs(d) < 1e-15:
            if p0[a] < lo[a] or p0[a] > hi[a]:
                return False
            continue
        ta = (lo[a] - p0[a]) / d
        tb = (hi[a] - p0[a]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


def line_of_sight(bs_pos, ue_pos, blockers) -> bool:
    return not any(segment_hits_box(bs_pos, ue_pos, b) for b in blockers)


def check_ue_inside(cfg: ScenarioConfig, ue_pos):
    x, y, z = ue_pos
    if not (0.0 <= x <= cfg.street_length):
        raise ConfigError(f"UE x={x} outside street [0, {cfg.street_length}]")
    if abs(y) > cfg.road_half_width:
        raise ConfigError(f"UE y={y} outside road half-width {cfg.road_half_width}")
    if not (cfg.z_range[0] <= z <= cfg.z_range[1]):
        raise ConfigError(f"UE z={z} outside {cfg.z_range}")
