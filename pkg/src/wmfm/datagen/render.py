"""Top-down raster of the street as seen from one base station's camera."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .scenario import ScenarioConfig

ASPHALT = (60, 60, 64)
SIDEWALK = (150, 145, 135)
MARKING = (235, 235, 235)
BS_MARKER = (255, 0, 255)
BUILDING_PALETTE = (
    (170, 90, 60), (70, 120, 170), (120, 160, 90), (200, 180, 80),
    (150, 80, 150), (80, 170, 160), (190, 120, 120), (110, 110, 190),
)
BUILDING_PITCH = 16.0
BUILDING_LEN = 11.0
DASH = 3.0


class _Raster:
    """Maps street metres to pixel indices for one viewport."""

    def __init__(self, cfg: ScenarioConfig, bs_id: int):
        self.h, self.w, _ = cfg.image_dims
        self.x0, self.x1 = cfg.bs_view(bs_id)
        self.y0, self.y1 = -cfg.view_half_height, cfg.view_half_height
        self.sx = self.w / (self.x1 - self.x0)
        self.sy = self.h / (self.y1 - self.y0)

    def col(self, x):
        return int(np.floor((x - self.x0) * self.sx))

    def row(self, y):
        return int(np.floor((y - self.y0) * self.sy))

    def fill(self, img, xa, xb, ya, yb, color):
        c0, c1 = max(self.col(xa), 0), min(self.col(xb) + 1, self.w)
        r0, r1 = max(self.row(ya), 0), min(self.row(yb) + 1, self.h)
        if c0 < c1 and r0 < r1:
            img[r0:r1, c0:c1] = color


@lru_cache(maxsize=32)
def _background(cfg: ScenarioConfig, bs_id: int) -> np.ndarray:
    r = _Raster(cfg, bs_id)
    img = np.empty((r.h, r.w, 3), dtype=np.uint8)
    img[:] = SIDEWALK
    hw = cfg.road_half_width
    r.fill(img, r.x0, r.x1, -hw, hw - 1e-9, ASPHALT)
    # roadside buildings at fixed absolute positions; colours depend on block index
    first = int(np.floor(r.x0 / BUILDING_PITCH)) - 1
    last = int(np.ceil(r.x1 / BUILDING_PITCH)) + 1
    for k in range(first, last + 1):
        xa = k * BUILDING_PITCH
        for side, off in ((1.0, 0), (-1.0, 3)):
            color = BUILDING_PALETTE[(k * 5 + off) % len(BUILDING_PALETTE)]
            ya, yb = sorted((side * (hw + 2.5), side * cfg.view_half_height))
            r.fill(img, xa, xa + BUILDING_LEN, ya, yb, color)
    # lane separators (dashed) and road edges (solid)
    centers = np.asarray(cfg.lane_y_centers)
    separators = (centers[1:] + centers[:-1]) / 2
    for y in separators:
        k0 = int(np.floor(r.x0 / (2 * DASH)))
        for k in range(k0, k0 + int(cfg.view_length / (2 * DASH)) + 2):
            r.fill(img, 2 * DASH * k, 2 * DASH * k + DASH - 1e-9, y, y, MARKING)
    for y in (-hw, hw - 1e-9):
        r.fill(img, r.x0, r.x1, y, y, MARKING)
    bx, by, _ = cfg.bs_positions[bs_id]
    r.fill(img, bx - 1.0, bx + 1.0, by - 1.0, by + 1.0, BS_MARKER)
    img.setflags(write=False)
    return img


def ue_color(cfg: ScenarioConfig, z_class: int):
    return (255, 40 + (200 * z_class) // (cfg.z_classes - 1), 30)


def blocker_color(height: float):
    """Roof shade saturates towards cyan with vehicle height: cars stay dark, trucks stand out."""
    v = int(np.clip(30 + 45 * height, 0, 255))
    return (40, v, min(255, v + 40))


def render_scene(cfg: ScenarioConfig, ue_pos=None, blockers=(), bs_id=0, seed=0, z_class=None):
    """Render an ``image_dims`` uint8 raster.

    ``ue_pos=None`` renders the static background only. The UE is drawn as
    a rectangle whose length and colour encode its height class. Sensor
    noise (``cfg.image_noise`` grey levels) is drawn from ``seed``.
    """
    img = _background(cfg, bs_id).copy()
    r = _Raster(cfg, bs_id)
    for b in blockers:
        r.fill(img, b.cx - b.half_x, b.cx + b.half_x, b.cy - b.half_y, b.cy + b.half_y, blocker_color(b.height))
    if ue_pos is not None:
        x, y, z = ue_pos
        zc = cfg.z_class_of(z) if z_class is None else z_class
        half_len = 1.5 + 0.25 * zc
        r.fill(img, x - half_len, x + half_len, y - 0.9, y + 0.9, ue_color(cfg, zc))
    if cfg.image_noise > 0:
        rng = np.random.default_rng(seed)
        noisy = img.astype(np.int16) + rng.integers(-cfg.image_noise, cfg.image_noise + 1, img.shape)
        img = np.clip(noisy, 0, 255).astype(np.uint8)
    return img
