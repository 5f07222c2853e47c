"""Geometric multipath channel between a single-antenna UE and a BS uniform linear array."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .scenario import SPEED_OF_LIGHT, ConfigError, ScenarioConfig, check_ue_inside, line_of_sight

GROUND_GAIN = 0.4
WALL_GAIN = 0.5
SCATTER_GAIN = 1.0  # fixed scatterers near each BS give it a recognisable angular signature
VEHICLE_GAIN = 0.7


def vehicle_slots(cfg: ScenarioConfig) -> int:
    """Path slots reserved for vehicle reflections (one occluder plus the distractors)."""
    return 1 + cfg.max_distractors


def channel_from_paths(alpha, sin_theta, delay, antennas, subcarriers, spacing, spacing_over_lambda=0.5):
    """Evaluate H[m, s] = sum_p alpha_p exp(-j2pi m (d/lambda) sin(theta_p)) exp(-j2pi s df tau_p)."""
    alpha = np.asarray(alpha, dtype=np.complex128)
    sin_theta = np.asarray(sin_theta, dtype=np.float64)
    delay = np.asarray(delay, dtype=np.float64)
    if alpha.size == 0:
        raise ConfigError("channel needs at least one path")
    m = np.arange(antennas)[:, None]
    s = np.arange(subcarriers)[:, None]
    steer = np.exp(-2j * np.pi * spacing_over_lambda * m * sin_theta[None, :])  # (M, P)
    freq = np.exp(-2j * np.pi * spacing * s * delay[None, :])  # (S, P)
    return (steer * alpha[None, :]) @ freq.T


@lru_cache(maxsize=64)
def bs_scatterers(cfg: ScenarioConfig, bs_id: int):
    """Fixed point scatterers around a base station, a function of ``cfg.rng_seed`` only."""
    n = max(cfg.num_paths - 4 - vehicle_slots(cfg), 0)
    rng = np.random.default_rng([cfg.rng_seed, bs_id, 7])
    bx, by, _ = cfg.bs_positions[bs_id]
    side = np.sign(by) if by != 0 else 1.0
    pts = np.empty((n, 3))
    pts[:, 0] = bx + rng.uniform(-25.0, 25.0, n)
    pts[:, 1] = rng.choice([-1.0, 1.0], n) * side * rng.uniform(9.0, cfg.wall_y - 0.5, n)
    pts[:, 2] = rng.uniform(1.0, 8.0, n)
    pts.setflags(write=False)
    return pts


def propagation_paths(cfg: ScenarioConfig, ue_pos, bs_id, blockers=()):
    """Per-path (complex gain, sin of angle to the array axis, delay), strongest-first order.

    Path order: direct, ground bounce, the two street walls, one slot per
    possible vehicle (a single bounce off its body centre, zero gain when the
    slot is empty), then the base station's fixed scatterers; truncated to
    ``cfg.num_paths``. A path's gain is zeroed when a vehicle cuts either of
    its legs (BS to bounce point, bounce point to UE); for the direct path
    this is exactly the LoS test.
    """
    bs = np.asarray(cfg.bs_positions[bs_id], dtype=np.float64)
    ue = np.asarray(ue_pos, dtype=np.float64)
    yaw = np.deg2rad(cfg.bs_array_yaw_deg[bs_id])
    axis = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    lam = cfg.wavelength

    def bounce(pt):
        return np.linalg.norm(pt - bs) + np.linalg.norm(ue - pt)

    # (arrival point seen from the BS, bounce point or None, length, gain, index of the vehicle itself)
    legs = [(ue, None, np.linalg.norm(ue - bs), 1.0, -1)]
    ground_img = ue * np.array([1.0, 1.0, -1.0])
    legs.append((ground_img, _plane_hit(bs, ground_img, 2, 0.0), np.linalg.norm(ground_img - bs), -GROUND_GAIN, -1))
    for wall in (cfg.wall_y, -cfg.wall_y):
        img = np.array([ue[0], 2 * wall - ue[1], ue[2]])
        legs.append((img, _plane_hit(bs, img, 1, wall), np.linalg.norm(img - bs), -WALL_GAIN, -1))
    for k in range(vehicle_slots(cfg)):
        if k < len(blockers):
            b = blockers[k]
            pt = np.array([b.cx, b.cy, 0.5 * b.height])
            legs.append((pt, pt, bounce(pt), VEHICLE_GAIN, k))
        else:
            legs.append((None, None, 0.0, 0.0, -1))
    for sc in bs_scatterers(cfg, bs_id):
        legs.append((sc, sc, bounce(sc), SCATTER_GAIN, -1))
    legs = legs[: cfg.num_paths]

    alpha = np.zeros(len(legs), dtype=np.complex128)
    sin_theta = np.zeros(len(legs))
    delay = np.zeros(len(legs))
    for p, (target, via, length, gain, own) in enumerate(legs):
        if target is None:
            continue
        u = (target - bs) / np.linalg.norm(target - bs)
        sin_theta[p] = float(u @ axis)
        delay[p] = length / SPEED_OF_LIGHT
        others = [b for j, b in enumerate(blockers) if j != own]
        if _shadowed(bs, ue, via, others):
            continue
        alpha[p] = gain * (cfg.ref_distance / length) * np.exp(-2j * np.pi * length / lam)
    return alpha, sin_theta, delay


def _plane_hit(a, b, axis, value):
    """Point where segment a-b crosses the plane ``x[axis] = value``."""
    t = (value - a[axis]) / (b[axis] - a[axis])
    return a + t * (b - a)


def _shadowed(bs, ue, bounce, blockers):
    if not blockers:
        return False
    if bounce is None:
        return not line_of_sight(tuple(bs), tuple(ue), blockers)
    return not (line_of_sight(tuple(bs), tuple(bounce), blockers) and line_of_sight(tuple(bounce), tuple(ue), blockers))


def synthesize_channel(cfg: ScenarioConfig, ue_pos, bs_id, blockers=(), seed=None):
    """Complex M x S channel matrix for a UE at ``ue_pos`` served by ``bs_id``.

    The model is fully geometric, so ``seed`` does not change the result; it
    is accepted for interface symmetry with the other generators.
    """
    if not 0 <= bs_id < cfg.num_bs:
        raise ConfigError(f"bs_id {bs_id} out of range [0, {cfg.num_bs})")
    check_ue_inside(cfg, ue_pos)
    alpha, sin_theta, delay = propagation_paths(cfg, ue_pos, bs_id, blockers)
    return channel_from_paths(alpha, sin_theta, delay, cfg.antennas, cfg.subcarriers, cfg.subcarrier_spacing)
