"""Planar visibility: field-of-view sectors and rectangle occluders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def distance_to_box(self, lower, upper) -> float:
        """Euclidean gap between this rectangle and the box ``[lower, upper]``."""
        dx = max(self.x_min - upper[0], lower[0] - self.x_max, 0.0)
        dy = max(self.y_min - upper[1], lower[1] - self.y_max, 0.0)
        return float(np.hypot(dx, dy))


def segments_blocked(origin, targets, rect: Rect) -> np.ndarray:
    """For each target, does the open segment ``origin -> target`` cross ``rect``?

    Liang-Barsky clipping, vectorised over targets. Grazing contact at a single
    point does not count as blocking.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ox, oy = float(origin[0]), float(origin[1])
    d = targets - (ox, oy)
    t0 = np.zeros(len(targets))
    t1 = np.ones(len(targets))
    ok = np.ones(len(targets), dtype=bool)
    for p, q in (
        (-d[:, 0], ox - rect.x_min),
        (d[:, 0], rect.x_max - ox),
        (-d[:, 1], oy - rect.y_min),
        (d[:, 1], rect.y_max - oy),
    ):
        parallel = p == 0
        ok &= ~(parallel & (q < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
        entering = (p < 0) & ~parallel
        leaving = (p > 0) & ~parallel
        t0 = np.where(entering, np.maximum(t0, t), t0)
        t1 = np.where(leaving, np.minimum(t1, t), t1)
    return ok & (t0 < t1)


def in_sector(sensor, targets) -> np.ndarray:
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sx, sy, heading = sensor.pose
    d = targets - (sx, sy)
    dist = np.hypot(d[:, 0], d[:, 1])
    bearing = np.arctan2(d[:, 1], d[:, 0]) - heading
    bearing = (bearing + np.pi) % (2 * np.pi) - np.pi
    return (dist <= sensor.fov_range) & (np.abs(bearing) <= sensor.fov_half_angle)


def visible_many(sensor, obstacles, targets) -> np.ndarray:
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    vis = in_sector(sensor, targets)
    for rect in obstacles:
        vis &= ~segments_blocked(sensor.pose[:2], targets, rect)
    return vis


def visible(sensor, obstacles, target) -> bool:
    """Target inside the sensor's sector with an unobstructed line of sight."""
    return bool(visible_many(sensor, obstacles, [target])[0])


def occluded_many(sensor, obstacles, targets) -> np.ndarray:
    """Targets inside the sector whose line of sight is blocked."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    return in_sector(sensor, targets) & ~visible_many(sensor, obstacles, targets)


def sidewalk_occluded(sensor, obstacles, probes) -> bool:
    return bool(occluded_many(sensor, obstacles, probes).any())


def probe_line(start, end, spacing: float = 0.25) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    count = max(2, int(np.floor(np.linalg.norm(end - start) / spacing)) + 1)
    return np.linspace(start, end, count)
