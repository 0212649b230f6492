"""Linear process and sensor models with bounded noise."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .zonotope import DimensionError, Zonotope, sample_points


class ObservabilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Strip:
    """Measurement-consistent set ``{x : |h x - y| <= r}``."""

    h: np.ndarray
    y: float
    r: float
    sensor_id: str = ""

    def __post_init__(self):
        h = np.array(self.h, dtype=float).reshape(-1)
        if not np.any(h):
            raise ValueError("strip normal must be nonzero")
        if not self.r > 0:
            raise ValueError(f"strip half-width must be positive, got {self.r}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "r", float(self.r))

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(abs(self.h @ np.asarray(x, dtype=float) - self.y) <= self.r + tol)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    F: np.ndarray
    process_noise: Zonotope
    horizon: int = 100
    dt: float = 0.1

    def __post_init__(self):
        F = np.atleast_2d(np.array(self.F, dtype=float))
        if F.shape[0] != F.shape[1]:
            raise DimensionError(f"dynamics matrix must be square, got {F.shape}")
        if self.process_noise.dim != F.shape[0]:
            raise DimensionError("process noise dimension differs from state dimension")
        if self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        object.__setattr__(self, "F", F)

    @property
    def n(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True, eq=False)
class SensorModel:
    id: str
    H: np.ndarray
    noise_radii: np.ndarray
    pose: tuple = (0.0, 0.0, 0.0)  # x [m], y [m], heading [rad]
    fov_range: float = 50.0
    fov_half_angle: float = np.pi / 3
    bias: np.ndarray = field(default=None)

    def __post_init__(self):
        H = np.atleast_2d(np.array(self.H, dtype=float))
        r = np.array(self.noise_radii, dtype=float).reshape(-1)
        if r.shape[0] != H.shape[0]:
            raise DimensionError(f"sensor {self.id}: {r.shape[0]} radii for {H.shape[0]} rows")
        if np.any(r <= 0):
            raise ValueError(f"sensor {self.id}: noise radii must be positive")
        bias = np.zeros(H.shape[0]) if self.bias is None else np.array(self.bias, dtype=float).reshape(-1)
        if bias.shape[0] == 1 and H.shape[0] > 1:
            bias = np.full(H.shape[0], bias[0])
        if bias.shape[0] != H.shape[0]:
            raise DimensionError(f"sensor {self.id}: bias has {bias.shape[0]} entries")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "noise_radii", r)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "pose", tuple(float(v) for v in self.pose))

    @property
    def p(self) -> int:
        return self.H.shape[0]

    def moved_to(self, x: float, y: float, heading: float | None = None) -> "SensorModel":
        return replace(self, pose=(x, y, self.pose[2] if heading is None else heading))


def sample_noise(z: Zonotope, rng: np.random.Generator, corners: bool = False) -> np.ndarray:
    return sample_points(z, 1, rng, corners)[0]


def step_truth(sys: LinearSystem, x, rng: np.random.Generator, corners: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise DimensionError(f"state has shape {x.shape}, expected ({sys.n},)")
    return sys.F @ x + sample_noise(sys.process_noise, rng, corners)


def measure(sensor: SensorModel, x, rng: np.random.Generator, corners: bool = False) -> np.ndarray:
    """``y = H x + v`` with ``v_j`` uniform in ``[-r_j, r_j]``, plus any injected bias."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != sensor.H.shape[1]:
        raise DimensionError(f"sensor {sensor.id} expects state of length {sensor.H.shape[1]}")
    if corners:
        v = rng.choice([-1.0, 1.0], size=sensor.p) * sensor.noise_radii
    else:
        v = rng.uniform(-sensor.noise_radii, sensor.noise_radii)
    return sensor.H @ x + v + sensor.bias


def strips_from_measurement(sensor: SensorModel, y) -> list[Strip]:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != sensor.p:
        raise DimensionError(f"sensor {sensor.id}: measurement has {y.shape[0]} rows, expected {sensor.p}")
    return [Strip(sensor.H[j], y[j], sensor.noise_radii[j], sensor.id) for j in range(sensor.p)]


def observability_matrix(F, H) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    blocks, M = [], H
    for _ in range(F.shape[0]):
        blocks.append(M)
        M = M @ F
    return np.vstack(blocks)


def is_observable(F, H) -> bool:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    return np.linalg.matrix_rank(observability_matrix(F, H)) == F.shape[0]


def check_observable(sys: LinearSystem, sensors) -> None:
    H = np.vstack([s.H for s in sensors])
    if not is_observable(sys.F, H):
        raise ObservabilityError("(F, H) pair is not observable")


def constant_velocity(dt: float = 0.1, pos_noise: float = 0.01, vel_noise: float = 0.15,
                      horizon: int = 600) -> LinearSystem:
    """Planar constant-velocity model, state ``(px, py, vx, vy)``."""
    F = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    Q = Zonotope(np.zeros(4), np.diag([pos_noise, pos_noise, vel_noise, vel_noise]))
    return LinearSystem(F, Q, horizon=horizon, dt=dt)


POSITION_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
