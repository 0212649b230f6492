"""Per-node set-membership filter with strip correction and fault flagging."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .models import LinearSystem
from .zonotope import (
    DEFAULT_MAX_ORDER,
    DimensionError,
    Zonotope,
    linear_map,
    minkowski_sum,
    reduce_order,
    strip_intersection_empty,
)

FAULT_THRESHOLD = 3


class Health(str, Enum):
    HEALTHY = "healthy"
    SUSPECT = "suspect"
    FAILED = "failed"


@dataclass(frozen=True)
class FaultStatus:
    sensor_id: str
    status: Health = Health.HEALTHY
    consecutive_misses: int = 0
    consecutive_hits: int = 0  # consistent steps since failure, drives re-entry

    def to_record(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "status": self.status.value,
            "consecutive_misses": self.consecutive_misses,
        }


@dataclass(frozen=True)
class StepTrace:
    k: int
    predicted: Zonotope
    strips_used: tuple
    lambdas: tuple
    corrected: Zonotope
    faults: tuple
    peers_used: tuple = ()  # node ids fused at the second level

    def to_record(self) -> dict:
        return {
            "k": self.k,
            "predicted": self.predicted.to_record(),
            "strips_used": [
                {"sensor_id": s.sensor_id, "h": s.h.tolist(), "y": s.y, "r": s.r}
                for s in self.strips_used
            ],
            "lambdas": [np.asarray(lam).tolist() for lam in self.lambdas],
            "corrected": self.corrected.to_record(),
            "faults": [f.to_record() for f in self.faults],
            "peers_used": list(self.peers_used),
        }


@dataclass(frozen=True)
class EstimatorState:
    current_set: Zonotope
    k: int = 0
    node_id: str = ""
    faults: dict = field(default_factory=dict)
    trace: StepTrace | None = None

    @property
    def fault_counters(self) -> dict:
        return {sid: f.consecutive_misses for sid, f in self.faults.items()}

    def status_of(self, sensor_id: str) -> Health:
        f = self.faults.get(sensor_id)
        return f.status if f is not None else Health.HEALTHY


def predict(z: Zonotope, sys: LinearSystem) -> Zonotope:
    """Reachable set one step ahead: ``F z (+) Z_Q``."""
    if z.dim != sys.n:
        raise DimensionError(f"set has dimension {z.dim}, system has {sys.n}")
    return minkowski_sum(linear_map(sys.F, z), sys.process_noise)


def _check_strips(z: Zonotope, strips):
    for s in strips:
        if s.h.shape[0] != z.dim:
            raise DimensionError(f"strip normal has length {s.h.shape[0]}, expected {z.dim}")


def correct(z_pred: Zonotope, strips, lambdas) -> Zonotope:
    """Zonotope enclosing ``z_pred`` intersected with every strip, for given gains.

    ``c = c_pred + sum_j lam_j (y_j - h_j c_pred)``
    ``G = [(I - sum_j lam_j h_j) G_pred, lam_1 r_1, ..., lam_m r_m]``
    """
    strips = list(strips)
    lambdas = [np.asarray(lam, dtype=float).reshape(-1) for lam in lambdas]
    if len(strips) != len(lambdas):
        raise ValueError(f"{len(strips)} strips but {len(lambdas)} gain vectors")
    _check_strips(z_pred, strips)
    n = z_pred.dim
    c = z_pred.center.copy()
    M = np.eye(n)
    extra = np.zeros((n, len(strips)))
    for j, (s, lam) in enumerate(zip(strips, lambdas)):
        if lam.shape[0] != n:
            raise DimensionError(f"gain {j} has length {lam.shape[0]}, expected {n}")
        c += lam * (s.y - s.h @ z_pred.center)
        M -= np.outer(lam, s.h)
        extra[:, j] = lam * s.r
    return Zonotope(c, np.hstack([M @ z_pred.generators, extra]))


def correction_objective(z_pred: Zonotope, strips, lambdas) -> float:
    """Squared Frobenius norm of the corrected generator matrix."""
    return float(np.sum(correct(z_pred, strips, lambdas).generators ** 2))


def optimal_lambdas(z_pred: Zonotope, strips) -> list[np.ndarray]:
    """Gains minimising the squared Frobenius norm of the corrected generators.

    The objective ``||(I - L H) G||_F^2 + ||L R||_F^2`` is a convex quadratic
    in ``L = [lam_1 ... lam_m]``; setting its gradient to zero gives
    ``L (H P H^T + R^2) = P H^T`` with ``P = G G^T``. ``R^2`` is positive
    definite because every strip has ``r > 0``.
    """
    strips = list(strips)
    if not strips:
        return []
    _check_strips(z_pred, strips)
    H = np.vstack([s.h for s in strips])
    r = np.array([s.r for s in strips])
    P = z_pred.generators @ z_pred.generators.T
    S = H @ P @ H.T + np.diag(r**2)
    L = np.linalg.solve(S, H @ P).T  # S symmetric, so (S^-1 H P)^T = P H^T S^-1
    return [L[:, j].copy() for j in range(len(strips))]


def stationarity_residual(z_pred: Zonotope, strips, lambdas) -> float:
    """Max-abs gradient of the Frobenius objective at ``lambdas``."""
    H = np.vstack([s.h for s in strips])
    r = np.array([s.r for s in strips])
    L = np.column_stack([np.asarray(lam, dtype=float) for lam in lambdas])
    P = z_pred.generators @ z_pred.generators.T
    grad = -2 * (np.eye(z_pred.dim) - L @ H) @ P @ H.T + 2 * L @ np.diag(r**2)
    return float(np.abs(grad).max())


def check_consistency(z_pred: Zonotope, strips, state: EstimatorState,
                      fault_threshold: int = FAULT_THRESHOLD) -> list[FaultStatus]:
    """Update per-sensor fault status from this step's strips.

    A sensor misses when any of its strips cannot intersect ``z_pred``. One
    miss makes it suspect, ``fault_threshold`` consecutive misses make it
    failed. A failed sensor returns to healthy after ``fault_threshold``
    consecutive consistent steps.
    """
    missed: dict[str, bool] = {}
    for s in strips:
        missed[s.sensor_id] = missed.get(s.sensor_id, False) or strip_intersection_empty(z_pred, s)
    out = []
    for sid, miss in missed.items():
        out.append(_advance(state.faults.get(sid, FaultStatus(sid)), miss, fault_threshold))
    return out


def _advance(f: FaultStatus, miss: bool, threshold: int) -> FaultStatus:
    if miss:
        misses = f.consecutive_misses + 1
        failed = f.status is Health.FAILED or misses >= threshold
        return FaultStatus(f.sensor_id, Health.FAILED if failed else Health.SUSPECT, misses, 0)
    if f.status is Health.FAILED:
        hits = f.consecutive_hits + 1
        if hits >= threshold:
            return FaultStatus(f.sensor_id)
        return replace(f, consecutive_hits=hits)
    return FaultStatus(f.sensor_id)


def estimate_step(state: EstimatorState, sys: LinearSystem, strips=(),
                  max_order: float = DEFAULT_MAX_ORDER,
                  fault_threshold: int = FAULT_THRESHOLD) -> EstimatorState:
    """predict -> consistency check -> optimal gains -> correct -> reduce."""
    strips = list(strips)
    z_pred = predict(state.current_set, sys)
    statuses = check_consistency(z_pred, strips, state, fault_threshold)
    faults = dict(state.faults)
    faults.update({f.sensor_id: f for f in statuses})
    # only sensors that are healthy after this step's check contribute
    used = [s for s in strips if faults[s.sensor_id].status is Health.HEALTHY]
    lambdas = optimal_lambdas(z_pred, used)
    corrected = correct(z_pred, used, lambdas) if used else z_pred
    corrected = reduce_order(corrected, max_order)
    k = state.k + 1
    trace = StepTrace(k, z_pred, tuple(used), tuple(lambdas), corrected, tuple(statuses))
    return EstimatorState(corrected, k, state.node_id, faults, trace)
