"""Second fusion level: intersecting zonotopic estimates shared between nodes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .estimator import (
    FAULT_THRESHOLD,
    EstimatorState,
    FaultStatus,
    Health,
    _advance,
    estimate_step,
)
from .models import LinearSystem
from .zonotope import DEFAULT_MAX_ORDER, Zonotope, reduce_order, zonotopes_intersect


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class NodeEstimate:
    node_id: str
    k: int
    estimate: Zonotope
    health: dict = field(default_factory=dict)  # contributing sensor id -> status string

    @property
    def sensors(self) -> list[str]:
        return list(self.health)

    def to_record(self) -> dict:
        return {
            "node_id": self.node_id,
            "k": self.k,
            "center": self.estimate.center.tolist(),
            "generators": self.estimate.generators.tolist(),
            "health": [{"sensor_id": sid, "status": st} for sid, st in self.health.items()],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "NodeEstimate":
        c = np.array(rec["center"], dtype=float)
        G = np.array(rec["generators"], dtype=float).reshape(c.shape[0], -1)
        health = {h["sensor_id"]: h["status"] for h in rec.get("health", [])}
        return cls(rec["node_id"], int(rec["k"]), Zonotope(c, G), health)


def fuse_estimates(estimates, weights) -> Zonotope:
    """Weighted enclosure of the intersection of several zonotopes.

    Centre is the weighted mean of the centres; generators are the
    weight-scaled concatenation divided by the weight sum.
    """
    estimates = list(estimates)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not estimates:
        raise FusionError("nothing to fuse")
    if w.shape[0] != len(estimates):
        raise FusionError(f"{w.shape[0]} weights for {len(estimates)} estimates")
    steps = {e.k for e in estimates}
    if len(steps) > 1:
        raise FusionError(f"estimates come from different steps: {sorted(steps)}")
    dims = {e.estimate.dim for e in estimates}
    if len(dims) > 1:
        raise FusionError(f"estimates have different dimensions: {sorted(dims)}")
    # normalise in exact rational arithmetic so that rescaled weights give
    # bit-identical results
    exact = [Fraction(float(x)) for x in w]
    total = sum(exact)
    if total == 0:
        raise FusionError("weights sum to zero")
    wn = [float(x / total) for x in exact]
    c = sum(wj * e.estimate.center for wj, e in zip(wn, estimates))
    G = np.hstack([wj * e.estimate.generators for wj, e in zip(wn, estimates)])
    return Zonotope(c, G)


def fusion_objective(estimates, weights) -> float:
    return float(np.sum(fuse_estimates(estimates, weights).generators ** 2))


def optimal_weights(estimates) -> np.ndarray:
    """Simplex weights minimising the squared Frobenius norm of the fused generators.

    With ``sum w = 1`` the objective is ``sum_j w_j^2 a_j`` where
    ``a_j = ||G_j||_F^2``, minimised by ``w_j`` proportional to ``1 / a_j``.
    Singletons (``a_j = 0``) share all the mass.
    """
    estimates = list(estimates)
    if not estimates:
        raise FusionError("nothing to weigh")
    a = np.array([np.sum(e.estimate.generators ** 2) for e in estimates])
    zero = a == 0
    if zero.any():
        return zero / zero.sum()
    inv = 1.0 / a
    return inv / inv.sum()


def two_level_step(node: EstimatorState, sys: LinearSystem, local_strips=(), peer_estimates=(),
                   max_order: float = DEFAULT_MAX_ORDER,
                   fault_threshold: int = FAULT_THRESHOLD) -> EstimatorState:
    """Local strip fusion, then fusion with the peers' estimates of the same step.

    Each peer estimate is checked against this node's predicted set; a peer
    whose set cannot intersect it counts as a miss for every sensor that
    contributed to that estimate. Peers that miss this step or whose sensors
    are failed are left out of the fusion.
    """
    local = estimate_step(node, sys, local_strips, max_order, fault_threshold)
    peers = list(peer_estimates)
    if not peers:
        return local
    for p in peers:
        if p.k != local.k:
            raise FusionError(f"peer {p.node_id} is at step {p.k}, node is at {local.k}")

    z_pred = local.trace.predicted
    faults = dict(local.faults)
    accepted = []
    statuses = list(local.trace.faults)
    for p in peers:
        miss = not zonotopes_intersect(z_pred, p.estimate)
        ids = p.sensors or [p.node_id]
        for sid in ids:
            f = _advance(faults.get(sid, FaultStatus(sid)), miss, fault_threshold)
            faults[sid] = f
            statuses.append(f)
        if not miss and all(faults[sid].status is Health.HEALTHY for sid in ids):
            accepted.append(p)

    own = NodeEstimate(node.node_id, local.k, local.current_set)
    inputs = [own] + accepted
    fused = reduce_order(fuse_estimates(inputs, optimal_weights(inputs)), max_order)
    trace = replace(local.trace, corrected=fused, faults=tuple(statuses),
                    peers_used=tuple(p.node_id for p in accepted))
    return EstimatorState(fused, local.k, node.node_id, faults, trace)
