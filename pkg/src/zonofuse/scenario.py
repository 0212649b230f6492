"""Deterministic occluded-pedestrian scenarios with shared set-based estimates."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from enum import Enum

import numpy as np

from .config import ScenarioConfig
from .estimator import EstimatorState, Health, estimate_step
from .fusion import NodeEstimate, fuse_estimates, optimal_weights, two_level_step
from .geometry import Rect, occluded_many, visible, visible_many
from .models import Strip, measure, strips_from_measurement
from .zonotope import Zonotope, interval_hull, linear_map, reduce_order, volume, zonotopes_intersect

SPEED_BOUND_ID = "speed_bound"
POSITION = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])


class SpeedLevel(str, Enum):
    NOMINAL = "nominal"
    CAUTIOUS = "cautious"
    SLOW = "slow"
    VERY_SLOW = "very_slow"


@dataclass(frozen=True)
class Perception:
    ego_x: float
    ego_y: float
    occlusion_on_sidewalk: bool = False
    zebra_detected: bool = False
    pedestrian_estimate: Zonotope | None = None
    occlusion_covered: bool = False  # every hidden probe seen by a healthy external sensor
    pedestrian_reported: bool = False  # any measurement or shared estimate, even unfused


@dataclass(frozen=True)
class FaultInjection:
    sensor: str
    bias: tuple
    onset: int = 0


@dataclass
class SimReport:
    config: dict
    seed: int
    scenario_id: int
    pedestrian: bool
    sensors: list
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    path_length: float = 0.0
    elapsed: float = 0.0

    def to_ndjson(self) -> str:
        lines = [json.dumps({"type": "header", "scenario": self.scenario_id, "seed": self.seed,
                             "pedestrian": self.pedestrian, "config": self.config}, sort_keys=True)]
        lines += [json.dumps({"type": "step", **r}, sort_keys=True) for r in self.records]
        lines += [json.dumps({"type": "event", **e}, sort_keys=True) for e in self.events]
        lines.append(json.dumps({"type": "summary", **summarize(self)}, sort_keys=True))
        return "\n".join(lines) + "\n"


def position_area(z: Zonotope) -> float:
    return volume(linear_map(POSITION, z))


def _position_box(z: Zonotope):
    hull = interval_hull(z)
    return hull.lower[:2], hull.upper[:2]


def near_corridor(p: Perception, cfg: ScenarioConfig) -> bool:
    if p.pedestrian_estimate is None:
        return False
    lo, hi = _position_box(p.pedestrian_estimate)
    lane = cfg.road.ego_lane
    corridor = Rect(p.ego_x - cfg.ego.radius, p.ego_x + cfg.policy.corridor_length, lane[0], lane[1])
    return corridor.distance_to_box(lo, hi) < cfg.policy.proximity_threshold


def speed_decision(p: Perception, cfg: ScenarioConfig) -> SpeedLevel:
    """Most restrictive applicable level wins."""
    if near_corridor(p, cfg):
        return SpeedLevel.VERY_SLOW
    cleared = p.occlusion_covered and p.pedestrian_estimate is None and not p.pedestrian_reported
    if p.zebra_detected and not cleared:
        return SpeedLevel.SLOW
    if p.occlusion_on_sidewalk and not p.occlusion_covered:
        return SpeedLevel.CAUTIOUS
    return SpeedLevel.NOMINAL


def emergency_needed(p: Perception, cfg: ScenarioConfig) -> bool:
    """Guaranteed pedestrian set touching the lane just ahead of the ego.

    The zone runs from the ego's rear edge to ``emergency_radius`` ahead,
    across the lane, widened by the proximity threshold.
    """
    if p.pedestrian_estimate is None:
        return False
    lo, hi = _position_box(p.pedestrian_estimate)
    lane = cfg.road.ego_lane
    zone = Rect(p.ego_x - cfg.ego.radius, p.ego_x + cfg.policy.emergency_radius, lane[0], lane[1])
    return zone.distance_to_box(lo, hi) < cfg.policy.proximity_threshold


class _Pedestrian:
    """Waits on the sidewalk, then walks straight across the crossing.

    Position advances with the previous velocity and velocity changes by at
    most ``accel * dt`` per step, so every step is a constant-velocity
    transition plus a bounded velocity increment.
    """

    def __init__(self, spec, target_y: float, cross_start: float, walk_speed: float, dt: float,
                 zebra_x: float = 0.0):
        self.trigger_x = None if spec.trigger_distance is None else zebra_x - spec.trigger_distance
        self.start = None if self.trigger_x is not None else cross_start
        self.state = np.array([spec.spawn[0], spec.spawn[1], 0.0, 0.0])
        self.target_y = target_y
        self.cross_start = cross_start
        self.walk_speed = walk_speed
        self.dv = spec.accel * dt
        self.dt = dt
        self.radius = spec.radius

    def step(self, t: float, ego_x: float):
        px, py, vx, vy = self.state
        remaining = self.target_y - py
        if self.start is None and ego_x >= self.trigger_x:
            self.start = t + self.cross_start
        if self.start is None or t < self.start:
            want = 0.0
        else:
            # brake so that the far sidewalk is reached at rest
            stop_dist = vy * vy / (2 * self.dv / self.dt) if vy > 0 else 0.0
            want = 0.0 if remaining <= stop_dist + vy * self.dt else self.walk_speed
        new_vy = vy + float(np.clip(want - vy, -self.dv, self.dv))
        self.state = np.array([px + self.dt * vx, py + self.dt * vy, vx, new_vy])


def _sensor_pose(spec, ego_xy, cv_xy, cv_heading):
    if spec.mount == "ego":
        return ego_xy[0] + spec.offset[0], ego_xy[1] + spec.offset[1], math.radians(spec.heading_deg)
    if spec.mount == "cv":
        return (cv_xy[0] + spec.offset[0], cv_xy[1] + spec.offset[1],
                cv_heading + math.radians(spec.heading_deg))
    return spec.position[0], spec.position[1], math.radians(spec.heading_deg)


def _init_set(strips_by_row, v_max: float) -> Zonotope:
    """Box consistent with one position fix and any speed up to ``v_max``."""
    y = np.array([s.y for s in strips_by_row])
    r = np.array([s.r for s in strips_by_row])
    return Zonotope(np.array([y[0], y[1], 0.0, 0.0]), np.diag([r[0], r[1], v_max, v_max]))


def run_scenario(cfg: ScenarioConfig, faults=(), trace: bool = True) -> SimReport:
    """Step the world until the ego reaches the end of its route or the horizon."""
    root = np.random.default_rng(cfg.seed)
    world_rng, noise_rng, link_rng = root.spawn(3)
    sys = cfg.system()
    dt = cfg.dt
    est = cfg.estimator
    road = cfg.road
    pol = cfg.policy

    ped_spec = cfg.pedestrian
    cross_start = ped_spec.cross_start + world_rng.uniform(-1, 1) * ped_spec.cross_start_jitter
    walk_speed = ped_spec.walk_speed + world_rng.uniform(-1, 1) * ped_spec.walk_speed_jitter
    ped = _Pedestrian(ped_spec, road.far_sidewalk_y, cross_start, walk_speed, dt, road.zebra_x) if cfg.pedestrian_present else None

    models = {s.id: s.model() for s in cfg.sensors}
    mount_of = {s.id: s.mount for s in cfg.sensors}
    specs = {s.id: s for s in cfg.sensors}
    nodes = cfg.mounts()
    peers = [m for m in nodes if m != "ego"]
    faults = list(faults)
    for f in faults:
        if f.sensor not in models:
            raise ValueError(f"fault targets unknown sensor {f.sensor!r}")

    probes = np.vstack([road.sidewalk_probes(), road.crossing_probes()])
    sidewalk_n = len(road.sidewalk_probes())

    ego_x, ego_y, speed = cfg.ego.x0, cfg.ego.y, cfg.ego.nominal_speed
    cv = cfg.connected_vehicle
    cv_x = cv.x0 if cv else 0.0
    tracks: dict[str, EstimatorState | None] = {m: None for m in nodes}
    report = SimReport(cfg.source, cfg.seed, cfg.scenario_id, cfg.pedestrian_present,
                       [mount_of[s] for s in models])
    emergency_active = False
    was_failed: dict = {}
    last_info = {m: None for m in nodes}
    memory: dict = {m: {} for m in nodes}  # fault records outlive dropped tracks
    timeout = int(round(est.track_timeout / dt))

    for k in range(cfg.horizon):
        t = k * dt
        truth = ped.state.copy() if ped is not None else None
        cv_xy = (cv_x, cv.y) if cv else (0.0, 0.0)
        cv_heading = math.radians(cv.heading_deg) if cv else 0.0
        sensors = {}
        for sid, m in models.items():
            sensors[sid] = m.moved_to(*_sensor_pose(specs[sid], (ego_x, ego_y), cv_xy, cv_heading))
        for f in faults:
            if k >= f.onset:
                sensors[f.sensor] = _biased(sensors[f.sensor], f.bias)

        # bounded-noise measurements from every sensor with line of sight
        vis, strips = {}, {m: [] for m in nodes}
        for sid, s in sensors.items():
            vis[sid] = ped is not None and visible(s, cfg.obstacles, truth[:2])
            if vis[sid]:
                y = measure(s, truth, noise_rng)
                strips[mount_of[sid]].extend(strips_from_measurement(s, y))

        # first level at every peer node
        informed = {}
        for m in peers:
            tracks[m], informed[m] = _local_update(tracks[m], strips[m], sys, est, m, k, memory[m])
        delivered = {m: link_rng.uniform() >= cfg.message_loss for m in peers}
        shared = []
        for m in peers:
            st = tracks[m]
            # a node shares only while healthy measurements feed it; a stale
            # prediction-only set adds nothing but width to the fusion
            if st is None or not informed[m] or not delivered[m]:
                continue
            health = {sid: st.status_of(sid).value for sid in models if mount_of[sid] == m}
            shared.append(NodeEstimate(m, k, st.current_set, health))

        # second level at the ego
        tracks["ego"], informed["ego"] = _ego_update(tracks["ego"], strips["ego"], shared, sys, est, k,
                                                     memory["ego"])
        for m in nodes:
            if tracks[m] is not None:
                memory[m] = dict(tracks[m].faults)
            if informed[m]:
                last_info[m] = k
            elif tracks[m] is not None and k - last_info[m] > timeout:
                # prediction-only sets only grow; past the timeout the track is dropped
                tracks[m] = None
        ego_track = tracks["ego"]

        # perception and decision
        ego_sensor = next(sensors[sid] for sid in models if mount_of[sid] == "ego")
        occl = bool(occluded_many(ego_sensor, cfg.obstacles, probes[:sidewalk_n]).any())
        external = [s for sid, s in sensors.items()
                    if mount_of[sid] != "ego" and delivered[mount_of[sid]]
                    and _trusted(memory["ego"], sid) and _trusted(memory[mount_of[sid]], sid)]
        covered = False
        if external:
            seen = visible_many(ego_sensor, cfg.obstacles, probes)
            for s in external:
                seen |= visible_many(s, cfg.obstacles, probes)
            covered = bool(seen.all())
        zebra = ego_x - cfg.ego.radius <= road.zebra_x + road.zebra_half_width and \
            road.zebra_x - road.zebra_half_width - ego_x <= pol.zebra_lookahead
        reported = bool(shared) or bool(strips["ego"])
        perception = Perception(ego_x, ego_y, occl, zebra,
                                ego_track.current_set if ego_track is not None else None, covered, reported)
        level = speed_decision(perception, cfg)
        target = cfg.policy.multipliers[level.value] * cfg.ego.nominal_speed

        events = []
        if emergency_needed(perception, cfg):
            if not emergency_active:
                events.append({"k": k, "t": t, "kind": "emergency_brake"})
            emergency_active = True
            speed = 0.0
        else:
            emergency_active = False
            if speed < target:
                speed = min(target, speed + cfg.ego.accel * dt)
            else:
                speed = max(target, speed - cfg.ego.decel * dt)
        for node, st in tracks.items():
            for sid, f in (st.faults.items() if st is not None else ()):
                failed = f.status is Health.FAILED
                if failed and not was_failed.get((node, sid), False):
                    events.append({"k": k, "t": t, "kind": "sensor_failed", "sensor": sid, "node": node})
                was_failed[(node, sid)] = failed
        report.events.extend(events)

        sep = math.hypot(truth[0] - ego_x, truth[1] - ego_y) if truth is not None else None
        rec = {
            "k": k,
            "t": t,
            "ego": {"x": ego_x, "y": ego_y, "speed": speed},
            "level": level.value,
            "target_speed": target,
            "pedestrian": truth.tolist() if truth is not None else None,
            "separation": sep,
            "collision": sep is not None and sep < cfg.ego.radius + cfg.pedestrian.radius,
            "visible": vis,
            "occluded": occl,
            "covered": covered,
            "zebra_ahead": bool(zebra),
            "cv": {"x": cv_x, "y": cv.y} if cv else None,
            "nodes": {
                m: {"set": st.current_set.to_record(), "area": position_area(st.current_set),
                    "frobenius": float(np.sum(st.current_set.generators ** 2)),
                    "faults": [f.to_record() for f in st.faults.values()]}
                for m, st in tracks.items() if st is not None
            },
            "shared": [e.node_id for e in shared],
        }
        if trace:
            rec["traces"] = {m: st.trace.to_record() for m, st in tracks.items()
                             if st is not None and st.trace is not None and st.k == k}
        report.records.append(rec)

        # advance the world
        ego_x += speed * dt
        if cv:
            cv_x += cv.speed * dt
        if ped is not None:
            ped.step(t, ego_x)
        if ego_x >= cfg.ego.end_x:
            break

    report.path_length = ego_x - cfg.ego.x0
    report.elapsed = len(report.records) * dt
    return report


def _biased(sensor, bias):
    return replace(sensor, bias=np.broadcast_to(np.asarray(bias, dtype=float), (sensor.p,)).copy())


def _trusted(faults: dict, sensor_id) -> bool:
    f = faults.get(sensor_id)
    return f is None or f.status is not Health.FAILED


def speed_bound_strips(v_max: float) -> list[Strip]:
    """Known physical limit ``|v| <= v_max`` per axis, applied like a measurement."""
    return [Strip([0, 0, 1, 0], 0.0, v_max, SPEED_BOUND_ID), Strip([0, 0, 0, 1], 0.0, v_max, SPEED_BOUND_ID)]


def _measured(state) -> bool:
    """Did this step's correction use at least one real measurement strip?"""
    return any(st.sensor_id != SPEED_BOUND_ID for st in state.trace.strips_used)


def _local_update(state, strips, sys, est, node_id, k, faults):
    """First-level update; returns the new state and whether measurements fed it."""
    if state is None:
        strips = [st for st in strips if _trusted(faults, st.sensor_id)]
        if not strips:
            return None, False
        return EstimatorState(_init_set(strips, est.v_max), k, node_id, dict(faults)), True
    state = estimate_step(state, sys, strips + speed_bound_strips(est.v_max), est.max_order,
                          est.fault_threshold)
    return state, _measured(state)


def _consistent_group(estimates):
    """Largest subset of pairwise-intersecting estimates; empty when the largest is not unique.

    With no prior set to check against, conflicting sources cannot be told
    apart, so the ego waits rather than fuse them.
    """
    n = len(estimates)
    if n <= 1:
        return list(estimates)
    ok = np.ones((n, n), dtype=bool)
    for i, j in combinations(range(n), 2):
        ok[i, j] = ok[j, i] = zonotopes_intersect(estimates[i].estimate, estimates[j].estimate)
    for size in range(n, 0, -1):
        groups = [g for g in combinations(range(n), size) if ok[np.ix_(g, g)].all()]
        if groups:
            return [estimates[i] for i in groups[0]] if len(groups) == 1 else []
    return []


def _ego_update(state, strips, shared, sys, est, k, faults):
    if state is not None:
        strips = strips + speed_bound_strips(est.v_max)
        state = two_level_step(state, sys, strips, shared, est.max_order, est.fault_threshold)
        return state, _measured(state) or bool(state.trace.peers_used)
    strips = [st for st in strips if _trusted(faults, st.sensor_id)]
    inputs = [e for e in shared if all(_trusted(faults, sid) for sid in e.health)]
    if strips:
        inputs.insert(0, NodeEstimate("ego", k, _init_set(strips, est.v_max)))
    inputs = _consistent_group(inputs)
    if not inputs:
        return None, False
    fused = reduce_order(fuse_estimates(inputs, optimal_weights(inputs)), est.max_order)
    return EstimatorState(fused, k, "ego", dict(faults)), True


def summarize(report: SimReport) -> dict:
    recs = report.records
    if not recs:
        raise ValueError("empty report")
    avg = report.path_length / report.elapsed
    det = None
    for r in recs:
        if "ego" in r["nodes"] and r["separation"] is not None:
            det = r["separation"]
            break
    seps = [r["separation"] for r in recs if r["separation"] is not None]
    return {
        "scenario": report.scenario_id,
        "pedestrian": report.pedestrian,
        "sensors": "+".join(dict.fromkeys(report.sensors)),
        "avg_speed": avg,
        "detection_distance": det,
        "min_separation": min(seps) if seps else None,
        "collisions": sum(1 for r in recs if r["collision"]),
        "emergency_events": sum(1 for e in report.events if e["kind"] == "emergency_brake"),
        "failed_sensors": sorted({e["sensor"] for e in report.events if e["kind"] == "sensor_failed"}),
        "fused_areas": [r["nodes"]["ego"]["area"] if "ego" in r["nodes"] else None for r in recs],
    }
