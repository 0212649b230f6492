import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonofuse.estimator import EstimatorState, estimate_step
from zonofuse.fusion import (
    FusionError,
    NodeEstimate,
    fuse_estimates,
    fusion_objective,
    optimal_weights,
    two_level_step,
)
from zonofuse.models import POSITION_H, Strip, constant_velocity
from zonofuse.zonotope import Zonotope, contains_point, sample_points

from conftest import member_mask, random_zonotope


def node(z, k=0, name="n"):
    return NodeEstimate(name, k, z)


def overlapping_pair(rng, n=2):
    a = random_zonotope(rng, n, 3, offset=1)
    b = random_zonotope(rng, n, 3, offset=1)
    # shift b so that it certainly shares a member of a
    shift = sample_points(a, 1, rng)[0] - sample_points(b, 1, rng)[0]
    return a, Zonotope(b.center + shift, b.generators)


def intersection_samples(sets, rng, count=10_000):
    X = sample_points(sets[0], count, rng)
    keep = np.ones(len(X), dtype=bool)
    for s in sets[1:]:
        keep &= member_mask(s, X)
    return X[keep]


def test_identical_inputs_reproduce_the_set(rng):
    z = random_zonotope(rng, 2, 3)
    fused = fuse_estimates([node(z), node(z)], [0.3, 0.7])
    assert np.allclose(fused.center, z.center, rtol=0, atol=1e-14)
    # same set: generators are the input's, split by the normalised weights
    assert np.allclose(fused.generators[:, :3] + fused.generators[:, 3:], z.generators)
    pts = sample_points(z, 2000, rng)
    assert member_mask(fused, pts).all()


def test_unit_weight_selects_first_input(rng):
    a, b = random_zonotope(rng, 2, 3), random_zonotope(rng, 2, 2)
    fused = fuse_estimates([node(a), node(b)], [1.0, 0.0])
    assert np.array_equal(fused.center, a.center)
    assert np.array_equal(fused.generators[:, :3], a.generators)
    assert not fused.generators[:, 3:].any()


def test_fusion_encloses_intersection(rng):
    for _ in range(20):
        a, b = overlapping_pair(rng)
        pts = intersection_samples([a, b], rng)
        assert len(pts) > 0
        for w in ([1.0, 1.0], optimal_weights([node(a), node(b)]), rng.uniform(0.1, 2.0, 2)):
            assert member_mask(fuse_estimates([node(a), node(b)], w), pts).all()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 2**20), min_size=2, max_size=4), st.integers(0, 2**32 - 1))
def test_weight_scaling_is_exact(raw, seed):
    rng = np.random.default_rng(seed)
    ests = [node(random_zonotope(rng, 3, 2)) for _ in raw]
    w = np.array(raw) / 1024.0  # multiples of 7 stay exact in binary
    a = fuse_estimates(ests, w)
    b = fuse_estimates(ests, 7 * w)
    assert a.equals(b)


def test_zero_weight_sum_rejected(rng):
    z = random_zonotope(rng, 2, 2)
    with pytest.raises(FusionError):
        fuse_estimates([node(z), node(z)], [1.0, -1.0])


def test_mismatched_steps_rejected(rng):
    z = random_zonotope(rng, 2, 2)
    with pytest.raises(FusionError):
        fuse_estimates([node(z, 1), node(z, 2)], [1.0, 1.0])


def test_single_estimate_gets_full_weight(rng):
    assert np.array_equal(optimal_weights([node(random_zonotope(rng, 2, 2))]), [1.0])


def test_singleton_takes_all_weight(rng):
    ests = [node(random_zonotope(rng, 2, 3)), node(Zonotope.point([0.5, 0.5]))]
    w = optimal_weights(ests)
    assert np.array_equal(w, [0.0, 1.0])
    assert fusion_objective(ests, w) == 0.0


def test_optimal_weights_beat_degenerate_and_random(rng):
    for _ in range(10):
        m = int(rng.integers(2, 5))
        ests = [node(random_zonotope(rng, 3, int(rng.integers(1, 6)), spread=rng.uniform(0.1, 3))) for _ in range(m)]
        w = optimal_weights(ests)
        assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)
        best = fusion_objective(ests, w)
        for j in range(m):
            assert best <= fusion_objective(ests, np.eye(m)[j]) + 1e-12
        for trial in rng.dirichlet(np.ones(m), 1000):
            assert best <= fusion_objective(ests, trial) + 1e-12


def test_wire_record_replays_the_fusion(rng):
    a, b = random_zonotope(rng, 4, 5), random_zonotope(rng, 4, 3)
    ests = [NodeEstimate("cv", 3, a, {"front": "healthy"}), NodeEstimate("rsu1", 3, b)]
    back = [NodeEstimate.from_record(json.loads(json.dumps(e.to_record()))) for e in ests]
    assert back[0].health == {"front": "healthy"} and back[1].k == 3
    w = optimal_weights(ests)
    assert fuse_estimates(back, w).equals(fuse_estimates(ests, w))


# ---------------------------------------------------------------- two-level step

def position_strips(x, r, sid):
    return [Strip(h, h @ x, r, sid) for h in POSITION_H]


def start_state():
    return EstimatorState(Zonotope([0, 0, 0, 0], np.diag([2.0, 2.0, 1.0, 1.0])), 0, "ego")


def test_without_peers_matches_local_step():
    sys = constant_velocity()
    strips = position_strips(np.zeros(4), 0.3, "local")
    a = two_level_step(start_state(), sys, strips)
    b = estimate_step(start_state(), sys, strips)
    assert a.current_set.equals(b.current_set) and a.faults == b.faults


def test_tighter_peer_shrinks_the_fused_set():
    sys = constant_velocity()
    local = estimate_step(start_state(), sys, position_strips(np.zeros(4), 0.5, "local"))
    peer = NodeEstimate("rsu1", 1, Zonotope([0, 0, 0, 0], np.diag([0.05, 0.05, 0.3, 0.3])))
    fused = two_level_step(start_state(), sys, position_strips(np.zeros(4), 0.5, "local"), [peer])
    size = lambda z: float(np.sum(z.generators ** 2))  # noqa: E731
    assert size(fused.current_set) <= size(local.current_set)
    assert fused.trace.peers_used == ("rsu1",)


def test_inconsistent_peer_is_left_out():
    sys = constant_velocity()
    far = NodeEstimate("rsu1", 1, Zonotope([50, 50, 0, 0], 0.1 * np.eye(4)), {"cam": "healthy"})
    st = two_level_step(start_state(), sys, position_strips(np.zeros(4), 0.3, "local"), [far])
    assert st.trace.peers_used == ()
    assert st.fault_counters["cam"] == 1
    assert contains_point(st.current_set, np.zeros(4))


def test_peer_step_must_match():
    sys = constant_velocity()
    late = NodeEstimate("rsu1", 5, Zonotope.point(np.zeros(4)))
    with pytest.raises(FusionError):
        two_level_step(start_state(), sys, (), [late])
