import numpy as np
import pytest

from zonofuse.models import (
    POSITION_H,
    LinearSystem,
    ObservabilityError,
    SensorModel,
    Strip,
    check_observable,
    constant_velocity,
    is_observable,
    measure,
    step_truth,
    strips_from_measurement,
)
from zonofuse.zonotope import DimensionError, Zonotope, contains_point


def test_strip_validation():
    with pytest.raises(ValueError):
        Strip([0.0, 0.0], 1.0, 0.1)
    with pytest.raises(ValueError):
        Strip([1.0], 1.0, 0.0)


def test_system_validation():
    with pytest.raises(DimensionError):
        LinearSystem(np.ones((2, 3)), Zonotope.point([0, 0]))
    with pytest.raises(DimensionError):
        LinearSystem(np.eye(2), Zonotope.point([0, 0, 0]))


def test_sensor_radii_must_be_positive():
    with pytest.raises(ValueError):
        SensorModel("s", np.eye(2), [0.1, 0.0])


def test_singleton_noise_identity_dynamics_keeps_state(rng):
    sys = LinearSystem(np.eye(3), Zonotope.point(np.zeros(3)))
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(step_truth(sys, x, rng), x)


def test_process_noise_samples_lie_in_the_noise_set(rng):
    sys = constant_velocity()
    x = np.zeros(4)
    for corners in (False, True):
        for _ in range(200):
            w = step_truth(sys, x, rng, corners) - sys.F @ x
            assert contains_point(sys.process_noise, w)


def test_process_noise_mean(rng):
    Q = Zonotope([0.5, -1.0], [[0.2, 0.1], [0.0, 0.3]])
    sys = LinearSystem(np.zeros((2, 2)), Q)
    W = np.array([step_truth(sys, np.zeros(2), rng) for _ in range(10_000)])
    # uniform beta on [-1, 1] has variance 1/3 per generator
    sigma = np.sqrt((Q.generators ** 2).sum(axis=1) / 3 / len(W))
    assert np.all(np.abs(W.mean(axis=0) - Q.center) <= 3 * sigma)


def test_measurement_noise_is_bounded(rng):
    s = SensorModel("s", POSITION_H, [0.3, 0.2])
    x = np.array([4.0, 1.0, 0.5, -0.5])
    Y = np.array([measure(s, x, rng) for _ in range(2000)])
    assert np.all(np.abs(Y - POSITION_H @ x) <= [0.3, 0.2])


def test_tiny_radii_measure_the_projection(rng):
    s = SensorModel("s", POSITION_H, [1e-12, 1e-12])
    x = np.array([4.0, 1.0, 0.5, -0.5])
    assert np.allclose(measure(s, x, rng), [4.0, 1.0], atol=1e-11)


def test_position_sensor_along_simulated_trajectory(rng):
    sys = constant_velocity()
    s = SensorModel("s", POSITION_H, [0.3, 0.3])
    x = np.array([0.0, 0.0, 1.0, 0.5])
    for _ in range(100):
        x = step_truth(sys, x, rng)
        y = measure(s, x, rng)
        assert np.all(np.abs(y - x[:2]) <= 0.3)


def test_bias_shifts_measurement(rng):
    s = SensorModel("s", POSITION_H, [1e-12, 1e-12], bias=[10.0])
    assert np.allclose(measure(s, np.zeros(4), rng), [10.0, 10.0])


def test_scalar_sensor_gives_one_strip():
    s = SensorModel("s", [[1.0, 0.0]], [0.5])
    (strip,) = strips_from_measurement(s, [2.0])
    assert np.array_equal(strip.h, [1.0, 0.0]) and strip.y == 2.0 and strip.r == 0.5
    assert strip.sensor_id == "s"


def test_position_sensor_gives_orthogonal_strips():
    s = SensorModel("s", POSITION_H, [0.3, 0.2])
    a, b = strips_from_measurement(s, [1.0, 2.0])
    assert a.h @ b.h == 0
    # the two strips intersect in the rectangle [0.7, 1.3] x [1.8, 2.2]
    for x, inside in [((1.29, 2.19), True), ((1.31, 2.0), False), ((1.0, 1.79), False)]:
        p = np.array([*x, 0.0, 0.0])
        assert (a.contains(p) and b.contains(p)) == inside


def test_measurement_row_count_checked():
    with pytest.raises(DimensionError):
        strips_from_measurement(SensorModel("s", POSITION_H, [0.3, 0.3]), [1.0])


def test_truth_satisfies_every_strip(rng):
    sys = constant_velocity()
    sensors = [SensorModel(f"s{i}", POSITION_H, rng.uniform(0.05, 0.5, 2)) for i in range(4)]
    x = np.array([0.0, 0.0, 1.0, 0.0])
    violations = 0
    for k in range(2500):
        x = step_truth(sys, x, rng, corners=k % 5 == 0)
        for s in sensors:
            y = measure(s, x, rng, corners=k % 7 == 0)
            violations += sum(not st.contains(x, 1e-12) for st in strips_from_measurement(s, y))
    assert violations == 0


def test_observability():
    sys = constant_velocity()
    assert is_observable(sys.F, POSITION_H)
    velocity_only = np.array([[0.0, 0, 1, 0], [0, 0, 0, 1]])
    assert not is_observable(sys.F, velocity_only)
    with pytest.raises(ObservabilityError):
        check_observable(sys, [SensorModel("v", velocity_only, [0.1, 0.1])])
