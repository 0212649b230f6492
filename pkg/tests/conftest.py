"""Shared random instances and independent oracles."""
from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from zonofuse.zonotope import Zonotope


def random_zonotope(rng, n, e, spread=1.0, offset=3.0):
    return Zonotope(rng.uniform(-offset, offset, n), rng.normal(0.0, spread, (n, e)))


def halfspaces(z):
    """Facet normals and offsets of a full-dimensional zonotope in 2-D or 3-D.

    Every facet is orthogonal to some (n-1)-subset of generators, so checking
    those normals is an exact membership test that never touches ``volume``
    or the LP in ``contains_point``.
    """
    G = z.generators
    n = z.dim
    normals = []
    for idx in combinations(range(G.shape[1]), n - 1):
        if n == 2:
            g = G[:, idx[0]]
            d = np.array([-g[1], g[0]])
        elif n == 3:
            d = np.cross(G[:, idx[0]], G[:, idx[1]])
        else:
            raise ValueError("only 2-D and 3-D supported")
        if np.linalg.norm(d) > 1e-12:
            normals.append(d / np.linalg.norm(d))
    D = np.array(normals)
    return D, D @ z.center, np.abs(D @ G).sum(axis=1)


def member_mask(z, X):
    D, dc, spread = halfspaces(z)
    return np.all(np.abs(X @ D.T - dc) <= spread + 1e-12, axis=1)


def lp_feasible(A_eq=None, b_eq=None, A_ub=None, b_ub=None, nvar=0):
    """Is there beta in [-1, 1]^nvar satisfying the given linear constraints?"""
    res = linprog(np.zeros(nvar), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(-1, 1)] * nvar, method="highs")
    return res.status == 0


def rejection_sample(sets, count, rng, box_lower, box_upper, check):
    """Uniform points in a box that pass ``check`` for every set."""
    pts = rng.uniform(box_lower, box_upper, (count, len(box_lower)))
    keep = np.ones(count, dtype=bool)
    for s in sets:
        keep &= check(s, pts)
    return pts[keep]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- acceptance verdicts

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[VERDICTS].append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


# ---------------------------------------------------------------- estimator runs

def random_system(rng, n, n_sensors):
    """Random marginally stable system with an observable sensor stack."""
    from zonofuse.models import LinearSystem, SensorModel, is_observable

    while True:
        A = rng.normal(size=(n, n))
        F = A / max(1.0, np.abs(np.linalg.eigvals(A)).max())
        Q = Zonotope(np.zeros(n), rng.uniform(0.0, 0.05, (n, int(rng.integers(1, n + 2)))))
        sensors = []
        for i in range(n_sensors):
            p = int(rng.integers(1, 3))
            sensors.append(SensorModel(f"s{i}", rng.normal(size=(p, n)), rng.uniform(0.05, 0.5, p)))
        if is_observable(F, np.vstack([s.H for s in sensors])):
            return LinearSystem(F, Q, horizon=100), sensors


def containment_run(rng, sys, sensors, steps=100, faults=None, corners_every=4):
    """Simulate and filter; yield (k, truth, state) after each step.

    ``faults`` maps sensor id -> (bias vector, onset step).
    """
    from dataclasses import replace

    from zonofuse.estimator import EstimatorState, estimate_step
    from zonofuse.models import measure, step_truth, strips_from_measurement
    from zonofuse.zonotope import sample_points

    n = sys.n
    z0 = Zonotope(rng.uniform(-1, 1, n), np.diag(rng.uniform(0.5, 2.0, n)))
    x = sample_points(z0, 1, rng)[0]
    state = EstimatorState(z0, 0, "node")
    faults = faults or {}
    for k in range(1, steps + 1):
        corners = k % corners_every == 0
        x = step_truth(sys, x, rng, corners)
        strips = []
        for s in sensors:
            if s.id in faults and k >= faults[s.id][1]:
                s = replace(s, bias=faults[s.id][0])
            strips += strips_from_measurement(s, measure(s, x, rng, corners))
        state = estimate_step(state, sys, strips)
        yield k, x, state
