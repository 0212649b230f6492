"""Zonotope set arithmetic.

A zonotope ``<c, G>`` is the set ``{c + G @ beta : beta in [-1, 1]^e}``. All
operations here are pure: they return new objects and never mutate their
inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

MEMBERSHIP_TOL = 1e-9
DEFAULT_MAX_ORDER = 10.0


class DimensionError(ValueError):
    """Raised when operands have incompatible dimensions."""


@dataclass(frozen=True, eq=False)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        G = np.array(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((c.shape[0], 0))
        elif G.ndim == 1:
            G = G.reshape(c.shape[0], -1)
        if G.ndim != 2 or G.shape[0] != c.shape[0]:
            raise DimensionError(
                f"generator matrix has shape {G.shape}, expected ({c.shape[0]}, e)"
            )
        c.flags.writeable = False
        G.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @classmethod
    def from_box(cls, lower, upper) -> "Zonotope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls((lower + upper) / 2, np.diag((upper - lower) / 2))

    @classmethod
    def point(cls, x) -> "Zonotope":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(x, np.zeros((x.shape[0], 0)))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    @property
    def order(self) -> float:
        return self.n_generators / self.dim

    def __add__(self, other):
        return minkowski_sum(self, other)

    def __repr__(self):
        return f"Zonotope(center={self.center.tolist()}, generators={self.generators.tolist()})"

    def equals(self, other: "Zonotope") -> bool:
        """Exact equality of the representation (not of the set)."""
        return (
            self.center.shape == other.center.shape
            and self.generators.shape == other.generators.shape
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.generators, other.generators)
        )

    def to_record(self) -> dict:
        return {
            "n": self.dim,
            "e": self.n_generators,
            "center": self.center.tolist(),
            "generators": self.generators.reshape(-1).tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Zonotope":
        n, e = int(rec["n"]), int(rec["e"])
        c = np.array(rec["center"], dtype=float)
        G = np.array(rec["generators"], dtype=float).reshape(n, e)
        if c.shape != (n,):
            raise DimensionError(f"center has {c.shape[0]} entries, record says n={n}")
        return cls(c, G)


@dataclass(frozen=True, eq=False)
class IntervalBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("interval box has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def _check_dims(a: Zonotope, b: Zonotope):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def minkowski_sum(z1: Zonotope, z2: Zonotope) -> Zonotope:
    _check_dims(z1, z2)
    return Zonotope(z1.center + z2.center, np.hstack([z1.generators, z2.generators]))


def linear_map(L, z: Zonotope) -> Zonotope:
    """Image of ``z`` under ``x -> L x``. A scalar ``L`` means ``L * I``."""
    if np.isscalar(L) or np.ndim(L) == 0:
        return Zonotope(float(L) * z.center, float(L) * z.generators)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != z.dim:
        raise DimensionError(f"map has {L.shape[1]} columns, zonotope has dimension {z.dim}")
    return Zonotope(L @ z.center, L @ z.generators)


def support(z: Zonotope, d) -> float:
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.shape[0] != z.dim:
        raise DimensionError(f"direction has length {d.shape[0]}, expected {z.dim}")
    if not np.any(d):
        raise ValueError("support direction must be nonzero")
    return float(d @ z.center + np.abs(d @ z.generators).sum())


def interval_hull(z: Zonotope) -> IntervalBox:
    r = np.abs(z.generators).sum(axis=1)
    return IntervalBox(z.center - r, z.center + r)


def volume(z: Zonotope) -> float:
    """Exact volume: ``2^n * sum |det G_S|`` over all n-column subsets S."""
    n, e = z.dim, z.n_generators
    if e < n:
        return 0.0
    G = z.generators
    if n == 1:
        return float(2.0 * np.abs(G).sum())
    if n == 2:
        cross = np.outer(G[0], G[1]) - np.outer(G[1], G[0])
        return float(4.0 * np.abs(np.triu(cross, 1)).sum())
    idx = np.array(list(combinations(range(e), n)))
    # (subsets, n, n) stacks, evaluated in chunks to keep memory flat
    total = 0.0
    for start in range(0, len(idx), 20000):
        block = G[:, idx[start:start + 20000]].transpose(1, 0, 2)
        total += np.abs(np.linalg.det(block)).sum()
    return float(2.0**n * total)


def contains_point(z: Zonotope, x, tol: float = MEMBERSHIP_TOL) -> bool:
    """Decide ``x in z`` via a box-constrained linear feasibility problem."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != z.dim:
        raise DimensionError(f"point has length {x.shape[0]}, expected {z.dim}")
    d = x - z.center
    G = z.generators
    scale = max(1.0, float(np.abs(d).max(initial=0.0)), float(np.abs(G).max(initial=0.0)))
    if not interval_hull(z).contains(x, tol * scale):
        return False
    if G.shape[1] == 0:
        return bool(np.abs(d).max(initial=0.0) <= tol * scale)

    # cheap witness: least-norm solution already admissible
    beta, *_ = np.linalg.lstsq(G, d, rcond=None)
    if np.abs(beta).max() <= 1.0 and np.abs(G @ beta - d).max() <= tol * scale:
        return True

    # min t  s.t.  |G beta - d| <= t,  -1 <= beta <= 1
    n, e = G.shape
    cost = np.zeros(e + 1)
    cost[-1] = 1.0
    ones = np.ones((n, 1))
    A_ub = np.vstack([np.hstack([G, -ones]), np.hstack([-G, -ones])])
    b_ub = np.concatenate([d, -d])
    bounds = [(-1.0, 1.0)] * e + [(0.0, None)]
    res = linprog(
        cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        return False
    beta = np.clip(res.x[:e], -1.0, 1.0)
    return bool(np.abs(G @ beta - d).max() <= tol * scale)


def zonotopes_intersect(z1: Zonotope, z2: Zonotope) -> bool:
    """True iff the two sets share a point.

    ``c1 + G1 a = c2 + G2 b`` is solvable with ``a, b`` in the unit box exactly
    when ``c2`` lies in ``<c1, [G1, G2]>``.
    """
    _check_dims(z1, z2)
    return contains_point(Zonotope(z1.center, np.hstack([z1.generators, z2.generators])), z2.center)


def reduce_order(z: Zonotope, max_order: float = DEFAULT_MAX_ORDER) -> Zonotope:
    """Over-approximate ``z`` with at most ``max_order * n`` generators.

    The largest generators (Euclidean norm) are kept; the rest are replaced by
    their interval hull, i.e. ``n`` axis-aligned generators.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    n, e = z.dim, z.n_generators
    budget = int(np.floor(max_order * n))
    if e <= budget:
        return z
    G = z.generators
    order = np.argsort(-np.linalg.norm(G, axis=0), kind="stable")
    keep = order[: budget - n]
    boxed = order[budget - n:]
    box = np.diag(np.abs(G[:, boxed]).sum(axis=1))
    box = box[:, np.any(box != 0, axis=0)]
    return Zonotope(z.center, np.hstack([G[:, keep], box]))


def strip_intersection_empty(z: Zonotope, strip) -> bool:
    """Exact emptiness test of ``z`` intersected with one strip."""
    h = np.asarray(strip.h, dtype=float).reshape(-1)
    if h.shape[0] != z.dim:
        raise DimensionError(f"strip normal has length {h.shape[0]}, expected {z.dim}")
    spread = np.abs(h @ z.generators).sum()
    return bool(abs(h @ z.center - strip.y) > strip.r + spread)


def sample_points(z: Zonotope, count: int, rng: np.random.Generator, corners: bool = False) -> np.ndarray:
    """Draw ``count`` members of ``z`` (rows) from uniform or corner ``beta``."""
    e = z.n_generators
    if corners:
        beta = rng.choice([-1.0, 1.0], size=(count, e))
    else:
        beta = rng.uniform(-1.0, 1.0, size=(count, e))
    return z.center + beta @ z.generators.T
