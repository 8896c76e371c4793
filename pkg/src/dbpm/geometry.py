"""Bregman geometries with closed-form proximal maps.

Two distance-generating functions ship:

* ``quadratic``: ``w(x) = 0.5 * ||x||^2`` on all of R^n or on a box.
* ``entropy``: ``w(x) = sum x log x`` on the probability simplex.

Both are 1-strongly convex w.r.t. the Euclidean norm on their domains. All
functions accept batched inputs: the last axis holds block coordinates and
any leading axes are independent instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENTROPY_FLOOR = 1e-300
FEAS_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class BregmanGeometry:
    kind: str = "quadratic"
    feasible_set: str = "all"
    lower: float | tuple[float, ...] | None = None
    upper: float | tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "quadratic":
            if self.feasible_set not in ("all", "box"):
                raise GeometryError(f"quadratic geometry pairs with 'all' or 'box', not {self.feasible_set!r}")
        elif self.kind == "entropy":
            if self.feasible_set != "simplex":
                raise GeometryError("entropy geometry is only defined on the simplex")
        else:
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if self.feasible_set == "box":
            if self.lower is None or self.upper is None:
                raise GeometryError("box geometry needs lower and upper bounds")
            lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
            if np.any(lo > hi):
                raise GeometryError("box lower bound exceeds upper bound")

    @property
    def sigma(self) -> float:
        return 1.0

    @property
    def elementwise(self) -> bool:
        """True when the prox acts coordinate by coordinate."""
        return self.kind == "quadratic"

    def bounds(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.lower, float), (size,))
        hi = np.broadcast_to(np.asarray(self.upper, float), (size,))
        return lo, hi

    def grad(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if self.kind == "quadratic":
            return a.copy()
        if np.any(a <= 0):
            raise GeometryError("entropy gradient needs strictly positive coordinates")
        return 1.0 + np.log(a)

    def initial_point(self, size: int) -> np.ndarray:
        if self.feasible_set == "simplex":
            return np.full(size, 1.0 / size)
        if self.feasible_set == "box":
            lo, hi = self.bounds(size)
            return np.clip(np.zeros(size), lo, hi)
        return np.zeros(size)

    def check_feasible(self, a, name="point", strict_positive=False) -> None:
        a = np.asarray(a, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise GeometryError(f"{name} has non-finite coordinates")
        if self.feasible_set == "box":
            lo, hi = self.bounds(a.shape[-1])
            if np.any(a < lo - FEAS_TOL) or np.any(a > hi + FEAS_TOL):
                raise GeometryError(f"{name} lies outside the box")
        elif self.feasible_set == "simplex":
            if np.any(a < -FEAS_TOL) or np.any(np.abs(a.sum(axis=-1) - 1.0) > FEAS_TOL):
                raise GeometryError(f"{name} is not in the probability simplex")
            if strict_positive and np.any(a <= 0):
                raise GeometryError(f"{name} needs strictly positive coordinates")


def divergence(geom: BregmanGeometry, a, b) -> np.ndarray | float:
    """``w(b) - w(a) - <grad w(a), b - a>``, summed over the last axis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    geom.check_feasible(a, "a", strict_positive=geom.kind == "entropy")
    geom.check_feasible(b, "b")
    if geom.kind == "quadratic":
        d = 0.5 * np.sum((b - a) ** 2, axis=-1)
    else:
        blogb = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0) / a), 0.0)
        d = np.sum(blogb - b + a, axis=-1)
        d = np.maximum(d, 0.0)
    return float(d) if np.ndim(d) == 0 else d


def prox(geom: BregmanGeometry, a, g, c, check: bool = True) -> np.ndarray:
    """``argmin_u <g, u> + (1/c) * D(a, u)`` over the geometry's feasible set.

    ``c`` may be a scalar or one stepsize per leading-axis instance.
    """
    a = np.asarray(a, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if a.shape != g.shape:
        raise GeometryError(f"point {a.shape} and direction {g.shape} differ in shape")
    if np.any(c <= 0):
        raise GeometryError("prox stepsize must be positive")
    if not np.all(np.isfinite(g)):
        raise GeometryError("non-finite subgradient")
    if check:
        geom.check_feasible(a, "prox center", strict_positive=geom.kind == "entropy")
    cc = c[..., None] if c.ndim else c
    if geom.kind == "quadratic":
        u = a - cc * g
        if geom.feasible_set == "box":
            lo, hi = geom.bounds(a.shape[-1])
            u = np.clip(u, lo, hi)
        return u
    # exponentiated step, shifted by the row max for overflow safety
    z = np.log(a) - cc * g
    z = z - z.max(axis=-1, keepdims=True)
    u = np.exp(z)
    u /= u.sum(axis=-1, keepdims=True)
    return np.maximum(u, ENTROPY_FLOOR)


def optimality_residual(geom: BregmanGeometry, a, g, c, u, z) -> np.ndarray | float:
    """``<c g + grad w(u) - grad w(a), z - u>``; nonnegative for every feasible ``z`` when ``u = prox(a, g, c)``."""
    a, g, u, z = (np.asarray(v, dtype=np.float64) for v in (a, g, u, z))
    c = np.asarray(c, dtype=np.float64)
    cc = c[..., None] if c.ndim else c
    if geom.kind == "quadratic":
        dgrad = u - a
    else:
        dgrad = np.log(u) - np.log(a)
    r = np.sum((cc * g + dgrad) * (z - u), axis=-1)
    return float(r) if np.ndim(r) == 0 else r
