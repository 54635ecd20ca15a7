"""Flat charted spaces: points, tangent vectors, exp/log, distances, norms.

Two chart kinds are supported, both flat so that the exponential map is a
plain translation in chart coordinates:

* ``flat-torus``: coordinates in [0, 1) per axis, wrap-around metric,
  injectivity radius 1/2.
* ``euclidean-box``: an axis-aligned box, Euclidean metric, injectivity
  radius +inf unless capped by a configured tube radius.

Points and tangent vectors are plain float64 numpy arrays; all operations
are pure and all values immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ComponentMismatchError, OutOfBoxError, RadiusExceededError

FLAT_TORUS = "flat-torus"
EUCLIDEAN_BOX = "euclidean-box"


@dataclass(frozen=True)
class Chart:
    """A flat chart of dimension ``dim`` with injectivity radius ``rho``.

    ``bounds`` is ``None`` on the torus and a per-axis (lo, hi) pair array
    on euclidean boxes.
    """

    kind: str
    dim: int
    rho: float
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in (FLAT_TORUS, EUCLIDEAN_BOX):
            raise ValueError(f"unknown chart kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("chart dimension must be positive")
        if not self.rho > 0:
            raise ValueError("injectivity radius must be positive")

    # -- construction -----------------------------------------------------

    def point(self, coords: Iterable[float]) -> np.ndarray:
        """Normalize raw coordinates into a chart point."""
        x = np.asarray(list(coords) if not isinstance(coords, np.ndarray) else coords,
                       dtype=float).reshape(-1)
        if x.shape != (self.dim,):
            raise ComponentMismatchError(
                f"expected {self.dim} coordinates, got {x.shape}")
        if self.kind == FLAT_TORUS:
            return np.mod(x, 1.0)
        self._check_in_box(x)
        return x.copy()

    def tangent(self, components: Iterable[float]) -> np.ndarray:
        v = np.asarray(list(components) if not isinstance(components, np.ndarray)
                       else components, dtype=float).reshape(-1)
        if v.shape != (self.dim,):
            raise ComponentMismatchError(
                f"expected {self.dim} components, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("tangent components must be finite")
        return v.copy()

    # -- core operations ---------------------------------------------------

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Translate ``x`` by the tangent vector ``v`` (mod 1 on the torus)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        self._check_pair_dim(x, v)
        y = x + v
        if self.kind == FLAT_TORUS:
            return np.mod(y, 1.0)
        self._check_in_box(y)
        return y

    def log(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Tangent vector at ``x`` reaching ``y``; requires d(x, y) < rho."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._check_pair_dim(x, y)
        w = self._displacement(x, y)
        r = float(np.linalg.norm(w))
        if r >= self.rho:
            raise RadiusExceededError(
                f"distance {r:.6g} >= injectivity radius {self.rho:.6g}")
        return w

    def distance(self, x: np.ndarray, y: np.ndarray) -> float:
        """Chart metric; raises on a dimension (component) mismatch."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._check_pair_dim(x, y)
        return float(np.linalg.norm(self._displacement(x, y)))

    def contains(self, x: np.ndarray) -> bool:
        if self.kind == FLAT_TORUS:
            return True
        lo, hi = self._box_arrays()
        return bool(np.all(x >= lo) and np.all(x <= hi))

    # -- internals ---------------------------------------------------------

    def _displacement(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == EUCLIDEAN_BOX:
            return y - x
        # Shortest per-axis representative in (-1/2, 1/2]; the +1/2 tie goes
        # to the nonnegative side.
        w = np.mod(y - x, 1.0)
        w = np.where(w > 0.5, w - 1.0, w)
        return w

    def _check_pair_dim(self, a: np.ndarray, b: np.ndarray) -> None:
        if a.shape != (self.dim,) or b.shape != (self.dim,):
            raise ComponentMismatchError(
                f"points of shape {a.shape} and {b.shape} do not both live on "
                f"a {self.dim}-dimensional component")

    def _box_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        assert self.bounds is not None
        lo = np.array([b[0] for b in self.bounds], dtype=float)
        hi = np.array([b[1] for b in self.bounds], dtype=float)
        return lo, hi

    def _check_in_box(self, x: np.ndarray) -> None:
        lo, hi = self._box_arrays()
        if np.any(x < lo) or np.any(x > hi):
            raise OutOfBoxError(f"point {x} leaves the box {self.bounds}")


def flat_torus(dim: int) -> Chart:
    """Unit torus of the given dimension; injectivity radius 1/2."""
    return Chart(kind=FLAT_TORUS, dim=dim, rho=0.5, bounds=None)


def euclidean_box(dim: int, lo: float = -1.0, hi: float = 1.0,
                  tube_radius: float = math.inf) -> Chart:
    """Axis-aligned box [lo, hi]^dim; radius +inf capped at ``tube_radius``."""
    if hi <= lo:
        raise ValueError("box requires lo < hi")
    bounds = tuple((float(lo), float(hi)) for _ in range(dim))
    return Chart(kind=EUCLIDEAN_BOX, dim=dim, rho=float(tube_radius),
                 bounds=bounds)


def seq_pnorm(values: Iterable[float], p: float) -> float:
    """p-norm of a finite sequence of nonnegative reals, p in [1, inf].

    Finite p uses compensated summation so long windows do not lose the
    norm to rounding.
    """
    vals = [float(v) for v in np.asarray(list(values)
            if not isinstance(values, np.ndarray) else values, dtype=float).ravel()]
    if any(v < 0 for v in vals):
        raise ValueError("seq_pnorm expects nonnegative entries")
    if not vals:
        return 0.0
    if math.isinf(p):
        return max(vals)
    if p < 1:
        raise ValueError("p must be >= 1 or inf")
    if p == 1:
        return math.fsum(vals)
    m = max(vals)
    if m == 0.0:
        return 0.0
    # Scale by the max to keep powers in range for large p.
    return m * math.fsum((v / m) ** p for v in vals) ** (1.0 / p)
