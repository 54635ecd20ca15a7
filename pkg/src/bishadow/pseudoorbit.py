"""Generation, measurement and classification of pseudo-orbits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import seq_pnorm
from .errors import EmptyTailError, ParameterDomainError, TubeEscapeError
from .serialize import read_csv, write_csv
from .systems import MapFamily, _sample_direction
from .windows import Window

RECIPE_KINDS = ("constant", "harmonic", "geometric")


@dataclass(frozen=True)
class DefectRecipe:
    """Per-transition defect magnitude profile used by ``generate``.

    kinds: ``constant`` -> base, ``harmonic`` -> base / (1 + |i|),
    ``geometric`` -> base * rate^|i|.  ``direction`` fixes the defect
    direction (stress tests); the default draws isotropic directions.
    """

    kind: str
    base: float
    rate: float = 0.5
    direction: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ParameterDomainError(f"unknown recipe kind {self.kind!r}")
        if self.base < 0:
            raise ParameterDomainError("recipe base must be nonnegative")
        if self.kind == "geometric" and not 0.0 <= self.rate < 1.0:
            raise ParameterDomainError("geometric rate must lie in [0, 1)")

    def magnitude(self, i: int) -> float:
        if self.kind == "constant":
            return self.base
        if self.kind == "harmonic":
            return self.base / (1.0 + abs(i))
        return self.base * self.rate ** abs(i)


@dataclass(frozen=True)
class PseudoOrbit:
    """Points x_i over a window plus their measured defect sequence.

    ``defects[t]`` is d(f_i(x_i), x_{i+1}) for the t-th transition; defects
    are always re-measured from the points, never taken on trust.
    ``seed`` records the generator seed (0 when merely measured).
    """

    window: Window
    points: np.ndarray    # (N, d)
    defects: np.ndarray   # (N - 1,)
    seed: int = 0

    def point(self, i: int) -> np.ndarray:
        return self.points[self.window.pos(i)]

    def defect_indices(self) -> range:
        return self.window.transitions()

    def restrict(self, window: Window) -> "PseudoOrbit":
        if not self.window.contains(window):
            raise ParameterDomainError(
                f"window [{window.lo}, {window.hi}] not contained in "
                f"[{self.window.lo}, {self.window.hi}]")
        a = self.window.pos(window.lo)
        b = self.window.pos(window.hi)
        return PseudoOrbit(window=window, points=self.points[a:b + 1].copy(),
                           defects=self.defects[a:b].copy(), seed=self.seed)

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        header = ["i"] + [f"x_{j + 1}" for j in range(d)] + ["delta_i"]
        rows = []
        for t, i in enumerate(self.window.indices()):
            delta = self.defects[t] if i < self.window.hi else None
            rows.append([i, *self.points[t], delta])
        write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, family: MapFamily) -> "PseudoOrbit":
        header, rows = read_csv(path)
        d = len(header) - 2
        idx = [int(r[0]) for r in rows]
        window = Window(idx[0], idx[-1])
        if list(window.indices()) != idx:
            raise ParameterDomainError("orbit CSV indices are not contiguous")
        points = np.array([[float(c) for c in r[1:1 + d]] for r in rows])
        defects = measure_defects(family, points, window)
        return cls(window=window, points=points, defects=defects, seed=0)


def measure_defects(family: MapFamily, points: np.ndarray,
                    window: Window) -> np.ndarray:
    """Exact defect d(f_i(x_i), x_{i+1}) per transition."""
    points = np.asarray(points, dtype=float)
    chart = family.chart
    out = np.zeros(len(window) - 1)
    for t, i in enumerate(window.transitions()):
        dist = chart.distance(family.evaluate(i, points[t]), points[t + 1])
        if dist >= chart.rho:
            raise TubeEscapeError(
                f"defect {dist:.6g} at transition {i} leaves the log domain",
                index=i)
        out[t] = dist
    return out


def generate(family: MapFamily, x0, window: Window, recipe: DefectRecipe,
             seed: int = 0) -> PseudoOrbit:
    """One forward sweep from the left edge: x_{i+1} = exp_{f_i(x_i)}(eta_i).

    The starting point x0 is placed at the window's left edge; eta_i has
    the recipe magnitude for transition i, isotropic direction unless the
    recipe fixes one.  Measured defects reproduce the recipe magnitudes to
    rounding.
    """
    chart = family.chart
    rng = np.random.default_rng(seed)
    n = len(window)
    points = np.zeros((n, chart.dim))
    points[0] = chart.point(x0)
    for t, i in enumerate(window.transitions()):
        mag = recipe.magnitude(i)
        if mag >= chart.rho:
            raise TubeEscapeError(
                f"recipe magnitude {mag:.6g} at transition {i} reaches the "
                f"injectivity radius", index=i)
        if recipe.direction is not None:
            direction = np.asarray(recipe.direction, dtype=float)
            direction = direction / np.linalg.norm(direction)
        else:
            direction = _sample_direction(rng, chart.dim)
        points[t + 1] = chart.exp(family.evaluate(i, points[t]),
                                  mag * direction)
    defects = measure_defects(family, points, window)
    return PseudoOrbit(window=window, points=points, defects=defects,
                       seed=seed)


# -- profiles -----------------------------------------------------------------


@dataclass(frozen=True)
class DefectProfile:
    """Classification of a defect (or gap) sequence from measured values.

    * ``pnorm``: its p-norm for the profile's p.
    * ``tail_curve``: T(N) = max over |i| >= N, for N = 0..max|i|.
    * ``vanishing``: finite-window surrogate of T(N) -> 0 (the outer
      quarter of the tail curve has dropped to half the overall sup).
    * ``rate_estimate``: max over the tail of delta_i^(1/|i|), the finite
      truncation of the limsup root statistic.

    ``kind`` labels the strongest regime supported by the window:
    "p-bounded", "vanishing", or "geometric" (vanishing with rate estimate
    below 0.9).
    """

    kind: str
    p: float
    pnorm: float
    tail_curve: np.ndarray
    vanishing: bool
    rate_estimate: float
    tail_start: int

    GEOMETRIC_RATE_CAP = 0.9


def root_rate(values, indices, n0: int) -> float:
    """max over |i| >= n0 of values[i]^(1/|i|); zero entries contribute 0."""
    if n0 < 1:
        raise ParameterDomainError("tail start n0 must be >= 1")
    vals = np.asarray(values, dtype=float)
    idx = list(indices)
    if len(idx) != vals.shape[0]:
        raise ParameterDomainError("values and indices differ in length")
    tail = [(v, abs(i)) for v, i in zip(vals, idx) if abs(i) >= n0]
    if not tail:
        raise EmptyTailError(f"no indices with |i| >= {n0} in the window")
    best = 0.0
    for v, a in tail:
        if v > 0.0:
            best = max(best, v ** (1.0 / a))
    return best


def tail_sup_curve(values, indices) -> np.ndarray:
    """T(N) = max over |i| >= N for N = 0..max|i|."""
    vals = np.asarray(values, dtype=float)
    idx = np.array([abs(i) for i in indices])
    kmax = int(idx.max()) if idx.size else 0
    curve = np.zeros(kmax + 1)
    for n in range(kmax + 1):
        sel = vals[idx >= n]
        curve[n] = sel.max() if sel.size else 0.0
    return curve


def classify(values, indices, p: float = math.inf,
             tail_start: int | None = None) -> DefectProfile:
    """Profile a measured defect/gap sequence (see ``DefectProfile``)."""
    vals = np.asarray(values, dtype=float)
    idx = list(indices)
    pnorm = seq_pnorm(vals, p)
    curve = tail_sup_curve(vals, idx)
    kmax = len(curve) - 1

    if curve[0] == 0.0:
        vanishing = True
    else:
        probe = min(kmax, max(1, math.ceil(0.75 * kmax)))
        vanishing = curve[probe] <= 0.5 * curve[0]

    n0 = tail_start if tail_start is not None else max(1, kmax // 4)
    if kmax >= 1:
        rate = root_rate(vals, idx, min(n0, kmax))
    else:
        rate = 0.0

    if not vanishing:
        kind = "p-bounded"
    elif rate < DefectProfile.GEOMETRIC_RATE_CAP:
        kind = "geometric"
    else:
        kind = "vanishing"
    return DefectProfile(kind=kind, p=p, pnorm=pnorm, tail_curve=curve,
                         vanishing=vanishing, rate_estimate=rate,
                         tail_start=min(n0, kmax) if kmax >= 1 else n0)
