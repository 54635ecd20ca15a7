"""Indexed map families, their perturbations, and tangent-space lifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .charts import Chart, euclidean_box, flat_torus
from .errors import (MagnitudeViolationError, ParameterDomainError,
                     RadiusExceededError, TubeEscapeError)

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])


@dataclass(frozen=True)
class MapFamily:
    """A family of maps f_i between copies of one chart, with derivatives.

    ``evaluate(i, x)`` applies the i-th map; ``jacobian(i, x)`` returns its
    d x d derivative in chart coordinates.  ``affine`` marks families whose
    maps are affine in chart coordinates (constant jacobian), which unlocks
    exact lifts and exact unstable inversions downstream.
    ``jacobian_lipschitz`` is optional a-priori modulus-of-continuity data
    for the jacobian (per unit distance); analytic affine families have 0.
    """

    chart: Chart
    name: str
    evaluate: Callable[[int, np.ndarray], np.ndarray]
    jacobian: Callable[[int, np.ndarray], np.ndarray]
    affine: bool = False
    analytic_jacobian: bool = True
    jacobian_lipschitz: float | None = None


@dataclass(frozen=True)
class PerturbedFamily:
    """A perturbed family g together with its exact per-index gap profile.

    ``gap_profile(i)`` bounds sup_x d(f_i(x), g_i(x)); it is exact for
    perturbations constructed as displacement fields composed with f.
    """

    maps: MapFamily
    gap_profile: Callable[[int], float]

    def gap_sequence(self, transition_indices) -> np.ndarray:
        return np.array([self.gap_profile(i) for i in transition_indices],
                        dtype=float)


@dataclass(frozen=True)
class LiftedStep:
    """The lift of one map step into tangent coordinates at a base pair.

    ``map(z) = log_{x_next}(f_i(exp_{x_i}(z)))`` wherever the log is
    defined.  For affine families the lift is evaluated in closed form
    (offset + linear part), which keeps it exact and continuous on the
    whole tube.
    """

    i: int
    x: np.ndarray
    x_next: np.ndarray
    chart: Chart
    _evaluate: Callable[[int, np.ndarray], np.ndarray]
    _jacobian: Callable[[int, np.ndarray], np.ndarray]
    affine: bool
    offset: np.ndarray = field(repr=False)      # lift of 0: the defect vector
    linear: np.ndarray | None = field(repr=False, default=None)

    def map(self, z: np.ndarray) -> np.ndarray:
        if self.affine and self.linear is not None:
            return self.offset + self.linear @ z
        try:
            point = self.chart.exp(self.x, z)
            image = self._evaluate(self.i, point)
            return self.chart.log(self.x_next, image)
        except RadiusExceededError as exc:
            raise TubeEscapeError(
                f"step {self.i}: image left the log domain ({exc})",
                index=self.i) from exc

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self.affine and self.linear is not None:
            return self.linear
        return self._jacobian(self.i, self.chart.exp(self.x, z))

    @property
    def defect(self) -> float:
        return float(np.linalg.norm(self.offset))


def lift_step(family: MapFamily, i: int, x: np.ndarray,
              x_next: np.ndarray) -> LiftedStep:
    """Lift f_i into tangent coordinates at (x, x_next).

    Requires d(f_i(x), x_next) < rho so the tube around the step stays in
    the log domain.
    """
    image = family.evaluate(i, x)
    try:
        offset = family.chart.log(x_next, image)
    except RadiusExceededError as exc:
        raise TubeEscapeError(
            f"step {i}: defect exceeds the injectivity radius ({exc})",
            index=i) from exc
    linear = family.jacobian(i, x) if family.affine else None
    return LiftedStep(i=i, x=np.asarray(x, float), x_next=np.asarray(x_next, float),
                      chart=family.chart, _evaluate=family.evaluate,
                      _jacobian=family.jacobian, affine=family.affine,
                      offset=offset, linear=linear)


# -- built-in families -----------------------------------------------------


def _affine_torus_family(name: str, matrix: np.ndarray) -> MapFamily:
    m = np.asarray(matrix, dtype=float)
    chart = flat_torus(m.shape[0])

    def evaluate(i: int, x: np.ndarray) -> np.ndarray:
        return np.mod(m @ x, 1.0)

    def jacobian(i: int, x: np.ndarray) -> np.ndarray:
        return m.copy()

    return MapFamily(chart=chart, name=name, evaluate=evaluate,
                     jacobian=jacobian, affine=True, analytic_jacobian=True,
                     jacobian_lipschitz=0.0)


def make_cat_family() -> MapFamily:
    """x -> [[2,1],[1,1]] x mod 1 on the 2-torus, every index."""
    return _affine_torus_family("cat", CAT_MATRIX)


def make_coupled_linear_family(lambda_u: float, lambda_s: float,
                               mu_u: float, mu_s: float) -> MapFamily:
    """x -> B x mod 1 with B = [[lambda_u, mu_u], [mu_s, lambda_s]].

    The coordinate-axis splitting realizes exactly these block constants.
    """
    if not (lambda_s < 1.0 < lambda_u):
        raise ParameterDomainError(
            f"need lambda_s < 1 < lambda_u, got lambda_s={lambda_s}, "
            f"lambda_u={lambda_u}")
    if mu_u < 0 or mu_s < 0:
        raise ParameterDomainError("coupling magnitudes must be nonnegative")
    b = np.array([[lambda_u, mu_u], [mu_s, lambda_s]], dtype=float)
    return _affine_torus_family(
        f"coupled({lambda_u},{lambda_s},{mu_u},{mu_s})", b)


def make_sin_perturbed_cat(eps: float) -> MapFamily:
    """The cat map plus the displacement eps*(sin 2*pi*x2, sin 2*pi*x1).

    Nonlinear but analytic; the jacobian has Lipschitz modulus
    eps*(2*pi)^2, stored as the family's continuity budget.
    """
    if eps < 0:
        raise ParameterDomainError("eps must be nonnegative")
    chart = flat_torus(2)
    two_pi = 2.0 * np.pi

    def evaluate(i: int, x: np.ndarray) -> np.ndarray:
        base = CAT_MATRIX @ x
        disp = eps * np.array([np.sin(two_pi * x[1]), np.sin(two_pi * x[0])])
        return np.mod(base + disp, 1.0)

    def jacobian(i: int, x: np.ndarray) -> np.ndarray:
        j = CAT_MATRIX.copy()
        j[0, 1] += eps * two_pi * np.cos(two_pi * x[1])
        j[1, 0] += eps * two_pi * np.cos(two_pi * x[0])
        return j

    return MapFamily(chart=chart, name=f"cat-sin({eps})", evaluate=evaluate,
                     jacobian=jacobian, affine=False, analytic_jacobian=True,
                     jacobian_lipschitz=eps * two_pi * two_pi)


def make_scalar_affine_family(slope: float, lo: float = -10.0,
                              hi: float = 10.0) -> MapFamily:
    """x -> slope*x on a scalar euclidean box; handy expanding/contracting
    test systems."""
    chart = euclidean_box(1, lo=lo, hi=hi)

    def evaluate(i: int, x: np.ndarray) -> np.ndarray:
        return slope * x

    def jacobian(i: int, x: np.ndarray) -> np.ndarray:
        return np.array([[slope]], dtype=float)

    return MapFamily(chart=chart, name=f"scalar({slope})", evaluate=evaluate,
                     jacobian=jacobian, affine=True, analytic_jacobian=True,
                     jacobian_lipschitz=0.0)


# -- perturbations ----------------------------------------------------------


def constant_displacement(vector) -> Callable[[int, np.ndarray], np.ndarray]:
    v = np.asarray(vector, dtype=float)

    def displacement(i: int, x: np.ndarray) -> np.ndarray:
        return v.copy()

    return displacement


def profiled_displacement(direction, magnitude: Callable[[int], float]
                          ) -> Callable[[int, np.ndarray], np.ndarray]:
    """Displacement of per-index magnitude along a fixed unit direction."""
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if n == 0:
        raise ParameterDomainError("direction must be nonzero")
    d = d / n

    def displacement(i: int, x: np.ndarray) -> np.ndarray:
        return magnitude(i) * d

    return displacement


def make_perturbed_family(base: MapFamily,
                          displacement: Callable[[int, np.ndarray], np.ndarray],
                          magnitudes: Callable[[int], float] | float,
                          affine: bool = False,
                          check_indices=(0,),
                          check_samples: int = 32,
                          seed: int = 0) -> PerturbedFamily:
    """g_i(x) = exp_{f_i(x)}(displacement(i, x)) with declared magnitudes.

    The declared bound |displacement(i, x)| <= gamma_i is verified by
    sampling; pass ``affine=True`` only when the displacement is constant
    per index on an affine base, which keeps g affine.
    """
    if callable(magnitudes):
        gamma = magnitudes
    else:
        g_const = float(magnitudes)
        gamma = lambda i: g_const  # noqa: E731

    chart = base.chart
    rng = np.random.default_rng(seed)
    for i in check_indices:
        cap = gamma(i)
        for _ in range(check_samples):
            x = _sample_point(chart, rng)
            mag = float(np.linalg.norm(displacement(i, x)))
            if mag > cap + 1e-12:
                raise MagnitudeViolationError(
                    f"sampled displacement {mag:.6g} exceeds declared "
                    f"magnitude {cap:.6g} at index {i}")

    def evaluate(i: int, x: np.ndarray) -> np.ndarray:
        return chart.exp(base.evaluate(i, x), displacement(i, x))

    if affine and not base.affine:
        raise ParameterDomainError("affine perturbation requires an affine base")

    if affine:
        jacobian = base.jacobian
        maps = MapFamily(chart=chart, name=base.name + "+shift",
                         evaluate=evaluate, jacobian=jacobian, affine=True,
                         analytic_jacobian=base.analytic_jacobian,
                         jacobian_lipschitz=base.jacobian_lipschitz)
    else:
        def jacobian(i: int, x: np.ndarray) -> np.ndarray:
            return finite_difference_jacobian(evaluate, chart, i, x)

        maps = MapFamily(chart=chart, name=base.name + "+disp",
                         evaluate=evaluate, jacobian=jacobian, affine=False,
                         analytic_jacobian=False)

    return PerturbedFamily(maps=maps, gap_profile=gamma)


def unperturbed(family: MapFamily) -> PerturbedFamily:
    """g = f with an identically zero gap profile."""
    return PerturbedFamily(maps=family, gap_profile=lambda i: 0.0)


def measure_gap(f: MapFamily, g: MapFamily, index: int, samples: int = 1000,
                seed: int = 0) -> float:
    """Sampled upper estimate of sup_x d(f_i(x), g_i(x)) at one index."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = _sample_point(f.chart, rng)
        worst = max(worst, f.chart.distance(f.evaluate(index, x),
                                            g.evaluate(index, x)))
    return worst


# -- derivatives and moduli --------------------------------------------------


def finite_difference_jacobian(evaluate, chart: Chart, i: int, x: np.ndarray,
                               h: float = 1e-6) -> np.ndarray:
    """Central-difference jacobian of a chart map, chart-aware."""
    d = chart.dim
    cols = []
    mid = evaluate(i, x)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        plus = chart.log(mid, evaluate(i, chart.exp(x, e)))
        minus = chart.log(mid, evaluate(i, chart.exp(x, -e)))
        cols.append((plus - minus) / (2.0 * h))
    return np.column_stack(cols)


def continuity_modulus(family: MapFamily, radius: float, samples: int,
                       seed: int = 0, indices=(0,)) -> float:
    """Empirical modulus sup ||Df_i(x) - Df_i(y)|| over d(x, y) <= radius.

    Zero exactly for affine families with analytic jacobians; a sampled
    lower estimate of the true modulus otherwise.
    """
    if radius >= family.chart.rho:
        raise ParameterDomainError("radius must stay below the injectivity radius")
    if samples < 1:
        raise ParameterDomainError("need at least one sample")
    if family.affine and family.analytic_jacobian:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in indices:
        for _ in range(samples):
            x = _sample_point(family.chart, rng)
            u = _sample_direction(rng, family.chart.dim)
            y = family.chart.exp(x, radius * rng.uniform(0.0, 1.0) * u)
            dev = np.linalg.norm(family.jacobian(i, x) - family.jacobian(i, y), 2)
            worst = max(worst, float(dev))
    return worst


def _sample_point(chart: Chart, rng: np.random.Generator) -> np.ndarray:
    if chart.bounds is None:
        return rng.uniform(0.0, 1.0, size=chart.dim)
    lo = np.array([b[0] for b in chart.bounds])
    hi = np.array([b[1] for b in chart.bounds])
    return rng.uniform(lo, hi)


def _sample_direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n
