"""Certified bi-shadowing for non-autonomous semi-hyperbolic map families.

Computes true orbits of a perturbed family that track pseudo-orbits of a
base family, with certified constants and three bound regimes (p-norm,
limit, asymptotic).
"""

from .charts import Chart, euclidean_box, flat_torus, seq_pnorm
from .engine import (ShadowingResult, SolveOptions, TangentSequence,
                     solve_asymptotic, solve_finite, solve_infinite,
                     solve_limit)
from .hyperbolicity import (Certificate, EffectiveConstants,
                            ShadowingConstants, Splitting, build_splitting,
                            certify, conorm, effective_constants,
                            extract_blocks, shadowing_constants)
from .pseudoorbit import (DefectProfile, DefectRecipe, PseudoOrbit, classify,
                          generate, measure_defects, root_rate)
from .systems import (LiftedStep, MapFamily, PerturbedFamily,
                      constant_displacement, continuity_modulus, lift_step,
                      make_cat_family, make_coupled_linear_family,
                      make_perturbed_family, make_scalar_affine_family,
                      make_sin_perturbed_cat, profiled_displacement,
                      unperturbed)
from .windows import Window

__version__ = "0.1.0"
