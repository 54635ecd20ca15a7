"""Independent oracles and bound checkers.

The oracle solves the exact linear boundary-value problem for affine
perturbed families by one dense stacked solve over all unknowns at once,
so it shares no code path with the engine's componentwise iteration.  The
checkers operate on plain arrays (and on serialized CLI outputs via
``audit_files``) so results can be audited after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import seq_pnorm
from .errors import ParameterDomainError, SingularSystemError
from .hyperbolicity import Splitting
from .pseudoorbit import PseudoOrbit, root_rate
from .serialize import read_csv
from .systems import MapFamily
from .windows import Window


@dataclass(frozen=True)
class OracleSolution:
    """Ground-truth shadow orbit for an affine instance."""

    window: Window
    orbit: np.ndarray       # (N, d)
    tangents: np.ndarray    # (N, d) solution in tangent coordinates
    distances: np.ndarray   # (N,)
    method: str             # stable-forward | unstable-backward | full-linear-solve
    residual: float         # max d(g_i(y_i), y_{i+1})


def _orbit_residual(g: MapFamily, orbit: np.ndarray, window: Window) -> float:
    worst = 0.0
    for t, i in enumerate(window.transitions()):
        worst = max(worst, g.chart.distance(g.evaluate(i, orbit[t]),
                                            orbit[t + 1]))
    return worst


def linear_shadow_oracle(g: MapFamily, porbit: PseudoOrbit,
                         splitting: Splitting) -> OracleSolution:
    """Solve the affine shadowing boundary-value problem exactly.

    Unknowns are the tangent corrections at every index, stacked into one
    dense linear system: interior rows encode z_{i+1} = B_i z_i + c_i
    (the affine lift of g around the pseudo-orbit), boundary rows pin the
    stable coordinates at the left edge and the unstable coordinates at
    the right edge to zero.
    """
    if not g.affine:
        raise ParameterDomainError("the linear oracle needs an affine family")
    w = porbit.window
    if splitting.window != w:
        raise ParameterDomainError("splitting window does not match the orbit")
    pts = porbit.points
    n = len(w)
    d = pts.shape[1]
    du = splitting.unstable_dim
    ds = splitting.stable_dim

    size = n * d
    a = np.zeros((size, size))
    b = np.zeros(size)

    for t, i in enumerate(w.transitions()):
        lin = g.jacobian(i, pts[t])
        offset = g.chart.log(pts[t + 1], g.evaluate(i, pts[t]))
        r = t * d
        a[r:r + d, (t + 1) * d:(t + 2) * d] = np.eye(d)
        a[r:r + d, t * d:(t + 1) * d] = -lin
        b[r:r + d] = offset

    r = (n - 1) * d
    if ds:
        a[r:r + ds, 0:d] = splitting.frame_inv[0][du:, :]
    if du:
        a[r + ds:r + d, (n - 1) * d:n * d] = splitting.frame_inv[n - 1][:du, :]

    try:
        z = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "stacked boundary-value system is singular") from exc

    tangents = z.reshape(n, d)
    orbit = np.array([g.chart.exp(pts[t], tangents[t]) for t in range(n)])
    distances = np.linalg.norm(tangents, axis=1)
    return OracleSolution(window=w, orbit=orbit, tangents=tangents,
                          distances=distances, method="full-linear-solve",
                          residual=_orbit_residual(g, orbit, w))


def stable_forward_oracle(g: MapFamily, porbit: PseudoOrbit) -> OracleSolution:
    """Pure-contraction ground truth: start at the left point, iterate g."""
    w = porbit.window
    n = len(w)
    orbit = np.zeros_like(porbit.points)
    orbit[0] = porbit.points[0]
    for t, i in enumerate(w.transitions()):
        orbit[t + 1] = g.evaluate(i, orbit[t])
    tangents = np.array([g.chart.log(porbit.points[t], orbit[t])
                         for t in range(n)])
    return OracleSolution(window=w, orbit=orbit, tangents=tangents,
                          distances=np.linalg.norm(tangents, axis=1),
                          method="stable-forward",
                          residual=_orbit_residual(g, orbit, w))


def unstable_backward_oracle(g: MapFamily, porbit: PseudoOrbit
                             ) -> OracleSolution:
    """Pure-expansion ground truth: pin the right point, invert g backward."""
    if not g.affine:
        raise ParameterDomainError("backward oracle needs an affine family")
    w = porbit.window
    pts = porbit.points
    n = len(w)
    tangents = np.zeros_like(pts)
    for t in range(n - 2, -1, -1):
        i = w.lo + t
        lin = g.jacobian(i, pts[t])
        offset = g.chart.log(pts[t + 1], g.evaluate(i, pts[t]))
        tangents[t] = np.linalg.solve(lin, tangents[t + 1] - offset)
    orbit = np.array([g.chart.exp(pts[t], tangents[t]) for t in range(n)])
    return OracleSolution(window=w, orbit=orbit, tangents=tangents,
                          distances=np.linalg.norm(tangents, axis=1),
                          method="unstable-backward",
                          residual=_orbit_residual(g, orbit, w))


# -- checkers -----------------------------------------------------------------


@dataclass(frozen=True)
class CheckOutcome:
    passed: bool
    margin: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "margin": self.margin}


def check_lp_bound(distances, defects, gain: float, p: float) -> CheckOutcome:
    """Pass iff |distances|_p <= gain * |defects|_p + 1e-12."""
    margin = gain * seq_pnorm(defects, p) - seq_pnorm(distances, p)
    return CheckOutcome(passed=margin >= -1e-12, margin=float(margin))


def check_orbit_residual(g: MapFamily, orbit: np.ndarray,
                         window: Window) -> float:
    """max over transitions of d(g_i(y_i), y_{i+1})."""
    return _orbit_residual(g, np.asarray(orbit, dtype=float), window)


def check_limit_decay(distances, indices, thresholds: list[int],
                      caps: list[float]) -> dict:
    """Per-band max distance against its cap; pass iff every band holds."""
    dist = np.asarray(distances, dtype=float)
    idx = list(indices)
    if len(thresholds) != len(caps):
        raise ParameterDomainError("thresholds and caps differ in length")
    hi = max(abs(i) for i in idx)
    bands = []
    ok = True
    for b, k_n in enumerate(thresholds):
        hi_abs = thresholds[b + 1] - 1 if b + 1 < len(thresholds) else hi
        sel = [v for v, i in zip(dist, idx) if k_n <= abs(i) <= hi_abs]
        max_d = max(sel) if sel else 0.0
        passed = max_d <= caps[b] + 1e-12
        ok = ok and passed
        bands.append({"band": b, "lo_abs": k_n, "hi_abs": hi_abs,
                      "cap": caps[b], "max_distance": max_d,
                      "margin": caps[b] - max_d, "passed": passed})
    return {"passed": ok, "bands": bands}


def check_asymptotic_rate(distances, indices, v: float, eps: float,
                          k1: int) -> tuple[bool, float]:
    """Tail root rate of the distances against v + eps (+1e-9 slack)."""
    v_hat = root_rate(distances, indices, max(1, k1))
    return v_hat <= v + eps + 1e-9, v_hat


# -- file-level audit ---------------------------------------------------------


def audit_files(result_json: dict, orbit_csv_path, family: MapFamily,
                g: MapFamily) -> dict:
    """Re-derive the advertised checks from serialized CLI outputs.

    Reads the orbit CSV back, re-measures distances and defects from the
    stored points, and re-checks the norm bound and the orbit residual
    against the figures recorded in the result JSON.
    """
    header, rows = read_csv(orbit_csv_path)
    d = (len(header) - 3) // 2
    idx = [int(r[0]) for r in rows]
    window = Window(idx[0], idx[-1])
    xs = np.array([[float(c) for c in r[1:1 + d]] for r in rows])
    ys = np.array([[float(c) for c in r[1 + d:1 + 2 * d]] for r in rows])
    dist_stored = np.array([float(r[1 + 2 * d]) for r in rows])

    dist = np.array([family.chart.distance(xs[t], ys[t])
                     for t in range(len(rows))])
    defects = np.array([family.chart.distance(
        family.evaluate(i, xs[window.pos(i)]), xs[window.pos(i) + 1])
        for i in window.transitions()])

    p = result_json["p"]
    p = math.inf if p == "inf" else float(p)
    gain = float(result_json["gain"])
    bound = check_lp_bound(dist, defects, gain, p)
    residual = check_orbit_residual(g, ys, window)
    bound_rhs = float(result_json["norms"]["bound_rhs"])
    dist_norm = seq_pnorm(dist, p)

    return {
        "window": {"lo": window.lo, "hi": window.hi},
        "distance_column_consistent":
            bool(np.max(np.abs(dist - dist_stored)) <= 1e-12),
        "lp_bound_vs_defects": bound.to_dict(),
        "within_bound_rhs": bool(dist_norm <= bound_rhs + 1e-12),
        "orbit_residual": residual,
        "distance_norm": dist_norm,
        "defect_norm": seq_pnorm(defects, p),
        "bound_rhs": bound_rhs,
    }
