"""The constructive shadowing core.

A shadow orbit is found as the fixed point of a refinement operator on
window-indexed tangent sequences: stable components are pushed forward
through the perturbed lift, unstable components are pulled backward
through the inverse of the tube map, and the window boundary pins the
stable component at the left edge and the unstable component at the right
edge to zero.  At a fixed point the sequence is exactly a perturbed-family
orbit in tangent coordinates.

Four solve modes share this iteration:

* ``solve_finite``: one window, p-norm bound ``|d|_p <= L |defects|_p``.
* ``solve_infinite``: window doubling until the central half-window
  stabilizes (the computable surrogate of the diagonal compactness
  argument).
* ``solve_limit``: vanishing defects; halving epsilon-bands enforced as a
  decay envelope.
* ``solve_asymptotic``: geometric defects; a geometric decay envelope
  anchored at k1 and a root-rate report.

Envelopes are asserted, never enforced by clipping: a violated envelope is
evidence that the instance and the certified constants disagree, and
surfaces as an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .charts import seq_pnorm
from .errors import (BoundViolationError, EnvelopeViolationError,
                     NewtonDivergenceError, NonConvergenceError,
                     ParameterDomainError, PreconditionError,
                     ScheduleExhaustionError, TargetOutOfRangeError)
from .hyperbolicity import (EffectiveConstants, ShadowingConstants, Splitting,
                            build_splitting, certify, effective_constants,
                            shadowing_constants)
from .pseudoorbit import PseudoOrbit, classify, root_rate
from .serialize import write_csv, write_json
from .systems import LiftedStep, MapFamily, PerturbedFamily, lift_step, unperturbed
from .windows import Window


@dataclass(frozen=True)
class SolveOptions:
    """Numerical knobs for the fixed-point solves."""

    p: float = math.inf
    tol_fixed_point: float = 1e-12
    max_iterations: int = 10_000
    newton_tol: float = 1e-13
    newton_max_iterations: int = 60
    doubling_factor: int = 2
    agreement_tol: float = 1e-8
    max_window: int = 4096
    rate_tail_start: int | None = None
    envelope_slack: float = 1e-12

    def __post_init__(self):
        if self.p != math.inf and self.p < 1:
            raise ParameterDomainError("p must be >= 1 or inf")
        for name in ("tol_fixed_point", "newton_tol", "agreement_tol",
                     "envelope_slack"):
            if getattr(self, name) <= 0:
                raise ParameterDomainError(f"{name} must be positive")
        if self.max_iterations < 1 or self.newton_max_iterations < 1:
            raise ParameterDomainError("iteration caps must be positive")
        if self.doubling_factor < 2:
            raise ParameterDomainError("doubling factor must be >= 2")


@dataclass(frozen=True)
class TangentSequence:
    """A window-indexed sequence of tangent vectors with tube predicates."""

    window: Window
    vectors: np.ndarray  # (N, d)

    def component_sups(self, splitting: Splitting) -> tuple[np.ndarray, np.ndarray]:
        """Per-index norms (|unstable component|, |stable component|)."""
        n = len(self.window)
        u = np.zeros(n)
        s = np.zeros(n)
        for t in range(n):
            u[t] = np.linalg.norm(splitting.proj_u[t] @ self.vectors[t])
            s[t] = np.linalg.norm(splitting.proj_s[t] @ self.vectors[t])
        return u, s

    def in_tube(self, splitting: Splitting, cap: float) -> bool:
        """Componentwise sup tube: both component sups stay within cap."""
        u, s = self.component_sups(splitting)
        return bool(np.max(u) <= cap and np.max(s) <= cap)

    def in_pnorm_tube(self, splitting: Splitting, cap: float, p: float) -> bool:
        u, s = self.component_sups(splitting)
        return seq_pnorm(u, p) <= cap and seq_pnorm(s, p) <= cap

    def in_band_envelope(self, caps: np.ndarray) -> bool:
        """Full-vector caps per index (limit-mode bands)."""
        norms = np.linalg.norm(self.vectors, axis=1)
        return bool(np.all(norms <= caps))

    def in_geometric_envelope(self, cap: float, rate: float, k1: int) -> bool:
        """|z_i| <= cap for |i| <= k1 and cap * rate^(|i|-k1) beyond."""
        norms = np.linalg.norm(self.vectors, axis=1)
        for t, i in enumerate(self.window.indices()):
            lim = cap if abs(i) <= k1 else cap * rate ** (abs(i) - k1)
            if norms[t] > lim:
                return False
        return True


@dataclass
class ShadowingResult:
    """A computed shadow orbit plus every bound and diagnostic it owes."""

    mode: str
    window: Window
    p: float
    gain: float
    delta: float
    points_x: np.ndarray      # pseudo-orbit points (N, d)
    orbit: np.ndarray         # shadow orbit y (N, d)
    distances: np.ndarray     # d_i = d(x_i, y_i) = |z_i|
    defects: np.ndarray       # measured defect sequence (N - 1,)
    gaps: np.ndarray          # perturbation gap sequence (N - 1,)
    achieved_norm: float
    defect_norm: float
    gap_norm: float
    bound_rhs: float
    iterations: int
    final_update: float
    fixed_point_gap: float    # max |z_{i+1} - lifted g(z_i)|
    orbit_residual: float     # max d(g_i(y_i), y_{i+1})
    norm_hypothesis_ok: bool
    contraction_log: list[float] = field(default_factory=list)
    band_report: list[dict] | None = None
    rate_report: dict | None = None
    schedule_report: list[dict] | None = None

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "window": {"lo": self.window.lo, "hi": self.window.hi},
            "p": "inf" if math.isinf(self.p) else self.p,
            "gain": self.gain,
            "delta": self.delta,
            "norms": {
                "distances": self.achieved_norm,
                "defects": self.defect_norm,
                "gap": self.gap_norm,
                "bound_rhs": self.bound_rhs,
            },
            "iterations": self.iterations,
            "final_update": self.final_update,
            "fixed_point_gap": self.fixed_point_gap,
            "orbit_residual": self.orbit_residual,
            "norm_hypothesis_ok": self.norm_hypothesis_ok,
            "band_report": self.band_report,
            "rate_report": self.rate_report,
            "schedule_report": self.schedule_report,
        }
        return out

    def write_json(self, path) -> None:
        write_json(self.to_dict(), path)

    def write_csv(self, path) -> None:
        d = self.points_x.shape[1]
        header = (["i"] + [f"x_{j + 1}" for j in range(d)]
                  + [f"y_{j + 1}" for j in range(d)] + ["dist_i", "delta_i"])
        rows = []
        for t, i in enumerate(self.window.indices()):
            delta = self.defects[t] if i < self.window.hi else None
            rows.append([i, *self.points_x[t], *self.orbit[t],
                         self.distances[t], delta])
        write_csv(path, header, rows)


# -- the operator -------------------------------------------------------------


@dataclass
class _Context:
    window: Window
    splitting: Splitting
    f_steps: list[LiftedStep]
    g_steps: list[LiftedStep]
    eff: EffectiveConstants
    sc: ShadowingConstants
    opts: SolveOptions
    uu_base: list[np.ndarray]     # f's unstable block per transition, at 0
    range_bound: float


def _build_context(family: MapFamily, perturbed: PerturbedFamily,
                   porbit: PseudoOrbit, splitting: Splitting,
                   eff: EffectiveConstants, sc: ShadowingConstants,
                   opts: SolveOptions) -> _Context:
    w = porbit.window
    if splitting.window != w:
        raise ParameterDomainError("splitting window does not match the orbit")
    pts = porbit.points
    f_steps = [lift_step(family, i, pts[w.pos(i)], pts[w.pos(i) + 1])
               for i in w.transitions()]
    g_steps = [lift_step(perturbed.maps, i, pts[w.pos(i)], pts[w.pos(i) + 1])
               for i in w.transitions()]
    du = splitting.unstable_dim
    uu_base = []
    for t, step in enumerate(f_steps):
        m = splitting.frame_inv[t + 1] @ step.derivative(
            np.zeros(splitting.dim)) @ splitting.frame[t]
        uu_base.append(m[:du, :du])
    range_bound = eff.expansion * sc.gain * sc.delta
    return _Context(window=w, splitting=splitting, f_steps=f_steps,
                    g_steps=g_steps, eff=eff, sc=sc, opts=opts,
                    uu_base=uu_base, range_bound=range_bound)


def tube_map(step: LiftedStep, splitting: Splitting, z: np.ndarray,
             omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the tube comparison map and the raw lift.

    Returns (value, raw) where value is the unstable projection of
    lift(stable part of z + omega) - lift(stable part of z) at the next
    index, and raw = lift(z).
    """
    t = splitting.window.pos(step.i)
    sz = splitting.proj_s[t] @ z
    value = splitting.proj_u[t + 1] @ (step.map(sz + omega) - step.map(sz))
    return value, step.map(z)


def invert_unstable(step: LiftedStep, splitting: Splitting, z: np.ndarray,
                    target: np.ndarray, opts: SolveOptions,
                    range_bound: float = math.inf,
                    uu_base: np.ndarray | None = None,
                    expansion_bound: float | None = None) -> np.ndarray:
    """Solve tube_map(step, ., z)(omega) = target for omega.

    ``target`` must lie in the unstable subspace at step.i + 1 within the
    certified range; affine lifts are inverted exactly, others by Newton
    on the unstable block.
    """
    w = splitting.window
    t = w.pos(step.i)
    du = splitting.unstable_dim
    d = splitting.dim
    if du == 0:
        return np.zeros(d)

    tnorm = float(np.linalg.norm(target))
    if tnorm > range_bound * (1.0 + 1e-12) + 1e-300:
        raise TargetOutOfRangeError(
            f"unstable target |{tnorm:.6g}| exceeds certified range "
            f"{range_bound:.6g} at index {step.i}")

    beta = splitting.unstable_coords(step.i + 1, target)
    if uu_base is None:
        m = splitting.frame_inv[t + 1] @ step.derivative(np.zeros(d)) \
            @ splitting.frame[t]
        uu_base = m[:du, :du]

    try:
        alpha = np.linalg.solve(uu_base, beta)
    except np.linalg.LinAlgError as exc:
        raise NewtonDivergenceError(
            f"unstable block is singular at index {step.i}",
            index=step.i) from exc

    if step.affine:
        omega = splitting.basis_u[t] @ alpha
    else:
        sz = splitting.proj_s[t] @ z
        f_sz = step.map(sz)
        omega = splitting.basis_u[t] @ alpha
        for _ in range(opts.newton_max_iterations):
            value = splitting.proj_u[t + 1] @ (step.map(sz + omega) - f_sz)
            resid = splitting.unstable_coords(step.i + 1, value) - beta
            if np.linalg.norm(resid) <= opts.newton_tol:
                break
            jac = (splitting.frame_inv[t + 1]
                   @ step.derivative(sz + omega)
                   @ splitting.frame[t])[:du, :du]
            try:
                alpha = alpha - np.linalg.solve(jac, resid)
            except np.linalg.LinAlgError as exc:
                raise NewtonDivergenceError(
                    f"unstable Newton jacobian singular at index {step.i}",
                    index=step.i) from exc
            omega = splitting.basis_u[t] @ alpha
        else:
            raise NewtonDivergenceError(
                f"unstable Newton did not reach {opts.newton_tol:.3g} within "
                f"{opts.newton_max_iterations} iterations at index {step.i} "
                f"(expansion hypothesis violated here?)", index=step.i)

    if expansion_bound is not None and expansion_bound > 0:
        cap = tnorm / expansion_bound + 10.0 * opts.newton_tol
        if float(np.linalg.norm(omega)) > cap:
            raise NewtonDivergenceError(
                f"inverse image |{np.linalg.norm(omega):.6g}| exceeds "
                f"{cap:.6g} at index {step.i}: expansion below the certified "
                f"bound", index=step.i)
    return omega


def refinement_step(z: np.ndarray, ctx: _Context) -> np.ndarray:
    """One application of the refinement operator to a tangent sequence.

    Stable rows push the perturbed lift forward (left boundary zero);
    unstable rows solve the tube map backward (right boundary zero).
    """
    w = ctx.window
    spl = ctx.splitting
    n = len(w)
    out = np.zeros_like(z)
    g_vals = [ctx.g_steps[t].map(z[t]) for t in range(n - 1)]

    for t in range(n - 1):
        out[t + 1] += spl.proj_s[t + 1] @ g_vals[t]

    for t in range(n - 1):
        step = ctx.f_steps[t]
        sz = spl.proj_s[t] @ z[t]
        f_z = step.map(z[t])
        f_sz = step.map(sz)
        target = spl.proj_u[t + 1] @ (-g_vals[t] + f_z - f_sz + z[t + 1])
        out[t] += invert_unstable(step, spl, z[t], target, ctx.opts,
                                  range_bound=ctx.range_bound,
                                  uu_base=ctx.uu_base[t],
                                  expansion_bound=ctx.eff.expansion)
    return out


def _iterate(ctx: _Context, component_caps: np.ndarray | None = None,
             bands: np.ndarray | None = None
             ) -> tuple[np.ndarray, int, float, list[float]]:
    """Fixed-point iteration from zero with optional envelope checks.

    ``component_caps[t]`` caps both component norms at window position t;
    the caps are asserted on every iterate (violations raise), matching
    the self-mapping property of the operator on its envelope sets.
    """
    w = ctx.window
    spl = ctx.splitting
    slack = ctx.opts.envelope_slack
    z = np.zeros((len(w), spl.dim))
    prev_diff = None
    contraction_log: list[float] = []
    growth_streak = 0

    for it in range(1, ctx.opts.max_iterations + 1):
        nxt = refinement_step(z, ctx)
        if component_caps is not None:
            for t in range(len(w)):
                cap = component_caps[t] + slack * (1.0 + component_caps[t])
                cu = np.linalg.norm(spl.proj_u[t] @ nxt[t])
                cs = np.linalg.norm(spl.proj_s[t] @ nxt[t])
                if cu > cap or cs > cap:
                    i = w.lo + t
                    band = int(bands[t]) if bands is not None else None
                    raise EnvelopeViolationError(
                        f"iterate left the envelope at index {i}: component "
                        f"norms ({cu:.6g}, {cs:.6g}) exceed cap "
                        f"{component_caps[t]:.6g}"
                        + (f" (band {band})" if band is not None else ""),
                        index=i, band=band)
        diff = float(np.max(np.linalg.norm(nxt - z, axis=1)))
        if prev_diff is not None and prev_diff > 0.0:
            ratio = diff / prev_diff
            contraction_log.append(ratio)
            growth_streak = growth_streak + 1 if ratio > 1.0 else 0
            if growth_streak >= 10:
                raise NonConvergenceError(
                    f"update grew for 10 consecutive iterations "
                    f"(last ratio {ratio:.6g}) at iteration {it}",
                    contraction_log=contraction_log)
        z = nxt
        if diff <= ctx.opts.tol_fixed_point:
            return z, it, diff, contraction_log
        prev_diff = diff

    raise NonConvergenceError(
        f"no convergence to {ctx.opts.tol_fixed_point:.3g} within "
        f"{ctx.opts.max_iterations} iterations "
        f"(last update {prev_diff:.6g})", contraction_log=contraction_log)


# -- shared assembly ----------------------------------------------------------


def _check_sup_preconditions(defects: np.ndarray, gaps: np.ndarray,
                             delta: float) -> None:
    tol = 1e-12
    if defects.size and float(np.max(defects)) > delta + tol:
        raise PreconditionError(
            f"sup defect {np.max(defects):.6g} exceeds the defect budget "
            f"delta = {delta:.6g}")
    if gaps.size and float(np.max(gaps)) > delta + tol:
        raise PreconditionError(
            f"sup perturbation gap {np.max(gaps):.6g} exceeds the defect "
            f"budget delta = {delta:.6g}")


def _finish(mode: str, family: MapFamily, perturbed: PerturbedFamily,
            porbit: PseudoOrbit, ctx: _Context, z: np.ndarray,
            iterations: int, final_update: float,
            contraction_log: list[float], p: float) -> ShadowingResult:
    w = ctx.window
    chart = family.chart
    n = len(w)
    orbit = np.array([chart.exp(porbit.points[t], z[t]) for t in range(n)])
    distances = np.linalg.norm(z, axis=1)

    fixed_point_gap = 0.0
    for t in range(n - 1):
        dev = np.linalg.norm(z[t + 1] - ctx.g_steps[t].map(z[t]))
        fixed_point_gap = max(fixed_point_gap, float(dev))

    orbit_residual = 0.0
    for t, i in enumerate(w.transitions()):
        res = chart.distance(perturbed.maps.evaluate(i, orbit[t]),
                             orbit[t + 1])
        orbit_residual = max(orbit_residual, res)

    gaps = perturbed.gap_sequence(w.transitions())
    defect_norm = seq_pnorm(porbit.defects, p)
    gap_norm = seq_pnorm(gaps, p)
    achieved = seq_pnorm(distances, p)
    bound_rhs = ctx.sc.gain * max(defect_norm, gap_norm)
    hypothesis_ok = (defect_norm <= ctx.sc.delta + 1e-12
                     and gap_norm <= ctx.sc.delta + 1e-12)
    if achieved > bound_rhs + 1e-12:
        raise BoundViolationError(
            f"distance norm {achieved:.6g} exceeds gain * disturbance "
            f"norm = {bound_rhs:.6g} (p = {p})")

    return ShadowingResult(
        mode=mode, window=w, p=p, gain=ctx.sc.gain, delta=ctx.sc.delta,
        points_x=porbit.points.copy(), orbit=orbit, distances=distances,
        defects=porbit.defects.copy(), gaps=gaps, achieved_norm=achieved,
        defect_norm=defect_norm, gap_norm=gap_norm, bound_rhs=bound_rhs,
        iterations=iterations, final_update=final_update,
        fixed_point_gap=fixed_point_gap, orbit_residual=orbit_residual,
        norm_hypothesis_ok=hypothesis_ok,
        contraction_log=contraction_log[-32:])


# -- solve modes --------------------------------------------------------------


def solve_finite(family: MapFamily, perturbed: PerturbedFamily | None,
                 porbit: PseudoOrbit, splitting: Splitting,
                 eff: EffectiveConstants, sc: ShadowingConstants,
                 opts: SolveOptions | None = None) -> ShadowingResult:
    """Shadow a pseudo-orbit on one finite window.

    Requires pointwise defects and perturbation gaps within the budget
    delta.  The p-norm smallness hypothesis is recorded (not enforced); the
    conclusion |{d_i}|_p <= gain * max(|defects|_p, |gap|_p) is always
    asserted and a violation raises rather than silently passing.
    """
    opts = opts or SolveOptions()
    perturbed = perturbed or unperturbed(family)
    if sc.mode != "finite":
        raise ParameterDomainError(f"expected finite-mode constants, got {sc.mode}")
    gaps = perturbed.gap_sequence(porbit.window.transitions())
    _check_sup_preconditions(porbit.defects, gaps, sc.delta)
    ctx = _build_context(family, perturbed, porbit, splitting, eff, sc, opts)
    z, iterations, final_update, log = _iterate(ctx)
    return _finish("finite", family, perturbed, porbit, ctx, z, iterations,
                   final_update, log, opts.p)


def solve_infinite(family: MapFamily, perturbed: PerturbedFamily | None,
                   schedule: Callable[[Window], PseudoOrbit], start_k: int,
                   opts: SolveOptions | None = None,
                   splitting_method: str = "auto",
                   unstable_dim: int | None = None,
                   safety: float = 0.5,
                   delta_cap: float | None = None) -> ShadowingResult:
    """Window-doubling surrogate for the infinite-window problem.

    ``schedule(window)`` must return nested pseudo-orbits (restrictions of
    one underlying orbit).  Doubles the window until two consecutive
    solutions agree on the central half of the smaller window, then
    returns the stabilized central segment.
    """
    opts = opts or SolveOptions()
    perturbed = perturbed or unperturbed(family)
    if start_k < 1:
        raise ParameterDomainError("start window must have k >= 1")

    prev: ShadowingResult | None = None
    report: list[dict] = []
    k = start_k
    while k <= opts.max_window:
        w = Window.symmetric(k)
        porbit = schedule(w)
        if porbit.window != w:
            raise ParameterDomainError("schedule returned a mismatched window")
        if prev is not None:
            inner = porbit.restrict(prev.window)
            if not np.allclose(inner.points, prev.points_x, atol=1e-15):
                raise ParameterDomainError(
                    "schedule is not nested: points changed on the overlap")
        splitting = build_splitting(family, porbit.points, w,
                                    method=splitting_method,
                                    unstable_dim=unstable_dim)
        cert = certify(family, splitting)
        eff = effective_constants(cert, safety=safety)
        sc = shadowing_constants(eff, cert.h, family.chart.rho, "finite",
                                 delta_cap=delta_cap)
        res = solve_finite(family, perturbed, porbit, splitting, eff, sc, opts)

        if prev is not None:
            half = prev.window.hi // 2
            central = Window.symmetric(half)
            agreement = 0.0
            for i in central.indices():
                dist = family.chart.distance(prev.orbit[prev.window.pos(i)],
                                             res.orbit[res.window.pos(i)])
                agreement = max(agreement, dist)
            report.append({"window": k, "agreement_halfwidth": half,
                           "central_disagreement": agreement,
                           "achieved_norm": res.achieved_norm,
                           "bound_rhs": res.bound_rhs})
            if agreement <= opts.agreement_tol:
                return _restrict_result(res, central, mode="infinite",
                                        schedule_report=report)
        else:
            report.append({"window": k, "agreement_halfwidth": None,
                           "central_disagreement": None,
                           "achieved_norm": res.achieved_norm,
                           "bound_rhs": res.bound_rhs})
        prev = res
        k *= opts.doubling_factor

    raise ScheduleExhaustionError(
        f"no central agreement within the window cap {opts.max_window}")


def _restrict_result(res: ShadowingResult, central: Window, mode: str,
                     schedule_report: list[dict]) -> ShadowingResult:
    a = res.window.pos(central.lo)
    b = res.window.pos(central.hi)
    distances = res.distances[a:b + 1]
    achieved = seq_pnorm(distances, res.p)
    return replace(
        res, mode=mode, window=central,
        points_x=res.points_x[a:b + 1], orbit=res.orbit[a:b + 1],
        distances=distances, defects=res.defects[a:b], gaps=res.gaps[a:b],
        achieved_norm=achieved, schedule_report=schedule_report)


def limit_band_ladder(defects: np.ndarray, gaps: np.ndarray, window: Window,
                      gain: float, delta: float
                      ) -> tuple[list[int], list[float]]:
    """Band thresholds k_n and caps for the halving epsilon schedule.

    eps_0 = gain * delta, eps_n = eps_0 / 2^n; k_n is the first index
    beyond which both the defects and the gaps stay below eps_n.  The
    ladder stops when the next threshold would leave the window.
    """
    combined = np.maximum(defects, gaps)
    idx = np.array([abs(i) for i in window.transitions()])
    kmax = int(idx.max()) if idx.size else 0
    suffix = np.zeros(kmax + 2)
    for n in range(kmax, -1, -1):
        sel = combined[idx >= n]
        suffix[n] = sel.max() if sel.size else 0.0

    thresholds: list[int] = []
    caps: list[float] = []
    eps = gain * delta
    n = 0
    while True:
        k_n = None
        for cand in range(kmax + 1):
            if suffix[cand] < eps:
                k_n = cand
                break
        if k_n is None or k_n > window.hi:
            break
        thresholds.append(k_n)
        caps.append(gain * eps)
        eps /= 2.0
        n += 1
        if n > 200:          # eps underflows long before this
            break
    return thresholds, caps


def solve_limit(family: MapFamily, perturbed: PerturbedFamily | None,
                porbit: PseudoOrbit, splitting: Splitting,
                eff: EffectiveConstants, sc: ShadowingConstants,
                opts: SolveOptions | None = None) -> ShadowingResult:
    """Shadowing with vanishing defects: banded decay enforced and reported.

    Preconditions: both the measured defect profile and the perturbation
    gap profile vanish toward the window edge, and both stay within delta
    pointwise.  Each epsilon band [k_n, k_{n+1}) must satisfy
    d_i <= gain * eps_n; the per-band outcome is returned as the band
    report.
    """
    opts = opts or SolveOptions()
    perturbed = perturbed or unperturbed(family)
    if sc.mode != "limit":
        raise ParameterDomainError(f"expected limit-mode constants, got {sc.mode}")
    w = porbit.window
    gaps = perturbed.gap_sequence(w.transitions())

    dprofile = classify(porbit.defects, w.transitions())
    gprofile = classify(gaps, w.transitions())
    if not dprofile.vanishing:
        raise PreconditionError(
            "defect profile is not vanishing (tail sup "
            f"{dprofile.tail_curve[-1]:.6g} vs overall "
            f"{dprofile.tail_curve[0]:.6g})")
    if not gprofile.vanishing:
        raise PreconditionError("perturbation gap profile is not vanishing")
    _check_sup_preconditions(porbit.defects, gaps, sc.delta)

    thresholds, caps = limit_band_ladder(porbit.defects, gaps, w,
                                         sc.gain, sc.delta)

    n = len(w)
    global_cap = sc.gain * sc.delta
    component_caps = np.full(n, global_cap)
    bands = np.full(n, -1, dtype=int)
    for t, i in enumerate(w.indices()):
        for b in range(len(thresholds) - 1, -1, -1):
            if abs(i) >= thresholds[b]:
                bands[t] = b
                component_caps[t] = min(global_cap, caps[b])
                break

    ctx = _build_context(family, perturbed, porbit, splitting, eff, sc, opts)
    z, iterations, final_update, log = _iterate(ctx, component_caps, bands)
    result = _finish("limit", family, perturbed, porbit, ctx, z, iterations,
                     final_update, log, math.inf)

    report = []
    for b, k_n in enumerate(thresholds):
        hi_abs = thresholds[b + 1] - 1 if b + 1 < len(thresholds) else w.hi
        hi_abs = min(hi_abs, w.hi)
        sel = [result.distances[t] for t, i in enumerate(w.indices())
               if k_n <= abs(i) <= hi_abs]
        max_d = max(sel) if sel else 0.0
        entry = {"band": b, "lo_abs": k_n, "hi_abs": hi_abs, "cap": caps[b],
                 "max_distance": max_d, "margin": caps[b] - max_d}
        report.append(entry)
        if max_d > caps[b] + opts.envelope_slack * (1.0 + caps[b]):
            result.band_report = report
            raise EnvelopeViolationError(
                f"band {b} (|i| in [{k_n}, {hi_abs}]) has max distance "
                f"{max_d:.6g} above its cap {caps[b]:.6g}",
                index=k_n, band=b)
    result.band_report = report
    return result


def solve_asymptotic(family: MapFamily, perturbed: PerturbedFamily | None,
                     porbit: PseudoOrbit, splitting: Splitting,
                     eff: EffectiveConstants, v: float, eps: float,
                     opts: SolveOptions | None = None,
                     delta_cap: float | None = None) -> ShadowingResult:
    """Shadowing with geometrically decaying defects at rate v.

    Both measured profiles (defects and perturbation gap) must satisfy the
    root-rate bound v and sit below the envelope (v + eps)^|i| beyond some
    k0 inside the window.  The solution is checked against the geometric
    envelope 2 * gain * delta * (v+eps)^(|i|-k1) beyond k1 and the tail
    root rate is reported.

    Without an explicit ``delta_cap`` the defect budget is the smallest
    one compatible with the instance, max(1e-3, sup defects, sup gap); k1
    then anchors the envelope where the budget has decayed through.  The
    fixed-point tolerance is tightened to a fraction of (v+eps)^window.hi
    (floored at 1e-15) so that iteration error at the deepest indices
    cannot masquerade as a rate violation.
    """
    opts = opts or SolveOptions()
    perturbed = perturbed or unperturbed(family)
    w = porbit.window
    gaps = perturbed.gap_sequence(w.transitions())
    rate = v + eps
    if not 0.0 < rate < 1.0:
        raise ParameterDomainError("need 0 < v + eps < 1")

    trans = list(w.transitions())
    n0 = opts.rate_tail_start or max(1, w.hi // 4)
    v_defect = root_rate(porbit.defects, trans, min(n0, max(1, w.hi - 1)))
    if v_defect > v + 1e-12:
        raise PreconditionError(
            f"measured defect root rate {v_defect:.6g} exceeds v = {v:.6g}")
    v_gap = root_rate(gaps, trans, min(n0, max(1, w.hi - 1)))
    if v_gap > v + 1e-12:
        raise PreconditionError(
            f"measured gap root rate {v_gap:.6g} exceeds v = {v:.6g}")

    combined = np.maximum(porbit.defects, gaps)
    k0 = None
    for cand in range(0, w.hi + 1):
        if all(val < rate ** abs(i) for val, i in zip(combined, trans)
               if abs(i) >= cand):
            k0 = cand
            break
    if k0 is None:
        raise PreconditionError(
            f"defects/gaps never fall below the envelope (v+eps)^|i| inside "
            f"the window (rate {rate:.6g})")

    if delta_cap is None:
        sup_in = float(np.max(combined)) if combined.size else 0.0
        delta_cap = max(1e-3, sup_in)
    sc = shadowing_constants(eff, splitting.h, family.chart.rho,
                             "asymptotic", delta_cap=delta_cap,
                             v=v, eps=eps, k0=k0)
    assert sc.k1 is not None
    if w.hi <= sc.k1:
        raise PreconditionError(
            f"window half-width {w.hi} must exceed k1 = {sc.k1}")
    _check_sup_preconditions(porbit.defects, gaps, sc.delta)

    tail_tol = max(1e-15, 0.05 * rate ** w.hi)
    if tail_tol < opts.tol_fixed_point:
        opts = replace(opts, tol_fixed_point=tail_tol)

    n = len(w)
    cap0 = sc.gain * sc.delta
    component_caps = np.zeros(n)
    for t, i in enumerate(w.indices()):
        component_caps[t] = cap0 if abs(i) <= sc.k1 \
            else cap0 * rate ** (abs(i) - sc.k1)

    ctx = _build_context(family, perturbed, porbit, splitting, eff, sc, opts)
    z, iterations, final_update, log = _iterate(ctx, component_caps)
    result = _finish("asymptotic", family, perturbed, porbit, ctx, z,
                     iterations, final_update, log, math.inf)

    worst_ratio = 0.0
    for t, i in enumerate(w.indices()):
        if abs(i) >= sc.k1:
            envelope = 2.0 * cap0 * rate ** (abs(i) - sc.k1)
            if result.distances[t] > envelope + opts.envelope_slack:
                raise EnvelopeViolationError(
                    f"distance {result.distances[t]:.6g} at index {i} "
                    f"exceeds the geometric envelope {envelope:.6g}",
                    index=i)
            if envelope > 0:
                worst_ratio = max(worst_ratio, result.distances[t] / envelope)

    v_hat = float(root_rate(result.distances, w.indices(), max(1, sc.k1)))
    passed = bool(v_hat <= rate + 1e-9)
    result.rate_report = {"v": v, "eps": eps, "rate": rate, "k0": sc.k0,
                          "k1": sc.k1, "defect_root_rate": float(v_defect),
                          "gap_root_rate": float(v_gap),
                          "distance_root_rate": v_hat,
                          "envelope_max_ratio": float(worst_ratio),
                          "passed": passed}
    if not passed:
        raise BoundViolationError(
            f"distance root rate {v_hat:.6g} exceeds v + eps + 1e-9 = "
            f"{rate + 1e-9:.6g}")
    return result
