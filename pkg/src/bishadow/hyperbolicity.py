"""Splittings, derivative blocks, semi-hyperbolicity certificates, constants.

The pipeline implemented here:

1. ``build_splitting``: stable/unstable bases and oblique projections at
   each base point of a window, with the projection bound h.
2. ``extract_blocks`` / ``certify``: derivative blocks between consecutive
   splittings and the per-index expansion/contraction/coupling constants,
   checked against the semi-hyperbolicity inequalities.
3. ``effective_constants``: certified constants after consuming a
   nonlinearity (modulus-of-continuity) budget.
4. ``shadowing_constants``: the tracking gain L and defect budget delta for
   the finite, limit and asymptotic solve modes, with feasibility checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (CertificationError, DegenerateSplittingError,
                     InfeasibleConstantsError, ParameterDomainError)
from .systems import MapFamily, continuity_modulus
from .windows import Window

DELTA_DEFAULT_CAP = 1e-3
CONDITION_CAP = 1e12


def conorm(m: np.ndarray) -> float:
    """Minimal expansion min_{|v|=1} |M v| (the smallest singular value).

    A map out of a zero-dimensional space expands vacuously (+inf); a map
    with a nullspace by shape (more columns than rows) has conorm 0.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("conorm expects a matrix")
    rows, cols = m.shape
    if cols == 0:
        return math.inf
    if rows < cols:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def opnorm(m: np.ndarray) -> float:
    """Spectral norm, 0 for empty matrices."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[0])


# -- splittings ---------------------------------------------------------------


@dataclass(frozen=True)
class Splitting:
    """Per-index stable/unstable bases with oblique projections.

    ``basis_u[t]`` and ``basis_s[t]`` have orthonormal columns spanning the
    unstable/stable subspaces at ``points[t]``; ``frame[t]`` stacks them as
    [U | S].  ``proj_u`` and ``proj_s`` are the oblique projections onto
    each subspace along the other, and ``h`` bounds their operator norms
    over the window.
    """

    window: Window
    points: np.ndarray      # (N, d)
    basis_u: np.ndarray     # (N, d, du)
    basis_s: np.ndarray     # (N, d, ds)
    frame: np.ndarray       # (N, d, d)
    frame_inv: np.ndarray   # (N, d, d)
    proj_u: np.ndarray      # (N, d, d)
    proj_s: np.ndarray      # (N, d, d)
    h: float
    method: str

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def unstable_dim(self) -> int:
        return self.basis_u.shape[2]

    @property
    def stable_dim(self) -> int:
        return self.basis_s.shape[2]

    def project_u(self, i: int, vec: np.ndarray) -> np.ndarray:
        return self.proj_u[self.window.pos(i)] @ vec

    def project_s(self, i: int, vec: np.ndarray) -> np.ndarray:
        return self.proj_s[self.window.pos(i)] @ vec

    def unstable_coords(self, i: int, vec: np.ndarray) -> np.ndarray:
        return (self.frame_inv[self.window.pos(i)] @ vec)[: self.unstable_dim]

    def stable_coords(self, i: int, vec: np.ndarray) -> np.ndarray:
        return (self.frame_inv[self.window.pos(i)] @ vec)[self.unstable_dim:]


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Deterministic column signs: largest-magnitude entry positive."""
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            out[:, j] = -col
    return out


def _orthonormal(basis: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return basis
    q, _ = np.linalg.qr(basis)
    return _fix_signs(q)


def _real_eigen_split(jac: np.ndarray, unstable_dim: int | None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Real eigenvector bases ordered by |eigenvalue| (descending)."""
    vals, vecs = np.linalg.eig(jac)
    if np.max(np.abs(vals.imag)) > 1e-9:
        raise DegenerateSplittingError(
            "jacobian has a complex eigenvalue pair; no real eigen splitting")
    vals = vals.real
    vecs = vecs.real
    order = np.argsort(-np.abs(vals))
    vals = vals[order]
    vecs = vecs[:, order]
    du = int(np.sum(np.abs(vals) > 1.0)) if unstable_dim is None else unstable_dim
    return _orthonormal(vecs[:, :du]), _orthonormal(vecs[:, du:])


def build_splitting(family: MapFamily, points: np.ndarray, window: Window,
                    method: str = "auto",
                    unstable_dim: int | None = None) -> Splitting:
    """Stable/unstable bases at each point of the window.

    Methods:

    * ``eigen``: per-point jacobian eigenbases (default for affine families).
    * ``coordinate``: first ``unstable_dim`` coordinate axes unstable.
    * ``power-iteration``: unstable basis pushed forward from the left edge,
      stable basis pulled back from the right edge; edges are seeded with
      the local eigenbases (default for nonlinear families).
    """
    points = np.asarray(points, dtype=float)
    n = len(window)
    if points.shape[0] != n:
        raise ParameterDomainError(
            f"{points.shape[0]} points do not fill window of size {n}")
    d = points.shape[1]
    if method == "auto":
        method = "eigen" if family.affine else "power-iteration"
    if method not in ("eigen", "coordinate", "power-iteration"):
        raise ParameterDomainError(f"unknown splitting method {method!r}")

    jacs = [family.jacobian(i, points[window.pos(i)]) for i in window.indices()]

    if unstable_dim is None:
        vals = np.linalg.eigvals(jacs[0])
        du = int(np.sum(np.abs(vals) > 1.0))
    else:
        du = int(unstable_dim)
    if not 0 <= du <= d:
        raise ParameterDomainError(f"unstable dimension {du} out of range")

    basis_u = np.zeros((n, d, du))
    basis_s = np.zeros((n, d, d - du))

    if method == "coordinate":
        eye = np.eye(d)
        for t in range(n):
            basis_u[t] = eye[:, :du]
            basis_s[t] = eye[:, du:]
    elif method == "eigen":
        for t in range(n):
            u, s = _real_eigen_split(jacs[t], du)
            if u.shape[1] != du:
                raise DegenerateSplittingError(
                    "unstable dimension is inconsistent across the window")
            basis_u[t], basis_s[t] = u, s
    else:  # power-iteration
        u_seed, _ = _real_eigen_split(jacs[0], du)
        basis_u[0] = u_seed
        for t in range(n - 1):
            basis_u[t + 1] = _orthonormal(jacs[t] @ basis_u[t])
        _, s_seed = _real_eigen_split(jacs[-1], du)
        basis_s[-1] = s_seed
        for t in range(n - 2, -1, -1):
            try:
                pulled = np.linalg.solve(jacs[t], basis_s[t + 1])
            except np.linalg.LinAlgError as exc:
                raise DegenerateSplittingError(
                    f"jacobian at window position {t} is singular") from exc
            basis_s[t] = _orthonormal(pulled)

    frame = np.zeros((n, d, d))
    frame_inv = np.zeros((n, d, d))
    proj_u = np.zeros((n, d, d))
    proj_s = np.zeros((n, d, d))
    h = 1.0
    for t in range(n):
        f = np.hstack([basis_u[t], basis_s[t]])
        cond = np.linalg.cond(f)
        if not np.isfinite(cond) or cond > CONDITION_CAP:
            raise DegenerateSplittingError(
                f"combined basis at window position {t} is numerically "
                f"singular (condition number {cond:.3g})")
        finv = np.linalg.inv(f)
        frame[t] = f
        frame_inv[t] = finv
        proj_u[t] = basis_u[t] @ finv[:du, :]
        proj_s[t] = basis_s[t] @ finv[du:, :]
        h = max(h, opnorm(proj_u[t]), opnorm(proj_s[t]))

    return Splitting(window=window, points=points, basis_u=basis_u,
                     basis_s=basis_s, frame=frame, frame_inv=frame_inv,
                     proj_u=proj_u, proj_s=proj_s, h=float(h), method=method)


# -- derivative blocks and certificates --------------------------------------


@dataclass(frozen=True)
class DerivativeBlocks:
    """Blocks of one derivative expressed between consecutive splittings.

    ``uu`` maps unstable coordinates to unstable coordinates, ``us`` stable
    to unstable, ``su`` unstable to stable, ``ss`` stable to stable.
    """

    uu: np.ndarray
    us: np.ndarray
    su: np.ndarray
    ss: np.ndarray

    @property
    def expansion(self) -> float:
        return conorm(self.uu)

    @property
    def contraction(self) -> float:
        return opnorm(self.ss)

    @property
    def coupling_to_unstable(self) -> float:
        return opnorm(self.us)

    @property
    def coupling_to_stable(self) -> float:
        return opnorm(self.su)

    def matrix(self) -> np.ndarray:
        top = np.hstack([self.uu, self.us])
        bottom = np.hstack([self.su, self.ss])
        return np.vstack([top, bottom])


def extract_blocks(family: MapFamily, splitting: Splitting, i: int,
                   x: np.ndarray | None = None) -> DerivativeBlocks:
    """Blocks of Df_i from the splitting at index i to the one at i + 1."""
    w = splitting.window
    if not w.lo <= i < w.hi:
        raise ParameterDomainError(f"transition {i} outside window")
    t = w.pos(i)
    if x is None:
        x = splitting.points[t]
    du = splitting.unstable_dim
    m = splitting.frame_inv[t + 1] @ family.jacobian(i, x) @ splitting.frame[t]
    return DerivativeBlocks(uu=m[:du, :du], us=m[:du, du:],
                            su=m[du:, :du], ss=m[du:, du:])


@dataclass(frozen=True)
class Certificate:
    """Per-index semi-hyperbolicity constants over a window.

    ``expansion[t]`` is the conorm of the unstable block at transition t,
    ``contraction[t]`` the norm of the stable block, and the coupling
    entries the norms of the off-diagonal blocks.  All invariants were
    checked at construction; a certificate object only exists for systems
    that passed.
    """

    window: Window
    family_name: str
    method: str
    expansion: np.ndarray
    contraction: np.ndarray
    coupling_to_unstable: np.ndarray
    coupling_to_stable: np.ndarray
    h: float
    modulus_estimate: float
    modulus_is_sampled: bool

    @property
    def expansion_min(self) -> float:
        return float(np.min(self.expansion)) if self.expansion.size else math.inf

    @property
    def contraction_max(self) -> float:
        return float(np.max(self.contraction)) if self.contraction.size else 0.0

    @property
    def coupling_to_unstable_max(self) -> float:
        return float(np.max(self.coupling_to_unstable)) if self.coupling_to_unstable.size else 0.0

    @property
    def coupling_to_stable_max(self) -> float:
        return float(np.max(self.coupling_to_stable)) if self.coupling_to_stable.size else 0.0

    @property
    def product_margin_min(self) -> float:
        margins = (1.0 - self.contraction) * (self.expansion - 1.0) \
            - self.coupling_to_stable * self.coupling_to_unstable
        return float(np.min(margins)) if margins.size else math.inf

    def to_dict(self) -> dict:
        return {
            "window": {"lo": self.window.lo, "hi": self.window.hi},
            "family": self.family_name,
            "splitting_method": self.method,
            "per_index": {
                "expansion": [float(v) for v in self.expansion],
                "contraction": [float(v) for v in self.contraction],
                "coupling_to_unstable": [float(v) for v in self.coupling_to_unstable],
                "coupling_to_stable": [float(v) for v in self.coupling_to_stable],
            },
            "expansion_min": self.expansion_min,
            "contraction_max": self.contraction_max,
            "coupling_to_unstable_max": self.coupling_to_unstable_max,
            "coupling_to_stable_max": self.coupling_to_stable_max,
            "h": self.h,
            "product_margin_min": self.product_margin_min,
            "modulus_estimate": self.modulus_estimate,
            "modulus_is_sampled": self.modulus_is_sampled,
        }

    def report_text(self) -> str:
        lines = [
            f"semi-hyperbolicity certificate: {self.family_name}",
            f"window: [{self.window.lo}, {self.window.hi}]    "
            f"splitting: {self.method}",
            "",
            f"{'i':>6}  {'expansion':>22}  {'contraction':>22}  "
            f"{'coupl->u':>22}  {'coupl->s':>22}",
        ]
        for t, i in enumerate(self.window.transitions()):
            lines.append(
                f"{i:>6}  {self.expansion[t]:>22.17g}  "
                f"{self.contraction[t]:>22.17g}  "
                f"{self.coupling_to_unstable[t]:>22.17g}  "
                f"{self.coupling_to_stable[t]:>22.17g}")
        lines += [
            "",
            f"expansion_min            = {self.expansion_min:.17g}",
            f"contraction_max          = {self.contraction_max:.17g}",
            f"coupling_to_unstable_max = {self.coupling_to_unstable_max:.17g}",
            f"coupling_to_stable_max   = {self.coupling_to_stable_max:.17g}",
            f"projection_bound_h       = {self.h:.17g}",
            f"product_margin_min       = {self.product_margin_min:.17g}",
            f"modulus_estimate         = {self.modulus_estimate:.17g}"
            + ("  (sampled estimate)" if self.modulus_is_sampled else "  (exact)"),
            "verdict: PASS",
        ]
        return "\n".join(lines)


def certify(family: MapFamily, splitting: Splitting,
            modulus_radius: float = 0.01, modulus_samples: int = 200,
            seed: int = 0) -> Certificate:
    """Check the semi-hyperbolicity inequalities over the window.

    Raises ``CertificationError`` carrying the first violated inequality
    and the index at which it failed.
    """
    w = splitting.window
    exp, con, cu, cs = [], [], [], []
    for i in w.transitions():
        blocks = extract_blocks(family, splitting, i)
        lam_u = blocks.expansion
        lam_s = blocks.contraction
        mu_u = blocks.coupling_to_unstable
        mu_s = blocks.coupling_to_stable
        if not lam_s < 1.0:
            raise CertificationError(
                f"contraction {lam_s:.6g} >= 1 at index {i}",
                index=i, inequality="contraction < 1")
        if not lam_u > 1.0:
            raise CertificationError(
                f"expansion {lam_u:.6g} <= 1 at index {i}",
                index=i, inequality="expansion > 1")
        lhs = (1.0 - lam_s) * (lam_u - 1.0)
        rhs = mu_s * mu_u
        if not lhs > rhs:
            raise CertificationError(
                f"product inequality violated at index {i}: "
                f"(1 - contraction)(expansion - 1) = {lhs:.6g} <= "
                f"coupling product {rhs:.6g}",
                index=i,
                inequality="(1 - contraction)(expansion - 1) > coupling product")
        exp.append(lam_u)
        con.append(lam_s)
        cu.append(mu_u)
        cs.append(mu_s)

    if family.affine and family.analytic_jacobian:
        modulus, sampled = 0.0, False
    else:
        modulus = continuity_modulus(family, radius=modulus_radius,
                                     samples=modulus_samples, seed=seed)
        sampled = True

    return Certificate(window=w, family_name=family.name,
                       method=splitting.method,
                       expansion=np.array(exp), contraction=np.array(con),
                       coupling_to_unstable=np.array(cu),
                       coupling_to_stable=np.array(cs),
                       h=splitting.h, modulus_estimate=modulus,
                       modulus_is_sampled=sampled)


# -- derived constants --------------------------------------------------------


@dataclass(frozen=True)
class EffectiveConstants:
    """Certified constants after consuming the nonlinearity budget.

    ``expansion`` stays > 1 and ``contraction`` < 1 after each is moved
    toward 1 by h^2 * modulus; the couplings are inflated by the same
    amount.  ``modulus`` is the budget actually consumed.
    """

    expansion: float
    contraction: float
    coupling_to_unstable: float
    coupling_to_stable: float
    modulus: float

    def to_dict(self) -> dict:
        return {
            "effective_expansion": self.expansion,
            "effective_contraction": self.contraction,
            "effective_coupling_to_unstable": self.coupling_to_unstable,
            "effective_coupling_to_stable": self.coupling_to_stable,
            "modulus_consumed": self.modulus,
        }


def effective_constants(cert: Certificate, safety: float = 0.5,
                        modulus: float | None = None) -> EffectiveConstants:
    """Deflate/inflate the certified constants by the modulus budget.

    The consumed modulus defaults to min(sampled modulus,
    safety * slack / h^2) with slack = min(expansion_min - 1,
    1 - contraction_max), which keeps the deflated expansion above 1.  An
    explicit ``modulus`` is applied as given and checked for feasibility.
    """
    if not 0.0 < safety < 1.0:
        raise ParameterDomainError("safety must lie in (0, 1)")
    h2 = cert.h * cert.h
    if modulus is None:
        slack = min(cert.expansion_min - 1.0, 1.0 - cert.contraction_max)
        modulus = min(cert.modulus_estimate, safety * slack / h2)
    if modulus < 0:
        raise ParameterDomainError("modulus must be nonnegative")

    expansion = cert.expansion_min - h2 * modulus
    contraction = cert.contraction_max + h2 * modulus
    mu_u = cert.coupling_to_unstable_max + h2 * modulus
    mu_s = cert.coupling_to_stable_max + h2 * modulus

    if not expansion > 1.0:
        raise InfeasibleConstantsError(
            f"effective expansion {expansion:.6g} <= 1 after consuming "
            f"modulus {modulus:.6g} with h = {cert.h:.6g}",
            denominator="effective_expansion - 1")
    if not contraction + mu_s < 1.0:
        raise InfeasibleConstantsError(
            f"effective_contraction + effective_coupling_to_stable = "
            f"{contraction + mu_s:.6g} >= 1 after inflation",
            denominator="1 - effective_contraction - effective_coupling_to_stable")
    return EffectiveConstants(expansion=expansion, contraction=contraction,
                              coupling_to_unstable=mu_u,
                              coupling_to_stable=mu_s, modulus=modulus)


@dataclass(frozen=True)
class ShadowingConstants:
    """Tracking gain and defect budget for one solve mode.

    ``gain * delta <= rho`` always holds; asymptotic mode additionally
    carries the rate data (v, eps) and the indices k0 (defects below the
    geometric envelope) and k1 (envelope anchored so that
    rate^(k1 - k0) <= delta).
    """

    mode: str
    gain: float
    delta: float
    den_unstable: float
    den_stable: float
    v: float | None = None
    eps: float | None = None
    k0: int | None = None
    k1: int | None = None

    @property
    def rate(self) -> float | None:
        if self.v is None or self.eps is None:
            return None
        return self.v + self.eps

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "gain": self.gain,
            "delta": self.delta,
            "den_unstable": self.den_unstable,
            "den_stable": self.den_stable,
        }
        if self.mode == "asymptotic":
            out.update({"v": self.v, "eps": self.eps, "rate": self.rate,
                        "k0": self.k0, "k1": self.k1})
        return out


def shadowing_constants(eff: EffectiveConstants, h: float, rho: float,
                        mode: str, delta_cap: float | None = None,
                        v: float | None = None, eps: float | None = None,
                        k0: int | None = None) -> ShadowingConstants:
    """Gain L and defect budget delta for the requested mode.

    finite:     L >= 2h / (expansion - 1 - coupling_to_unstable)
                and 2h / (1 - contraction - coupling_to_stable)
    limit:      L >= 3h / (expansion - 2 - coupling_to_unstable)
                and 3h / (1 - 2 (contraction + coupling_to_stable))
    asymptotic: with r = v + eps,
                L >= h (1 + 1/r) / (expansion - coupling_to_unstable - 1/r)
                and h (1 + 1/r) / (1 - (contraction + coupling_to_stable)/r)

    delta = min(delta_cap, rho / L) with a default cap of 1e-3; a
    nonpositive denominator raises ``InfeasibleConstantsError`` naming it
    (and, in asymptotic mode, reporting the feasible rate range).
    """
    lam_u = eff.expansion
    lam_s = eff.contraction
    mu_u = eff.coupling_to_unstable
    mu_s = eff.coupling_to_stable

    if mode == "finite":
        den_u = lam_u - 1.0 - mu_u
        den_s = 1.0 - lam_s - mu_s
        name_u = "effective_expansion - 1 - effective_coupling_to_unstable"
        name_s = "1 - effective_contraction - effective_coupling_to_stable"
        num = 2.0 * h
    elif mode == "limit":
        den_u = lam_u - 2.0 - mu_u
        den_s = 1.0 - 2.0 * (lam_s + mu_s)
        name_u = "effective_expansion - 2 - effective_coupling_to_unstable"
        name_s = "1 - 2*(effective_contraction + effective_coupling_to_stable)"
        num = 3.0 * h
    elif mode == "asymptotic":
        if v is None or eps is None:
            raise ParameterDomainError("asymptotic mode needs v and eps")
        r = v + eps
        if not 0.0 < r < 1.0:
            raise ParameterDomainError(f"rate v + eps = {r:.6g} must lie in (0, 1)")
        rinv = 1.0 / r
        den_u = lam_u - mu_u - rinv
        den_s = 1.0 - rinv * (lam_s + mu_s)
        name_u = "effective_expansion - effective_coupling_to_unstable - 1/(v+eps)"
        name_s = "1 - (effective_contraction + effective_coupling_to_stable)/(v+eps)"
        num = h * (1.0 + rinv)
    else:
        raise ParameterDomainError(f"unknown mode {mode!r}")

    if den_u <= 0 or den_s <= 0:
        name, val = (name_u, den_u) if den_u <= 0 else (name_s, den_s)
        feasible = None
        msg = f"{mode} mode infeasible: denominator {name} = {val:.6g} <= 0"
        if mode == "asymptotic":
            r_lo = max(1.0 / (lam_u - mu_u) if lam_u > mu_u else math.inf,
                       lam_s + mu_s)
            if r_lo < 1.0:
                feasible = (max(0.0, r_lo - eps), 1.0 - eps)
                msg += (f"; feasible v range for eps = {eps:.6g} is "
                        f"({feasible[0]:.6g}, {feasible[1]:.6g})")
            else:
                msg += "; no feasible rate in (0, 1) for these constants"
        raise InfeasibleConstantsError(msg, denominator=name,
                                       feasible_range=feasible)

    gain = max(num / den_u, num / den_s)
    if delta_cap is None:
        delta_cap = DELTA_DEFAULT_CAP
    elif delta_cap <= 0:
        raise ParameterDomainError("delta cap must be positive")
    delta = min(delta_cap, rho / gain)

    k1 = None
    if mode == "asymptotic":
        if k0 is None or k0 < 0:
            raise ParameterDomainError("asymptotic mode needs k0 >= 0")
        r = v + eps
        steps = 0
        power = 1.0
        while power > delta:
            power *= r
            steps += 1
        k1 = k0 + steps

    return ShadowingConstants(mode=mode, gain=float(gain), delta=float(delta),
                              den_unstable=float(den_u),
                              den_stable=float(den_s),
                              v=v, eps=eps, k0=k0, k1=k1)
