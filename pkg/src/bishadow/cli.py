"""Command-line driver: certify | shadow | limit | asym | bench.

Experiments are described by a flat ``key = value`` config file (comments
with '#', unknown keys rejected) so every run is a reproducible artifact.
Identical config + seed produces byte-identical outputs.

Exit codes: 0 success, 1 certification/constants failure, 2 convergence
failure, 3 bound violation, 64 config parse error, 65 precondition
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, verify
from .errors import (BoundViolationError, CertificationError,
                     ComponentMismatchError, ConfigError,
                     DegenerateSplittingError, EmptyTailError,
                     EnvelopeViolationError, InfeasibleConstantsError,
                     MagnitudeViolationError, NewtonDivergenceError,
                     NonConvergenceError, OutOfBoxError, ParameterDomainError,
                     PreconditionError, RadiusExceededError,
                     ScheduleExhaustionError, ShadowingError,
                     SingularSystemError, TargetOutOfRangeError,
                     TubeEscapeError)
from .hyperbolicity import build_splitting, certify, effective_constants, \
    shadowing_constants
from .pseudoorbit import DefectRecipe, PseudoOrbit, generate
from .serialize import write_csv, write_json
from .systems import (MapFamily, PerturbedFamily, make_cat_family,
                      make_coupled_linear_family, make_perturbed_family,
                      make_sin_perturbed_cat, profiled_displacement,
                      unperturbed)
from .windows import Window

EXIT_OK = 0
EXIT_CERTIFICATION = 1
EXIT_CONVERGENCE = 2
EXIT_BOUND = 3
EXIT_CONFIG = 64
EXIT_PRECONDITION = 65

_EXIT_BY_ERROR = [
    ((CertificationError, InfeasibleConstantsError, DegenerateSplittingError),
     EXIT_CERTIFICATION),
    ((NonConvergenceError, NewtonDivergenceError, ScheduleExhaustionError,
      TargetOutOfRangeError, SingularSystemError), EXIT_CONVERGENCE),
    ((BoundViolationError, EnvelopeViolationError), EXIT_BOUND),
    ((ConfigError,), EXIT_CONFIG),
    ((PreconditionError, TubeEscapeError, MagnitudeViolationError,
      ParameterDomainError, RadiusExceededError, OutOfBoxError,
      ComponentMismatchError, EmptyTailError), EXIT_PRECONDITION),
]


def _exit_code_for(exc: ShadowingError) -> int:
    for types, code in _EXIT_BY_ERROR:
        if isinstance(exc, types):
            return code
    return EXIT_PRECONDITION


# -- config -------------------------------------------------------------------

_COMMON_KEYS = {
    "family", "family.lambda_u", "family.lambda_s", "family.mu_u",
    "family.mu_s", "family.eps", "x0", "seed", "splitting",
    "splitting.unstable_dim", "window", "constants.safety",
    "constants.delta_cap", "solver.tol", "solver.max_iterations",
    "solver.agreement_tol",
}
_ORBIT_KEYS = {"defect.recipe", "defect.base", "defect.rate",
               "perturb.kind", "perturb.recipe", "perturb.base",
               "perturb.rate", "perturb.direction"}
_ALLOWED = {
    "certify": _COMMON_KEYS,
    "shadow": _COMMON_KEYS | _ORBIT_KEYS | {"mode", "p", "infinite.start"},
    "limit": _COMMON_KEYS | _ORBIT_KEYS,
    "asym": _COMMON_KEYS | _ORBIT_KEYS | {"asym.v", "asym.eps"},
    "bench": _COMMON_KEYS | _ORBIT_KEYS
    | {"p", "bench.lambda_u", "bench.lambda_s", "bench.mu_u", "bench.mu_s"},
}
_REQUIRED = {
    "certify": {"family", "window"},
    "shadow": {"family", "window", "mode", "p", "defect.recipe",
               "defect.base"},
    "limit": {"family", "window", "defect.recipe", "defect.base"},
    "asym": {"family", "window", "defect.recipe", "defect.base", "asym.v",
             "asym.eps"},
    "bench": {"family", "window", "p", "defect.recipe", "defect.base"},
}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    command: str
    raw: dict[str, str]
    seed: int

    def has(self, key: str) -> bool:
        return key in self.raw

    def get(self, key: str, default=None) -> str | None:
        return self.raw.get(key, default)

    def get_float(self, key: str, default: float | None = None) -> float | None:
        if key not in self.raw:
            return default
        try:
            return float(self.raw[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number") from exc

    def get_int(self, key: str, default: int | None = None) -> int | None:
        if key not in self.raw:
            return default
        try:
            return int(self.raw[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not an integer") from exc

    def get_floats(self, key: str) -> list[float]:
        try:
            return [float(v) for v in self.raw[key].split(",")]
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a comma list of numbers") from exc


def load_config(path, command: str, seed_override: int | None = None
                ) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = parse_config_text(text)
    allowed = _ALLOWED[command]
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(unknown)}")
    missing = sorted(_REQUIRED[command] - set(raw))
    if missing:
        raise ConfigError(f"missing keys for {command}: {', '.join(missing)}")
    cfg = ExperimentConfig(command=command, raw=raw,
                           seed=seed_override if seed_override is not None
                           else int(raw.get("seed", "0")))
    return cfg


# -- builders -----------------------------------------------------------------


def _build_family(cfg: ExperimentConfig) -> MapFamily:
    name = cfg.get("family")
    if name == "cat":
        return make_cat_family()
    if name == "coupled":
        needed = ["family.lambda_u", "family.lambda_s", "family.mu_u",
                  "family.mu_s"]
        vals = [cfg.get_float(k) for k in needed]
        if any(v is None for v in vals):
            raise ConfigError("coupled family needs family.lambda_u, "
                              "family.lambda_s, family.mu_u, family.mu_s")
        try:
            return make_coupled_linear_family(*vals)
        except ParameterDomainError as exc:
            raise ConfigError(str(exc)) from exc
    if name == "cat-sin":
        eps = cfg.get_float("family.eps")
        if eps is None:
            raise ConfigError("cat-sin family needs family.eps")
        return make_sin_perturbed_cat(eps)
    raise ConfigError(f"unknown family {name!r}")


def _x0(cfg: ExperimentConfig, family: MapFamily) -> np.ndarray:
    if cfg.has("x0"):
        coords = cfg.get_floats("x0")
    else:
        coords = [0.2 + 0.1 * j for j in range(family.chart.dim)]
    if len(coords) != family.chart.dim:
        raise ConfigError(f"x0 needs {family.chart.dim} coordinates")
    return family.chart.point(coords)


def _build_recipe(cfg: ExperimentConfig) -> DefectRecipe:
    kind = cfg.get("defect.recipe")
    base = cfg.get_float("defect.base")
    rate = cfg.get_float("defect.rate", 0.5)
    try:
        return DefectRecipe(kind=kind, base=base, rate=rate)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc)) from exc


def _magnitude_fn(kind: str, base: float, rate: float):
    if kind == "constant":
        return lambda i: base
    if kind == "harmonic":
        return lambda i: base / (1.0 + abs(i))
    if kind == "geometric":
        return lambda i: base * rate ** abs(i)
    raise ConfigError(f"unknown perturb.recipe {kind!r}")


def _build_perturbation(cfg: ExperimentConfig,
                        family: MapFamily) -> PerturbedFamily:
    kind = cfg.get("perturb.kind", "none")
    if kind == "none":
        return unperturbed(family)
    if kind != "shift":
        raise ConfigError(f"unknown perturb.kind {kind!r}")
    base = cfg.get_float("perturb.base")
    if base is None:
        raise ConfigError("perturb.kind = shift needs perturb.base")
    recipe = cfg.get("perturb.recipe", "constant")
    rate = cfg.get_float("perturb.rate", 0.5)
    if cfg.has("perturb.direction"):
        direction = np.asarray(cfg.get_floats("perturb.direction"))
        if direction.shape != (family.chart.dim,):
            raise ConfigError("perturb.direction has the wrong dimension")
    else:
        direction = np.zeros(family.chart.dim)
        direction[0] = 1.0
    magnitude = _magnitude_fn(recipe, base, rate)
    displacement = profiled_displacement(direction, magnitude)
    affine = family.affine and recipe == "constant"
    return make_perturbed_family(family, displacement, magnitude,
                                 affine=affine)


def _solve_options(cfg: ExperimentConfig, p: float) -> engine.SolveOptions:
    return engine.SolveOptions(
        p=p,
        tol_fixed_point=cfg.get_float("solver.tol", 1e-12),
        max_iterations=cfg.get_int("solver.max_iterations", 10_000),
        agreement_tol=cfg.get_float("solver.agreement_tol", 1e-8),
        max_window=cfg.get_int("window"),
    )


def _parse_p(cfg: ExperimentConfig) -> float:
    raw = cfg.get("p", "inf")
    if raw in ("inf", "infinity"):
        return math.inf
    try:
        p = float(raw)
    except ValueError as exc:
        raise ConfigError(f"p = {raw!r} is not a number or 'inf'") from exc
    if p < 1:
        raise ConfigError("p must be >= 1 or inf")
    return p


def _certified_constants(cfg: ExperimentConfig, family: MapFamily,
                         porbit: PseudoOrbit, mode: str | None):
    splitting = build_splitting(
        family, porbit.points, porbit.window,
        method=cfg.get("splitting", "auto"),
        unstable_dim=cfg.get_int("splitting.unstable_dim"))
    cert = certify(family, splitting)
    eff = effective_constants(cert, safety=cfg.get_float("constants.safety", 0.5))
    sc = None
    if mode is not None:
        sc = shadowing_constants(eff, cert.h, family.chart.rho, mode,
                                 delta_cap=cfg.get_float("constants.delta_cap"))
    return splitting, cert, eff, sc


# -- commands -----------------------------------------------------------------


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_certify(cfg: ExperimentConfig, out: str) -> int:
    outdir = _out_dir(out)
    family = _build_family(cfg)
    window = Window.symmetric(cfg.get_int("window"))
    recipe = DefectRecipe(kind="constant", base=0.0)
    porbit = generate(family, _x0(cfg, family), window, recipe, cfg.seed)
    try:
        splitting, cert, eff, _ = _certified_constants(cfg, family, porbit,
                                                       mode=None)
    except CertificationError as exc:
        report = {"passed": False, "inequality": exc.inequality,
                  "index": exc.index, "message": str(exc)}
        write_json(report, outdir / "certificate.json")
        (outdir / "certificate.txt").write_text(
            f"semi-hyperbolicity certificate: {family.name}\n"
            f"verdict: FAIL\nviolated: {exc.inequality}\nindex: {exc.index}\n"
            f"detail: {exc}\n", encoding="utf-8")
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    doc = cert.to_dict()
    doc["passed"] = True
    doc["effective_constants"] = eff.to_dict()
    write_json(doc, outdir / "certificate.json")
    (outdir / "certificate.txt").write_text(cert.report_text() + "\n",
                                            encoding="utf-8")
    return EXIT_OK


def _write_run_outputs(outdir: Path, cert, eff, result) -> None:
    doc = cert.to_dict()
    doc["passed"] = True
    doc["effective_constants"] = eff.to_dict()
    write_json(doc, outdir / "certificate.json")
    result.write_json(outdir / "result.json")
    result.write_csv(outdir / "orbit.csv")


def _verification(outdir: Path, family: MapFamily, g: MapFamily,
                  result, tol: float) -> tuple[dict, bool]:
    import json

    result_json = json.loads((outdir / "result.json").read_text())
    audit = verify.audit_files(result_json, outdir / "orbit.csv", family, g)
    audit["residual_ok"] = audit["orbit_residual"] <= max(100.0 * tol, 1e-10)
    checks = [audit["within_bound_rhs"], audit["distance_column_consistent"],
              audit["residual_ok"]]

    if result.band_report is not None:
        thresholds = [b["lo_abs"] for b in result.band_report]
        caps = [b["cap"] for b in result.band_report]
        band_audit = verify.check_limit_decay(
            result.distances, result.window.indices(), thresholds, caps)
        audit["band_decay"] = band_audit
        checks.append(band_audit["passed"])
    if result.rate_report is not None:
        ok, v_hat = verify.check_asymptotic_rate(
            result.distances, result.window.indices(),
            result.rate_report["v"], result.rate_report["eps"],
            result.rate_report["k1"])
        audit["rate"] = {"passed": ok, "distance_root_rate": v_hat}
        checks.append(ok)

    audit["passed"] = all(checks)
    write_json(audit, outdir / "verification.json")
    return audit, audit["passed"]


def cmd_shadow(cfg: ExperimentConfig, out: str) -> int:
    outdir = _out_dir(out)
    mode = cfg.get("mode")
    if mode not in ("finite", "infinite"):
        raise ConfigError("shadow needs mode = finite or infinite")
    p = _parse_p(cfg)
    family = _build_family(cfg)
    k = cfg.get_int("window")
    recipe = _build_recipe(cfg)
    perturbed = _build_perturbation(cfg, family)
    opts = _solve_options(cfg, p)

    full = generate(family, _x0(cfg, family), Window.symmetric(k), recipe,
                    cfg.seed)
    full.to_csv(outdir / "pseudo_orbit.csv")

    if mode == "finite":
        splitting, cert, eff, sc = _certified_constants(cfg, family, full,
                                                        "finite")
        result = engine.solve_finite(family, perturbed, full, splitting, eff,
                                     sc, opts)
    else:
        start = cfg.get_int("infinite.start", max(4, k // 4))
        result = engine.solve_infinite(
            family, perturbed, lambda w: full.restrict(w), start, opts,
            splitting_method=cfg.get("splitting", "auto"),
            unstable_dim=cfg.get_int("splitting.unstable_dim"),
            safety=cfg.get_float("constants.safety", 0.5),
            delta_cap=cfg.get_float("constants.delta_cap"))
        splitting, cert, eff, _ = _certified_constants(cfg, family, full,
                                                       None)

    _write_run_outputs(outdir, cert, eff, result)
    _, ok = _verification(outdir, family, perturbed.maps, result,
                          opts.tol_fixed_point)
    return EXIT_OK if ok else EXIT_BOUND


def cmd_limit(cfg: ExperimentConfig, out: str) -> int:
    outdir = _out_dir(out)
    family = _build_family(cfg)
    k = cfg.get_int("window")
    recipe = _build_recipe(cfg)
    perturbed = _build_perturbation(cfg, family)
    opts = _solve_options(cfg, math.inf)

    porbit = generate(family, _x0(cfg, family), Window.symmetric(k), recipe,
                      cfg.seed)
    porbit.to_csv(outdir / "pseudo_orbit.csv")
    splitting, cert, eff, sc = _certified_constants(cfg, family, porbit,
                                                    "limit")
    result = engine.solve_limit(family, perturbed, porbit, splitting, eff,
                                sc, opts)
    _write_run_outputs(outdir, cert, eff, result)
    _, ok = _verification(outdir, family, perturbed.maps, result,
                          opts.tol_fixed_point)
    return EXIT_OK if ok else EXIT_BOUND


def cmd_asym(cfg: ExperimentConfig, out: str) -> int:
    outdir = _out_dir(out)
    family = _build_family(cfg)
    k = cfg.get_int("window")
    recipe = _build_recipe(cfg)
    perturbed = _build_perturbation(cfg, family)
    opts = _solve_options(cfg, math.inf)
    v = cfg.get_float("asym.v")
    eps = cfg.get_float("asym.eps")

    porbit = generate(family, _x0(cfg, family), Window.symmetric(k), recipe,
                      cfg.seed)
    porbit.to_csv(outdir / "pseudo_orbit.csv")
    splitting, cert, eff, _ = _certified_constants(cfg, family, porbit, None)
    result = engine.solve_asymptotic(
        family, perturbed, porbit, splitting, eff, v, eps, opts,
        delta_cap=cfg.get_float("constants.delta_cap"))
    _write_run_outputs(outdir, cert, eff, result)
    _, ok = _verification(outdir, family, perturbed.maps, result,
                          opts.tol_fixed_point)
    return EXIT_OK if ok else EXIT_BOUND


def _bench_cell(cfg: ExperimentConfig, label: list,
                build_family) -> list:
    row = list(label)
    try:
        family = build_family()
        p = _parse_p(cfg)
        recipe = _build_recipe(cfg)
        perturbed = _build_perturbation(cfg, family)
        opts = _solve_options(cfg, p)
        porbit = generate(family, _x0(cfg, family),
                          Window.symmetric(cfg.get_int("window")), recipe,
                          cfg.seed)
        splitting, cert, eff, sc = _certified_constants(cfg, family, porbit,
                                                        "finite")
        result = engine.solve_finite(family, perturbed, porbit, splitting,
                                     eff, sc, opts)
        defect_sup = float(np.max(porbit.defects)) if porbit.defects.size else 0.0
        dist_sup = float(np.max(result.distances))
        ratio = dist_sup / defect_sup if defect_sup > 0 else 0.0
        return row + ["ok", sc.gain, sc.delta, defect_sup, dist_sup, ratio,
                      ratio / sc.gain]
    except ShadowingError as exc:
        return row + [type(exc).__name__, None, None, None, None, None, None]


def cmd_bench(cfg: ExperimentConfig, out: str) -> int:
    outdir = _out_dir(out)
    if cfg.get("family") == "coupled":
        if not (cfg.has("bench.lambda_u") and cfg.has("bench.lambda_s")):
            raise ConfigError("coupled bench needs bench.lambda_u and "
                              "bench.lambda_s grids")
        lus = cfg.get_floats("bench.lambda_u")
        lss = cfg.get_floats("bench.lambda_s")
        mu_u = cfg.get_float("bench.mu_u", 0.05)
        mu_s = cfg.get_float("bench.mu_s", 0.05)
        cells = [([lu, ls, mu_u, mu_s],
                  lambda lu=lu, ls=ls: make_coupled_linear_family(
                      lu, ls, mu_u, mu_s))
                 for lu in lus for ls in lss]
    else:
        # single cell over the configured family
        cells = [([cfg.get("family"), "", "", ""],
                  lambda: _build_family(cfg))]
    with ThreadPoolExecutor(max_workers=min(8, max(1, len(cells)))) as pool:
        rows = list(pool.map(lambda c: _bench_cell(cfg, c[0], c[1]), cells))
    header = ["lambda_u", "lambda_s", "mu_u", "mu_s", "status", "gain",
              "delta", "defect_sup", "dist_sup", "ratio", "ratio_to_gain"]
    write_csv(outdir / "sweep.csv", header, rows)
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bishadow",
        description="Certified bi-shadowing of pseudo-orbits for "
                    "non-autonomous semi-hyperbolic map families")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("certify", "certify semi-hyperbolicity and derive constants"),
            ("shadow", "run a finite/infinite shadowing experiment"),
            ("limit", "run a limit (vanishing-defect) shadowing experiment"),
            ("asym", "run an asymptotic (geometric-rate) experiment"),
            ("bench", "sweep constants over a parameter grid")]:
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="experiment config file")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    args = parser.parse_args(argv)

    handlers = {"certify": cmd_certify, "shadow": cmd_shadow,
                "limit": cmd_limit, "asym": cmd_asym, "bench": cmd_bench}
    try:
        cfg = load_config(args.config, args.command, seed_override=args.seed)
        return handlers[args.command](cfg, args.out)
    except ShadowingError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
