import math

import numpy as np
import pytest

from bishadow.errors import (CertificationError, DegenerateSplittingError,
                             InfeasibleConstantsError)
from bishadow.hyperbolicity import (Certificate, build_splitting, certify,
                                    conorm, effective_constants,
                                    extract_blocks, opnorm,
                                    shadowing_constants)
from bishadow.systems import (MapFamily, make_cat_family,
                              make_coupled_linear_family,
                              make_sin_perturbed_cat)
from bishadow.charts import flat_torus
from bishadow.pseudoorbit import DefectRecipe, generate
from bishadow.windows import Window

PHI_PLUS = (3 + math.sqrt(5)) / 2
PHI_MINUS = (3 - math.sqrt(5)) / 2


def _orbit(family, k, seed=0, recipe=None):
    recipe = recipe or DefectRecipe("constant", 0.0)
    return generate(family, [0.2, 0.3], Window.symmetric(k), recipe, seed)


def test_conorm_examples():
    assert conorm(np.diag([2.0, 3.0])) == pytest.approx(2.0)
    assert conorm(np.eye(3)) == pytest.approx(1.0)
    assert conorm(np.array([[2.0, 1.0], [1.0, 1.0]])) \
        == pytest.approx(PHI_MINUS, abs=1e-12)


def test_conorm_degenerate_shapes():
    assert conorm(np.zeros((2, 0))) == math.inf
    assert conorm(np.ones((1, 2))) == 0.0
    assert opnorm(np.zeros((0, 0))) == 0.0


def test_conorm_duality_on_random_matrices():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = rng.normal(size=(3, 3))
        if np.linalg.cond(m) > 1e6:
            continue
        assert conorm(m) * np.linalg.norm(np.linalg.inv(m), 2) \
            == pytest.approx(1.0, abs=1e-10)


def test_cat_eigen_splitting_is_orthogonal():
    fam = make_cat_family()
    po = _orbit(fam, 10)
    spl = build_splitting(fam, po.points, po.window)
    assert spl.method == "eigen"
    assert spl.h == pytest.approx(1.0, abs=1e-12)
    # projections are complementary and idempotent
    for t in range(len(po.window)):
        pu, ps = spl.proj_u[t], spl.proj_s[t]
        np.testing.assert_allclose(pu + ps, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(pu @ pu, pu, atol=1e-12)
        np.testing.assert_allclose(ps @ ps, ps, atol=1e-12)


def test_coordinate_splitting_on_coupled_family():
    fam = make_coupled_linear_family(2.0, 0.5, 0.1, 0.1)
    po = _orbit(fam, 5)
    spl = build_splitting(fam, po.points, po.window, method="coordinate")
    np.testing.assert_array_equal(spl.basis_u[0][:, 0], [1.0, 0.0])
    np.testing.assert_array_equal(spl.basis_s[0][:, 0], [0.0, 1.0])
    assert spl.h == pytest.approx(1.0)


def _angle_family(theta):
    """Affine torus family whose eigenvectors sit at angle theta."""
    v = np.array([[1.0, math.cos(theta)], [0.0, math.sin(theta)]])
    m = v @ np.diag([2.0, 0.5]) @ np.linalg.inv(v)
    chart = flat_torus(2)
    return MapFamily(chart=chart, name=f"angle({theta})",
                     evaluate=lambda i, x: np.mod(m @ x, 1.0),
                     jacobian=lambda i, x: m.copy(), affine=True,
                     jacobian_lipschitz=0.0)


@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 4, math.pi / 7])
def test_oblique_projection_norm_matches_brute_force(theta):
    # independent oracle: maximize |proj_u v| over the unit circle
    fam = _angle_family(theta)
    po = _orbit(fam, 2)
    spl = build_splitting(fam, po.points, po.window)
    angles = np.linspace(0.0, 2.0 * math.pi, 200_001)
    circle = np.stack([np.cos(angles), np.sin(angles)])
    brute = np.max(np.linalg.norm(spl.proj_u[0] @ circle, axis=0))
    closed_form = 1.0 / math.sin(theta)
    assert brute == pytest.approx(closed_form, rel=1e-8)
    assert opnorm(spl.proj_u[0]) == pytest.approx(closed_form, rel=1e-10)
    assert spl.h == pytest.approx(closed_form, rel=1e-10)


def test_h_bounds_random_tangent_projections():
    fam = make_sin_perturbed_cat(0.01)
    po = _orbit(fam, 20)
    spl = build_splitting(fam, po.points, po.window)
    rng = np.random.default_rng(11)
    for _ in range(500):
        t = rng.integers(0, len(po.window))
        v = rng.normal(size=2)
        assert np.linalg.norm(spl.proj_s[t] @ v) <= spl.h * np.linalg.norm(v) \
            + 1e-12
        assert np.linalg.norm(spl.proj_u[t] @ v) <= spl.h * np.linalg.norm(v) \
            + 1e-12


def test_degenerate_splitting_detected():
    chart = flat_torus(2)
    m = np.array([[2.0, 1.0], [0.0, 2.0]])   # defective: single eigenvector
    fam = MapFamily(chart=chart, name="jordan",
                    evaluate=lambda i, x: np.mod(m @ x, 1.0),
                    jacobian=lambda i, x: m.copy(), affine=True)
    po = _orbit(fam, 2)
    with pytest.raises(DegenerateSplittingError):
        build_splitting(fam, po.points, po.window, method="eigen",
                        unstable_dim=1)


def test_complex_spectrum_rejected():
    chart = flat_torus(2)
    m = np.array([[0.0, -2.0], [2.0, 0.0]])
    fam = MapFamily(chart=chart, name="rotation",
                    evaluate=lambda i, x: np.mod(m @ x, 1.0),
                    jacobian=lambda i, x: m.copy(), affine=True)
    po = _orbit(fam, 2)
    with pytest.raises(DegenerateSplittingError):
        build_splitting(fam, po.points, po.window, method="eigen")


def test_extract_blocks_cat_diagonalizes():
    fam = make_cat_family()
    po = _orbit(fam, 4)
    spl = build_splitting(fam, po.points, po.window)
    blocks = extract_blocks(fam, spl, 0)
    assert blocks.uu[0, 0] == pytest.approx(PHI_PLUS, abs=1e-12)
    assert blocks.ss[0, 0] == pytest.approx(PHI_MINUS, abs=1e-12)
    assert blocks.coupling_to_unstable == pytest.approx(0.0, abs=1e-12)
    assert blocks.coupling_to_stable == pytest.approx(0.0, abs=1e-12)


def test_extract_blocks_coupled_coordinate_exact():
    fam = make_coupled_linear_family(2.0, 0.5, 0.1, 0.2)
    po = _orbit(fam, 4)
    spl = build_splitting(fam, po.points, po.window, method="coordinate")
    blocks = extract_blocks(fam, spl, 1)
    assert blocks.uu[0, 0] == 2.0
    assert blocks.us[0, 0] == 0.1
    assert blocks.su[0, 0] == 0.2
    assert blocks.ss[0, 0] == 0.5


def test_extract_blocks_identity_map():
    chart = flat_torus(2)
    fam = MapFamily(chart=chart, name="identity",
                    evaluate=lambda i, x: x.copy(),
                    jacobian=lambda i, x: np.eye(2), affine=True)
    po = _orbit(fam, 2)
    spl = build_splitting(fam, po.points, po.window, method="coordinate",
                          unstable_dim=1)
    blocks = extract_blocks(fam, spl, 0)
    np.testing.assert_allclose(blocks.matrix(), np.eye(2), atol=1e-15)


def test_block_reassembly_reproduces_jacobian():
    for fam in (make_cat_family(), make_sin_perturbed_cat(0.01)):
        po = _orbit(fam, 15, seed=2,
                    recipe=DefectRecipe("constant", 1e-4))
        spl = build_splitting(fam, po.points, po.window)
        for i in po.window.transitions():
            blocks = extract_blocks(fam, spl, i)
            t = po.window.pos(i)
            rebuilt = spl.frame[t + 1] @ blocks.matrix() \
                @ spl.frame_inv[t]
            jac = fam.jacobian(i, po.points[t])
            np.testing.assert_allclose(rebuilt, jac, atol=1e-12)


def test_certify_cat_exact_constants():
    fam = make_cat_family()
    po = _orbit(fam, 100)
    spl = build_splitting(fam, po.points, po.window)
    cert = certify(fam, spl)
    assert cert.expansion_min == pytest.approx(PHI_PLUS, abs=1e-9)
    assert cert.contraction_max == pytest.approx(PHI_MINUS, abs=1e-9)
    assert cert.coupling_to_unstable_max <= 1e-9
    assert cert.coupling_to_stable_max <= 1e-9
    assert cert.h == pytest.approx(1.0, abs=1e-9)
    assert cert.modulus_estimate == 0.0 and not cert.modulus_is_sampled
    assert cert.product_margin_min == pytest.approx(1.0, abs=1e-9)


def test_certify_fails_product_inequality():
    fam = make_coupled_linear_family(1.2, 0.9, 0.5, 0.5)
    po = _orbit(fam, 10)
    spl = build_splitting(fam, po.points, po.window, method="coordinate")
    with pytest.raises(CertificationError) as err:
        certify(fam, spl)
    assert "product" in str(err.value)
    assert err.value.index == -10


def test_certify_coupled_pass_with_margin():
    fam = make_coupled_linear_family(2.0, 0.5, 0.1, 0.1)
    po = _orbit(fam, 10)
    spl = build_splitting(fam, po.points, po.window, method="coordinate")
    cert = certify(fam, spl)
    assert cert.product_margin_min == pytest.approx(0.49)
    assert cert.expansion_min == 2.0   # tight on affine families


def test_effective_constants_zero_modulus():
    fam = make_cat_family()
    po = _orbit(fam, 10)
    cert = certify(fam, build_splitting(fam, po.points, po.window))
    eff = effective_constants(cert)
    assert eff.expansion == pytest.approx(PHI_PLUS, abs=1e-12)
    assert eff.contraction == pytest.approx(PHI_MINUS, abs=1e-12)
    assert eff.coupling_to_unstable <= 1e-12
    assert eff.modulus == 0.0


def _make_cert(expansion, contraction, mu_u=0.0, mu_s=0.0, h=1.0):
    w = Window.symmetric(1)
    n = len(w) - 1
    return Certificate(window=w, family_name="synthetic", method="eigen",
                       expansion=np.full(n, expansion),
                       contraction=np.full(n, contraction),
                       coupling_to_unstable=np.full(n, mu_u),
                       coupling_to_stable=np.full(n, mu_s),
                       h=h, modulus_estimate=0.0, modulus_is_sampled=False)


def test_effective_constants_explicit_modulus():
    cert = _make_cert(2.618, 0.382)
    eff = effective_constants(cert, modulus=0.05)
    assert eff.expansion == pytest.approx(2.568)
    assert eff.contraction == pytest.approx(0.432)
    assert eff.coupling_to_unstable == pytest.approx(0.05)
    assert eff.coupling_to_stable == pytest.approx(0.05)


def test_effective_constants_infeasible_budget():
    cert = _make_cert(1.01, 0.5, h=2.0)
    with pytest.raises(InfeasibleConstantsError):
        effective_constants(cert, modulus=0.1)


def test_shadowing_constants_finite_example():
    cert = _make_cert(2.5, 0.4, 0.01, 0.01)
    eff = effective_constants(cert, modulus=0.0)
    sc = shadowing_constants(eff, 1.0, 0.5, "finite")
    assert sc.gain == pytest.approx(max(2 / 1.49, 2 / 0.59))
    assert sc.gain == pytest.approx(3.38983, abs=1e-4)
    assert sc.delta == pytest.approx(1e-3)


def test_shadowing_constants_limit_example():
    cert = _make_cert(2.5, 0.4, 0.01, 0.01)
    eff = effective_constants(cert, modulus=0.0)
    sc = shadowing_constants(eff, 1.0, 0.5, "limit")
    assert sc.gain == pytest.approx(max(3 / 0.49, 3 / (1 - 2 * 0.41)))
    assert sc.gain == pytest.approx(16.6667, abs=1e-3)


def test_shadowing_constants_asymptotic_example():
    cert = _make_cert(2.5, 0.4, 0.01, 0.01)
    eff = effective_constants(cert, modulus=0.0)
    sc = shadowing_constants(eff, 1.0, 0.5, "asymptotic", v=0.5, eps=0.1,
                             k0=0)
    r = 0.6
    expected = max(1.0 * (1 + 1 / r) / (2.5 - 0.01 - 1 / r),
                   1.0 * (1 + 1 / r) / (1 - (0.4 + 0.01) / r))
    assert sc.gain == pytest.approx(expected)
    assert sc.gain == pytest.approx(8.4211, abs=1e-3)
    # k1 minimal with r^(k1-k0) <= delta
    assert r ** (sc.k1 - sc.k0) <= sc.delta < r ** (sc.k1 - sc.k0 - 1)


def test_limit_mode_infeasible_names_denominator():
    cert = _make_cert(1.8, 0.5, 0.05, 0.05)
    eff = effective_constants(cert, modulus=0.0)
    with pytest.raises(InfeasibleConstantsError) as err:
        shadowing_constants(eff, 1.0, 0.5, "limit")
    assert err.value.denominator == \
        "effective_expansion - 2 - effective_coupling_to_unstable"


def test_asymptotic_infeasible_reports_v_range():
    cert = _make_cert(2.618, 0.382)
    eff = effective_constants(cert, modulus=0.0)
    with pytest.raises(InfeasibleConstantsError) as err:
        shadowing_constants(eff, 1.0, 0.5, "asymptotic", v=0.1, eps=0.05,
                            k0=0)
    lo, hi = err.value.feasible_range
    assert lo == pytest.approx(1 / 2.618 - 0.05, abs=1e-3)
    assert hi == pytest.approx(0.95)


def test_gain_monotone_in_constants():
    # gain decreases in expansion, increases in contraction and couplings
    base = dict(expansion=2.5, contraction=0.4, mu_u=0.02, mu_s=0.02)
    step = 1e-4

    def gain(**kw):
        cert = _make_cert(kw["expansion"], kw["contraction"], kw["mu_u"],
                          kw["mu_s"])
        eff = effective_constants(cert, modulus=0.0)
        return shadowing_constants(eff, 1.0, 0.5, "finite").gain

    for mode_key, sign in [("expansion", -1), ("contraction", +1),
                           ("mu_u", +1), ("mu_s", +1)]:
        for scale in (1.0, 1.5):
            params = dict(base)
            params = {k: v * (scale if k == "expansion" else 1.0)
                      for k, v in params.items()}
            bumped = dict(params)
            bumped[mode_key] = params[mode_key] + step
            diff = gain(**bumped) - gain(**params)
            assert sign * diff >= -1e-12


def test_delta_respects_injectivity_radius():
    cert = _make_cert(2.618, 0.382)
    eff = effective_constants(cert, modulus=0.0)
    sc = shadowing_constants(eff, 1.0, 0.5, "finite", delta_cap=1.0)
    assert sc.gain * sc.delta <= 0.5 + 1e-15
