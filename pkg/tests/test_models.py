import math

import numpy as np
import pytest
from scipy.special import gammainc as scipy_gammainc

from cellpp.errors import ConfigError, ExistenceViolation
from cellpp.estimators import RadiusGrid
from cellpp.geom import Rectangle
from cellpp.models import (
    BetaGinibre,
    CauchyDpp,
    GaussDpp,
    Poisson,
    check_valid,
    dpp_determinant_check,
    model_from_dict,
    model_to_dict,
    normalized_lower_incomplete_gamma,
    theoretical_F,
    theoretical_G,
    theoretical_J,
    theoretical_K,
    theoretical_curve,
    validate,
)

# deployment-scale reference spec: 0.7 points per km^2, strong repulsion
LAM_13KM = 0.7e-6
BG_REF = BetaGinibre(intensity=LAM_13KM, beta=0.91)
GRID_13KM = RadiusGrid.default(Rectangle(0.0, 13000.0, 0.0, 13000.0))

# frozen 50-digit evaluations of the closed forms at r = 1000 m
BG_K_1000 = 1957583.3297467968239
BG_J_1000 = 5.8413441860003200951
# pi r^2 - (pi 300^2 / 4) (1 - (1 + (500/300)^2)^-4)
CAUCHY_K_500 = 715059.37446572323124
# K(alpha) / (pi alpha^2) for the Gaussian kernel: 1 - (1 - e^-2)/2
GAUSS_K_AT_SCALE = 0.56766764161830634595


class TestIncompleteGamma:
    def test_known_values(self):
        assert normalized_lower_incomplete_gamma(1, math.log(2.0)) \
            == pytest.approx(0.5, rel=1e-14)
        assert normalized_lower_incomplete_gamma(2, 1.0) \
            == pytest.approx(1.0 - 2.0 / math.e, rel=1e-14)
        assert normalized_lower_incomplete_gamma(3, 0.0) == 0.0

    def test_monotone_in_x_and_k(self):
        x = np.linspace(0.0, 8.0, 30)
        p2 = normalized_lower_incomplete_gamma(2, x)
        assert np.all(np.diff(p2) > 0)
        p5 = normalized_lower_incomplete_gamma(5, x)
        assert np.all(p5[1:] < p2[1:])

    def test_scalar_and_array_forms(self):
        out = normalized_lower_incomplete_gamma(1, 0.5)
        assert isinstance(out, float)
        arr = normalized_lower_incomplete_gamma(1, np.array([0.5, 1.0]))
        assert arr.shape == (2,)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            normalized_lower_incomplete_gamma(0, 1.0)
        with pytest.raises(ValueError):
            normalized_lower_incomplete_gamma(1.5, 1.0)
        with pytest.raises(ValueError):
            normalized_lower_incomplete_gamma(1, -0.1)


class TestExistence:
    def test_poisson(self):
        assert validate(Poisson(1.0)) is None
        bad = validate(Poisson(0.0))
        assert isinstance(bad, ExistenceViolation)
        assert "intensity" in bad.constraint

    def test_gauss_boundary_admissible(self):
        scale = 250.0
        lam = 1.0 / (math.pi * scale ** 2)
        assert validate(GaussDpp(intensity=lam, scale=scale)) is None
        bad = validate(GaussDpp(intensity=1.01 * lam, scale=scale))
        assert isinstance(bad, ExistenceViolation)
        assert bad.margin == pytest.approx(0.01, rel=1e-6)

    def test_cauchy_boundary_admissible(self):
        lam, shape = 2.0e-6, 1.5
        scale = math.sqrt(shape / (math.pi * lam))
        assert validate(CauchyDpp(lam, scale, shape)) is None
        assert isinstance(validate(CauchyDpp(lam, 1.05 * scale, shape)),
                          ExistenceViolation)
        assert isinstance(validate(CauchyDpp(lam, scale, -1.0)),
                          ExistenceViolation)
        assert isinstance(validate(CauchyDpp(lam, 0.0, shape)),
                          ExistenceViolation)

    def test_beta_range(self):
        assert validate(BetaGinibre(1.0, 1.0)) is None
        assert validate(BetaGinibre(1.0, 1e-4)) is None
        assert isinstance(validate(BetaGinibre(1.0, 0.0)),
                          ExistenceViolation)
        assert isinstance(validate(BetaGinibre(1.0, 1.0000001)),
                          ExistenceViolation)

    def test_check_valid_raises(self):
        with pytest.raises(ExistenceViolation):
            check_valid(GaussDpp(intensity=1.0, scale=1.0))
        check_valid(BG_REF)


class TestSerialization:
    @pytest.mark.parametrize("spec", [
        Poisson(0.7e-6),
        BetaGinibre(0.7e-6, 0.91),
        GaussDpp(1e-6, 200.0),
        CauchyDpp(1e-6, 150.0, 2.0),
    ])
    def test_round_trip(self, spec):
        assert model_from_dict(model_to_dict(spec)) == spec

    def test_bad_dicts(self):
        with pytest.raises(ConfigError):
            model_from_dict({"model": "hard-core", "params": {}})
        with pytest.raises(ConfigError):
            model_from_dict({"params": {"intensity": 1.0}})
        with pytest.raises(ConfigError):
            model_from_dict({"model": "gauss-dpp",
                             "params": {"intensity": 1.0, "nu": 2.0}})


class TestClosedFormK:
    def test_poisson_is_pi_r_squared(self):
        k = theoretical_K(Poisson(5.0), GRID_13KM)
        assert np.allclose(k.values, math.pi * GRID_13KM.r ** 2, rtol=1e-14)

    def test_beta_ginibre_frozen_value(self):
        k = theoretical_K(BG_REF, GRID_13KM)
        i = np.searchsorted(GRID_13KM.r, 1000.0)
        grid = RadiusGrid(np.array([0.0, 1000.0]))
        k2 = theoretical_K(BG_REF, grid)
        assert k2.values[1] == pytest.approx(BG_K_1000, rel=1e-9)
        # same formula on the default grid brackets the frozen point
        assert k.values[i - 1] < BG_K_1000 < k.values[i + 1]

    def test_cauchy_frozen_value(self):
        spec = CauchyDpp(intensity=1e-6, scale=300.0, shape=1.5)
        grid = RadiusGrid(np.array([0.0, 500.0]))
        assert theoretical_K(spec, grid).values[1] \
            == pytest.approx(CAUCHY_K_500, rel=1e-12)

    def test_gauss_frozen_ratio(self):
        scale = 2.0
        spec = GaussDpp(intensity=1.0 / (math.pi * scale ** 2), scale=scale)
        grid = RadiusGrid(np.array([0.0, scale]))
        got = theoretical_K(spec, grid).values[1] / (math.pi * scale ** 2)
        assert got == pytest.approx(GAUSS_K_AT_SCALE, rel=1e-12)

    def test_zero_radius(self):
        for spec in (Poisson(1.0), BG_REF, GaussDpp(1e-6, 200.0),
                     CauchyDpp(1e-6, 150.0, 2.0)):
            assert theoretical_K(spec, GRID_13KM).values[0] == 0.0

    @pytest.mark.parametrize("spec", [
        BG_REF,
        BetaGinibre(0.7e-6, 0.25),
        GaussDpp(LAM_13KM, 0.5 / math.sqrt(math.pi * LAM_13KM)),
        CauchyDpp(LAM_13KM, 300.0, 1.0),
    ])
    def test_repulsive_K_below_poisson_and_nondecreasing(self, spec):
        k = theoretical_K(spec, GRID_13KM).values
        r = GRID_13KM.r
        assert np.all(k[1:] < math.pi * r[1:] ** 2)
        assert np.all(np.diff(k) >= 0.0)

    def test_small_scale_limit_is_poisson(self):
        # shrinking the kernel scale removes the repulsion: at
        # alpha = 1e-6 r_max the K deficit is O((alpha/r)^2)
        r_max = GRID_13KM.r[-1]
        scale = 1e-6 * r_max
        base = math.pi * GRID_13KM.r[1:] ** 2
        for spec in (GaussDpp(LAM_13KM, scale),
                     CauchyDpp(LAM_13KM, scale, 1.0)):
            k = theoretical_K(spec, GRID_13KM).values[1:]
            assert np.max(np.abs(k - base) / base) < 1e-6

    def test_validation_happens_first(self):
        with pytest.raises(ExistenceViolation):
            theoretical_K(GaussDpp(1.0, 1.0), GRID_13KM)


def product_F_reference(lam, beta, r, k_hi=400, first_k=1):
    """Independent route to the Ginibre-family F/G product using
    scipy's regularized gamma directly."""
    x = lam * math.pi * r * r / beta
    ks = np.arange(first_k, k_hi + 1, dtype=float)
    return 1.0 - np.prod(1.0 - beta * scipy_gammainc(ks, x))


class TestGinibreFamilyCurves:
    def test_F_matches_independent_product(self):
        for r in (400.0, 1000.0, 2000.0):
            grid = RadiusGrid(np.array([0.0, r]))
            got = theoretical_F(BG_REF, grid).values[1]
            want = product_F_reference(BG_REF.intensity, BG_REF.beta, r)
            assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_G_matches_independent_product(self):
        for r in (400.0, 1000.0, 2000.0):
            grid = RadiusGrid(np.array([0.0, r]))
            got = theoretical_G(BG_REF, grid).values[1]
            want = product_F_reference(BG_REF.intensity, BG_REF.beta, r,
                                       first_k=2)
            assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_J_frozen_value_and_closed_form(self):
        grid = RadiusGrid(np.array([0.0, 1000.0]))
        j = theoretical_J(BG_REF, grid).values[1]
        assert j == pytest.approx(BG_J_1000, rel=1e-9)
        x = BG_REF.intensity * math.pi * 1e6 / BG_REF.beta
        assert j == pytest.approx(
            1.0 / ((1.0 - BG_REF.beta) + BG_REF.beta * math.exp(-x)),
            rel=1e-12)

    def test_J_equals_product_ratio(self):
        # closed-form J against the ratio of the two product curves:
        # two independent code paths through the same distribution
        f = theoretical_F(BG_REF, GRID_13KM).values
        g = theoretical_G(BG_REF, GRID_13KM).values
        j = theoretical_J(BG_REF, GRID_13KM).values
        ok = f < 1.0 - 1e-6
        ratio = (1.0 - g[ok]) / (1.0 - f[ok])
        np.testing.assert_allclose(j[ok], ratio, rtol=1e-10)

    def test_J_limit_at_large_radius(self):
        spec = BetaGinibre(intensity=100.0, beta=0.5)
        grid = RadiusGrid(np.array([0.0, 10.0]))
        assert theoretical_J(spec, grid).values[1] \
            == pytest.approx(2.0, rel=1e-12)

    def test_truncation_converged(self):
        grid = RadiusGrid(np.linspace(0.0, 3250.0, 9))
        auto = theoretical_F(BG_REF, grid).values
        long = theoretical_F(BG_REF, grid, k_terms=900).values
        np.testing.assert_allclose(auto, long, atol=1e-10, rtol=0.0)

    def test_beta_limit_reaches_poisson(self):
        # the deviation from the Poisson curve peaks at lam pi r^2 = 1
        # with height ~ beta / (2e); at beta = 1e-4 that is 1.8e-5,
        # and the 1e-6 band is reached around beta = 1e-6
        lam = 100.0
        grid = RadiusGrid.default(Rectangle(0.0, 1.0, 0.0, 1.0), 128)
        pois = theoretical_F(Poisson(lam), grid).values
        f4 = theoretical_F(BetaGinibre(lam, 1e-4), grid).values
        sup4 = np.max(np.abs(f4 - pois))
        assert 1e-5 < sup4 < 3e-5
        peak = RadiusGrid(np.array([0.0, 0.9, 1.0, 1.1])
                          / math.sqrt(lam * math.pi))
        pois_peak = theoretical_F(Poisson(lam), peak).values
        f6 = theoretical_F(BetaGinibre(lam, 1e-6), peak).values
        assert np.max(np.abs(f6 - pois_peak)) < 1e-6

    def test_poisson_F_G_Jraw(self):
        grid = RadiusGrid(np.array([0.0, 0.05]))
        f = theoretical_F(Poisson(100.0), grid).values[1]
        assert f == pytest.approx(0.54406187223400376, rel=1e-12)
        g = theoretical_G(Poisson(100.0), grid).values[1]
        assert g == f
        assert np.allclose(theoretical_J(Poisson(100.0), grid).values, 1.0)


class TestSimulatedCurves:
    WINDOW = Rectangle(0.0, 1.0, 0.0, 1.0)
    SPEC = GaussDpp(intensity=50.0, scale=0.5 / math.sqrt(math.pi * 50.0))

    def test_requires_window(self):
        with pytest.raises(ConfigError):
            theoretical_F(self.SPEC, RadiusGrid(np.array([0.0, 0.1])))

    def test_requires_enough_replicates(self):
        with pytest.raises(ConfigError):
            theoretical_F(self.SPEC, RadiusGrid(np.array([0.0, 0.1])),
                          window=self.WINDOW, replicates=5)

    def test_simulated_F_G_behave(self):
        grid = RadiusGrid.default(self.WINDOW, 64)
        f = theoretical_F(self.SPEC, grid, window=self.WINDOW,
                          replicates=12, n_test=500, stream=3)
        g = theoretical_G(self.SPEC, grid, window=self.WINDOW,
                          replicates=12, stream=3)
        for c in (f, g):
            assert c.origin == "simulated"
            ok = ~np.isnan(c.values)
            assert np.all((c.values[ok] >= 0.0) & (c.values[ok] <= 1.0))
        assert f.values[0] == 0.0

    def test_simulated_J_ratio(self):
        grid = RadiusGrid.default(self.WINDOW, 32)
        j = theoretical_J(self.SPEC, grid, window=self.WINDOW,
                          replicates=12, n_test=500, stream=3)
        assert j.origin == "simulated"
        mid = (grid.r > 0.02) & (grid.r < 0.1)
        vals = j.values[mid]
        assert np.all(vals[~np.isnan(vals)] > 0.5)

    def test_curve_dispatch(self):
        grid = RadiusGrid(np.array([0.0, 500.0]))
        k = theoretical_curve("K", BG_REF, grid)
        assert k.kind == "K" and k.origin == "theoretical"
        f = theoretical_curve("F", BG_REF, grid)
        assert f.kind == "F"
        with pytest.raises(KeyError):
            theoretical_curve("L", BG_REF, grid)


class TestDeterminantCheck:
    GAUSS = GaussDpp(intensity=0.5, scale=0.7)
    CAUCHY = CauchyDpp(intensity=0.4, scale=0.9, shape=1.2)
    BG = BetaGinibre(intensity=2.5, beta=0.8)

    def test_single_point_is_intensity(self):
        for spec in (self.GAUSS, self.CAUCHY, self.BG):
            assert dpp_determinant_check(spec, [[0.3, -0.2]]) \
                == pytest.approx(spec.intensity, rel=1e-12)

    def test_coincident_pair_vanishes(self):
        for spec in (self.GAUSS, self.CAUCHY, self.BG):
            det = dpp_determinant_check(spec, [[0.1, 0.4], [0.1, 0.4]])
            assert abs(det) < 1e-9 * spec.intensity ** 2

    def test_pair_closed_forms(self):
        s = 0.6
        pair = [[0.0, 0.0], [s, 0.0]]
        lam = self.GAUSS.intensity
        want = lam ** 2 * (1.0 - math.exp(-2.0 * s * s
                                          / self.GAUSS.scale ** 2))
        assert dpp_determinant_check(self.GAUSS, pair) \
            == pytest.approx(want, rel=1e-12)
        lam = self.CAUCHY.intensity
        want = lam ** 2 * (
            1.0 - (1.0 + s * s / self.CAUCHY.scale ** 2)
            ** (-2.0 * (self.CAUCHY.shape + 1.0)))
        assert dpp_determinant_check(self.CAUCHY, pair) \
            == pytest.approx(want, rel=1e-12)
        lam, beta = self.BG.intensity, self.BG.beta
        want = lam ** 2 * (1.0 - math.exp(-lam * math.pi * s * s / beta))
        assert dpp_determinant_check(self.BG, pair) \
            == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("spec", [GAUSS, CAUCHY, BG])
    def test_pair_density_matches_K_derivative(self, spec):
        # d/dr of the closed-form K equals 2 pi r g(r); the pair
        # determinant equals lam^2 g(r).  Two independent routes to the
        # second moment that must agree.
        lam = spec.intensity
        for r in (0.3, 0.8, 1.5):
            h = 1e-5 * r
            grid = RadiusGrid(np.array([0.0, r - h, r + h]))
            k = theoretical_K(spec, grid).values
            g_from_K = (k[2] - k[1]) / (2.0 * h) / (2.0 * math.pi * r)
            det = dpp_determinant_check(spec, [[0.0, 0.0], [r, 0.0]])
            assert det / lam ** 2 == pytest.approx(g_from_K, rel=1e-6)

    def test_nonnegative_random_configs(self, rng):
        for spec in (self.GAUSS, self.CAUCHY, self.BG):
            for n in (2, 4, 6):
                pts = rng.uniform(-1.0, 1.0, size=(n, 2))
                det = dpp_determinant_check(spec, pts)
                assert det >= -1e-9

    def test_rejects_poisson_and_large_configs(self, rng):
        with pytest.raises(ConfigError):
            dpp_determinant_check(Poisson(1.0), [[0.0, 0.0]])
        with pytest.raises(ValueError):
            dpp_determinant_check(self.GAUSS, rng.uniform(size=(7, 2)))
