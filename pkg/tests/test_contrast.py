import numpy as np
import pytest

from conftest import BETA, STEP, T_MAX

import hazrates as hz
from hazrates.contrast import (
    Regime,
    causal_hazard_ratio,
    duration_model_ratio,
    potential_survival,
    rate_based_survival,
)
from hazrates.rates import rate_treated, rate_untreated


class TestRegime:
    def test_constructors(self):
        assert Regime.never().kind == "never"
        assert Regime.always().kind == "always"
        assert Regime.initiate_at(1.5).u == 1.5

    def test_validation(self):
        with pytest.raises(ValueError):
            Regime("sometimes")
        with pytest.raises(ValueError):
            Regime("initiate_at")
        with pytest.raises(ValueError):
            Regime("never", u=1.0)
        with pytest.raises(ValueError):
            Regime.initiate_at(-0.5)


class TestPotentialSurvival:
    def test_starts_at_one(self, model):
        for regime in (Regime.never(), Regime.always(), Regime.initiate_at(1.0)):
            assert potential_survival(model, regime)(0.0) == 1.0

    def test_always_is_the_kernel_cumulative(self, model):
        s = potential_survival(model, Regime.always())
        # two-piece closed form: 0.4 for one unit, 0.2 for two more
        assert s(3.0) == pytest.approx(np.exp(-0.8), abs=1e-12)
        assert s(0.5) == pytest.approx(np.exp(-0.2), abs=1e-12)

    def test_never_matches_rate_transform_of_untreated_rate(self, model):
        # among the untreated, rate and hazard coincide, so this is the
        # one regime where the rate-based transform is exactly right
        s_never = potential_survival(model, Regime.never())
        s_rate = rate_based_survival(rate_untreated(model))
        np.testing.assert_array_equal(s_never.values, s_rate.values)

    def test_never_frozen_value(self, model):
        assert potential_survival(model, Regime.never())(3.0) == pytest.approx(
            0.2324581650, abs=1e-9
        )

    def test_initiate_at_zero_is_always(self, model):
        s0 = potential_survival(model, Regime.initiate_at(0.0))
        s_alw = potential_survival(model, Regime.always())
        assert float(np.max(np.abs(s0.values - s_alw.values))) <= 1e-12

    def test_initiate_at_horizon_is_never(self, model):
        s3 = potential_survival(model, Regime.initiate_at(T_MAX))
        s_nev = potential_survival(model, Regime.never())
        assert float(np.max(np.abs(s3.values - s_nev.values))) <= 1e-12

    def test_initiation_beyond_horizon_rejected(self, model):
        with pytest.raises(ValueError):
            potential_survival(model, Regime.initiate_at(T_MAX + 1.0))

    def test_regime_ordering(self, model):
        # earlier initiation only ever helps here: the post-initiation
        # hazard is below the untreated hazard at every time
        s_alw = potential_survival(model, Regime.always())
        s_mid = potential_survival(model, Regime.initiate_at(1.0))
        s_nev = potential_survival(model, Regime.never())
        assert np.all(s_alw.values - s_mid.values >= -1e-12)
        assert np.all(s_mid.values - s_nev.values >= -1e-12)
        assert s_alw(3.0) > s_mid(3.0) > s_nev(3.0)


class TestContrasts:
    def test_true_contrast_frozen(self, model):
        s_alw = potential_survival(model, Regime.always())
        s_nev = potential_survival(model, Regime.never())
        assert s_alw(3.0) - s_nev(3.0) == pytest.approx(0.2168707991, abs=1e-9)

    def test_rate_based_contrast_frozen(self, model):
        s_t = rate_based_survival(rate_treated(model))
        s_u = rate_based_survival(rate_untreated(model))
        assert s_t(3.0) - s_u(3.0) == pytest.approx(0.1456039999, abs=1e-9)

    def test_rate_based_transform_overstates_treated_survival(self, model):
        # exp(-cumulative rate) among the treated is not a potential
        # outcome; here it undershoots the always-treat curve everywhere
        # past the lag
        s_alw = potential_survival(model, Regime.always())
        s_t = rate_based_survival(rate_treated(model))
        after = model.times > 1.0
        assert np.all(s_t.values[after] < s_alw.values[after])

    def test_rate_based_survival_rejects_negative(self):
        with pytest.raises(ValueError):
            rate_based_survival(hz.GridFunction.constant(1.0, 0.5, -0.1))


class TestCausalHazardRatio:
    def test_flat_before_the_lag_then_below(self, model):
        ratio = causal_hazard_ratio(model)
        t = ratio.times
        np.testing.assert_allclose(ratio.values[t <= 1.0], 2.0 / 3.0, atol=1e-12)
        assert float(np.max(ratio.values[t >= 1.05])) == pytest.approx(
            0.56411784, abs=1e-7
        )
        assert np.all(ratio.values[t >= 1.05] < 2.0 / 3.0 - 1e-3)

    def test_rejects_vanishing_untreated_hazard(self, standard_build):
        lam01, kernel, _ = standard_build
        degenerate = hz.IllnessDeathModel(
            lam01, hz.GridFunction.constant(T_MAX, STEP, 0.0), kernel
        )
        with pytest.raises(ValueError, match="vanishes"):
            causal_hazard_ratio(degenerate)


class TestDurationModelRatio:
    def test_gamma_zero_is_exactly_the_rate_ratio(self):
        lam0 = hz.GridFunction.constant(T_MAX, STEP, 0.6)
        out = duration_model_ratio(lam0, beta=BETA, gamma=0.0, t=2.0)
        assert out == float(np.exp(BETA))

    def test_constant_baseline_closed_form(self):
        # e^beta * (e^{gamma t} - 1) / (gamma t) for flat lambda0
        lam0 = hz.GridFunction.constant(3.0, 0.001, 0.5)
        out = duration_model_ratio(lam0, beta=0.0, gamma=1.0, t=1.0)
        assert out == pytest.approx(np.e - 1.0, abs=1e-6)

    def test_monotone_in_t_with_the_sign_of_gamma(self):
        lam0 = hz.GridFunction.constant(3.0, 0.005, 0.5)
        up = [duration_model_ratio(lam0, BETA, 0.25, t) for t in (0.5, 1.5, 3.0)]
        assert up[0] < up[1] < up[2]
        assert up[0] > np.exp(BETA)
        down = [duration_model_ratio(lam0, BETA, -0.25, t) for t in (0.5, 1.5, 3.0)]
        assert down[0] > down[1] > down[2]
        assert down[0] < np.exp(BETA)

    def test_validation(self):
        lam0 = hz.GridFunction.constant(3.0, 0.005, 0.5)
        with pytest.raises(ValueError):
            duration_model_ratio(lam0, BETA, 0.0, t=0.0)
        zero = hz.GridFunction.constant(3.0, 0.005, 0.0)
        with pytest.raises(ValueError):
            duration_model_ratio(zero, BETA, 0.0, t=1.0)


class TestRegimeCurvesAgainstSimulation:
    def test_always_treated_deaths(self, model):
        # direct draws from the post-initiation kernel, treated from 0
        rng = np.random.Generator(np.random.Philox(33))
        n = 1_000_000
        t_death = model.lambda12.invert_cumulative(
            np.zeros(n), rng.exponential(size=n)
        )
        s = potential_survival(model, Regime.always())
        for t in (0.5, 1.5, 2.5):
            frac = float(np.mean(t_death > t))
            want = s(t)
            se = np.sqrt(want * (1 - want) / n)
            assert abs(frac - want) < 3 * se, (
                f"always-treat survival at t={t}: simulated {frac:.5f}, "
                f"analytic {want:.5f}"
            )

    def test_never_treated_cohort(self, model):
        # switch off initiation; the cohort then realizes the never regime
        frozen = hz.IllnessDeathModel(
            hz.GridFunction.constant(T_MAX, STEP, 0.0), model.lambda02, model.lambda12
        )
        cohort = hz.simulate_cohort(frozen, hz.SimConfig(n=1_000_000, seed=34))
        t_event = np.array([tr.t_event for tr in cohort])
        event = np.array([tr.event for tr in cohort])
        s = potential_survival(model, Regime.never())
        for t in (0.5, 1.5, 2.5):
            frac = float(np.mean((t_event > t) | (~event & (t_event >= t))))
            want = s(t)
            se = np.sqrt(want * (1 - want) / 1_000_000)
            assert abs(frac - want) < 3 * se, (
                f"never-treat survival at t={t}: simulated {frac:.5f}, "
                f"analytic {want:.5f}"
            )
