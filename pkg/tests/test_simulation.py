"""Cohort simulation: covariate laws, censoring calibration, study harnesses."""

import dataclasses
import math

import numpy as np
import pytest

from exhaz import datasets
from exhaz import simulation as sim
from exhaz.baseline import PGWParams, pgw_cum_hazard, pgw_quantile
from exhaz.inference import ModelSpec, OptimizerOptions, fit
from exhaz.model import CovariateMapping

from conftest import build_table


@pytest.fixture(scope="module")
def synth_table():
    return datasets.synthetic_life_table()


@pytest.fixture(scope="module")
def zero_wide():
    return sim.resolve_life_table("builtin:zero")


class TestAgeMixture:
    def test_moments_match_closed_form(self):
        mix = sim.AgeMixture()
        # Independent arithmetic for a three-band piecewise-uniform law.
        mean = 0.25 * 47.5 + 0.35 * 70.0 + 0.40 * 80.0
        second = (
            0.25 * ((65 - 30) ** 2 / 12 + 47.5**2)
            + 0.35 * ((75 - 65) ** 2 / 12 + 70.0**2)
            + 0.40 * ((85 - 75) ** 2 / 12 + 80.0**2)
        )
        assert mix.mean == pytest.approx(mean, abs=1e-12)
        assert mix.sd == pytest.approx(math.sqrt(second - mean**2), rel=1e-12)

    def test_sample_law(self):
        mix = sim.AgeMixture()
        rng = np.random.default_rng(41)
        ages = mix.sample(rng, 200_000)
        assert ages.min() >= 30.0 and ages.max() <= 85.0
        assert abs(np.mean(ages < 65.0) - 0.25) < 0.005
        assert abs(np.mean((ages >= 65.0) & (ages < 75.0)) - 0.35) < 0.005
        assert abs(ages.mean() - mix.mean) < 3.5 * mix.sd / math.sqrt(200_000)

    def test_standardise(self):
        mix = sim.AgeMixture()
        assert mix.standardise(mix.mean) == pytest.approx(0.0, abs=1e-12)
        assert mix.standardise(mix.mean + mix.sd) == pytest.approx(1.0, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            sim.AgeMixture(probs=(0.5, 0.3, 0.3))
        with pytest.raises(ValueError):
            sim.AgeMixture(bounds=((65, 30), (65, 75), (75, 85)))
        with pytest.raises(ValueError):
            sim.AgeMixture(bounds=((30, 65), (65, 75)), probs=(0.5, 0.3, 0.2))


class TestScenarios:
    def test_effect_length_validation(self):
        with pytest.raises(ValueError, match="alpha/beta"):
            sim.Scenario(alpha=(1.0, 1.0))
        with pytest.raises(ValueError, match="3 entries"):
            sim.TwoGroupScenario(beta_sex1=(1.0,))
        with pytest.raises(ValueError):
            sim.Scenario(frailty_family="weird")
        with pytest.raises(ValueError):
            sim.Scenario(dropout_rate=-0.1)
        with pytest.raises(ValueError):
            sim.TwoGroupScenario(censoring_target=1.0)

    def test_factories(self):
        s = sim.sc1_scenario(n=123, M=7, seed=9, b=0.25)
        assert (s.n, s.M, s.seed, s.frailty_b) == (123, 7, 9, 0.25)
        assert s.covariate_names == ("agec", "sex", "x1", "x2")
        assert sim.two_group_scenario(1).theta_sex0 == (0.5, 1.5, 3.0)
        assert sim.two_group_scenario(2).theta_sex0 == (0.5, 1.5, 0.75)
        with pytest.raises(ValueError):
            sim.two_group_scenario(3)

    def test_truth_accessors(self):
        s = sim.sc1_scenario()
        g = s.true_params()
        assert isinstance(g.theta, PGWParams)
        assert tuple(g.alpha) == (1.0, 1.0, 1.0, 1.0)
        fr = s.true_frailty()
        assert (fr.family, fr.b) == ("gamma", 0.5)
        two = sim.two_group_scenario(2)
        assert two.group_params(1).theta.gamma == 5.0
        assert two.group_params(0).theta.gamma == 0.75


class TestScenarioFiles:
    @pytest.mark.parametrize(
        "scenario",
        [
            sim.sc1_scenario(),
            sim.sc1_scenario(n=500, M=200, seed=20121),
            sim.sc1_scenario(b=0.0, seed=20122),
            dataclasses.replace(
                sim.sc1_scenario(), dropout_rate=0.019, baseline="pgw"
            ),
            sim.Scenario(
                name="standin",
                baseline="lognormal",
                theta=(0.3, 0.9),
                frailty_family="ig",
                frailty_b=0.8,
            ),
            sim.two_group_scenario(1),
            sim.two_group_scenario(2, n=800, M=5, seed=77),
        ],
        ids=["sc1", "sc1-small", "sc1-null", "fixed-dropout", "standin", "two1", "two2"],
    )
    def test_round_trip(self, tmp_path, scenario):
        path = tmp_path / "scenario.ini"
        sim.save_scenario(path, scenario)
        assert sim.load_scenario(path) == scenario

    def test_load_errors(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[other]\nx = 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="scenario"):
            sim.load_scenario(path)
        path.write_text("[scenario]\nkind = nope\n", encoding="utf-8")
        with pytest.raises(ValueError, match="kind"):
            sim.load_scenario(path)


class TestCohorts:
    def test_deterministic_given_seed(self, synth_table):
        s = sim.sc1_scenario(n=500)
        d1 = sim.generate_cohort(s, 7, synth_table)
        d2 = sim.generate_cohort(s, 7, synth_table)
        assert np.array_equal(d1.time, d2.time)
        assert np.array_equal(d1.status, d2.status)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.age, d2.age)
        assert d1.strata == d2.strata
        d3 = sim.generate_cohort(s, 8, synth_table)
        assert not np.array_equal(d1.time, d3.time)

    def test_accounting_and_bounds(self, synth_table):
        s = sim.sc1_scenario(n=1000)
        d = sim.generate_cohort(s, 3, synth_table)
        assert set(np.unique(d.status)) <= {0, 1}
        events = int((d.status == 1).sum())
        censored = int((d.status == 0).sum())
        assert events + censored == 1000
        assert np.all(d.time > 0.0)
        assert np.all(d.time <= s.admin_censor + 1e-12)
        assert d.x_names == ("agec", "sex", "x1", "x2")
        assert d.stratum_names == ("sex",)
        # Life-table strata mirror the sex covariate.
        sex = d.x[:, 1]
        assert all(st == (str(int(v)),) for st, v in zip(d.strata, sex))

    def test_recovery_scenario_censoring_share(self, synth_table):
        s = sim.sc1_scenario(n=4000)
        d = sim.generate_cohort(s, 11, synth_table)
        censored = 1.0 - d.status.mean()
        assert 0.35 <= censored <= 0.50

    def test_dropout_share_near_target(self, synth_table):
        s = dataclasses.replace(sim.sc1_scenario(), n=20_000)
        resolved = sim.resolve_dropout(s, synth_table)
        assert resolved.dropout_rate > 0.0
        d = sim.generate_cohort(s, 5, synth_table)
        dropout = float(np.mean((d.status == 0) & (d.time < s.admin_censor - 1e-9)))
        assert abs(dropout - s.dropout_target) < 0.012

    def test_two_group_censoring_share(self, synth_table):
        s = sim.two_group_scenario(2, n=5000)
        d = sim.generate_cohort(s, 13, synth_table)
        assert abs((1.0 - d.status.mean()) - s.censoring_target) < 0.03

    def test_two_group_covariate_law(self):
        s = sim.two_group_scenario(2)
        rng = np.random.default_rng(99)
        x, age = sim._draw_covariates(s, rng, 100_000)
        sex = x[:, 1]
        x1 = x[:, 2]
        assert abs(sex.mean() - 0.6) < 0.006
        assert abs(x1[sex == 1.0].mean() - 0.8) < 0.006
        assert abs(x1[sex == 0.0].mean() - 0.4) < 0.010
        assert abs(x[:, 0].mean()) < 0.012  # standardised age
        assert np.all((age >= 30.0) & (age <= 85.0))

    def test_stratum_mismatch_raises(self):
        table = build_table(
            lambda a, y, s: 0.01, range(0, 110), range(2000, 2030),
            [("a",), ("b",)], ("region",),
        )
        s = dataclasses.replace(sim.sc1_scenario(n=50), dropout_rate=0.0)
        with pytest.raises(ValueError, match="region"):
            sim.generate_cohort(s, 1, table)

    def test_no_background_no_dropout_matches_net_law(self, zero_wide):
        # With background mortality off and censoring pushed out, observed
        # times follow the frailty-marginal mixture law of the cohort's own
        # covariates; check with a Kolmogorov-Smirnov test at the 1% level.
        n = 6000
        s = sim.Scenario(
            name="ks", n=n, M=1, life_table="builtin:zero",
            dropout_target=0.0, admin_censor=1e9, seed=314,
        )
        d = sim.generate_cohort(s, 42, zero_wide)
        # The net-time law has a polynomial upper tail, so a handful of draws
        # can outlive even this horizon; they sit above every event time and
        # drop out of the comparison below without disturbing it.
        assert int(d.status.sum()) >= n - 10

        theta = PGWParams(*s.theta)
        alpha = np.asarray(s.alpha)
        beta = np.asarray(s.beta)
        scale = np.exp(d.x @ alpha)
        factor = np.exp(d.x @ beta - d.x @ alpha)
        t = np.sort(d.time[d.status == 1])
        cdf = np.empty(t.size)
        for start in range(0, t.size, 750):
            block = t[start:start + 750]
            he = pgw_cum_hazard(np.outer(scale, block), theta) * factor[:, None]
            cdf[start:start + 750] = 1.0 - np.mean((1.0 + 0.5 * he) ** -2.0, axis=0)
        ranks = np.arange(1, t.size + 1)
        dist = max(
            float(np.max(np.abs(cdf - ranks / n))),
            float(np.max(np.abs(cdf - (ranks - 1) / n))),
        )
        assert dist < 1.63 / math.sqrt(n)


class TestDropoutCalibration:
    def test_zero_target_gives_zero_rate(self, synth_table):
        s = dataclasses.replace(sim.sc1_scenario(), dropout_target=0.0)
        assert sim.calibrate_dropout(s, synth_table) == 0.0

    def test_calibration_is_reproducible(self, synth_table):
        s = sim.sc1_scenario()
        r1 = sim.calibrate_dropout(s, synth_table)
        r2 = sim.calibrate_dropout(s, synth_table)
        assert r1 == r2 and r1 > 0.0

    def test_resolve_keeps_explicit_rate(self, synth_table):
        s = dataclasses.replace(sim.sc1_scenario(), dropout_rate=0.25)
        assert sim.resolve_dropout(s, synth_table) is s

    def test_two_group_rate_positive(self, synth_table):
        s = sim.two_group_scenario(2)
        assert sim.calibrate_dropout(s, synth_table) > 0.0


class TestTruthCurves:
    def test_reference_curve_closed_form(self):
        s = sim.sc1_scenario()
        grid = np.linspace(0.0, 5.0, 41)
        curve = sim.true_net_survival_curve(s, grid, reference=True)
        h0 = pgw_cum_hazard(grid, PGWParams(0.75, 1.75, 8.0))
        np.testing.assert_allclose(curve.estimate, (1.0 + 0.5 * h0) ** -2.0, rtol=1e-12)
        assert curve.estimate[0] == 1.0

    def test_population_truth_matches_event_draws(self):
        # Large-sample empirical survival of simulated net event times agrees
        # with the covariate-averaged analytic curve.
        s = sim.sc1_scenario()
        grid = np.linspace(0.0, 5.0, 26)
        truth = sim.true_net_survival_curve(s, grid).estimate
        theta = PGWParams(*s.theta)
        alpha = np.asarray(s.alpha)
        beta = np.asarray(s.beta)
        rng = np.random.default_rng(915)
        counts = np.zeros(grid.size)
        chunk, reps = 200_000, 5
        for _ in range(reps):
            x, _ = sim._draw_covariates(s, rng, chunk)
            v = rng.gamma(1.0 / s.frailty_b, s.frailty_b, size=chunk)
            u = rng.random(chunk)
            eta_w = x @ alpha
            q = -np.log1p(-u) / (v * np.exp(x @ beta - eta_w))
            tnet = pgw_quantile(q, theta) * np.exp(-eta_w)
            counts += (tnet[:, None] > grid[None, :]).sum(axis=0)
        emp = counts / (chunk * reps)
        assert float(np.max(np.abs(emp - truth))) <= 0.005
        assert truth[0] == 1.0

    def test_two_group_truth_mixture(self):
        s = sim.two_group_scenario(2)
        grid = np.linspace(0.0, 5.0, 21)
        curves = sim.two_group_true_curves(s, grid, draws=30_000)
        mix = 0.6 * curves["sex1"].estimate + 0.4 * curves["sex0"].estimate
        np.testing.assert_allclose(curves["population"].estimate, mix, rtol=1e-14)
        for curve in curves.values():
            assert curve.estimate[0] == 1.0
            assert np.all(np.diff(curve.estimate) <= 1e-12)


class TestRecoveryStudy:
    def test_single_replicate_is_degenerate(self, synth_table):
        s = sim.sc1_scenario(n=600, M=1, seed=977)
        r = sim.run_aim1(s, synth_table)
        assert (r.table.analysed, r.table.excluded) == (1, 0)

        resolved = sim.resolve_dropout(s, synth_table)
        child = np.random.SeedSequence(s.seed).spawn(1)[0]
        data = sim.generate_cohort(resolved, child, synth_table)
        names = s.covariate_names
        spec = ModelSpec("pgw", "gamma", CovariateMapping(names, names))
        res = fit(data, synth_table, spec)
        np.testing.assert_array_equal(r.estimates[0], res.natural_estimates())
        np.testing.assert_array_equal(r.table.mean_mle, r.estimates[0])
        np.testing.assert_array_equal(
            r.table.bias, r.estimates[0] - r.table.true_values
        )
        assert np.all(np.isnan(r.table.emp_sd))
        assert set(np.unique(r.table.coverage)) <= {0.0, 1.0}
        assert r.table.names == (
            "sigma", "nu", "gamma",
            "alpha:agec", "alpha:sex", "alpha:x1", "alpha:x2",
            "beta:agec", "beta:sex", "beta:x1", "beta:x2", "b",
        )

    def test_repeat_runs_are_identical(self, synth_table):
        s = sim.sc1_scenario(n=300, M=3, seed=31)
        r1 = sim.run_aim1(s, synth_table)
        r2 = sim.run_aim1(s, synth_table)
        np.testing.assert_array_equal(r1.estimates, r2.estimates)
        np.testing.assert_array_equal(r1.std_errors, r2.std_errors)
        np.testing.assert_array_equal(r1.table.coverage, r2.table.coverage)
        assert r1.table.excluded == r2.table.excluded

    def test_fit_both_and_reference_curves(self, synth_table):
        grid = np.linspace(0.0, 5.0, 11)
        s = sim.sc1_scenario(n=300, M=2, seed=814)
        r = sim.run_aim1(s, synth_table, fit_both=True, reference_grid=grid)
        assert r.aic_frailty is not None and r.aic_classical is not None
        assert len(r.aic_frailty) == len(r.aic_classical) <= 2
        assert np.all(np.isfinite(r.aic_frailty))
        assert r.reference_curves.shape == (r.table.analysed, grid.size)
        assert np.all(r.reference_curves[:, 0] == 1.0)
        assert np.all(np.diff(r.reference_curves, axis=1) <= 1e-12)

    def test_all_excluded_raises(self, synth_table):
        s = sim.sc1_scenario(n=200, M=2, seed=4)
        opts = OptimizerOptions(maxiter=1, multistart=1)
        with pytest.raises(RuntimeError, match="excluded"):
            sim.run_aim1(s, synth_table, options=opts)

    def test_metrics_csv_round_trip(self, synth_table, tmp_path):
        s = sim.sc1_scenario(n=300, M=2, seed=55)
        r = sim.run_aim1(s, synth_table)
        path = tmp_path / "metrics.csv"
        r.table.write_csv(path)
        lines = path.read_text(encoding="utf-8").strip().splitlines()
        header = lines[0].split(",")
        assert header[:4] == ["parameter", "true", "mean_mle", "bias"]
        assert len(lines) == 1 + len(r.table.names)
        row = lines[1].split(",")
        assert row[0] == "sigma"
        assert float(row[2]) == r.table.mean_mle[0]
        assert "sc1" in r.table.summary()


@pytest.fixture(scope="module")
def small_run(synth_table):
    s = sim.two_group_scenario(2, n=800, M=2, seed=606)
    grid = np.linspace(0.0, 5.0, 21)
    return sim.run_aim2(s, synth_table, grid=grid, truth_draws=20_000)


class TestTwoGroupStudy:
    def test_keys_and_ranges(self, small_run):
        expected = {
            ("pooled", model, group)
            for model in ("classical", "frailty")
            for group in ("population", "sex1", "sex0")
        } | {
            ("stratified", model, group)
            for model in ("classical", "frailty")
            for group in ("sex1", "sex0")
        }
        assert set(small_run.mean_curves) == expected
        assert set(small_run.mean_sup_dev) == expected
        assert small_run.analysed + small_run.excluded == 2
        for vals in small_run.mean_curves.values():
            assert np.all((vals >= 0.0) & (vals <= 1.0 + 1e-12))
            assert np.all(np.diff(vals) <= 1e-12)
        for key in expected:
            assert small_run.sup_dev_of_mean(key) <= small_run.mean_sup_dev[key] + 1e-12

    def test_repeat_runs_are_identical(self, small_run, synth_table):
        again = sim.run_aim2(
            small_run.scenario, synth_table, grid=small_run.grid, truth_draws=20_000
        )
        assert again.analysed == small_run.analysed
        for key, val in small_run.mean_sup_dev.items():
            assert again.mean_sup_dev[key] == val

    def test_csv_outputs(self, small_run, tmp_path):
        summary = tmp_path / "summary.csv"
        curves = tmp_path / "curves.csv"
        small_run.write_summary_csv(summary)
        small_run.write_curves_csv(curves)
        lines = summary.read_text(encoding="utf-8").strip().splitlines()
        assert lines[0].startswith("analysis,model,group,mean_sup_dev")
        assert len(lines) == 1 + len(small_run.mean_sup_dev)
        first = lines[1].split(",")
        key = (first[0], first[1], first[2])
        assert float(first[3]) == small_run.mean_sup_dev[key]
        curve_lines = curves.read_text(encoding="utf-8").strip().splitlines()
        assert len(curve_lines) == 1 + len(small_run.mean_curves) * small_run.grid.size

    def test_stratified_tracks_subgroup_truth(self, synth_table):
        # Mildly different baselines: per-group fits recover each group's
        # net-survival curve closely even though x1 is omitted.
        s = sim.two_group_scenario(1, n=3000, M=30, seed=71)
        r = sim.run_aim2(s, synth_table)
        assert r.analysed >= 25
        for model in ("classical", "frailty"):
            for group in ("sex1", "sex0"):
                assert r.sup_dev_of_mean(("stratified", model, group)) <= 0.02
