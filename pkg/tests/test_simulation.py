import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from strata_rd import kernels
from strata_rd import simulation as sim
from strata_rd.errors import InfeasibleParametersError, InvalidFactorError, RejectionCapError
from strata_rd.estimators import mh_estimate, ps_estimate, unadjusted_estimate
from strata_rd.tables import SubjectRecord, aggregate_subjects
from strata_rd.variance import DELTA_ATE, DELTA_MH, TrueParameters


def config(tokens: str, **kw) -> sim.ScenarioConfig:
    (c,) = sim.parse_factors(tokens, **kw)
    return c


# -- truth construction -----------------------------------------------------------

def test_large_common_effect_truth():
    t = sim.build_truth(config("1a,2a,3a,4a"))
    assert t.rho == pytest.approx((0.2, 0.3, 0.5), abs=1e-15)
    assert t.p0 == (0.5, 0.2, 0.6)
    assert t.delta == pytest.approx((-0.1,) * 3, abs=1e-12)
    assert t.delta_ate == pytest.approx(-0.1, abs=1e-12)


@pytest.mark.parametrize("regime", ["3a", "3b", "3c"])
@pytest.mark.parametrize("size", ["1a", "1b", "1c"])
def test_common_effect_ate_any_regime(regime, size):
    t = sim.build_truth(config(f"{size},2b,{regime},4a"))
    assert t.delta_ate == pytest.approx(-0.1, abs=1e-12)
    assert math.fsum(t.rho) == pytest.approx(1.0, abs=1e-12)


def test_regime_dimensions():
    assert sim.build_truth(config("1a,2a,3b,4c")).K == 30
    assert sim.build_truth(config("1b,2a,3b,4c")).K == 18
    assert sim.build_truth(config("1c,2a,3b,4c")).K == 15
    mixed = sim.build_truth(config("1a,2a,3c,4c"))
    assert mixed.K == 18
    assert mixed.rho[:3] == pytest.approx((0.1, 0.15, 0.25), abs=1e-15)
    assert math.fsum(mixed.rho[3:]) == pytest.approx(0.5, abs=1e-12)


def test_heterogeneity_level_4b():
    t = sim.build_truth(config("1a,2a,3b,4b"))
    assert 0.002 < np.var(t.delta) < 0.0045
    draws = [np.var(sim.build_truth(config("1a,2a,3b,4b", generation_seed=g)).delta) for g in range(100)]
    assert np.mean(draws) == pytest.approx(0.003, abs=0.0003)


def test_heterogeneity_level_4c():
    draws = [np.var(sim.build_truth(config("1a,2a,3b,4c", generation_seed=g)).delta) for g in range(100)]
    assert np.mean(draws) == pytest.approx(0.11, abs=0.003)


def test_truth_depends_only_on_generation_seed():
    a = sim.build_truth(config("1a,2a,3b,4b", generation_seed=5, run_seed=1))
    b = sim.build_truth(config("1a,2a,3b,4b", generation_seed=5, run_seed=99))
    c = sim.build_truth(config("1a,2a,3b,4b", generation_seed=6))
    assert a == b and a != c


@pytest.mark.parametrize("regime", ["3a", "3b", "3c"])
def test_extreme_truth_is_zero_one(regime):
    t = sim.build_truth(config(f"1a,2a,{regime},extreme"))
    assert set(t.p0) <= {0.0, 1.0} and set(t.p1) <= {0.0, 1.0}
    assert set(t.delta) <= {-1.0, 0.0, 1.0}


def test_config_validation():
    with pytest.raises(InfeasibleParametersError):
        sim.ScenarioConfig(500, (0.6, 0.6), sim.LARGE, sim.COMMON_4A)
    with pytest.raises(InvalidFactorError):
        sim.ScenarioConfig(500, (0.5, 0.5), "TINY", sim.COMMON_4A)


# -- trial generators --------------------------------------------------------------

def test_degenerate_trial():
    t = TrueParameters((1.0,), 0.5, (1.0,), (1.0,))
    recs = sim.sample_trial(t, 50, 3)
    assert len(recs) == 50
    assert all(r.stratum == "s1" and r.outcome == 1 for r in recs)


def test_stratum_frequencies_within_clt_band():
    t = sim.build_truth(config("1a,2a,3c,4c"))
    n = 10**5
    freq = Counter(r.stratum for r in sim.sample_trial(t, n, 11))
    for k, rho in enumerate(t.rho):
        assert abs(freq[f"s{k + 1}"] / n - rho) <= 4 * math.sqrt(rho * (1 - rho) / n)


def test_trial_determinism():
    t = sim.build_truth(config("1a,2a,3b,4b"))
    assert sim.sample_trial(t, 300, 42) == sim.sample_trial(t, 300, 42)
    assert sim.sample_trial(t, 300, 42) != sim.sample_trial(t, 300, 43)


def test_null_potential_outcomes():
    lam = [(0.0, 0.0, 1.0, 0.0)] * 3
    recs = sim.sample_trial_individual_rd(lam, (0.2, 0.3, 0.5), 0.5, 400, 1)
    assert all(r.outcome == 0 for r in recs)
    ds = aggregate_subjects(recs)
    assert mh_estimate(ds).value == 0
    assert ps_estimate(ds).value == 0
    assert unadjusted_estimate(ds).value == 0


def test_lambda_rows_validated():
    with pytest.raises(InfeasibleParametersError):
        sim.sample_trial_individual_rd([(0.5, 0.5, 0.5, 0.0)], (1.0,), 0.5, 10, 1)
    with pytest.raises(InfeasibleParametersError):
        sim.sample_trial_individual_rd([(0.5, 0.5, 0.0)], (1.0,), 0.5, 10, 1)


@pytest.mark.parametrize("regime", ["3a", "3b", "3c"])
def test_extreme_trials_give_zero_one_arm_proportions(regime):
    t = sim.build_truth(config(f"1a,2a,{regime},extreme"))
    recs = sim.sample_trial_individual_rd(sim.lambda_table(t), t.rho, t.pi1, 500, 8)
    ds = aggregate_subjects(recs)
    for s in ds.strata:
        for resp, tot in ((s.n11, s.n_1), (s.n10, s.n_0)):
            assert resp in (0, tot)


@given(st.floats(0, 1), st.integers(0, 5))
def test_lambda_table_reproduces_truth(frac, g):
    t = sim.build_truth(config("1b,2b,3c,4c", generation_seed=g))
    lam = sim.lambda_table(t, frac)
    assert np.all(lam >= 0)
    assert lam.sum(axis=1) == pytest.approx(np.ones(t.K), abs=1e-12)
    assert lam[:, 0] + lam[:, 3] == pytest.approx(np.array(t.p0), abs=1e-12)
    assert lam[:, 1] - lam[:, 0] == pytest.approx(np.array(t.delta), abs=1e-12)


def test_potential_outcome_generator_matches_binomial():
    c = config("1a,2a,3b,4c")
    ird = config("1a,2a,3b,4c,ird")
    a = sim.run_scenario(c, runs=1000)
    b = sim.run_scenario(ird, runs=1000)
    assert a.truth_ate == b.truth_ate
    for method, estimand in (("MGR_MH", DELTA_MH), ("MGR_ATE", DELTA_ATE), ("GR", DELTA_ATE)):
        x, y = a.cell(method, estimand), b.cell(method, estimand)
        cp_se = math.sqrt(2 * x.cp * (1 - x.cp) / 1000)
        assert abs(x.cp - y.cp) <= 3 * max(cp_se, 0.005)
        assert abs(x.bias - y.bias) <= 3 * math.sqrt(2) * x.sd / math.sqrt(1000)
        assert y.sd == pytest.approx(x.sd, rel=0.15)


# -- truncated normal --------------------------------------------------------------

def test_truncnorm_support():
    rng = np.random.default_rng(0)
    x = sim.sample_truncnorm(0, 0.1, 0.05, 0.05, rng, size=10000)
    assert x.min() >= 0 and x.max() <= 0.1
    assert 0 <= sim.sample_truncnorm(0, 0.1, 0.05, 0.05, rng) <= 0.1


def test_truncnorm_mean_matches_closed_form():
    x = sim.sample_truncnorm(0, 0.1, 0.05, 0.05, np.random.default_rng(1), size=10**6)
    assert abs(x.mean() - oracles.truncnorm_mean(0, 0.1, 0.05, 0.05)) < 0.001
    y = sim.sample_truncnorm(0.1, 0.2, 0.15, 0.05, np.random.default_rng(2), size=10**6)
    assert abs(y.mean() - oracles.truncnorm_mean(0.1, 0.2, 0.15, 0.05)) < 0.001


@pytest.mark.parametrize("sigma", [0.1, 1.0, 5.0])
def test_truncnorm_symmetric_mean(sigma):
    x = sim.sample_truncnorm(-1, 1, 0, sigma, np.random.default_rng(3), size=200000)
    assert abs(x.mean()) < 3 * x.std() / math.sqrt(x.size)


def test_truncnorm_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(InfeasibleParametersError):
        sim.sample_truncnorm(1, 0, 0, 1, rng)
    with pytest.raises(InfeasibleParametersError):
        sim.sample_truncnorm(0, 1, 0, 0, rng)
    with pytest.raises(RejectionCapError):
        sim.sample_truncnorm(60, 61, 0, 1, rng)


# -- engine and summaries ----------------------------------------------------------

def test_single_run_summary():
    s = sim.run_scenario(config("1c,2b,3a,4a"), runs=1)
    for c in s.cells:
        assert c.sd is None
        assert c.valid_runs + c.failures == 1
    mh = s.cell("MGR_MH", DELTA_MH)
    batch = sim.simulate_replicates(sim.build_truth(s.config), 200, 1, 1)
    assert mh.bias == batch.stats[0, kernels.MH] - batch.truth_mh[0]
    assert sim.summaries_to_csv([s]).count(",NA,") == len(s.cells)


def test_engine_matches_reference_estimators():
    t = sim.build_truth(config("1c,2a,3b,4c"))
    b = sim.simulate_replicates(t, 200, 5, 9)
    for r in range(5):
        ds = aggregate_subjects(
            SubjectRecord(f"s{k + 1}", a, y)
            for k in range(t.K)
            for a, y, m in ((1, 1, b.counts[r, k, 0]), (0, 1, b.counts[r, k, 1]),
                            (1, 0, b.counts[r, k, 2]), (0, 0, b.counts[r, k, 3]))
            for _ in range(m)
        )
        assert b.stats[r, kernels.MH] == pytest.approx(mh_estimate(ds).value, abs=1e-12)


def test_schedule_independence():
    c = config("1c,2a,3c,4b")
    a = sim.run_scenario(c, runs=230, workers=1, bootstrap=5)
    b = sim.run_scenario(c, runs=230, workers=7, bootstrap=5)
    assert sim.summaries_to_json([a]) == sim.summaries_to_json([b])


def test_invalid_runs():
    with pytest.raises(ValueError):
        sim.simulate_replicates(sim.build_truth(config("1a,2a,3a,4a")), 500, 0, 1)


def test_summary_ranges():
    s = sim.run_scenario(config("1c,2a,3b,4c"), runs=200, bootstrap=20)
    assert s.runs == 200
    for c in s.cells:
        assert 0 <= c.cp <= 1 and 0 <= c.power <= 1
    assert s.cell("BOOTSTRAP", DELTA_ATE).valid_runs > 0


def test_mgr_mh_tracks_monte_carlo_variance():
    for tokens in ("1a,2a,3a,4c", "1a,2a,3b,4c", "1a,2a,3c,4b"):
        c = config(tokens)
        b = sim.simulate_replicates(sim.build_truth(c), c.n, 1000, c.run_seed)
        dev = b.stats[:, kernels.MH] - b.truth_mh
        emp = dev.var(ddof=1)
        est = b.stats[:, kernels.MGR_MH]
        se = math.sqrt(2 * emp**2 / 999 + est.var(ddof=1) / 1000)
        assert abs(est.mean() - emp) < 3 * se, tokens


def test_heterogeneity_estimate_centred_under_common_effect():
    c = config("1a,2a,3a,4a")
    b = sim.simulate_replicates(sim.build_truth(c), c.n, 1000, c.run_seed)
    nu2 = b.stats[:, kernels.NU2]
    assert abs(nu2.mean()) < 3 * nu2.std(ddof=1) / math.sqrt(1000)


@pytest.mark.parametrize("estimator,column", [("MH", kernels.MH), ("PS", kernels.PS),
                                              ("UNADJUSTED", kernels.UNADJ)])
def test_ate_bias_within_monte_carlo_error(estimator, column):
    off = []
    for c in sim.parse_factors(""):
        t = sim.build_truth(c)
        b = sim.simulate_replicates(t, c.n, 1000, c.run_seed, workers=4)
        e = b.stats[:, column]
        e = e[np.isfinite(e)]
        z = (e.mean() - t.delta_ate) / (e.std(ddof=1) / math.sqrt(e.size))
        if abs(z) >= 3:
            off.append((c.label, round(float(z), 2)))
    assert off == []


# -- factor grid and serialisation -------------------------------------------------

def test_full_grid():
    grid = sim.parse_factors("")
    assert len(grid) == 54
    assert len({c.label for c in grid}) == 54
    assert grid[0].label == "1a-2a-3a-4a"


def test_factor_selection():
    cs = sim.parse_factors("1a,3b,4c")
    assert [c.label for c in cs] == ["1a-2a-3b-4c", "1a-2b-3b-4c"]
    (x,) = sim.parse_factors("1a,2b,3c,extreme")
    assert x.effect == sim.EXTREME and x.label == "1a-2b-3c-extreme"
    (y,) = sim.parse_factors("1a,2b,3c,4b,ird")
    assert y.effect == sim.INDIVIDUAL_RD and y.generating_effect == sim.VARYING_4B


@pytest.mark.parametrize("bad", ["1d", "5a", "extreme,4a", "extreme,ird", "1a,,x"])
def test_factor_errors(bad):
    with pytest.raises(InvalidFactorError):
        sim.parse_factors(bad)


def test_json_round_trip():
    s = [sim.run_scenario(c, runs=40) for c in sim.parse_factors("1c,2a,3a")]
    text = sim.summaries_to_json(s)
    assert sim.summaries_from_json(text) == s
    assert sim.summaries_to_json(sim.summaries_from_json(text)) == text


def test_csv_layout():
    s = sim.run_scenario(config("1c,2a,3a,4a"), runs=40)
    rows = sim.summaries_to_csv([s]).splitlines()
    assert rows[0].split(",") == sim.CSV_HEADER
    assert len(rows) == 1 + len(s.cells)
    cell = s.cell("MGR_MH", DELTA_MH)
    fields = dict(zip(sim.CSV_HEADER, rows[3].split(",")))
    assert fields["method"] == "MGR_MH"
    assert fields["cp"] == sim.display(cell.cp)


@pytest.mark.parametrize("value,text", [(0.944, "94.4"), (0.0125, "1.2"), (0.0135, "1.4"),
                                        (-0.1, "-10.0"), (None, "NA"), (math.nan, "NA")])
def test_display_half_even(value, text):
    assert sim.display(value) == text
