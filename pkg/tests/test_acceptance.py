"""One test per acceptance criterion; the run prints a PASS/FAIL line for each."""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from strategies import full_datasets
from strata_rd import cli, kernels, tables
from strata_rd import simulation as sim
from strata_rd import variance as v
from strata_rd.estimators import mh_estimate, ps_estimate, unadjusted_estimate
from strata_rd.tables import StratifiedDataset

# published CALGB results, x100: (estimate, se, ci_low, ci_high)
CALGB_TABLE = {
    ("MH", "GR"): (5.72, 6.32, "-6.67", "18.10"),
    ("MH", "SATO"): (5.72, 7.99, "-9.94", "21.4"),
    ("MH", "MGR_MH"): (5.72, 7.30, "-8.60", "20.0"),
    ("MH", "MGR_ATE"): (5.72, 7.74, "-9.46", "20.9"),
    ("UNADJUSTED", "UNADJUSTED"): (1.79, 8.06, "-14.0", "17.6"),
    ("PS", "PS"): (5.69, 7.66, "-9.33", "20.7"),
}


def printed_round(x: float, shown: str) -> float:
    """``x`` rounded to as many decimals as the published figure shows."""
    decimals = len(shown.split(".")[1]) if "." in shown else 0
    return round(x, decimals)


def config(tokens: str) -> sim.ScenarioConfig:
    (c,) = sim.parse_factors(tokens)
    return c


@pytest.mark.criterion(1, "CALGB golden reproduction")
def test_calgb_golden():
    start = time.perf_counter()
    ds = tables.calgb_dataset()
    mh = mh_estimate(ds).value
    routes = {
        ("MH", "GR"): (mh, v.var_gr(ds)),
        ("MH", "SATO"): (mh, v.var_sato(ds)),
        ("MH", "MGR_MH"): (mh, v.var_mgr_mh(ds)),
        ("MH", "MGR_ATE"): (mh, v.var_mgr_ate(ds)),
        ("UNADJUSTED", "UNADJUSTED"): (unadjusted_estimate(ds).value, v.var_unadjusted(ds)),
        ("PS", "PS"): (ps_estimate(ds).value, v.var_ps(ds)),
    }
    for key, (est, var) in routes.items():
        p_est, p_se, p_lo, p_hi = CALGB_TABLE[key]
        lo, hi = v.confidence_interval(est, var)
        assert abs(100 * est - p_est) <= 0.02 + 1e-9, key
        assert abs(100 * var.se - p_se) <= 0.02 + 1e-9, key
        assert abs(printed_round(100 * lo, p_lo) - float(p_lo)) <= 0.02 + 1e-9, key
        assert abs(printed_round(100 * hi, p_hi) - float(p_hi)) <= 0.02 + 1e-9, key
    report = cli.build_report(ds)
    assert report.entry("MH", "DELTA_MH").method("SATO").se == routes[("MH", "SATO")][1].se
    assert time.perf_counter() - start < 1.0


@pytest.mark.criterion(2, "CALGB bootstrap SE in [7.2, 8.3] for 20 seeds")
def test_calgb_bootstrap():
    start = time.perf_counter()
    records = tables.calgb_records()
    ses = [100 * v.var_bootstrap(records, "MH", 200, seed).se for seed in range(20)]
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    outside = [(seed, round(se, 2)) for seed, se in enumerate(ses) if not 7.2 <= se <= 8.3]
    assert outside == []


@pytest.mark.criterion(3, "common-form identities on 500 random datasets")
def test_common_form_identity_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(20240)
    done = 0
    while done < 500:
        K = int(rng.integers(1, 15))
        rows = [tuple(int(x) for x in rng.integers(0, 12, size=4)) for _ in range(K)]
        rows = [r for r in rows if sum(r)]
        if not rows:
            continue
        ds = StratifiedDataset.from_counts(rows)
        if not any(s.included for s in ds.strata):
            continue
        sato, gr = v.var_sato(ds).variance, v.var_gr(ds).variance
        assert v.var_common_form(ds, v.SATO_HALF).variance == pytest.approx(sato, rel=1e-12, abs=1e-300)
        assert v.var_common_form(ds, v.GR_LAMBDA).variance == pytest.approx(gr, rel=1e-12, abs=1e-300)
        done += 1
    assert time.perf_counter() - start < 10.0


@pytest.mark.criterion(3, "common-form identities on 500 random datasets")
def test_common_form_identity_on_drawn_datasets():
    # the same identities on datasets shaped like the hypothesis strategy's output
    from hypothesis import given, settings

    @settings(max_examples=500, database=None)
    @given(full_datasets)
    def check(ds):
        assert v.var_common_form(ds, v.SATO_HALF).variance == pytest.approx(v.var_sato(ds).variance,
                                                                            rel=1e-12, abs=1e-300)
        assert v.var_common_form(ds, v.GR_LAMBDA).variance == pytest.approx(v.var_gr(ds).variance,
                                                                            rel=1e-12, abs=1e-300)

    check()


GRID = [Fraction(i, 10) for i in range(1, 10)]
SMALL_MARGINS = [(a, b) for a in range(1, 4) for b in range(1, 4) if a + b <= 4]


@pytest.mark.criterion(4, "brute-force enumeration oracle for sigma^2")
def test_enumeration_oracle():
    start = time.perf_counter()
    layouts = [[m] for m in SMALL_MARGINS] + [list(p) for p in itertools.combinations_with_replacement(SMALL_MARGINS, 2)]
    for layout in layouts:
        margins = StratifiedDataset.from_counts([(a, b, 0, 0) for a, b in layout])
        for p1, p0 in itertools.product(GRID, GRID):
            fp1, fp0 = float(p1), float(p0)
            K = len(layout)
            truth = v.TrueParameters((1 / K,) * K, 0.5, (fp1,) * K, (fp0,) * K)
            expected = oracles.enumerate_sigma2(layout, truth.p1, truth.p0)
            assert v.theoretical_sigma2(margins, truth) == pytest.approx(expected, rel=1e-12, abs=1e-15)
    # stratum-specific probabilities on two-stratum layouts
    rng = np.random.default_rng(4)
    for layout in layouts[len(SMALL_MARGINS):]:
        margins = StratifiedDataset.from_counts([(a, b, 0, 0) for a, b in layout])
        for _ in range(20):
            p1 = tuple(float(rng.choice(GRID)) for _ in layout)
            p0 = tuple(float(rng.choice(GRID)) for _ in layout)
            truth = v.TrueParameters((0.5, 0.5), 0.5, p1, p0)
            expected = oracles.enumerate_sigma2(layout, p1, p0)
            assert v.theoretical_sigma2(margins, truth) == pytest.approx(expected, rel=1e-12, abs=1e-15)
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion(4, "brute-force enumeration oracle for sigma^2")
def test_arm_term_unbiased_in_rationals():
    for m in range(2, 7):
        for p in GRID:
            assert oracles.exact_unbiasedness(m, p) == m * p * (1 - p)
            # the package's single-arm mGR term, averaged over the binomial law
            mean = 0.0
            for k in range(m + 1):
                ds = StratifiedDataset.from_counts([(k, 0, m - k, 1)])
                mean += oracles.binom_pmf(k, m, float(p)) * v.var_mgr_mh(ds).variance
            assert mean * m * m == pytest.approx(float(m * p * (1 - p)), rel=1e-12)


@pytest.mark.criterion(5, "homogeneous effects: mGR_MH coverage and power")
def test_homogeneous_simulation():
    start = time.perf_counter()
    s = sim.run_scenario(config("1a,2a,3a,4a"), runs=1000, workers=1)
    cell = s.cell("MGR_MH", v.DELTA_MH)
    assert 0.925 <= cell.cp <= 0.965
    assert abs(100 * cell.power - 61.0) <= 5.0
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(6, "sparse heterogeneous: GR < mGR_MH < Sato coverage")
def test_sparse_heterogeneous_ordering():
    start = time.perf_counter()
    s = sim.run_scenario(config("1a,2a,3b,4c"), runs=1000)
    gr, mgr, sato = (s.cell(m, v.DELTA_MH).cp for m in ("GR", "MGR_MH", "SATO"))
    assert gr < mgr < sato
    assert 0.935 <= mgr <= 0.970
    assert time.perf_counter() - start < 180


@pytest.mark.criterion(7, "ATE coverage of mGR_ATE and GR shortfall")
def test_ate_coverage():
    start = time.perf_counter()
    s = sim.run_scenario(config("1a,2a,3b,4c"), runs=1000)
    mgr = s.cell("MGR_ATE", v.DELTA_ATE).cp
    gr = s.cell("GR", v.DELTA_ATE).cp
    assert 0.930 <= mgr <= 0.965
    assert mgr - gr >= 0.03
    assert time.perf_counter() - start < 180


@pytest.mark.criterion(8, "extreme individual-RD scenario")
@pytest.mark.parametrize("regime", ["3a", "3b", "3c"])
def test_extreme_scenario(regime):
    start = time.perf_counter()
    c = config(f"1a,2a,{regime},extreme")
    truth = sim.build_truth(c)
    lam = sim.lambda_table(truth)
    batch = sim.simulate_replicates(truth, c.n, 1000, c.run_seed, lambda_spec=lam)
    assert np.all(batch.stats[:, kernels.MGR_MH] == 0.0)
    assert np.all(batch.stats[:, kernels.GR] == 0.0)
    for r in range(0, 1000, 100):
        ds = tables.aggregate_subjects(sim.sample_trial_individual_rd(lam, truth.rho, truth.pi1, c.n, r))
        assert v.var_mgr_mh(ds).variance == 0.0
        assert v.var_gr(ds).variance == 0.0
    cp = sim.summarize_batch(c, truth, batch).cell("MGR_ATE", v.DELTA_ATE).cp
    assert 0.92 <= cp <= 0.97
    assert time.perf_counter() - start < 180


@pytest.mark.criterion(9, "MH test type-I error under the sharp null")
def test_sharp_null_calibration():
    start = time.perf_counter()
    base = sim.build_truth(config("1a,2a,3b,4b"))
    null = v.TrueParameters(base.rho, base.pi1, base.p0, base.p0)
    batch = sim.simulate_replicates(null, 500, 2000, 31)
    chi2 = batch.stats[:, kernels.MH_CHI2]
    assert np.isfinite(chi2).all()
    crit = v.normal_quantile(0.975) ** 2
    assert 0.03 <= float(np.mean(chi2 > crit)) <= 0.07
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(10, "simulate output independent of thread count")
def test_thread_count_determinism(tmp_path):
    outputs = []
    for threads in ("1", "8"):
        d = tmp_path / f"t{threads}"
        code = cli.main(["simulate", "--factors", "1c,2a,3b,4c", "--runs", "400",
                         "--threads", threads, "--bootstrap", "10", "--out", str(d)])
        assert code == 0
        outputs.append((d / "simulation.json").read_bytes())
    assert outputs[0] == outputs[1]
    assert math.isfinite(sim.summaries_from_json(outputs[0].decode())[0].truth_ate)
