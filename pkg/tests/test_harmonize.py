"""Labour-share estimation, cost splitting, and accounting cleanup."""

import numpy as np
import pandas as pd
import pytest

from prodnet.errors import (
    EmptySectorWindowError,
    RatioOutOfRangeError,
    UncoveredSectorYearError,
    ZeroDenominatorError,
)
from prodnet.harmonize import (
    LabourShareModel,
    METHODS,
    clean_accounting,
    cogs_labour_share,
    firm_value_added,
    fit_labour_share,
    heldout_rmse,
    impute_demand_and_gfcf,
    split_cogs,
)


def make_panel(rows):
    defaults = dict(revenue=1000.0, ebit=10.0, depamort=5.0)
    return pd.DataFrame([{**defaults, **r} for r in rows])


def steady_panel(alpha_by_sector, years, firms_per_sector=2, pool=100.0):
    rows = []
    for sector, alpha in alpha_by_sector.items():
        for i in range(firms_per_sector):
            size = pool * (i + 1)
            for year in years:
                rows.append(dict(firm=f"{sector}{i}", year=year, sector=sector,
                                 cogs=(1 - alpha) * size, labour=alpha * size))
    return make_panel(rows)


class TestLabourShare:
    def test_basic_ratios(self):
        assert cogs_labour_share(10.0, 90.0) == pytest.approx(0.1)
        assert cogs_labour_share(0.0, 50.0) == 0.0
        assert cogs_labour_share(7.0, 7.0) == pytest.approx(0.5)

    def test_zero_pool_rejected(self):
        with pytest.raises(ZeroDenominatorError):
            cogs_labour_share(0.0, 0.0)

    def test_array_input(self):
        out = cogs_labour_share(np.array([10.0, 30.0]), np.array([90.0, 70.0]))
        assert out == pytest.approx([0.1, 0.3])


class TestFitLabourShare:
    def hand_panel(self):
        # firm f1 discloses alpha=0.1 in all three years, f2 only in the
        # last year with alpha=0.2 and a larger cost pool
        rows = [dict(firm="f1", year=y, sector="A", cogs=90.0, labour=10.0)
                for y in (2010, 2011, 2012)]
        rows.append(dict(firm="f2", year=2012, sector="A",
                         cogs=120.0, labour=30.0))
        return make_panel(rows)

    def test_methods_disagree_by_design(self):
        panel = self.hand_panel()
        got = {m: fit_labour_share(panel, m).share(["A"], [2012])[0]
               for m in METHODS}
        assert got["1"] == pytest.approx(0.15)
        assert got["2a"] == pytest.approx(0.35 / 3)
        assert got["2b"] == pytest.approx(0.12)
        # yearly means 0.1, 0.1, 0.15 weighted by pools 100, 100, 250
        assert got["3"] == pytest.approx(57.5 / 450)

    def test_methods_agree_on_constant_shares(self):
        panel = steady_panel({"A": 0.25, "B": 0.5}, range(2010, 2014))
        for m in METHODS:
            model = fit_labour_share(panel, m)
            assert model.share(["A"], [2013])[0] == pytest.approx(0.25, abs=1e-12)
            assert model.share(["B"], [2011])[0] == pytest.approx(0.5, abs=1e-12)

    def test_single_firm_degenerate(self):
        rows = [dict(firm="f", year=y, sector="A", cogs=80.0, labour=20.0)
                for y in (2010, 2011, 2012)]
        for m in METHODS:
            model = fit_labour_share(make_panel(rows), m)
            assert model.share(["A"], [2012])[0] == pytest.approx(0.2)

    def test_early_years_backfilled(self):
        rows = [dict(firm="f", year=y, sector="A", cogs=60.0, labour=40.0)
                for y in (2010, 2011, 2012, 2013)]
        model = fit_labour_share(make_panel(rows), "2b")
        # 2010 and 2011 precede the first estimable window end
        assert model.share(["A", "A"], [2010, 2011]) == pytest.approx([0.4, 0.4])

    def test_interior_gap_linearly_interpolated(self):
        rows = [dict(firm="f1", year=2009, sector="A", cogs=90.0, labour=10.0),
                dict(firm="f2", year=2015, sector="A", cogs=70.0, labour=30.0)]
        # undisclosed rows keep every year in the panel range
        rows += [dict(firm="u", year=y, sector="A", cogs=50.0, labour=np.nan)
                 for y in range(2009, 2016)]
        model = fit_labour_share(make_panel(rows), "2b")
        years = list(range(2009, 2016))
        got = model.share(["A"] * len(years), years)
        # raw estimates exist at 2011 (0.1) and 2015 (0.3) only
        expect = [0.1, 0.1, 0.1, 0.15, 0.2, 0.25, 0.3]
        assert got == pytest.approx(expect, abs=1e-12)

    def test_sector_without_disclosures_rejected(self):
        rows = [dict(firm="a", year=2010, sector="A", cogs=50.0, labour=50.0),
                dict(firm="b", year=2010, sector="B", cogs=50.0, labour=np.nan)]
        with pytest.raises(EmptySectorWindowError):
            fit_labour_share(make_panel(rows), "2b")

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            fit_labour_share(self.hand_panel(), "4")

    def test_lookup_errors(self):
        model = fit_labour_share(self.hand_panel(), "2b")
        with pytest.raises(UncoveredSectorYearError):
            model.share(["Z"], [2012])
        with pytest.raises(UncoveredSectorYearError):
            model.share(["A"], [2031])

    def test_shares_stay_in_unit_interval(self):
        panel = steady_panel({"A": 0.0, "B": 1.0}, range(2010, 2013))
        for m in METHODS:
            table = fit_labour_share(panel, m).shares
            assert float(table.min().min()) >= 0.0
            assert float(table.max().max()) <= 1.0


class TestSplitCogs:
    def test_hand_split_and_passthrough(self):
        model = LabourShareModel("2b", 3, pd.DataFrame(
            {"A": [0.25]}, index=pd.Index([2012], name="year")))
        panel = make_panel([
            dict(firm="u", year=2012, sector="A", cogs=100.0, labour=np.nan),
            dict(firm="d", year=2012, sector="A", cogs=80.0, labour=20.0),
        ])
        out = split_cogs(panel, model)
        assert out.loc[0, "labour_hat"] == pytest.approx(25.0)
        assert out.loc[0, "intermediate_hat"] == pytest.approx(75.0)
        assert out.loc[1, "labour_hat"] == 20.0
        assert out.loc[1, "intermediate_hat"] == 80.0

    def test_zero_share_means_all_intermediate(self):
        model = LabourShareModel("1", 3, pd.DataFrame(
            {"A": [0.0]}, index=pd.Index([2012], name="year")))
        panel = make_panel([dict(firm="u", year=2012, sector="A",
                                 cogs=55.0, labour=np.nan)])
        out = split_cogs(panel, model)
        assert out.loc[0, "labour_hat"] == 0.0
        assert out.loc[0, "intermediate_hat"] == 55.0

    def test_pool_conserved_exactly(self):
        rng = np.random.default_rng(4)
        alpha = rng.uniform(0.0, 1.0)
        model = LabourShareModel("3", 3, pd.DataFrame(
            {"A": [alpha]}, index=pd.Index([2012], name="year")))
        panel = make_panel([dict(firm=f"u{i}", year=2012, sector="A",
                                 cogs=float(c), labour=np.nan)
                            for i, c in enumerate(rng.uniform(1, 1e9, 200))])
        out = split_cogs(panel, model)
        total = out["labour_hat"] + out["intermediate_hat"]
        assert np.array_equal(total.to_numpy(), panel["cogs"].to_numpy())

    def test_uncovered_sector_rejected(self):
        model = LabourShareModel("2b", 3, pd.DataFrame(
            {"A": [0.3]}, index=pd.Index([2012], name="year")))
        panel = make_panel([dict(firm="u", year=2012, sector="B",
                                 cogs=10.0, labour=np.nan)])
        with pytest.raises(UncoveredSectorYearError):
            split_cogs(panel, model)


class TestValueAdded:
    def test_sum_of_components(self):
        assert firm_value_added(10.0, 5.0, 2.0) == pytest.approx(17.0)
        assert firm_value_added(0.0, 0.0, 0.0) == 0.0

    def test_negative_ebit_passes_through(self):
        assert firm_value_added(10.0, -4.0, 1.0) == pytest.approx(7.0)


class TestImputeDemandAndGfcf:
    def test_hand_values(self):
        f, k, d = impute_demand_and_gfcf(np.array([100.0]), np.array([0.2]),
                                         np.array([0.1]))
        assert (f[0], k[0], d[0]) == (pytest.approx(20.0), pytest.approx(10.0),
                                      pytest.approx(70.0))

    def test_zero_ratios_all_intermediate(self):
        f, k, d = impute_demand_and_gfcf(np.array([50.0]), np.array([0.0]),
                                         np.array([0.0]))
        assert f[0] == 0.0 and k[0] == 0.0 and d[0] == 50.0

    def test_negative_ratio_clamped_with_warning(self):
        with pytest.warns(UserWarning):
            f, k, d = impute_demand_and_gfcf(np.array([50.0]),
                                             np.array([0.2]),
                                             np.array([-0.3]))
        assert k[0] == 0.0 and d[0] == pytest.approx(40.0)

    def test_excessive_ratios_rejected(self):
        with pytest.raises(RatioOutOfRangeError):
            impute_demand_and_gfcf(np.array([1.0]), np.array([1.2]),
                                   np.array([0.0]))
        with pytest.raises(RatioOutOfRangeError):
            impute_demand_and_gfcf(np.array([1.0]), np.array([0.7]),
                                   np.array([0.4]))

    def test_identity_exact_on_random_input(self):
        rng = np.random.default_rng(11)
        q = rng.uniform(1.0, 1e8, 500)
        fr = rng.uniform(0.0, 0.6, 500)
        kr = rng.uniform(0.0, 0.4, 500)
        f, k, d = impute_demand_and_gfcf(q, fr, kr)
        assert np.array_equal((d + f) + k, q)
        assert (d >= 0).all() and (f >= 0).all() and (k >= 0).all()

    def test_identity_exact_at_boundary(self):
        q = np.array([37.0, 1e9 + 1])
        f, k, d = impute_demand_and_gfcf(q, np.array([0.7, 0.5]),
                                         np.array([0.3, 0.5]))
        assert np.array_equal((d + f) + k, q)
        assert (d >= 0).all()


def accounting_frame(rows):
    base = dict(revenue=100.0, intermediate_hat=60.0, labour_hat=20.0,
                value_added=30.0)
    return pd.DataFrame([{**base, **r} for r in rows])


class TestCleanAccounting:
    def test_consistent_rows_untouched(self):
        frame = accounting_frame([{}, {"revenue": 95.0}])
        report = clean_accounting(frame)
        assert report.n_corrected == 0
        assert len(report.dropped) == 0
        assert (report.frame["flag"] == 0).all()
        assert np.array_equal(report.frame["intermediate_hat"].to_numpy(),
                              frame["intermediate_hat"].to_numpy())

    def test_double_count_repaired(self):
        # labour 20 appears in both intermediate costs and value added
        frame = accounting_frame([{"intermediate_hat": 80.0}])
        report = clean_accounting(frame)
        assert report.n_corrected == 1
        assert len(report.dropped) == 0
        row = report.frame.iloc[0]
        assert row["intermediate_hat"] == pytest.approx(60.0)
        assert row["flag"] == 1
        assert row["revenue"] - row["intermediate_hat"] - row["value_added"] >= 0

    def test_unrepairable_row_dropped(self):
        frame = accounting_frame([{"intermediate_hat": 95.0, "labour_hat": 5.0}])
        report = clean_accounting(frame)
        assert len(report.frame) == 0
        assert len(report.dropped) == 1
        assert report.dropped_fraction == 1.0

    def test_nonpositive_value_added_dropped(self):
        frame = accounting_frame([{"value_added": 0.0}])
        report = clean_accounting(frame)
        assert len(report.frame) == 0

    def test_idempotent(self):
        frame = accounting_frame([
            {},
            {"intermediate_hat": 80.0},
            {"intermediate_hat": 95.0, "labour_hat": 5.0},
            {"value_added": -1.0},
        ])
        first = clean_accounting(frame)
        second = clean_accounting(first.frame)
        assert second.n_corrected == 0
        assert len(second.dropped) == 0
        pd.testing.assert_frame_equal(first.frame, second.frame)


class TestHeldoutSelection:
    def size_alpha_panel(self):
        rows = []
        for year in range(2010, 2015):
            for i in range(12):
                rows.append(dict(firm=f"s{i}", year=year, sector="A",
                                 cogs=60.0, labour=40.0))
            for i in range(3):
                rows.append(dict(firm=f"b{i}", year=year, sector="A",
                                 cogs=18000.0, labour=2000.0))
        return make_panel(rows)

    def test_pooled_method_wins_on_size_skewed_panel(self):
        # big firms have low labour shares; only the ratio-of-sums method
        # tracks them, and they dominate the cost-weighted error
        panel = self.size_alpha_panel()
        for seed in (0, 1, 2):
            scores = heldout_rmse(panel, seed=seed)
            best = min(scores, key=scores.get)
            assert best == "2b"
            assert scores["2b"] < 0.5 * min(scores[m] for m in ("1", "2a", "3"))

    def test_deterministic_given_seed(self):
        panel = self.size_alpha_panel()
        assert heldout_rmse(panel, seed=7) == heldout_rmse(panel, seed=7)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            heldout_rmse(self.size_alpha_panel(), holdout_fraction=1.5)
