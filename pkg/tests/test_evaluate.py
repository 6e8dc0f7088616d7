import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptive_epf.backtest import ForecastTable
from adaptive_epf.dataio import HOURS, MarketDataset
from adaptive_epf.errors import (DateMismatch, DegenerateVariance, DivisionByZero,
                                 MissingNaiveHistory)
from adaptive_epf.evaluate import (MetricsReport, compute_metrics, dm_statistic,
                                   dm_test_multivariate, ensemble_mean, format_ratio_table,
                                   metrics_table, monthly_mae, performance_ratio,
                                   preset_ensemble, preset_members)

from conftest import day_range, random_dataset


def table_for(ds, first, values, label="M"):
    n = len(values)
    return ForecastTable(ds.days[first:first + n], values, label)


def naive_table(ds, first, n, label="naive"):
    return table_for(ds, first, np.asarray(ds.price)[first - 7:first - 7 + n], label)


def test_hand_example():
    days = day_range("2022-01-01", 8)
    price = np.zeros((8, HOURS))
    price[0] = 90.0
    price[7] = 100.0
    ds = MarketDataset("custom", days, price, price, price)
    r = compute_metrics(table_for(ds, 7, np.full((1, HOURS), 110.0)), ds)
    assert r.MAE == 10.0
    assert r.RMSE == 10.0
    assert r.sMAPE == pytest.approx(2 * 10 / 210, abs=0)
    assert round(r.sMAPE, 5) == 0.09524
    assert r.rMAE == 1.0
    assert r.n_days == 1


def test_perfect_forecast(rng):
    ds = random_dataset(rng, 40)
    r = compute_metrics(table_for(ds, 20, np.asarray(ds.price)[20:30]), ds)
    assert (r.MAE, r.RMSE, r.sMAPE, r.rMAE) == (0.0, 0.0, 0.0, 0.0)


def test_naive_has_rmae_one(rng):
    for seed in range(5):
        ds = random_dataset(np.random.default_rng(seed), 50)
        assert compute_metrics(naive_table(ds, 7, 43), ds).rMAE == 1.0


def test_smape_zero_over_zero_contributes_zero():
    days = day_range("2022-01-01", 8)
    price = np.ones((8, HOURS))
    price[7, :12] = 0.0
    ds = MarketDataset("custom", days, price, price, price)
    pred = np.ones((1, HOURS))
    pred[0, :12] = 0.0
    assert compute_metrics(table_for(ds, 7, pred), ds).sMAPE == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_mae_below_rmse_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 30)
    r = compute_metrics(table_for(ds, 10, rng.normal(50, 10, (20, HOURS))), ds)
    assert 0 <= r.MAE <= r.RMSE + 1e-12
    assert r.sMAPE >= 0 and r.rMAE >= 0


def test_alignment_errors(rng):
    ds = random_dataset(rng, 30)
    with pytest.raises(MissingNaiveHistory):
        compute_metrics(table_for(ds, 3, np.zeros((2, HOURS))), ds)
    late = ForecastTable(ds.days[-1:] + 1, np.zeros((1, HOURS)), "late")
    with pytest.raises(DateMismatch):
        compute_metrics(late, ds)


def test_monthly_examples():
    days = day_range("2022-01-01", 90)  # Jan, Feb, Mar
    price = np.zeros((90, HOURS))
    ds = MarketDataset("custom", days, price, price, price)
    t = ForecastTable(days, np.full((90, HOURS), 2.5), "c")
    m = monthly_mae(t, ds)
    assert [k for k, _ in m] == ["2022-01", "2022-02", "2022-03"]
    assert all(v == 2.5 for _, v in m)

    n = 31 + 28
    err = np.where(np.arange(n) < 31, 1.0, 3.0)[:, None] * np.ones(HOURS)
    t2 = ForecastTable(days[:n], err, "two")
    days_full = day_range("2021-12-20", 12 + 90)
    p2 = np.zeros((len(days_full), HOURS))
    ds2 = MarketDataset("custom", days_full, p2, p2, p2)
    m2 = monthly_mae(t2, ds2)
    assert m2 == [("2022-01", 1.0), ("2022-02", 3.0)]
    overall = compute_metrics(t2, ds2).MAE
    assert overall == pytest.approx((31 + 3 * 28) / 59, abs=1e-12)


def test_monthly_aggregates_to_overall(rng):
    ds = random_dataset(rng, 200)
    t = table_for(ds, 10, rng.normal(50, 10, (180, HOURS)))
    r = compute_metrics(t, ds, monthly=True)
    months = t.dates.astype("datetime64[M]")
    weights = [np.sum(months == np.datetime64(k)) for k, _ in r.monthly]
    agg = sum(w * v for w, (_, v) in zip(weights, r.monthly)) / sum(weights)
    assert abs(agg - r.MAE) <= 1e-9


def test_ensemble_examples(rng):
    days = day_range("2022-01-01", 5)
    a = ForecastTable(days, np.full((5, HOURS), 10.0), "A")
    b = ForecastTable(days, np.full((5, HOURS), 20.0), "B")
    e = ensemble_mean([a, b])
    np.testing.assert_array_equal(e.values, 15.0)
    assert e.label == "A+B"
    np.testing.assert_array_equal(ensemble_mean([a, a]).values, a.values)
    x = [ForecastTable(days, rng.normal(size=(5, HOURS)), str(i)) for i in range(4)]
    assert np.array_equal(ensemble_mean(x).values, ensemble_mean(x[::-1]).values)
    with pytest.raises(ValueError):
        ensemble_mean([a])
    with pytest.raises(DateMismatch):
        ensemble_mean([a, ForecastTable(days + 1, b.values, "C")])


def test_ensemble_mae_below_worst_member(rng):
    ds = random_dataset(rng, 60)
    members = [table_for(ds, 10, np.asarray(ds.price)[10:50] + rng.normal(s, 5, (40, HOURS)),
                         f"m{s}") for s in range(-3, 4)]
    ens = ensemble_mean(members)
    assert compute_metrics(ens, ds).MAE <= max(compute_metrics(m, ds).MAE for m in members)


def test_dm_identical_is_degenerate(rng):
    ds = random_dataset(rng, 40)
    t = table_for(ds, 10, rng.normal(size=(20, HOURS)))
    with pytest.raises(DegenerateVariance):
        dm_test_multivariate(t, t, ds)


def test_dm_formula_examples():
    rng = np.random.default_rng(42)
    delta = rng.normal(0.5, 1.0, 400)
    stat, p = dm_statistic(delta)
    assert stat == pytest.approx(np.sqrt(400) * delta.mean() / delta.std(ddof=1), rel=1e-14)
    assert abs(stat - 10) < 3
    assert p < 1e-12

    n = 250
    z = rng.normal(size=n)
    z = (z - z.mean()) / z.std(ddof=1)
    stat, p = dm_statistic(z + 1.645 / np.sqrt(n))
    assert stat == pytest.approx(1.645, rel=1e-12)
    assert abs(p - 0.05) <= 1e-4


def test_dm_antisymmetric_and_direction(rng):
    ds = random_dataset(rng, 80)
    actual = np.asarray(ds.price)[10:70]
    good = table_for(ds, 10, actual + rng.normal(0, 1, actual.shape), "good")
    bad = table_for(ds, 10, actual + rng.normal(0, 5, actual.shape), "bad")
    ab = dm_test_multivariate(bad, good, ds)
    ba = dm_test_multivariate(good, bad, ds)
    assert ab.dm_statistic == -ba.dm_statistic
    assert ab.b_better(0.01) and not ba.b_better(0.10)
    assert ab.p_value == pytest.approx(1 - __import__("scipy").stats.norm.cdf(ab.dm_statistic))
    assert ab.n == 60
    assert json.loads(ab.to_json())["model_b_label"] == "good"


def test_performance_ratio_examples():
    x = MetricsReport("x", 20.0, 30.0, 0.2, 0.5, 10)
    y = MetricsReport("y", 18.27, 25.0, 0.1, 0.4, 10)
    assert performance_ratio(x, x) == {"MAE": 1.0, "RMSE": 1.0, "sMAPE": 1.0, "rMAE": 1.0}
    r = performance_ratio(x, y)
    assert r["MAE"] == pytest.approx(1.0947, abs=1e-4)
    back = performance_ratio(y, x)
    for k in r:
        assert r[k] * back[k] == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(DivisionByZero):
        performance_ratio(x, MetricsReport("z", 0.0, 1.0, 1.0, 1.0, 10))
    with pytest.raises(DateMismatch):
        performance_ratio(x, MetricsReport("w", 1.0, 1.0, 1.0, 1.0, 11))


def test_presets_pick_members():
    labels = ["LEAR-56", "LEAR-84", "LEAR-364", "LEAR-728", "LEAR-ALL",
              "ASLEAR-56", "ASLEAR-84", "ASLEAR-364", "ASLEAR-728", "ASLEAR-ALL"]
    pick = lambda p: [labels[i] for i in preset_members(p, labels, "OMIE-SP")]
    assert pick("ens-lear") == ["LEAR-56", "LEAR-84", "LEAR-364", "LEAR-728"]
    assert pick("ens1-aslear") == ["ASLEAR-364", "ASLEAR-728", "ASLEAR-ALL"]
    assert pick("ens2-aslear") == labels[5:]
    with pytest.raises(ValueError):
        preset_members("ens-lear", labels[5:], "OMIE-SP")
    days = day_range("2022-01-01", 3)
    tables = [ForecastTable(days, np.full((3, HOURS), float(i)), lab)
              for i, lab in enumerate(labels)]
    e1 = preset_ensemble("ens1-aslear", tables, "OMIE-SP")
    assert e1.label == "Ens1-ASLEAR"
    np.testing.assert_allclose(e1.values, np.mean([7, 8, 9]))
    both = preset_ensemble("lear-aslear", tables, "OMIE-SP")
    assert both.label == "LEAR-ASLEAR"
    np.testing.assert_allclose(both.values, (np.mean([0, 1, 2, 3]) + 8.0) / 2)


def test_ratio_table_layout():
    ratios = {"EPEX-BE": {"56": {"MAE": 1.29463, "RMSE": 2.4396, "sMAPE": 1.0986,
                                 "rMAE": 1.29463}}}
    text = format_ratio_table(ratios, ["56", "84"])
    lines = text.splitlines()
    assert lines[0].split() == ["Market", "Metric", "56", "84"]
    assert lines[2].split() == ["EPEX-BE", "MAE", "1.2946", "-"]
    assert lines[3].split() == ["RMSE", "2.4396", "-"]
    assert len(lines) == 6


def test_metrics_serialisation():
    r = MetricsReport("ASLEAR-ALL", 1.0, 2.0, 0.1, 0.5, 3, [("2022-01", 1.0)])
    d = json.loads(r.to_json())
    assert d["type"] == "metrics" and d["monthly"] == [["2022-01", 1.0]]
    text = metrics_table([r])
    assert "ASLEAR-ALL" in text and "0.5000" in text
