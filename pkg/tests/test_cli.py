import json

import numpy as np
import pytest

from adaptive_epf.backtest import read_forecast_table
from adaptive_epf.cli import main, sha256_file
from adaptive_epf.dataio import save_dataset
from adaptive_epf.synthetic import make_market

FAST = ["--lambda-grid", "20", "--quiet"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    ds = make_market("2021-01-01", "2021-07-20", market_id="custom", seed=5, regime_break=None,
                     test_start="2021-07-18", test_end="2021-07-20")
    return save_dataset(ds, d / "market.csv")


@pytest.fixture(scope="module")
def forecasts(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("fc")
    paths = {}
    for name, extra in [("as_all", ["--window", "all"]), ("as_84", ["--window", "84"]),
                        ("lear_84", ["--window", "84", "--scheme", "arcsinh"])]:
        p = out / f"{name}.csv"
        assert main(["backtest", "--data", str(data), "--out", str(p)] + extra + FAST) == 0
        paths[name] = p
    return paths


def test_validate_ok(data, capsys):
    assert main(["validate", "--data", str(data)]) == 0
    text = capsys.readouterr().out
    assert "rows            4824" in text
    assert "2021-01-01..2021-07-20" in text


def test_validate_gap_and_missing_file(tmp_path, capsys):
    lines = ["timestamp,price,exog1,exog2"]
    for day in ("2021-01-01", "2021-01-03"):
        lines += [f"{day}T{h:02d}:00,1,1,1" for h in range(24)]
    bad = tmp_path / "gap.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["validate", "--data", str(bad)]) == 2
    assert "2021-01-02" in capsys.readouterr().err
    assert main(["validate", "--data", str(tmp_path / "absent.csv")]) == 1


def test_registry_test_period_default(tmp_path, capsys):
    ds = make_market("2020-12-01", "2023-05-31", market_id="OMIE-SP", seed=1)
    path = save_dataset(ds, tmp_path / "omie.csv", manifest=False)
    assert main(["validate", "--data", str(path), "--market", "OMIE-SP"]) == 0
    assert "2022-01-01..2023-05-31 (516 days)" in capsys.readouterr().out


def test_data_dir_environment(data, monkeypatch, capsys):
    monkeypatch.setenv("ADAPTIVE_EPF_DATA_DIR", str(data.parent))
    monkeypatch.chdir(data.parent.parent)
    assert main(["validate", "--data", data.name]) == 0


def test_backtest_writes_csv_and_manifest(forecasts, data):
    t = read_forecast_table(forecasts["as_all"])
    assert len(t) == 3 and t.label == "ASLEAR-ALL"
    man = json.loads(forecasts["as_all"].with_name("as_all.csv.manifest.json").read_text())
    assert man["inputs"][str(data)] == sha256_file(data)
    assert man["config"]["window"] == "ALL" and man["config"]["v"] == 7
    assert man["per_day_seconds"]["n"] == 3
    assert man["output_sha256"] == sha256_file(forecasts["as_all"])


def test_backtest_rerun_is_bit_identical(forecasts, data, tmp_path):
    again = tmp_path / "again.csv"
    assert main(["backtest", "--data", str(data), "--window", "all", "--out", str(again)]
                + FAST) == 0
    assert sha256_file(again) == sha256_file(forecasts["as_all"])


def test_backtest_insufficient_history_leaves_nothing(data, tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["backtest", "--data", str(data), "--window", "364", "--out", str(out)]
                + FAST) == 2
    assert "InsufficientHistory" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_backtest_preset_ablation(data, tmp_path):
    out = tmp_path / "abl"
    assert main(["backtest", "--data", str(data), "--preset", "aslear-nofilter",
                 "--window", "56,84", "--out", str(out)] + FAST) == 0
    assert sorted(p.name for p in out.glob("*.csv")) == ["ASLEAR-56-nofilter.csv",
                                                        "ASLEAR-84-nofilter.csv"]


def test_backtest_filter_flag(data, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["backtest", "--data", str(data), "--window", "84", "--scheme", "arcsinh",
                 "--filter-outliers", "true", "--test-end", "2021-07-18", "--out", str(out)]
                + FAST) == 0
    t = read_forecast_table(out)
    assert t.label == "LEAR-84-filtered" and len(t) == 1


def test_metrics_commands(forecasts, data, capsys):
    assert main(["metrics", "--data", str(data), "--forecasts", str(forecasts["as_all"])]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["Model", "Days", "MAE", "RMSE", "sMAPE", "rMAE"]
    assert out[2].split()[0] == "ASLEAR-ALL"

    assert main(["metrics", "--data", str(data), "--forecasts", str(forecasts["as_84"]),
                 "--ratio-against", str(forecasts["as_84"]), "--format", "jsonl"]) == 0
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    ratio = [r for r in recs if r["type"] == "ratio"][0]
    assert all(ratio[m] == 1.0 for m in ("MAE", "RMSE", "sMAPE", "rMAE"))

    assert main(["metrics", "--data", str(data), "--forecasts", str(forecasts["as_84"]),
                 "--monthly"]) == 0
    assert "2021-07" in capsys.readouterr().out


def test_metrics_misaligned(forecasts, data, tmp_path):
    other = make_market("2021-01-01", "2021-05-01", market_id="custom", seed=5)
    path = save_dataset(other, tmp_path / "short.csv")
    assert main(["metrics", "--data", str(path), "--forecasts", str(forecasts["as_all"])]) == 2


def test_ensemble_commands(forecasts, tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert main(["ensemble", "--inputs", str(forecasts["as_all"]), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["ensemble", "--inputs", f"{forecasts['as_all']},{forecasts['as_84']}",
                 "--out", str(out)]) == 0
    e = read_forecast_table(out)
    a, b = read_forecast_table(forecasts["as_all"]), read_forecast_table(forecasts["as_84"])
    np.testing.assert_allclose(e.values, (a.values + b.values) / 2, rtol=1e-15)
    assert out.with_name("e.csv.manifest.json").exists()


def test_ensemble_preset_label(tmp_path):
    from adaptive_epf.backtest import ForecastTable
    days = np.arange(np.datetime64("2022-01-01"), np.datetime64("2022-01-04"))
    paths = []
    for w in (364, 728, "ALL"):
        p = tmp_path / f"{w}.csv"
        ForecastTable(days, np.ones((3, 24)), f"ASLEAR-{w}").to_csv(p)
        paths.append(str(p))
    out = tmp_path / "ens1.csv"
    assert main(["ensemble", "--inputs", ",".join(paths), "--preset", "ens1-aslear",
                 "--market", "OMIE-SP", "--out", str(out)]) == 0
    assert read_forecast_table(out).label == "Ens1-ASLEAR"


def test_dm_commands(forecasts, data, capsys):
    a, b = str(forecasts["lear_84"]), str(forecasts["as_84"])
    assert main(["dm", "--data", str(data), "--a", a, "--b", a]) == 3
    assert "DegenerateVariance" in capsys.readouterr().err
    assert main(["dm", "--data", str(data), "--a", a, "--b", b]) == 0
    text = capsys.readouterr().out
    for alpha in ("0.01", "0.05", "0.10"):
        assert f"alpha = {alpha}:" in text
    assert "DM statistic" in text
