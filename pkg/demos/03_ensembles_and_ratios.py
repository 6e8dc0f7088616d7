"""
Ensembles and performance ratios
================================

Averaging the forecasts of several calibration windows usually beats each
window on its own. The named groups follow the usual LEAR practice: the LEAR
ensemble leaves out the all-history window, the first ASLEAR ensemble keeps
only the long windows and everything else is averaged from those.

Performance ratios (metric of one run over metric of another) make
ablations easy to read: above 1 means the first run is worse.
"""

import numpy as np

from adaptive_epf.backtest import BacktestConfig, run_suite
from adaptive_epf.evaluate import (compute_metrics, format_ratio_table, metrics_table,
                                   performance_ratio, preset_ensemble)
from adaptive_epf.synthetic import inject_outliers, make_market

ds = make_market("2019-01-01", "2022-01-07", market_id="OMIE-SP", seed=9,
                 test_start="2022-01-01", test_end="2022-01-07")

windows = (56, 84, 364, 728, "ALL")
configs = ([BacktestConfig(market_id="OMIE-SP", scheme="median_arcsinh", window=w)
            for w in windows]
           + [BacktestConfig(market_id="OMIE-SP", window=w) for w in windows])
suite = run_suite(ds, configs)
print("failed configurations:", suite.errors or "none")

groups = [preset_ensemble(p, suite.tables, "OMIE-SP")
          for p in ("ens-lear", "ens1-aslear", "ens2-aslear", "lear-aslear")]
print(metrics_table([compute_metrics(t, ds) for t in suite.tables + groups]))

# Outlier-filter ablation on a market with spikes, short windows only.
rng = np.random.default_rng(1)
spiky = ds
for day in ds.days[200::9]:
    spiky = inject_outliers(spiky, [day], [int(rng.integers(24))], 900.0)
ratios = {}
for w in (56, 84):
    on = run_suite(spiky, [BacktestConfig(market_id="OMIE-SP", window=w)]).tables[0]
    off = run_suite(spiky, [BacktestConfig(market_id="OMIE-SP", window=w,
                                           filter_outliers=False)]).tables[0]
    ratios[str(w)] = performance_ratio(compute_metrics(off, spiky), compute_metrics(on, spiky))
print()
print("no filter / filter")
print(format_ratio_table({"OMIE-SP": ratios}, ["56", "84"]))
