import numpy as np
import pytest

from adaptive_epf.dataio import HOURS, MarketDataset


def write_csv(path, days, price, exog1=None, exog2=None, rows=None):
    """Write a market CSV from daily matrices, or from explicit ``rows``."""
    lines = ["timestamp,price,exog1,exog2"]
    if rows is None:
        price = np.asarray(price)
        exog1 = np.ones(price.shape) if exog1 is None else exog1
        exog2 = np.ones(price.shape) if exog2 is None else exog2
        rows = []
        for i, day in enumerate(days):
            for h in range(HOURS):
                rows.append((f"{day}T{h:02d}:00", price[i, h], exog1[i, h], exog2[i, h]))
    for r in rows:
        lines.append(",".join(str(x) for x in r))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def day_range(start, n):
    return np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_market():
    """About 200 days of synthetic market with a 3-day test period."""
    from adaptive_epf.synthetic import make_market
    return make_market("2021-01-01", "2021-07-20", market_id="custom", seed=3,
                       regime_break=None, test_start="2021-07-18", test_end="2021-07-20")


def random_dataset(rng, n_days=60, start="2020-01-06", market_id="custom"):
    days = day_range(start, n_days)
    price = 50 + 10 * rng.standard_normal((n_days, HOURS))
    exog1 = 1000 + 100 * rng.standard_normal((n_days, HOURS))
    exog2 = 300 + 30 * rng.standard_normal((n_days, HOURS))
    return MarketDataset(market_id, days, price, exog1, exog2)
