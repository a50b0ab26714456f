import numpy as np
import pytest

from ngbforecast.dataset import RawSeries, STEP


def make_series(n, start="2020-03-02T00:00", power=None, seed=0, step=STEP, extra=None):
    """Contiguous quarter-hour series with random weather columns."""
    rng = np.random.default_rng(seed)
    ts = np.datetime64(start, "m") + np.arange(n) * step
    if power is None:
        power = rng.uniform(0, 1, n)
    weather = {
        "temperature": rng.normal(10, 3, n),
        "humidity": rng.uniform(30, 90, n),
        "precipitation": rng.exponential(0.1, n),
        "wind_speed": rng.uniform(0, 8, n),
        "radiation": rng.uniform(0, 900, n),
    }
    weather.update(extra or {})
    return RawSeries(ts, np.asarray(power, dtype=float), weather)


def hetero_data(n, seed):
    """y = sin(x0) + (0.2 + 0.3 x1^2) eps with x0, x1 ~ U(-2, 2); returns X, y, true sd."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 2))
    sd = 0.2 + 0.3 * X[:, 1] ** 2
    y = np.sin(X[:, 0]) + sd * rng.standard_normal(n)
    return X, y, sd


@pytest.fixture
def series_factory():
    return make_series
