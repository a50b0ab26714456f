"""Synthetic quarter-hourly PV park with co-generated weather observations.

Power follows a seasonal clear-sky bell over the day, attenuated by a
bounded autoregressive cloud process. The weather station sees a correlated
but not identical cloud field, so radiation is informative without being a
perfect proxy for power.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import RawSeries, STEP, is_day


@dataclass(frozen=True)
class SyntheticSpec:
    days: int = 700
    start: str = "2018-01-01"
    nominal_power: float = 3.2  # MW
    solar_noon: float = 13.25  # local clock hours
    day_length_mean: float = 12.2
    day_length_amp: float = 3.8
    peak_summer: float = 0.95
    peak_winter: float = 0.35
    bell_exponent: float = 1.3
    cloud_offset: float = 1.2  # larger means clearer skies on average
    cloud_ar: float = 0.97  # per 15-minute step
    cloud_sigma: float = 1.4
    cloud_day_sigma: float = 1.3
    cloud_noise: bool = True
    station_coherence: float = 0.85
    radiation_noise: float = 25.0  # W/m2
    temp_mean: float = 10.0
    temp_season_amp: float = 9.0
    temp_diurnal_amp: float = 4.0
    extra_noise_features: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _ar1(rng, n, phi, sigma):
    eps = rng.normal(0.0, sigma * np.sqrt(1.0 - phi * phi), size=n)
    out = np.empty(n)
    out[0] = rng.normal(0.0, sigma)
    for i in range(1, n):
        out[i] = phi * out[i - 1] + eps[i]
    return out


def clear_sky(ts, spec: SyntheticSpec) -> np.ndarray:
    """Clear-sky output fraction in [0, 1]; zero outside daylight and outside the day window."""
    ts = np.asarray(ts, dtype="datetime64[m]")
    day = ts.astype("datetime64[D]")
    doy = (day - day.astype("datetime64[Y]")).astype(int) + 1
    hour = (ts - day).astype("timedelta64[m]").astype(int) / 60.0
    season = np.sin(2.0 * np.pi * (doy - 80) / 365.0)
    length = spec.day_length_mean + spec.day_length_amp * season
    sunrise = spec.solar_noon - length / 2.0
    phase = (hour - sunrise) / length
    bell = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0) ** spec.bell_exponent
    peak = spec.peak_winter + (spec.peak_summer - spec.peak_winter) * (0.5 + 0.5 * season)
    return peak * bell * is_day(ts)


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> RawSeries:
    rng = np.random.default_rng(spec.seed)
    n = spec.days * 96
    ts = np.datetime64(spec.start, "m") + np.arange(n) * STEP
    day_index = np.arange(n) // 96
    cs = clear_sky(ts, spec)

    if spec.cloud_noise:
        regime = rng.normal(0.0, spec.cloud_day_sigma, size=spec.days)[day_index]
        latent = _ar1(rng, n, spec.cloud_ar, spec.cloud_sigma)
        local = _ar1(rng, n, spec.cloud_ar, spec.cloud_sigma)
        rho = spec.station_coherence
        cloud = _sigmoid(spec.cloud_offset + regime + latent)
        cloud_station = _sigmoid(spec.cloud_offset + regime + rho * latent + np.sqrt(1 - rho * rho) * local)
    else:
        rng.normal(size=spec.days)  # keep the stream layout stable
        cloud = np.ones(n)
        cloud_station = np.ones(n)

    day = ts.astype("datetime64[D]")
    doy = (day - day.astype("datetime64[Y]")).astype(int) + 1
    hour = (ts - day).astype("timedelta64[m]").astype(int) / 60.0
    season = np.sin(2.0 * np.pi * (doy - 80) / 365.0)

    irradiance = 1000.0 * cs * cloud_station
    radiation = np.maximum(irradiance + rng.normal(0.0, spec.radiation_noise, size=n) * (cs > 0), 0.0)
    temp = (spec.temp_mean + spec.temp_season_amp * season
            + spec.temp_diurnal_amp * np.sin(2.0 * np.pi * (hour - 9.0) / 24.0)
            + 4.0 * cs * cloud_station + _ar1(rng, n, 0.995, 2.0))
    humidity = np.clip(80.0 - 30.0 * cs * cloud_station - 0.8 * (temp - spec.temp_mean)
                       + _ar1(rng, n, 0.98, 6.0), 15.0, 100.0)
    wet = (cloud_station < 0.25) & (rng.random(n) < 0.3)
    precipitation = np.where(wet, rng.gamma(1.2, 0.4, size=n), 0.0)
    wind = np.exp(np.log(3.0) + _ar1(rng, n, 0.99, 0.45))

    cell_temp = temp + 25.0 * cs * cloud
    efficiency = 1.0 - 0.004 * (cell_temp - 25.0)
    power = np.clip(spec.nominal_power * cs * cloud * efficiency, 0.0, spec.nominal_power)

    weather = {
        "temperature": temp,
        "humidity": humidity,
        "precipitation": precipitation,
        "wind_speed": wind,
        "radiation": radiation,
    }
    for k in range(spec.extra_noise_features):
        weather[f"noise_{k + 1}"] = rng.normal(size=n)
    return RawSeries(ts, power, weather)
