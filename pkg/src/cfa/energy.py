"""Exogenous processes for the energy storage problem.

Demand and grid availability are deterministic seasonal curves.  Spot
prices are a clamped sinusoid plus Gaussian noise, and the rolling price
forecast is the realized path plus fresh ``N(0, sigma_f)`` noise per
forecast origin.  Renewable supply is a seasonal base profile perturbed by
a crossing-time error process: the sign of the error persists from one
period to the next with probability ``rho_cross`` and its magnitude is
folded Gaussian.  Renewable forecasts subtract ``sigma_f`` times a fresh
sign-persistent error sequence from the realized values.

Every generator takes a seed and splits it into independent streams with
:class:`numpy.random.SeedSequence`, so the realized path never depends on
``sigma_f``: changing forecast quality only changes the forecasts.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# child-stream indices of SeedSequence(seed).spawn(4)
_PRICE, _PRICE_FORECAST, _RENEWABLE, _RENEWABLE_FORECAST = range(4)


def demand(t, T):
    """``floor(max(0, 100 - 50 sin(5 pi t / T)))``; works on scalars and arrays."""
    v = np.maximum(0.0, 100.0 - 50.0 * np.sin(5.0 * np.pi * np.asarray(t, float) / T))
    # guard against 149.99999999 from rounding in sin
    out = np.floor(v + 1e-9)
    return float(out) if out.ndim == 0 else out


def grid_available(t, T, G_min, G_max):
    """``min(max(90 - 50 sin(5 pi t / 2T), G_min), G_max)``."""
    v = 90.0 - 50.0 * np.sin(5.0 * np.pi * np.asarray(t, float) / (2.0 * T))
    out = np.minimum(np.maximum(v, G_min), G_max)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GridModel:
    G_min: float = 40.0
    G_max: float = 140.0

    def __post_init__(self):
        if not 0 <= self.G_min <= self.G_max:
            raise ValueError("need 0 <= G_min <= G_max")

    def series(self, T):
        return grid_available(np.arange(T + 1), T, self.G_min, self.G_max)


@dataclass(frozen=True)
class PriceModel:
    P_min: float = -10.0
    P_max: float = 70.0
    mu_p: float = 0.0
    sigma_p: float = 5.0
    sigma_f: float = 0.0

    def __post_init__(self):
        if not self.P_min < self.P_max:
            raise ValueError("need P_min < P_max")
        if self.sigma_p < 0 or self.sigma_f < 0:
            raise ValueError("standard deviations must be non-negative")

    def mean(self, t, T):
        t = np.asarray(t, float)
        mid = 0.5 * (self.P_max + self.P_min)
        return mid - (self.P_max - self.P_min) * np.sin(5.0 * np.pi * t / (2.0 * T))


@dataclass(frozen=True)
class RenewableModel:
    """Seasonal base profile ``max(0, base_mean + base_amplitude sin(2 pi t / T))``
    with a crossing-time error of scale ``sigma_E``.

    Forecast errors have unit folded-Gaussian magnitude times
    ``1 + lead_growth * (lead - 1)`` and are multiplied by ``sigma_f``.
    """

    base_mean: float = 60.0
    base_amplitude: float = 40.0
    rho_cross: float = 0.9
    sigma_E: float = 10.0
    sigma_f: float = 0.0
    lead_growth: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.rho_cross < 1.0:
            raise ValueError("rho_cross must lie in (0, 1)")
        if self.sigma_E < 0 or self.sigma_f < 0 or self.lead_growth < 0:
            raise ValueError("scales must be non-negative")

    def base_profile(self, T):
        t = np.arange(T + 1, dtype=float)
        return np.maximum(0.0, self.base_mean + self.base_amplitude * np.sin(2.0 * np.pi * t / T))


def crossing_signs(n, rho, rng):
    """Sign sequence of length ``n`` that keeps its sign with probability ``rho``.

    Run lengths are geometric with mean ``1 / (1 - rho)``.
    """
    first = 1.0 if rng.random() < 0.5 else -1.0
    flips = rng.random(n - 1) >= rho if n > 1 else np.zeros(0, bool)
    parity = np.concatenate([[0], np.cumsum(flips)]) % 2
    return first * np.where(parity == 0, 1.0, -1.0)


def crossing_errors(n, rho, rng):
    """Sign-persistent errors with unit folded-Gaussian magnitude."""
    signs = crossing_signs(n, rho, rng)
    return signs * np.abs(rng.standard_normal(n))


def generate_prices(m: PriceModel, T, H, rng_real, rng_forecast=None):
    """Realized price series (length ``T+1``) and forecast matrix.

    ``F[t, t2]`` is the forecast made at ``t`` for period ``t2``; it is NaN
    outside ``t <= t2 <= t + H``.  When a single generator is passed, it
    drives both the path and the forecasts.
    """
    if rng_forecast is None:
        rng_forecast = rng_real
    t = np.arange(T + 1)
    if m.sigma_p == 0:
        noise = np.full(T + 1, m.mu_p)
    else:
        noise = rng_real.normal(m.mu_p, m.sigma_p, size=T + 1)
    P = np.clip(m.mean(t, T) + noise, m.P_min, m.P_max)
    F = np.full((T + 1, T + 1), np.nan)
    z = rng_forecast.standard_normal((T + 1, H))
    for o in range(T + 1):
        last = min(T, o + H)
        F[o, o] = P[o]
        k = last - o
        if k:
            F[o, o + 1:last + 1] = np.clip(P[o + 1:last + 1] + m.sigma_f * z[o, :k], m.P_min, m.P_max)
    return P, F


def generate_renewables(m: RenewableModel, T, H, rng_real, rng_forecast=None):
    """Realized renewable series and forecast matrix (same layout as prices)."""
    if rng_forecast is None:
        rng_forecast = rng_real
    eps = m.sigma_E * crossing_errors(T + 1, m.rho_cross, rng_real)
    E = np.maximum(0.0, m.base_profile(T) + eps)
    F = np.full((T + 1, T + 1), np.nan)
    growth = 1.0 + m.lead_growth * np.arange(H)
    for o in range(T + 1):
        eta = crossing_errors(H, m.rho_cross, rng_forecast) * growth if H else np.zeros(0)
        last = min(T, o + H)
        F[o, o] = E[o]
        k = last - o
        if k:
            F[o, o + 1:last + 1] = np.maximum(0.0, E[o + 1:last + 1] - m.sigma_f * eta[:k])
    return E, F


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One realization of the exogenous processes plus rolling forecasts."""

    E: np.ndarray
    P: np.ndarray
    D: np.ndarray
    G: np.ndarray
    F_E: np.ndarray
    F_P: np.ndarray
    seed: int
    H: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("E", "P", "D", "G", "F_E", "F_P"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self):
        return len(self.E) - 1

    def same_as(self, other: "SamplePath") -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True)
            for k in ("E", "P", "D", "G", "F_E", "F_P")
        ) and self.seed == other.seed and self.H == other.H

    # CSV bundle: one file per series, one per forecast matrix
    def to_csv_bundle(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "P", "D", "G"])
            for t in range(self.T + 1):
                w.writerow([t, repr(float(self.E[t])), repr(float(self.P[t])), repr(float(self.D[t])), repr(float(self.G[t]))])
        for name, F in (("forecast_E.csv", self.F_E), ("forecast_P.csv", self.F_P)):
            with open(d / name, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["origin"] + [f"t{j}" for j in range(self.T + 1)])
                for o in range(self.T + 1):
                    w.writerow([o] + ["" if math.isnan(v) else repr(float(v)) for v in F[o]])
        (d / "path.json").write_text(json.dumps({"seed": self.seed, "H": self.H, "T": self.T, **self.meta}, sort_keys=True))
        return d

    @classmethod
    def from_csv_bundle(cls, directory):
        d = Path(directory)
        info = json.loads((d / "path.json").read_text())
        with open(d / "series.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = {k: np.array([float(r[k]) for r in rows]) for k in ("E", "P", "D", "G")}
        mats = {}
        for key, name in (("F_E", "forecast_E.csv"), ("F_P", "forecast_P.csv")):
            with open(d / name, newline="") as fh:
                body = list(csv.reader(fh))[1:]
            mats[key] = np.array([[float(v) if v else np.nan for v in row[1:]] for row in body])
        meta = {k: v for k, v in info.items() if k not in ("seed", "H", "T")}
        return cls(seed=info["seed"], H=info["H"], meta=meta, **cols, **mats)


def sample_path(T, H, seed, prices: PriceModel, renewables: RenewableModel,
                grid: GridModel, sigma_f=None) -> SamplePath:
    """Draw one :class:`SamplePath`; ``sigma_f`` overrides both models' value."""
    if sigma_f is not None:
        prices = replace(prices, sigma_f=sigma_f)
        renewables = replace(renewables, sigma_f=sigma_f)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    P, F_P = generate_prices(prices, T, H, streams[_PRICE], streams[_PRICE_FORECAST])
    E, F_E = generate_renewables(renewables, T, H, streams[_RENEWABLE], streams[_RENEWABLE_FORECAST])
    t = np.arange(T + 1)
    return SamplePath(
        E=E, P=P, D=demand(t, T), G=grid.series(T), F_E=F_E, F_P=F_P,
        seed=int(seed), H=int(H),
        meta={"sigma_f": float(prices.sigma_f)},
    )

