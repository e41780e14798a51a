from pathlib import Path

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from squaremamba.core.window import LAYOUT, TARGET, VARIABLES
from squaremamba.io.io import COLUMNS

# (variable, lag) → weight of the synthetic drought index, lags in months before the target
DRIVER_WEIGHTS = {("pre", 1): 0.7, ("pre", 2): 0.35, ("tmp", 1): -0.45, ("tmp", 3): -0.2}
DRIVER_GAIN = 0.6


def _climate(n_months, rng, regional, months_of_year):
    """Monthly climate of one cell: seasonal cycles plus regional and local AR(1) anomalies"""
    local = np.zeros((n_months, 3))
    shocks = rng.normal(size=(n_months, 3))
    for t in range(1, n_months):
        local[t] = 0.5 * local[t - 1] + shocks[t]
    anomaly = 0.8 * regional + 0.6 * local

    phase = 2 * np.pi * (months_of_year - 1) / 12
    season = np.cos(phase)
    tmp = 20 + 5 * season + 1.5 * anomaly[:, 0]
    pre = np.maximum(0.0, 80 + 30 * season + 35 * anomaly[:, 1])
    cld = np.clip(45 + 10 * season + 8 * anomaly[:, 2] + 0.1 * (pre - 80), 0, 100)
    return pd.DataFrame(
        {
            "pre": pre,
            "tmx": tmp + 6 + 0.5 * rng.normal(size=n_months),
            "tmn": tmp - 6 + 0.5 * rng.normal(size=n_months),
            "tmp": tmp,
            "vap": 18 + 0.6 * (tmp - 20) + 0.01 * (pre - 80) + 0.3 * rng.normal(size=n_months),
            "cld": cld,
            "pet": np.maximum(0.0, 110 + 4 * (tmp - 20) - 0.3 * (cld - 45)),
        }
    )


def driven_index(climate: pd.DataFrame, noise, rng, months=LAYOUT.months) -> np.ndarray:
    """Synthetic SPEI-1: scaled tanh of a sparse combination of window-standardized lags

    The first ``months`` values (no complete history) are NaN.
    """
    values = climate[list(VARIABLES)].to_numpy(dtype=np.float64)
    windows = sliding_window_view(values, months, axis=0)[:-1]
    # windows: (n - months, variables, months)
    mean = windows.mean(axis=-1, keepdims=True)
    sigma = windows.std(axis=-1, keepdims=True)
    standardized = (windows - mean) / np.where(sigma < 1e-8, 1.0, sigma)
    drive = sum(
        weight * standardized[:, VARIABLES.index(name), months - lag]
        for (name, lag), weight in DRIVER_WEIGHTS.items()
    )
    index = 3 * np.tanh(DRIVER_GAIN * drive) + noise * rng.normal(size=len(drive))
    return np.concatenate([np.full(months, np.nan), np.clip(index, -2.999, 2.999)])


def synthetic_dataset(
    path=None,
    center=(-29.25, 153.25),
    start=1901,
    end=2023,
    seed=0,
    noise=0.05,
    gap_fraction=0.0,
    layout=LAYOUT,
) -> pd.DataFrame:
    """Synthetic climate records of a 3×3 neighbourhood with a known SPEI-1 mapping.

    The drought index of every cell is ``3·tanh(0.6·s)`` plus Gaussian noise,
    where ``s`` weights the standardized precipitation at lags 1 and 2 and the
    standardized mean temperature at lags 1 and 3 of the preceding window.

    Parameters
    ----------
    path : str or Path, optional
        destination file (ingestion format), by default nothing is written
    center : tuple, optional
        (lat, lon) of the centre cell, by default (-29.25, 153.25)
    start, end : int, optional
        first and last years, by default 1901 and 2023
    seed : int, optional
        random seed, by default 0
    noise : float, optional
        standard deviation of the index noise, by default 0.05
    gap_fraction : float, optional
        fraction of neighbour values left missing, by default 0

    Returns
    -------
    pd.DataFrame
        records with the columns of the ingestion format
    """
    rng = np.random.default_rng(seed)
    months = pd.period_range(f"{start}-01", f"{end}-12", freq="M")
    n = len(months)
    regional = np.zeros((n, 3))
    shocks = rng.normal(size=(n, 3))
    for t in range(1, n):
        regional[t] = 0.6 * regional[t - 1] + shocks[t]

    frames = []
    for (i, j), (dlat, dlon) in layout.offsets().items():
        climate = _climate(n, rng, regional, np.asarray(months.month))
        climate[TARGET] = driven_index(climate, noise, rng, months=layout.months)
        if (i, j) != (layout.center, layout.center) and gap_fraction > 0:
            gaps = rng.random((n, len(VARIABLES))) < gap_fraction
            climate.loc[:, list(VARIABLES)] = climate[list(VARIABLES)].mask(gaps)
        climate.insert(0, "lon", round(center[1] + dlon, 6))
        climate.insert(0, "lat", round(center[0] + dlat, 6))
        climate.insert(0, "date", [str(m) for m in months])
        frames.append(climate)

    records = pd.concat(frames, ignore_index=True)[COLUMNS]
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        records.to_csv(path, index=False, float_format="%.10g", na_rep="NA")
    return records
