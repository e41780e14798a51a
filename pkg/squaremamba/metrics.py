from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from sklearn.metrics import mean_absolute_error, mean_squared_error, r2_score
from tabulate import tabulate

from squaremamba.console_utils import warning
from squaremamba.errors import CategoryRangeError, UsageError

SERIES_COLUMNS = ["month", "observed", "predicted", "category"]

CATEGORY_BOUNDS = np.array([-2.0, -1.5, -1.0, 1.0, 1.5, 2.0, 3.0])
"""Inclusive upper bound of each drought category"""

CATEGORIES = (
    "Extremely Dry",
    "Severely Dry",
    "Moderately Dry",
    "Near Normal",
    "Moderately Wet",
    "Severely Wet",
    "Extremely Wet",
)

ENSO_PERIODS = {
    "normal": [(2012, 2014), (2019, 2020)],
    "el_nino": [(2009, 2010), (2014, 2016), (2018, 2019)],
    "la_nina": [(2007, 2009), (2010, 2012), (2016, 2018), (2020, 2023)],
}
"""Year ranges (inclusive) of the ENSO phases over the test period"""

REFERENCE_SCORES = {
    "woombah": dict(mae=0.1663, rmse=0.2250, r2=0.9536),
    "geehi": dict(mae=0.1553, rmse=0.2108, r2=0.9524),
    "enngonia": dict(mae=0.1948, rmse=0.2867, r2=0.8872),
    "jerilderie": dict(mae=0.2007, rmse=0.2915, r2=0.8858),
    "milparinka": dict(mae=0.2407, rmse=0.3234, r2=0.8612),
    "pooncarie": dict(mae=0.1891, rmse=0.2677, r2=0.9285),
}
"""Published test scores of the full network on six New South Wales locations"""

ABLATION_SCORES = {
    (False, False): {
        "woombah": dict(mae=0.1608, rmse=0.2300, r2=0.9515),
        "geehi": dict(mae=0.1805, rmse=0.2414, r2=0.9376),
        "enngonia": dict(mae=0.2254, rmse=0.3726, r2=0.8095),
        "jerilderie": dict(mae=0.2013, rmse=0.3100, r2=0.8709),
        "milparinka": dict(mae=0.2715, rmse=0.3943, r2=0.7936),
        "pooncarie": dict(mae=0.2105, rmse=0.3139, r2=0.9017),
    },
    (False, True): {
        "woombah": dict(mae=0.1817, rmse=0.2623, r2=0.9370),
        "geehi": dict(mae=0.1710, rmse=0.2277, r2=0.9444),
        "enngonia": dict(mae=0.2026, rmse=0.3005, r2=0.8761),
        "jerilderie": dict(mae=0.2085, rmse=0.3098, r2=0.8711),
        "milparinka": dict(mae=0.2627, rmse=0.3490, r2=0.8383),
        "pooncarie": dict(mae=0.2188, rmse=0.3107, r2=0.9037),
    },
    (True, False): {
        "woombah": dict(mae=0.2132, rmse=0.2744, r2=0.9310),
        "geehi": dict(mae=0.1944, rmse=0.2594, r2=0.9279),
        "enngonia": dict(mae=0.2160, rmse=0.3048, r2=0.8724),
        "jerilderie": dict(mae=0.2153, rmse=0.3183, r2=0.8639),
        "milparinka": dict(mae=0.2831, rmse=0.3766, r2=0.8117),
        "pooncarie": dict(mae=0.2078, rmse=0.2866, r2=0.9180),
    },
    (True, True): REFERENCE_SCORES,
}
"""Published test scores keyed by (SEB used, QLTEM used)"""

SANITY_R2 = 0.6


def _pair(observed, predicted):
    observed = np.asarray(observed, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    if observed.shape != predicted.shape:
        raise UsageError(
            f"observed and predicted lengths differ ({len(observed)} != {len(predicted)})"
        )
    return observed, predicted


def mae(observed, predicted) -> float:
    observed, predicted = _pair(observed, predicted)
    if len(observed) == 0:
        raise UsageError("mae of an empty series")
    return float(mean_absolute_error(observed, predicted))


def rmse(observed, predicted) -> float:
    observed, predicted = _pair(observed, predicted)
    if len(observed) == 0:
        raise UsageError("rmse of an empty series")
    return float(np.sqrt(mean_squared_error(observed, predicted)))


def r2(observed, predicted) -> float:
    """Coefficient of determination, NaN (undefined) for constant or single observations"""
    observed, predicted = _pair(observed, predicted)
    if len(observed) < 2:
        warning("R² undefined for fewer than 2 observations")
        return float("nan")
    if np.sum((observed - observed.mean()) ** 2) == 0:
        warning("R² undefined for constant observations")
        return float("nan")
    return float(r2_score(observed, predicted))


def categorize(d):
    """Drought category of SPEI-1 value(s)

    Parameters
    ----------
    d : float or array_like
        drought index, in [-3, 3]

    Returns
    -------
    str or np.ndarray
        category label(s)
    """
    values = np.asarray(d, dtype=np.float64)
    outside = np.atleast_1d(~(np.abs(values) <= 3))
    if outside.any():
        bad = np.atleast_1d(values)[outside][0]
        raise CategoryRangeError(f"drought index {bad} outside [-3, 3]")
    labels = np.array(CATEGORIES)[np.searchsorted(CATEGORY_BOUNDS, values, side="left")]
    return str(labels) if labels.ndim == 0 else labels


@dataclass
class MetricsReport:
    """Forecasts of a split compared to the observed SPEI-1"""

    months: pd.PeriodIndex
    """target months"""
    observed: np.ndarray
    """observed SPEI-1"""
    predicted: np.ndarray
    """forecast SPEI-1"""

    def __post_init__(self):
        self.months = pd.PeriodIndex(self.months, freq="M")
        self.observed, self.predicted = _pair(self.observed, self.predicted)
        if len(self.months) != len(self.observed):
            raise UsageError("months and values lengths differ")

    def __len__(self):
        return len(self.observed)

    @property
    def mae(self):
        return mae(self.observed, self.predicted) if len(self) else float("nan")

    @property
    def rmse(self):
        return rmse(self.observed, self.predicted) if len(self) else float("nan")

    @property
    def r2(self):
        return r2(self.observed, self.predicted)

    @property
    def observed_categories(self):
        return categorize(self.observed)

    @property
    def predicted_categories(self):
        return categorize(self.predicted)

    @property
    def category_agreement(self) -> float:
        """Fraction of months whose forecast falls in the observed category"""
        if len(self) == 0:
            return float("nan")
        return float(np.mean(self.observed_categories == self.predicted_categories))

    def category_counts(self) -> pd.DataFrame:
        """Observed (rows) vs predicted (columns) category counts"""
        observed = pd.Categorical(self.observed_categories, categories=CATEGORIES)
        predicted = pd.Categorical(self.predicted_categories, categories=CATEGORIES)
        return pd.crosstab(
            pd.Series(observed, name="observed"),
            pd.Series(predicted, name="predicted"),
            dropna=False,
        )

    def scores(self) -> dict:
        return dict(mae=self.mae, rmse=self.rmse, r2=self.r2)

    def subset(self, mask) -> "MetricsReport":
        mask = np.asarray(mask, dtype=bool)
        return MetricsReport(self.months[mask], self.observed[mask], self.predicted[mask])

    def stratify(self, periods: dict = None) -> Dict[str, "MetricsReport"]:
        """Sub-reports of the months falling in each period (ENSO phases by default)"""
        periods = ENSO_PERIODS if periods is None else periods
        years = np.asarray(self.months.year)
        return {
            name: self.subset(
                np.any([(years >= a) & (years <= b) for a, b in ranges], axis=0)
            )
            for name, ranges in periods.items()
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "month": [str(m) for m in self.months],
                "observed": self.observed,
                "predicted": self.predicted,
                "category": self.predicted_categories,
            },
            columns=SERIES_COLUMNS,
        )

    def table(self, stratified=False) -> str:
        rows = [["all", len(self), self.mae, self.rmse, self.r2]]
        if stratified:
            for name, report in self.stratify().items():
                rows.append([name, len(report), report.mae, report.rmse, report.r2])
        return tabulate(
            rows, ["months", "n", "MAE", "RMSE", "R²"], tablefmt="fancy_grid", floatfmt=".4f"
        )

    def plot(self, ax=None, observed_color="k", predicted_color="C0", **kwargs):
        """Plot observed and forecast series

        Parameters
        ----------
        ax : matplotlib.axes.Axes, optional
            Matplotlib axis, by default None which takes :code:`plt.gca()`
        """
        if ax is None:
            ax = plt.gca()
        time = self.months.to_timestamp()
        ax.plot(time, self.observed, color=observed_color, label="observed", **kwargs)
        ax.plot(time, self.predicted, color=predicted_color, label="predicted", **kwargs)
        ax.set_ylim(-3, 3)
        ax.set_ylabel("SPEI-1")
        ax.legend()
        return ax


def emit_series(report: MetricsReport, path):
    """Write the month, observed, predicted and category series of ``report``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_series(path) -> MetricsReport:
    df = pd.read_csv(path, dtype={"month": str}, float_precision="round_trip")
    return MetricsReport(
        pd.PeriodIndex(df["month"].tolist(), freq="M"),
        df["observed"].to_numpy(dtype=np.float64),
        df["predicted"].to_numpy(dtype=np.float64),
    )


def compare_reference(report: MetricsReport, location: str, no_seb=False, no_qltem=False) -> str:
    """Measured scores side by side with the published ones for ``location``

    A warning is issued when the measured R² is below the sanity threshold.
    """
    key = location.lower()
    table = ABLATION_SCORES[(not no_seb, not no_qltem)]
    if key not in table:
        known = sorted(table)
        raise UsageError(
            f"no reference scores for '{location}' in this configuration (known: {', '.join(known)})"
        )
    reference = table[key]
    measured = report.scores()
    if not measured["r2"] >= SANITY_R2:
        warning(
            f"test R² {measured['r2']:.4f} below {SANITY_R2} on {location}, "
            "check data extraction and training"
        )
    rows = [
        [name.upper() if name != "r2" else "R²", measured[name], reference[name]]
        for name in ("mae", "rmse", "r2")
    ]
    return tabulate(rows, ["metric", "measured", "reference"], tablefmt="fancy_grid", floatfmt=".4f")
