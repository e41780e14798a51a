import zipfile
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from squaremamba.core.window import LAYOUT, TARGET, VARIABLES
from squaremamba.errors import ParseError, SchemaError, ValidationError

COLUMNS = ["date", "lat", "lon", *VARIABLES, TARGET]
"""Header of climate record files"""

NA_VALUES = ("", "NA")
GRID_TOLERANCE = 1e-6


def _first_bad(mask, lines):
    return int(lines[np.flatnonzero(mask)[0]])


def _parse_number(df, column, lines, allow_missing=True):
    raw = df[column].str.strip()
    missing = raw.isin(NA_VALUES)
    values = pd.to_numeric(raw.where(~missing), errors="coerce")
    invalid = (values.isna() & ~missing) | np.isinf(values)
    if invalid.any():
        line = _first_bad(invalid.to_numpy(), lines)
        bad = df[column].to_numpy()[np.flatnonzero(invalid.to_numpy())[0]]
        raise ParseError(f"'{column}' value '{bad}' is not a number", line=line)
    if not allow_missing and missing.any():
        raise ParseError(f"'{column}' is missing", line=_first_bad(missing.to_numpy(), lines))
    return values.astype(np.float64)


def _snap(values, lines, name, step):
    """Snap coordinates to the lattice of the first row"""
    offset = values[0] % step
    steps = (values - offset) / step
    off_grid = np.abs(steps - np.round(steps)) * step > GRID_TOLERANCE
    if off_grid.any():
        i = np.flatnonzero(off_grid)[0]
        raise ValidationError(
            f"line {lines[i]}: {name} {values[i]} is not on the {step}° grid of the first record"
        )
    return np.round(offset + np.round(steps) * step, 6)


def load_records(path, step=LAYOUT.grid_step) -> pd.DataFrame:
    """Read a climate record file.

    The file is a comma-separated table with header
    ``date,lat,lon,pre,tmx,tmn,tmp,vap,cld,pet,spei1``, ``date`` formatted as
    YYYY-MM and missing values left empty or written ``NA``.

    Parameters
    ----------
    path : str or Path
        record file
    step : float, optional
        grid resolution in degrees, by default 0.5

    Returns
    -------
    pd.DataFrame
        records sorted by (lat, lon, month), with a ``month`` period column and
        the source ``line`` of each record

    Raises
    ------
    SchemaError
        header differs from the expected one
    ParseError
        a field cannot be parsed (the line number is reported)
    ValidationError
        duplicated (location, month) or coordinates off the grid
    """
    path = Path(path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    header = [c.strip() for c in df.columns]
    if header != COLUMNS:
        missing = [c for c in COLUMNS if c not in header]
        extra = [c for c in header if c not in COLUMNS]
        details = []
        if missing:
            details.append(f"missing {', '.join(missing)}")
        if extra:
            details.append(f"unexpected {', '.join(extra)}")
        if not details:
            details.append("columns out of order")
        raise SchemaError(
            f"{path.name}: header must be '{','.join(COLUMNS)}' ({'; '.join(details)})"
        )
    df.columns = header
    # header is line 1
    lines = np.arange(len(df)) + 2

    dates = pd.to_datetime(df["date"].str.strip(), format="%Y-%m", errors="coerce")
    if dates.isna().any():
        i = np.flatnonzero(dates.isna().to_numpy())[0]
        raise ParseError(f"date '{df['date'].iloc[i]}' is not YYYY-MM", line=int(lines[i]))

    records = pd.DataFrame(
        {
            "month": dates.dt.to_period("M"),
            "lat": _parse_number(df, "lat", lines, allow_missing=False),
            "lon": _parse_number(df, "lon", lines, allow_missing=False),
        }
    )
    for column in (*VARIABLES, TARGET):
        records[column] = _parse_number(df, column, lines)
    records["line"] = lines

    if len(records):
        records["lat"] = _snap(records["lat"].to_numpy(), lines, "latitude", step)
        records["lon"] = _snap(records["lon"].to_numpy(), lines, "longitude", step)

    keys = ["lat", "lon", "month"]
    duplicated = records.duplicated(keys, keep=False)
    if duplicated.any():
        first = records[duplicated].groupby(keys, sort=False)["line"].apply(list).iloc[0]
        lat, lon, month = records.loc[duplicated, keys].iloc[0]
        raise ValidationError(
            f"duplicate record for ({lat}, {lon}) {month} at lines "
            + " and ".join(str(line) for line in first)
        )

    return records.sort_values(keys, kind="stable").reset_index(drop=True)


def manifest(records: pd.DataFrame) -> dict:
    """Audit summary of loaded records"""
    locations = records[["lat", "lon"]].drop_duplicates().to_numpy().tolist()
    return dict(
        rows=int(len(records)),
        locations=[[float(lat), float(lon)] for lat, lon in locations],
        start=str(records["month"].min()) if len(records) else None,
        end=str(records["month"].max()) if len(records) else None,
        missing_values={
            column: int(records[column].isna().sum()) for column in (*VARIABLES, TARGET)
        },
    )


class GridCube:
    """Records of every grid cell on a common monthly axis.

    Parameters
    ----------
    records : pd.DataFrame
        records as returned by :py:func:`load_records`
    layout : WindowLayout, optional
        window layout
    """

    def __init__(self, records: pd.DataFrame, layout=LAYOUT):
        self.layout = layout
        if len(records) == 0:
            self.months = pd.PeriodIndex([], freq="M")
            self.cells = {}
            return
        self.months = pd.period_range(
            records["month"].min(), records["month"].max(), freq="M"
        )
        self.cells = {}
        for (lat, lon), cell in records.groupby(["lat", "lon"], sort=True):
            values = cell.set_index("month")[[*VARIABLES, TARGET]].reindex(self.months)
            self.cells[(float(lat), float(lon))] = values.to_numpy(dtype=np.float64)

    @property
    def locations(self):
        return list(self.cells)

    def __contains__(self, location):
        return self.key(location) in self.cells

    @staticmethod
    def key(location):
        lat, lon = location
        return (round(float(lat), 6), round(float(lon), 6))

    def index(self, month) -> int:
        return (pd.Period(month, freq="M") - self.months[0]).n

    def _series(self, location, start, n, columns):
        out = np.full((n, len(columns)), np.nan)
        values = self.cells.get(self.key(location))
        if values is None:
            return out
        lo, hi = max(start, 0), min(start + n, len(self.months))
        if lo < hi:
            out[lo - start : hi - start] = values[lo:hi][:, columns].reshape(hi - lo, -1)
        return out

    def frame(self, center, target_month) -> np.ndarray:
        """Raw neighbourhood of ``center`` over the months preceding ``target_month``

        Returns
        -------
        np.ndarray
            shape (months, variables, window, window), NaN where missing, row 0
            being the northernmost cell
        """
        n = self.layout.months
        start = self.index(target_month) - n
        lat, lon = self.key(center)
        w = self.layout.window
        frame = np.full((n, self.layout.variables, w, w), np.nan)
        columns = list(range(self.layout.variables))
        for (i, j), (dlat, dlon) in self.layout.offsets().items():
            cell = (lat + dlat, lon + dlon)
            frame[:, :, i, j] = self._series(cell, start, n, columns)
        return frame

    def target(self, center, month) -> float:
        values = self._series(center, self.index(month), 1, [self.layout.variables])
        return float(values[0, 0])


def save_npz(path, arrays: dict):
    """Write arrays to an uncompressed npz archive with fixed timestamps

    The archive content only depends on ``arrays``, so identical arrays give
    identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, mode="w", compression=zipfile.ZIP_STORED) as archive:
        for name, value in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with archive.open(info, mode="w", force_zip64=True) as file:
                np.lib.format.write_array(file, np.asanyarray(value), allow_pickle=False)


def load_npz(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as archive:
        return {name: archive[name] for name in archive.files}


def dump_yaml(path, content):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as file:
        yaml.safe_dump(content, file, sort_keys=False)
