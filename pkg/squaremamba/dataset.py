from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from tabulate import tabulate

from squaremamba.blocks import SpatialAugmentation, Standardization, TargetAttachment
from squaremamba.config import SplitConfig
from squaremamba.console_utils import info, warning
from squaremamba.core import Sequence, Window
from squaremamba.core.window import LAYOUT, WindowLayout
from squaremamba.errors import ValidationError
from squaremamba.io.io import GridCube, dump_yaml, load_npz, save_npz

SPLITS = ("train", "validation", "test")
CACHE_FILE = "samples.npz"
CACHE_MANIFEST = "manifest.yaml"


@dataclass
class Samples:
    """Ordered window samples of one split"""

    z: np.ndarray
    """standardized windows, shape (n, 105)"""
    tz: np.ndarray
    """spatially augmented windows, shape (n, 105, 3, 3)"""
    target: np.ndarray
    """SPEI-1 of the target months, shape (n,)"""
    months: pd.PeriodIndex
    """target months"""

    def __len__(self):
        return len(self.target)

    @classmethod
    def empty(cls, layout=LAYOUT):
        w = layout.window
        return cls(
            np.zeros((0, layout.flat)),
            np.zeros((0, layout.flat, w, w)),
            np.zeros(0),
            pd.PeriodIndex([], freq="M"),
        )

    @classmethod
    def from_windows(cls, windows, layout=LAYOUT):
        if len(windows) == 0:
            return cls.empty(layout)
        return cls(
            z=np.stack([w.z for w in windows]),
            tz=np.stack([w.tz for w in windows]),
            target=np.array([w.target for w in windows], dtype=np.float64),
            months=pd.PeriodIndex([w.target_month for w in windows], freq="M"),
        )

    def subset(self, index):
        return Samples(self.z[index], self.tz[index], self.target[index], self.months[index])


@dataclass
class DatasetSplit:
    """Train, validation and test samples of one location"""

    train: Samples
    validation: Samples
    test: Samples
    location: tuple = None
    layout: WindowLayout = field(default_factory=WindowLayout)

    def __getitem__(self, name) -> Samples:
        if name == "val":
            name = "validation"
        if name not in SPLITS:
            raise KeyError(f"unknown split '{name}' (expected one of {', '.join(SPLITS)})")
        return getattr(self, name)

    def counts(self) -> dict:
        return {name: len(self[name]) for name in SPLITS}

    def __str__(self):
        rows = [
            [
                name,
                len(samples),
                str(samples.months[0]) if len(samples) else "-",
                str(samples.months[-1]) if len(samples) else "-",
            ]
            for name, samples in ((n, self[n]) for n in SPLITS)
        ]
        return tabulate(rows, ["split", "samples", "first target", "last target"], tablefmt="fancy_grid")


def build_splits(
    records,
    location,
    splits: SplitConfig = None,
    layout: WindowLayout = LAYOUT,
    show_progress=True,
) -> DatasetSplit:
    """Window samples of ``location``, split by the year of their target month.

    Every month with ``layout.months`` months of history is a candidate
    target; input windows may reach back across a split boundary, targets
    outside every split range are dropped.

    Parameters
    ----------
    records : pd.DataFrame or GridCube
        records as returned by :py:func:`~squaremamba.io.load_records`
    location : tuple
        (lat, lon) of the centre cell
    splits : SplitConfig, optional
        year ranges of the splits, by default 1901-1980 / 1981-2005 / 2006-2023
    layout : WindowLayout, optional
        window layout
    show_progress : bool, optional
        whether to show a progress bar, by default True
    """
    splits = SplitConfig() if splits is None else splits
    cube = records if isinstance(records, GridCube) else GridCube(records, layout=layout)
    if location not in cube:
        raise ValidationError(f"no records for location {tuple(location)}")
    center = cube.key(location)

    windows = []
    for month in cube.months[layout.months :]:
        if splits.split_of(month.year) is None:
            continue
        windows.append(Window(center=center, target_month=month, frame=cube.frame(center, month)))

    sequence = Sequence(
        [TargetAttachment(cube), SpatialAugmentation(), Standardization(layout)],
        name="windows",
    )
    kept = sequence.run(windows, show_progress=show_progress) if windows else []

    c = layout.center
    for window in kept:
        if not np.array_equal(window.tz[:, c, c], window.z):
            raise ValidationError(f"window {window.target_month}: Tz centre differs from z")

    grouped = {name: [] for name in SPLITS}
    for window in kept:
        grouped[splits.split_of(window.target_month.year)].append(window)

    for name, group in grouped.items():
        if len(group) == 0:
            warning(f"{name} split of {center} is empty")

    return DatasetSplit(
        **{name: Samples.from_windows(group, layout) for name, group in grouped.items()},
        location=center,
        layout=layout,
    )


def save_cache(path, dataset: DatasetSplit, **metadata):
    """Persist the samples of ``dataset`` in the ``path`` folder

    Writes ``samples.npz`` and ``manifest.yaml`` (location, layout, split
    counts and ``metadata``).
    """
    path = Path(path)
    arrays = {}
    for name in SPLITS:
        samples = dataset[name]
        arrays[f"{name}_z"] = samples.z
        arrays[f"{name}_tz"] = samples.tz
        arrays[f"{name}_target"] = samples.target
        arrays[f"{name}_months"] = np.array([str(m) for m in samples.months], dtype="<U7")
    save_npz(path / CACHE_FILE, arrays)
    dump_yaml(
        path / CACHE_MANIFEST,
        dict(
            location=[float(v) for v in dataset.location],
            layout=dataset.layout.to_dict(),
            counts=dataset.counts(),
            **metadata,
        ),
    )
    info(f"sample cache written to {path / CACHE_FILE}")


def load_cache(path):
    """Samples written by :py:func:`save_cache`

    Returns
    -------
    tuple
        (DatasetSplit, manifest)
    """
    path = Path(path)
    if not (path / CACHE_FILE).exists() or not (path / CACHE_MANIFEST).exists():
        raise ValidationError(
            f"no sample cache in {path}, run 'squaremamba ingest' with the same --out first"
        )
    arrays = load_npz(path / CACHE_FILE)
    with (path / CACHE_MANIFEST).open() as file:
        manifest = yaml.safe_load(file)
    layout = WindowLayout(**manifest["layout"])
    samples = {
        name: Samples(
            arrays[f"{name}_z"],
            arrays[f"{name}_tz"],
            arrays[f"{name}_target"],
            pd.PeriodIndex(list(arrays[f"{name}_months"]), freq="M"),
        )
        for name in SPLITS
    }
    return DatasetSplit(**samples, location=tuple(manifest["location"]), layout=layout), manifest
