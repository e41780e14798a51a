from functools import lru_cache

import numpy as np

from squaremamba.core import Block, Window
from squaremamba.core.window import LAYOUT
from squaremamba.errors import ValidationError

SIGMA_FLOOR = 1e-8


@lru_cache()
def imputation_order(window=3):
    """Candidate source cells of every neighbour, nearest first.

    Other neighbours are sorted by Euclidean grid distance (ties in row-major
    order), the centre comes last.
    """
    c = window // 2
    cells = [(i, j) for i in range(window) for j in range(window)]
    neighbours = [cell for cell in cells if cell != (c, c)]
    order = {}
    for i, j in neighbours:
        others = [cell for cell in neighbours if cell != (i, j)]
        others.sort(key=lambda cell: ((cell[0] - i) ** 2 + (cell[1] - j) ** 2, cell))
        order[(i, j)] = others + [(c, c)]
    return order


def impute_frame(frame: np.ndarray) -> np.ndarray:
    """Fill missing neighbour values from the nearest cell observing them.

    Parameters
    ----------
    frame : np.ndarray
        raw neighbourhood, shape (months, variables, w, w), NaN where missing

    Returns
    -------
    np.ndarray
        imputed copy of ``frame``

    Raises
    ------
    ValidationError
        the centre history is incomplete
    """
    w = frame.shape[-1]
    c = w // 2
    if np.isnan(frame[..., c, c]).any():
        raise ValidationError("incomplete centre history")
    filled = frame.copy()
    for (i, j), sources in imputation_order(w).items():
        values = filled[..., i, j]
        for a, b in sources:
            missing = np.isnan(values)
            if not missing.any():
                break
            values[missing] = frame[..., a, b][missing]
    return filled


def augment_spatial(cube, center, target_month) -> np.ndarray:
    """Spatially augmented (unstandardized) window of ``center``.

    Parameters
    ----------
    cube : GridCube
        gridded records
    center : tuple
        (lat, lon) of the centre cell
    target_month : pd.Period
        forecast month, the window covering the months before it

    Returns
    -------
    np.ndarray
        shape (105, 3, 3), channels month-major, centre at (1, 1)
    """
    frame = impute_frame(cube.frame(center, target_month))
    return frame.reshape((-1,) + frame.shape[-2:])


def standardize_window(tz_raw: np.ndarray, layout=LAYOUT):
    """Standardize a window with the statistics of its centre cell.

    Each variable is shifted and scaled by the mean and (population) standard
    deviation of its centre-cell months, the same map being applied to the
    neighbours; a standard deviation below 1e-8 is replaced by 1.

    Returns
    -------
    tuple
        (z, Tz) with shapes (105,) and (105, 3, 3); ``Tz[:, 1, 1]`` equals ``z``
    """
    c = layout.center
    frame = np.asarray(tz_raw, dtype=np.float64).reshape(
        layout.months, layout.variables, layout.window, layout.window
    )
    centre = frame[..., c, c]
    mean = centre.mean(axis=0)
    sigma = centre.std(axis=0)
    sigma = np.where(sigma < SIGMA_FLOOR, 1.0, sigma)
    tz = ((frame - mean[:, None, None]) / sigma[:, None, None]).reshape(
        layout.flat, layout.window, layout.window
    )
    return tz[:, c, c].copy(), tz


class SpatialAugmentation(Block):
    """Impute the neighbourhood of the window (``window.tz_raw``)

    Windows whose centre history is incomplete are discarded.
    """

    def __init__(self, name=None):
        super().__init__(name=name, read=["frame"])

    def run(self, window: Window):
        try:
            frame = impute_frame(window.frame)
        except ValidationError as ex:
            window.discard_with(str(ex))
            return
        window.tz_raw = frame.reshape((-1,) + frame.shape[-2:])


class Standardization(Block):
    """Standardize the augmented window into ``window.z`` and ``window.tz``"""

    def __init__(self, layout=LAYOUT, name=None):
        super().__init__(name=name, read=["tz_raw"])
        self.layout = layout

    def run(self, window: Window):
        window.z, window.tz = standardize_window(window.tz_raw, self.layout)


class TargetAttachment(Block):
    """Attach the SPEI-1 of the target month (``window.target``)

    Parameters
    ----------
    cube : GridCube
        gridded records holding the targets
    """

    def __init__(self, cube, name=None):
        super().__init__(name=name)
        self.cube = cube

    def run(self, window: Window):
        target = self.cube.target(window.center, window.target_month)
        if not np.isfinite(target):
            window.discard_with("missing target")
            return
        window.target = target
