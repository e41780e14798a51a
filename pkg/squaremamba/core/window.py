from copy import deepcopy
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from squaremamba.errors import ConfigurationError

VARIABLES = ("pre", "tmx", "tmn", "tmp", "vap", "cld", "pet")
"""Meteorological input variables, in channel order"""

TARGET = "spei1"


@dataclass(frozen=True)
class WindowLayout:
    """Shape constants of an input window"""

    months: int = 15
    """number of months of history"""
    variables: int = len(VARIABLES)
    """number of meteorological variables per month"""
    groups: int = 5
    """number of local time groups"""
    group_len: int = 3
    """months per local time group"""
    window: int = 3
    """side of the spatial neighbourhood (cells)"""
    grid_step: float = 0.5
    """grid resolution in degrees"""

    def __post_init__(self):
        if self.months != self.groups * self.group_len:
            raise ConfigurationError(
                f"months ({self.months}) must equal groups × group_len "
                f"({self.groups} × {self.group_len})"
            )
        if self.window % 2 != 1:
            raise ConfigurationError("spatial window must be odd")

    @property
    def flat(self) -> int:
        """length of the flattened (month-major) window"""
        return self.months * self.variables

    @property
    def center(self) -> int:
        return self.window // 2

    def offsets(self):
        """(row, col) → (dlat, dlon) of the neighbourhood, row 0 being the northernmost"""
        c = self.center
        return {
            (i, j): ((c - i) * self.grid_step, (j - c) * self.grid_step)
            for i in range(self.window)
            for j in range(self.window)
        }

    def to_dict(self):
        return {
            "months": self.months,
            "variables": self.variables,
            "groups": self.groups,
            "group_len": self.group_len,
            "window": self.window,
        }


LAYOUT = WindowLayout()


@dataclass
class Window:
    """
    A forecasting window: the spatial neighbourhood of one grid cell over the
    months preceding a target month.

    This is a Python Data Class, so that most attributes described below can be used as
    keyword-arguments when instantiated.
    """

    center: Tuple[float, float] = None
    """(lat, lon) of the centre cell"""

    target_month: Optional[pd.Period] = None
    """month whose SPEI-1 is forecast"""

    frame: Optional[np.ndarray] = None
    """raw values with shape (months, variables, window, window), NaN where missing"""

    discard: bool = False
    """Whether window as been discarded by a block"""

    discard_reason: Optional[str] = None
    """Why the window was discarded"""

    computed: Optional[dict] = None
    """A dictionary containing any user and block-defined attributes"""

    def __post_init__(self):
        if self.computed is None:
            self.computed = {}

    def __setattr__(self, name, value):
        if hasattr(self, name):
            super().__setattr__(name, value)
        else:
            if "computed" in self.__dict__:
                self.computed[name] = value
            else:
                super().__setattr__(name, value)

    def __getattr__(self, name):
        if "computed" not in self.__dict__:
            raise AttributeError(name)
        if name in self.computed:
            return self.computed[name]
        raise AttributeError(f"Window has no '{name}'")

    def discard_with(self, reason: str):
        self.discard = True
        self.discard_reason = reason

    def copy(self):
        return deepcopy(self)

    def __copy__(self):
        return self.copy()

    @property
    def months(self) -> pd.PeriodIndex:
        """months of the window history"""
        n = self.frame.shape[0] if self.frame is not None else LAYOUT.months
        return pd.period_range(end=self.target_month - 1, periods=n, freq="M")
