from squaremamba import config

CONFIG = config.ConfigManager()

from importlib.metadata import PackageNotFoundError, version

from squaremamba.autodiff import Tape, Tensor
from squaremamba.core import Block, Sequence, Window, WindowLayout
from squaremamba.dataset import DatasetSplit, build_splits
from squaremamba.io import load_records
from squaremamba.metrics import MetricsReport, categorize
from squaremamba.model import SquareMamba, ablate
from squaremamba.simulations import synthetic_dataset
from squaremamba.training import evaluate, train

try:
    __version__ = version("squaremamba")
except PackageNotFoundError:
    __version__ = "0.0.0"
